//! Least-squares linear models, whose Rashomon sets are solid ellipsoids.
//!
//! With `A = X^T X`, the OLS solution `theta*` and optimal SSE `c`, the SSE of
//! any `theta` is `(theta - theta*)^T A (theta - theta*) + c`. The models within
//! `epsilon` of optimal form the ellipsoid `(theta - theta*)^T A (theta - theta*) <= epsilon`.
//! Losses here are unnormalized sums of squares.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RidError};
use crate::rng::{Seed, SplitMix64};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct Ellipsoid {
    a: DMatrix<f64>,
    center: DVector<f64>,
    offset: f64,
    epsilon: Option<f64>,
    a_inv: DMatrix<f64>,
    a_inv_sqrt: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisInterval {
    pub j: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdfMethod {
    Analytic,
    MonteCarlo { samples: usize, seed: Seed },
}

/// `(A^-1, A^-1/2)` of a symmetric positive-definite matrix.
fn inverse_roots(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < RANK_TOL * max {
        return Err(RidError::RankDeficient { pivot: min });
    }
    let v = &eig.eigenvectors;
    let inv = v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l)) * v.transpose();
    let inv_sqrt =
        v * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * v.transpose();
    Ok((inv, inv_sqrt))
}

impl Ellipsoid {
    pub fn new(a: DMatrix<f64>, center: DVector<f64>, offset: f64) -> Result<Self> {
        let p = center.len();
        if a.nrows() != p || a.ncols() != p || p == 0 {
            return Err(RidError::InvalidArgument(format!(
                "matrix is {}x{} but center has {p} entries",
                a.nrows(),
                a.ncols()
            )));
        }
        if (&a - a.transpose()).amax() > 1e-10 * a.amax().max(1.0) {
            return Err(RidError::InvalidArgument("matrix is not symmetric".into()));
        }
        if offset < -1e-10 {
            return Err(RidError::InvalidArgument(format!("negative optimal loss {offset}")));
        }
        let (a_inv, a_inv_sqrt) = inverse_roots(&a)?;
        Ok(Ellipsoid {
            a,
            center,
            offset: offset.max(0.0),
            epsilon: None,
            a_inv,
            a_inv_sqrt,
        })
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(RidError::InvalidArgument("epsilon must be positive".into()));
        }
        self.epsilon = Some(epsilon);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    /// Optimal loss `c`.
    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn epsilon(&self) -> Result<f64> {
        self.epsilon
            .ok_or_else(|| RidError::InvalidArgument("epsilon not set".into()))
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn inverse_sqrt(&self) -> &DMatrix<f64> {
        &self.a_inv_sqrt
    }

    /// Loss of `theta` through the quadratic-form identity.
    pub fn level_set_value(&self, theta: &DVector<f64>) -> f64 {
        let v = theta - &self.center;
        (v.transpose() * &self.a * &v)[(0, 0)] + self.offset
    }

    /// Half-width of the ellipsoid along coordinate `j`.
    pub fn half_width(&self, j: usize) -> Result<f64> {
        Ok((self.epsilon()? * self.a_inv[(j, j)]).sqrt())
    }

    /// Smallest and largest value coordinate `j` takes over the ellipsoid.
    pub fn axis_extrema(&self, j: usize) -> Result<AxisInterval> {
        self.check_coord(j)?;
        let w = self.half_width(j)?;
        Ok(AxisInterval {
            j,
            lo: self.center[j] - w,
            hi: self.center[j] + w,
        })
    }

    fn check_coord(&self, j: usize) -> Result<()> {
        if j >= self.dim() {
            return Err(RidError::InvalidArgument(format!(
                "coordinate {j} out of range for dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// Fraction of the ellipsoid's volume with `theta_j <= k`.
    pub fn rid_cdf(&self, j: usize, k: f64, method: CdfMethod) -> Result<f64> {
        self.check_coord(j)?;
        let w = self.half_width(j)?;
        let c = self.center[j];
        match method {
            CdfMethod::Analytic => {
                let r = ((k - c) / w).clamp(-1.0, 1.0);
                let shape = (self.dim() as f64 + 1.0) / 2.0;
                reg_inc_beta((r + 1.0) / 2.0, shape, shape)
            }
            CdfMethod::MonteCarlo { samples, seed } => {
                if samples == 0 {
                    return Err(RidError::InvalidArgument("need at least one sample".into()));
                }
                let row = self.a_inv_sqrt.row(j).transpose();
                let scale = self.epsilon()?.sqrt();
                let mut sampler = BallSampler::new(self.dim(), seed);
                let mut hits = 0usize;
                for _ in 0..samples {
                    let u = sampler.next();
                    if c + scale * row.dot(&u) <= k {
                        hits += 1;
                    }
                }
                Ok(hits as f64 / samples as f64)
            }
        }
    }

    /// Uniform draws from the solid ellipsoid.
    pub fn sample_uniform(&self, count: usize, seed: Seed) -> Result<Vec<DVector<f64>>> {
        let scale = self.epsilon()?.sqrt();
        let mut sampler = BallSampler::new(self.dim(), seed);
        Ok((0..count)
            .map(|_| &self.center + scale * (&self.a_inv_sqrt * sampler.next()))
            .collect())
    }

    /// Fraction of Rashomon-set volume with loss at most `k`.
    pub fn rld(&self, k: f64) -> Result<f64> {
        let eps = self.epsilon()?;
        if k < self.offset {
            return Ok(0.0);
        }
        Ok(((k - self.offset) / eps).powf(self.dim() as f64 / 2.0).min(1.0))
    }

    /// Area between the loss CDF of the Rashomon set and the unit step at the
    /// optimal loss, `epsilon * p / (p + 2)`, checked against quadrature.
    pub fn m_integral(&self) -> Result<f64> {
        let eps = self.epsilon()?;
        let p = self.dim() as f64;
        let closed = eps * p / (p + 2.0);
        let c = self.offset;
        let numeric = adaptive_simpson(
            &|k: f64| 1.0 - ((k - c) / eps).clamp(0.0, 1.0).powf(p / 2.0),
            c,
            c + eps,
            1e-13,
        );
        if (closed - numeric).abs() > 1e-8 {
            return Err(RidError::Numerical(format!(
                "closed form {closed} disagrees with quadrature {numeric}"
            )));
        }
        Ok(closed)
    }

    /// `integral over range of |1[center_j <= k] - F(k)| dk` for the analytic
    /// coordinate CDF `F`.
    pub fn rid_gap_integral(&self, j: usize, range: (f64, f64)) -> Result<f64> {
        self.check_coord(j)?;
        let c = self.center[j];
        let f = |k: f64| {
            let step = if c <= k { 1.0 } else { 0.0 };
            (step - self.rid_cdf(j, k, CdfMethod::Analytic).unwrap_or(f64::NAN)).abs()
        };
        // Split at the jump so each piece is smooth.
        let (lo, hi) = range;
        let mid = c.clamp(lo, hi);
        let total = adaptive_simpson(&f, lo, mid, 1e-12) + adaptive_simpson(&f, mid, hi, 1e-12);
        if total.is_nan() {
            return Err(RidError::Numerical("incomplete beta failed".into()));
        }
        Ok(total)
    }
}

/// OLS fit: `theta* = (X^T X)^-1 X^T y`, `A = X^T X`, `c = y^T (y - X theta*)`.
pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Ellipsoid> {
    if x.nrows() != y.len() {
        return Err(RidError::Arity {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    let a = x.transpose() * x;
    inverse_roots(&a)?;
    let theta = a
        .clone()
        .cholesky()
        .ok_or(RidError::RankDeficient { pivot: 0.0 })?
        .solve(&(x.transpose() * y));
    let resid = y - x * &theta;
    let offset = y.dot(&resid).max(0.0);
    let a = (&a + a.transpose()) * 0.5;
    Ellipsoid::new(a, theta, offset)
}

/// Uniform points in the unit ball: normalized Gaussian direction times
/// `U^(1/p)` radius. Gaussian coordinates are drawn first, then the radius.
pub struct BallSampler {
    dim: usize,
    rng: SplitMix64,
}

impl BallSampler {
    pub fn new(dim: usize, seed: Seed) -> Self {
        BallSampler {
            dim,
            rng: SplitMix64::new(seed),
        }
    }

    pub fn next(&mut self) -> DVector<f64> {
        loop {
            let g = DVector::from_fn(self.dim, |_, _| self.rng.normal());
            let norm = g.norm();
            let radius = self.rng.next_f64().powf(1.0 / self.dim as f64);
            if norm > 0.0 {
                return g * (radius / norm);
            }
        }
    }
}

/// Natural log of the gamma function (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let mut sum = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by Lentz's continued fraction.
pub fn reg_inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(RidError::InvalidArgument("beta shape parameters must be positive".into()));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(front * beta_cf(x, a, b)? / a)
    } else {
        Ok(1.0 - front * beta_cf(1.0 - x, b, a)? / b)
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> Result<f64> {
    const TINY: f64 = 1e-300;
    const REL_TOL: f64 = 1e-12;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < REL_TOL {
            return Ok(h);
        }
    }
    Err(RidError::Numerical(format!(
        "incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})"
    )))
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = (a + b) / 2.0;
        let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f((a + b) / 2.0), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    rec(f, a, b, fa, fm, fb, whole, tol, 48)
}
