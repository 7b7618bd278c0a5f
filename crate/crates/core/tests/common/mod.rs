//! Brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rid_core::bits::Bits;
use nalgebra::{DMatrix, DVector};
use rid_core::linear::Ellipsoid;
use rid_core::dataset::{binarize, bootstrap_sample, BinDataset, Dataset, FeatureMap, FeatureMapEntry, SplitRule};
use rid_core::rashomon::{enumerate_rset, importances, MEMBERSHIP_TOL};
use rid_core::rid::RunConfig;
use rid_core::tree::Tree;
use rid_core::{split_rng, Seed, SplitMix64};

pub fn bin_from(columns: &[Vec<bool>], labels: &[bool]) -> BinDataset {
    let n = labels.len();
    BinDataset::from_columns(
        columns.iter().map(|c| Bits::from_fn(n, |i| c[i])).collect(),
        Bits::from_fn(n, |i| labels[i]),
        FeatureMap {
            entries: (0..columns.len())
                .map(|j| FeatureMapEntry {
                    orig_var: j,
                    rule: SplitRule::Equals(1),
                })
                .collect(),
        },
    )
    .unwrap()
}

/// Every tree of depth at most `depth` over rows `rows` whose splits never
/// leave a child without rows.
pub fn all_trees(d: &BinDataset, rows: &[usize], depth: usize) -> Vec<Tree> {
    let mut out = vec![Tree::leaf(0), Tree::leaf(1)];
    if depth == 0 {
        return out;
    }
    for f in 0..d.m() {
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| !d.columns[f].get(i));
        if l.is_empty() || r.is_empty() {
            continue;
        }
        let lefts = all_trees(d, &l, depth - 1);
        let rights = all_trees(d, &r, depth - 1);
        for a in &lefts {
            for b in &rights {
                out.push(Tree::split(f, a.clone(), b.clone()));
            }
        }
    }
    out
}

/// Objective by predicting every row individually.
pub fn scan_objective(t: &Tree, d: &BinDataset, lambda: f64) -> f64 {
    let errors = (0..d.n())
        .filter(|&i| t.predict(&d.row(i)) != d.labels.get(i) as u8)
        .count();
    errors as f64 / d.n() as f64 + lambda * t.leaves() as f64
}

pub fn oracle(d: &BinDataset, epsilon: f64, lambda: f64, depth: usize) -> (f64, BTreeSet<String>) {
    let rows: Vec<usize> = (0..d.n()).collect();
    let scored: Vec<(f64, Tree)> = all_trees(d, &rows, depth)
        .into_iter()
        .map(|t| (scan_objective(&t, d, lambda), t))
        .collect();
    let min = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let set = scored
        .into_iter()
        .filter(|s| s.0 <= min + epsilon + MEMBERSHIP_TOL)
        .map(|s| s.1.canonical())
        .collect();
    (min, set)
}

pub fn random_instance(seed: Seed) -> (BinDataset, f64, f64, usize) {
    let mut rng = SplitMix64::new(seed);
    loop {
        let n = 4 + rng.below(27) as usize;
        let m = 1 + rng.below(8) as usize;
        let density = 0.2 + 0.6 * rng.next_f64();
        let columns: Vec<Vec<bool>> = (0..m)
            .map(|_| (0..n).map(|_| rng.next_f64() < density).collect())
            .collect();
        // Labels loosely follow the first column so instances are not pure noise.
        let labels: Vec<bool> = (0..n)
            .map(|i| columns[0][i] ^ (rng.next_f64() < 0.25))
            .collect();
        let eps = [0.05, 0.1, 0.2][rng.below(3) as usize];
        let lambda = [0.0, 0.01, 0.05][rng.below(3) as usize];
        let depth = 1 + rng.below(2) as usize;
        let usable = columns
            .iter()
            .any(|c| c.iter().any(|&b| b) && c.iter().any(|&b| !b));
        if usable {
            return (bin_from(&columns, &labels), eps, lambda, depth);
        }
    }
}

/// Per-variable importance values of every tree in every bootstrap's
/// Rashomon set: `out[var][b]`.
pub fn rid_values(d: &Dataset, cfg: &RunConfig) -> Vec<Vec<Vec<f64>>> {
    let big_b = cfg.bootstraps as u64;
    let mut out = vec![vec![Vec::new(); cfg.bootstraps]; d.p()];
    for b in 0..big_b {
        let sample = bootstrap_sample(d, split_rng(cfg.seed, b));
        let bin = binarize(&sample, cfg.max_thresholds).unwrap();
        let rset = enumerate_rset(&bin, cfg.epsilon, cfg.lambda, cfg.depth, cfg.max_models).unwrap();
        let values = importances(&rset, &sample, cfg.metric().as_ref(), split_rng(cfg.seed, big_b + b)).unwrap();
        for v in values {
            for (j, x) in v.into_iter().enumerate() {
                out[j][b as usize].push(x);
            }
        }
    }
    out
}

/// `(1/B) sum_b |{trees in R_b with value <= k}| / |R_b|`.
pub fn rid_oracle_cdf(values: &[Vec<f64>], k: f64) -> f64 {
    values
        .iter()
        .map(|set| set.iter().filter(|&&x| x <= k).count() as f64 / set.len() as f64)
        .sum::<f64>()
        / values.len() as f64
}

/// Random well-conditioned least-squares ellipsoid of dimension `p`.
pub fn random_ellipsoid(rng: &mut SplitMix64, p: usize) -> Ellipsoid {
    let m = DMatrix::from_fn(p, p, |_, _| 2.0 * rng.next_f64() - 1.0);
    let a = m.transpose() * &m + DMatrix::identity(p, p) * 0.5;
    let center = DVector::from_fn(p, |_, _| 4.0 * rng.next_f64() - 2.0);
    let offset = 3.0 * rng.next_f64();
    Ellipsoid::new(a, center, offset)
        .unwrap()
        .with_epsilon(0.2 + 1.8 * rng.next_f64())
        .unwrap()
}

/// Minimum and maximum of coordinate `j` on the ellipsoid's boundary by
/// gradient ascent along the surface, retracting radially after each step.
pub fn coordinate_extrema_by_ascent(e: &Ellipsoid, j: usize) -> (f64, f64) {
    let p = e.dim();
    let a = e.matrix();
    let c = e.center();
    let eps = e.epsilon().unwrap();
    let retract = |v: DVector<f64>| {
        let q = (v.transpose() * a * &v)[0];
        v * (eps / q).sqrt()
    };
    let climb = |sign: f64| {
        let mut v = retract(DVector::from_fn(p, |i, _| if i == j { sign } else { 0.1 }));
        let mut step = 0.1;
        for _ in 0..200_000 {
            let normal = (a * &v).normalize();
            let mut dir = DVector::zeros(p);
            dir[j] = sign;
            let along = dir.dot(&normal);
            let tangent = dir - normal * along;
            if tangent.norm() < 1e-13 || step < 1e-16 {
                break;
            }
            let next = retract(&v + &tangent * step);
            if sign * next[j] > sign * v[j] {
                v = next;
                step *= 1.5;
            } else {
                step *= 0.5;
            }
        }
        c[j] + v[j]
    };
    (climb(-1.0), climb(1.0))
}
