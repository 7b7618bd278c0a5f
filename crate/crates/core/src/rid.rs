//! The bootstrap importance-distribution estimator and statistics of the
//! resulting weighted distributions.
//!
//! Bootstrap `b` resamples the data with seed `split_rng(seed, b)`, finds the
//! Rashomon set of the replicate and scores every member on every variable
//! with metric seed `split_rng(seed, B + b)`. Each member of replicate `b`
//! carries weight `1 / (B * |R_b|)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{binarize, bootstrap_sample, Dataset, DEFAULT_MAX_THRESHOLDS};
use crate::dgp::DgpId;
use crate::error::{Result, RidError};
use crate::importance::{sub_mr, Metric, MrStrategy, SubMr};
use crate::rashomon::{enumerate_importances, enumerate_rset, importances, SetImportances, DEFAULT_MAX_MODELS};
use crate::rng::{split_rng, Seed};

/// Weight sums must match 1 this closely.
pub const WEIGHT_TOL: f64 = 1e-9;
/// Slack used when comparing a cumulative weight against a probability level.
const LEVEL_TOL: f64 = 1e-12;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(RidError::InvalidArgument(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    #[default]
    SubMr,
}

impl MetricId {
    pub fn build(self, strategy: MrStrategy) -> Box<dyn Metric> {
        match self {
            MetricId::SubMr => Box::new(SubMr::new(strategy)),
        }
    }
}

impl std::str::FromStr for MetricId {
    type Err = RidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sub_mr" => Ok(MetricId::SubMr),
            other => Err(RidError::InvalidArgument(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub epsilon: f64,
    pub lambda: f64,
    pub depth: usize,
    pub bootstraps: usize,
    pub seed: Seed,
    pub metric: MetricId,
    pub strategy: MrStrategy,
    pub max_models: usize,
    pub max_thresholds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epsilon: 0.05,
            lambda: 0.01,
            depth: 4,
            bootstraps: 50,
            seed: Seed(0),
            metric: MetricId::SubMr,
            strategy: MrStrategy::EDivide,
            max_models: DEFAULT_MAX_MODELS,
            max_thresholds: DEFAULT_MAX_THRESHOLDS,
        }
    }
}

impl RunConfig {
    /// Rashomon threshold, per-leaf penalty and depth bound tuned for each process.
    pub fn preset(id: DgpId) -> Self {
        let (epsilon, lambda, depth) = match id {
            DgpId::Monk1 => (0.1, 0.03, 5),
            DgpId::Monk3 => (0.05, 0.025, 7),
            DgpId::Chen => (0.01, 0.01, 5),
            DgpId::Friedman => (0.025, 0.02, 6),
        };
        RunConfig {
            epsilon,
            lambda,
            depth,
            ..RunConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(RidError::InvalidArgument(msg.into()));
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if self.depth < 1 {
            return bad("depth must be at least 1");
        }
        if self.bootstraps < 1 {
            return bad("bootstraps must be at least 1");
        }
        if self.max_models < 1 {
            return bad("max_models must be at least 1");
        }
        if self.max_thresholds < 1 {
            return bad("max_thresholds must be at least 1");
        }
        if let MrStrategy::Permutations(0) = self.strategy {
            return bad("permutation count must be positive");
        }
        Ok(())
    }

    pub fn metric(&self) -> Box<dyn Metric> {
        self.metric.build(self.strategy)
    }
}

/// A finitely supported distribution: sorted distinct values with positive
/// weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VIDistribution {
    atoms: Vec<(f64, f64)>,
    support_min: f64,
    support_max: f64,
}

impl VIDistribution {
    /// Merges `(value, weight)` pairs: sorted by value (stable), equal values
    /// summed in input order. Weights must already sum to one.
    pub fn from_weighted(
        pairs: impl IntoIterator<Item = (f64, f64)>,
        support: (f64, f64),
    ) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(RidError::InvalidArgument("distribution has no atoms".into()));
        }
        if pairs.iter().any(|&(v, w)| !v.is_finite() || !(w > 0.0)) {
            return Err(RidError::InvalidArgument(
                "atoms need finite values and positive weights".into(),
            ));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (v, w) in pairs {
            match atoms.last_mut() {
                Some(last) if last.0 == v => last.1 += w,
                _ => atoms.push((v, w)),
            }
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(RidError::Consistency(format!("weights sum to {total}")));
        }
        let (lo, hi) = support;
        Ok(VIDistribution {
            support_min: lo.min(atoms[0].0),
            support_max: hi.max(atoms[atoms.len() - 1].0),
            atoms,
        })
    }

    /// Equal-weight distribution over a list of values.
    pub fn uniform(values: &[f64], support: (f64, f64)) -> Result<Self> {
        let w = 1.0 / values.len() as f64;
        Self::from_weighted(values.iter().map(|&v| (v, w)), support)
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn support(&self) -> (f64, f64) {
        (self.support_min, self.support_max)
    }

    pub fn min_value(&self) -> f64 {
        self.atoms[0].0
    }

    pub fn max_value(&self) -> f64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// `P(X <= k)`.
    pub fn cdf(&self, k: f64) -> f64 {
        if k >= self.max_value() {
            return 1.0;
        }
        self.atoms
            .iter()
            .take_while(|a| a.0 <= k)
            .map(|a| a.1)
            .sum()
    }

    /// `P(X > threshold)`.
    pub fn p_greater(&self, threshold: f64) -> f64 {
        1.0 - self.cdf(threshold)
    }

    /// Expectation, cross-checked against the integral of the survival
    /// function over the support.
    pub fn mean(&self) -> Result<f64> {
        let direct: f64 = self.atoms.iter().map(|&(v, w)| v * w).sum();
        let via_cdf = self.mean_from_cdf();
        if (direct - via_cdf).abs() > 1e-9 {
            return Err(RidError::Consistency(format!(
                "mean {direct} disagrees with survival integral {via_cdf}"
            )));
        }
        Ok(direct)
    }

    /// `support_min + integral of (1 - F)` over the support, integrated exactly
    /// piecewise between atoms.
    pub fn mean_from_cdf(&self) -> f64 {
        let mut total = self.support_min;
        let mut x = self.support_min;
        let mut cum = 0.0;
        for &(v, w) in &self.atoms {
            total += (v - x) * (1.0 - cum);
            cum += w;
            x = v;
        }
        total += (self.support_max - x) * (1.0 - cum).max(0.0);
        total
    }

    /// Smallest atom value whose cumulative weight reaches `alpha`.
    pub fn quantile(&self, alpha: f64) -> f64 {
        let mut cum = 0.0;
        for &(v, w) in &self.atoms {
            cum += w;
            if cum >= alpha - LEVEL_TOL {
                return v;
            }
        }
        self.max_value()
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    /// Box-and-whisker range: the extreme atoms within 1.5 IQR of the quartiles.
    pub fn bwr(&self) -> Interval {
        let (q1, q3) = (self.quantile(0.25), self.quantile(0.75));
        let reach = 1.5 * (q3 - q1);
        let lo = self
            .atoms
            .iter()
            .map(|a| a.0)
            .find(|&v| v >= q1 - reach)
            .unwrap_or(q1);
        let hi = self
            .atoms
            .iter()
            .rev()
            .map(|a| a.0)
            .find(|&v| v <= q3 + reach)
            .unwrap_or(q3);
        Interval { lo, hi }
    }

    pub fn stats(&self) -> Result<DistStats> {
        let bwr = self.bwr();
        Ok(DistStats {
            mean: self.mean()?,
            q25: self.quantile(0.25),
            q50: self.quantile(0.5),
            q75: self.quantile(0.75),
            iqr: self.iqr(),
            bwr: [bwr.lo, bwr.hi],
            p_gt_zero: self.p_greater(0.0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistStats {
    pub mean: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub iqr: f64,
    pub bwr: [f64; 2],
    pub p_gt_zero: f64,
}

/// Models of one bootstrap sharing the same importance vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub values: Vec<f64>,
    /// Number of Rashomon-set members with exactly these values.
    pub count: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub rset_size: usize,
    pub min_objective: f64,
    pub entries: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RIDResult {
    pub names: Vec<String>,
    pub per_variable: Vec<VIDistribution>,
    pub bootstraps: Vec<BootstrapSummary>,
    pub config: RunConfig,
}

impl RIDResult {
    /// Marginal of variable `var`, rebuilt from the importance tensor.
    pub fn marginal(&self, var: usize, support: (f64, f64)) -> Result<VIDistribution> {
        VIDistribution::from_weighted(
            self.bootstraps
                .iter()
                .flat_map(|b| b.entries.iter().map(move |e| (e.values[var], e.weight))),
            support,
        )
    }

    pub fn total_weight(&self) -> f64 {
        self.bootstraps
            .iter()
            .flat_map(|b| b.entries.iter().map(|e| e.weight))
            .sum()
    }

    /// Joint probability that every variable's importance is at most its bound.
    pub fn joint_cdf(&self, bounds: &[f64]) -> Result<f64> {
        if bounds.len() != self.names.len() {
            return Err(RidError::Arity {
                expected: self.names.len(),
                got: bounds.len(),
            });
        }
        Ok(self
            .bootstraps
            .iter()
            .flat_map(|b| &b.entries)
            .filter(|e| e.values.iter().zip(bounds).all(|(v, k)| v <= k))
            .map(|e| e.weight)
            .sum())
    }

    pub fn variable(&self, name: &str) -> Option<&VIDistribution> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| &self.per_variable[j])
    }

    pub fn report(&self) -> Result<RidReport> {
        Ok(RidReport {
            config: self.config,
            variables: self
                .names
                .iter()
                .zip(&self.per_variable)
                .map(|(name, dist)| {
                    Ok(VariableReport {
                        name: name.clone(),
                        atoms: dist.atoms().iter().map(|&(v, w)| [v, w]).collect(),
                        stats: dist.stats()?,
                    })
                })
                .collect::<Result<_>>()?,
            bootstraps: self
                .bootstraps
                .iter()
                .map(|b| BootstrapMeta {
                    rset_size: b.rset_size,
                    min_objective: b.min_objective,
                })
                .collect(),
        })
    }
}

/// On-disk form of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidReport {
    pub config: RunConfig,
    pub variables: Vec<VariableReport>,
    pub bootstraps: Vec<BootstrapMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub name: String,
    pub atoms: Vec<[f64; 2]>,
    pub stats: DistStats,
}

impl VariableReport {
    pub fn distribution(&self) -> Result<VIDistribution> {
        VIDistribution::from_weighted(self.atoms.iter().map(|a| (a[0], a[1])), (-1.0, 1.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapMeta {
    pub rset_size: usize,
    pub min_objective: f64,
}

pub fn set_importances(d: &Dataset, cfg: &RunConfig, metric_seed: Seed) -> Result<SetImportances> {
    let bin = binarize(d, cfg.max_thresholds)?;
    let metric = cfg.metric();
    if let Some(design) = metric.switch_design(&bin.map, d, metric_seed) {
        return enumerate_importances(&bin, &design?, cfg.epsilon, cfg.lambda, cfg.depth, cfg.max_models);
    }
    let rset = enumerate_rset(&bin, cfg.epsilon, cfg.lambda, cfg.depth, cfg.max_models)?;
    let values = importances(&rset, d, metric.as_ref(), metric_seed)?;
    Ok(SetImportances::from_values(&rset, values))
}

fn summarize(set: SetImportances, bootstraps: usize) -> BootstrapSummary {
    let denom = bootstraps as f64 * set.rset_size as f64;
    let entries = set
        .vectors
        .into_iter()
        .map(|(values, count)| TensorEntry {
            values,
            count,
            weight: count as f64 / denom,
        })
        .collect();
    BootstrapSummary {
        rset_size: set.rset_size,
        min_objective: set.min_objective,
        entries,
    }
}

/// Runs one bootstrap replicate of [`estimate_rid`].
pub fn bootstrap_replicate(d: &Dataset, cfg: &RunConfig, b: usize) -> Result<SetImportances> {
    let big_b = cfg.bootstraps as u64;
    let sample = bootstrap_sample(d, split_rng(cfg.seed, b as u64));
    set_importances(&sample, cfg, split_rng(cfg.seed, big_b + b as u64)).map_err(|e| {
        RidError::Bootstrap {
            bootstrap: b,
            source: Box::new(e),
        }
    })
}

pub fn estimate_rid(d: &Dataset, cfg: &RunConfig) -> Result<RIDResult> {
    cfg.validate()?;
    let outcomes: Vec<Result<SetImportances>> = (0..cfg.bootstraps)
        .into_par_iter()
        .map(|b| bootstrap_replicate(d, cfg, b))
        .collect();
    let mut bootstraps = Vec::with_capacity(cfg.bootstraps);
    for outcome in outcomes {
        bootstraps.push(summarize(outcome?, cfg.bootstraps));
    }
    let support = cfg.metric().support();
    let mut result = RIDResult {
        names: d.feature_names().to_vec(),
        per_variable: Vec::new(),
        bootstraps,
        config: *cfg,
    };
    result.per_variable = (0..d.p())
        .map(|j| result.marginal(j, support))
        .collect::<Result<_>>()?;
    Ok(result)
}

/// Smallest `B` with `B >= ln(2 / delta) / (2 t^2)`: enough bootstraps for the
/// estimated CDF to be within `t` of its limit with probability `1 - delta`.
pub fn required_bootstraps(t: f64, delta: f64) -> Result<u64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(RidError::InvalidArgument("t must be positive".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(RidError::InvalidArgument("delta must lie in (0, 1)".into()));
    }
    Ok(((2.0 / delta).ln() / (2.0 * t * t)).ceil() as u64)
}

/// Distribution of the process's own reliance on `var` across bootstrap
/// replicates of `d`, one atom of weight `1 / B` per replicate.
pub fn dgp_reliance_distribution(
    id: DgpId,
    d: &Dataset,
    var: usize,
    bootstraps: usize,
    strategy: MrStrategy,
    seed: Seed,
) -> Result<VIDistribution> {
    if bootstraps == 0 {
        return Err(RidError::InvalidArgument("bootstraps must be at least 1".into()));
    }
    let big_b = bootstraps as u64;
    let values: Vec<f64> = (0..bootstraps)
        .into_par_iter()
        .map(|b| {
            let sample = bootstrap_sample(d, split_rng(seed, b as u64));
            sub_mr(&id, &sample, var, strategy, split_rng(seed, big_b + b as u64))
        })
        .collect::<Result<_>>()?;
    VIDistribution::uniform(&values, (-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(pairs: &[(f64, f64)]) -> VIDistribution {
        VIDistribution::from_weighted(pairs.iter().copied(), (-1.0, 1.0)).unwrap()
    }

    #[test]
    fn bootstrap_count_bound() {
        assert_eq!(required_bootstraps(0.05, 0.05).unwrap(), 738);
        assert_eq!(required_bootstraps(0.075, 0.10).unwrap(), 267);
        assert_eq!(required_bootstraps(1.0, 0.5).unwrap(), 1);
        assert_eq!(required_bootstraps(0.1, 0.1).unwrap(), 150);
        assert!(required_bootstraps(0.0, 0.1).is_err());
        assert!(required_bootstraps(0.1, 1.0).is_err());
        assert!(required_bootstraps(0.1, 0.0).is_err());
    }

    #[test]
    fn merges_duplicate_values() {
        let d = dist(&[(0.5, 0.25), (0.0, 0.25), (0.5, 0.5)]);
        assert_eq!(d.atoms(), &[(0.0, 0.25), (0.5, 0.75)]);
        assert!(VIDistribution::from_weighted([(0.0, 0.5)], (-1.0, 1.0)).is_err());
    }

    #[test]
    fn cdf_steps() {
        let d = dist(&[(-0.2, 0.2), (0.0, 0.3), (0.4, 0.5)]);
        assert_eq!(d.cdf(-0.5), 0.0);
        assert_eq!(d.cdf(0.4), 1.0);
        assert_eq!(d.cdf(5.0), 1.0);
        assert!((d.cdf(0.1) - 0.5).abs() < 1e-15);
        assert!((d.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((d.p_greater(0.0) - 0.5).abs() < 1e-15);
        assert_eq!(d.p_greater(-1.0), 1.0);
    }

    #[test]
    fn p_greater_at_single_atom_is_zero() {
        let d = dist(&[(0.3, 1.0)]);
        assert_eq!(d.p_greater(0.3), 0.0);
        assert_eq!(d.p_greater(0.29), 1.0);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(dist(&[(0.3, 1.0)]).mean().unwrap(), 0.3);
        assert_eq!(dist(&[(-0.4, 0.5), (0.4, 0.5)]).mean().unwrap(), 0.0);
    }

    #[test]
    fn quantiles() {
        let single = dist(&[(0.2, 1.0)]);
        for a in [0.01, 0.25, 0.5, 0.99] {
            assert_eq!(single.quantile(a), 0.2);
        }
        let four = dist(&[(0.1, 0.25), (0.2, 0.25), (0.3, 0.25), (0.4, 0.25)]);
        assert_eq!(four.quantile(0.25), 0.1);
        assert_eq!(four.quantile(0.26), 0.2);
        assert_eq!(four.quantile(0.75), 0.3);
        assert!((four.iqr() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn bwr_excludes_far_outlier() {
        // Quartiles 0.1 and 0.3, whiskers reach [-0.2, 0.6]; 0.9 is outside.
        let w = 0.2;
        let d = dist(&[(0.0, w), (0.1, w), (0.2, w), (0.3, w), (0.9, w)]);
        assert_eq!(d.quantile(0.25), 0.1);
        assert_eq!(d.quantile(0.75), 0.3);
        assert_eq!(d.bwr(), Interval { lo: 0.0, hi: 0.3 });
        assert_eq!(dist(&[(0.4, 1.0)]).bwr(), Interval::point(0.4));
    }

    #[test]
    fn interval_validation() {
        assert!(Interval::new(1.0, 0.0).is_err());
        assert!(Interval::new(0.0, 0.0).is_ok());
    }

    #[test]
    fn presets_and_defaults() {
        let m1 = RunConfig::preset(DgpId::Monk1);
        assert_eq!((m1.epsilon, m1.lambda, m1.depth), (0.1, 0.03, 5));
        let m3 = RunConfig::preset(DgpId::Monk3);
        assert_eq!((m3.epsilon, m3.lambda, m3.depth), (0.05, 0.025, 7));
        let d = RunConfig::default();
        assert_eq!((d.epsilon, d.lambda, d.depth, d.bootstraps, d.seed), (0.05, 0.01, 4, 50, Seed(0)));
        assert!(RunConfig { depth: 0, ..d }.validate().is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn distribution_invariants(raw in prop::collection::vec((-20i32..=20, 1u32..100), 1..12)) {
            let total: u32 = raw.iter().map(|r| r.1).sum();
            let pairs: Vec<(f64, f64)> = raw.iter().map(|&(v, w)| (v as f64 / 20.0, w as f64 / total as f64)).collect();
            let d = VIDistribution::from_weighted(pairs, (-1.0, 1.0)).unwrap();
            // Both mean formulas agree.
            prop_assert!(d.mean().is_ok());
            // Monotone CDF hitting 1 at the support maximum.
            let mut prev = 0.0;
            for i in -25..=25 {
                let f = d.cdf(i as f64 / 20.0);
                prop_assert!(f >= prev - 1e-15 && f <= 1.0 + 1e-12);
                prev = f;
            }
            prop_assert_eq!(d.cdf(1.0), 1.0);
            prop_assert!(d.iqr() >= 0.0);
            let b = d.bwr();
            prop_assert!(b.lo >= d.min_value() && b.hi <= d.max_value() && b.lo <= b.hi);
        }
    }
}
