//! Interval agreement across datasets, distances between importance
//! distributions, and the coverage check of importance intervals against the
//! data-generating process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{binarize, Dataset};
use crate::dgp::{generate, DgpId, DgpSpec};
use crate::error::{Result, RidError};
use crate::importance::sub_mr;
use crate::rashomon::{enumerate_rset, mcr_all, vic};
use crate::rid::{estimate_rid, Interval, RunConfig, VIDistribution};
use crate::rng::{split_rng, Seed, SplitMix64};

/// Resamples used for the confidence interval of a median.
pub const MEDIAN_CI_RESAMPLES: usize = 1000;

/// Stream indices under the master seed, kept apart from the per-dataset run
/// seeds `0..n_datasets`.
pub const DATASET_STREAM: u64 = 1 << 32;
pub const TEST_STREAM: u64 = 1 << 40;
pub const MEDIAN_CI_STREAM: u64 = 1 << 41;

/// Length of the intersection over length of the union. Two equal points
/// score 1; a point against anything else scores 0.
pub fn jaccard(a: Interval, b: Interval) -> f64 {
    let inter = (a.hi.min(b.hi) - a.lo.max(b.lo)).max(0.0);
    let union = a.len() + b.len() - inter;
    if union > 0.0 {
        inter / union
    } else if a == b {
        1.0
    } else {
        0.0
    }
}

/// 1-Wasserstein distance: the integral of `|F - G|`, exact over the merged
/// atom breakpoints.
pub fn emd(f: &VIDistribution, g: &VIDistribution) -> f64 {
    let (fa, ga) = (f.atoms(), g.atoms());
    let (mut i, mut j) = (0, 0);
    let (mut cf, mut cg) = (0.0f64, 0.0f64);
    let mut x = fa[0].0.min(ga[0].0);
    let mut total = 0.0;
    while i < fa.len() || j < ga.len() {
        let next = match (fa.get(i), ga.get(j)) {
            (Some(a), Some(b)) => a.0.min(b.0),
            (Some(a), None) => a.0,
            (None, Some(b)) => b.0,
            (None, None) => unreachable!(),
        };
        total += (next - x) * (cf - cg).abs();
        x = next;
        while i < fa.len() && fa[i].0 == x {
            cf += fa[i].1;
            i += 1;
        }
        while j < ga.len() && ga[j].0 == x {
            cg += ga[j].1;
            j += 1;
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rid,
    Mcr,
    Vic,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rid, Method::Mcr, Method::Vic];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStability {
    pub method: Method,
    /// `intervals[dataset][var]`
    pub intervals: Vec<Vec<Interval>>,
    /// Pairwise similarity, averaged over variables.
    pub jaccard: Vec<Vec<f64>>,
    pub median: f64,
    pub median_ci: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub dgp: Option<DgpId>,
    pub n_datasets: usize,
    pub config: RunConfig,
    pub methods: Vec<MethodStability>,
}

impl StabilityReport {
    pub fn method(&self, m: Method) -> &MethodStability {
        self.methods
            .iter()
            .find(|s| s.method == m)
            .expect("report covers every method")
    }
}

/// Intervals of the three methods for one dataset: `[rid, mcr, vic][var]`.
pub fn method_intervals(d: &Dataset, cfg: &RunConfig) -> Result<[Vec<Interval>; 3]> {
    let rid = estimate_rid(d, cfg)?;
    let rid_bwr = rid.per_variable.iter().map(|v| v.bwr()).collect();

    let bin = binarize(d, cfg.max_thresholds)?;
    let rset = enumerate_rset(&bin, cfg.epsilon, cfg.lambda, cfg.depth, cfg.max_models)?;
    let metric = cfg.metric();
    let metric_seed = split_rng(cfg.seed, u64::MAX);
    let mcr = mcr_all(&rset, d, metric.as_ref(), metric_seed)?;
    let vic_bwr = vic(&rset, d, metric.as_ref(), metric_seed)?
        .iter()
        .map(|values| Ok(VIDistribution::uniform(values, metric.support())?.bwr()))
        .collect::<Result<_>>()?;
    Ok([rid_bwr, mcr, vic_bwr])
}

/// Median and bootstrap percentile interval of the median.
pub fn median_with_ci(scores: &[f64], seed: Seed) -> (f64, [f64; 2]) {
    let median_of = |xs: &mut Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            (xs[n / 2 - 1] + xs[n / 2]) / 2.0
        }
    };
    let med = median_of(&mut scores.to_vec());
    let mut rng = SplitMix64::new(seed);
    let mut meds: Vec<f64> = (0..MEDIAN_CI_RESAMPLES)
        .map(|_| {
            let mut sample: Vec<f64> = (0..scores.len())
                .map(|_| scores[rng.below(scores.len() as u64) as usize])
                .collect();
            median_of(&mut sample)
        })
        .collect();
    meds.sort_by(f64::total_cmp);
    let lo = meds[(0.025 * MEDIAN_CI_RESAMPLES as f64) as usize];
    let hi = meds[((0.975 * MEDIAN_CI_RESAMPLES as f64) as usize).min(MEDIAN_CI_RESAMPLES - 1)];
    (med, [lo, hi])
}

/// Compares the intervals each method produces on the given datasets.
/// Dataset `i` uses run seed `split_rng(cfg.seed, i)`.
pub fn stability_from_datasets(datasets: &[Dataset], cfg: &RunConfig) -> Result<StabilityReport> {
    stability_with_seeds(
        datasets,
        &(0..datasets.len() as u64)
            .map(|i| split_rng(cfg.seed, i))
            .collect::<Vec<_>>(),
        cfg,
    )
}

/// Same as [`stability_from_datasets`] with explicit run seeds.
pub fn stability_with_seeds(
    datasets: &[Dataset],
    seeds: &[Seed],
    cfg: &RunConfig,
) -> Result<StabilityReport> {
    if datasets.len() < 2 || seeds.len() != datasets.len() {
        return Err(RidError::InvalidArgument(
            "need at least two datasets, each with a seed".into(),
        ));
    }
    cfg.validate()?;
    let per_dataset: Vec<[Vec<Interval>; 3]> = datasets
        .iter()
        .zip(seeds)
        .map(|(d, &seed)| method_intervals(d, &RunConfig { seed, ..*cfg }))
        .collect::<Result<_>>()?;

    let k = datasets.len();
    let methods = Method::ALL
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let intervals: Vec<Vec<Interval>> =
                per_dataset.iter().map(|r| r[mi].clone()).collect();
            let mut matrix = vec![vec![1.0; k]; k];
            let mut scores = Vec::with_capacity(k * (k - 1) / 2);
            for a in 0..k {
                for b in a + 1..k {
                    let p = intervals[a].len();
                    let s = intervals[a]
                        .iter()
                        .zip(&intervals[b])
                        .map(|(x, y)| jaccard(*x, *y))
                        .sum::<f64>()
                        / p as f64;
                    matrix[a][b] = s;
                    matrix[b][a] = s;
                    scores.push(s);
                }
            }
            let (median, median_ci) = median_with_ci(&scores, split_rng(cfg.seed, MEDIAN_CI_STREAM + mi as u64));
            MethodStability {
                method,
                intervals,
                jaccard: matrix,
                median,
                median_ci,
            }
        })
        .collect();
    Ok(StabilityReport {
        dgp: None,
        n_datasets: k,
        config: *cfg,
        methods,
    })
}

/// Draws `n_datasets` datasets of the process's default size and compares the
/// methods on them. Dataset `i` is generated with seed `split_rng(cfg.seed, DATASET_STREAM + i)`.
pub fn stability_experiment(id: DgpId, n_datasets: usize, cfg: &RunConfig) -> Result<StabilityReport> {
    if n_datasets < 2 {
        return Err(RidError::InvalidArgument("need at least two datasets".into()));
    }
    let datasets: Vec<Dataset> = (0..n_datasets as u64)
        .map(|i| generate(&DgpSpec::standard(id, split_rng(cfg.seed, DATASET_STREAM + i))))
        .collect::<Result<_>>()?;
    let mut report = stability_from_datasets(&datasets, cfg)?;
    report.dgp = Some(id);
    Ok(report)
}

/// Process reliance on every variable for `n_test` fresh datasets the size of
/// `n`: `out[test][var]`. Test set `t` uses seed `split_rng(split_rng(seed, TEST_STREAM), t)`.
pub fn dgp_test_reliances(id: DgpId, n: usize, n_test: usize, cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let base = split_rng(cfg.seed, TEST_STREAM);
    (0..n_test as u64)
        .into_par_iter()
        .map(|t| {
            let seed = split_rng(base, t);
            let d = generate(&DgpSpec {
                id,
                n,
                noise: id.default_noise(),
                seed,
            })?;
            (0..d.p())
                .map(|j| sub_mr(&id, &d, j, cfg.strategy, split_rng(seed, 1)))
                .collect()
        })
        .collect()
}

/// Fraction of test-set process reliances inside each interval.
pub fn coverage_of(intervals: &[Interval], reliances: &[Vec<f64>]) -> Vec<f64> {
    (0..intervals.len())
        .map(|j| {
            reliances.iter().filter(|r| intervals[j].contains(r[j])).count() as f64
                / reliances.len() as f64
        })
        .collect()
}

/// Coverage of the importance box-and-whisker ranges from `train` for every variable.
pub fn coverage_all(id: DgpId, train: &Dataset, cfg: &RunConfig, n_test: usize) -> Result<Vec<f64>> {
    if n_test == 0 {
        return Err(RidError::InvalidArgument("n_test must be at least 1".into()));
    }
    let rid = estimate_rid(train, cfg)?;
    let bwr: Vec<Interval> = rid.per_variable.iter().map(|v| v.bwr()).collect();
    let reliances = dgp_test_reliances(id, train.n(), n_test, cfg)?;
    Ok(coverage_of(&bwr, &reliances))
}

/// Coverage for a single variable.
pub fn coverage_experiment(
    id: DgpId,
    train: &Dataset,
    cfg: &RunConfig,
    n_test: usize,
    var: usize,
) -> Result<f64> {
    if var >= train.p() {
        return Err(RidError::InvalidArgument(format!("variable {var} out of range")));
    }
    Ok(coverage_all(id, train, cfg, n_test)?[var])
}
