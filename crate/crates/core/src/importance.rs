//! Subtractive model reliance: how much worse a predictor does once the
//! information in one variable is scrambled.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::dataset::{Dataset, FeatureMap};
use crate::error::{Result, RidError};
use crate::rng::{Seed, SplitMix64};
use crate::tree::Tree;

/// Anything that maps a raw feature row to a binary label.
pub trait Predictor: Sync {
    fn predict(&self, row: &[f64]) -> u8;
}

impl<F: Fn(&[f64]) -> u8 + Sync> Predictor for F {
    fn predict(&self, row: &[f64]) -> u8 {
        self(row)
    }
}

/// How the switched loss is estimated. Serialized as `e_divide` or `perm:K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MrStrategy {
    /// Exchange the column between the first and second half of the rows.
    #[default]
    EDivide,
    /// Average over this many Fisher-Yates shuffles of the column.
    Permutations(usize),
}

impl fmt::Display for MrStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MrStrategy::EDivide => f.write_str("e_divide"),
            MrStrategy::Permutations(k) => write!(f, "perm:{k}"),
        }
    }
}

impl From<MrStrategy> for String {
    fn from(s: MrStrategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for MrStrategy {
    type Error = RidError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for MrStrategy {
    type Err = RidError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "e_divide" {
            return Ok(MrStrategy::EDivide);
        }
        let bad = || RidError::InvalidArgument(format!("unknown strategy {s:?}"));
        let k = s.strip_prefix("perm:").ok_or_else(bad)?;
        match k.parse::<usize>() {
            Ok(k) if k > 0 => Ok(MrStrategy::Permutations(k)),
            _ => Err(bad()),
        }
    }
}

pub fn zero_one_loss(f: &dyn Predictor, d: &Dataset) -> f64 {
    errors_on(f, d, 0..d.n()) as f64 / d.n() as f64
}

fn errors_on(f: &dyn Predictor, d: &Dataset, rows: std::ops::Range<usize>) -> usize {
    rows.filter(|&i| f.predict(d.row(i)) != d.labels()[i]).count()
}

/// Partner of each row under e_divide pairing: row `i < h` swaps with `i + h`.
fn e_divide_partners(n: usize) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(RidError::InvalidArgument(
            "e_divide needs at least two rows".into(),
        ));
    }
    let h = n / 2;
    Ok((0..2 * h).map(|i| if i < h { i + h } else { i - h }).collect())
}

/// Column orders used by a permutation strategy: `k` shuffles of `0..n`
/// drawn in sequence from the stream of `seed`.
fn permutation_orders(n: usize, k: usize, seed: Seed) -> Vec<Vec<usize>> {
    let mut rng = SplitMix64::new(seed);
    (0..k)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            order
        })
        .collect()
}

/// Switched and baseline error counts, plus the number of evaluated rows per dataset.
struct SwitchCounts {
    switched: usize,
    baseline: usize,
    rows: usize,
    replicates: usize,
}

impl SwitchCounts {
    fn loss_switch(&self) -> f64 {
        self.switched as f64 / (self.replicates * self.rows) as f64
    }

    fn baseline_loss(&self) -> f64 {
        self.baseline as f64 / self.rows as f64
    }

    fn sub_mr(&self) -> f64 {
        self.loss_switch() - self.baseline_loss()
    }
}

fn switch_counts(
    f: &dyn Predictor,
    d: &Dataset,
    var: usize,
    strat: MrStrategy,
    seed: Seed,
) -> Result<SwitchCounts> {
    if var >= d.p() {
        return Err(RidError::InvalidArgument(format!(
            "variable {var} out of range for {} features",
            d.p()
        )));
    }
    let col = d.column(var);
    let mut row = vec![0.0; d.p()];
    let mut switched_errors = |source: &dyn Fn(usize) -> usize, rows: usize| {
        (0..rows)
            .filter(|&i| {
                row.copy_from_slice(d.row(i));
                row[var] = col[source(i)];
                f.predict(&row) != d.labels()[i]
            })
            .count()
    };
    match strat {
        MrStrategy::EDivide => {
            let partners = e_divide_partners(d.n())?;
            let rows = partners.len();
            let switched = switched_errors(&|i| partners[i], rows);
            Ok(SwitchCounts {
                switched,
                baseline: errors_on(f, d, 0..rows),
                rows,
                replicates: 1,
            })
        }
        MrStrategy::Permutations(k) => {
            if k == 0 {
                return Err(RidError::InvalidArgument("need at least one permutation".into()));
            }
            let switched = permutation_orders(d.n(), k, seed)
                .iter()
                .map(|order| switched_errors(&|i| order[i], d.n()))
                .sum();
            Ok(SwitchCounts {
                switched,
                baseline: errors_on(f, d, 0..d.n()),
                rows: d.n(),
                replicates: k,
            })
        }
    }
}

/// Expected loss after scrambling column `var`.
pub fn loss_switch(
    f: &dyn Predictor,
    d: &Dataset,
    var: usize,
    strat: MrStrategy,
    seed: Seed,
) -> Result<f64> {
    Ok(switch_counts(f, d, var, strat, seed)?.loss_switch())
}

/// Switched loss minus original loss. Under e_divide both losses use the same
/// `2 * floor(n / 2)` rows, so a variable the predictor ignores scores exactly 0.
pub fn sub_mr(
    f: &dyn Predictor,
    d: &Dataset,
    var: usize,
    strat: MrStrategy,
    seed: Seed,
) -> Result<f64> {
    Ok(switch_counts(f, d, var, strat, seed)?.sub_mr())
}

/// A bounded variable-importance metric.
pub trait Metric: Sync {
    fn name(&self) -> &str;

    /// Smallest and largest value the metric can take.
    fn support(&self) -> (f64, f64);

    fn importance(&self, f: &dyn Predictor, d: &Dataset, var: usize, seed: Seed) -> Result<f64>;

    /// Importance of every variable for every tree; `out[t][j]`.
    fn tree_importances(
        &self,
        trees: &[Tree],
        map: &FeatureMap,
        d: &Dataset,
        seed: Seed,
    ) -> Result<Vec<Vec<f64>>> {
        trees
            .iter()
            .map(|tree| {
                let f = crate::tree::TreePredictor { tree, map };
                (0..d.p()).map(|j| self.importance(&f, d, j, seed)).collect()
            })
            .collect()
    }

    /// Scrambled datasets as split columns, for metrics that are averages of
    /// 0-1 errors on them. Lets the enumerator tally errors without building
    /// the trees.
    fn switch_design(&self, _map: &FeatureMap, _d: &Dataset, _seed: Seed) -> Option<Result<SwitchDesign>> {
        None
    }
}

/// Subtractive model reliance under 0-1 loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubMr {
    pub strategy: MrStrategy,
}

impl SubMr {
    pub fn new(strategy: MrStrategy) -> Self {
        SubMr { strategy }
    }
}

impl Metric for SubMr {
    fn name(&self) -> &str {
        "sub_mr"
    }

    fn support(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }

    fn importance(&self, f: &dyn Predictor, d: &Dataset, var: usize, seed: Seed) -> Result<f64> {
        sub_mr(f, d, var, self.strategy, seed)
    }

    fn switch_design(&self, map: &FeatureMap, d: &Dataset, seed: Seed) -> Option<Result<SwitchDesign>> {
        Some(SwitchDesign::new(self.strategy, map, d, seed))
    }

    /// Batch evaluation on bit columns.
    fn tree_importances(
        &self,
        trees: &[Tree],
        map: &FeatureMap,
        d: &Dataset,
        seed: Seed,
    ) -> Result<Vec<Vec<f64>>> {
        let design = SwitchDesign::new(self.strategy, map, d, seed)?;
        let p = design.switched.len();
        let uses: Vec<Vec<bool>> = (0..p)
            .map(|j| {
                let mut used = vec![false; map.len()];
                for m in map.columns_of(j) {
                    used[m] = true;
                }
                used
            })
            .collect();

        Ok(trees
            .iter()
            .map(|tree| {
                let features = tree.features();
                let baseline = tree.errors(&design.base_cols, &design.labels);
                (0..p)
                    .map(|j| {
                        let switched = if features.iter().any(|&m| uses[j][m]) {
                            design.switched[j]
                                .iter()
                                .map(|cols| tree.errors(cols, &design.labels))
                                .sum()
                        } else {
                            baseline * design.replicates
                        };
                        design.value(baseline, switched)
                    })
                    .collect()
            })
            .collect())
    }
}

/// The scrambled datasets behind [`SubMr`], as split columns. Scrambling a raw
/// column only changes the split columns derived from it, so each switched
/// dataset is the baseline column set with those columns recomputed.
#[derive(Debug, Clone)]
pub struct SwitchDesign {
    /// Rows per switched dataset; the baseline uses the first `rows` rows.
    pub rows: usize,
    pub replicates: usize,
    pub base_cols: Vec<Bits>,
    pub labels: Bits,
    /// `switched[var][replicate]`: full column set with `var` scrambled.
    pub switched: Vec<Vec<Vec<Bits>>>,
}

impl SwitchDesign {
    pub fn new(strategy: MrStrategy, map: &FeatureMap, d: &Dataset, seed: Seed) -> Result<Self> {
        let (rows, orders): (usize, Vec<Vec<usize>>) = match strategy {
            MrStrategy::EDivide => {
                let partners = e_divide_partners(d.n())?;
                (partners.len(), vec![partners])
            }
            MrStrategy::Permutations(k) => {
                if k == 0 {
                    return Err(RidError::InvalidArgument(
                        "need at least one permutation".into(),
                    ));
                }
                (d.n(), permutation_orders(d.n(), k, seed))
            }
        };
        let base_rows: Vec<usize> = (0..rows).collect();
        let base = d.select_rows(&base_rows);
        let base_cols = map.apply(&base);
        let labels = Bits::from_fn(rows, |i| base.labels()[i] == 1);
        let switched = (0..d.p())
            .map(|j| {
                let col = d.column(j);
                orders
                    .iter()
                    .map(|order| {
                        let mut cols = base_cols.clone();
                        for m in map.columns_of(j) {
                            let e = map.entries[m];
                            cols[m] = Bits::from_fn(rows, |i| e.test(col[order[i]]));
                        }
                        cols
                    })
                    .collect()
            })
            .collect();
        Ok(SwitchDesign {
            rows,
            replicates: orders.len(),
            base_cols,
            labels,
            switched,
        })
    }

    /// Metric value from the baseline error count and the switched error
    /// count summed over replicates.
    pub fn value(&self, baseline: usize, switched: usize) -> f64 {
        SwitchCounts {
            switched,
            baseline,
            rows: self.rows,
            replicates: self.replicates,
        }
        .sub_mr()
    }
}
