//! Synthetic data-generating processes and their noiseless decision rules.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FeatureKind};
use crate::error::{Result, RidError};
use crate::importance::Predictor;
use crate::rng::{Seed, SplitMix64};

/// Number of levels of each Monk variable; values are `1..=levels`.
pub const MONK_LEVELS: [u64; 6] = [3, 3, 2, 3, 4, 2];

const CHEN_THRESHOLD: f64 = 2.048;
const FRIEDMAN_THRESHOLD: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DgpId {
    Monk1,
    Monk3,
    Chen,
    Friedman,
}

impl DgpId {
    pub const ALL: [DgpId; 4] = [DgpId::Monk1, DgpId::Monk3, DgpId::Chen, DgpId::Friedman];

    pub fn arity(self) -> usize {
        match self {
            DgpId::Monk1 | DgpId::Monk3 => 6,
            DgpId::Chen => 10,
            DgpId::Friedman => 6,
        }
    }

    /// Sample size used for this process unless overridden.
    pub fn default_n(self) -> usize {
        match self {
            DgpId::Monk1 | DgpId::Monk3 => 124,
            DgpId::Chen => 1000,
            DgpId::Friedman => 200,
        }
    }

    pub fn default_noise(self) -> f64 {
        match self {
            DgpId::Monk3 => 0.05,
            _ => 0.0,
        }
    }

    /// Relevant variables, 1-based.
    pub fn relevant_vars(self) -> Vec<usize> {
        match self {
            DgpId::Monk1 => vec![1, 2, 5],
            DgpId::Monk3 => vec![2, 4, 5],
            DgpId::Chen => vec![1, 2, 3, 4],
            DgpId::Friedman => vec![1, 2, 3, 4, 5],
        }
    }

    /// Extraneous variables, 1-based.
    pub fn extraneous_vars(self) -> Vec<usize> {
        let rel = self.relevant_vars();
        (1..=self.arity()).filter(|v| !rel.contains(v)).collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            DgpId::Monk1 => "monk1",
            DgpId::Monk3 => "monk3",
            DgpId::Chen => "chen",
            DgpId::Friedman => "friedman",
        }
    }

    /// Noiseless decision rule.
    pub fn predict(self, x: &[f64]) -> Result<u8> {
        if x.len() != self.arity() {
            return Err(RidError::Arity {
                expected: self.arity(),
                got: x.len(),
            });
        }
        Ok(self.rule(x, 0.0))
    }

    fn rule(self, x: &[f64], noise: f64) -> u8 {
        let eq = |a: f64, b: f64| a.round() == b.round();
        let y = match self {
            DgpId::Monk1 => eq(x[0], x[1]) || eq(x[4], 1.0),
            DgpId::Monk3 => {
                (eq(x[4], 3.0) && eq(x[3], 1.0)) || (!eq(x[4], 4.0) && !eq(x[1], 3.0))
            }
            DgpId::Chen => {
                -2.0 * x[0].sin() + x[1].max(0.0) + x[2] + (-x[3]).exp() + noise >= CHEN_THRESHOLD
            }
            DgpId::Friedman => {
                10.0 * (PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - 0.5).powi(2)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
                    + noise
                    >= FRIEDMAN_THRESHOLD
            }
        };
        y as u8
    }
}

impl fmt::Display for DgpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpId {
    type Err = RidError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "monk1" => Ok(DgpId::Monk1),
            "monk3" => Ok(DgpId::Monk3),
            "chen" => Ok(DgpId::Chen),
            "friedman" => Ok(DgpId::Friedman),
            other => Err(RidError::InvalidArgument(format!("unknown dgp {other:?}"))),
        }
    }
}

impl Predictor for DgpId {
    fn predict(&self, row: &[f64]) -> u8 {
        self.rule(row, 0.0)
    }
}

/// Generation request for one synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub id: DgpId,
    pub n: usize,
    /// Label-flip probability; only Monk 3 is noisy.
    pub noise: f64,
    pub seed: Seed,
}

impl DgpSpec {
    /// Spec with the default size and noise of `id`.
    pub fn standard(id: DgpId, seed: Seed) -> Self {
        DgpSpec {
            id,
            n: id.default_n(),
            noise: id.default_noise(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(RidError::InvalidArgument("n must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(RidError::InvalidArgument(format!(
                "noise {} outside [0, 1]",
                self.noise
            )));
        }
        if self.id != DgpId::Monk3 && self.noise != 0.0 {
            return Err(RidError::InvalidArgument(format!(
                "{} has no label noise",
                self.id
            )));
        }
        Ok(())
    }
}

/// Draws a dataset. Per row, features are drawn in order, then (Chen and
/// Friedman) the additive noise term, then (Monk 3) the label-flip draw.
pub fn generate(spec: &DgpSpec) -> Result<Dataset> {
    spec.validate()?;
    let id = spec.id;
    let p = id.arity();
    let mut rng = SplitMix64::new(spec.seed);
    let mut features = Vec::with_capacity(spec.n * p);
    let mut labels = Vec::with_capacity(spec.n);
    let mut row = vec![0.0; p];
    for _ in 0..spec.n {
        let y = match id {
            DgpId::Monk1 | DgpId::Monk3 => {
                for (x, levels) in row.iter_mut().zip(MONK_LEVELS) {
                    *x = (rng.below(levels) + 1) as f64;
                }
                let mut y = id.rule(&row, 0.0);
                if id == DgpId::Monk3 && rng.next_f64() < spec.noise {
                    y = 1 - y;
                }
                y
            }
            DgpId::Chen => {
                for x in row.iter_mut() {
                    *x = rng.normal();
                }
                let eps = rng.normal();
                id.rule(&row, eps)
            }
            DgpId::Friedman => {
                for x in row.iter_mut() {
                    *x = rng.next_f64();
                }
                let eps = rng.normal();
                id.rule(&row, eps)
            }
        };
        features.extend_from_slice(&row);
        labels.push(y);
    }
    let names = (1..=p).map(|j| format!("X{j}")).collect();
    let kind = match id {
        DgpId::Monk1 | DgpId::Monk3 => FeatureKind::Categorical,
        DgpId::Chen | DgpId::Friedman => FeatureKind::Numeric,
    };
    Dataset::new(features, labels, names, vec![kind; p])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::read_csv;

    #[test]
    fn monk1_rule() {
        assert_eq!(DgpId::Monk1.predict(&[1., 1., 2., 3., 2., 1.]).unwrap(), 1);
        assert_eq!(DgpId::Monk1.predict(&[3., 1., 1., 1., 1., 1.]).unwrap(), 1);
        assert_eq!(DgpId::Monk1.predict(&[3., 1., 1., 1., 2., 1.]).unwrap(), 0);
    }

    #[test]
    fn monk3_rule() {
        assert_eq!(DgpId::Monk3.predict(&[1., 3., 1., 1., 3., 1.]).unwrap(), 1);
        assert_eq!(DgpId::Monk3.predict(&[1., 1., 1., 2., 2., 1.]).unwrap(), 1);
        assert_eq!(DgpId::Monk3.predict(&[1., 3., 1., 2., 2., 1.]).unwrap(), 0);
        assert_eq!(DgpId::Monk3.predict(&[1., 1., 1., 2., 4., 1.]).unwrap(), 0);
    }

    #[test]
    fn chen_and_friedman_rules() {
        assert_eq!(DgpId::Chen.predict(&[0.0; 10]).unwrap(), 0);
        assert_eq!(DgpId::Friedman.predict(&[0., 0., 0.5, 0., 0., 0.]).unwrap(), 0);
        assert_eq!(DgpId::Friedman.predict(&[0.5, 1., 0., 1., 1., 0.]).unwrap(), 1);
    }

    #[test]
    fn arity_mismatch() {
        assert!(matches!(
            DgpId::Chen.predict(&[0.0; 6]),
            Err(RidError::Arity { expected: 10, got: 6 })
        ));
    }

    #[test]
    fn relevant_sets() {
        assert_eq!(DgpId::Monk1.relevant_vars(), vec![1, 2, 5]);
        assert_eq!(DgpId::Monk3.relevant_vars(), vec![2, 4, 5]);
        assert_eq!(DgpId::Chen.relevant_vars(), vec![1, 2, 3, 4]);
        assert_eq!(DgpId::Friedman.extraneous_vars(), vec![6]);
    }

    #[test]
    fn invalid_specs() {
        let mut spec = DgpSpec::standard(DgpId::Chen, Seed(1));
        spec.noise = 0.1;
        assert!(generate(&spec).is_err());
        spec.noise = 0.0;
        spec.n = 0;
        assert!(generate(&spec).is_err());
        let mut spec = DgpSpec::standard(DgpId::Monk3, Seed(1));
        spec.noise = 1.5;
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        for id in DgpId::ALL {
            let spec = DgpSpec::standard(id, Seed(11));
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }

    #[test]
    fn monk_values_lie_in_domains() {
        let d = generate(&DgpSpec::standard(DgpId::Monk1, Seed(2))).unwrap();
        for row in d.rows() {
            for (x, levels) in row.iter().zip(MONK_LEVELS) {
                assert!(*x >= 1.0 && *x <= levels as f64 && x.fract() == 0.0);
            }
        }
    }

    #[test]
    fn noiseless_monk_labels_follow_rule() {
        for id in [DgpId::Monk1, DgpId::Monk3] {
            let spec = DgpSpec {
                id,
                n: 500,
                noise: 0.0,
                seed: Seed(4),
            };
            let d = generate(&spec).unwrap();
            for (row, &y) in d.rows().zip(d.labels()) {
                assert_eq!(id.predict(row).unwrap(), y);
            }
        }
    }

    #[test]
    fn monk3_noise_rate() {
        let spec = DgpSpec {
            id: DgpId::Monk3,
            n: 100_000,
            noise: 0.05,
            seed: Seed(8),
        };
        let d = generate(&spec).unwrap();
        let flipped = d
            .rows()
            .zip(d.labels())
            .filter(|(row, &y)| DgpId::Monk3.predict(row).unwrap() != y)
            .count();
        let rate = flipped as f64 / spec.n as f64;
        assert!((0.045..=0.055).contains(&rate), "{rate}");
    }

    #[test]
    fn chen_positive_rate_matches_direct_monte_carlo() {
        let d = generate(&DgpSpec {
            id: DgpId::Chen,
            n: 100_000,
            noise: 0.0,
            seed: Seed(21),
        })
        .unwrap();
        let rate = d.labels().iter().map(|&y| y as f64).sum::<f64>() / d.n() as f64;

        // Independent draw of the same formula with a different stream.
        let mut rng = SplitMix64::new(Seed(12345));
        let trials = 100_000;
        let mut pos = 0usize;
        for _ in 0..trials {
            let x: Vec<f64> = (0..4).map(|_| rng.normal()).collect();
            let e = rng.normal();
            let s = -2.0 * x[0].sin() + x[1].max(0.0) + x[2] + (-x[3]).exp() + e;
            pos += (s >= 2.048) as usize;
        }
        let oracle = pos as f64 / trials as f64;
        assert!((rate - oracle).abs() < 0.02, "{rate} vs {oracle}");
    }

    #[test]
    fn monk_csv_round_trip_keeps_all_fields() {
        let d = generate(&DgpSpec::standard(DgpId::Monk1, Seed(0))).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, "y").unwrap();
        let back = read_csv(buf.as_slice(), Some("y")).unwrap();
        assert_eq!(back.n(), 124);
        assert!(back.feature_kinds().iter().all(|k| *k == FeatureKind::Categorical));
        assert_eq!(back, d);
    }

    #[test]
    fn continuous_csv_round_trip_is_exact() {
        let d = generate(&DgpSpec::standard(DgpId::Friedman, Seed(3))).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf, "y").unwrap();
        let back = read_csv(buf.as_slice(), Some("y")).unwrap();
        assert_eq!(back, d);
    }
}
