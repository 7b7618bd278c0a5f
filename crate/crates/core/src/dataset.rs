//! Tabular datasets, CSV ingestion, binarization and bootstrap resampling.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::error::{Result, RidError};
use crate::rng::{Seed, SplitMix64};

/// Integer-valued columns with at most this many distinct values load as categorical.
pub const CATEGORICAL_MAX_LEVELS: usize = 16;
pub const DEFAULT_MAX_THRESHOLDS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<u8>,
    names: Vec<String>,
    kinds: Vec<FeatureKind>,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u8>,
        names: Vec<String>,
        kinds: Vec<FeatureKind>,
    ) -> Result<Self> {
        let n = labels.len();
        let p = names.len();
        if n == 0 {
            return Err(RidError::EmptyDataset);
        }
        if p == 0 {
            return Err(RidError::InvalidDataset("no feature columns".into()));
        }
        if kinds.len() != p || features.len() != n * p {
            return Err(RidError::InvalidDataset(format!(
                "shape mismatch: {} values for {n} rows x {p} columns",
                features.len()
            )));
        }
        if let Some((row, &y)) = labels.iter().enumerate().find(|(_, &y)| y > 1) {
            return Err(RidError::LabelNotBinary {
                row,
                value: y.to_string(),
            });
        }
        for (j, kind) in kinds.iter().enumerate() {
            for i in 0..n {
                let v = features[i * p + j];
                if !v.is_finite() {
                    return Err(RidError::InvalidDataset(format!(
                        "non-finite value at row {i}, column {}",
                        names[j]
                    )));
                }
                if *kind == FeatureKind::Categorical && v.fract() != 0.0 {
                    return Err(RidError::InvalidDataset(format!(
                        "categorical column {} has non-integer value {v}",
                        names[j]
                    )));
                }
            }
        }
        Ok(Dataset {
            features,
            labels,
            names,
            kinds,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.names.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.p();
        &self.features[i * p..(i + 1) * p]
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.p() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.value(i, j)).collect()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.p())
    }

    /// New dataset made of the given rows, in order. Indices may repeat.
    pub fn select_rows(&self, indices: &[usize]) -> Dataset {
        let p = self.p();
        let mut features = Vec::with_capacity(indices.len() * p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            names: self.names.clone(),
            kinds: self.kinds.clone(),
        }
    }

    /// Copy with column `var` overwritten by `values`.
    pub fn with_column(&self, var: usize, values: &[f64]) -> Dataset {
        debug_assert_eq!(values.len(), self.n());
        let p = self.p();
        let mut out = self.clone();
        for (i, &v) in values.iter().enumerate() {
            out.features[i * p + var] = v;
        }
        out
    }

    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), labels, self.names.clone(), self.kinds.clone())
    }

    pub fn with_kinds(&self, kinds: Vec<FeatureKind>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), self.labels.clone(), self.names.clone(), kinds)
    }

    /// Index of the named feature column.
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Order-sensitive FNV-1a hash of the contents.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(self.n() as u64).to_le_bytes());
        eat(&(self.p() as u64).to_le_bytes());
        for v in &self.features {
            eat(&v.to_bits().to_le_bytes());
        }
        eat(&self.labels);
        h
    }

    /// Writes a CSV with the label as the last column, named `label_name`.
    pub fn write_csv<W: std::io::Write>(&self, out: W, label_name: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = self.names.iter().map(String::as_str).collect();
        header.push(label_name);
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.p() + 1);
        for (i, row) in self.rows().enumerate() {
            record.clear();
            record.extend(row.iter().map(|v| format!("{v}")));
            record.push(self.labels[i].to_string());
            w.write_record(&record)?;
        }
        w.flush().map_err(|source| RidError::Io {
            path: "<csv writer>".into(),
            source,
        })?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path, label_name: &str) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|source| RidError::Io {
            path: path.to_owned(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(file), label_name)
    }
}

/// Loads a CSV file. `label_col` defaults to the last column.
pub fn load_csv(path: &Path, label_col: Option<&str>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| RidError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_csv(file, label_col)
}

pub fn read_csv<R: std::io::Read>(input: R, label_col: Option<&str>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header.is_empty() {
        return Err(RidError::EmptyDataset);
    }
    let label_idx = match label_col {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| RidError::MissingColumn(name.to_owned()))?,
        None => header.len() - 1,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let p = names.len();
    if p == 0 {
        return Err(RidError::InvalidDataset("no feature columns".into()));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(RidError::InvalidDataset(format!(
                "row {row} has {} fields, expected {}",
                record.len(),
                header.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            if j == label_idx {
                labels.push(match cell.parse::<f64>() {
                    Ok(v) if v == 0.0 => 0,
                    Ok(v) if v == 1.0 => 1,
                    _ => {
                        return Err(RidError::LabelNotBinary {
                            row,
                            value: cell.to_owned(),
                        })
                    }
                });
            } else {
                let v: f64 = cell.parse().map_err(|_| RidError::NonNumeric {
                    row,
                    column: header[j].clone(),
                    value: cell.to_owned(),
                })?;
                if !v.is_finite() {
                    return Err(RidError::NonNumeric {
                        row,
                        column: header[j].clone(),
                        value: cell.to_owned(),
                    });
                }
                features.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(RidError::EmptyDataset);
    }
    let n = labels.len();
    let kinds = (0..p)
        .map(|j| detect_kind((0..n).map(|i| features[i * p + j])))
        .collect();
    Dataset::new(features, labels, names, kinds)
}

fn detect_kind(values: impl Iterator<Item = f64>) -> FeatureKind {
    let mut levels = BTreeSet::new();
    for v in values {
        if v.fract() != 0.0 {
            return FeatureKind::Numeric;
        }
        levels.insert(v as i64);
        if levels.len() > CATEGORICAL_MAX_LEVELS {
            return FeatureKind::Numeric;
        }
    }
    FeatureKind::Categorical
}

/// How a binary split column is derived from its original variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitRule {
    /// Bit is set when the value is `<= t`.
    Threshold(f64),
    /// Bit is set when the value rounds to `v`.
    Equals(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapEntry {
    pub orig_var: usize,
    pub rule: SplitRule,
}

impl FeatureMapEntry {
    #[inline]
    pub fn test(&self, value: f64) -> bool {
        match self.rule {
            SplitRule::Threshold(t) => value <= t,
            SplitRule::Equals(v) => value.round() as i64 == v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMap {
    pub entries: Vec<FeatureMapEntry>,
}

impl FeatureMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Bit `m` of a raw feature row.
    #[inline]
    pub fn bit(&self, m: usize, row: &[f64]) -> bool {
        let e = &self.entries[m];
        e.test(row[e.orig_var])
    }

    /// Binary columns of `d` under this map. Columns may be constant.
    pub fn apply(&self, d: &Dataset) -> Vec<Bits> {
        self.entries
            .iter()
            .map(|e| Bits::from_fn(d.n(), |i| e.test(d.value(i, e.orig_var))))
            .collect()
    }

    /// Indices of the binary columns derived from original variable `var`.
    pub fn columns_of(&self, var: usize) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.orig_var == var)
            .map(|(m, _)| m)
    }
}

/// Binary split features over the rows of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BinDataset {
    pub columns: Vec<Bits>,
    pub labels: Bits,
    pub map: FeatureMap,
}

impl BinDataset {
    /// Builds a binary dataset from raw columns, dropping constant ones.
    pub fn from_columns(columns: Vec<Bits>, labels: Bits, map: FeatureMap) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(RidError::EmptyDataset);
        }
        let (columns, entries): (Vec<Bits>, Vec<FeatureMapEntry>) = columns
            .into_iter()
            .zip(map.entries)
            .filter(|(c, _)| {
                debug_assert_eq!(c.len(), n);
                !c.none() && !c.all()
            })
            .unzip();
        if columns.is_empty() {
            return Err(RidError::NoUsableSplits);
        }
        Ok(BinDataset {
            columns,
            labels,
            map: FeatureMap { entries },
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.columns.len()
    }

    /// Bits of one sample across all columns.
    pub fn row(&self, i: usize) -> Bits {
        Bits::from_fn(self.m(), |m| self.columns[m].get(i))
    }
}

/// Midpoint thresholds between consecutive unique values, subsampled to at
/// most `max_thresholds` at evenly spaced ranks.
pub fn numeric_thresholds(values: &[f64], max_thresholds: usize) -> Vec<f64> {
    let mut uniq: Vec<f64> = values.to_vec();
    uniq.sort_by(f64::total_cmp);
    uniq.dedup();
    let mids: Vec<f64> = uniq.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    if mids.len() <= max_thresholds {
        return mids;
    }
    let count = mids.len();
    let m = max_thresholds;
    (0..m).map(|j| mids[(2 * j + 1) * count / (2 * m)]).collect()
}

pub fn binarize(d: &Dataset, max_thresholds: usize) -> Result<BinDataset> {
    if max_thresholds == 0 {
        return Err(RidError::InvalidArgument("max_thresholds must be positive".into()));
    }
    let mut entries = Vec::new();
    for j in 0..d.p() {
        let col = d.column(j);
        match d.feature_kinds()[j] {
            FeatureKind::Categorical => {
                let levels: BTreeSet<i64> = col.iter().map(|v| v.round() as i64).collect();
                entries.extend(levels.into_iter().map(|v| FeatureMapEntry {
                    orig_var: j,
                    rule: SplitRule::Equals(v),
                }));
            }
            FeatureKind::Numeric => {
                entries.extend(numeric_thresholds(&col, max_thresholds).into_iter().map(|t| {
                    FeatureMapEntry {
                        orig_var: j,
                        rule: SplitRule::Threshold(t),
                    }
                }));
            }
        }
    }
    let map = FeatureMap { entries };
    let columns = map.apply(d);
    let labels = Bits::from_fn(d.n(), |i| d.labels()[i] == 1);
    BinDataset::from_columns(columns, labels, map)
}

/// Row indices of a bootstrap replicate: `n` uniform draws with replacement.
pub fn bootstrap_indices(n: usize, seed: Seed) -> Vec<usize> {
    let mut rng = SplitMix64::new(seed);
    (0..n).map(|_| rng.below(n as u64) as usize).collect()
}

pub fn bootstrap_sample(d: &Dataset, seed: Seed) -> Dataset {
    d.select_rows(&bootstrap_indices(d.n(), seed))
}
