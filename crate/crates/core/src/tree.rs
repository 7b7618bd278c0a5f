//! Binary decision trees over split features and their regularized objective.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bits::Bits;
use crate::dataset::{BinDataset, FeatureMap};
use crate::importance::Predictor;

/// A decision tree. `left` is taken when the split bit is 0, `right` when it is 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Tree {
    Leaf(u8),
    Split {
        feature: usize,
        left: Box<Tree>,
        right: Box<Tree>,
    },
}

impl Tree {
    pub fn leaf(label: u8) -> Tree {
        Tree::Leaf(label)
    }

    pub fn split(feature: usize, left: Tree, right: Tree) -> Tree {
        Tree::Split {
            feature,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Tree::Leaf(_) => 1,
            Tree::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Tree::Leaf(_) => 0,
            Tree::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Follows bits through the tree; `bit(m)` reports split feature `m`.
    #[inline]
    pub fn predict_with(&self, mut bit: impl FnMut(usize) -> bool) -> u8 {
        let mut node = self;
        loop {
            match node {
                Tree::Leaf(y) => return *y,
                Tree::Split {
                    feature,
                    left,
                    right,
                } => node = if bit(*feature) { right } else { left },
            }
        }
    }

    pub fn predict(&self, row: &Bits) -> u8 {
        self.predict_with(|m| row.get(m))
    }

    /// Split features used anywhere in the tree, sorted and deduplicated.
    pub fn features(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_features(&mut out);
        out.sort_unstable();
        out.dedup();
        out
    }

    fn collect_features(&self, out: &mut Vec<usize>) {
        if let Tree::Split {
            feature,
            left,
            right,
        } = self
        {
            out.push(*feature);
            left.collect_features(out);
            right.collect_features(out);
        }
    }

    /// True when no split feature repeats along a root-to-leaf path.
    pub fn has_distinct_paths(&self) -> bool {
        fn walk(t: &Tree, path: &mut Vec<usize>) -> bool {
            match t {
                Tree::Leaf(_) => true,
                Tree::Split {
                    feature,
                    left,
                    right,
                } => {
                    if path.contains(feature) {
                        return false;
                    }
                    path.push(*feature);
                    let ok = walk(left, path) && walk(right, path);
                    path.pop();
                    ok
                }
            }
        }
        walk(self, &mut Vec::new())
    }

    /// Number of misclassified rows, counted with column bitsets.
    pub fn errors(&self, columns: &[Bits], labels: &Bits) -> usize {
        let words = labels.words().len();
        let mut scratch = vec![0u64; words * (self.depth() + 1)];
        let (root, _) = scratch.split_at_mut(words);
        root.copy_from_slice(Bits::ones(labels.len()).words());
        errors_walk(self, &mut scratch, words, columns, labels.words())
    }

    /// Misclassification rate plus `lambda` per leaf.
    pub fn objective(&self, d: &BinDataset, lambda: f64) -> f64 {
        objective_value(self.errors(&d.columns, &d.labels), d.n(), self.leaves(), lambda)
    }

    /// Compact JSON encoding, used as the canonical form for ordering.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("tree serialization cannot fail")
    }

    /// Same predictions with the split of the root-level node mirrored onto a
    /// complementary feature: children swapped, feature replaced.
    pub fn mirrored_root(&self, complement_feature: usize) -> Option<Tree> {
        match self {
            Tree::Leaf(_) => None,
            Tree::Split { left, right, .. } => Some(Tree::Split {
                feature: complement_feature,
                left: right.clone(),
                right: left.clone(),
            }),
        }
    }
}

/// `scratch` holds the current mask in its first `words` entries and free
/// space for the masks of deeper levels after it.
fn errors_walk(t: &Tree, scratch: &mut [u64], words: usize, columns: &[Bits], labels: &[u64]) -> usize {
    let (mask, rest) = scratch.split_at_mut(words);
    match t {
        Tree::Leaf(y) => {
            let flip = if *y == 1 { !0u64 } else { 0 };
            mask.iter()
                .zip(labels)
                .map(|(m, l)| (m & (l ^ flip)).count_ones() as usize)
                .sum()
        }
        Tree::Split {
            feature,
            left,
            right,
        } => {
            let col = columns[*feature].words();
            for w in 0..words {
                rest[w] = mask[w] & !col[w];
            }
            let mut e = errors_walk(left, rest, words, columns, labels);
            for w in 0..words {
                rest[w] = mask[w] & col[w];
            }
            e += errors_walk(right, rest, words, columns, labels);
            e
        }
    }
}

/// `errors / n + lambda * leaves`, the single formula every objective goes through.
#[inline]
pub fn objective_value(errors: usize, n: usize, leaves: usize, lambda: f64) -> f64 {
    errors as f64 / n as f64 + lambda * leaves as f64
}

/// A tree applied to raw feature rows through the split definitions it was
/// learned with.
#[derive(Debug, Clone, Copy)]
pub struct TreePredictor<'a> {
    pub tree: &'a Tree,
    pub map: &'a FeatureMap,
}

impl Predictor for TreePredictor<'_> {
    fn predict(&self, row: &[f64]) -> u8 {
        self.tree.predict_with(|m| self.map.bit(m, row))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRepr {
    Leaf {
        leaf: u8,
    },
    Split {
        feature: usize,
        left: Box<NodeRepr>,
        right: Box<NodeRepr>,
    },
}

impl From<&Tree> for NodeRepr {
    fn from(t: &Tree) -> Self {
        match t {
            Tree::Leaf(y) => NodeRepr::Leaf { leaf: *y },
            Tree::Split {
                feature,
                left,
                right,
            } => NodeRepr::Split {
                feature: *feature,
                left: Box::new(left.as_ref().into()),
                right: Box::new(right.as_ref().into()),
            },
        }
    }
}

impl From<NodeRepr> for Tree {
    fn from(r: NodeRepr) -> Self {
        match r {
            NodeRepr::Leaf { leaf } => Tree::Leaf(leaf),
            NodeRepr::Split {
                feature,
                left,
                right,
            } => Tree::split(feature, (*left).into(), (*right).into()),
        }
    }
}

impl Serialize for Tree {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        NodeRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = NodeRepr::deserialize(d)?;
        fn check(r: &NodeRepr) -> bool {
            match r {
                NodeRepr::Leaf { leaf } => *leaf <= 1,
                NodeRepr::Split { left, right, .. } => check(left) && check(right),
            }
        }
        if !check(&repr) {
            return Err(serde::de::Error::custom("leaf label must be 0 or 1"));
        }
        Ok(repr.into())
    }
}
