//! Exact optimal trees and complete enumeration of near-optimal trees.
//!
//! Both searches run over subproblems `(support, depth_left)`, where the
//! support is the set of rows reaching a node. [`Searcher::solve`] is a
//! memoized branch-and-bound for the best objective of a subproblem and
//! [`Searcher::enumerate`] lists every subtree whose objective fits a budget,
//! using the exact child optima as admissible bounds when splitting the budget
//! between the two children.

use std::borrow::Cow;
use std::rc::Rc;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::bits::Bits;
use crate::dataset::{BinDataset, Dataset, FeatureMap};
use crate::error::{Result, RidError};
use crate::importance::{Metric, SwitchDesign};
use crate::rid::Interval;
use crate::rng::Seed;
use crate::tree::{objective_value, Tree};

pub const DEFAULT_MAX_MODELS: usize = 1_000_000;

/// Slack on internal float comparisons. Membership is decided afterwards with
/// the exact objective formula.
const TOL: f64 = 1e-10;
/// Slack on the final `objective <= min + epsilon` test.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// The trees within `epsilon` of the best objective, sorted by objective and
/// then by canonical encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RashomonSet {
    pub trees: Vec<Tree>,
    pub objectives: Vec<f64>,
    pub min_objective: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub depth_bound: usize,
    pub dataset_fingerprint: u64,
    pub map: FeatureMap,
}

impl RashomonSet {
    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost {
    errors: u32,
    leaves: u32,
    value: f64,
}

#[derive(Debug, Clone, Copy)]
struct DpEntry {
    exact: Option<Cost>,
    /// Proven lower bound on the optimum.
    lower: f64,
}

#[derive(Debug, Clone, Copy)]
enum Node {
    Leaf(u8),
    Split { feature: u32, left: u32, right: u32 },
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: Cost,
    node: u32,
    /// Row of `Searcher::tallies`; unused without a layout.
    tally: u32,
}

/// Extra row blocks searched alongside the training rows. Supports are the
/// training rows followed by the blocks, each starting on a word boundary, so
/// every candidate can carry its error count on each block.
struct Layout {
    columns: Vec<Bits>,
    labels: Bits,
    base_len: usize,
    blocks: Vec<std::ops::Range<usize>>,
    root: Bits,
}

impl Layout {
    fn new(data: &BinDataset, design: &SwitchDesign) -> Self {
        let mut blocks: Vec<(&[Bits], &Bits)> = vec![(&data.columns, &data.labels), (&design.base_cols, &design.labels)];
        for per_var in &design.switched {
            for cols in per_var {
                blocks.push((cols, &design.labels));
            }
        }
        let columns = (0..data.m())
            .map(|m| Bits::concat_aligned(&blocks.iter().map(|b| &b.0[m]).collect::<Vec<_>>()))
            .collect();
        let labels = Bits::concat_aligned(&blocks.iter().map(|b| b.1).collect::<Vec<_>>());
        let ones: Vec<Bits> = blocks.iter().map(|b| Bits::ones(b.1.len())).collect();
        let root = Bits::concat_aligned(&ones.iter().collect::<Vec<_>>());
        let mut ranges = Vec::new();
        let mut start = data.labels.words().len();
        for b in &blocks[1..] {
            let w = b.1.words().len();
            ranges.push(start..start + w);
            start += w;
        }
        Layout {
            columns,
            labels,
            base_len: data.n(),
            blocks: ranges,
            root,
        }
    }
}

struct EnumEntry {
    budget: f64,
    list: Rc<Vec<Candidate>>,
}

type Key = (Bits, u8);

/// Search state for one binary dataset and regularization weight.
pub struct Searcher<'a> {
    data: &'a BinDataset,
    lambda: f64,
    n: usize,
    max_models: usize,
    /// Per support, entries indexed by depth.
    dp: FxHashMap<Bits, Vec<DpEntry>>,
    lists: FxHashMap<Key, EnumEntry>,
    nodes: Vec<Node>,
    layout: Option<Layout>,
    tallies: Vec<u32>,
    /// Runs of consecutive features whose bit-1 sets are nested increasing.
    chains: Rc<Vec<Vec<usize>>>,
    /// All columns back to back.
    flat: Vec<u64>,
}

impl<'a> Searcher<'a> {
    pub fn new(data: &'a BinDataset, lambda: f64) -> Self {
        Searcher {
            data,
            lambda,
            n: data.n(),
            max_models: DEFAULT_MAX_MODELS,
            dp: FxHashMap::default(),
            lists: FxHashMap::default(),
            nodes: vec![Node::Leaf(0), Node::Leaf(1)],
            layout: None,
            tallies: Vec::new(),
            chains: Rc::new(nested_chains(&data.columns)),
            flat: data.columns.iter().flat_map(|c| c.words().iter().copied()).collect(),
        }
    }

    fn width(&self) -> usize {
        self.layout.as_ref().map_or(0, |l| l.blocks.len())
    }

    fn tally(&self, c: &Candidate) -> &[u32] {
        let w = self.width();
        &self.tallies[c.tally as usize * w..(c.tally as usize + 1) * w]
    }

    fn push_leaf_tally(&mut self, support: &Bits, label: u8) -> u32 {
        let Some(layout) = &self.layout else {
            return 0;
        };
        let row = (self.tallies.len() / layout.blocks.len()) as u32;
        for r in &layout.blocks {
            let pos = support.and_count_words(&layout.labels, r.clone());
            let errors = if label == 0 {
                pos
            } else {
                support.count_ones_words(r.clone()) - pos
            };
            self.tallies.push(errors as u32);
        }
        row
    }

    fn push_split_tally(&mut self, l: &Candidate, r: &Candidate) -> u32 {
        let w = self.width();
        if w == 0 {
            return 0;
        }
        let row = (self.tallies.len() / w) as u32;
        let (a, b) = (l.tally as usize * w, r.tally as usize * w);
        for k in 0..w {
            let v = self.tallies[a + k] + self.tallies[b + k];
            self.tallies.push(v);
        }
        row
    }

    fn cost(&self, errors: u32, leaves: u32) -> Cost {
        Cost {
            errors,
            leaves,
            value: objective_value(errors as usize, self.n, leaves as usize, self.lambda),
        }
    }

    fn combine(&self, a: Cost, b: Cost) -> Cost {
        self.cost(a.errors + b.errors, a.leaves + b.leaves)
    }

    /// (positives, total) in the support.
    fn counts(&self, support: &Bits) -> (u32, u32) {
        (
            support.and_count(&self.data.labels) as u32,
            support.count_ones() as u32,
        )
    }

    fn children(&self, support: &Bits, feature: usize) -> Option<(Bits, Bits)> {
        let col = &self.data.columns[feature];
        let right = support.and(col);
        if right.none() {
            return None;
        }
        let left = support.and_not(col);
        if left.none() {
            return None;
        }
        Some((left, right))
    }

    /// Depth beyond which extra leaves cannot pay for themselves: a tree with
    /// `L` leaves costs at least `lambda * L`, and only trees no worse than the
    /// leaf matter, so `L <= leaf / lambda` and the depth is at most `L - 1`.
    fn effective_depth(&self, leaf: Cost, depth: usize) -> usize {
        if leaf.errors == 0 {
            return 0;
        }
        if self.lambda > 0.0 {
            let max_leaves = (leaf.value / self.lambda + 1e-9).floor();
            if max_leaves < (depth + 1) as f64 {
                return (max_leaves as usize).saturating_sub(1);
            }
        }
        depth
    }

    /// Best tree with at most one split, without touching the memo.
    fn best_stump(&self, support: &Bits, leaf: Cost, pos: u32, total: u32) -> Cost {
        let (s, y) = (support.words(), self.data.labels.words());
        let errors = match s.len() {
            1 => stump_errors::<1>(&self.flat, s, y, pos, total),
            2 => stump_errors::<2>(&self.flat, s, y, pos, total),
            3 => stump_errors::<3>(&self.flat, s, y, pos, total),
            4 => stump_errors::<4>(&self.flat, s, y, pos, total),
            5 => stump_errors::<5>(&self.flat, s, y, pos, total),
            6 => stump_errors::<6>(&self.flat, s, y, pos, total),
            7 => stump_errors::<7>(&self.flat, s, y, pos, total),
            8 => stump_errors::<8>(&self.flat, s, y, pos, total),
            _ => self
                .data
                .columns
                .iter()
                .map(|col| {
                    let (t, p) = (support.and_count(col) as u32, support.and_count(&col.and(&self.data.labels)) as u32);
                    split_errors(t, p, pos, total)
                })
                .min()
                .unwrap_or(u32::MAX),
        };
        if errors == u32::MAX {
            return leaf;
        }
        let stump = self.cost(errors, 2);
        if stump.value < leaf.value {
            stump
        } else {
            leaf
        }
    }

    /// Best tree of depth at most two, from the pairwise counts of the
    /// features that split the support. Columns are packed down to the
    /// support's rows first, and columns inducing the same partition of the
    /// support (equal or complementary) are kept once.
    fn best_two_level(&self, support: &Bits, leaf: Cost, pos: u32, total: u32) -> Cost {
        let width = (total as usize).div_ceil(64).max(1);
        let tail = match total % 64 {
            0 => !0u64,
            r => (1u64 << r) - 1,
        };
        let mut labels = Vec::new();
        self.data.labels.compress_into(support, &mut labels);
        let mut packed: Vec<u64> = Vec::with_capacity(self.data.m() * width);
        let mut scratch = Vec::new();
        for col in &self.data.columns {
            col.compress_into(support, &mut scratch);
            if scratch[0] & 1 == 1 {
                for w in scratch.iter_mut() {
                    *w = !*w;
                }
                *scratch.last_mut().unwrap() &= tail;
            }
            let t: u32 = scratch.iter().map(|w| w.count_ones()).sum();
            if t != 0 && t != total {
                packed.extend_from_slice(&scratch);
            }
        }
        let mut order: Vec<&[u64]> = packed.chunks_exact(width).collect();
        order.sort_unstable();
        order.dedup();
        let inside = order;
        let k = inside.len();
        let rt: Vec<u32> = inside.iter().map(|c| c.iter().map(|w| w.count_ones()).sum()).collect();
        let rp: Vec<u32> = inside
            .iter()
            .map(|c| c.iter().zip(&labels).map(|(x, y)| (x & y).count_ones()).sum())
            .collect();
        let counts = SplitCounts {
            rt: &rt,
            rp: &rp,
            total,
            pos,
        };
        let (split_hi, split_lo) = match width {
            1 => counts.second_splits::<1>(&inside, &labels),
            2 => counts.second_splits::<2>(&inside, &labels),
            3 => counts.second_splits::<3>(&inside, &labels),
            4 => counts.second_splits::<4>(&inside, &labels),
            5 => counts.second_splits::<5>(&inside, &labels),
            6 => counts.second_splits::<6>(&inside, &labels),
            7 => counts.second_splits::<7>(&inside, &labels),
            8 => counts.second_splits::<8>(&inside, &labels),
            _ => counts.second_splits_dyn(&inside, &labels),
        };
        let err = |t: u32, p: u32| p.min(t - p);
        let side = |t: u32, p: u32, split: u32| {
            let as_leaf = self.cost(err(t, p), 1);
            if split == u32::MAX {
                return as_leaf;
            }
            let as_split = self.cost(split, 2);
            if as_split.value < as_leaf.value {
                as_split
            } else {
                as_leaf
            }
        };
        let mut best = leaf;
        for i in 0..k {
            debug_assert!(split_hi.len() == k);
            let hi = side(rt[i], rp[i], split_hi[i]);
            let lo = side(total - rt[i], pos - rp[i], split_lo[i]);
            let c = self.combine(lo, hi);
            if c.value < best.value {
                best = c;
            }
        }
        best
    }

    /// What is known about a subproblem without searching: the optimum when
    /// it takes at most one split, otherwise a lower bound. Also returns the
    /// depth the subproblem reduces to.
    fn bound(&self, support: &Bits, depth: usize) -> (Option<Cost>, f64, usize) {
        let (pos, total) = self.counts(support);
        let leaf = self.cost(pos.min(total - pos), 1);
        let depth = self.effective_depth(leaf, depth);
        match depth {
            0 => (Some(leaf), leaf.value, 0),
            1 => {
                let c = self.best_stump(support, leaf, pos, total);
                (Some(c), c.value, 1)
            }
            _ => {
                if let Some(e) = self.dp.get(support).and_then(|v| v.get(depth)) {
                    if let Some(c) = e.exact {
                        return (Some(c), c.value, depth);
                    }
                    if e.lower > 0.0 {
                        let trivial = leaf.value.min(2.0 * self.lambda);
                        return (None, e.lower.max(trivial), depth);
                    }
                }
                // One leaf, one split, or at least three leaves.
                let stump = self.best_stump(support, leaf, pos, total);
                (None, stump.value.min(3.0 * self.lambda), depth)
            }
        }
    }

    fn lower_bound(&self, support: &Bits, depth: usize) -> f64 {
        self.bound(support, depth).1
    }

    /// Optimum of the subproblem if it is at most `ub`, `None` if the optimum
    /// provably exceeds `ub`.
    fn solve(&mut self, support: &Bits, depth: usize, ub: f64) -> Option<Cost> {
        let (exact, _, depth) = self.bound(support, depth);
        if let Some(c) = exact {
            return (c.value <= ub + TOL).then_some(c);
        }
        if let Some(e) = self.dp.get(support).and_then(|v| v.get(depth)) {
            if e.lower > ub + TOL {
                return None;
            }
        }
        // Trees within `ub` have at most `ub / lambda` leaves, which may
        // allow a shallower search.
        let capped = self.depth_within(ub, depth);
        if capped < depth {
            let found = self.solve(support, capped, ub);
            self.record(support, depth, found, ub);
            return found;
        }

        let (pos, total) = self.counts(support);
        let leaf = self.cost(pos.min(total - pos), 1);
        let best = if depth == 2 {
            self.best_two_level(support, leaf, pos, total)
        } else {
            self.best_split(support, depth, ub, leaf)
        };
        if depth == 2 {
            // The kernel is exact regardless of `ub`.
            self.record(support, depth, Some(best), f64::INFINITY);
            return (best.value <= ub + TOL).then_some(best);
        }
        let found = (best.value <= ub + TOL).then_some(best);
        self.record(support, depth, found, ub);
        found
    }

    /// Largest depth a tree of objective at most `ub` can need.
    fn depth_within(&self, ub: f64, depth: usize) -> usize {
        if self.lambda > 0.0 && ub.is_finite() {
            let max_leaves = ((ub + TOL) / self.lambda + 1e-9).floor();
            if max_leaves < (depth + 1) as f64 {
                return (max_leaves.max(1.0) as usize) - 1;
            }
        }
        depth
    }

    /// Memoizes a search outcome: the optimum, or that it exceeds `ub`.
    fn record(&mut self, support: &Bits, depth: usize, found: Option<Cost>, ub: f64) {
        let entries = self.dp.entry(support.clone()).or_default();
        if entries.len() <= depth {
            entries.resize(
                depth + 1,
                DpEntry {
                    exact: None,
                    lower: 0.0,
                },
            );
        }
        let entry = &mut entries[depth];
        match found {
            Some(best) => {
                *entry = DpEntry {
                    exact: Some(best),
                    lower: best.value,
                }
            }
            None => entry.lower = entry.lower.max(ub),
        }
    }

    /// Best tree that splits the support, if it beats `best` and `ub`;
    /// otherwise `best`. Along each chain of nested columns every evaluated
    /// split bounds the others: the bit-1 child grows along the chain and the bit-0 child
    /// shrinks, optima are monotone under inclusion, and adding rows raises an
    /// optimum by at most one error per row.
    fn best_split(&mut self, support: &Bits, depth: usize, ub: f64, mut best: Cost) -> Cost {
        struct Split {
            feature: usize,
            left: Bits,
            right: Bits,
            exact: [Option<Cost>; 2],
            lb: [f64; 2],
            size: [u32; 2],
            done: bool,
        }
        let two_leaves = 2.0 * self.lambda;
        let n = self.n as f64;
        let mut splits = Vec::new();
        for feature in 0..self.data.m() {
            let Some((left, right)) = self.children(support, feature) else {
                continue;
            };
            let (el, ll, _) = self.bound(&left, depth - 1);
            let (er, lr, _) = self.bound(&right, depth - 1);
            let size = [left.count_ones() as u32, right.count_ones() as u32];
            splits.push(Split {
                feature,
                left,
                right,
                exact: [el, er],
                lb: [ll, lr],
                size,
                done: false,
            });
        }
        // Splits sharing a chain, as indices into `splits`; chains are
        // visited ends first, then midpoints of ever smaller gaps.
        let chains = Rc::clone(&self.chains);
        let mut by_feature = vec![usize::MAX; self.data.m()];
        for (i, s) in splits.iter().enumerate() {
            by_feature[s.feature] = i;
        }
        let mut peers: Vec<Vec<usize>> = vec![Vec::new(); splits.len()];
        let mut order = Vec::with_capacity(splits.len());
        for chain in chains.iter() {
            let members: Vec<usize> = chain.iter().map(|&f| by_feature[f]).filter(|&i| i != usize::MAX).collect();
            for &i in &members {
                peers[i] = members.iter().copied().filter(|&j| j != i).collect();
            }
            order.extend(bisection_order(members.len()).into_iter().map(|k| members[k]));
        }

        for &i in &order {
            let limit = ub.min(best.value);
            if two_leaves > limit + TOL {
                break;
            }
            let (mut lb_left, mut lb_right) = (splits[i].lb[0], splits[i].lb[1]);
            let f = splits[i].feature;
            for &j in &peers[i] {
                let o = &splits[j];
                if !o.done {
                    continue;
                }
                let s = &splits[i];
                if o.feature > f {
                    lb_left = lb_left.max(o.lb[0]);
                    lb_right = lb_right.max(o.lb[1] - (o.size[1] - s.size[1]) as f64 / n - TOL);
                } else {
                    lb_right = lb_right.max(o.lb[1]);
                    lb_left = lb_left.max(o.lb[0] - (o.size[0] - s.size[0]) as f64 / n - TOL);
                }
            }
            splits[i].done = true;
            splits[i].lb = [lb_left, lb_right];
            if lb_left + lb_right > limit + TOL || lb_left + lb_right >= best.value {
                continue;
            }
            let left = std::mem::replace(&mut splits[i].left, Bits::zeros(0));
            let right = std::mem::replace(&mut splits[i].right, Bits::zeros(0));
            let l = match splits[i].exact[0] {
                Some(c) => c,
                None => match self.solve(&left, depth - 1, limit - lb_right) {
                    Some(c) => c,
                    None => {
                        splits[i].lb[0] = lb_left.max(limit - lb_right);
                        continue;
                    }
                },
            };
            splits[i].lb[0] = l.value;
            let r = match splits[i].exact[1] {
                Some(c) if l.value + c.value <= limit + TOL => c,
                Some(_) => continue,
                None => match self.solve(&right, depth - 1, limit - l.value) {
                    Some(c) => c,
                    None => {
                        splits[i].lb[1] = lb_right.max(limit - l.value);
                        continue;
                    }
                },
            };
            splits[i].lb[1] = r.value;
            let candidate = self.combine(l, r);
            if candidate.value < best.value {
                best = candidate;
            }
        }
        best
    }

    /// Best objective over trees of depth at most `depth`.
    pub fn min_objective(&mut self, depth: usize) -> f64 {
        let root = Bits::ones(self.n);
        self.solve(&root, depth, f64::INFINITY)
            .expect("unbounded search always succeeds")
            .value
    }

    /// Every subtree of the subproblem with objective at most `budget`,
    /// sorted by objective. With a layout, `support` spans all row blocks.
    fn enumerate(&mut self, support: &Bits, depth: usize, budget: f64) -> Result<(Rc<Vec<Candidate>>, usize)> {
        let depth = self.depth_within(budget, depth);
        let key = (support.clone(), depth as u8);
        if let Some(e) = self.lists.get(&key) {
            if e.budget >= budget {
                let len = e.list.partition_point(|c| c.cost.value <= budget + TOL);
                return Ok((Rc::clone(&e.list), len));
            }
        }

        let base = match &self.layout {
            Some(l) => Cow::Owned(support.prefix_aligned(l.base_len)),
            None => Cow::Borrowed(support),
        };
        let (pos, total) = self.counts(&base);
        let mut out = Vec::new();
        for (label, errors) in [(0u8, pos), (1u8, total - pos)] {
            let c = self.cost(errors, 1);
            if c.value <= budget + TOL {
                let tally = self.push_leaf_tally(support, label);
                out.push(Candidate {
                    cost: c,
                    node: label as u32,
                    tally,
                });
            }
        }

        if depth > 0 && 2.0 * self.lambda <= budget + TOL {
            for feature in 0..self.data.m() {
                let Some((left, right)) = self.children(&base, feature) else {
                    continue;
                };
                let lb_left = self.lower_bound(&left, depth - 1);
                let lb_right = self.lower_bound(&right, depth - 1);
                if lb_left + lb_right > budget + TOL {
                    continue;
                }
                let Some(opt_left) = self.solve(&left, depth - 1, budget - lb_right) else {
                    continue;
                };
                let Some(opt_right) = self.solve(&right, depth - 1, budget - opt_left.value) else {
                    continue;
                };
                let spans = self.layout.as_ref().map(|l| {
                    let col = &l.columns[feature];
                    (support.and_not(col), support.and(col))
                });
                let (span_left, span_right) = match &spans {
                    Some((a, b)) => (a, b),
                    None => (&left, &right),
                };
                let (lefts, nl) = self.enumerate(span_left, depth - 1, budget - opt_right.value)?;
                let (rights, nr) = self.enumerate(span_right, depth - 1, budget - opt_left.value)?;
                for l in &lefts[..nl] {
                    for r in &rights[..nr] {
                        let c = self.combine(l.cost, r.cost);
                        if c.value > budget + TOL {
                            break;
                        }
                        let tally = self.push_split_tally(l, r);
                        self.nodes.push(Node::Split {
                            feature: feature as u32,
                            left: l.node,
                            right: r.node,
                        });
                        out.push(Candidate {
                            cost: c,
                            node: (self.nodes.len() - 1) as u32,
                            tally,
                        });
                    }
                    if out.len() > self.max_models {
                        return Err(RidError::RashomonSetTooLarge {
                            limit: self.max_models,
                            count: out.len(),
                        });
                    }
                }
            }
        }

        out.sort_by(|a, b| a.cost.value.total_cmp(&b.cost.value));
        let list = Rc::new(out);
        let len = list.len();
        self.lists.insert(
            key,
            EnumEntry {
                budget,
                list: Rc::clone(&list),
            },
        );
        Ok((list, len))
    }

    fn materialize(&self, node: u32) -> Tree {
        match self.nodes[node as usize] {
            Node::Leaf(y) => Tree::Leaf(y),
            Node::Split {
                feature,
                left,
                right,
            } => Tree::split(feature as usize, self.materialize(left), self.materialize(right)),
        }
    }
}

/// Errors of a single split whose bit-1 side holds `t` rows, `p` positive.
/// An empty side scores like the leaf.
#[inline(always)]
fn split_errors(t: u32, p: u32, pos: u32, total: u32) -> u32 {
    p.min(t - p) + (pos - p).min(total - t - (pos - p))
}

/// Fewest errors over single splits, with columns laid out contiguously.
fn stump_errors<const W: usize>(flat: &[u64], support: &[u64], labels: &[u64], pos: u32, total: u32) -> u32 {
    let s: [u64; W] = support.try_into().expect("width");
    let mut sy = [0u64; W];
    for w in 0..W {
        sy[w] = s[w] & labels[w];
    }
    flat.chunks_exact(W)
        .map(|c| {
            let (mut t, mut p) = (0, 0);
            for w in 0..W {
                t += (c[w] & s[w]).count_ones();
                p += (c[w] & sy[w]).count_ones();
            }
            split_errors(t, p, pos, total)
        })
        .min()
        .unwrap_or(u32::MAX)
}

/// Per-feature counts on a support, for the two-level kernel.
struct SplitCounts<'a> {
    rt: &'a [u32],
    rp: &'a [u32],
    total: u32,
    pos: u32,
}

impl SplitCounts<'_> {
    /// For every feature, the fewest errors when its bit-1 child (first
    /// vector) or bit-0 child (second) is split once more. A split with an
    /// empty side scores like the leaf, so it never beats it.
    fn second_splits<const W: usize>(&self, cols: &[&[u64]], labels: &[u64]) -> (Vec<u32>, Vec<u32>) {
        let k = cols.len();
        // Word-major copies so the inner loop walks contiguous memory.
        let mut all = vec![[0u64; W]; k];
        let mut pos = vec![[0u64; W]; k];
        for (i, c) in cols.iter().enumerate() {
            for w in 0..W {
                all[i][w] = c[w];
                pos[i][w] = c[w] & labels[w];
            }
        }
        let err = |t: u32, p: u32| p.min(t - p);
        let (rt, rp) = (self.rt, self.rp);
        let mut hi = vec![u32::MAX; k];
        let mut lo = vec![u32::MAX; k];
        let mut cs = vec![0u32; k];
        let mut ps = vec![0u32; k];
        for i in 0..k {
            let (ai, pi) = (all[i], pos[i]);
            for j in i + 1..k {
                let (mut c, mut p) = (0, 0);
                for w in 0..W {
                    c += (ai[w] & all[j][w]).count_ones();
                    p += (pi[w] & all[j][w]).count_ones();
                }
                cs[j] = c;
                ps[j] = p;
            }
            let (ti, qi) = (rt[i], rp[i]);
            let (mut best_hi, mut best_lo) = (hi[i], lo[i]);
            for j in i + 1..k {
                let (c, p) = (cs[j], ps[j]);
                let e11 = err(c, p);
                let e10 = err(ti - c, qi - p);
                let e01 = err(rt[j] - c, rp[j] - p);
                let e00 = err(self.total + c - ti - rt[j], self.pos + p - qi - rp[j]);
                best_hi = best_hi.min(e11 + e10);
                best_lo = best_lo.min(e01 + e00);
                hi[j] = hi[j].min(e11 + e01);
                lo[j] = lo[j].min(e10 + e00);
            }
            hi[i] = best_hi;
            lo[i] = best_lo;
        }
        (hi, lo)
    }

    fn second_splits_dyn(&self, cols: &[&[u64]], labels: &[u64]) -> (Vec<u32>, Vec<u32>) {
        self.scan(cols.len(), |i, j| {
            let (mut c, mut p) = (0, 0);
            for ((x, y), l) in cols[i].iter().zip(cols[j]).zip(labels) {
                let both = x & y;
                c += both.count_ones();
                p += (both & l).count_ones();
            }
            (c, p)
        })
    }

    #[inline(always)]
    fn scan(&self, k: usize, pair: impl Fn(usize, usize) -> (u32, u32)) -> (Vec<u32>, Vec<u32>) {
        let err = |t: u32, p: u32| p.min(t - p);
        let (rt, rp) = (self.rt, self.rp);
        let mut hi = vec![u32::MAX; k];
        let mut lo = vec![u32::MAX; k];
        for i in 0..k {
            for j in i + 1..k {
                let (c, p) = pair(i, j);
                let e11 = err(c, p);
                let e10 = err(rt[i] - c, rp[i] - p);
                let e01 = err(rt[j] - c, rp[j] - p);
                let e00 = err(self.total + c - rt[i] - rt[j], self.pos + p - rp[i] - rp[j]);
                hi[i] = hi[i].min(e11 + e10);
                hi[j] = hi[j].min(e11 + e01);
                lo[i] = lo[i].min(e01 + e00);
                lo[j] = lo[j].min(e10 + e00);
            }
        }
        (hi, lo)
    }
}

fn nested_chains(columns: &[Bits]) -> Vec<Vec<usize>> {
    let mut chains: Vec<Vec<usize>> = Vec::new();
    for (f, col) in columns.iter().enumerate() {
        match chains.last_mut() {
            Some(chain) if columns[*chain.last().unwrap()].and_not_count(col) == 0 => chain.push(f),
            _ => chains.push(vec![f]),
        }
    }
    chains
}

/// Middle first, then midpoints of ever smaller gaps, ends last: central
/// thresholds tend to be the better splits, and good early incumbents prune.
fn bisection_order(len: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(len);
    let mut gaps = std::collections::VecDeque::from([(0, len)]);
    while let Some((a, b)) = gaps.pop_front() {
        if a >= b {
            continue;
        }
        let mid = (a + b) / 2;
        order.push(mid);
        gaps.push_back((a, mid));
        gaps.push_back((mid + 1, b));
    }
    order
}

/// Exact minimum of the regularized objective over trees of depth at most `depth`.
pub fn min_objective(d: &BinDataset, lambda: f64, depth: usize) -> f64 {
    Searcher::new(d, lambda).min_objective(depth)
}

/// All trees of depth at most `depth` whose objective is within `epsilon` of
/// the minimum. Trees count as distinct when their structure differs, even if
/// they predict identically.
pub fn enumerate_rset(
    d: &BinDataset,
    epsilon: f64,
    lambda: f64,
    depth: usize,
    max_models: usize,
) -> Result<RashomonSet> {
    check_params(epsilon, lambda, depth)?;
    let mut searcher = Searcher::new(d, lambda);
    searcher.max_models = max_models;
    let root = Bits::ones(d.n());
    let dp_min = searcher.min_objective(depth);
    let (list, len) = searcher.enumerate(&root, depth, dp_min + epsilon + MEMBERSHIP_TOL)?;

    let mut members: Vec<(f64, String, Tree)> = list[..len]
        .iter()
        .map(|c| {
            let tree = searcher.materialize(c.node);
            (c.cost.value, tree.canonical(), tree)
        })
        .collect();
    let min = members
        .iter()
        .map(|m| m.0)
        .fold(f64::INFINITY, f64::min);
    members.retain(|m| m.0 <= min + epsilon + MEMBERSHIP_TOL);
    if members.len() > max_models {
        return Err(RidError::RashomonSetTooLarge {
            limit: max_models,
            count: members.len(),
        });
    }
    members.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let (objectives, trees) = members.into_iter().map(|(v, _, t)| (v, t)).unzip();
    Ok(RashomonSet {
        trees,
        objectives,
        min_objective: min,
        epsilon,
        lambda,
        depth_bound: depth,
        dataset_fingerprint: fingerprint_bin(d),
        map: d.map.clone(),
    })
}

/// Size of a Rashomon set and the importance vectors of its members, grouped:
/// each distinct vector appears once with its member count, in lexicographic
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct SetImportances {
    pub rset_size: usize,
    pub min_objective: f64,
    pub vectors: Vec<(Vec<f64>, usize)>,
}

impl SetImportances {
    pub fn from_values(rset: &RashomonSet, values: Vec<Vec<f64>>) -> Self {
        SetImportances {
            rset_size: rset.len(),
            min_objective: rset.min_objective,
            vectors: group_vectors(values.into_iter().map(|v| (v, 1))),
        }
    }
}

fn group_vectors(items: impl Iterator<Item = (Vec<f64>, usize)>) -> Vec<(Vec<f64>, usize)> {
    let mut items: Vec<(Vec<f64>, usize)> = items.collect();
    let cmp = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    };
    items.sort_by(|a, b| cmp(&a.0, &b.0));
    let mut out: Vec<(Vec<f64>, usize)> = Vec::new();
    for (v, c) in items {
        match out.last_mut() {
            Some(last) if cmp(&last.0, &v).is_eq() => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out
}

/// Same members as [`enumerate_rset`], but instead of building the trees it
/// tallies each member's errors on the scrambled datasets of `design` during
/// the search. `design` must be built from the raw dataset `d` was binarized
/// from, with `d.map`.
pub fn enumerate_importances(
    d: &BinDataset,
    design: &SwitchDesign,
    epsilon: f64,
    lambda: f64,
    depth: usize,
    max_models: usize,
) -> Result<SetImportances> {
    check_params(epsilon, lambda, depth)?;
    if design.switched.iter().flatten().any(|cols| cols.len() != d.m()) || design.base_cols.len() != d.m() {
        return Err(RidError::InvalidArgument("switch design does not match the split columns".into()));
    }
    let mut searcher = Searcher::new(d, lambda);
    searcher.max_models = max_models;
    let layout = Layout::new(d, design);
    let root = layout.root.clone();
    searcher.layout = Some(layout);
    let dp_min = searcher.min_objective(depth);
    let (list, len) = searcher.enumerate(&root, depth, dp_min + epsilon + MEMBERSHIP_TOL)?;
    let members = &list[..len];
    let min = members
        .iter()
        .map(|c| c.cost.value)
        .fold(f64::INFINITY, f64::min);

    let replicates = design.replicates;
    let mut groups: FxHashMap<&[u32], usize> = FxHashMap::default();
    let mut size = 0;
    for c in members.iter().filter(|c| c.cost.value <= min + epsilon + MEMBERSHIP_TOL) {
        *groups.entry(searcher.tally(c)).or_insert(0) += 1;
        size += 1;
    }
    if size > max_models {
        return Err(RidError::RashomonSetTooLarge {
            limit: max_models,
            count: size,
        });
    }
    let vectors = group_vectors(groups.into_iter().map(|(t, count)| {
        let baseline = t[0] as usize;
        let values = t[1..]
            .chunks(replicates)
            .map(|sw| design.value(baseline, sw.iter().map(|&e| e as usize).sum()))
            .collect();
        (values, count)
    }));
    Ok(SetImportances {
        rset_size: size,
        min_objective: min,
        vectors,
    })
}

fn check_params(epsilon: f64, lambda: f64, depth: usize) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(RidError::InvalidArgument("epsilon must be positive".into()));
    }
    if !(lambda >= 0.0) {
        return Err(RidError::InvalidArgument("lambda must be non-negative".into()));
    }
    if depth > u8::MAX as usize {
        return Err(RidError::InvalidArgument("depth bound too large".into()));
    }
    Ok(())
}

fn fingerprint_bin(d: &BinDataset) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |w: u64| {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(d.n() as u64);
    eat(d.m() as u64);
    for c in &d.columns {
        c.words().iter().for_each(|&w| eat(w));
    }
    d.labels.words().iter().for_each(|&w| eat(w));
    h
}

/// Importance of every variable for every member: `out[tree][var]`.
pub fn importances(rset: &RashomonSet, d: &Dataset, metric: &dyn Metric, seed: Seed) -> Result<Vec<Vec<f64>>> {
    metric.tree_importances(&rset.trees, &rset.map, d, seed)
}

/// Range of the metric for `var` across the set.
pub fn mcr(rset: &RashomonSet, d: &Dataset, var: usize, metric: &dyn Metric, seed: Seed) -> Result<Interval> {
    if var >= d.p() {
        return Err(RidError::InvalidArgument(format!("variable {var} out of range")));
    }
    let values = importances(rset, d, metric, seed)?;
    interval_of(values.iter().map(|v| v[var]))
}

/// Ranges for all variables at once.
pub fn mcr_all(rset: &RashomonSet, d: &Dataset, metric: &dyn Metric, seed: Seed) -> Result<Vec<Interval>> {
    let values = importances(rset, d, metric, seed)?;
    (0..d.p())
        .map(|j| interval_of(values.iter().map(|v| v[j])))
        .collect()
}

fn interval_of(values: impl Iterator<Item = f64>) -> Result<Interval> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if lo > hi {
        return Err(RidError::Consistency("empty rashomon set".into()));
    }
    Ok(Interval { lo, hi })
}

/// Per-variable lists of metric values over the set: `out[var][tree]`.
pub fn vic(rset: &RashomonSet, d: &Dataset, metric: &dyn Metric, seed: Seed) -> Result<Vec<Vec<f64>>> {
    let values = importances(rset, d, metric, seed)?;
    Ok((0..d.p())
        .map(|j| values.iter().map(|v| v[j]).collect())
        .collect())
}
