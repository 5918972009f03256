//! Binary decision trees grown level by level over presorted columns.
//!
//! Each level costs one pass per feature over the presorted row order: every
//! row carries the id of the frontier node it currently sits in, so all nodes
//! of a level are scanned together. Three split criteria share the builder:
//! binary Gini impurity, squared error, and the second-order (Newton) gain
//! used by gradient boosting.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Criterion {
    /// Targets in {0, 1}; leaf value is the (weighted) positive fraction.
    Gini,
    /// Leaf value is the weighted mean target.
    SquaredError,
    /// Targets are (gradient, hessian) pairs; leaf value is `-G / (H + l2)`.
    Newton { l2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Third,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => (d as f64).sqrt().round() as usize,
            MaxFeatures::Third => d / 3,
            MaxFeatures::Count(k) => k,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    /// Minimum total row weight on each side of a split.
    pub min_leaf: f64,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1.0,
            max_features: MaxFeatures::All,
        }
    }
}

/// Column-major copy of a matrix with each column's row order sorted by value.
#[derive(Debug, Clone)]
pub struct Presorted {
    columns: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
    n_rows: usize,
}

impl Presorted {
    pub fn new(x: &FeatureMatrix) -> Result<Self> {
        if x.has_missing() {
            return Err(Error::invalid("tree learners need fully observed inputs"));
        }
        if x.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tree learners need finite inputs"));
        }
        let columns = x.columns();
        let order = columns
            .iter()
            .map(|col| {
                let mut o: Vec<u32> = (0..col.len() as u32).collect();
                o.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Ok(Self {
            columns,
            order,
            n_rows: x.n_rows(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn value(&self, feature: usize, row: usize) -> f64 {
        self.columns[feature][row]
    }
}

/// Per-row targets. `weight` is a multiplicity (bootstrap count, 0 = absent).
/// For Gini / squared error `a` is the target; for Newton `a` is the gradient
/// and `b` the hessian.
pub struct Targets<'a> {
    pub weight: &'a [f64],
    pub a: &'a [f64],
    pub b: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    w: f64,
    a: f64,
    b: f64,
}

impl Stats {
    fn add(&mut self, w: f64, a: f64, b: f64) {
        self.w += w;
        self.a += w * a;
        self.b += w * b;
    }

    fn minus(self, o: Stats) -> Stats {
        Stats {
            w: self.w - o.w,
            a: self.a - o.a,
            b: self.b - o.b,
        }
    }
}

impl Criterion {
    /// Node score; the gain of a split is `score(l) + score(r) - score(parent)`.
    fn score(self, s: Stats) -> f64 {
        if s.w <= 0.0 {
            return 0.0;
        }
        match self {
            // -(w * 2 p (1 - p)) with p = a / w
            Criterion::Gini => -2.0 * s.a * (s.w - s.a) / s.w,
            Criterion::SquaredError => s.a * s.a / s.w,
            Criterion::Newton { l2 } => s.a * s.a / (s.b + l2),
        }
    }

    fn leaf_value(self, s: Stats) -> f64 {
        match self {
            Criterion::Gini | Criterion::SquaredError => {
                if s.w > 0.0 {
                    s.a / s.w
                } else {
                    0.0
                }
            }
            Criterion::Newton { l2 } => {
                let denom = s.b + l2;
                if denom > 0.0 {
                    -s.a / denom
                } else {
                    0.0
                }
            }
        }
    }
}

/// Flattened node: `feature < 0` marks a leaf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(rename = "f")]
    pub feature: i32,
    #[serde(rename = "t")]
    pub threshold: f64,
    #[serde(rename = "l")]
    pub left: u32,
    #[serde(rename = "r")]
    pub right: u32,
    #[serde(rename = "v")]
    pub value: f64,
}

impl Node {
    fn leaf(value: f64) -> Self {
        Self {
            feature: -1,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature < 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
    left: Stats,
}

struct Frontier {
    node: usize,
    stats: Stats,
    depth: usize,
    features: Option<Vec<bool>>,
}

const NONE: u32 = u32::MAX;

impl Tree {
    /// Grows one tree. `importance`, when given, receives the summed split
    /// gain per feature (for Gini: `N_t i(t) - N_l i(l) - N_r i(r)`).
    pub fn fit<R: Rng>(
        data: &Presorted,
        targets: &Targets<'_>,
        criterion: Criterion,
        params: &TreeParams,
        rng: &mut R,
        mut importance: Option<&mut [f64]>,
    ) -> Tree {
        let n = data.n_rows();
        let d = data.n_features();
        let k_features = params.max_features.resolve(d);

        let mut slot_of_row = vec![NONE; n];
        let mut root = Stats::default();
        for r in 0..n {
            let w = targets.weight[r];
            if w > 0.0 {
                root.add(w, targets.a[r], targets.b[r]);
                slot_of_row[r] = 0;
            }
        }
        let mut nodes = vec![Node::leaf(criterion.leaf_value(root))];
        let mut frontier = vec![Frontier {
            node: 0,
            stats: root,
            depth: 0,
            features: None,
        }];

        let mut left: Vec<Stats> = Vec::new();
        let mut last: Vec<f64> = Vec::new();
        let mut best: Vec<Option<Best>> = Vec::new();

        while !frontier.is_empty() {
            let m = frontier.len();
            let mut active = vec![false; m];
            for (s, fr) in frontier.iter_mut().enumerate() {
                let depth_ok = params.max_depth.is_none_or(|md| fr.depth < md);
                active[s] = depth_ok && fr.stats.w >= 2.0 * params.min_leaf;
                if active[s] && k_features < d {
                    let mut mask = vec![false; d];
                    for j in index::sample(rng, d, k_features) {
                        mask[j] = true;
                    }
                    fr.features = Some(mask);
                }
            }

            best.clear();
            best.resize(m, None);
            if active.iter().any(|&a| a) {
                for f in 0..d {
                    left.clear();
                    left.resize(m, Stats::default());
                    last.clear();
                    last.resize(m, f64::NAN);
                    let col = &data.columns[f];
                    for &r in &data.order[f] {
                        let r = r as usize;
                        let s = slot_of_row[r];
                        if s == NONE {
                            continue;
                        }
                        let s = s as usize;
                        if !active[s] {
                            continue;
                        }
                        if let Some(mask) = &frontier[s].features {
                            if !mask[f] {
                                continue;
                            }
                        }
                        let v = col[r];
                        let l = left[s];
                        if l.w > 0.0 && v > last[s] {
                            let total = frontier[s].stats;
                            let rstats = total.minus(l);
                            if l.w >= params.min_leaf && rstats.w >= params.min_leaf {
                                let gain = criterion.score(l) + criterion.score(rstats)
                                    - criterion.score(total);
                                let tol = 1e-12 * criterion.score(total).abs().max(1.0);
                                let better = match &best[s] {
                                    None => gain > tol,
                                    Some(b) => gain > b.gain,
                                };
                                if better {
                                    best[s] = Some(Best {
                                        gain,
                                        feature: f,
                                        threshold: last[s],
                                        left: l,
                                    });
                                }
                            }
                        }
                        left[s].add(targets.weight[r], targets.a[r], targets.b[r]);
                        last[s] = v;
                    }
                }
            }

            // Materialize the splits and build the next frontier.
            let mut next = Vec::new();
            let mut child_slots = vec![(NONE, NONE); m];
            for (s, fr) in frontier.iter().enumerate() {
                let Some(b) = best[s] else { continue };
                let right = fr.stats.minus(b.left);
                let li = nodes.len();
                nodes.push(Node::leaf(criterion.leaf_value(b.left)));
                nodes.push(Node::leaf(criterion.leaf_value(right)));
                let node = &mut nodes[fr.node];
                node.feature = b.feature as i32;
                node.threshold = b.threshold;
                node.left = li as u32;
                node.right = (li + 1) as u32;
                if let Some(imp) = importance.as_deref_mut() {
                    imp[b.feature] += b.gain;
                }
                child_slots[s] = (next.len() as u32, next.len() as u32 + 1);
                next.push(Frontier {
                    node: li,
                    stats: b.left,
                    depth: fr.depth + 1,
                    features: None,
                });
                next.push(Frontier {
                    node: li + 1,
                    stats: right,
                    depth: fr.depth + 1,
                    features: None,
                });
            }
            for r in 0..n {
                let s = slot_of_row[r];
                if s == NONE {
                    continue;
                }
                let s = s as usize;
                slot_of_row[r] = match best[s] {
                    Some(b) => {
                        if data.columns[b.feature][r] <= b.threshold {
                            child_slots[s].0
                        } else {
                            child_slots[s].1
                        }
                    }
                    None => NONE,
                };
            }
            frontier = next;
        }
        Tree { nodes }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.is_leaf() {
                return node.value;
            }
            i = if row[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn fit_simple(x: Vec<Vec<f64>>, y: Vec<f64>, criterion: Criterion, params: TreeParams) -> (Tree, Vec<f64>) {
        let names = (0..x[0].len()).map(|j| format!("x{j}")).collect();
        let m = FeatureMatrix::from_rows(names, &x).unwrap();
        let pre = Presorted::new(&m).unwrap();
        let w = vec![1.0; y.len()];
        let b: Vec<f64> = y.iter().map(|v| v * v).collect();
        let mut imp = vec![0.0; m.n_cols()];
        let t = Tree::fit(
            &pre,
            &Targets { weight: &w, a: &y, b: &b },
            criterion,
            &params,
            &mut seed::rng(0),
            Some(&mut imp),
        );
        (t, imp)
    }

    #[test]
    fn gini_finds_the_separating_threshold() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, ((i * 7) % 10) as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| if i >= 6 { 1.0 } else { 0.0 }).collect();
        let (t, imp) = fit_simple(x, y, Criterion::Gini, TreeParams::default());
        assert_eq!(t.nodes[0].feature, 0);
        assert_eq!(t.nodes[0].threshold, 5.0);
        assert_eq!(t.n_leaves(), 2);
        // Root impurity-weighted: 10 * 2 * 0.4 * 0.6 = 4.8; children pure.
        assert!((imp[0] - 4.8).abs() < 1e-12);
        assert_eq!(imp[1], 0.0);
        assert_eq!(t.predict(&[2.0, 0.0]), 0.0);
        assert_eq!(t.predict(&[8.0, 0.0]), 1.0);
    }

    #[test]
    fn regression_tree_fits_a_step() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 3.0 }).collect();
        let (t, _) = fit_simple(x, y, Criterion::SquaredError, TreeParams::default());
        assert_eq!(t.predict(&[3.0]), 1.0);
        assert_eq!(t.predict(&[15.0]), 3.0);
    }

    #[test]
    fn depth_and_leaf_limits_hold() {
        let x: Vec<Vec<f64>> = (0..64).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..64).map(|i| (i % 2) as f64).collect();
        let params = TreeParams {
            max_depth: Some(3),
            min_leaf: 5.0,
            max_features: MaxFeatures::All,
        };
        let (t, _) = fit_simple(x, y, Criterion::SquaredError, params);
        assert!(t.depth() <= 3);
    }

    #[test]
    fn duplicate_values_never_split_between_equal_rows() {
        let x: Vec<Vec<f64>> = vec![vec![1.0], vec![1.0], vec![1.0], vec![2.0]];
        let y = vec![0.0, 1.0, 0.0, 1.0];
        let (t, _) = fit_simple(x, y, Criterion::Gini, TreeParams::default());
        assert_eq!(t.nodes[0].threshold, 1.0);
        assert!(t.nodes[t.nodes[0].left as usize].is_leaf());
    }

    #[test]
    fn newton_leaf_is_damped_newton_step() {
        let x: Vec<Vec<f64>> = vec![vec![0.0], vec![1.0]];
        let g = vec![0.5, 0.5];
        let h = vec![0.25, 0.25];
        let m = FeatureMatrix::from_rows(vec!["x".into()], &x).unwrap();
        let pre = Presorted::new(&m).unwrap();
        let t = Tree::fit(
            &pre,
            &Targets { weight: &[1.0, 1.0], a: &g, b: &h },
            Criterion::Newton { l2: 1.0 },
            &TreeParams::default(),
            &mut seed::rng(0),
            None,
        );
        assert_eq!(t.n_leaves(), 1);
        assert!((t.predict(&[0.0]) - (-1.0 / 1.5)).abs() < 1e-15);
    }
}
