//! Bagged regression trees.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureSet;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::textfmt::{parse, LineReader};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Features tried per split; `None` means `ceil(p / 3)`.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            min_leaf: 5,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn mtry_for(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 || self.mtry == Some(0) {
            return Err(Error::Config(format!(
                "forest needs n_trees, min_leaf and mtry >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    /// `x[feature] <= threshold` goes left (the next node in preorder),
    /// otherwise to node index `right`.
    Split {
        feature: usize,
        threshold: f64,
        right: usize,
    },
    Leaf(f64),
}

/// Regression tree stored as a preorder node list.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf(value)],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => i = if x[feature] <= threshold { i + 1 } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> (usize, usize) {
            match nodes[i] {
                Node::Leaf(_) => (0, i + 1),
                Node::Split { right, .. } => {
                    let (l, _) = walk(nodes, i + 1);
                    let (r, end) = walk(nodes, right);
                    (1 + l.max(r), end)
                }
            }
        }
        walk(&self.nodes, 0).0
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf(_) => None,
            })
            .max()
    }
}

/// Running mean; exact for identical values and inside [min, max] of the
/// inputs.
fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut m, mut lo, mut hi) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
    for (k, v) in values.into_iter().enumerate() {
        m += (v - m) / (k + 1) as f64;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    m.clamp(lo, hi)
}

struct Builder<'a> {
    /// Column-major copy of the sampled rows: `cols[f][pos]`.
    cols: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Per feature, sample positions sorted by that feature; every node
    /// owns the same `[lo, hi)` range in each list.
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    cfg: &'a ForestConfig,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn build(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut impl Rng) {
        let ys = self.order[0][lo..hi].iter().map(|&p| self.y[p as usize]);
        let first = self.y[self.order[0][lo] as usize];
        let pure = self.order[0][lo..hi]
            .iter()
            .all(|&p| self.y[p as usize] == first);
        let leaf_value = if pure { first } else { mean(ys) };
        let n = hi - lo;
        let depth_ok = self.cfg.max_depth.is_none_or(|d| depth < d);
        let split = if pure || n < 2 * self.cfg.min_leaf || !depth_ok {
            None
        } else {
            self.best_split(lo, hi, rng)
        };
        let Some((feature, threshold, n_left)) = split else {
            self.nodes.push(Node::Leaf(leaf_value));
            return;
        };
        let me = self.nodes.len();
        self.nodes.push(Node::Split {
            feature,
            threshold,
            right: 0,
        });
        for &p in &self.order[feature][lo..hi] {
            self.goes_left[p as usize] = self.cols[feature][p as usize] <= threshold;
        }
        for list in &mut self.order {
            let slice = &mut list[lo..hi];
            self.scratch.clear();
            let mut w = 0;
            for i in 0..slice.len() {
                let p = slice[i];
                if self.goes_left[p as usize] {
                    slice[w] = p;
                    w += 1;
                } else {
                    self.scratch.push(p);
                }
            }
            slice[w..].copy_from_slice(&self.scratch);
        }
        let mid = lo + n_left;
        self.build(lo, mid, depth + 1, rng);
        let right = self.nodes.len();
        if let Node::Split { right: r, .. } = &mut self.nodes[me] {
            *r = right;
        }
        self.build(mid, hi, depth + 1, rng);
    }

    /// Maximizes the variance reduction over `mtry` features that are not
    /// constant within the node. Returns (feature, threshold, left count).
    fn best_split(&self, lo: usize, hi: usize, rng: &mut impl Rng) -> Option<(usize, f64, usize)> {
        let p = self.cols.len();
        let mut features: Vec<usize> = (0..p).collect();
        features.shuffle(rng);
        let min_leaf = self.cfg.min_leaf;
        let n = hi - lo;
        let total: f64 = self.order[0][lo..hi].iter().map(|&q| self.y[q as usize]).sum();
        let mut best: Option<(f64, usize, f64, usize)> = None;
        let mut tried = 0;
        for f in features {
            if tried == self.mtry {
                break;
            }
            let idx = &self.order[f][lo..hi];
            let col = &self.cols[f];
            if col[idx[0] as usize] == col[idx[n - 1] as usize] {
                continue;
            }
            tried += 1;
            let mut left_sum = 0.0;
            for i in 0..n - 1 {
                left_sum += self.y[idx[i] as usize];
                let nl = i + 1;
                if nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let (a, b) = (col[idx[i] as usize], col[idx[i + 1] as usize]);
                if a == b {
                    continue;
                }
                let right_sum = total - left_sum;
                let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
                if best.is_none_or(|(s, ..)| score > s) {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((score, f, t, nl));
                }
            }
        }
        best.map(|(_, f, t, nl)| (f, t, nl))
    }
}

pub fn train_tree(data: &FeatureSet, sample: &[usize], cfg: &ForestConfig, rng: &mut impl Rng) -> RegressionTree {
    let p = data.dim();
    let mut cols = vec![Vec::with_capacity(sample.len()); p];
    for &i in sample {
        for (c, v) in cols.iter_mut().zip(data.row(i)) {
            c.push(*v);
        }
    }
    let y: Vec<f64> = sample.iter().map(|&i| data.target(i)).collect();
    let order = cols
        .iter()
        .map(|c| {
            let mut o: Vec<u32> = (0..sample.len() as u32).collect();
            o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]));
            o
        })
        .collect();
    let mut b = Builder {
        cols,
        y,
        order: if p == 0 { vec![(0..sample.len() as u32).collect()] } else { order },
        goes_left: vec![false; sample.len()],
        scratch: Vec::new(),
        cfg,
        mtry: cfg.mtry_for(p),
        nodes: Vec::new(),
    };
    b.build(0, sample.len(), 0, rng);
    RegressionTree { nodes: b.nodes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    dim: usize,
    trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn from_trees(dim: usize, trees: Vec<RegressionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        if let Some(f) = trees.iter().filter_map(RegressionTree::max_feature).max() {
            if f >= dim {
                return Err(Error::invalid(format!("tree splits on feature {f} of {dim}")));
            }
        }
        Ok(Self { dim, trees })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(mean(self.trees.iter().map(|t| t.predict(x))))
    }

    pub fn predict(&self, set: &FeatureSet) -> Result<Vec<f64>> {
        if set.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: set.dim(),
            });
        }
        set.rows().map(|r| self.predict_one(r)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("tireforce-forest 1\n");
        let _ = writeln!(s, "features {}", self.dim);
        let _ = writeln!(s, "trees {}", self.trees.len());
        for (i, t) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree {i} {}", t.nodes.len());
            for n in &t.nodes {
                match n {
                    Node::Split {
                        feature, threshold, ..
                    } => {
                        let _ = writeln!(s, "N {feature} {threshold}");
                    }
                    Node::Leaf(v) => {
                        let _ = writeln!(s, "L {v}");
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = LineReader::new(text);
        Self::read(&mut r)
    }

    pub(crate) fn read(r: &mut LineReader<'_>) -> Result<Self> {
        if r.expect("tireforce-forest")? != ["1"] {
            return Err(Error::format("unsupported forest format version"));
        }
        let single = |v: Vec<&str>| -> Result<usize> {
            match v[..] {
                [x] => parse(x),
                _ => Err(Error::format("expected one value")),
            }
        };
        let dim = single(r.expect("features")?)?;
        let n_trees = single(r.expect("trees")?)?;
        let mut trees = Vec::with_capacity(n_trees);
        for t in 0..n_trees {
            let head = r.expect("tree")?;
            let (idx, count): (usize, usize) = match head[..] {
                [a, b] => (parse(a)?, parse(b)?),
                _ => return Err(Error::format("bad tree header")),
            };
            if idx != t {
                return Err(Error::format(format!("expected tree {t}, found {idx}")));
            }
            let mut nodes = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, fields) = r.next_fields()?;
                nodes.push(match fields[..] {
                    ["N", f, th] => Node::Split {
                        feature: parse(f)?,
                        threshold: parse(th)?,
                        right: 0,
                    },
                    ["L", v] => Node::Leaf(parse(v)?),
                    _ => return Err(Error::format(format!("line {n}: bad node"))),
                });
            }
            link_preorder(&mut nodes)?;
            trees.push(RegressionTree { nodes });
        }
        Self::from_trees(dim, trees)
    }
}

/// Fills in right-child indices of a preorder list.
fn link_preorder(nodes: &mut [Node]) -> Result<()> {
    fn walk(nodes: &mut [Node], i: usize) -> Result<usize> {
        match nodes.get(i) {
            None => Err(Error::format("truncated tree")),
            Some(Node::Leaf(_)) => Ok(i + 1),
            Some(Node::Split { .. }) => {
                let right = walk(nodes, i + 1)?;
                if let Node::Split { right: r, .. } = &mut nodes[i] {
                    *r = right;
                }
                walk(nodes, right)
            }
        }
    }
    if walk(nodes, 0)? != nodes.len() {
        return Err(Error::format("trailing nodes after tree"));
    }
    Ok(())
}

/// Each tree draws its bootstrap sample and split features from its own
/// stream of `cfg.seed`.
pub fn train_forest(train: &FeatureSet, cfg: &ForestConfig) -> Result<Forest> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("cannot train a forest on zero samples"));
    }
    let n = train.len();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = stream_rng(cfg.seed, t as u64);
            let sample: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            train_tree(train, &sample, cfg, &mut rng)
        })
        .collect();
    Forest::from_trees(train.dim(), trees)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64, f: impl Fn(&[f64]) -> f64) -> FeatureSet {
        let mut rng = stream_rng(seed, 0);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| f(r)).collect();
        FeatureSet::from_rows(&rows, &y).unwrap()
    }

    #[test]
    fn constant_target_predicted_exactly() {
        let data = toy(100, 1, |_| 0.1);
        let f = train_forest(&data, &ForestConfig { n_trees: 10, ..ForestConfig::default() }).unwrap();
        let q = toy(50, 2, |_| 0.0);
        assert!(f.predict(&q).unwrap().iter().all(|&p| p == 0.1));
        assert!(f.trees().iter().all(|t| t.nodes().len() == 1));
    }

    #[test]
    fn fully_grown_tree_memorizes() {
        let data = toy(20, 3, |x| x[0] * 3.0 + x[1] * x[2]);
        let cfg = ForestConfig {
            n_trees: 1,
            min_leaf: 1,
            mtry: Some(4),
            bootstrap: false,
            ..ForestConfig::default()
        };
        let f = train_forest(&data, &cfg).unwrap();
        for (i, x) in data.rows().enumerate() {
            assert_eq!(f.predict_one(x).unwrap(), data.target(i));
        }
        let leaf = f.trees()[0].predict(data.row(5));
        assert_eq!(f.predict_one(data.row(5)).unwrap(), leaf);
    }

    #[test]
    fn predictions_bounded_by_training_labels() {
        let data = toy(300, 4, |x| 50.0 * x[0] - 20.0 * x[3]);
        let f = train_forest(&data, &ForestConfig { n_trees: 20, ..ForestConfig::default() }).unwrap();
        let r = crate::preprocess::Range::of(data.targets().iter().copied());
        let mut rng = stream_rng(5, 0);
        for _ in 0..2000 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
            assert!(r.contains(f.predict_one(&x).unwrap()));
        }
    }

    #[test]
    fn tree_order_and_duplicates() {
        let data = toy(200, 6, |x| x[1].sin());
        let f = train_forest(&data, &ForestConfig { n_trees: 7, ..ForestConfig::default() }).unwrap();
        let mut rev = f.trees().to_vec();
        rev.reverse();
        let g = Forest::from_trees(4, rev).unwrap();
        let q = toy(40, 7, |_| 0.0);
        for x in q.rows() {
            let (a, b) = (f.predict_one(x).unwrap(), g.predict_one(x).unwrap());
            assert!((a - b).abs() < 1e-12);
        }
        let mut dup = f.trees().to_vec();
        dup.push(f.trees()[2].clone());
        let h = Forest::from_trees(4, dup).unwrap();
        for x in q.rows() {
            let t = f.trees()[2].predict(x);
            let (before, after) = (f.predict_one(x).unwrap(), h.predict_one(x).unwrap());
            assert!((after - t).abs() <= (before - t).abs() + 1e-12);
        }
    }

    #[test]
    fn seeded_and_round_trips() {
        let data = toy(150, 8, |x| x[0] * x[1]);
        let cfg = ForestConfig { n_trees: 5, seed: 9, ..ForestConfig::default() };
        let a = train_forest(&data, &cfg).unwrap();
        assert_eq!(a, train_forest(&data, &cfg).unwrap());
        assert_ne!(a, train_forest(&data, &ForestConfig { seed: 10, ..cfg.clone() }).unwrap());
        let back = Forest::from_text(&a.to_text()).unwrap();
        assert_eq!(back, a);
        assert!(a.predict_one(&[0.0; 3]).is_err());
        assert!(Forest::from_text("tireforce-forest 1\nfeatures 2\ntrees 1\ntree 0 1\nN 0 0.5\n").is_err());
    }

    #[test]
    fn depth_limit_is_respected() {
        let data = toy(200, 11, |x| x[0]);
        let cfg = ForestConfig { n_trees: 3, max_depth: Some(3), ..ForestConfig::default() };
        let f = train_forest(&data, &cfg).unwrap();
        assert!(f.trees().iter().all(|t| t.depth() <= 3));
        assert_eq!(ForestConfig::default().mtry_for(142), 48);
        assert_eq!(ForestConfig::default().mtry_for(213), 71);
    }
}
