//! Extremely randomized trees for multi-output regression.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{ensure, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EtrParams {
    pub n_trees: usize,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
    /// Features drawn per split; `None` means `⌈√n⌉`.
    pub n_candidate_features: Option<usize>,
    pub seed: u64,
}

impl Default for EtrParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_samples_split: 5,
            max_depth: None,
            n_candidate_features: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Index of the leaf's mean target vector.
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// `leaves × q`.
    pub values: Array2<f64>,
}

impl Tree {
    fn leaf_for(&self, z: ArrayView1<f64>) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if z[feature] < threshold { left } else { right },
                Node::Leaf(v) => return v,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf(_) => 0,
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtrModel {
    pub params: EtrParams,
    pub input_dim: usize,
    pub output_dim: usize,
    pub trees: Vec<Tree>,
}

/// Per-tree seed, independent of the order in which trees are built.
fn tree_seed(master: u64, tree: usize) -> u64 {
    let mut z = master ^ (tree as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl EtrModel {
    pub fn fit(latents: ArrayView2<f64>, targets: ArrayView2<f64>, params: &EtrParams) -> Result<Self> {
        let (samples, n) = latents.dim();
        if targets.nrows() != samples {
            return Err(Error::DimensionMismatch {
                expected: samples,
                got: targets.nrows(),
            });
        }
        ensure(params.n_trees >= 1, || "need at least one tree".into())?;
        ensure(params.min_samples_split >= 2, || "min_samples_split must be at least 2".into())?;
        ensure(samples >= params.min_samples_split, || {
            format!(
                "{samples} samples is fewer than min_samples_split = {}",
                params.min_samples_split
            )
        })?;
        ensure(n >= 1 && targets.ncols() >= 1, || "need features and targets".into())?;
        ensure(
            latents.iter().chain(targets.iter()).all(|v| v.is_finite()),
            || "tree inputs must be finite".into(),
        )?;
        let k = params
            .n_candidate_features
            .unwrap_or_else(|| (n as f64).sqrt().ceil() as usize)
            .clamp(1, n);
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut builder = Builder {
                    x: latents,
                    y: targets,
                    params,
                    k,
                    rng: ChaCha8Rng::seed_from_u64(tree_seed(params.seed, t)),
                    nodes: Vec::new(),
                    values: Vec::new(),
                };
                let mut idx: Vec<usize> = (0..samples).collect();
                builder.grow(&mut idx, 0);
                let q = targets.ncols();
                let leaves = builder.values.len() / q;
                Tree {
                    nodes: builder.nodes,
                    values: Array2::from_shape_vec((leaves, q), builder.values).expect("leaf shape"),
                }
            })
            .collect();
        Ok(Self {
            params: params.clone(),
            input_dim: n,
            output_dim: targets.ncols(),
            trees,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Mean over trees of the reached leaf vectors.
    pub fn predict(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        if z.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: z.len(),
            });
        }
        let mut out = Array1::<f64>::zeros(self.output_dim);
        for tree in &self.trees {
            out += &tree.values.row(tree.leaf_for(z));
        }
        out /= self.trees.len() as f64;
        Ok(out)
    }

    pub fn predict_rows(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        if z.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: z.ncols(),
            });
        }
        let rows: Vec<Array1<f64>> = (0..z.nrows())
            .into_par_iter()
            .map(|i| self.predict(z.row(i)).expect("checked dims"))
            .collect();
        let mut out = Array2::<f64>::zeros((z.nrows(), self.output_dim));
        for (mut dst, src) in out.outer_iter_mut().zip(rows) {
            dst.assign(&src);
        }
        Ok(out)
    }
}

struct Builder<'a, R: Rng> {
    x: ArrayView2<'a, f64>,
    y: ArrayView2<'a, f64>,
    params: &'a EtrParams,
    k: usize,
    rng: R,
    nodes: Vec<Node>,
    values: Vec<f64>,
}

impl<R: Rng> Builder<'_, R> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(usize::MAX));
        let stop = idx.len() < self.params.min_samples_split
            || self.params.max_depth.is_some_and(|d| depth >= d)
            || self.is_pure(idx);
        let split = if stop { None } else { self.choose_split(idx) };
        match split {
            None => {
                let leaf = self.push_leaf(idx);
                self.nodes[at] = Node::Leaf(leaf);
            }
            Some((feature, threshold)) => {
                let mut lo = 0;
                for i in 0..idx.len() {
                    if self.x[[idx[i], feature]] < threshold {
                        idx.swap(i, lo);
                        lo += 1;
                    }
                }
                let (l, r) = idx.split_at_mut(lo);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[at] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
        }
        at
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        let first = self.y.row(idx[0]);
        idx[1..].iter().all(|&i| self.y.row(i) == first)
    }

    fn push_leaf(&mut self, idx: &[usize]) -> usize {
        let q = self.y.ncols();
        let leaf = self.values.len() / q;
        let mut mean = vec![0.0; q];
        for &i in idx {
            for (m, v) in mean.iter_mut().zip(self.y.row(i)) {
                *m += v;
            }
        }
        let n = idx.len() as f64;
        self.values.extend(mean.into_iter().map(|m| m / n));
        leaf
    }

    /// Draws candidate features until `k` non-constant ones are found, one
    /// uniform threshold each, and keeps the split with the smallest pooled
    /// within-child sum of squares.
    fn choose_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let n_features = self.x.ncols();
        let order = sample(&mut self.rng, n_features, n_features);
        let q = self.y.ncols();
        let mut total = vec![0.0; q];
        let mut total_sq = 0.0;
        for &i in idx {
            for (t, v) in total.iter_mut().zip(self.y.row(i)) {
                *t += v;
                total_sq += v * v;
            }
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let mut tried = 0;
        let mut left_sum = vec![0.0; q];
        for feature in order.iter() {
            if tried == self.k {
                break;
            }
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in idx {
                let v = self.x[[i, feature]];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi <= lo {
                continue;
            }
            tried += 1;
            let mut threshold = self.rng.random_range(lo..hi);
            if threshold <= lo {
                threshold = 0.5 * (lo + hi);
            }
            left_sum.iter_mut().for_each(|s| *s = 0.0);
            let mut n_left = 0usize;
            for &i in idx {
                if self.x[[i, feature]] < threshold {
                    n_left += 1;
                    for (s, v) in left_sum.iter_mut().zip(self.y.row(i)) {
                        *s += v;
                    }
                }
            }
            let n_right = idx.len() - n_left;
            if n_left == 0 || n_right == 0 {
                continue;
            }
            let mut between = 0.0;
            for (l, t) in left_sum.iter().zip(&total) {
                let r = t - l;
                between += l * l / n_left as f64 + r * r / n_right as f64;
            }
            let sse = total_sq - between;
            if best.is_none_or(|(b, _, _)| sse < b) {
                best = Some((sse, feature, threshold));
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}
