//! M5-style model tree: recursive partitioning by standard-deviation
//! reduction, a least-squares linear model in every node, bottom-up pruning
//! and leaf-to-root smoothing at prediction time.

use serde::{Deserialize, Serialize};

use super::linear::{check_points, cost_row, LinearModel};
use super::{CostModel, COST_FLOOR};
use crate::dataset::Dataset;
use crate::domain::{InputFeatures, KnobSetting, KnobSpace};
use crate::error::{Error, Result};
use crate::scalar::{population_sd, Scalar};

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Minimum number of training points on each side of a split.
    pub min_leaf: usize,
    /// Splitting stops once a node's sd drops below this fraction of the root's.
    pub sd_floor: f64,
    /// Smoothing constant `k`; 0 disables smoothing.
    pub smoothing: f64,
    pub prune: bool,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_leaf: 4,
            sd_floor: 0.05,
            smoothing: 15.0,
            prune: true,
        }
    }
}

impl TreeParams {
    /// No pruning, no smoothing, split down to single points.
    pub fn exact() -> Self {
        TreeParams {
            min_leaf: 1,
            sd_floor: 0.0,
            smoothing: 0.0,
            prune: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Split<F: Scalar> {
    pub dim: usize,
    /// Points with `x[dim] <= threshold` route left.
    pub threshold: F,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Node<F: Scalar> {
    pub model: LinearModel<F>,
    /// Number of training points routed to this node.
    pub n: usize,
    pub parent: Option<usize>,
    pub split: Option<Split<F>>,
}

/// A trained model tree. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ModelTree<F: Scalar> {
    pub dim: usize,
    pub params: TreeParams,
    pub nodes: Vec<Node<F>>,
}

/// `sd(S) - sum_i |S_i|/|S| * sd(S_i)` with population standard deviations.
pub fn sdr<F: Scalar>(parent: &[F], parts: &[&[F]]) -> F {
    let n = F::of_usize(parent.len());
    parts.iter().fold(population_sd(parent), |acc, part| {
        acc - F::of_usize(part.len()) / n * population_sd(part)
    })
}

enum Built<F: Scalar> {
    Leaf {
        model: LinearModel<F>,
        n: usize,
    },
    Internal {
        model: LinearModel<F>,
        n: usize,
        dim: usize,
        threshold: F,
        left: Box<Built<F>>,
        right: Box<Built<F>>,
    },
}

struct Trainer<'a, F: Scalar> {
    xs: Vec<&'a [F]>,
    ys: Vec<F>,
    params: TreeParams,
    root_sd: F,
    slack: F,
}

impl<'a, F: Scalar> Trainer<'a, F> {
    fn fit(&self, idx: &[usize]) -> LinearModel<F> {
        let xs: Vec<&[F]> = idx.iter().map(|&i| self.xs[i]).collect();
        let ys: Vec<F> = idx.iter().map(|&i| self.ys[i]).collect();
        LinearModel::fit(&xs, &ys)
    }

    /// Mean absolute residual inflated by `(n + v) / (n - v)`.
    fn adjusted_error(&self, model: &LinearModel<F>, idx: &[usize]) -> F {
        let n = idx.len();
        let mae = idx
            .iter()
            .map(|&i| (model.predict(self.xs[i]) - self.ys[i]).abs())
            .sum::<F>()
            / F::of_usize(n);
        let v = model.n_params();
        let factor = if n > v {
            F::of_usize(n + v) / F::of_usize(n - v)
        } else {
            F::of(10.0)
        };
        mae * factor
    }

    fn best_split(&self, idx: &[usize]) -> Option<(usize, F)> {
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        let nf = F::of_usize(n);
        let center = idx.iter().map(|&i| self.ys[i]).sum::<F>() / nf;
        let parent_sd = population_sd(&idx.iter().map(|&i| self.ys[i]).collect::<Vec<_>>());
        let dim = self.xs.first().map_or(0, |x| x.len());
        let mut best: Option<(usize, F, F)> = None;
        let mut order = idx.to_vec();
        for d in 0..dim {
            order.sort_by(|&a, &b| {
                self.xs[a][d]
                    .partial_cmp(&self.xs[b][d])
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let total1: F = order.iter().map(|&i| self.ys[i] - center).sum();
            let total2: F = order
                .iter()
                .map(|&i| (self.ys[i] - center) * (self.ys[i] - center))
                .sum();
            let mut s1 = F::zero();
            let mut s2 = F::zero();
            for k in 1..n {
                let y = self.ys[order[k - 1]] - center;
                s1 = s1 + y;
                s2 = s2 + y * y;
                if k < min_leaf || n - k < min_leaf {
                    continue;
                }
                let lo = self.xs[order[k - 1]][d];
                let hi = self.xs[order[k]][d];
                if !(lo < hi) {
                    continue;
                }
                let sd_of = |c: usize, a: F, b: F| {
                    let cf = F::of_usize(c);
                    let m = a / cf;
                    (b / cf - m * m).max(F::zero()).sqrt()
                };
                let sd_l = sd_of(k, s1, s2);
                let sd_r = sd_of(n - k, total1 - s1, total2 - s2);
                let score = parent_sd
                    - F::of_usize(k) / nf * sd_l
                    - F::of_usize(n - k) / nf * sd_r;
                let mut threshold = lo + (hi - lo) / F::of(2.0);
                if threshold >= hi {
                    threshold = lo;
                }
                if best.is_none_or(|(_, _, s)| score > s) {
                    best = Some((d, threshold, score));
                }
            }
        }
        best.map(|(d, t, _)| (d, t))
    }

    /// Returns the subtree and its adjusted error.
    fn build(&self, idx: Vec<usize>) -> (Built<F>, F) {
        let n = idx.len();
        let model = self.fit(&idx);
        let own_error = self.adjusted_error(&model, &idx);
        let ys: Vec<F> = idx.iter().map(|&i| self.ys[i]).collect();
        let sd = population_sd(&ys);
        let stop = n < 2 * self.params.min_leaf.max(1)
            || sd <= F::zero()
            || sd < F::of(self.params.sd_floor) * self.root_sd;
        let split = if stop { None } else { self.best_split(&idx) };
        let Some((dim, threshold)) = split else {
            return (Built::Leaf { model, n }, own_error);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.xs[i][dim] <= threshold);
        let (nl, nr) = (left_idx.len(), right_idx.len());
        let (left, el) = self.build(left_idx);
        let (right, er) = self.build(right_idx);
        let subtree_error = (F::of_usize(nl) * el + F::of_usize(nr) * er) / F::of_usize(n);
        if self.params.prune && own_error <= subtree_error + self.slack {
            return (Built::Leaf { model, n }, own_error);
        }
        (
            Built::Internal {
                model,
                n,
                dim,
                threshold,
                left: Box::new(left),
                right: Box::new(right),
            },
            subtree_error,
        )
    }
}

fn flatten<F: Scalar>(built: Built<F>, parent: Option<usize>, nodes: &mut Vec<Node<F>>) -> usize {
    let me = nodes.len();
    match built {
        Built::Leaf { model, n } => nodes.push(Node {
            model,
            n,
            parent,
            split: None,
        }),
        Built::Internal {
            model,
            n,
            dim,
            threshold,
            left,
            right,
        } => {
            nodes.push(Node {
                model,
                n,
                parent,
                split: None,
            });
            let l = flatten(*left, Some(me), nodes);
            let r = flatten(*right, Some(me), nodes);
            nodes[me].split = Some(Split {
                dim,
                threshold,
                left: l,
                right: r,
            });
        }
    }
    me
}

/// Trains a model tree on `(x, y)` points.
pub fn train_model_tree<F: Scalar>(points: &[(Vec<F>, F)], params: TreeParams) -> Result<ModelTree<F>> {
    check_points(points, 1)?;
    if !(params.sd_floor >= 0.0 && params.smoothing >= 0.0) {
        return Err(Error::Model("sd_floor and smoothing must be >= 0".into()));
    }
    let ys: Vec<F> = points.iter().map(|p| p.1).collect();
    let scale = ys.iter().fold(F::zero(), |m, y| m.max(y.abs()));
    let trainer = Trainer {
        xs: points.iter().map(|p| p.0.as_slice()).collect(),
        root_sd: population_sd(&ys),
        ys,
        params,
        slack: F::epsilon() * F::of(1e4) * scale,
    };
    let (built, _) = trainer.build((0..points.len()).collect());
    let mut nodes = Vec::new();
    flatten(built, None, &mut nodes);
    Ok(ModelTree {
        dim: points[0].0.len(),
        params,
        nodes,
    })
}

impl<F: Scalar> ModelTree<F> {
    pub fn leaf_of(&self, x: &[F]) -> usize {
        let mut at = 0;
        while let Some(s) = &self.nodes[at].split {
            at = if x[s.dim] <= s.threshold { s.left } else { s.right };
        }
        at
    }

    /// Smoothed prediction: from the leaf upward, `p <- (n p + k q) / (n + k)`
    /// with `n` the count of the node below and `q` the parent model output.
    pub fn predict(&self, x: &[F]) -> F {
        let leaf = self.leaf_of(x);
        let mut p = self.nodes[leaf].model.predict(x);
        let k = F::of(self.params.smoothing);
        if k <= F::zero() {
            return p;
        }
        let mut at = leaf;
        while let Some(parent) = self.nodes[at].parent {
            let n = F::of_usize(self.nodes[at].n);
            let q = self.nodes[parent].model.predict(x);
            p = (n * p + k * q) / (n + k);
            at = parent;
        }
        p
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_none()).count()
    }

    pub fn root_split(&self) -> Option<(usize, F)> {
        self.nodes[0].split.as_ref().map(|s| (s.dim, s.threshold))
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.model.coefs.len() != self.dim {
                return Err(Error::Model(format!("node {i}: coefficient count mismatch")));
            }
            if let Some(s) = &node.split {
                if s.dim >= self.dim || s.left >= self.nodes.len() || s.right >= self.nodes.len() {
                    return Err(Error::Model(format!("node {i}: bad split")));
                }
            }
        }
        Ok(())
    }
}

/// Model-tree cost model over `features ++ knob values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TreeCostModel<F: Scalar> {
    pub space: KnobSpace<F>,
    pub tree: ModelTree<F>,
}

impl<F: Scalar> TreeCostModel<F> {
    pub fn train(train: &Dataset<F>, params: TreeParams) -> Result<Self> {
        let points = cost_points(train);
        Ok(TreeCostModel {
            space: train.space().clone(),
            tree: train_model_tree(&points, params)?,
        })
    }
}

/// `(features ++ knob values, cost)` for every record.
pub fn cost_points<F: Scalar>(ds: &Dataset<F>) -> Vec<(Vec<F>, F)> {
    ds.records()
        .map(|r| (cost_row(ds.space(), &r.features, &r.setting), r.cost))
        .collect()
}

impl<F: Scalar> CostModel<F> for TreeCostModel<F> {
    fn predict_cost(&self, features: &InputFeatures<F>, setting: &KnobSetting) -> F {
        self.tree
            .predict(&cost_row(&self.space, features, setting))
            .max(F::of(COST_FLOOR))
    }
}
