//! CART trees shared by the boosting and forest learners.
//!
//! Weighted Gini impurity on 0/1 targets and squared error on real targets
//! reduce to the same split score: maximise `S_L²/W_L + S_R²/W_R` where `S`
//! is the weighted target sum and `W` the weight sum of each child.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; `None` examines all of them.
    pub max_features: Option<usize>,
}

struct Grower<'a, F: Fn(&[usize]) -> f64> {
    x: &'a FeatureMatrix,
    rows: &'a [usize],
    w: &'a [f64],
    y: &'a [f64],
    params: GrowParams,
    leaf_value: F,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

/// Grows a tree over the sample positions `0..rows.len()`; sample `s` is
/// matrix row `rows[s]` with weight `w[s]` and target `y[s]`. `leaf_value`
/// maps the sample positions reaching a leaf to its output.
pub(crate) fn grow<F: Fn(&[usize]) -> f64>(
    x: &FeatureMatrix,
    rows: &[usize],
    w: &[f64],
    y: &[f64],
    params: GrowParams,
    leaf_value: F,
    rng: Option<&mut ChaCha8Rng>,
) -> Tree {
    let mut g = Grower {
        x,
        rows,
        w,
        y,
        params,
        leaf_value,
        rng,
        nodes: Vec::new(),
    };
    let all: Vec<usize> = (0..rows.len()).collect();
    g.build(all, 0);
    Tree { nodes: g.nodes }
}

impl<F: Fn(&[usize]) -> f64> Grower<'_, F> {
    fn build(&mut self, samples: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok && samples.len() >= self.params.min_samples_split.max(2) {
            self.best_split(&samples)
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = samples
                    .into_iter()
                    .partition(|&s| self.x.row(self.rows[s])[feature] <= threshold);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                self.nodes[id] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
            }
            None => {
                self.nodes[id] = Node::Leaf {
                    value: (self.leaf_value)(&samples),
                };
            }
        }
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.x.n_cols();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < p => {
                let mut f = sample(rng, p, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    fn best_split(&mut self, samples: &[usize]) -> Option<(usize, f64)> {
        let (w_tot, s_tot) = samples
            .iter()
            .fold((0.0, 0.0), |(w, s), &i| (w + self.w[i], s + self.w[i] * self.y[i]));
        if w_tot <= 0.0 {
            return None;
        }
        let parent = s_tot * s_tot / w_tot;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(samples.len());

        for f in self.candidate_features() {
            order.clear();
            order.extend(samples.iter().map(|&s| (self.x.row(self.rows[s])[f], s)));
            order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if order[0].0 == order[order.len() - 1].0 {
                continue;
            }
            let (mut wl, mut sl) = (0.0, 0.0);
            for k in 0..order.len() - 1 {
                let s = order[k].1;
                wl += self.w[s];
                sl += self.w[s] * self.y[s];
                if order[k].0 == order[k + 1].0 {
                    continue;
                }
                let wr = w_tot - wl;
                let sr = s_tot - sl;
                if wl <= 0.0 || wr <= 0.0 {
                    continue;
                }
                let gain = sl * sl / wl + sr * sr / wr - parent;
                if gain > 1e-12 * w_tot.max(1.0) && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (order[k].0 + order[k + 1].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

/// Weighted mean of the targets at a leaf (class-1 fraction for 0/1 targets).
pub(crate) fn weighted_mean<'a>(w: &'a [f64], y: &'a [f64]) -> impl Fn(&[usize]) -> f64 + 'a {
    move |samples: &[usize]| {
        let (ws, ys) = samples
            .iter()
            .fold((0.0, 0.0), |(a, b), &i| (a + w[i], b + w[i] * y[i]));
        if ws > 0.0 {
            ys / ws
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>, labels: Vec<bool>) -> FeatureMatrix {
        let p = rows[0].len();
        let n = rows.len();
        FeatureMatrix::new(
            (0..p).map(|j| format!("f{j}")).collect(),
            (0..n).map(|i| format!("r{i}")).collect(),
            rows,
            labels,
        )
        .unwrap()
    }

    #[test]
    fn pure_split_on_informative_feature() {
        let x = matrix(
            vec![vec![0.0, 1.0], vec![0.0, 0.0], vec![1.0, 1.0], vec![1.0, 0.0]],
            vec![false, false, true, true],
        );
        let rows: Vec<usize> = (0..4).collect();
        let w = vec![1.0; 4];
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let params = GrowParams {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        };
        let t = grow(&x, &rows, &w, &y, params, weighted_mean(&w, &y), None);
        assert_eq!(t.depth(), 1);
        assert_eq!(t.predict(&[1.0, 0.0]), 1.0);
        assert_eq!(t.predict(&[0.0, 1.0]), 0.0);
    }

    #[test]
    fn constant_features_give_single_leaf() {
        let x = matrix(vec![vec![1.0]; 5], vec![true, false, false, false, true]);
        let rows: Vec<usize> = (0..5).collect();
        let w = vec![1.0; 5];
        let y = vec![1.0, 0.0, 0.0, 0.0, 1.0];
        let params = GrowParams {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        };
        let t = grow(&x, &rows, &w, &y, params, weighted_mean(&w, &y), None);
        assert_eq!(t.n_leaves(), 1);
        assert!((t.predict(&[1.0]) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn xor_needs_depth_two() {
        let x = matrix(
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            vec![false, true, true, false],
        );
        let rows: Vec<usize> = (0..4).collect();
        let w = vec![1.0; 4];
        let y = vec![0.0, 1.0, 1.0, 0.0];
        let params = GrowParams {
            max_depth: Some(1),
            min_samples_split: 2,
            max_features: None,
        };
        // no single split reduces impurity on XOR
        let t = grow(&x, &rows, &w, &y, params, weighted_mean(&w, &y), None);
        assert_eq!(t.n_leaves(), 1);
    }
}
