//! Random forest: Gini-split decision trees grown on bootstrap samples
//! with random feature subsets (sqrt(d) candidates per split), majority
//! vote across trees, ties to the smallest label id.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { label: usize },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: ndarray::ArrayView1<f64>) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { label } => return *label,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Grow each tree on a bootstrap resample (the standard setting);
    /// disable to fit single trees on the exact training set.
    pub bootstrap: bool,
}

#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<Tree>,
    n_features: usize,
}

impl ForestModel {
    pub fn fit(params: &ForestParams, x: Array2<f64>, y: &[usize], seed: u64) -> Result<Self> {
        let (n, d) = x.dim();
        if n != y.len() {
            return Err(Error::Precondition(format!("{n} rows vs {} labels", y.len())));
        }
        if n == 0 || params.n_trees == 0 {
            return Err(Error::Precondition("empty training set or zero trees".into()));
        }
        let mut rng = rng::derive(seed, "forest/fit");
        let m_features = (d as f64).sqrt().ceil() as usize;
        let mut trees = Vec::with_capacity(params.n_trees);
        for _ in 0..params.n_trees {
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut nodes = Vec::new();
            grow(&x, y, &idx, m_features, params.max_depth, 0, &mut nodes, &mut rng);
            trees.push(Tree { nodes });
        }
        Ok(Self { trees, n_features: d })
    }

    pub fn predict(&self, queries: &Array2<f64>) -> Result<Vec<usize>> {
        if queries.dim().1 != self.n_features {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features", self.n_features),
                got: format!("{} features", queries.dim().1),
            });
        }
        Ok((0..queries.dim().0)
            .map(|i| {
                let mut votes: std::collections::BTreeMap<usize, usize> = Default::default();
                for t in &self.trees {
                    *votes.entry(t.predict(queries.row(i))).or_insert(0) += 1;
                }
                votes
                    .iter()
                    .max_by_key(|(label, c)| (*c, std::cmp::Reverse(*label)))
                    .map(|(l, _)| *l)
                    .unwrap()
            })
            .collect())
    }
}

fn majority(y: &[usize], idx: &[usize]) -> usize {
    let mut votes: std::collections::BTreeMap<usize, usize> = Default::default();
    for i in idx {
        *votes.entry(y[*i]).or_insert(0) += 1;
    }
    votes.iter().max_by_key(|(label, c)| (*c, std::cmp::Reverse(*label))).map(|(l, _)| *l).unwrap()
}

fn gini(counts: &std::collections::BTreeMap<usize, usize>, total: f64) -> f64 {
    let mut g = 1.0;
    for c in counts.values() {
        let p = *c as f64 / total;
        g -= p * p;
    }
    g
}

/// Recursively grow a subtree over `idx`; returns the node index.
#[allow(clippy::too_many_arguments)]
fn grow(
    x: &Array2<f64>,
    y: &[usize],
    idx: &[usize],
    m_features: usize,
    max_depth: usize,
    depth: usize,
    nodes: &mut Vec<Node>,
    rng: &mut ChaCha8Rng,
) -> usize {
    let pure = idx.iter().all(|i| y[*i] == y[idx[0]]);
    if pure || depth >= max_depth || idx.len() < 2 {
        nodes.push(Node::Leaf { label: majority(y, idx) });
        return nodes.len() - 1;
    }

    let d = x.dim().1;
    let mut features: Vec<usize> = (0..d).collect();
    features.shuffle(rng);
    features.truncate(m_features.min(d));
    features.sort_unstable(); // deterministic evaluation order

    let total = idx.len() as f64;
    let mut best: Option<(f64, usize, f64)> = None; // (impurity, feature, threshold)
    for &feat in &features {
        let mut vals: Vec<(f64, usize)> = idx.iter().map(|i| (x[(*i, feat)], y[*i])).collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut left: std::collections::BTreeMap<usize, usize> = Default::default();
        let mut right: std::collections::BTreeMap<usize, usize> = Default::default();
        for (_, label) in &vals {
            *right.entry(*label).or_insert(0) += 1;
        }
        for k in 0..vals.len() - 1 {
            let (v, label) = vals[k];
            *left.entry(label).or_insert(0) += 1;
            let r = right.get_mut(&label).unwrap();
            *r -= 1;
            if *r == 0 {
                right.remove(&label);
            }
            let next = vals[k + 1].0;
            if next == v {
                continue; // can't split between equal values
            }
            let nl = (k + 1) as f64;
            let nr = total - nl;
            let impurity = (nl * gini(&left, nl) + nr * gini(&right, nr)) / total;
            let threshold = v + (next - v) / 2.0;
            let better = match best {
                None => true,
                Some((bi, bf, bt)) => {
                    impurity < bi - 1e-12
                        || ((impurity - bi).abs() <= 1e-12 && (feat, threshold) < (bf, bt))
                }
            };
            if better {
                best = Some((impurity, feat, threshold));
            }
        }
    }

    match best {
        None => {
            nodes.push(Node::Leaf { label: majority(y, idx) });
            nodes.len() - 1
        }
        Some((_, feature, threshold)) => {
            let left_idx: Vec<usize> = idx.iter().copied().filter(|i| x[(*i, feature)] <= threshold).collect();
            let right_idx: Vec<usize> = idx.iter().copied().filter(|i| x[(*i, feature)] > threshold).collect();
            let slot = nodes.len();
            nodes.push(Node::Leaf { label: 0 }); // placeholder
            let left = grow(x, y, &left_idx, m_features, max_depth, depth + 1, nodes, rng);
            let right = grow(x, y, &right_idx, m_features, max_depth, depth + 1, nodes, rng);
            nodes[slot] = Node::Split { feature, threshold, left, right };
            slot
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_stump_matches_brute_force_on_a_threshold_dataset() {
        // One feature, classes separated by a wide gap around 0.5.
        let train_vals = [0.05, 0.1, 0.2, 0.3, 0.7, 0.8, 0.9, 0.95];
        let x = Array2::from_shape_fn((8, 1), |(i, _)| train_vals[i]);
        let y = vec![0, 0, 0, 0, 1, 1, 1, 1];

        // Brute-force best stump on the full data: try every midpoint.
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..7 {
            let t = (train_vals[k] + train_vals[k + 1]) / 2.0;
            let errs = train_vals
                .iter()
                .zip(y.iter())
                .filter(|(v, l)| usize::from(**v > t) != **l)
                .count();
            if (errs as f64) < best.0 {
                best = (errs as f64, t);
            }
        }
        let stump_t = best.1;

        let params = ForestParams { n_trees: 1, max_depth: 1, bootstrap: false };
        let model = ForestModel::fit(&params, x, &y, 3).unwrap();
        // Probe points clear of the class gap agree with the stump.
        let probes = [0.0, 0.15, 0.25, 0.75, 0.85, 1.0];
        let q = Array2::from_shape_fn((6, 1), |(i, _)| probes[i]);
        let got = model.predict(&q).unwrap();
        let expect: Vec<usize> = probes.iter().map(|v| usize::from(*v > stump_t)).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn forest_learns_a_two_feature_rule_deterministically() {
        let mut rng = crate::rng::rng_from_seed(81);
        use rand::Rng;
        let n = 60;
        let x = Array2::from_shape_fn((n, 5), |_| rng.gen::<f64>());
        let y: Vec<usize> = (0..n).map(|i| usize::from(x[(i, 2)] > 0.5)).collect();
        let params = ForestParams { n_trees: 15, max_depth: 4, bootstrap: true };
        let a = ForestModel::fit(&params, x.clone(), &y, 7).unwrap();
        let b = ForestModel::fit(&params, x.clone(), &y, 7).unwrap();
        let q = Array2::from_shape_fn((20, 5), |_| rng.gen::<f64>());
        assert_eq!(a.predict(&q).unwrap(), b.predict(&q).unwrap());
        // And it actually learned the rule on train data.
        let acc = a
            .predict(&x)
            .unwrap()
            .iter()
            .zip(y.iter())
            .filter(|(p, t)| p == t)
            .count() as f64
            / n as f64;
        assert!(acc > 0.95, "train accuracy {acc}");
    }
}
