//! k-nearest-neighbors by Euclidean distance.
//!
//! Majority vote over the k nearest training points; distance ties break
//! by training index, vote ties by smallest label id. Fully
//! deterministic, no randomness involved.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    x: Array2<f64>,
    y: Vec<usize>,
}

impl KnnModel {
    pub fn fit(k: usize, x: Array2<f64>, y: Vec<usize>) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        if x.dim().0 != y.len() {
            return Err(Error::Precondition(format!("{} rows vs {} labels", x.dim().0, y.len())));
        }
        if x.dim().0 == 0 {
            return Err(Error::Precondition("empty training set".into()));
        }
        Ok(Self { k: k.min(x.dim().0), x, y })
    }

    pub fn predict(&self, queries: &Array2<f64>) -> Result<Vec<usize>> {
        if queries.dim().1 != self.x.dim().1 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features", self.x.dim().1),
                got: format!("{} features", queries.dim().1),
            });
        }
        let rows: Vec<usize> = (0..queries.dim().0).collect();
        Ok(rows
            .par_iter()
            .map(|qi| {
                let q = queries.row(*qi);
                let mut dists: Vec<(f64, usize)> = (0..self.x.dim().0)
                    .map(|i| {
                        let d = self
                            .x
                            .row(i)
                            .iter()
                            .zip(q.iter())
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>();
                        (d, i)
                    })
                    .collect();
                dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                let mut votes: std::collections::BTreeMap<usize, usize> = Default::default();
                for (_, i) in dists.iter().take(self.k) {
                    *votes.entry(self.y[*i]).or_insert(0) += 1;
                }
                // Max count; BTreeMap order makes ties fall to the
                // smallest label id.
                votes.iter().max_by_key(|(label, c)| (*c, std::cmp::Reverse(*label))).map(|(l, _)| *l).unwrap()
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Array2<f64> {
        let n = rows.len();
        let d = rows[0].len();
        Array2::from_shape_fn((n, d), |(i, j)| rows[i][j])
    }

    #[test]
    fn one_nn_reproduces_training_labels() {
        let x = mat(&[&[0.0, 0.0], &[1.0, 1.0], &[2.0, 0.5], &[3.0, 3.0]]);
        let y = vec![0, 1, 0, 1];
        let model = KnnModel::fit(1, x.clone(), y.clone()).unwrap();
        assert_eq!(model.predict(&x).unwrap(), y);
    }

    #[test]
    fn vote_ties_break_to_the_smallest_label() {
        // Equidistant neighbors, one of each class.
        let x = mat(&[&[-1.0], &[1.0]]);
        let y = vec![1, 0];
        let model = KnnModel::fit(2, x, y).unwrap();
        assert_eq!(model.predict(&mat(&[&[0.0]])).unwrap(), vec![0]);
    }

    #[test]
    fn scaling_all_features_together_leaves_predictions_unchanged() {
        let mut rng = crate::rng::rng_from_seed(61);
        use rand::Rng;
        let x = Array2::from_shape_fn((30, 4), |_| rng.gen::<f64>());
        let y: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let q = Array2::from_shape_fn((10, 4), |_| rng.gen::<f64>());
        let model = KnnModel::fit(3, x.clone(), y.clone()).unwrap();
        let scaled = KnnModel::fit(3, x.mapv(|v| 7.5 * v), y).unwrap();
        assert_eq!(model.predict(&q).unwrap(), scaled.predict(&q.mapv(|v| 7.5 * v)).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let model = KnnModel::fit(1, mat(&[&[0.0, 1.0]]), vec![0]).unwrap();
        assert!(model.predict(&mat(&[&[0.0]])).is_err());
    }
}
