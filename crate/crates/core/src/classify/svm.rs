//! Soft-margin binary SVM trained with sequential minimal optimization.
//!
//! Linear or RBF kernel; the kernel matrix is precomputed (training sets
//! here are at most a few thousand rows). Pair selection uses a seeded
//! generator, so fits are deterministic.

use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Linear,
    Rbf { gamma: f64 },
}

impl Kernel {
    fn eval(&self, a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        match self {
            Kernel::Linear => a.iter().zip(b.iter()).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SvmModel {
    alpha: Vec<f64>,
    bias: f64,
    support_x: Array2<f64>,
    /// Training targets mapped to -1 / +1.
    support_y: Vec<f64>,
    kernel: Kernel,
    /// classes[0] maps to -1, classes[1] to +1.
    classes: [usize; 2],
}

const TOL: f64 = 1e-3;
const MAX_PASSES: usize = 4;

impl SvmModel {
    pub fn fit(c: f64, kernel: Kernel, x: Array2<f64>, y: &[usize], seed: u64) -> Result<Self> {
        let n = x.dim().0;
        if n != y.len() {
            return Err(Error::Precondition(format!("{n} rows vs {} labels", y.len())));
        }
        let mut classes: Vec<usize> = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() != 2 {
            return Err(Error::Precondition(format!(
                "svm is a binary classifier; got {} classes",
                classes.len()
            )));
        }
        let classes = [classes[0], classes[1]];
        let ty: Vec<f64> = y.iter().map(|l| if *l == classes[0] { -1.0 } else { 1.0 }).collect();

        // Precomputed Gram matrix.
        let mut k_mat = Array2::zeros((n, n));
        for i in 0..n {
            for j in i..n {
                let v = kernel.eval(x.row(i), x.row(j));
                k_mat[(i, j)] = v;
                k_mat[(j, i)] = v;
            }
        }

        let mut alpha = vec![0.0f64; n];
        let mut bias = 0.0f64;
        let mut rng = rng::derive(seed, "svm/smo");
        let f = |alpha: &[f64], bias: f64, k_mat: &Array2<f64>, i: usize| -> f64 {
            let mut s = bias;
            for (j, a) in alpha.iter().enumerate() {
                if *a > 0.0 {
                    s += a * ty[j] * k_mat[(j, i)];
                }
            }
            s
        };

        let mut passes = 0;
        let mut iters = 0usize;
        let iter_cap = 200 * n.max(1);
        while passes < MAX_PASSES && iters < iter_cap {
            let mut changed = 0;
            for i in 0..n {
                iters += 1;
                let e_i = f(&alpha, bias, &k_mat, i) - ty[i];
                let violates = (ty[i] * e_i < -TOL && alpha[i] < c) || (ty[i] * e_i > TOL && alpha[i] > 0.0);
                if !violates {
                    continue;
                }
                let mut j = rng.gen_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                let e_j = f(&alpha, bias, &k_mat, j) - ty[j];
                let (a_i_old, a_j_old) = (alpha[i], alpha[j]);
                let (lo, hi) = if ty[i] != ty[j] {
                    ((a_j_old - a_i_old).max(0.0), (c + a_j_old - a_i_old).min(c))
                } else {
                    ((a_i_old + a_j_old - c).max(0.0), (a_i_old + a_j_old).min(c))
                };
                if lo >= hi {
                    continue;
                }
                let eta = 2.0 * k_mat[(i, j)] - k_mat[(i, i)] - k_mat[(j, j)];
                if eta >= 0.0 {
                    continue;
                }
                let mut a_j = a_j_old - ty[j] * (e_i - e_j) / eta;
                a_j = a_j.clamp(lo, hi);
                if (a_j - a_j_old).abs() < 1e-5 {
                    continue;
                }
                let a_i = a_i_old + ty[i] * ty[j] * (a_j_old - a_j);
                alpha[i] = a_i;
                alpha[j] = a_j;

                let b1 = bias - e_i
                    - ty[i] * (a_i - a_i_old) * k_mat[(i, i)]
                    - ty[j] * (a_j - a_j_old) * k_mat[(i, j)];
                let b2 = bias - e_j
                    - ty[i] * (a_i - a_i_old) * k_mat[(i, j)]
                    - ty[j] * (a_j - a_j_old) * k_mat[(j, j)];
                bias = if 0.0 < a_i && a_i < c {
                    b1
                } else if 0.0 < a_j && a_j < c {
                    b2
                } else {
                    (b1 + b2) / 2.0
                };
                changed += 1;
            }
            passes = if changed == 0 { passes + 1 } else { 0 };
        }

        Ok(Self { alpha, bias, support_x: x, support_y: ty, kernel, classes })
    }

    pub fn decision(&self, q: ndarray::ArrayView1<f64>) -> f64 {
        let mut s = self.bias;
        for (j, a) in self.alpha.iter().enumerate() {
            if *a > 0.0 {
                s += a * self.support_y[j] * self.kernel.eval(self.support_x.row(j), q);
            }
        }
        s
    }

    pub fn predict(&self, queries: &Array2<f64>) -> Result<Vec<usize>> {
        if queries.dim().1 != self.support_x.dim().1 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} features", self.support_x.dim().1),
                got: format!("{} features", queries.dim().1),
            });
        }
        Ok((0..queries.dim().0)
            .map(|i| {
                if self.decision(queries.row(i)) >= 0.0 {
                    self.classes[1]
                } else {
                    self.classes[0]
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points_one_per_class_are_separated() {
        let x = Array2::from_shape_fn((2, 2), |(i, _)| if i == 0 { -1.0 } else { 1.0 });
        let y = vec![0, 1];
        let model = SvmModel::fit(1.0, Kernel::Linear, x.clone(), &y, 1).unwrap();
        assert_eq!(model.predict(&x).unwrap(), y);
    }

    #[test]
    fn separable_blobs_classify_cleanly_with_both_kernels() {
        let mut rng = crate::rng::rng_from_seed(71);
        use rand::Rng;
        let n = 40;
        let x = Array2::from_shape_fn((n, 2), |(i, _)| {
            let center = if i < n / 2 { -2.0 } else { 2.0 };
            center + rng.gen::<f64>() - 0.5
        });
        let y: Vec<usize> = (0..n).map(|i| usize::from(i >= n / 2)).collect();
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: 0.5 }] {
            let model = SvmModel::fit(1.0, kernel, x.clone(), &y, 3).unwrap();
            assert_eq!(model.predict(&x).unwrap(), y, "{kernel:?}");
        }
    }

    #[test]
    fn fits_are_deterministic_in_the_seed() {
        let mut rng = crate::rng::rng_from_seed(72);
        use rand::Rng;
        let x = Array2::from_shape_fn((30, 3), |_| rng.gen::<f64>());
        let y: Vec<usize> = (0..30).map(|i| i % 2).collect();
        let q = Array2::from_shape_fn((10, 3), |_| rng.gen::<f64>());
        let a = SvmModel::fit(2.0, Kernel::Rbf { gamma: 1.0 }, x.clone(), &y, 5).unwrap();
        let b = SvmModel::fit(2.0, Kernel::Rbf { gamma: 1.0 }, x.clone(), &y, 5).unwrap();
        assert_eq!(a.predict(&q).unwrap(), b.predict(&q).unwrap());
        assert!((a.bias - b.bias).abs() < 1e-15);
    }

    #[test]
    fn three_classes_are_rejected() {
        let x = Array2::zeros((3, 2));
        assert!(SvmModel::fit(1.0, Kernel::Linear, x, &[0, 1, 2], 1).is_err());
    }
}
