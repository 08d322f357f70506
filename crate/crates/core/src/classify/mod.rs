//! The four benchmark classifiers and the 5-fold cross-validated
//! hyperparameter selection that drives them.
//!
//! Feature models (k-NN, SVM, random forest) consume feature matrices;
//! the CNN consumes raw images and selects its stopping epoch by
//! validation loss instead of k-fold (see [`cnn`]). Everything is
//! deterministic given the seed: folds, pair selection, bootstraps and
//! weight initialization all derive from it.

pub mod cnn;
pub mod forest;
pub mod knn;
pub mod svm;

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use forest::{ForestModel, ForestParams};
use knn::KnnModel;
use svm::{Kernel, SvmModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Knn,
    Svm,
    RandomForest,
    Cnn,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifierKind::Knn => write!(f, "knn"),
            ClassifierKind::Svm => write!(f, "svm"),
            ClassifierKind::RandomForest => write!(f, "random_forest"),
            ClassifierKind::Cnn => write!(f, "cnn"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl std::fmt::Display for ParamValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Str(v) => write!(f, "{v}"),
        }
    }
}

/// One concrete hyperparameter assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ParamSet(pub BTreeMap<String, ParamValue>);

impl ParamSet {
    pub fn get_int(&self, key: &str) -> Result<i64> {
        match self.0.get(key) {
            Some(ParamValue::Int(v)) => Ok(*v),
            other => Err(Error::Config(format!("parameter '{key}' missing or not an integer: {other:?}"))),
        }
    }

    pub fn get_float(&self, key: &str) -> Result<f64> {
        match self.0.get(key) {
            Some(ParamValue::Float(v)) => Ok(*v),
            Some(ParamValue::Int(v)) => Ok(*v as f64),
            other => Err(Error::Config(format!("parameter '{key}' missing or not a number: {other:?}"))),
        }
    }

    pub fn get_str(&self, key: &str) -> Result<&str> {
        match self.0.get(key) {
            Some(ParamValue::Str(v)) => Ok(v),
            other => Err(Error::Config(format!("parameter '{key}' missing or not a string: {other:?}"))),
        }
    }

    pub fn describe(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
    }
}

/// A classifier kind plus its hyperparameter grid, in declared order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSpec {
    pub kind: ClassifierKind,
    pub grid: Vec<(String, Vec<ParamValue>)>,
}

impl ClassifierSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() || self.grid.iter().any(|(_, vs)| vs.is_empty()) {
            return Err(Error::Config(format!("{} grid must be non-empty", self.kind)));
        }
        let allowed: &[&str] = match self.kind {
            ClassifierKind::Knn => &["k"],
            ClassifierKind::Svm => &["c", "kernel", "gamma"],
            ClassifierKind::RandomForest => &["trees", "max_depth"],
            ClassifierKind::Cnn => &["lr"],
        };
        for (name, _) in &self.grid {
            if !allowed.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "parameter '{name}' is not valid for {} (allowed: {allowed:?})",
                    self.kind
                )));
            }
        }
        Ok(())
    }

    /// Cartesian product of the grid, first axis varying slowest, so
    /// candidate order follows declaration order.
    pub fn candidates(&self) -> Vec<ParamSet> {
        let mut out = vec![ParamSet::default()];
        for (name, values) in &self.grid {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for base in &out {
                for v in values {
                    let mut p = base.clone();
                    p.0.insert(name.clone(), v.clone());
                    next.push(p);
                }
            }
            out = next;
        }
        out
    }

    pub fn default_knn() -> Self {
        Self {
            kind: ClassifierKind::Knn,
            grid: vec![("k".into(), vec![ParamValue::Int(1), ParamValue::Int(3), ParamValue::Int(5)])],
        }
    }

    pub fn default_svm() -> Self {
        Self {
            kind: ClassifierKind::Svm,
            grid: vec![
                ("c".into(), vec![ParamValue::Float(1.0), ParamValue::Float(10.0)]),
                ("kernel".into(), vec![ParamValue::Str("rbf".into())]),
                ("gamma".into(), vec![ParamValue::Float(10.0), ParamValue::Float(100.0)]),
            ],
        }
    }

    pub fn default_random_forest() -> Self {
        Self {
            kind: ClassifierKind::RandomForest,
            grid: vec![
                ("trees".into(), vec![ParamValue::Int(25)]),
                ("max_depth".into(), vec![ParamValue::Int(6), ParamValue::Int(10)]),
            ],
        }
    }

    pub fn default_cnn() -> Self {
        Self { kind: ClassifierKind::Cnn, grid: vec![("lr".into(), vec![ParamValue::Float(1e-3)])] }
    }
}

/// Cross-validation outcome: per-candidate fold scores and the winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub candidates: Vec<ParamSet>,
    /// `fold_scores[c][f]` = accuracy of candidate `c` on fold `f`.
    pub fold_scores: Vec<Vec<f64>>,
    pub mean_scores: Vec<f64>,
    /// Index into `candidates`; maximizes the mean, ties to grid order.
    pub selected: usize,
}

impl CvResult {
    pub fn selected_params(&self) -> &ParamSet {
        &self.candidates[self.selected]
    }
}

/// Disjoint, exhaustive folds with sizes differing by at most one.
/// Deterministic in the seed.
pub fn kfold_partition(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k == 0 || n < k {
        return Err(Error::Precondition(format!("need n >= k >= 1, got n={n}, k={k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::derive(seed, "classify/kfold"));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (i, idx) in order.into_iter().enumerate() {
        folds[i % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Stratified folds: each class is dealt round-robin through a cursor
/// shared across classes, so per-fold class counts differ by at most one
/// and total sizes differ by at most one.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if k == 0 || n < k {
        return Err(Error::Precondition(format!("need n >= k >= 1, got n={n}, k={k}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(*l).or_default().push(i);
    }
    let mut rng = rng::derive(seed, "classify/stratified_kfold");
    let mut folds = vec![Vec::new(); k];
    let mut cursor = 0usize;
    for (_, mut members) in by_class {
        members.shuffle(&mut rng);
        for idx in members {
            folds[cursor % k].push(idx);
            cursor += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Fraction of exact matches. Errors on empty or mismatched inputs.
fn fold_accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    crate::bench::accuracy(pred, truth)
}

/// Grid search with stratified k-fold selection.
///
/// Every candidate trains `k` times; the winner maximizes mean fold
/// accuracy with ties broken by grid order. Per-fold training seeds
/// derive from (seed, candidate, fold), so re-runs are identical.
pub fn cross_validate(
    spec: &ClassifierSpec,
    x: &Array2<f64>,
    y: &[usize],
    k: usize,
    seed: u64,
) -> Result<CvResult> {
    spec.validate()?;
    if spec.kind == ClassifierKind::Cnn {
        return Err(Error::Precondition(
            "cnn selects by validation loss, not k-fold; use cnn::train_cnn".into(),
        ));
    }
    if x.dim().0 != y.len() {
        return Err(Error::Precondition(format!("{} rows vs {} labels", x.dim().0, y.len())));
    }
    let folds = stratified_kfold(y, k, seed)?;
    // Every training fold must keep both classes.
    for (fi, fold) in folds.iter().enumerate() {
        let held: std::collections::HashSet<usize> = fold.iter().copied().collect();
        let mut seen: std::collections::BTreeSet<usize> = Default::default();
        for (i, l) in y.iter().enumerate() {
            if !held.contains(&i) {
                seen.insert(*l);
            }
        }
        if seen.len() < 2 {
            return Err(Error::Precondition(format!(
                "training fold {fi} is single-class; stratification precondition violated"
            )));
        }
    }

    let candidates = spec.candidates();
    let mut fold_scores = Vec::with_capacity(candidates.len());
    for (ci, cand) in candidates.iter().enumerate() {
        let mut scores = Vec::with_capacity(k);
        for (fi, fold) in folds.iter().enumerate() {
            let held: std::collections::HashSet<usize> = fold.iter().copied().collect();
            let train_idx: Vec<usize> = (0..y.len()).filter(|i| !held.contains(i)).collect();
            let xt = select_rows(x, &train_idx);
            let yt: Vec<usize> = train_idx.iter().map(|i| y[*i]).collect();
            let xv = select_rows(x, fold);
            let yv: Vec<usize> = fold.iter().map(|i| y[*i]).collect();
            let fold_seed = rng::derive(seed, &format!("cv/{ci}/{fi}")).next_u64();
            let pred = fit_predict(spec.kind, cand, &xt, &yt, &xv, fold_seed)?;
            scores.push(fold_accuracy(&pred, &yv)?);
        }
        fold_scores.push(scores);
    }
    let mean_scores: Vec<f64> =
        fold_scores.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    let mut selected = 0;
    for (i, m) in mean_scores.iter().enumerate() {
        if *m > mean_scores[selected] {
            selected = i;
        }
    }
    Ok(CvResult { candidates, fold_scores, mean_scores, selected })
}

use rand_chacha::rand_core::RngCore;

fn select_rows(x: &Array2<f64>, idx: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((idx.len(), x.dim().1), |(i, j)| x[(idx[i], j)])
}

/// A fitted feature-space classifier.
pub enum FittedClassifier {
    Knn(KnnModel),
    Svm(SvmModel),
    Forest(ForestModel),
}

impl FittedClassifier {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        match self {
            FittedClassifier::Knn(m) => m.predict(x),
            FittedClassifier::Svm(m) => m.predict(x),
            FittedClassifier::Forest(m) => m.predict(x),
        }
    }
}

/// Fit a feature-space classifier with concrete hyperparameters.
pub fn fit(
    kind: ClassifierKind,
    params: &ParamSet,
    x_train: &Array2<f64>,
    y_train: &[usize],
    seed: u64,
) -> Result<FittedClassifier> {
    match kind {
        ClassifierKind::Knn => {
            let k = params.get_int("k")? as usize;
            Ok(FittedClassifier::Knn(KnnModel::fit(k, x_train.clone(), y_train.to_vec())?))
        }
        ClassifierKind::Svm => {
            let c = params.get_float("c")?;
            let kernel = match params.get_str("kernel")? {
                "linear" => Kernel::Linear,
                "rbf" => Kernel::Rbf { gamma: params.get_float("gamma")? },
                other => return Err(Error::Config(format!("unknown kernel '{other}'"))),
            };
            Ok(FittedClassifier::Svm(SvmModel::fit(c, kernel, x_train.clone(), y_train, seed)?))
        }
        ClassifierKind::RandomForest => {
            let p = ForestParams {
                n_trees: params.get_int("trees")? as usize,
                max_depth: params.get_int("max_depth")? as usize,
                bootstrap: true,
            };
            Ok(FittedClassifier::Forest(ForestModel::fit(&p, x_train.clone(), y_train, seed)?))
        }
        ClassifierKind::Cnn => {
            Err(Error::Precondition("cnn consumes images, not feature matrices".into()))
        }
    }
}

/// Fit on the training matrix, predict the test matrix.
pub fn fit_predict(
    kind: ClassifierKind,
    params: &ParamSet,
    x_train: &Array2<f64>,
    y_train: &[usize],
    x_test: &Array2<f64>,
    seed: u64,
) -> Result<Vec<usize>> {
    if x_train.dim().1 != x_test.dim().1 {
        return Err(Error::ShapeMismatch {
            expected: format!("{} features", x_train.dim().1),
            got: format!("{} features", x_test.dim().1),
        });
    }
    fit(kind, params, x_train, y_train, seed)?.predict(x_test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn kfold_sizes_and_partition_laws() {
        let folds = kfold_partition(10, 5, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));

        let folds = kfold_partition(11, 5, 2).unwrap();
        let mut sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);

        for (n, k, seed) in [(17, 4, 3u64), (100, 7, 9), (5, 5, 0)] {
            let folds = kfold_partition(n, k, seed).unwrap();
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert!(kfold_partition(3, 5, 1).is_err());
    }

    #[test]
    fn kfold_is_deterministic_in_seed() {
        assert_eq!(kfold_partition(20, 5, 7).unwrap(), kfold_partition(20, 5, 7).unwrap());
        assert_ne!(kfold_partition(20, 5, 7).unwrap(), kfold_partition(20, 5, 8).unwrap());
    }

    #[test]
    fn stratified_folds_preserve_class_ratios_within_one() {
        let labels: Vec<usize> = (0..53).map(|i| usize::from(i % 3 == 0)).collect();
        let folds = stratified_kfold(&labels, 5, 4).unwrap();
        let n1 = labels.iter().filter(|l| **l == 1).count();
        for fold in &folds {
            let c1 = fold.iter().filter(|i| labels[**i] == 1).count();
            let expect = n1 as f64 * fold.len() as f64 / labels.len() as f64;
            assert!((c1 as f64 - expect).abs() <= 1.0, "fold class count {c1} vs expected {expect}");
        }
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..53).collect::<Vec<_>>());
    }

    fn blobs(n: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = rng::rng_from_seed(seed);
        let x = Array2::from_shape_fn((n, 2), |(i, _)| {
            let c = if i % 2 == 0 { -3.0 } else { 3.0 };
            c + rng.gen::<f64>() - 0.5
        });
        let y = (0..n).map(|i| i % 2).collect();
        (x, y)
    }

    #[test]
    fn single_candidate_is_always_selected() {
        let (x, y) = blobs(20, 10);
        let spec = ClassifierSpec {
            kind: ClassifierKind::Knn,
            grid: vec![("k".into(), vec![ParamValue::Int(3)])],
        };
        let cv = cross_validate(&spec, &x, &y, 5, 1).unwrap();
        assert_eq!(cv.selected, 0);
        assert_eq!(cv.candidates.len(), 1);
    }

    #[test]
    fn separable_blobs_tie_and_break_by_grid_order() {
        let (x, y) = blobs(40, 11);
        let spec = ClassifierSpec {
            kind: ClassifierKind::Knn,
            grid: vec![("k".into(), vec![ParamValue::Int(1), ParamValue::Int(3)])],
        };
        let cv = cross_validate(&spec, &x, &y, 5, 2).unwrap();
        assert!(cv.mean_scores.iter().all(|m| *m == 1.0), "{:?}", cv.mean_scores);
        assert_eq!(cv.selected, 0, "ties must fall to the first candidate in grid order");
        assert_eq!(cv.selected_params().get_int("k").unwrap(), 1);
    }

    #[test]
    fn cross_validate_is_deterministic() {
        let (x, y) = blobs(30, 12);
        let spec = ClassifierSpec::default_random_forest();
        let a = cross_validate(&spec, &x, &y, 5, 3).unwrap();
        let b = cross_validate(&spec, &x, &y, 5, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_class_folds_are_rejected() {
        let x = Array2::zeros((10, 2));
        let y = vec![0; 10];
        let spec = ClassifierSpec::default_knn();
        assert!(cross_validate(&spec, &x, &y, 5, 1).is_err());
    }

    #[test]
    fn bad_grid_names_are_rejected() {
        let spec = ClassifierSpec {
            kind: ClassifierKind::Knn,
            grid: vec![("depth".into(), vec![ParamValue::Int(3)])],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn candidates_enumerate_in_grid_order() {
        let spec = ClassifierSpec {
            kind: ClassifierKind::Svm,
            grid: vec![
                ("c".into(), vec![ParamValue::Float(1.0), ParamValue::Float(10.0)]),
                ("kernel".into(), vec![ParamValue::Str("rbf".into())]),
                ("gamma".into(), vec![ParamValue::Float(0.5), ParamValue::Float(2.0)]),
            ],
        };
        let cands = spec.candidates();
        assert_eq!(cands.len(), 4);
        assert_eq!(cands[0].get_float("c").unwrap(), 1.0);
        assert_eq!(cands[0].get_float("gamma").unwrap(), 0.5);
        assert_eq!(cands[1].get_float("gamma").unwrap(), 2.0);
        assert_eq!(cands[2].get_float("c").unwrap(), 10.0);
    }
}
