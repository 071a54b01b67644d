//! Stratified k-fold cross-validation with an inner train/validation split
//! for hyper-parameter selection.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::metrics::{binary_f1, confusion_matrix, macro_f1, Confusion};
use crate::corpus::{label_set, CohortLabel};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::lr::{lr_train_with, LrOptions, C_GRID, DEFAULT_TOL};
use crate::math::argmax;
use crate::nlse::{nlse_train, NlseTrainConfig, LR_GRID, SDIM_GRID};
use crate::rng;

pub const DEFAULT_FOLDS: usize = 10;
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Assigns each index to one of `k` folds, stratified by label. Every
/// class is shuffled with its own seeded stream and dealt round-robin,
/// continuing where the previous class stopped.
pub fn stratified_kfold(labels: &[CohortLabel], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut folds = vec![0; labels.len()];
    let mut next = 0;
    for (ci, class) in label_set(labels).into_iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::invalid(format!(
                "class {class} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng::stream(seed, "kfold", ci as u64));
        for i in members {
            folds[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(folds)
}

/// Splits `indices` into `(train, validation)` with about `fraction` of each
/// class in validation (at least one when the class has two or more rows).
pub fn stratified_holdout(
    indices: &[usize],
    labels: &[CohortLabel],
    fraction: f64,
    seed: u64,
    stream: u64,
) -> (Vec<usize>, Vec<usize>) {
    let subset: Vec<CohortLabel> = indices.iter().map(|&i| labels[i]).collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (ci, class) in label_set(&subset).into_iter().enumerate() {
        let mut members: Vec<usize> = indices.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng::stream(rng::derive_seed(seed, "inner-split", stream), "class", ci as u64));
        let n_val = if members.len() < 2 {
            0
        } else {
            ((fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1)
        };
        val.extend_from_slice(&members[..n_val]);
        train.extend_from_slice(&members[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Lr { c_grid: Vec<f64>, tol: f64 },
    Nlse {
        sdim_grid: Vec<usize>,
        lr_grid: Vec<f64>,
        base: NlseTrainConfig,
    },
}

impl ModelSpec {
    /// LR over the standard regularisation grid.
    pub fn lr() -> Self {
        ModelSpec::Lr {
            c_grid: C_GRID.to_vec(),
            tol: DEFAULT_TOL,
        }
    }

    /// NLSE over the standard subspace-size and learning-rate grids.
    pub fn nlse() -> Self {
        ModelSpec::Nlse {
            sdim_grid: SDIM_GRID.to_vec(),
            lr_grid: LR_GRID.to_vec(),
            base: NlseTrainConfig::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Lr { .. } => "lr",
            ModelSpec::Nlse { .. } => "nlse",
        }
    }

    /// Grid points in search order.
    pub fn grid(&self) -> Vec<HyperParams> {
        match self {
            ModelSpec::Lr { c_grid, .. } => c_grid.iter().map(|&c| HyperParams::Lr { c }).collect(),
            ModelSpec::Nlse { sdim_grid, lr_grid, .. } => sdim_grid
                .iter()
                .flat_map(|&s| lr_grid.iter().map(move |&lr| HyperParams::Nlse { subspace_dim: s, learning_rate: lr }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperParams {
    Lr { c: f64 },
    Nlse { subspace_dim: usize, learning_rate: f64 },
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParams::Lr { c } => write!(f, "c={c}"),
            HyperParams::Nlse {
                subspace_dim,
                learning_rate,
            } => write!(f, "s_dim={subspace_dim};lr={learning_rate}"),
        }
    }
}

/// A fitted classifier that predicts class indices.
enum Fitted {
    Lr(crate::lr::LrModel),
    Nlse(crate::nlse::NlseModel),
}

impl Fitted {
    fn predict(&self, x: &[f64], classes: &[CohortLabel]) -> usize {
        let (labels, p) = match self {
            Fitted::Lr(m) => (&m.labels, m.predict_proba(x)),
            Fitted::Nlse(m) => (&m.labels, m.forward(x).1),
        };
        let label = labels[argmax(&p)];
        classes.binary_search(&label).expect("model labels within dataset labels")
    }
}

fn fit(
    spec: &ModelSpec,
    hp: HyperParams,
    x: &Array2<f64>,
    labels: &[CohortLabel],
    train: &[usize],
    val: &[usize],
    seed: u64,
) -> Result<Fitted> {
    match (spec, hp) {
        (ModelSpec::Lr { tol, .. }, HyperParams::Lr { c }) => {
            let xt = x.select(Axis(0), train);
            let yt: Vec<CohortLabel> = train.iter().map(|&i| labels[i]).collect();
            let opts = LrOptions {
                c,
                tol: *tol,
                ..Default::default()
            };
            lr_train_with(&xt, &yt, &opts, None).map(Fitted::Lr)
        }
        (
            ModelSpec::Nlse { base, .. },
            HyperParams::Nlse {
                subspace_dim,
                learning_rate,
            },
        ) => {
            let config = NlseTrainConfig {
                subspace_dim,
                learning_rate,
                seed,
                ..base.clone()
            };
            nlse_train(x, labels, train, val, &config).map(|f| Fitted::Nlse(f.model))
        }
        _ => unreachable!("grid points come from the spec"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub test_size: usize,
    pub chosen: HyperParams,
    pub val_macro_f1: f64,
    pub confusion: Confusion,
    pub macro_f1: f64,
    pub binary_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub model: String,
    pub features: String,
    pub labels: Vec<CohortLabel>,
    pub grid: Vec<HyperParams>,
    pub folds: Vec<FoldReport>,
    pub mean_macro_f1: f64,
    pub mean_binary_f1: f64,
}

impl CvReport {
    /// Per-fold metrics table.
    pub fn write_folds_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "fold,train,val,test,chosen,val_macro_f1,test_macro_f1,test_binary_f1,confusion")?;
        for f in &self.folds {
            let conf: Vec<String> = f
                .confusion
                .iter()
                .map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "))
                .collect();
            writeln!(
                w,
                "{},{},{},{},{},{:.16e},{:.16e},{:.16e},{}",
                f.fold,
                f.train_size,
                f.val_size,
                f.test_size,
                f.chosen,
                f.val_macro_f1,
                f.macro_f1,
                f.binary_f1,
                conf.join("|")
            )?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs `k`-fold CV. Per fold the remaining rows are split 80/20 (stratified,
/// seeded by fold), every grid point is trained on the 80% and scored by
/// validation macro-F1 (first grid point wins ties), and the winner is
/// evaluated on the held-out fold.
pub fn cross_validate(features: &FeatureTable, spec: &ModelSpec, k: usize, seed: u64) -> Result<CvReport> {
    let labels = &features.labels;
    let classes = label_set(labels);
    let afflicted: Vec<usize> = (0..classes.len()).filter(|&c| classes[c].is_afflicted()).collect();
    let folds = stratified_kfold(labels, k, seed)?;
    let grid = spec.grid();
    if grid.is_empty() {
        return Err(Error::Config(format!("empty hyper-parameter grid for {}", spec.name())));
    }
    let x = features.rows.as_standard_layout().into_owned();

    let reports = (0..k)
        .into_par_iter()
        .map(|fold| -> Result<FoldReport> {
            let test: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] == fold).collect();
            let rest: Vec<usize> = (0..labels.len()).filter(|&i| folds[i] != fold).collect();
            let (train, val) = stratified_holdout(&rest, labels, VALIDATION_FRACTION, seed, fold as u64);
            let fold_seed = rng::derive_seed(seed, "cv-fold", fold as u64);
            let val_truth: Vec<usize> = val.iter().map(|&i| classes.binary_search(&labels[i]).unwrap()).collect();

            let mut best: Option<(HyperParams, f64, Fitted)> = None;
            for &hp in &grid {
                let model = fit(spec, hp, &x, labels, &train, &val, fold_seed)
                    .map_err(|e| Error::invalid(format!("fold {fold}, {hp}: {e}")))?;
                let pred: Vec<usize> = val.iter().map(|&i| model.predict(x.row(i).as_slice().unwrap(), &classes)).collect();
                let f1 = macro_f1(&confusion_matrix(&val_truth, &pred, classes.len()));
                if best.as_ref().is_none_or(|b| f1 > b.1) {
                    best = Some((hp, f1, model));
                }
            }
            let (chosen, val_f1, model) = best.expect("nonempty grid");
            let truth: Vec<usize> = test.iter().map(|&i| classes.binary_search(&labels[i]).unwrap()).collect();
            let pred: Vec<usize> = test.iter().map(|&i| model.predict(x.row(i).as_slice().unwrap(), &classes)).collect();
            let confusion = confusion_matrix(&truth, &pred, classes.len());
            Ok(FoldReport {
                fold,
                train_size: train.len(),
                val_size: val.len(),
                test_size: test.len(),
                chosen,
                val_macro_f1: val_f1,
                macro_f1: macro_f1(&confusion),
                binary_f1: binary_f1(&confusion, &afflicted),
                confusion,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n = reports.len() as f64;
    Ok(CvReport {
        model: spec.name().to_string(),
        features: features.kind.to_string(),
        labels: classes,
        grid,
        mean_macro_f1: reports.iter().map(|f| f.macro_f1).sum::<f64>() / n,
        mean_binary_f1: reports.iter().map(|f| f.binary_f1).sum::<f64>() / n,
        folds: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CohortLabel::{Control, Depression, Ptsd};
    use crate::features::FeatureKind;

    fn labels_3x(n: usize) -> Vec<CohortLabel> {
        (0..3 * n).map(|i| [Control, Depression, Ptsd][i % 3]).collect()
    }

    #[test]
    fn kfold_exact_divisibility() {
        let labels = labels_3x(10);
        let folds = stratified_kfold(&labels, 10, 5).unwrap();
        for f in 0..10 {
            let mut counts = [0; 3];
            for (i, &fi) in folds.iter().enumerate() {
                if fi == f {
                    counts[i % 3] += 1;
                }
            }
            assert_eq!(counts, [1, 1, 1]);
        }
        assert_eq!(stratified_kfold(&labels, 10, 5).unwrap(), folds);
        assert_ne!(stratified_kfold(&labels, 10, 6).unwrap(), folds);
        assert!(stratified_kfold(&labels_3x(4), 5, 0).is_err());
    }

    #[test]
    fn kfold_balance_with_remainders() {
        let mut labels = vec![Control; 23];
        labels.extend(vec![Ptsd; 17]);
        let folds = stratified_kfold(&labels, 10, 1).unwrap();
        for class in [Control, Ptsd] {
            let n = labels.iter().filter(|&&l| l == class).count() as f64;
            for f in 0..10 {
                let c = (0..labels.len()).filter(|&i| labels[i] == class && folds[i] == f).count() as f64;
                assert!((c - n / 10.0).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn holdout_is_stratified_partition() {
        let labels = labels_3x(10);
        let idx: Vec<usize> = (0..30).collect();
        let (train, val) = stratified_holdout(&idx, &labels, 0.2, 3, 0);
        assert_eq!(val.len(), 6);
        assert_eq!(train.len(), 24);
        for c in [Control, Depression, Ptsd] {
            assert_eq!(val.iter().filter(|&&i| labels[i] == c).count(), 2);
        }
    }

    #[test]
    fn cv_on_separable_features() {
        let labels = labels_3x(12);
        let rows = labels.iter().enumerate().map(|(i, &l)| {
            let c = [Control, Depression, Ptsd].iter().position(|&x| x == l).unwrap();
            let mut v = vec![0.1 * ((i * 7) % 5) as f64; 3];
            v[c] += 3.0;
            (format!("u{i}"), l, v)
        });
        let table = FeatureTable::from_vectors(FeatureKind::Bow, rows).unwrap();
        let report = cross_validate(&table, &ModelSpec::lr(), 4, 9).unwrap();
        assert_eq!(report.folds.len(), 4);
        assert!(report.mean_macro_f1 > 0.99);
        let mut seen: Vec<usize> = report.folds.iter().map(|f| f.test_size).collect();
        seen.sort();
        assert_eq!(seen.iter().sum::<usize>(), 36);
        assert_eq!(cross_validate(&table, &ModelSpec::lr(), 4, 9).unwrap(), report);
        assert_eq!(ModelSpec::nlse().grid().len(), 16);
    }
}
