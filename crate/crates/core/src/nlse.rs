//! Non-linear subspace embedding classifier.
//!
//! Fixed user embeddings `u` are projected into a small subspace,
//! `g = sigmoid(S u)`, and classified linearly, `p = softmax(beta g + b)`.
//! Only `S`, `beta` and `b` are learned; the embeddings are never touched.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{label_set, CohortLabel};
use crate::error::{Error, Result};
use crate::eval::metrics::{confusion_matrix, macro_f1};
use crate::math::{argmax, axpy, dot, sigmoid, softmax_in_place};
use crate::rng;
use crate::uservec::UserEmbeddingMatrix;
use crate::wordvec::{row, row_mut};

pub const SDIM_GRID: [usize; 4] = [10, 15, 20, 25];
pub const LR_GRID: [f64; 4] = [0.01, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct NlseModel {
    /// `S`, `s_dim x d`
    pub projection: Array2<f64>,
    /// `beta`, `|Y| x s_dim`
    pub classifier: Array2<f64>,
    pub bias: Vec<f64>,
    pub labels: Vec<CohortLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlseTrainConfig {
    pub subspace_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for NlseTrainConfig {
    fn default() -> Self {
        NlseTrainConfig {
            subspace_dim: 10,
            learning_rate: 0.1,
            batch_size: 16,
            max_epochs: 200,
            patience: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NlseGradients {
    pub loss: f64,
    pub projection: Array2<f64>,
    pub classifier: Array2<f64>,
    pub bias: Vec<f64>,
}

impl NlseModel {
    /// `S ~ U[-r, r]` with `r = sqrt(6 / (s_dim + d))`; `beta = 0`, `b = 0`.
    pub fn init(dim: usize, subspace_dim: usize, labels: Vec<CohortLabel>, seed: u64) -> Result<Self> {
        if subspace_dim == 0 || subspace_dim >= dim {
            return Err(Error::Config(format!(
                "subspace size {subspace_dim} must be in 1..{dim} (below the embedding size)"
            )));
        }
        let r = (6.0 / (subspace_dim + dim) as f64).sqrt();
        let mut rng = rng::stream(seed, "nlse-init", 0);
        let projection = Array2::from_shape_simple_fn((subspace_dim, dim), || rng.random_range(-r..r));
        let k = labels.len();
        Ok(NlseModel {
            projection,
            classifier: Array2::zeros((k, subspace_dim)),
            bias: vec![0.0; k],
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn subspace_dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    /// `s_dim * d + |Y| * s_dim + |Y|`
    pub fn param_count(&self) -> usize {
        let (s, d, k) = (self.subspace_dim(), self.dim(), self.num_classes());
        s * d + k * s + k
    }

    /// Subspace features `sigmoid(S u)`.
    pub fn subspace(&self, u: &[f64]) -> Vec<f64> {
        (0..self.subspace_dim())
            .map(|i| sigmoid(dot(row(&self.projection, i), u)))
            .collect()
    }

    /// Class probabilities from subspace features.
    pub fn classify(&self, g: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = (0..self.num_classes())
            .map(|k| dot(row(&self.classifier, k), g) + self.bias[k])
            .collect();
        softmax_in_place(&mut z);
        z
    }

    pub fn forward(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = self.subspace(u);
        let p = self.classify(&g);
        (g, p)
    }

    pub fn predict(&self, u: &[f64]) -> CohortLabel {
        self.labels[argmax(&self.forward(u).1)]
    }

    /// Mean cross-entropy over `batch` of `(embedding, class index)` and
    /// its exact gradients with respect to `S`, `beta` and `b`.
    pub fn gradients(&self, batch: &[(&[f64], usize)]) -> NlseGradients {
        let (s, d, k) = (self.subspace_dim(), self.dim(), self.num_classes());
        let mut out = NlseGradients {
            loss: 0.0,
            projection: Array2::zeros((s, d)),
            classifier: Array2::zeros((k, s)),
            bias: vec![0.0; k],
        };
        if batch.is_empty() {
            return out;
        }
        let inv_n = 1.0 / batch.len() as f64;
        let mut dg = vec![0.0; s];
        for &(u, y) in batch {
            let (g, mut p) = self.forward(u);
            out.loss -= p[y].max(f64::MIN_POSITIVE).ln() * inv_n;
            p[y] -= 1.0;
            dg.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..k {
                let dz = p[c] * inv_n;
                out.bias[c] += dz;
                axpy(dz, &g, row_mut(&mut out.classifier, c));
                axpy(dz, row(&self.classifier, c), &mut dg);
            }
            for i in 0..s {
                let da = dg[i] * g[i] * (1.0 - g[i]);
                axpy(da, u, row_mut(&mut out.projection, i));
            }
        }
        out
    }

    /// Mean cross-entropy only.
    pub fn loss(&self, batch: &[(&[f64], usize)]) -> f64 {
        let n = batch.len() as f64;
        batch
            .iter()
            .map(|&(u, y)| -self.forward(u).1[y].max(f64::MIN_POSITIVE).ln() / n)
            .sum()
    }

    fn apply(&mut self, grads: &NlseGradients, lr: f64) {
        self.projection.scaled_add(-lr, &grads.projection);
        self.classifier.scaled_add(-lr, &grads.classifier);
        axpy(-lr, &grads.bias, &mut self.bias);
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        let labels: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        writeln!(
            w,
            "s_dim,{},d,{},labels,{}",
            self.subspace_dim(),
            self.dim(),
            labels.join(";")
        )?;
        let mut block = |name: &str, rows: Vec<&[f64]>| -> std::io::Result<()> {
            writeln!(w, "[{name}]")?;
            for r in rows {
                let cells: Vec<String> = r.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(w, "{}", cells.join(","))?;
            }
            Ok(())
        };
        block("S", (0..self.subspace_dim()).map(|i| row(&self.projection, i)).collect())?;
        block("beta", (0..self.num_classes()).map(|k| row(&self.classifier, k)).collect())?;
        block("bias", vec![&self.bias])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty file"))?;
        let header = header?;
        let h: Vec<&str> = header.split(',').collect();
        if h.len() != 6 || h[0] != "s_dim" || h[2] != "d" || h[4] != "labels" {
            return Err(Error::parse(path, 1, "bad NLSE header"));
        }
        let s: usize = h[1].parse().map_err(|_| Error::parse(path, 1, "bad s_dim"))?;
        let d: usize = h[3].parse().map_err(|_| Error::parse(path, 1, "bad d"))?;
        let labels = h[5].split(';').map(str::parse).collect::<Result<Vec<CohortLabel>>>()?;
        let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
        for (i, line) in lines {
            let line = line?;
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                blocks.push((name.to_string(), Vec::new()));
                continue;
            }
            let (_, data) = blocks.last_mut().ok_or_else(|| Error::parse(path, i + 1, "value outside a block"))?;
            for f in line.split(',') {
                data.push(f.parse().map_err(|_| Error::parse(path, i + 1, format!("bad value '{f}'")))?);
            }
        }
        let take = |name: &str, len: usize| -> Result<Vec<f64>> {
            let data = blocks
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, d)| d.clone())
                .ok_or_else(|| Error::invalid(format!("missing [{name}] block")))?;
            if data.len() != len {
                return Err(Error::Dimension { expected: len, got: data.len() });
            }
            Ok(data)
        };
        let k = labels.len();
        Ok(NlseModel {
            projection: Array2::from_shape_vec((s, d), take("S", s * d)?).expect("checked"),
            classifier: Array2::from_shape_vec((k, s), take("beta", k * s)?).expect("checked"),
            bias: take("bias", k)?,
            labels,
        })
    }
}

/// Result of [`nlse_train`].
#[derive(Debug, Clone, PartialEq)]
pub struct NlseFit {
    pub model: NlseModel,
    pub best_epoch: usize,
    pub best_val_f1: f64,
    /// Validation macro-F1 after each evaluated epoch, starting at epoch 0.
    pub val_f1: Vec<f64>,
}

/// Mini-batch SGD on rows `train_idx` of `x`, early-stopped on the
/// validation macro-F1 of rows `val_idx`. Ties in F1 are broken by lower
/// validation cross-entropy. Returns the best model seen.
pub fn nlse_train(
    x: &Array2<f64>,
    labels: &[CohortLabel],
    train_idx: &[usize],
    val_idx: &[usize],
    config: &NlseTrainConfig,
) -> Result<NlseFit> {
    if x.nrows() != labels.len() {
        return Err(Error::Dimension {
            expected: x.nrows(),
            got: labels.len(),
        });
    }
    if config.batch_size == 0 || config.patience == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::Config("batch size, patience and learning rate must be positive".into()));
    }
    let classes = label_set(labels);
    let train_classes = label_set(&train_idx.iter().map(|&i| labels[i]).collect::<Vec<_>>());
    if let Some(missing) = classes.iter().find(|c| !train_classes.contains(c)) {
        return Err(Error::invalid(format!("class {missing} has no training rows")));
    }
    if val_idx.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    if train_idx.iter().any(|i| val_idx.contains(i)) {
        return Err(Error::invalid("training and validation rows overlap"));
    }
    let x = x.as_standard_layout();
    let class_of = |i: usize| classes.binary_search(&labels[i]).expect("label in set");
    let rows: Vec<(&[f64], usize)> = (0..x.nrows())
        .map(|i| (&x.as_slice().expect("standard layout")[i * x.ncols()..(i + 1) * x.ncols()], class_of(i)))
        .collect();
    let val: Vec<(&[f64], usize)> = val_idx.iter().map(|&i| rows[i]).collect();
    let val_truth: Vec<usize> = val.iter().map(|r| r.1).collect();
    let evaluate = |m: &NlseModel| {
        let pred: Vec<usize> = val.iter().map(|(u, _)| argmax(&m.forward(u).1)).collect();
        let f1 = macro_f1(&confusion_matrix(&val_truth, &pred, classes.len()));
        (f1, m.loss(&val))
    };

    let mut model = NlseModel::init(x.ncols(), config.subspace_dim, classes.clone(), config.seed)?;
    let (mut best_f1, mut best_loss) = evaluate(&model);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut history = vec![best_f1];
    let mut order = train_idx.to_vec();
    let mut rng = rng::stream(config.seed, "nlse-shuffle", 0);
    let mut stale = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], usize)> = chunk.iter().map(|&i| rows[i]).collect();
            let grads = model.gradients(&batch);
            model.apply(&grads, config.learning_rate);
        }
        let (f1, loss) = evaluate(&model);
        history.push(f1);
        if f1 > best_f1 || (f1 == best_f1 && loss < best_loss) {
            best_f1 = f1;
            best_loss = loss;
            best = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(NlseFit {
        model: best,
        best_epoch,
        best_val_f1: best_f1,
        val_f1: history,
    })
}

/// Subspace features for `user_ids`, one row each, in request order.
pub fn subspace_features(model: &NlseModel, users: &UserEmbeddingMatrix, user_ids: &[String]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((user_ids.len(), model.subspace_dim()));
    for (r, id) in user_ids.iter().enumerate() {
        let j = users.index_of(id).ok_or_else(|| Error::UnknownUser(id.clone()))?;
        let g = model.subspace(users.vector(j));
        row_mut(&mut out, r).copy_from_slice(&g);
    }
    Ok(out)
}

/// Mean subspace feature vector of the users labelled `class`; `labels`
/// follows the row order of `users`.
pub fn class_prototype(
    model: &NlseModel,
    users: &UserEmbeddingMatrix,
    labels: &[CohortLabel],
    class: CohortLabel,
) -> Result<Vec<f64>> {
    if labels.len() != users.len() {
        return Err(Error::Dimension {
            expected: users.len(),
            got: labels.len(),
        });
    }
    let mut sum = vec![0.0; model.subspace_dim()];
    let mut n = 0;
    for (j, _) in labels.iter().enumerate().filter(|(_, &l)| l == class) {
        axpy(1.0, &model.subspace(users.vector(j)), &mut sum);
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid(format!("class {class} has no users")));
    }
    sum.iter_mut().for_each(|v| *v /= n as f64);
    Ok(sum)
}

/// Writes `user_id,label,g0..g{s-1}`.
pub fn write_subspace_csv(path: &Path, user_ids: &[String], labels: &[CohortLabel], g: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "user_id,label")?;
    for i in 0..g.ncols() {
        write!(w, ",g{i}")?;
    }
    writeln!(w)?;
    for (r, (id, label)) in user_ids.iter().zip(labels).enumerate() {
        write!(w, "{id},{label}")?;
        for v in g.row(r) {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CohortLabel::{Control, Depression, Ptsd};
    use rand_distr::{Distribution, Normal};

    fn labels3() -> Vec<CohortLabel> {
        vec![Control, Depression, Ptsd]
    }

    #[test]
    fn forward_basics() {
        let mut m = NlseModel::init(6, 3, labels3(), 1).unwrap();
        let u = [0.3, -1.0, 2.0, 0.0, 1.0, -0.5];
        let (_, p) = m.forward(&u);
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        m.projection.fill(0.0);
        assert_eq!(m.forward(&u).0, vec![0.5; 3]);
        assert!(NlseModel::init(6, 6, labels3(), 1).is_err());
    }

    #[test]
    fn saturated_optimum_has_tiny_gradient() {
        let mut m = NlseModel::init(4, 2, vec![Control, Depression], 0).unwrap();
        m.projection = ndarray::array![[50.0, 0.0, 0.0, 0.0], [0.0, 50.0, 0.0, 0.0]];
        m.classifier = ndarray::array![[40.0, -40.0], [-40.0, 40.0]];
        let a = [1.0, -1.0, 0.0, 0.0];
        let b = [-1.0, 1.0, 0.0, 0.0];
        let g = m.gradients(&[(&a, 0), (&b, 1)]);
        let max = g
            .projection
            .iter()
            .chain(g.classifier.iter())
            .chain(g.bias.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        assert!(max < 1e-6, "{max}");
    }

    #[test]
    fn parameter_count() {
        for s in SDIM_GRID {
            let m = NlseModel::init(400, s, labels3(), 0).unwrap();
            assert_eq!(m.param_count(), s * 400 + 3 * s + 3);
        }
    }

    fn planted(n_per: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<CohortLabel>) {
        let mut rng = rng::stream(seed, "planted", 0);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Array2::zeros((3 * n_per, d));
        let mut y = Vec::new();
        for c in 0..3 {
            for i in 0..n_per {
                let r = c * n_per + i;
                for j in 0..d {
                    x[[r, j]] = noise.sample(&mut rng) + if j % 3 == c { 1.5 } else { 0.0 };
                }
                y.push(labels3()[c]);
            }
        }
        (x, y)
    }

    #[test]
    fn learns_planted_classes_and_leaves_input_alone() {
        let (x, y) = planted(40, 50, 3);
        let before = x.clone();
        let idx: Vec<usize> = (0..x.nrows()).collect();
        let train: Vec<usize> = idx.iter().copied().filter(|i| i % 5 != 0).collect();
        let val: Vec<usize> = idx.iter().copied().filter(|i| i % 5 == 0).collect();
        let config = NlseTrainConfig {
            subspace_dim: 10,
            learning_rate: 0.5,
            seed: 2,
            ..Default::default()
        };
        let fit = nlse_train(&x, &y, &train, &val, &config).unwrap();
        assert_eq!(x, before);
        assert!(fit.best_val_f1 >= 0.95, "{}", fit.best_val_f1);
        let max = fit.val_f1.iter().copied().fold(0.0, f64::max);
        assert_eq!(fit.val_f1[fit.best_epoch], max);
        assert_eq!(nlse_train(&x, &y, &train, &val, &config).unwrap(), fit);

        let zero = nlse_train(&x, &y, &train, &val, &NlseTrainConfig { max_epochs: 0, ..config.clone() }).unwrap();
        assert_eq!(zero.model, NlseModel::init(50, 10, labels3(), 2).unwrap());

        let no_ptsd: Vec<usize> = train.iter().copied().filter(|&i| y[i] != Ptsd).collect();
        let err = nlse_train(&x, &y, &no_ptsd, &val, &config).unwrap_err();
        assert!(err.to_string().contains("ptsd"));
    }

    #[test]
    fn export_and_prototypes() {
        let (x, y) = planted(3, 8, 1);
        let ids: Vec<String> = (0..x.nrows()).map(|i| format!("u{i}")).collect();
        let users = UserEmbeddingMatrix::new(ids.clone(), x).unwrap();
        let mut m = NlseModel::init(8, 4, labels3(), 0).unwrap();
        let req = vec!["u4".to_string(), "u0".to_string()];
        let g = subspace_features(&m, &users, &req).unwrap();
        assert_eq!(g.row(0).to_vec(), m.subspace(users.vector(4)));
        assert_eq!(g.row(1).to_vec(), m.subspace(users.vector(0)));
        assert!(subspace_features(&m, &users, &["nobody".to_string()]).is_err());

        let single = class_prototype(&m, &users, &[Control, Depression, Depression, Ptsd, Ptsd, Ptsd, Ptsd, Ptsd, Ptsd], Control).unwrap();
        assert_eq!(single, m.subspace(users.vector(0)));
        assert!(class_prototype(&m, &users, &y, CohortLabel::Synthetic(5)).is_err());

        m.projection.fill(0.0);
        let all = subspace_features(&m, &users, &ids).unwrap();
        assert!(all.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn prototype_is_mean() {
        // two users whose g vectors are (0.2, 0.8) and (0.4, 0.6)
        let logit = |p: f64| (p / (1.0 - p)).ln();
        let users = UserEmbeddingMatrix::new(
            vec!["a".into(), "b".into()],
            ndarray::array![[logit(0.2), logit(0.8), 0.0], [logit(0.4), logit(0.6), 0.0]],
        )
        .unwrap();
        let mut m = NlseModel::init(3, 2, vec![Control, Ptsd], 0).unwrap();
        m.projection = ndarray::array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let p = class_prototype(&m, &users, &[Ptsd, Ptsd], Ptsd).unwrap();
        assert!((p[0] - 0.3).abs() < 1e-12 && (p[1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = NlseModel::init(5, 2, labels3(), 4).unwrap();
        m.classifier[[1, 0]] = 0.25;
        m.bias[2] = -1.0 / 3.0;
        let path = dir.path().join("nlse.csv");
        m.write_csv(&path).unwrap();
        assert_eq!(NlseModel::read_csv(&path).unwrap(), m);
    }
}
