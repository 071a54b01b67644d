//! Python bindings: text preprocessing, metrics, the User2Vec loss, NLSE and
//! LR models, synthetic corpora and the end-to-end experiment.

use std::collections::HashMap;
use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use embed::app::{self, RunConfig};
use embed::corpus::{self, CohortLabel};
use embed::eval::{self, homophily_report};
use embed::lr::{self, LrModel};
use embed::nlse::{self, NlseModel, NlseTrainConfig};
use embed::synth::{self, SynthConfig};
use embed::uservec::{self, UserEmbeddingMatrix};

fn err(e: embed::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_labels(labels: &[String]) -> PyResult<Vec<CohortLabel>> {
    labels.iter().map(|l| l.parse().map_err(err)).collect()
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    let n = rows.len();
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyfunction]
fn normalize_text(text: &str) -> String {
    corpus::normalize_text(text)
}

#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    corpus::tokenize(text)
}

/// Rank-based AUC with mid-rank ties.
#[pyfunction]
fn auc(scores: Vec<f64>, positives: Vec<bool>) -> PyResult<f64> {
    eval::auc(&scores, &positives).map_err(err)
}

/// ROC points `[(fpr, tpr), ...]` and the AUC.
#[pyfunction]
fn roc_curve(scores: Vec<f64>, positives: Vec<bool>) -> PyResult<(Vec<(f64, f64)>, f64)> {
    let roc = eval::roc_curve(&scores, &positives).map_err(err)?;
    Ok((roc.points, roc.auc))
}

#[pyfunction]
fn cosine_similarity(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    eval::cosine_similarity(&a, &b).map_err(err)
}

fn confusion(truth: &[usize], pred: &[usize], n_classes: usize) -> PyResult<eval::metrics::Confusion> {
    if truth.len() != pred.len() || truth.iter().chain(pred).any(|&c| c >= n_classes) {
        return Err(PyValueError::new_err("class indices out of range or lengths differ"));
    }
    Ok(eval::metrics::confusion_matrix(truth, pred, n_classes))
}

#[pyfunction]
fn macro_f1(truth: Vec<usize>, pred: Vec<usize>, n_classes: usize) -> PyResult<f64> {
    Ok(eval::macro_f1(&confusion(&truth, &pred, n_classes)?))
}

/// Mean F1 over the `afflicted` class indices.
#[pyfunction]
fn binary_f1(truth: Vec<usize>, pred: Vec<usize>, n_classes: usize, afflicted: Vec<usize>) -> PyResult<f64> {
    if afflicted.iter().any(|&c| c >= n_classes) {
        return Err(PyValueError::new_err("afflicted class index out of range"));
    }
    Ok(eval::binary_f1(&confusion(&truth, &pred, n_classes)?, &afflicted))
}

/// Hinge loss and gradient with respect to `u` for one positive word vector
/// and a list of negative word vectors.
#[pyfunction]
fn user2vec_loss(u: Vec<f64>, w_pos: Vec<f64>, negatives: Vec<Vec<f64>>) -> PyResult<(f64, Vec<f64>)> {
    if w_pos.len() != u.len() || negatives.iter().any(|n| n.len() != u.len()) {
        return Err(PyValueError::new_err("vector sizes differ"));
    }
    let refs: Vec<&[f64]> = negatives.iter().map(|n| n.as_slice()).collect();
    Ok(uservec::user2vec_loss(&u, &w_pos, &refs))
}

/// Writes a synthetic cohort corpus as JSONL and returns the number of users.
#[pyfunction]
#[pyo3(signature = (path, classes=3, users=50, posts=200, tokens=20, class_weight=0.3, seed=0))]
fn synth_corpus(
    path: PathBuf,
    classes: usize,
    users: usize,
    posts: usize,
    tokens: usize,
    class_weight: f64,
    seed: u64,
) -> PyResult<usize> {
    let config = SynthConfig {
        num_classes: classes,
        users_per_class: users,
        posts_per_user: posts,
        tokens_per_post: tokens,
        class_weight,
        seed,
        ..SynthConfig::default()
    };
    let raw = synth::make_cohort_corpus(&config).map_err(err)?;
    synth::write_jsonl(&raw, &path).map_err(err)?;
    Ok(raw.users.len())
}

/// Runs the whole experiment. `config` is an optional `key = value` file;
/// keyword arguments override its keys. Returns the summary rows
/// `(model, features, macro_f1, binary_f1)`.
#[pyfunction]
#[pyo3(signature = (config=None, **overrides))]
fn run_experiment(
    py: Python<'_>,
    config: Option<PathBuf>,
    overrides: Option<HashMap<String, Bound<'_, PyAny>>>,
) -> PyResult<Vec<(String, String, f64, f64)>> {
    let pairs = overrides
        .unwrap_or_default()
        .into_iter()
        .map(|(k, v)| Ok((k, v.str()?.to_string())))
        .collect::<PyResult<Vec<_>>>()?;
    let config: RunConfig = app::parse_config(config.as_deref(), &pairs).map_err(err)?;
    let report = py.detach(|| app::run_experiment(&config)).map_err(err)?;
    Ok(report
        .summary
        .into_iter()
        .map(|r| (r.model, r.features, r.macro_f1, r.binary_f1))
        .collect())
}

/// Per-class pooled homophily AUC for user vectors stored in word2vec text
/// format, keyed by class name, plus `"macro"`.
#[pyfunction]
fn homophily_auc(users_path: PathBuf, labels: HashMap<String, String>) -> PyResult<HashMap<String, f64>> {
    let users = UserEmbeddingMatrix::load(&users_path).map_err(err)?;
    let parsed = labels
        .into_iter()
        .map(|(k, v)| Ok((k, v.parse().map_err(err)?)))
        .collect::<PyResult<HashMap<String, CohortLabel>>>()?;
    let ordered = app::align_labels(&users, &parsed).map_err(err)?;
    let report = homophily_report(&users, &ordered).map_err(err)?;
    let mut out: HashMap<String, f64> = report.per_class.iter().map(|c| (c.class.to_string(), c.roc.auc)).collect();
    out.insert("macro".into(), report.macro_auc);
    Ok(out)
}

#[pyclass(name = "NlseModel", module = "cohort_embed")]
struct PyNlseModel {
    inner: NlseModel,
}

#[pymethods]
impl PyNlseModel {
    #[new]
    #[pyo3(signature = (dim, subspace_dim, labels, seed=0))]
    fn new(dim: usize, subspace_dim: usize, labels: Vec<String>, seed: u64) -> PyResult<Self> {
        let inner = NlseModel::init(dim, subspace_dim, parse_labels(&labels)?, seed).map_err(err)?;
        Ok(PyNlseModel { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyNlseModel {
            inner: NlseModel::read_csv(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_csv(&path).map_err(err)
    }

    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.iter().map(|l| l.to_string()).collect()
    }

    #[getter]
    fn subspace_dim(&self) -> usize {
        self.inner.subspace_dim()
    }

    #[getter]
    fn classifier(&self) -> Vec<Vec<f64>> {
        self.inner.classifier.outer_iter().map(|r| r.to_vec()).collect()
    }

    #[getter]
    fn bias(&self) -> Vec<f64> {
        self.inner.bias.clone()
    }

    /// Subspace features `sigmoid(S u)`.
    fn subspace(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check(&u)?;
        Ok(self.inner.subspace(&u))
    }

    /// `(g, class probabilities)`.
    fn forward(&self, u: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        self.check(&u)?;
        Ok(self.inner.forward(&u))
    }

    fn predict(&self, u: Vec<f64>) -> PyResult<String> {
        self.check(&u)?;
        Ok(self.inner.predict(&u).to_string())
    }

    fn __repr__(&self) -> String {
        format!(
            "NlseModel(dim={}, subspace_dim={}, labels={:?})",
            self.inner.dim(),
            self.inner.subspace_dim(),
            self.labels()
        )
    }
}

impl PyNlseModel {
    fn check(&self, u: &[f64]) -> PyResult<()> {
        if u.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} values, got {}", self.inner.dim(), u.len())));
        }
        Ok(())
    }
}

/// Trains NLSE on rows `train_idx`, early-stopping on rows `val_idx`.
#[pyfunction]
#[pyo3(signature = (x, labels, train_idx, val_idx, subspace_dim=10, learning_rate=0.1, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train_nlse(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    labels: Vec<String>,
    train_idx: Vec<usize>,
    val_idx: Vec<usize>,
    subspace_dim: usize,
    learning_rate: f64,
    seed: u64,
) -> PyResult<PyNlseModel> {
    let x = matrix(x)?;
    let labels = parse_labels(&labels)?;
    if train_idx.iter().chain(&val_idx).any(|&i| i >= x.nrows()) {
        return Err(PyValueError::new_err("row index out of range"));
    }
    let config = NlseTrainConfig {
        subspace_dim,
        learning_rate,
        seed,
        ..NlseTrainConfig::default()
    };
    let fit = py
        .detach(|| nlse::nlse_train(&x, &labels, &train_idx, &val_idx, &config))
        .map_err(err)?;
    Ok(PyNlseModel { inner: fit.model })
}

#[pyclass(name = "LrModel", module = "cohort_embed")]
struct PyLrModel {
    inner: LrModel,
}

#[pymethods]
impl PyLrModel {
    #[getter]
    fn labels(&self) -> Vec<String> {
        self.inner.labels.iter().map(|l| l.to_string()).collect()
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    fn predict_proba(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err("wrong feature count"));
        }
        Ok(self.inner.predict_proba(&x))
    }

    fn predict(&self, x: Vec<f64>) -> PyResult<String> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err("wrong feature count"));
        }
        Ok(lr::lr_predict(&self.inner, &x).0.to_string())
    }
}

/// l2-regularised multinomial logistic regression; `c` is the inverse
/// regularisation strength.
#[pyfunction]
#[pyo3(signature = (x, labels, c=1.0))]
fn train_lr(py: Python<'_>, x: Vec<Vec<f64>>, labels: Vec<String>, c: f64) -> PyResult<PyLrModel> {
    let x = matrix(x)?;
    let labels = parse_labels(&labels)?;
    let inner = py
        .detach(|| lr::lr_train(&x, &labels, c, lr::DEFAULT_TOL))
        .map_err(err)?;
    Ok(PyLrModel { inner })
}

#[pymodule]
fn cohort_embed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(normalize_text, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(auc, m)?)?;
    m.add_function(wrap_pyfunction!(roc_curve, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity, m)?)?;
    m.add_function(wrap_pyfunction!(macro_f1, m)?)?;
    m.add_function(wrap_pyfunction!(binary_f1, m)?)?;
    m.add_function(wrap_pyfunction!(user2vec_loss, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(homophily_auc, m)?)?;
    m.add_function(wrap_pyfunction!(train_nlse, m)?)?;
    m.add_function(wrap_pyfunction!(train_lr, m)?)?;
    m.add_class::<PyNlseModel>()?;
    m.add_class::<PyLrModel>()?;
    Ok(())
}
