//! l2-regularised multinomial logistic regression.
//!
//! Minimises `mean softmax cross-entropy + (1 / c) * 0.5 * ||W||^2` with an
//! unregularised bias, so larger `c` means a weaker penalty. The optimiser is
//! L-BFGS with a backtracking Armijo line search, run until the gradient
//! infinity-norm drops below the tolerance.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use ndarray::Array2;

use crate::corpus::{label_set, CohortLabel};
use crate::error::{Error, Result};
use crate::math::{argmax, dot, softmax_in_place};

pub const C_GRID: [f64; 6] = [0.001, 0.01, 0.5, 1.0, 10.0, 100.0];
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    /// `|Y| x dim`
    pub weights: Array2<f64>,
    pub bias: Vec<f64>,
    pub c: f64,
    pub labels: Vec<CohortLabel>,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrOptions {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LrOptions {
    fn default() -> Self {
        LrOptions {
            c: 1.0,
            tol: DEFAULT_TOL,
            max_iter: 20_000,
        }
    }
}

/// The training objective over a fixed design matrix. Parameters are packed
/// as `[W row-major, b]`.
pub struct LrProblem<'a> {
    x: &'a Array2<f64>,
    y: Vec<usize>,
    n_classes: usize,
    c: f64,
}

impl<'a> LrProblem<'a> {
    pub fn new(x: &'a Array2<f64>, y: Vec<usize>, n_classes: usize, c: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if !(c > 0.0) {
            return Err(Error::Config(format!("regularisation coefficient c={c} must be positive")));
        }
        if let Some(&bad) = y.iter().find(|&&k| k >= n_classes) {
            return Err(Error::invalid(format!("class index {bad} out of range")));
        }
        Ok(LrProblem { x, y, n_classes, c })
    }

    pub fn num_params(&self) -> usize {
        self.n_classes * (self.x.ncols() + 1)
    }

    /// Objective value and gradient at `theta`.
    pub fn objective(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (k, d) = (self.n_classes, self.x.ncols());
        let (w, b) = theta.split_at(k * d);
        let mut grad = vec![0.0; theta.len()];
        let n = self.x.nrows() as f64;
        let mut loss = 0.0;
        let mut z = vec![0.0; k];
        for (i, xi) in self.x.rows().into_iter().enumerate() {
            let xi = xi.as_slice().expect("standard layout");
            for c in 0..k {
                z[c] = dot(&w[c * d..(c + 1) * d], xi) + b[c];
            }
            let zy = z[self.y[i]];
            let lse = softmax_in_place(&mut z);
            loss += lse - zy;
            z[self.y[i]] -= 1.0;
            let (gw, gb) = grad.split_at_mut(k * d);
            for c in 0..k {
                crate::math::axpy(z[c] / n, xi, &mut gw[c * d..(c + 1) * d]);
                gb[c] += z[c] / n;
            }
        }
        let inv_c = 1.0 / self.c;
        let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * 0.5 * inv_c;
        for (g, wv) in grad[..k * d].iter_mut().zip(w) {
            *g += inv_c * wv;
        }
        (loss / n + reg, grad)
    }
}

/// Fits a model with the default solver settings.
pub fn lr_train(x: &Array2<f64>, y: &[CohortLabel], c: f64, tol: f64) -> Result<LrModel> {
    lr_train_with(x, y, &LrOptions { c, tol, ..Default::default() }, None)
}

/// Fits a model, optionally starting from packed parameters `init`.
pub fn lr_train_with(
    x: &Array2<f64>,
    y: &[CohortLabel],
    opts: &LrOptions,
    init: Option<&[f64]>,
) -> Result<LrModel> {
    let labels = label_set(y);
    if labels.len() < 2 {
        return Err(Error::invalid("logistic regression needs at least two classes"));
    }
    if y.len() < labels.len() {
        return Err(Error::invalid("fewer training rows than classes"));
    }
    let idx: Vec<usize> = y.iter().map(|l| labels.binary_search(l).unwrap()).collect();
    let problem = LrProblem::new(x, idx, labels.len(), opts.c)?;
    let x0 = match init {
        Some(v) if v.len() != problem.num_params() => {
            return Err(Error::Dimension {
                expected: problem.num_params(),
                got: v.len(),
            })
        }
        Some(v) => v.to_vec(),
        None => vec![0.0; problem.num_params()],
    };
    let result = lbfgs(|t| problem.objective(t), x0, opts.tol, opts.max_iter);
    if !result.converged {
        warn!(
            "logistic regression (c={}) stopped after {} iterations with gradient norm {:.3e}",
            opts.c, result.iterations, result.grad_norm
        );
    }
    let (k, d) = (labels.len(), x.ncols());
    let weights = Array2::from_shape_vec((k, d), result.x[..k * d].to_vec()).expect("packed weights");
    Ok(LrModel {
        weights,
        bias: result.x[k * d..].to_vec(),
        c: opts.c,
        labels,
        converged: result.converged,
        iterations: result.iterations,
    })
}

impl LrModel {
    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .rows()
            .into_iter()
            .zip(&self.bias)
            .map(|(w, b)| dot(w.as_slice().expect("standard layout"), x) + b)
            .collect()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }

    /// Objective value of this model on `(x, y)`.
    pub fn objective(&self, x: &Array2<f64>, y: &[CohortLabel]) -> Result<f64> {
        let idx = y
            .iter()
            .map(|l| {
                self.labels
                    .binary_search(l)
                    .map_err(|_| Error::invalid(format!("label {l} unknown to the model")))
            })
            .collect::<Result<Vec<_>>>()?;
        let problem = LrProblem::new(x, idx, self.labels.len(), self.c)?;
        let mut theta: Vec<f64> = self.weights.iter().copied().collect();
        theta.extend_from_slice(&self.bias);
        Ok(problem.objective(&theta).0)
    }

    /// Writes `label,bias,w0..w{d-1}`, one row per class in label order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "label,bias")?;
        for j in 0..self.dim() {
            write!(w, ",w{j}")?;
        }
        writeln!(w)?;
        for (k, label) in self.labels.iter().enumerate() {
            write!(w, "{label},{:.16e}", self.bias[k])?;
            for v in self.weights.row(k) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, c: f64) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut labels = Vec::new();
        let mut bias = Vec::new();
        let mut data = Vec::new();
        let mut dim = 0;
        for (i, line) in reader.lines().enumerate().skip(1) {
            let line = line?;
            let bad = |m: String| Error::parse(path, i + 1, m);
            let mut fields = line.split(',');
            labels.push(fields.next().unwrap_or_default().parse::<CohortLabel>().map_err(|e| bad(e.to_string()))?);
            let nums = fields
                .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad value '{f}'"))))
                .collect::<Result<Vec<_>>>()?;
            let Some((b, w)) = nums.split_first() else {
                return Err(bad("missing bias".into()));
            };
            dim = w.len();
            bias.push(*b);
            data.extend_from_slice(w);
        }
        let weights = Array2::from_shape_vec((labels.len(), dim), data).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(LrModel {
            weights,
            bias,
            c,
            labels,
            converged: true,
            iterations: 0,
        })
    }
}

/// Softmax prediction; the first label wins ties.
pub fn lr_predict(model: &LrModel, x: &[f64]) -> (CohortLabel, Vec<f64>) {
    let p = model.predict_proba(x);
    (model.labels[argmax(&p)], p)
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Limited-memory BFGS with Armijo backtracking.
pub(crate) fn lbfgs<F>(f: F, mut x: Vec<f64>, tol: f64, max_iter: usize) -> Minimum
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    const MEMORY: usize = 10;
    let (mut fx, mut g) = f(&x);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut iterations = 0;
    while iterations < max_iter {
        if inf_norm(&g) < tol {
            return Minimum {
                grad_norm: inf_norm(&g),
                x,
                converged: true,
                iterations,
            };
        }
        iterations += 1;

        // two-loop recursion
        let mut q = g.clone();
        let mut alpha = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            alpha[i] = rho_hist[i] * dot(&s_hist[i], &q);
            crate::math::axpy(-alpha[i], &y_hist[i], &mut q);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / inf_norm(&g).max(1.0);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for i in 0..s_hist.len() {
            let beta = rho_hist[i] * dot(&y_hist[i], &q);
            crate::math::axpy(alpha[i] - beta, &s_hist[i], &mut q);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (ft, gt) = f(&trial);
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let grad_norm = inf_norm(&g);
    Minimum {
        converged: grad_norm < tol,
        x,
        iterations,
        grad_norm,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    use CohortLabel::{Control as C, Depression as D, Ptsd as P};

    #[test]
    fn separable_pair() {
        let x = array![[1.0, 0.0], [-1.0, 0.0]];
        let m = lr_train(&x, &[C, D], 100.0, 1e-8).unwrap();
        assert!(m.converged);
        assert_eq!(lr_predict(&m, &[1.0, 0.0]).0, C);
        assert_eq!(lr_predict(&m, &[-1.0, 0.0]).0, D);
    }

    #[test]
    fn heavy_regularisation_predicts_prior() {
        let x = array![[1.0, 2.0], [0.5, -1.0], [3.0, 0.0], [-2.0, 1.0], [0.0, 0.0]];
        let y = [C, D, D, P, D];
        let m = lr_train(&x, &y, 1e-8, 1e-10).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-6));
        for i in 0..5 {
            assert_eq!(lr_predict(&m, x.row(i).as_slice().unwrap()).0, D);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = array![[1.0], [2.0]];
        assert!(lr_train(&x, &[C, C], 1.0, 1e-6).is_err());
        assert!(lr_train(&x, &[C, D], 0.0, 1e-6).is_err());
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = LrModel {
            weights: Array2::zeros((3, 2)),
            bias: vec![0.0; 3],
            c: 1.0,
            labels: vec![C, D, P],
            converged: true,
            iterations: 0,
        };
        let (label, p) = lr_predict(&m, &[0.3, -7.0]);
        assert_eq!(label, C);
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shift_invariance_of_argmax() {
        let x = array![[1.0, 0.2], [0.1, 1.0], [-1.0, -1.0], [0.9, 0.1], [0.0, 1.2], [-0.8, -1.1]];
        let y = [C, D, P, C, D, P];
        let mut m = lr_train(&x, &y, 1.0, 1e-8).unwrap();
        let probe = [0.4, -0.3];
        let (label, p) = lr_predict(&m, &probe);
        for mut r in m.weights.rows_mut() {
            r[0] += 2.5;
            r[1] -= 1.0;
        }
        let (label2, p2) = lr_predict(&m, &probe);
        assert_eq!(label, label2);
        for (a, b) in p.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = array![[1.0, 0.2], [0.1, 1.0], [-1.0, -1.0]];
        let m = lr_train(&x, &[C, D, P], 1.0, 1e-8).unwrap();
        let path = dir.path().join("lr.csv");
        m.write_csv(&path).unwrap();
        let back = LrModel::read_csv(&path, 1.0).unwrap();
        assert_eq!(back.weights, m.weights);
        assert_eq!(back.bias, m.bias);
        assert_eq!(back.labels, m.labels);
    }
}
