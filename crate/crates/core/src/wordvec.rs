//! Skip-gram word vectors with negative sampling, the shared negative
//! sampler, and the word2vec text format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::math::{dot, sigmoid, softplus};
use crate::rng::{self, StreamRng};

pub const DEFAULT_SAMPLING_POWER: f64 = 0.75;

/// Input vectors `E` (`|V| x d`) and the training-internal output vectors `E'`.
#[derive(Debug, Clone, PartialEq)]
pub struct WordEmbeddingMatrix {
    pub input: Array2<f64>,
    pub output: Array2<f64>,
}

impl WordEmbeddingMatrix {
    /// `E ~ U[-0.5/d, 0.5/d]`, `E' = 0`.
    pub fn init(vocab_size: usize, dim: usize, seed: u64) -> Self {
        let mut rng = rng::stream(seed, "word-init", 0);
        WordEmbeddingMatrix {
            input: uniform_matrix(vocab_size, dim, 0.5 / dim as f64, &mut rng),
            output: Array2::zeros((vocab_size, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.input.ncols()
    }

    pub fn len(&self) -> usize {
        self.input.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.input.nrows() == 0
    }

    pub fn vector(&self, id: usize) -> &[f64] {
        row(&self.input, id)
    }

    pub fn save(&self, vocab: &Vocabulary, path: &Path) -> Result<()> {
        if vocab.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                got: vocab.len(),
            });
        }
        write_word2vec(path, vocab.tokens(), &self.input)
    }

    /// Loads input vectors and aligns them with `vocab`; every file token
    /// must be in the vocabulary and vice versa. `E'` is zeroed.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let (keys, matrix) = read_word2vec(path)?;
        let mut input = Array2::zeros((vocab.len(), matrix.ncols()));
        let mut seen = vec![false; vocab.len()];
        for (i, key) in keys.iter().enumerate() {
            let id = vocab
                .id(key)
                .ok_or_else(|| Error::parse(path, i + 2, format!("unknown token '{key}'")))?;
            input.row_mut(id).assign(&matrix.row(i));
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!(
                "{}: no vector for vocabulary token '{}'",
                path.display(),
                vocab.token(missing)
            )));
        }
        let dim = input.ncols();
        Ok(WordEmbeddingMatrix {
            output: Array2::zeros((vocab.len(), dim)),
            input,
        })
    }
}

pub(crate) fn uniform_matrix(rows: usize, cols: usize, half_width: f64, rng: &mut StreamRng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-half_width..half_width))
}

#[inline]
pub(crate) fn row(m: &Array2<f64>, i: usize) -> &[f64] {
    let d = m.ncols();
    &m.as_slice().expect("standard layout")[i * d..(i + 1) * d]
}

#[inline]
pub(crate) fn row_mut(m: &mut Array2<f64>, i: usize) -> &mut [f64] {
    let d = m.ncols();
    &mut m.as_slice_mut().expect("standard layout")[i * d..(i + 1) * d]
}

/// Writes the word2vec text format: a `<count> <dim>` header, then one
/// `key v1 .. vd` line per row with 17 significant digits.
pub fn write_word2vec<S: AsRef<str>>(path: &Path, keys: &[S], matrix: &Array2<f64>) -> Result<()> {
    if keys.len() != matrix.nrows() {
        return Err(Error::Dimension {
            expected: matrix.nrows(),
            got: keys.len(),
        });
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", matrix.nrows(), matrix.ncols())?;
    for (key, r) in keys.iter().zip(matrix.rows()) {
        let key = key.as_ref();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(Error::invalid(format!("key '{key}' cannot be written in word2vec format")));
        }
        w.write_all(key.as_bytes())?;
        for v in r {
            write!(w, " {v:.16e}")?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_word2vec(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::parse(path, 1, "empty file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::parse(path, 1, "bad header")))
        .collect::<Result<_>>()?;
    let [count, dim] = dims[..] else {
        return Err(Error::parse(path, 1, "header must be '<count> <dim>'"));
    };
    let mut keys = Vec::with_capacity(count);
    let mut data = Vec::with_capacity(count * dim);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        if keys.len() == count {
            return Err(Error::parse(path, lineno, format!("more than {count} rows")));
        }
        let mut fields = line.split_whitespace();
        let key = fields.next().unwrap_or_default().to_string();
        let before = data.len();
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(path, lineno, format!("bad value '{f}'")))?;
            data.push(v);
        }
        if data.len() - before != dim {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {dim} values, found {}", data.len() - before),
            ));
        }
        keys.push(key);
    }
    if keys.len() != count {
        return Err(Error::invalid(format!(
            "{}: header declares {count} rows, found {}",
            path.display(),
            keys.len()
        )));
    }
    let matrix = Array2::from_shape_vec((count, dim), data).map_err(|e| Error::invalid(e.to_string()))?;
    Ok((keys, matrix))
}

/// Draws negative samples with probability proportional to `count^power`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSampler {
    probs: Vec<f64>,
    cdf: Vec<f64>,
    pub power: f64,
    pub seed: u64,
}

impl NegativeSampler {
    pub fn from_vocab(vocab: &Vocabulary, power: f64, seed: u64) -> Result<Self> {
        Self::from_counts(vocab.counts(), power, seed)
    }

    pub fn from_counts(counts: &[u64], power: f64, seed: u64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::invalid("negative sampler needs a nonempty vocabulary"));
        }
        if !power.is_finite() {
            return Err(Error::Config(format!("sampling power {power} is not finite")));
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(power)).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::invalid("negative sampler weights are all zero"));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        *cdf.last_mut().unwrap() = 1.0;
        Ok(NegativeSampler { probs, cdf, power, seed })
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// A fresh stream derived from the sampler seed.
    pub fn rng(&self, name: &str, index: u64) -> StreamRng {
        rng::stream(self.seed, name, index)
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }

    pub fn sample_negatives<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<usize> {
        (0..count).map(|_| self.sample(rng)).collect()
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [usize]) {
        for slot in out {
            *slot = self.sample(rng);
        }
    }
}

/// Row-oriented parameter storage used by the SGD kernels. Implemented for
/// plain matrices and, for lock-free parallel training, for shared atomic
/// matrices.
pub(crate) trait RowStore {
    fn read(&self, row: usize, out: &mut [f64]);
    /// `row += alpha * delta`
    fn add(&mut self, row: usize, alpha: f64, delta: &[f64]);
}

impl RowStore for Array2<f64> {
    fn read(&self, i: usize, out: &mut [f64]) {
        out.copy_from_slice(row(self, i));
    }

    fn add(&mut self, i: usize, alpha: f64, delta: &[f64]) {
        crate::math::axpy(alpha, delta, row_mut(self, i));
    }
}

/// A matrix of `f64` bit patterns that many threads may update without
/// locks. Updates race (lost writes are possible) but never tear a value.
pub(crate) struct AtomicMatrix {
    data: Vec<AtomicU64>,
    cols: usize,
}

impl AtomicMatrix {
    pub fn from_array(m: &Array2<f64>) -> Self {
        AtomicMatrix {
            data: m.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            cols: m.ncols(),
        }
    }

    pub fn into_array(self, rows: usize) -> Array2<f64> {
        let data = self.data.into_iter().map(|a| f64::from_bits(a.into_inner())).collect();
        Array2::from_shape_vec((rows, self.cols), data).expect("shape preserved")
    }
}

impl RowStore for &AtomicMatrix {
    fn read(&self, i: usize, out: &mut [f64]) {
        let src = &self.data[i * self.cols..(i + 1) * self.cols];
        for (o, a) in out.iter_mut().zip(src) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    }

    fn add(&mut self, i: usize, alpha: f64, delta: &[f64]) {
        let dst = &self.data[i * self.cols..(i + 1) * self.cols];
        for (a, d) in dst.iter().zip(delta) {
            let v = f64::from_bits(a.load(Ordering::Relaxed)) + alpha * d;
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    }
}

/// Scratch buffers for [`ns_logistic_step`].
pub(crate) struct NsScratch {
    rows: Vec<f64>,
    coef: Vec<f64>,
    pub grad: Vec<f64>,
}

impl NsScratch {
    pub fn new(dim: usize, neg_count: usize) -> Self {
        NsScratch {
            rows: vec![0.0; dim * (neg_count + 1)],
            coef: vec![0.0; neg_count + 1],
            grad: vec![0.0; dim],
        }
    }
}

/// Negative-sampling logistic loss of input vector `h` against output row
/// `target` and output rows `negatives`:
/// `-ln s(h.o_t) - sum_k ln s(-h.o_k)`.
///
/// Applies `o -= lr * dL/do` to the output rows, leaves `dL/dh` in
/// `scratch.grad` and returns the loss at the pre-update parameters.
pub(crate) fn ns_logistic_step<O: RowStore + ?Sized>(
    h: &[f64],
    target: usize,
    negatives: &[usize],
    output: &mut O,
    lr: f64,
    scratch: &mut NsScratch,
) -> f64 {
    let d = h.len();
    let n = negatives.len() + 1;
    if scratch.coef.len() < n {
        *scratch = NsScratch::new(d, n - 1);
    }
    let ids = std::iter::once(target).chain(negatives.iter().copied());
    let mut loss = 0.0;
    for (k, id) in ids.clone().enumerate() {
        let o = &mut scratch.rows[k * d..(k + 1) * d];
        output.read(id, o);
        let x = dot(h, o);
        if k == 0 {
            loss += softplus(-x);
            scratch.coef[k] = sigmoid(x) - 1.0;
        } else {
            loss += softplus(x);
            scratch.coef[k] = sigmoid(x);
        }
    }
    scratch.grad.iter_mut().for_each(|g| *g = 0.0);
    for k in 0..n {
        crate::math::axpy(scratch.coef[k], &scratch.rows[k * d..(k + 1) * d], &mut scratch.grad);
    }
    for (k, id) in ids.enumerate() {
        output.add(id, -lr * scratch.coef[k], h);
    }
    loss
}

/// Loss and analytic gradients of the skip-gram negative-sampling objective
/// for one `(center, context, negatives)` triple, without updating anything.
/// Returns `(loss, d/dcenter, d/dcontext, d/dnegative_k)`.
pub fn sgns_loss_and_grad(
    center: &[f64],
    context: &[f64],
    negatives: &[Vec<f64>],
) -> (f64, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let xp = dot(center, context);
    let mut loss = softplus(-xp);
    let gp = sigmoid(xp) - 1.0;
    let mut g_center: Vec<f64> = context.iter().map(|c| gp * c).collect();
    let g_context: Vec<f64> = center.iter().map(|c| gp * c).collect();
    let mut g_negs = Vec::with_capacity(negatives.len());
    for neg in negatives {
        let xn = dot(center, neg);
        loss += softplus(xn);
        let gn = sigmoid(xn);
        crate::math::axpy(gn, neg, &mut g_center);
        g_negs.push(center.iter().map(|c| gn * c).collect());
    }
    (loss, g_center, g_context, g_negs)
}

/// One SGD step on `E[center]` and the output rows. Returns the loss before
/// the update.
pub fn sgns_step(
    emb: &mut WordEmbeddingMatrix,
    center: usize,
    context: usize,
    negatives: &[usize],
    lr: f64,
) -> f64 {
    let mut scratch = NsScratch::new(emb.dim(), negatives.len());
    let h = emb.vector(center).to_vec();
    let loss = ns_logistic_step(&h, context, negatives, &mut emb.output, lr, &mut scratch);
    emb.input.add(center, -lr, &scratch.grad);
    loss
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgnsConfig {
    pub window: usize,
    pub neg_count: usize,
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub sampling_power: f64,
    /// Draw the effective window uniformly from `1..=window` per position.
    pub dynamic_window: bool,
    /// More than one thread enables lock-free updates, which are not
    /// reproducible.
    pub threads: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            window: 5,
            neg_count: 20,
            dim: 50,
            learning_rate: 0.025,
            epochs: 5,
            seed: 0,
            sampling_power: DEFAULT_SAMPLING_POWER,
            dynamic_window: false,
            threads: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.neg_count == 0 || self.dim == 0 {
            return Err(Error::Config("window, neg_count and dim must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Linearly decayed learning rate, floored at `1e-4 * lr`.
#[inline]
pub(crate) fn decayed_lr(lr: f64, done: usize, total: usize) -> f64 {
    let frac = if total == 0 { 0.0 } else { done as f64 / total as f64 };
    lr * (1.0 - frac).max(1e-4)
}

/// Trains skip-gram vectors over token-id sequences (one per post).
pub fn train_skipgram(
    corpus: &[&[usize]],
    vocab: &Vocabulary,
    config: &SgnsConfig,
) -> Result<WordEmbeddingMatrix> {
    config.validate()?;
    if vocab.is_empty() || corpus.iter().all(|s| s.is_empty()) {
        return Err(Error::invalid("skip-gram training needs a nonempty corpus and vocabulary"));
    }
    if let Some(bad) = corpus.iter().flat_map(|s| s.iter()).find(|&&t| t >= vocab.len()) {
        return Err(Error::invalid(format!("token id {bad} outside vocabulary")));
    }
    let sampler = NegativeSampler::from_vocab(vocab, config.sampling_power, config.seed)?;
    let mut emb = WordEmbeddingMatrix::init(vocab.len(), config.dim, config.seed);
    let total = config.epochs * corpus.iter().map(|s| s.len()).sum::<usize>();

    if config.threads <= 1 {
        let mut rng = sampler.rng("sgns", 0);
        let mut done = 0;
        for _ in 0..config.epochs {
            for seq in corpus {
                let (input, output) = (&mut emb.input, &mut emb.output);
                skipgram_sequence(seq, input, output, &sampler, config, &mut rng, &mut done, total);
            }
        }
        return Ok(emb);
    }

    let input = AtomicMatrix::from_array(&emb.input);
    let output = AtomicMatrix::from_array(&emb.output);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let chunk = corpus.len().div_ceil(config.threads).max(1);
    let shard_total = total.div_ceil(config.threads);
    pool.install(|| {
        corpus.par_chunks(chunk).enumerate().for_each(|(shard, seqs)| {
            let mut rng = sampler.rng("sgns", shard as u64);
            let (mut inp, mut out) = (&input, &output);
            let mut done = 0;
            for _ in 0..config.epochs {
                for seq in seqs {
                    skipgram_sequence(seq, &mut inp, &mut out, &sampler, config, &mut rng, &mut done, shard_total);
                }
            }
        })
    });
    let n = vocab.len();
    Ok(WordEmbeddingMatrix {
        input: input.into_array(n),
        output: output.into_array(n),
    })
}

#[allow(clippy::too_many_arguments)]
fn skipgram_sequence<I: RowStore + ?Sized, O: RowStore + ?Sized>(
    seq: &[usize],
    input: &mut I,
    output: &mut O,
    sampler: &NegativeSampler,
    config: &SgnsConfig,
    rng: &mut StreamRng,
    done: &mut usize,
    total: usize,
) {
    let mut scratch = NsScratch::new(config.dim, config.neg_count);
    let mut negs = vec![0; config.neg_count];
    let mut h = vec![0.0; config.dim];
    for (pos, &center) in seq.iter().enumerate() {
        let lr = decayed_lr(config.learning_rate, *done, total);
        *done += 1;
        let w = if config.dynamic_window {
            rng.random_range(1..=config.window)
        } else {
            config.window
        };
        let lo = pos.saturating_sub(w);
        let hi = (pos + w + 1).min(seq.len());
        for (cpos, &context) in seq.iter().enumerate().take(hi).skip(lo) {
            if cpos == pos {
                continue;
            }
            sampler.fill(rng, &mut negs);
            input.read(center, &mut h);
            ns_logistic_step(&h, context, &negs, output, lr, &mut scratch);
            input.add(center, -lr, &scratch.grad);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vocab(entries: &[(&str, u64)]) -> Vocabulary {
        Vocabulary::from_entries(entries.iter().map(|(t, c)| (t.to_string(), *c)).collect()).unwrap()
    }

    #[test]
    fn sampler_probabilities() {
        let s = NegativeSampler::from_counts(&[8, 1], 0.75, 0).unwrap();
        let expect = 8f64.powf(0.75) / (8f64.powf(0.75) + 1.0);
        assert_relative_eq!(s.probabilities()[0], expect, epsilon = 1e-15);
        assert_relative_eq!(s.probabilities()[0], 0.8263, epsilon = 1e-4);

        let u = NegativeSampler::from_counts(&[5, 1, 0, 9], 0.0, 0).unwrap();
        assert!(u.probabilities().iter().all(|&p| (p - 0.25).abs() < 1e-15));

        let h = NegativeSampler::from_counts(&[1, 1], 1.0, 0).unwrap();
        assert_eq!(h.probabilities(), &[0.5, 0.5]);

        assert!(NegativeSampler::from_counts(&[0, 0], 0.75, 0).is_err());
        assert!(NegativeSampler::from_counts(&[], 0.75, 0).is_err());
    }

    #[test]
    fn sampler_draws() {
        let s = NegativeSampler::from_counts(&[3, 7, 2], 0.75, 1).unwrap();
        let mut rng = s.rng("t", 0);
        let draws = s.sample_negatives(&mut rng, 20);
        assert_eq!(draws.len(), 20);
        assert!(draws.iter().all(|&d| d < 3));
        let again = s.sample_negatives(&mut s.rng("t", 0), 20);
        assert_eq!(draws, again);

        let single = NegativeSampler::from_counts(&[4], 0.75, 1).unwrap();
        assert_eq!(single.sample_negatives(&mut single.rng("t", 0), 1), vec![0]);

        let zero = NegativeSampler::from_counts(&[0, 5], 1.0, 1).unwrap();
        assert!(zero.sample_negatives(&mut zero.rng("t", 0), 1000).iter().all(|&d| d == 1));
    }

    #[test]
    fn sgns_step_at_zero() {
        let mut emb = WordEmbeddingMatrix {
            input: Array2::zeros((3, 4)),
            output: Array2::zeros((3, 4)),
        };
        let ln2 = std::f64::consts::LN_2;
        assert_relative_eq!(sgns_step(&mut emb, 0, 1, &[2], 0.1), 2.0 * ln2, epsilon = 1e-15);
        let mut emb = WordEmbeddingMatrix {
            input: Array2::zeros((3, 4)),
            output: Array2::zeros((3, 4)),
        };
        let negs = vec![2; 20];
        assert_relative_eq!(sgns_step(&mut emb, 0, 1, &negs, 0.1), 21.0 * ln2, epsilon = 1e-13);
    }

    #[test]
    fn sgns_step_matches_loss_and_grad() {
        let mut rng = rng::stream(3, "t", 0);
        let mut emb = WordEmbeddingMatrix {
            input: uniform_matrix(4, 5, 1.0, &mut rng),
            output: uniform_matrix(4, 5, 1.0, &mut rng),
        };
        let before = emb.clone();
        let negs = [2, 3];
        let (loss, gc, gx, gn) = sgns_loss_and_grad(
            before.vector(0),
            row(&before.output, 1),
            &negs.iter().map(|&n| row(&before.output, n).to_vec()).collect::<Vec<_>>(),
        );
        let lr = 0.05;
        assert_relative_eq!(sgns_step(&mut emb, 0, 1, &negs, lr), loss, epsilon = 1e-14);
        for j in 0..5 {
            assert_relative_eq!(emb.input[[0, j]], before.input[[0, j]] - lr * gc[j], epsilon = 1e-14);
            assert_relative_eq!(emb.output[[1, j]], before.output[[1, j]] - lr * gx[j], epsilon = 1e-14);
            assert_relative_eq!(emb.output[[3, j]], before.output[[3, j]] - lr * gn[1][j], epsilon = 1e-14);
        }
    }

    fn cos(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    #[test]
    fn skipgram_learns_cooccurrence() {
        let v = vocab(&[("x", 100), ("y", 100), ("z", 100), ("q", 100)]);
        let mut rng = rng::stream(11, "corpus", 0);
        let mut posts = Vec::new();
        for i in 0..200 {
            let pair = if i % 2 == 0 { [0, 1] } else { [2, 3] };
            posts.push((0..6).map(|_| pair[rng.random_range(0..2)]).collect::<Vec<usize>>());
        }
        let corpus: Vec<&[usize]> = posts.iter().map(|p| p.as_slice()).collect();
        let config = SgnsConfig {
            dim: 10,
            neg_count: 3,
            window: 2,
            epochs: 5,
            seed: 4,
            ..Default::default()
        };
        let emb = train_skipgram(&corpus, &v, &config).unwrap();
        assert!(cos(emb.vector(0), emb.vector(1)) > cos(emb.vector(0), emb.vector(2)));

        let again = train_skipgram(&corpus, &v, &config).unwrap();
        assert_eq!(emb, again);

        let untrained = train_skipgram(&corpus, &v, &SgnsConfig { epochs: 0, ..config.clone() }).unwrap();
        assert_eq!(untrained, WordEmbeddingMatrix::init(4, 10, 4));

        let parallel = train_skipgram(&corpus, &v, &SgnsConfig { threads: 2, ..config }).unwrap();
        assert!(parallel.input.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn word2vec_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let v = vocab(&[("a", 3), ("b", 2)]);
        let mut rng = rng::stream(5, "t", 0);
        let emb = WordEmbeddingMatrix {
            input: uniform_matrix(2, 3, 1e3, &mut rng),
            output: Array2::zeros((2, 3)),
        };
        let path = dir.path().join("w.txt");
        emb.save(&v, &path).unwrap();
        let loaded = WordEmbeddingMatrix::load(&path, &v).unwrap();
        assert_eq!(loaded.input, emb.input);

        let bad = dir.path().join("bad.txt");
        std::fs::write(&bad, "2 3\na 1 2 3 4\nb 1 2 3\n").unwrap();
        assert!(read_word2vec(&bad).is_err());
        std::fs::write(&bad, "").unwrap();
        assert!(read_word2vec(&bad).is_err());
        std::fs::write(&bad, "2 3\na 1 2 3\nc 1 2 3\n").unwrap();
        assert!(WordEmbeddingMatrix::load(&bad, &v).is_err());
        std::fs::write(&bad, "2 3\na 1 2 3\n").unwrap();
        assert!(read_word2vec(&bad).is_err());
    }
}
