//! Per-user embeddings.
//!
//! `User2Vec` fits one vector per user against fixed, pre-trained word
//! vectors with a hinge loss over sampled negatives, stopping early on a
//! held-out slice of the user's posts. The paragraph-vector modes (PV-DBOW,
//! PV-DM) learn user and word vectors jointly and are provided for
//! comparison.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::warn;
use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::{split_heldout, Dataset, UserHistory, DEFAULT_HELDOUT_FRACTION};
use crate::error::{Error, Result};
use crate::math::{axpy, dot};
use crate::rng::{self, StreamRng};
use crate::wordvec::{
    self, decayed_lr, ns_logistic_step, row, row_mut, AtomicMatrix, NegativeSampler, NsScratch,
    RowStore, WordEmbeddingMatrix, DEFAULT_SAMPLING_POWER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    User2Vec,
    PvDbow,
    PvDm,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [TrainMode::User2Vec, TrainMode::PvDbow, TrainMode::PvDm];
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::User2Vec => "user2vec",
            TrainMode::PvDbow => "pvdbow",
            TrainMode::PvDm => "pvdm",
        })
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "user2vec" | "u2v" => Ok(TrainMode::User2Vec),
            "pvdbow" => Ok(TrainMode::PvDbow),
            "pvdm" => Ok(TrainMode::PvDm),
            other => Err(Error::Config(format!("unknown training mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserTrainConfig {
    pub mode: TrainMode,
    pub neg_count: usize,
    pub learning_rate: f64,
    /// Epoch cap; the paragraph-vector modes always run exactly this many.
    pub max_epochs: usize,
    /// Epochs without held-out improvement before stopping (User2Vec only).
    pub patience: usize,
    pub heldout_fraction: f64,
    /// Half-width of the sliding window (paragraph-vector modes only).
    pub window: usize,
    /// Vector size for the paragraph-vector modes; User2Vec uses the word
    /// vector size.
    pub dim: usize,
    pub sampling_power: f64,
    pub seed: u64,
    /// User2Vec results are identical for any thread count. The
    /// paragraph-vector modes share word matrices, so more than one thread
    /// gives lock-free, non-reproducible updates.
    pub threads: usize,
}

impl Default for UserTrainConfig {
    fn default() -> Self {
        UserTrainConfig {
            mode: TrainMode::User2Vec,
            neg_count: 20,
            learning_rate: 0.025,
            max_epochs: 20,
            patience: 3,
            heldout_fraction: DEFAULT_HELDOUT_FRACTION,
            window: 5,
            dim: 50,
            sampling_power: DEFAULT_SAMPLING_POWER,
            seed: 0,
            threads: 1,
        }
    }
}

impl UserTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if self.neg_count == 0 {
            return Err(Error::Config("neg_count must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        match self.mode {
            TrainMode::User2Vec => {
                if !(self.heldout_fraction > 0.0 && self.heldout_fraction < 1.0) {
                    return Err(Error::Config("held-out fraction must be in (0, 1)".into()));
                }
            }
            TrainMode::PvDbow | TrainMode::PvDm => {
                if self.window == 0 || self.dim == 0 {
                    return Err(Error::Config("window and dim must be at least 1".into()));
                }
            }
        }
        Ok(())
    }
}

/// One vector per user; row `j` is the embedding of `user_ids[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserEmbeddingMatrix {
    pub user_ids: Vec<String>,
    pub vectors: Array2<f64>,
}

impl UserEmbeddingMatrix {
    pub fn new(user_ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if user_ids.len() != vectors.nrows() {
            return Err(Error::Dimension {
                expected: vectors.nrows(),
                got: user_ids.len(),
            });
        }
        Ok(UserEmbeddingMatrix {
            user_ids,
            vectors: vectors.as_standard_layout().into_owned(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.user_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_ids.is_empty()
    }

    pub fn vector(&self, j: usize) -> &[f64] {
        row(&self.vectors, j)
    }

    pub fn index_of(&self, user_id: &str) -> Option<usize> {
        self.user_ids.iter().position(|u| u == user_id)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        wordvec::write_word2vec(path, &self.user_ids, &self.vectors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (ids, vectors) = wordvec::read_word2vec(path)?;
        Self::new(ids, vectors)
    }
}

/// Hinge loss `sum_k max(0, 1 - w.u + n_k.u)` and its subgradient in `u`.
/// A margin of exactly one contributes nothing.
pub fn user2vec_loss(u: &[f64], w_pos: &[f64], negatives: &[&[f64]]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; u.len()];
    let pos = dot(w_pos, u);
    let mut loss = 0.0;
    for neg in negatives {
        let margin = 1.0 - pos + dot(neg, u);
        if margin > 0.0 {
            loss += margin;
            axpy(1.0, neg, &mut grad);
            axpy(-1.0, w_pos, &mut grad);
        }
    }
    (loss, grad)
}

/// Same as [`user2vec_loss`] over rows of `words`, accumulating the
/// subgradient into `grad` (which is overwritten).
#[inline]
fn hinge_rows(u: &[f64], words: &Array2<f64>, target: usize, negatives: &[usize], grad: &mut [f64]) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let w_pos = row(words, target);
    let pos = dot(w_pos, u);
    let mut loss = 0.0;
    let mut active = 0.0;
    for &n in negatives {
        let w_neg = row(words, n);
        let margin = 1.0 - pos + dot(w_neg, u);
        if margin > 0.0 {
            loss += margin;
            active += 1.0;
            axpy(1.0, w_neg, grad);
        }
    }
    if active > 0.0 {
        axpy(-active, w_pos, grad);
    }
    loss
}

/// Held-out tokens with negatives drawn once, so scores are comparable
/// across epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenHeldout {
    tokens: Vec<usize>,
    negatives: Vec<usize>,
    neg_count: usize,
}

impl FrozenHeldout {
    pub fn new(posts: &[&[usize]], sampler: &NegativeSampler, neg_count: usize, seed: u64) -> Self {
        let tokens: Vec<usize> = posts.iter().flat_map(|p| p.iter().copied()).collect();
        let mut rng = rng::stream(seed, "heldout-negatives", 0);
        let negatives = sampler.sample_negatives(&mut rng, tokens.len() * neg_count);
        FrozenHeldout {
            tokens,
            negatives,
            neg_count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Mean hinge loss per held-out token; lower is better.
    pub fn score(&self, u: &[f64], words: &Array2<f64>) -> f64 {
        if self.tokens.is_empty() {
            return 0.0;
        }
        let mut grad = vec![0.0; u.len()];
        let total: f64 = self
            .tokens
            .iter()
            .zip(self.negatives.chunks(self.neg_count))
            .map(|(&t, negs)| hinge_rows(u, words, t, negs, &mut grad))
            .sum();
        total / self.tokens.len() as f64
    }
}

/// Mean held-out hinge loss of `u` with negatives frozen by `seed`.
pub fn heldout_score(
    u: &[f64],
    heldout_posts: &[&[usize]],
    word_embs: &WordEmbeddingMatrix,
    sampler: &NegativeSampler,
    neg_count: usize,
    seed: u64,
) -> f64 {
    FrozenHeldout::new(heldout_posts, sampler, neg_count, seed).score(u, &word_embs.input)
}

/// Outcome of fitting one user vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFit {
    pub vector: Vec<f64>,
    /// Epoch of the returned vector; 0 is the initialisation.
    pub best_epoch: usize,
    /// Held-out score after each evaluated epoch, starting with epoch 0.
    pub scores: Vec<f64>,
}

fn init_user_vector(user_id: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream_str(seed, "user-init", user_id);
    let half = 0.5 / dim as f64;
    (0..dim).map(|_| rng.random_range(-half..half)).collect()
}

/// Fits `u_j` by SGD over every token of the user's training posts, with
/// fresh negatives per token, keeping the epoch with the lowest held-out
/// score. Word vectors are read-only.
pub fn train_user_vector(
    history: &UserHistory,
    word_embs: &WordEmbeddingMatrix,
    sampler: &NegativeSampler,
    config: &UserTrainConfig,
) -> Result<UserFit> {
    let dim = word_embs.dim();
    let words = &word_embs.input;
    if history.num_tokens() == 0 {
        return Err(Error::NoTokens(history.user_id.clone()));
    }
    let split = split_heldout(history, config.heldout_fraction, config.seed)?;
    let train: Vec<usize> = split
        .train_posts
        .iter()
        .flat_map(|&p| history.posts[p].iter().copied())
        .collect();
    if train.is_empty() {
        return Err(Error::NoTokens(history.user_id.clone()));
    }
    let held_posts: Vec<&[usize]> = split
        .heldout_posts
        .iter()
        .map(|&p| history.posts[p].as_slice())
        .collect();
    let heldout_seed = rng::derive_seed_str(config.seed, "heldout-score", &history.user_id);
    let heldout = FrozenHeldout::new(&held_posts, sampler, config.neg_count, heldout_seed);
    if heldout.is_empty() {
        warn!(
            "user '{}': held-out posts have no in-vocabulary tokens; early stopping disabled",
            history.user_id
        );
    }

    let mut u = init_user_vector(&history.user_id, dim, config.seed);
    let mut best = u.clone();
    let mut best_score = heldout.score(&u, words);
    let mut best_epoch = 0;
    let mut scores = vec![best_score];
    let mut rng = rng::stream_str(config.seed, "user-sgd", &history.user_id);
    let mut negs = vec![0; config.neg_count];
    let mut grad = vec![0.0; dim];
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        for &t in &train {
            sampler.fill(&mut rng, &mut negs);
            if hinge_rows(&u, words, t, &negs, &mut grad) > 0.0 {
                axpy(-config.learning_rate, &grad, &mut u);
            }
        }
        if heldout.is_empty() {
            best.copy_from_slice(&u);
            best_epoch = epoch;
            scores.push(0.0);
            continue;
        }
        let score = heldout.score(&u, words);
        scores.push(score);
        if score < best_score {
            best_score = score;
            best.copy_from_slice(&u);
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok(UserFit {
        vector: best,
        best_epoch,
        scores,
    })
}

/// Trains every user independently; rows follow dataset order.
pub fn train_all_users(
    dataset: &Dataset,
    word_embs: &WordEmbeddingMatrix,
    config: &UserTrainConfig,
) -> Result<UserEmbeddingMatrix> {
    config.validate()?;
    if word_embs.len() != dataset.vocab.len() {
        return Err(Error::Dimension {
            expected: dataset.vocab.len(),
            got: word_embs.len(),
        });
    }
    let sampler = NegativeSampler::from_vocab(&dataset.vocab, config.sampling_power, config.seed)?;
    let fit = |u: &UserHistory| {
        train_user_vector(u, word_embs, &sampler, config).map_err(|e| match e {
            Error::NoTokens(_) => e,
            other => Error::invalid(format!("user '{}': {other}", u.user_id)),
        })
    };
    let fits: Vec<UserFit> = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?;
        pool.install(|| dataset.users.par_iter().map(fit).collect::<Result<_>>())?
    } else {
        dataset.users.iter().map(fit).collect::<Result<_>>()?
    };
    let dim = word_embs.dim();
    let data: Vec<f64> = fits.into_iter().flat_map(|f| f.vector).collect();
    let vectors = Array2::from_shape_vec((dataset.users.len(), dim), data).expect("row per user");
    UserEmbeddingMatrix::new(dataset.user_ids(), vectors)
}

struct PvState {
    users: Array2<f64>,
    words: WordEmbeddingMatrix,
    rngs: Vec<StreamRng>,
    total: usize,
}

fn pv_init(dataset: &Dataset, config: &UserTrainConfig) -> Result<PvState> {
    config.validate()?;
    if dataset.vocab.is_empty() {
        return Err(Error::invalid("paragraph-vector training needs a nonempty vocabulary"));
    }
    if let Some(u) = dataset.users.iter().find(|u| u.num_tokens() == 0) {
        return Err(Error::NoTokens(u.user_id.clone()));
    }
    let dim = config.dim;
    let data: Vec<f64> = dataset
        .users
        .iter()
        .flat_map(|u| init_user_vector(&u.user_id, dim, config.seed))
        .collect();
    let users = Array2::from_shape_vec((dataset.users.len(), dim), data).expect("row per user");
    let words = WordEmbeddingMatrix::init(dataset.vocab.len(), dim, config.seed);
    let stream = match config.mode {
        TrainMode::PvDm => "pvdm",
        _ => "pvdbow",
    };
    let rngs = dataset
        .users
        .iter()
        .map(|u| rng::stream_str(config.seed, stream, &u.user_id))
        .collect();
    let total = config.max_epochs * dataset.users.iter().map(UserHistory::num_tokens).sum::<usize>();
    Ok(PvState {
        users,
        words,
        rngs,
        total,
    })
}

fn pv_finish(dataset: &Dataset, state: PvState) -> Result<(UserEmbeddingMatrix, WordEmbeddingMatrix)> {
    Ok((UserEmbeddingMatrix::new(dataset.user_ids(), state.users)?, state.words))
}

/// Runs `per_user(user, u, rng, input, output, tokens_done)` for every user
/// and epoch, serially or with shared lock-free word matrices.
fn pv_run<F>(dataset: &Dataset, config: &UserTrainConfig, state: &mut PvState, per_user: F) -> Result<()>
where
    F: Fn(&UserHistory, &mut [f64], &mut StreamRng, &mut dyn RowStore, &mut dyn RowStore, usize) + Sync,
{
    let offsets: Vec<usize> = dataset
        .users
        .iter()
        .scan(0, |acc, u| {
            let start = *acc;
            *acc += u.num_tokens();
            Some(start)
        })
        .collect();
    let epoch_tokens: usize = dataset.users.iter().map(UserHistory::num_tokens).sum();
    let dim = config.dim;

    if config.threads <= 1 {
        for epoch in 0..config.max_epochs {
            for (j, user) in dataset.users.iter().enumerate() {
                let done = epoch * epoch_tokens + offsets[j];
                let u = row_mut(&mut state.users, j);
                let (input, output) = (&mut state.words.input, &mut state.words.output);
                per_user(user, u, &mut state.rngs[j], input, output, done);
            }
        }
        return Ok(());
    }

    let input = AtomicMatrix::from_array(&state.words.input);
    let output = AtomicMatrix::from_array(&state.words.output);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| Error::invalid(e.to_string()))?;
    let users = state.users.as_slice_mut().expect("standard layout");
    for epoch in 0..config.max_epochs {
        pool.install(|| {
            users
                .par_chunks_mut(dim)
                .zip(state.rngs.par_iter_mut())
                .enumerate()
                .for_each(|(j, (u, rng))| {
                    let (mut inp, mut out) = (&input, &output);
                    let done = epoch * epoch_tokens + offsets[j];
                    per_user(&dataset.users[j], u, rng, &mut inp, &mut out, done);
                })
        });
    }
    let n = dataset.vocab.len();
    state.words.input = input.into_array(n);
    state.words.output = output.into_array(n);
    Ok(())
}

/// PV-DBOW: at each window position, predicts one word sampled from the
/// window using only the user vector. Updates user vectors and output word
/// vectors; input word vectors stay at their initialisation.
pub fn train_pvdbow(
    dataset: &Dataset,
    config: &UserTrainConfig,
) -> Result<(UserEmbeddingMatrix, WordEmbeddingMatrix)> {
    let config = &UserTrainConfig {
        mode: TrainMode::PvDbow,
        ..config.clone()
    };
    let sampler = NegativeSampler::from_vocab(&dataset.vocab, config.sampling_power, config.seed)?;
    let mut state = pv_init(dataset, config)?;
    let total = state.total;
    pv_run(dataset, config, &mut state, |user, u, rng, _input, output, mut done| {
        let mut scratch = NsScratch::new(config.dim, config.neg_count);
        let mut negs = vec![0; config.neg_count];
        for post in &user.posts {
            for pos in 0..post.len() {
                let lr = decayed_lr(config.learning_rate, done, total);
                done += 1;
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window).min(post.len() - 1);
                let target = post[rng.random_range(lo..=hi)];
                sampler.fill(rng, &mut negs);
                ns_logistic_step(u, target, &negs, output, lr, &mut scratch);
                axpy(-lr, &scratch.grad, u);
            }
        }
    })?;
    pv_finish(dataset, state)
}

/// PV-DM: predicts each center word from the mean of the user vector and
/// the other in-window word vectors. Positions with no context are skipped.
pub fn train_pvdm(
    dataset: &Dataset,
    config: &UserTrainConfig,
) -> Result<(UserEmbeddingMatrix, WordEmbeddingMatrix)> {
    let config = &UserTrainConfig {
        mode: TrainMode::PvDm,
        ..config.clone()
    };
    let sampler = NegativeSampler::from_vocab(&dataset.vocab, config.sampling_power, config.seed)?;
    let mut state = pv_init(dataset, config)?;
    let total = state.total;
    pv_run(dataset, config, &mut state, |user, u, rng, input, output, mut done| {
        let dim = config.dim;
        let mut scratch = NsScratch::new(dim, config.neg_count);
        let mut negs = vec![0; config.neg_count];
        let mut h = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for post in &user.posts {
            for pos in 0..post.len() {
                let lr = decayed_lr(config.learning_rate, done, total);
                done += 1;
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(post.len());
                let context = (lo..hi).filter(|&c| c != pos);
                let n = context.clone().count();
                if n == 0 {
                    continue;
                }
                let scale = 1.0 / (n + 1) as f64;
                h.copy_from_slice(u);
                for c in context.clone() {
                    input.read(post[c], &mut buf);
                    axpy(1.0, &buf, &mut h);
                }
                h.iter_mut().for_each(|x| *x *= scale);
                sampler.fill(rng, &mut negs);
                ns_logistic_step(&h, post[pos], &negs, output, lr, &mut scratch);
                for c in context {
                    input.add(post[c], -lr * scale, &scratch.grad);
                }
                axpy(-lr * scale, &scratch.grad, u);
            }
        }
    })?;
    pv_finish(dataset, state)
}

/// Trains user vectors in the configured mode. User2Vec needs pre-trained
/// word vectors; the paragraph-vector modes ignore them.
pub fn train_users(
    dataset: &Dataset,
    word_embs: Option<&WordEmbeddingMatrix>,
    config: &UserTrainConfig,
) -> Result<UserEmbeddingMatrix> {
    match config.mode {
        TrainMode::User2Vec => {
            let words = word_embs.ok_or_else(|| Error::Config("user2vec needs pre-trained word vectors".into()))?;
            train_all_users(dataset, words, config)
        }
        TrainMode::PvDbow => train_pvdbow(dataset, config).map(|(u, _)| u),
        TrainMode::PvDm => train_pvdm(dataset, config).map(|(u, _)| u),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CohortLabel, Vocabulary};
    use approx::assert_relative_eq;

    #[test]
    fn hinge_examples() {
        let u = [1.0, 0.0];
        let (l, g) = user2vec_loss(&u, &[2.0, 0.0], &[&[0.0, 5.0]]);
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);

        let (l, _) = user2vec_loss(&u, &[0.3, 1.0], &[&[0.3, -2.0]]);
        assert_relative_eq!(l, 1.0);

        let (l, g) = user2vec_loss(&u, &[0.5, 0.0], &[&[0.5, 1.0], &[-1.0, 0.0]]);
        assert_relative_eq!(l, 1.0);
        assert_eq!(g, vec![0.0, 1.0]);

        // exactly at the kink: margin 1 - 1 + 0 = 0 contributes nothing
        let (l, g) = user2vec_loss(&u, &[1.0, 0.0], &[&[0.0, 1.0]]);
        assert_eq!(l, 0.0);
        assert_eq!(g, vec![0.0, 0.0]);
    }

    fn toy_dataset() -> (Dataset, WordEmbeddingMatrix) {
        let vocab = Vocabulary::from_entries(vec![("a".into(), 50), ("b".into(), 50)]).unwrap();
        let user = |id: &str, label, tok: usize| UserHistory {
            user_id: id.into(),
            label,
            posts: (0..20).map(|_| vec![tok; 5]).collect(),
        };
        let ds = Dataset {
            vocab,
            users: vec![user("A", CohortLabel::Control, 0), user("B", CohortLabel::Ptsd, 1)],
        };
        let words = WordEmbeddingMatrix {
            input: ndarray::array![[1.0, 0.0], [0.0, 1.0]],
            output: Array2::zeros((2, 2)),
        };
        (ds, words)
    }

    #[test]
    fn user2vec_sign_structure() {
        let (ds, words) = toy_dataset();
        let config = UserTrainConfig {
            neg_count: 5,
            learning_rate: 0.05,
            ..Default::default()
        };
        let before = words.clone();
        let users = train_all_users(&ds, &words, &config).unwrap();
        assert_eq!(words, before);
        assert_eq!(users.user_ids, vec!["A", "B"]);
        let (ua, ub) = (users.vector(0), users.vector(1));
        assert!(dot(ua, words.vector(0)) > dot(ua, words.vector(1)));
        assert!(dot(ub, words.vector(1)) > dot(ub, words.vector(0)));

        assert_eq!(train_all_users(&ds, &words, &config).unwrap(), users);
        let par = train_all_users(&ds, &words, &UserTrainConfig { threads: 2, ..config.clone() }).unwrap();
        assert_eq!(par, users);

        let init = train_all_users(&ds, &words, &UserTrainConfig { max_epochs: 0, ..config }).unwrap();
        assert_eq!(init.vector(0), init_user_vector("A", 2, 0).as_slice());
    }

    #[test]
    fn early_stopping_keeps_minimum() {
        let (ds, words) = toy_dataset();
        let sampler = NegativeSampler::from_vocab(&ds.vocab, 0.75, 0).unwrap();
        let config = UserTrainConfig {
            neg_count: 3,
            learning_rate: 0.5,
            patience: 2,
            ..Default::default()
        };
        let fit = train_user_vector(&ds.users[0], &words, &sampler, &config).unwrap();
        let min = fit.scores.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(fit.scores[fit.best_epoch], min);
        assert!(fit.scores.len() <= config.max_epochs + 1);
    }

    #[test]
    fn heldout_score_properties() {
        let (ds, words) = toy_dataset();
        let sampler = NegativeSampler::from_vocab(&ds.vocab, 0.75, 0).unwrap();
        let posts: Vec<&[usize]> = ds.users[0].posts.iter().take(3).map(|p| p.as_slice()).collect();
        assert_relative_eq!(heldout_score(&[0.0, 0.0], &posts, &words, &sampler, 7, 1), 7.0);
        let u = [0.1, -0.2];
        assert_eq!(
            heldout_score(&u, &posts, &words, &sampler, 7, 1),
            heldout_score(&u, &posts, &words, &sampler, 7, 1)
        );
    }

    #[test]
    fn user_without_tokens_is_reported() {
        let (mut ds, words) = toy_dataset();
        ds.users[1].posts = vec![vec![], vec![]];
        let err = train_all_users(&ds, &words, &UserTrainConfig::default()).unwrap_err();
        assert!(err.to_string().contains("'B'"), "{err}");
    }

    #[test]
    fn paragraph_vectors_epochs_zero_and_determinism() {
        let (ds, _) = toy_dataset();
        let config = UserTrainConfig {
            dim: 4,
            neg_count: 2,
            window: 2,
            max_epochs: 0,
            ..Default::default()
        };
        for train in [train_pvdbow, train_pvdm] {
            let (u, w) = train(&ds, &config).unwrap();
            assert_eq!(w, WordEmbeddingMatrix::init(2, 4, 0));
            assert_eq!(u.vector(1), init_user_vector("B", 4, 0).as_slice());
            let trained = UserTrainConfig { max_epochs: 3, ..config.clone() };
            assert_eq!(train(&ds, &trained).unwrap(), train(&ds, &trained).unwrap());
            let par = train(&ds, &UserTrainConfig { threads: 2, ..trained }).unwrap();
            assert!(par.0.vectors.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn pvdm_skips_posts_without_context() {
        let (mut ds, _) = toy_dataset();
        for u in &mut ds.users {
            u.posts = vec![vec![0]; 4];
        }
        let config = UserTrainConfig {
            dim: 3,
            max_epochs: 2,
            ..Default::default()
        };
        let (u, w) = train_pvdm(&ds, &config).unwrap();
        assert_eq!(w, WordEmbeddingMatrix::init(2, 3, 0));
        assert_eq!(u.vector(0), init_user_vector("A", 3, 0).as_slice());
    }

    #[test]
    fn user_matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = UserEmbeddingMatrix::new(
            vec!["u1".into(), "u2".into()],
            ndarray::array![[0.1, 1.0 / 3.0], [-2.5e-9, 7.0]],
        )
        .unwrap();
        let path = dir.path().join("users.txt");
        m.save(&path).unwrap();
        assert_eq!(UserEmbeddingMatrix::load(&path).unwrap(), m);
    }
}
