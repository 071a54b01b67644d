//! Synthetic cohort corpora with planted class-specific vocabulary, and an
//! embedding-free check that the planted signal is recoverable.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::{CohortLabel, Dataset, RawDataset, RawUser};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub users_per_class: usize,
    pub posts_per_user: usize,
    pub tokens_per_post: usize,
    pub shared_vocab_size: usize,
    pub class_vocab_size: usize,
    /// Probability that a token comes from the user's class pool.
    pub class_weight: f64,
    /// Draw within each pool from a Zipf(1) law instead of uniformly.
    pub zipf: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 3,
            users_per_class: 50,
            posts_per_user: 200,
            tokens_per_post: 20,
            shared_vocab_size: 1500,
            class_vocab_size: 167,
            class_weight: 0.3,
            zipf: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.num_classes,
            self.users_per_class,
            self.posts_per_user,
            self.tokens_per_post,
            self.shared_vocab_size,
            self.class_vocab_size,
        ];
        if sizes.contains(&0) {
            return Err(Error::Config("synthetic corpus sizes must all be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if !(0.0..=1.0).contains(&self.class_weight) {
            return Err(Error::Config(format!("class weight {} not in [0, 1]", self.class_weight)));
        }
        Ok(())
    }
}

pub fn shared_token(i: usize) -> String {
    format!("s{i}")
}

pub fn class_token(class: usize, i: usize) -> String {
    format!("c{class}w{i}")
}

struct Pool {
    size: usize,
    zipf: Option<Zipf<f64>>,
}

impl Pool {
    fn new(size: usize, zipf: bool) -> Result<Self> {
        let zipf = if zipf {
            Some(Zipf::new(size as f64, 1.0).map_err(|e| Error::Config(e.to_string()))?)
        } else {
            None
        };
        Ok(Pool { size, zipf })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        match &self.zipf {
            Some(z) => (z.sample(rng) as usize - 1).min(self.size - 1),
            None => rng.random_range(0..self.size),
        }
    }
}

/// Users of class `c` draw each token from the class-`c` pool with
/// probability `class_weight`, otherwise from the shared pool. Users are
/// listed class by class; each has its own seeded stream.
pub fn make_cohort_corpus(config: &SynthConfig) -> Result<RawDataset> {
    config.validate()?;
    let shared = Pool::new(config.shared_vocab_size, config.zipf)?;
    let class_pool = Pool::new(config.class_vocab_size, config.zipf)?;
    let mut users = Vec::with_capacity(config.num_classes * config.users_per_class);
    for c in 0..config.num_classes {
        for i in 0..config.users_per_class {
            let user_id = format!("u{c}_{i:04}");
            let mut rng = rng::stream_str(config.seed, "synth-user", &user_id);
            let posts = (0..config.posts_per_user)
                .map(|_| {
                    (0..config.tokens_per_post)
                        .map(|_| {
                            if rng.random::<f64>() < config.class_weight {
                                class_token(c, class_pool.draw(&mut rng))
                            } else {
                                shared_token(shared.draw(&mut rng))
                            }
                        })
                        .collect()
                })
                .collect();
            users.push(RawUser {
                user_id,
                label: CohortLabel::for_class_index(c),
                posts,
            });
        }
    }
    Ok(RawDataset { users })
}

/// Writes a raw dataset as ingestible JSONL, posts joined by spaces.
pub fn write_jsonl(dataset: &RawDataset, path: &Path) -> Result<()> {
    let rows: Vec<(String, CohortLabel, Vec<String>)> = dataset
        .users
        .iter()
        .map(|u| (u.user_id.clone(), u.label, u.posts.iter().map(|p| p.join(" ")).collect()))
        .collect();
    crate::corpus::write_raw_jsonl(&rows, path)
}

/// Leave-one-out nearest-centroid accuracy on L2-normalised bag-of-words
/// count vectors.
pub fn separability_oracle(dataset: &Dataset) -> f64 {
    let n = dataset.users.len();
    if n == 0 {
        return 0.0;
    }
    let v = dataset.vocab.len();
    let classes = dataset.label_set();
    let class_of: Vec<usize> = dataset
        .users
        .iter()
        .map(|u| classes.binary_search(&u.label).unwrap())
        .collect();
    let vectors: Vec<Vec<f64>> = dataset
        .users
        .iter()
        .map(|u| {
            let mut x = vec![0.0; v];
            for t in u.tokens() {
                x[t] += 1.0;
            }
            let l = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            if l > 0.0 {
                x.iter_mut().for_each(|a| *a /= l);
            }
            x
        })
        .collect();
    let mut sums = vec![vec![0.0; v]; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    for (x, &c) in vectors.iter().zip(&class_of) {
        crate::math::axpy(1.0, x, &mut sums[c]);
        counts[c] += 1;
    }
    let mut correct = 0;
    for (x, &own) in vectors.iter().zip(&class_of) {
        let mut best = (f64::INFINITY, usize::MAX);
        for c in 0..classes.len() {
            let m = counts[c] - usize::from(c == own);
            if m == 0 {
                continue;
            }
            let dist: f64 = (0..v)
                .map(|j| {
                    let centroid = (sums[c][j] - if c == own { x[j] } else { 0.0 }) / m as f64;
                    (x[j] - centroid).powi(2)
                })
                .sum();
            if dist < best.0 {
                best = (dist, c);
            }
        }
        if best.1 == own {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}
