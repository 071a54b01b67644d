//! `key = value` run configuration. Every key can also be given as a
//! command-line flag with the same name.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::corpus::{DEFAULT_HELDOUT_FRACTION, DEFAULT_MIN_COUNT, DEFAULT_MIN_HISTORY};
use crate::error::{Error, Result};
use crate::eval::cv::DEFAULT_FOLDS;
use crate::eval::homophily::DEFAULT_TOP_K;
use crate::lr::C_GRID;
use crate::nlse::{NlseTrainConfig, LR_GRID, SDIM_GRID};
use crate::synth::SynthConfig;
use crate::uservec::{TrainMode, UserTrainConfig};
use crate::wordvec::{SgnsConfig, DEFAULT_SAMPLING_POWER};

pub const CONFIG_ECHO_FILE: &str = "config.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Raw JSONL corpus. Without one, a synthetic corpus is generated.
    pub dataset: Option<PathBuf>,
    /// Pre-trained word vectors (word2vec text); trained from the corpus if unset.
    pub word_embeddings: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,

    pub min_count: u64,
    pub min_history: usize,

    pub dim: usize,
    pub window: usize,
    pub neg_count: usize,
    pub sampling_power: f64,
    pub word_epochs: usize,
    pub word_lr: f64,

    pub heldout_fraction: f64,
    pub user_lr: f64,
    pub user_epochs: usize,
    pub patience: usize,
    pub pv_dim: usize,
    pub pv_epochs: usize,
    pub pv_lr: f64,

    pub top_k: usize,
    pub folds: usize,
    pub c_grid: Vec<f64>,
    pub sdim_grid: Vec<usize>,
    pub nlse_lr_grid: Vec<f64>,
    pub nlse_batch: usize,
    pub nlse_epochs: usize,
    pub nlse_patience: usize,

    pub synth_classes: usize,
    pub synth_users: usize,
    pub synth_posts: usize,
    pub synth_tokens: usize,
    pub synth_shared_vocab: usize,
    pub synth_class_vocab: usize,
    pub synth_lambda: f64,
    pub synth_zipf: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sgns = SgnsConfig::default();
        let users = UserTrainConfig::default();
        let nlse = NlseTrainConfig::default();
        let synth = SynthConfig::default();
        RunConfig {
            dataset: None,
            word_embeddings: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            threads: 1,
            min_count: DEFAULT_MIN_COUNT,
            min_history: DEFAULT_MIN_HISTORY,
            dim: sgns.dim,
            window: sgns.window,
            neg_count: sgns.neg_count,
            sampling_power: DEFAULT_SAMPLING_POWER,
            word_epochs: sgns.epochs,
            word_lr: sgns.learning_rate,
            heldout_fraction: DEFAULT_HELDOUT_FRACTION,
            user_lr: users.learning_rate,
            user_epochs: users.max_epochs,
            patience: users.patience,
            pv_dim: users.dim,
            pv_epochs: users.max_epochs,
            pv_lr: users.learning_rate,
            top_k: DEFAULT_TOP_K,
            folds: DEFAULT_FOLDS,
            c_grid: C_GRID.to_vec(),
            sdim_grid: SDIM_GRID.to_vec(),
            nlse_lr_grid: LR_GRID.to_vec(),
            nlse_batch: nlse.batch_size,
            nlse_epochs: nlse.max_epochs,
            nlse_patience: nlse.patience,
            synth_classes: synth.num_classes,
            synth_users: synth.users_per_class,
            synth_posts: synth.posts_per_user,
            synth_tokens: synth.tokens_per_post,
            synth_shared_vocab: synth.shared_vocab_size,
            synth_class_vocab: synth.class_vocab_size,
            synth_lambda: synth.class_weight,
            synth_zipf: synth.zipf,
        }
    }
}

fn scalar<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .map(|v| scalar(key, v.trim()))
        .collect::<Result<Vec<T>>>()
        .and_then(|v| {
            if v.is_empty() {
                Err(Error::Config(format!("{key}: empty list")))
            } else {
                Ok(v)
            }
        })
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn optional_path(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Sets one key. Dashes and underscores are interchangeable in keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let v = value.trim();
        match k {
            "dataset" => self.dataset = optional_path(v),
            "word_embeddings" => self.word_embeddings = optional_path(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = scalar(k, v)?,
            "threads" => self.threads = scalar(k, v)?,
            "min_count" => self.min_count = scalar(k, v)?,
            "min_history" => self.min_history = scalar(k, v)?,
            "dim" => self.dim = scalar(k, v)?,
            "window" => self.window = scalar(k, v)?,
            "neg_count" => self.neg_count = scalar(k, v)?,
            "sampling_power" => self.sampling_power = scalar(k, v)?,
            "word_epochs" => self.word_epochs = scalar(k, v)?,
            "word_lr" => self.word_lr = scalar(k, v)?,
            "heldout_fraction" => self.heldout_fraction = scalar(k, v)?,
            "user_lr" => self.user_lr = scalar(k, v)?,
            "user_epochs" => self.user_epochs = scalar(k, v)?,
            "patience" => self.patience = scalar(k, v)?,
            "pv_dim" => self.pv_dim = scalar(k, v)?,
            "pv_epochs" => self.pv_epochs = scalar(k, v)?,
            "pv_lr" => self.pv_lr = scalar(k, v)?,
            "top_k" => self.top_k = scalar(k, v)?,
            "folds" => self.folds = scalar(k, v)?,
            "c_grid" => self.c_grid = list(k, v)?,
            "sdim_grid" => self.sdim_grid = list(k, v)?,
            "nlse_lr_grid" => self.nlse_lr_grid = list(k, v)?,
            "nlse_batch" => self.nlse_batch = scalar(k, v)?,
            "nlse_epochs" => self.nlse_epochs = scalar(k, v)?,
            "nlse_patience" => self.nlse_patience = scalar(k, v)?,
            "synth_classes" => self.synth_classes = scalar(k, v)?,
            "synth_users" => self.synth_users = scalar(k, v)?,
            "synth_posts" => self.synth_posts = scalar(k, v)?,
            "synth_tokens" => self.synth_tokens = scalar(k, v)?,
            "synth_shared_vocab" => self.synth_shared_vocab = scalar(k, v)?,
            "synth_class_vocab" => self.synth_class_vocab = scalar(k, v)?,
            "synth_lambda" => self.synth_lambda = scalar(k, v)?,
            "synth_zipf" => self.synth_zipf = scalar(k, v)?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, in echo order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dataset", show_path(&self.dataset)),
            ("word_embeddings", show_path(&self.word_embeddings)),
            ("out_dir", self.out_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("min_count", self.min_count.to_string()),
            ("min_history", self.min_history.to_string()),
            ("dim", self.dim.to_string()),
            ("window", self.window.to_string()),
            ("neg_count", self.neg_count.to_string()),
            ("sampling_power", self.sampling_power.to_string()),
            ("word_epochs", self.word_epochs.to_string()),
            ("word_lr", self.word_lr.to_string()),
            ("heldout_fraction", self.heldout_fraction.to_string()),
            ("user_lr", self.user_lr.to_string()),
            ("user_epochs", self.user_epochs.to_string()),
            ("patience", self.patience.to_string()),
            ("pv_dim", self.pv_dim.to_string()),
            ("pv_epochs", self.pv_epochs.to_string()),
            ("pv_lr", self.pv_lr.to_string()),
            ("top_k", self.top_k.to_string()),
            ("folds", self.folds.to_string()),
            ("c_grid", join(&self.c_grid)),
            ("sdim_grid", join(&self.sdim_grid)),
            ("nlse_lr_grid", join(&self.nlse_lr_grid)),
            ("nlse_batch", self.nlse_batch.to_string()),
            ("nlse_epochs", self.nlse_epochs.to_string()),
            ("nlse_patience", self.nlse_patience.to_string()),
            ("synth_classes", self.synth_classes.to_string()),
            ("synth_users", self.synth_users.to_string()),
            ("synth_posts", self.synth_posts.to_string()),
            ("synth_tokens", self.synth_tokens.to_string()),
            ("synth_shared_vocab", self.synth_shared_vocab.to_string()),
            ("synth_class_vocab", self.synth_class_vocab.to_string()),
            ("synth_lambda", self.synth_lambda.to_string()),
            ("synth_zipf", self.synth_zipf.to_string()),
        ]
    }

    pub fn keys() -> Vec<&'static str> {
        RunConfig::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    /// The config in the same format `parse_config` reads.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn write_echo(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(CONFIG_ECHO_FILE);
        fs::write(&path, self.to_text())?;
        Ok(path)
    }

    pub fn sgns(&self) -> SgnsConfig {
        SgnsConfig {
            window: self.window,
            neg_count: self.neg_count,
            dim: self.dim,
            learning_rate: self.word_lr,
            epochs: self.word_epochs,
            seed: crate::rng::derive_seed(self.seed, "train-words", 0),
            sampling_power: self.sampling_power,
            dynamic_window: false,
            threads: self.threads,
        }
    }

    pub fn user_train(&self, mode: TrainMode) -> UserTrainConfig {
        let pv = mode != TrainMode::User2Vec;
        UserTrainConfig {
            mode,
            neg_count: self.neg_count,
            learning_rate: if pv { self.pv_lr } else { self.user_lr },
            max_epochs: if pv { self.pv_epochs } else { self.user_epochs },
            patience: self.patience,
            heldout_fraction: self.heldout_fraction,
            window: self.window,
            dim: self.pv_dim,
            sampling_power: self.sampling_power,
            seed: crate::rng::derive_seed_str(self.seed, "train-users", &mode.to_string()),
            threads: self.threads,
        }
    }

    pub fn nlse_base(&self) -> NlseTrainConfig {
        NlseTrainConfig {
            batch_size: self.nlse_batch,
            max_epochs: self.nlse_epochs,
            patience: self.nlse_patience,
            ..NlseTrainConfig::default()
        }
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            num_classes: self.synth_classes,
            users_per_class: self.synth_users,
            posts_per_user: self.synth_posts,
            tokens_per_post: self.synth_tokens,
            shared_vocab_size: self.synth_shared_vocab,
            class_vocab_size: self.synth_class_vocab,
            class_weight: self.synth_lambda,
            zipf: self.synth_zipf,
            seed: crate::rng::derive_seed(self.seed, "synth", 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sgns().validate()?;
        for mode in TrainMode::ALL {
            self.user_train(mode).validate()?;
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if self.top_k == 0 {
            return Err(Error::Config("top_k must be at least 1".into()));
        }
        if self.c_grid.iter().any(|&c| !(c > 0.0)) || self.nlse_lr_grid.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::Config("grid values must be positive".into()));
        }
        if self.sdim_grid.iter().any(|&s| s == 0 || s >= self.dim.min(self.pv_dim)) {
            return Err(Error::Config(format!(
                "subspace sizes must be in 1..{}",
                self.dim.min(self.pv_dim)
            )));
        }
        if self.dataset.is_none() {
            self.synth().validate()?;
        }
        Ok(())
    }
}

/// Applies `key = value` lines on top of the defaults. Blank lines and
/// lines starting with `#` are ignored.
pub fn parse_config_text(text: &str, origin: &Path) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected 'key = value'"))?;
        config
            .set(key, value)
            .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
    }
    Ok(config)
}

/// Reads an optional config file, then applies flag overrides in order.
pub fn parse_config(file: Option<&Path>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut config = match file {
        Some(path) => parse_config_text(&fs::read_to_string(path)?, path)?,
        None => RunConfig::default(),
    };
    for (k, v) in overrides {
        config.set(k, v)?;
    }
    Ok(config)
}

/// Turns `--key value` / `--key=value` arguments into override pairs.
pub fn parse_flag_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let flag = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected a --key flag, got '{arg}'")))?;
        match flag.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| Error::Config(format!("flag --{flag} needs a value")))?;
                out.push((flag.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_config_text("", Path::new("x")).unwrap(), RunConfig::default());
        assert_eq!(parse_config_text("\n# note\n", Path::new("x")).unwrap(), RunConfig::default());
    }

    #[test]
    fn values_and_errors() {
        let c = parse_config_text("neg_count = 20\nc_grid = 1, 10\n", Path::new("x")).unwrap();
        assert_eq!(c.neg_count, 20);
        assert_eq!(c.c_grid, vec![1.0, 10.0]);
        assert!(matches!(
            parse_config_text("bogus = 1", Path::new("x")),
            Err(Error::Parse { line: 1, .. })
        ));
        let err = parse_config_text("\nneg_count = many", Path::new("x")).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        assert!(parse_config_text("neg_count 20", Path::new("x")).is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        fs::write(&path, "neg_count = 5\nseed = 3\n").unwrap();
        let flags = parse_flag_overrides(&["--neg-count".into(), "7".into(), "--dim=30".into()]).unwrap();
        let c = parse_config(Some(&path), &flags).unwrap();
        assert_eq!((c.neg_count, c.seed, c.dim), (7, 3, 30));
        assert!(parse_flag_overrides(&["--seed".into()]).is_err());
        assert!(parse_flag_overrides(&["seed".into(), "1".into()]).is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = RunConfig::default();
        c.set("dataset", "data/x.jsonl").unwrap();
        c.set("synth_lambda", "0.25").unwrap();
        c.set("nlse_lr_grid", "0.1,1").unwrap();
        assert_eq!(parse_config_text(&c.to_text(), Path::new("echo")).unwrap(), c);
        assert_eq!(RunConfig::keys().len(), c.entries().len());
    }
}
