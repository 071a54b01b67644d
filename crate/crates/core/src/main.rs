use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use cohort_embed::app::{self, RunConfig};
use cohort_embed::corpus::{self, Dataset, Vocabulary};
use cohort_embed::eval::cv::{cross_validate, ModelSpec};
use cohort_embed::features::{bow_table, boe_table, embedding_table, FeatureKind, FeatureTable};
use cohort_embed::nlse::{NlseModel, NlseTrainConfig};
use cohort_embed::synth::{self, SynthConfig};
use cohort_embed::uservec::{train_users, TrainMode, UserEmbeddingMatrix, UserTrainConfig};
use cohort_embed::wordvec::{train_skipgram, SgnsConfig, WordEmbeddingMatrix};
use cohort_embed::Error;

const VOCAB_FILE: &str = "vocab.tsv";
const DATASET_FILE: &str = "dataset.jsonl";
const LABELS_FILE: &str = "labels.csv";

#[derive(Parser)]
#[command(name = "cohort-embed", version, about = "User embeddings and cohort classification from post histories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalise, tokenise and filter a raw JSONL corpus.
    Ingest(IngestArgs),
    /// Generate a synthetic multi-cohort corpus.
    Synth(SynthArgs),
    /// Train skip-gram word vectors on an ingested corpus.
    TrainWords(TrainWordsArgs),
    /// Train user vectors (User2Vec, PV-DBOW or PV-DM).
    TrainUsers(TrainUsersArgs),
    /// Build a per-user feature table.
    Features(FeaturesArgs),
    /// Neighbour matrix and per-class ROC/AUC for user vectors.
    Homophily(HomophilyArgs),
    /// Grid-search and train one NLSE model.
    TrainNlse(TrainNlseArgs),
    /// Stratified k-fold cross-validation of LR or NLSE on a feature table.
    Cv(CvArgs),
    /// Run the whole experiment from a `key = value` config.
    RunAll(RunAllArgs),
    /// Export subspace features and class prototypes of a trained NLSE model.
    ExportSubspace(ExportArgs),
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = corpus::DEFAULT_MIN_COUNT)]
    min_count: u64,
    #[arg(long, default_value_t = corpus::DEFAULT_MIN_HISTORY)]
    min_history: usize,
    /// Seed for the held-out split written to `heldout.tsv`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = corpus::DEFAULT_HELDOUT_FRACTION)]
    heldout: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// Users per class.
    #[arg(long, default_value_t = 50)]
    users: usize,
    #[arg(long, default_value_t = 200)]
    posts: usize,
    #[arg(long, default_value_t = 20)]
    tokens: usize,
    #[arg(long, default_value_t = 0.3)]
    lambda: f64,
    #[arg(long, default_value_t = 1500)]
    shared_vocab: usize,
    #[arg(long, default_value_t = 167)]
    class_vocab: usize,
    #[arg(long)]
    zipf: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainWordsArgs {
    /// Directory written by `ingest`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 20)]
    neg: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Extra unlabeled JSONL corpora appended to the training posts.
    /// Tokens outside the ingested vocabulary are dropped.
    #[arg(long)]
    extra: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainUsersArgs {
    #[arg(long, default_value = "user2vec")]
    mode: TrainMode,
    /// Word vectors; required for user2vec.
    #[arg(long)]
    words: Option<PathBuf>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    neg: usize,
    #[arg(long, default_value_t = 0.025)]
    lr: f64,
    #[arg(long, default_value_t = corpus::DEFAULT_HELDOUT_FRACTION)]
    heldout: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    /// Vector size for the paragraph-vector modes.
    #[arg(long, default_value_t = 50)]
    dim: usize,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    /// bow, boe, u2v, pvdm, pvdbow or a `+`-joined combination.
    #[arg(long)]
    kind: FeatureKind,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    words: Option<PathBuf>,
    #[arg(long)]
    users: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct HomophilyArgs {
    #[arg(long)]
    users: PathBuf,
    /// `user_id,label` CSV.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainNlseArgs {
    #[arg(long)]
    users: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10,15,20,25")]
    sdim_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.01,0.1,0.5,1")]
    lr_grid: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    features: PathBuf,
    /// Feature kind; defaults to the file stem.
    #[arg(long)]
    kind: Option<FeatureKind>,
    #[arg(long, default_value = "lr")]
    model: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunAllArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides for config keys, as `--key value` or `--key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ExportArgs {
    /// Model CSV written by `train-nlse`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    users: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn load_ingested(dir: &Path) -> cohort_embed::Result<Dataset> {
    let vocab = Vocabulary::read_tsv(&dir.join(VOCAB_FILE))?;
    Dataset::read_jsonl(&dir.join(DATASET_FILE), vocab)
}

fn load_users_and_labels(users: &Path, labels: &Path) -> cohort_embed::Result<(UserEmbeddingMatrix, Vec<corpus::CohortLabel>)> {
    let users = UserEmbeddingMatrix::load(users)?;
    let labels = app::align_labels(&users, &corpus::read_labels_csv(labels)?)?;
    Ok((users, labels))
}

fn ingest(a: IngestArgs) -> cohort_embed::Result<()> {
    let dataset = app::ingest(corpus::load_dataset(&a.input)?, a.min_count, a.min_history)?;
    fs::create_dir_all(&a.out)?;
    dataset.vocab.write_tsv(&a.out.join(VOCAB_FILE))?;
    dataset.write_jsonl(&a.out.join(DATASET_FILE))?;
    corpus::write_labels_csv(&a.out.join(LABELS_FILE), &dataset.user_ids(), &dataset.labels())?;
    let mut heldout = String::from("user_id\theldout_posts\n");
    for u in &dataset.users {
        if u.posts.len() >= 2 {
            let split = corpus::split_heldout(u, a.heldout, a.seed)?;
            let idx: Vec<String> = split.heldout_posts.iter().map(|i| i.to_string()).collect();
            heldout.push_str(&format!("{}\t{}\n", u.user_id, idx.join(",")));
        }
    }
    fs::write(a.out.join("heldout.tsv"), heldout)?;
    info!("{} users, vocabulary {}", dataset.users.len(), dataset.vocab.len());
    Ok(())
}

fn synth(a: SynthArgs) -> cohort_embed::Result<()> {
    let config = SynthConfig {
        num_classes: a.classes,
        users_per_class: a.users,
        posts_per_user: a.posts,
        tokens_per_post: a.tokens,
        shared_vocab_size: a.shared_vocab,
        class_vocab_size: a.class_vocab,
        class_weight: a.lambda,
        zipf: a.zipf,
        seed: a.seed,
    };
    synth::write_jsonl(&synth::make_cohort_corpus(&config)?, &a.out)
}

fn train_words(a: TrainWordsArgs) -> cohort_embed::Result<()> {
    let dataset = load_ingested(&a.input)?;
    let config = SgnsConfig {
        window: a.window,
        neg_count: a.neg,
        dim: a.dim,
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        threads: a.threads,
        ..SgnsConfig::default()
    };
    let mut extra = Vec::new();
    for path in &a.extra {
        let raw = corpus::load_dataset(path)?;
        extra.extend(raw.token_sequences().map(|p| dataset.vocab.encode(p)));
    }
    let posts: Vec<&[usize]> = dataset
        .users
        .iter()
        .flat_map(|u| u.posts.iter().map(|p| p.as_slice()))
        .chain(extra.iter().map(|p| p.as_slice()))
        .collect();
    train_skipgram(&posts, &dataset.vocab, &config)?.save(&dataset.vocab, &a.out)
}

fn train_users_cmd(a: TrainUsersArgs) -> cohort_embed::Result<()> {
    let dataset = load_ingested(&a.input)?;
    let words = match &a.words {
        Some(p) => Some(WordEmbeddingMatrix::load(p, &dataset.vocab)?),
        None => None,
    };
    let config = UserTrainConfig {
        mode: a.mode,
        neg_count: a.neg,
        learning_rate: a.lr,
        max_epochs: a.epochs,
        patience: a.patience,
        heldout_fraction: a.heldout,
        window: a.window,
        dim: a.dim,
        seed: a.seed,
        threads: a.threads,
        ..UserTrainConfig::default()
    };
    train_users(&dataset, words.as_ref(), &config)?.save(&a.out)
}

fn feature_table(kind: &FeatureKind, dataset: &Dataset, a: &FeaturesArgs) -> cohort_embed::Result<FeatureTable> {
    match kind {
        FeatureKind::Bow => bow_table(dataset),
        FeatureKind::Boe => {
            let p = a.words.as_ref().ok_or_else(|| Error::Config("boe features need --words".into()))?;
            boe_table(dataset, &WordEmbeddingMatrix::load(p, &dataset.vocab)?, true)
        }
        FeatureKind::User(mode) => {
            let p = a.users.as_ref().ok_or_else(|| Error::Config(format!("{mode} features need --users")))?;
            embedding_table(dataset, &UserEmbeddingMatrix::load(p)?, *mode)
        }
        FeatureKind::Concat(parts) => {
            let mut t = feature_table(&parts[0], dataset, a)?;
            for p in &parts[1..] {
                t = t.concat(&feature_table(p, dataset, a)?)?;
            }
            Ok(t)
        }
    }
}

fn features(a: FeaturesArgs) -> cohort_embed::Result<()> {
    let dataset = load_ingested(&a.input)?;
    feature_table(&a.kind, &dataset, &a)?.write_csv(&a.out)
}

fn homophily(a: HomophilyArgs) -> cohort_embed::Result<()> {
    let (users, labels) = load_users_and_labels(&a.users, &a.labels)?;
    fs::create_dir_all(&a.out)?;
    let report = app::write_homophily(&users, &labels, a.k, &a.out, "")?;
    for c in &report.per_class {
        println!("{}\tAUC {:.4}", c.class, c.roc.auc);
    }
    println!("macro\tAUC {:.4}", report.macro_auc);
    Ok(())
}

fn train_nlse(a: TrainNlseArgs) -> cohort_embed::Result<()> {
    let (users, labels) = load_users_and_labels(&a.users, &a.labels)?;
    let (fit, chosen) = app::select_nlse(&users, &labels, &a.sdim_grid, &a.lr_grid, &NlseTrainConfig::default(), a.seed)?;
    fs::create_dir_all(&a.out)?;
    fit.model.write_csv(&a.out.join("nlse_model.csv"))?;
    app::export_subspace(&fit.model, &users, &labels, &a.out)?;
    println!(
        "s_dim={} lr={} validation macro-F1 {:.4} (epoch {})",
        chosen.subspace_dim, chosen.learning_rate, fit.best_val_f1, fit.best_epoch
    );
    Ok(())
}

fn cv(a: CvArgs) -> anyhow::Result<()> {
    let kind = match a.kind {
        Some(k) => k,
        None => {
            let stem = a.features.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            stem.parse().with_context(|| format!("cannot infer feature kind from '{stem}'; pass --kind"))?
        }
    };
    let spec = match a.model.as_str() {
        "lr" => ModelSpec::lr(),
        "nlse" => ModelSpec::nlse(),
        other => bail!("unknown model '{other}' (expected lr or nlse)"),
    };
    let table = FeatureTable::read_csv(&a.features, kind)?;
    let report = cross_validate(&table, &spec, a.k, a.seed)?;
    fs::create_dir_all(&a.out)?;
    report.write_folds_csv(&a.out.join(format!("{}_{}_folds.csv", report.model, report.features)))?;
    println!(
        "{} on {}: macro-F1 {:.4}, binary-F1 {:.4}",
        report.model, report.features, report.mean_macro_f1, report.mean_binary_f1
    );
    Ok(())
}

fn run_all(a: RunAllArgs) -> cohort_embed::Result<()> {
    let overrides = app::parse_flag_overrides(&a.overrides).map_err(|e| e.in_stage("config"))?;
    let config: RunConfig = app::parse_config(a.config.as_deref(), &overrides).map_err(|e| e.in_stage("config"))?;
    let report = app::run_experiment(&config)?;
    for r in &report.summary {
        println!("{}\t{}\tmacro-F1 {:.4}\tbinary-F1 {:.4}", r.model, r.features, r.macro_f1, r.binary_f1);
    }
    Ok(())
}

fn export(a: ExportArgs) -> cohort_embed::Result<()> {
    let model = NlseModel::read_csv(&a.model)?;
    let (users, labels) = load_users_and_labels(&a.users, &a.labels)?;
    fs::create_dir_all(&a.out)?;
    app::export_subspace(&model, &users, &labels, &a.out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (stage, result): (&str, anyhow::Result<()>) = match cli.command {
        Command::Ingest(a) => ("ingest", ingest(a).map_err(Into::into)),
        Command::Synth(a) => ("synth", synth(a).map_err(Into::into)),
        Command::TrainWords(a) => ("train-words", train_words(a).map_err(Into::into)),
        Command::TrainUsers(a) => ("train-users", train_users_cmd(a).map_err(Into::into)),
        Command::Features(a) => ("features", features(a).map_err(Into::into)),
        Command::Homophily(a) => ("homophily", homophily(a).map_err(Into::into)),
        Command::TrainNlse(a) => ("train-nlse", train_nlse(a).map_err(Into::into)),
        Command::Cv(a) => ("cv", cv(a)),
        Command::RunAll(a) => ("run-all", run_all(a).map_err(Into::into)),
        Command::ExportSubspace(a) => ("export-subspace", export(a).map_err(Into::into)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {stage}: {e:#}");
            ExitCode::FAILURE
        }
    }
}
