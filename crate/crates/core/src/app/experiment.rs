//! The end-to-end experiment: corpus to summary table.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::config::RunConfig;
use crate::corpus::{label_set, load_dataset, CohortLabel, Dataset, RawDataset};
use crate::error::{Error, Result};
use crate::eval::cv::{cross_validate, stratified_holdout, CvReport, ModelSpec, VALIDATION_FRACTION};
use crate::eval::homophily::{homophily_report, neighbor_matrix, HomophilyReport};
use crate::features::{bow_table, boe_table, embedding_table, FeatureKind, FeatureTable};
use crate::lr::DEFAULT_TOL;
use crate::nlse::{
    class_prototype, nlse_train, subspace_features, write_subspace_csv, NlseFit, NlseModel, NlseTrainConfig,
};
use crate::synth;
use crate::uservec::{train_users, TrainMode, UserEmbeddingMatrix};
use crate::wordvec::{train_skipgram, WordEmbeddingMatrix};

pub const SUMMARY_FILE: &str = "summary.csv";

pub fn require_file(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::invalid(format!("{} does not exist", path.display())))
    }
}

/// Reads a raw corpus, drops users with short histories, builds the
/// vocabulary from the survivors and indexes them.
pub fn ingest(raw: RawDataset, min_count: u64, min_history: usize) -> Result<Dataset> {
    let before = raw.users.len();
    let raw = RawDataset {
        users: raw.users.into_iter().filter(|u| u.posts.len() >= min_history).collect(),
    };
    info!("kept {} of {before} users with at least {min_history} posts", raw.users.len());
    if raw.users.is_empty() {
        return Err(Error::invalid(format!("no user has {min_history} or more posts")));
    }
    let vocab = raw.build_vocabulary(min_count)?;
    if vocab.is_empty() {
        return Err(Error::invalid(format!("no token occurs {min_count} or more times")));
    }
    Ok(raw.index(vocab))
}

pub fn train_words(dataset: &Dataset, config: &RunConfig) -> Result<WordEmbeddingMatrix> {
    let posts: Vec<&[usize]> = dataset.users.iter().flat_map(|u| u.posts.iter().map(|p| p.as_slice())).collect();
    train_skipgram(&posts, &dataset.vocab, &config.sgns())
}

/// The seven LR feature sets followed by the three NLSE inputs.
pub fn model_grid() -> Vec<(&'static str, FeatureKind)> {
    let u2v = FeatureKind::User(TrainMode::User2Vec);
    let mut rows: Vec<(&'static str, FeatureKind)> = vec![
        FeatureKind::Bow,
        FeatureKind::Boe,
        u2v.clone(),
        FeatureKind::User(TrainMode::PvDm),
        FeatureKind::User(TrainMode::PvDbow),
        FeatureKind::concat(u2v.clone(), FeatureKind::Bow),
        FeatureKind::concat(u2v.clone(), FeatureKind::Boe),
    ]
    .into_iter()
    .map(|k| ("lr", k))
    .collect();
    for mode in [TrainMode::User2Vec, TrainMode::PvDm, TrainMode::PvDbow] {
        rows.push(("nlse", FeatureKind::User(mode)));
    }
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub model: String,
    pub features: String,
    pub macro_f1: f64,
    pub binary_f1: f64,
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "model,features,macro_f1,binary_f1")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.model, r.features, r.macro_f1, r.binary_f1)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub out_dir: PathBuf,
    pub dataset: Dataset,
    pub homophily: Vec<(TrainMode, HomophilyReport)>,
    pub cv: Vec<CvReport>,
    pub summary: Vec<SummaryRow>,
}

/// Writes the neighbour matrix, ROC points and AUC table for one embedding.
pub fn write_homophily(
    users: &UserEmbeddingMatrix,
    labels: &[CohortLabel],
    k: usize,
    dir: &Path,
    prefix: &str,
) -> Result<HomophilyReport> {
    let k = if k >= users.len() {
        warn!("top-k {k} exceeds the {} available neighbours; using all of them", users.len() - 1);
        users.len() - 1
    } else {
        k
    };
    neighbor_matrix(users, labels, k)?.write_csv(&dir.join(format!("{prefix}neighbors.csv")))?;
    let report = homophily_report(users, labels)?;
    report.write_roc_csv(&dir.join(format!("{prefix}roc.csv")))?;
    report.write_auc_csv(&dir.join(format!("{prefix}auc.csv")))?;
    Ok(report)
}

fn model_spec(name: &str, config: &RunConfig) -> ModelSpec {
    if name == "lr" {
        ModelSpec::Lr {
            c_grid: config.c_grid.clone(),
            tol: DEFAULT_TOL,
        }
    } else {
        ModelSpec::Nlse {
            sdim_grid: config.sdim_grid.clone(),
            lr_grid: config.nlse_lr_grid.clone(),
            base: config.nlse_base(),
        }
    }
}

fn build_table(
    kind: &FeatureKind,
    dataset: &Dataset,
    words: &WordEmbeddingMatrix,
    users: &[(TrainMode, UserEmbeddingMatrix)],
) -> Result<FeatureTable> {
    match kind {
        FeatureKind::Bow => bow_table(dataset),
        FeatureKind::Boe => boe_table(dataset, words, true),
        FeatureKind::User(mode) => {
            let (_, u) = users.iter().find(|(m, _)| m == mode).expect("all modes trained");
            embedding_table(dataset, u, *mode)
        }
        FeatureKind::Concat(parts) => {
            let mut table = build_table(&parts[0], dataset, words, users)?;
            for p in &parts[1..] {
                table = table.concat(&build_table(p, dataset, words, users)?)?;
            }
            Ok(table)
        }
    }
}

/// Labels for the rows of `users`, looked up by user id.
pub fn align_labels(users: &UserEmbeddingMatrix, labels: &HashMap<String, CohortLabel>) -> Result<Vec<CohortLabel>> {
    users
        .user_ids
        .iter()
        .map(|id| labels.get(id).copied().ok_or_else(|| Error::UnknownUser(id.clone())))
        .collect()
}

/// Grid search for a single NLSE model on one stratified 80/20 split of
/// all users; the first grid point with the best validation macro-F1 wins.
pub fn select_nlse(
    users: &UserEmbeddingMatrix,
    labels: &[CohortLabel],
    sdim_grid: &[usize],
    lr_grid: &[f64],
    base: &NlseTrainConfig,
    seed: u64,
) -> Result<(NlseFit, NlseTrainConfig)> {
    let all: Vec<usize> = (0..labels.len()).collect();
    let (train, val) = stratified_holdout(&all, labels, VALIDATION_FRACTION, seed, 0);
    let mut best: Option<(NlseFit, NlseTrainConfig)> = None;
    for &s in sdim_grid {
        for &lr in lr_grid {
            let cfg = NlseTrainConfig {
                subspace_dim: s,
                learning_rate: lr,
                seed: crate::rng::derive_seed(seed, "nlse-select", 0),
                ..base.clone()
            };
            let fit = nlse_train(&users.vectors, labels, &train, &val, &cfg)?;
            info!("s_dim={s} lr={lr}: validation macro-F1 {:.4}", fit.best_val_f1);
            if best.as_ref().is_none_or(|b| fit.best_val_f1 > b.0.best_val_f1) {
                best = Some((fit, cfg));
            }
        }
    }
    best.ok_or_else(|| Error::Config("empty NLSE grid".into()))
}

/// Writes per-user subspace features and one prototype row per class.
pub fn export_subspace(model: &NlseModel, users: &UserEmbeddingMatrix, labels: &[CohortLabel], dir: &Path) -> Result<()> {
    let g = subspace_features(model, users, &users.user_ids)?;
    write_subspace_csv(&dir.join("subspace.csv"), &users.user_ids, labels, &g)?;
    let mut w = BufWriter::new(File::create(dir.join("prototypes.csv"))?);
    write!(w, "class")?;
    for i in 0..model.subspace_dim() {
        write!(w, ",g{i}")?;
    }
    writeln!(w)?;
    for class in label_set(labels) {
        write!(w, "{class}")?;
        for v in class_prototype(model, users, labels, class)? {
            write!(w, ",{v:.16e}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every stage in order, writing artifacts under `config.out_dir`.
/// A failing stage is named in the returned error.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    let out = config.out_dir.clone();
    fs::create_dir_all(&out)?;
    config.write_echo(&out)?;

    let dataset = (|| {
        let raw = match &config.dataset {
            Some(path) => load_dataset(require_file(path)?)?,
            None => {
                let raw = synth::make_cohort_corpus(&config.synth())?;
                synth::write_jsonl(&raw, &out.join("synth.jsonl"))?;
                raw
            }
        };
        let dataset = ingest(raw, config.min_count, config.min_history)?;
        dataset.vocab.write_tsv(&out.join("vocab.tsv"))?;
        dataset.write_jsonl(&out.join("dataset.jsonl"))?;
        Ok(dataset)
    })()
    .map_err(|e: Error| e.in_stage("ingest"))?;
    info!("ingest: {} users, vocabulary {}", dataset.users.len(), dataset.vocab.len());

    let words = (|| {
        let words = match &config.word_embeddings {
            Some(path) => WordEmbeddingMatrix::load(require_file(path)?, &dataset.vocab)?,
            None => train_words(&dataset, config)?,
        };
        words.save(&dataset.vocab, &out.join("words.txt"))?;
        Ok(words)
    })()
    .map_err(|e: Error| e.in_stage("train-words"))?;

    let users = TrainMode::ALL
        .iter()
        .map(|&mode| {
            info!("training {mode} user vectors");
            let u = train_users(&dataset, Some(&words), &config.user_train(mode))?;
            u.save(&out.join(format!("users_{mode}.txt")))?;
            Ok((mode, u))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("train-users"))?;

    let features_dir = out.join("features");
    let tables = (|| {
        fs::create_dir_all(&features_dir)?;
        let mut tables: Vec<FeatureTable> = Vec::new();
        for (_, kind) in model_grid() {
            if tables.iter().any(|t| t.kind == kind) {
                continue;
            }
            let t = build_table(&kind, &dataset, &words, &users)?;
            t.write_csv(&features_dir.join(format!("{kind}.csv")))?;
            tables.push(t);
        }
        Ok(tables)
    })()
    .map_err(|e: Error| e.in_stage("features"))?;

    let labels = dataset.labels();
    let homophily_dir = out.join("homophily");
    let homophily = (|| {
        fs::create_dir_all(&homophily_dir)?;
        users
            .iter()
            .map(|(mode, u)| {
                let report = write_homophily(u, &labels, config.top_k, &homophily_dir, &format!("{mode}_"))?;
                info!("homophily {mode}: macro AUC {:.4}", report.macro_auc);
                Ok((*mode, report))
            })
            .collect::<Result<Vec<_>>>()
    })()
    .map_err(|e: Error| e.in_stage("homophily"))?;

    let cv_dir = out.join("cv");
    let cv = (|| {
        fs::create_dir_all(&cv_dir)?;
        model_grid()
            .into_iter()
            .map(|(model, kind)| {
                let table = tables.iter().find(|t| t.kind == kind).expect("table built above");
                let seed = crate::rng::derive_seed_str(config.seed, "cv", &format!("{model}/{kind}"));
                let report = cross_validate(table, &model_spec(model, config), config.folds, seed)?;
                report.write_folds_csv(&cv_dir.join(format!("{model}_{kind}_folds.csv")))?;
                info!("cv {model}/{kind}: macro-F1 {:.4}", report.mean_macro_f1);
                Ok(report)
            })
            .collect::<Result<Vec<_>>>()
    })()
    .map_err(|e: Error| e.in_stage("cv"))?;

    let summary: Vec<SummaryRow> = cv
        .iter()
        .map(|r| SummaryRow {
            model: r.model.clone(),
            features: r.features.clone(),
            macro_f1: r.mean_macro_f1,
            binary_f1: r.mean_binary_f1,
        })
        .collect();
    write_summary_csv(&summary, &out.join(SUMMARY_FILE)).map_err(|e| e.in_stage("summary"))?;

    Ok(ExperimentReport {
        out_dir: out,
        dataset,
        homophily,
        cv,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_ten_rows() {
        let g = model_grid();
        assert_eq!(g.len(), 10);
        assert_eq!(g.iter().filter(|(m, _)| *m == "nlse").count(), 3);
        let names: Vec<String> = g.iter().map(|(m, k)| format!("{m}/{k}")).collect();
        assert!(names.contains(&"lr/u2v+boe".to_string()));
    }

    #[test]
    fn missing_word_file_names_stage() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig {
            out_dir: dir.path().to_path_buf(),
            synth_users: 4,
            word_embeddings: Some(dir.path().join("nope.txt")),
            ..RunConfig::default()
        };
        let err = run_experiment(&c).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("train-words:") && msg.contains("nope.txt"), "{msg}");
    }
}
