//! Baseline feature extractors (binary bag-of-words, bag-of-embeddings),
//! user-embedding features, and concatenation.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use ndarray::Array2;

use crate::corpus::{CohortLabel, Dataset, UserHistory, Vocabulary};
use crate::error::{Error, Result};
use crate::uservec::{TrainMode, UserEmbeddingMatrix};
use crate::wordvec::{row, WordEmbeddingMatrix};

/// Where a feature vector came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Bow,
    Boe,
    User(TrainMode),
    Concat(Vec<FeatureKind>),
}

impl FeatureKind {
    fn flatten(self) -> Vec<FeatureKind> {
        match self {
            FeatureKind::Concat(parts) => parts,
            other => vec![other],
        }
    }

    pub fn concat(a: FeatureKind, b: FeatureKind) -> FeatureKind {
        let mut parts = a.flatten();
        parts.extend(b.flatten());
        FeatureKind::Concat(parts)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Bow => f.write_str("bow"),
            FeatureKind::Boe => f.write_str("boe"),
            FeatureKind::User(TrainMode::User2Vec) => f.write_str("u2v"),
            FeatureKind::User(mode) => write!(f, "{mode}"),
            FeatureKind::Concat(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str("+")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.contains('+') {
            let parts = s.split('+').map(str::parse).collect::<Result<Vec<_>>>()?;
            return Ok(FeatureKind::Concat(parts));
        }
        match s {
            "bow" => Ok(FeatureKind::Bow),
            "boe" => Ok(FeatureKind::Boe),
            other => other.parse().map(FeatureKind::User),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub kind: FeatureKind,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Binary indicator of every vocabulary word the user ever wrote.
pub fn bow_features(history: &UserHistory, vocab: &Vocabulary) -> FeatureVector {
    let mut values = vec![0.0; vocab.len()];
    for t in history.tokens() {
        values[t] = 1.0;
    }
    FeatureVector {
        values,
        kind: FeatureKind::Bow,
    }
}

/// Sum of word vectors over every token occurrence; with `mean`, divided
/// by the number of occurrences.
pub fn boe_features(history: &UserHistory, word_embs: &WordEmbeddingMatrix, mean: bool) -> FeatureVector {
    let mut values = vec![0.0; word_embs.dim()];
    let mut n = 0usize;
    for t in history.tokens() {
        crate::math::axpy(1.0, word_embs.vector(t), &mut values);
        n += 1;
    }
    if n == 0 {
        warn!("user '{}' has no in-vocabulary tokens; BOE is zero", history.user_id);
    } else if mean {
        values.iter_mut().for_each(|v| *v /= n as f64);
    }
    FeatureVector {
        values,
        kind: FeatureKind::Boe,
    }
}

pub fn concat_features(a: &FeatureVector, b: &FeatureVector) -> FeatureVector {
    let mut values = a.values.clone();
    values.extend_from_slice(&b.values);
    FeatureVector {
        values,
        kind: FeatureKind::concat(a.kind.clone(), b.kind.clone()),
    }
}

/// Labelled per-user feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub kind: FeatureKind,
    pub user_ids: Vec<String>,
    pub labels: Vec<CohortLabel>,
    pub rows: Array2<f64>,
}

impl FeatureTable {
    pub fn from_vectors(
        kind: FeatureKind,
        users: impl IntoIterator<Item = (String, CohortLabel, Vec<f64>)>,
    ) -> Result<Self> {
        let mut user_ids = Vec::new();
        let mut labels = Vec::new();
        let mut data = Vec::new();
        let mut dim = None;
        for (id, label, values) in users {
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::Dimension {
                        expected: d,
                        got: values.len(),
                    })
                }
                _ => {}
            }
            user_ids.push(id);
            labels.push(label);
            data.extend(values);
        }
        let rows = Array2::from_shape_vec((user_ids.len(), dim.unwrap_or(0)), data)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(FeatureTable {
            kind,
            user_ids,
            labels,
            rows,
        })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn len(&self) -> usize {
        self.user_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.user_ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        row(&self.rows, i)
    }

    /// Writes `user_id,label,f0..f{n-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "user_id,label")?;
        for j in 0..self.dim() {
            write!(w, ",f{j}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{},{}", self.user_ids[i], self.labels[i])?;
            for v in self.row(i) {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, kind: FeatureKind) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines.next().transpose()?.ok_or_else(|| Error::parse(path, 1, "empty file"))?;
        if !header.starts_with("user_id,label") {
            return Err(Error::parse(path, 1, "header must start with user_id,label"));
        }
        let mut users = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |msg: String| Error::parse(path, i + 2, msg);
            let mut fields = line.split(',');
            let id = fields.next().unwrap_or_default().to_string();
            let label: CohortLabel = fields
                .next()
                .ok_or_else(|| bad("missing label".into()))?
                .parse()
                .map_err(|e: Error| bad(e.to_string()))?;
            let values = fields
                .map(|f| f.parse::<f64>().map_err(|_| bad(format!("bad value '{f}'"))))
                .collect::<Result<Vec<_>>>()?;
            users.push((id, label, values));
        }
        FeatureTable::from_vectors(kind, users)
    }

    /// Row-wise concatenation; both tables must list the same users in the
    /// same order.
    pub fn concat(&self, other: &FeatureTable) -> Result<FeatureTable> {
        if self.user_ids != other.user_ids {
            return Err(Error::invalid("feature tables list different users"));
        }
        let kind = FeatureKind::concat(self.kind.clone(), other.kind.clone());
        FeatureTable::from_vectors(
            kind,
            (0..self.len()).map(|i| {
                let mut v = self.row(i).to_vec();
                v.extend_from_slice(other.row(i));
                (self.user_ids[i].clone(), self.labels[i], v)
            }),
        )
    }
}

pub fn bow_table(dataset: &Dataset) -> Result<FeatureTable> {
    FeatureTable::from_vectors(
        FeatureKind::Bow,
        dataset
            .users
            .iter()
            .map(|u| (u.user_id.clone(), u.label, bow_features(u, &dataset.vocab).values)),
    )
}

pub fn boe_table(dataset: &Dataset, word_embs: &WordEmbeddingMatrix, mean: bool) -> Result<FeatureTable> {
    FeatureTable::from_vectors(
        FeatureKind::Boe,
        dataset
            .users
            .iter()
            .map(|u| (u.user_id.clone(), u.label, boe_features(u, word_embs, mean).values)),
    )
}

/// User embeddings as features, in dataset order.
pub fn embedding_table(dataset: &Dataset, users: &UserEmbeddingMatrix, mode: TrainMode) -> Result<FeatureTable> {
    let rows = dataset
        .users
        .iter()
        .map(|u| {
            let j = users
                .index_of(&u.user_id)
                .ok_or_else(|| Error::UnknownUser(u.user_id.clone()))?;
            Ok((u.user_id.clone(), u.label, users.vector(j).to_vec()))
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureTable::from_vectors(FeatureKind::User(mode), rows)
}
