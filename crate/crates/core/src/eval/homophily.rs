//! Homophily: do users of one cohort sit close together in embedding space?

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use super::metrics::{auc, by_score_desc, roc_curve, RocCurve};
use crate::corpus::{label_set, CohortLabel};
use crate::error::{Error, Result};
use crate::math::{dot, norm};
use crate::uservec::UserEmbeddingMatrix;

pub const DEFAULT_TOP_K: usize = 100;

/// Pairwise cosine similarities between all users.
pub fn similarity_matrix(users: &UserEmbeddingMatrix) -> Result<Array2<f64>> {
    let n = users.len();
    let unit: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let v = users.vector(j);
            let l = norm(v);
            if l == 0.0 {
                return Err(Error::invalid(format!("user '{}' has a zero embedding", users.user_ids[j])));
            }
            Ok(v.iter().map(|x| x / l).collect())
        })
        .collect::<Result<_>>()?;
    let mut sim = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let s = dot(&unit[i], &unit[j]).clamp(-1.0, 1.0);
            sim[[i, j]] = s;
            sim[[j, i]] = s;
        }
    }
    Ok(sim)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRanking {
    pub query_id: String,
    pub query_label: Option<CohortLabel>,
    /// Every other user with its cosine score, most similar first.
    pub neighbors: Vec<(String, f64)>,
}

fn ranked_indices(sim: &Array2<f64>, ids: &[String], query: usize) -> Vec<usize> {
    let mut others: Vec<usize> = (0..ids.len()).filter(|&j| j != query).collect();
    others.sort_by(|&a, &b| by_score_desc(sim[[query, a]], sim[[query, b]]).then_with(|| ids[a].cmp(&ids[b])));
    others
}

/// Ranks all other users by cosine similarity to `query_id`; ties go to the
/// lexicographically smaller user id.
pub fn rank_neighbors(users: &UserEmbeddingMatrix, query_id: &str) -> Result<NeighborRanking> {
    if users.len() < 2 {
        return Err(Error::invalid("ranking needs at least two users"));
    }
    let q = users
        .index_of(query_id)
        .ok_or_else(|| Error::UnknownUser(query_id.to_string()))?;
    let sim = similarity_matrix(users)?;
    let neighbors = ranked_indices(&sim, &users.user_ids, q)
        .into_iter()
        .map(|j| (users.user_ids[j].clone(), sim[[q, j]]))
        .collect();
    Ok(NeighborRanking {
        query_id: query_id.to_string(),
        query_label: None,
        neighbors,
    })
}

/// For every query, the labels of its top-`k` neighbours. Rows are grouped
/// by query class and otherwise keep matrix order.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborMatrix {
    pub k: usize,
    pub rows: Vec<(String, CohortLabel, Vec<CohortLabel>)>,
}

pub fn neighbor_matrix(users: &UserEmbeddingMatrix, labels: &[CohortLabel], k: usize) -> Result<NeighborMatrix> {
    check_labels(users, labels)?;
    if k == 0 || k >= users.len() {
        return Err(Error::Config(format!("k={k} must be in 1..{}", users.len())));
    }
    let sim = similarity_matrix(users)?;
    let mut order: Vec<usize> = (0..users.len()).collect();
    order.sort_by_key(|&j| labels[j]);
    let rows = order
        .into_iter()
        .map(|q| {
            let top = ranked_indices(&sim, &users.user_ids, q)
                .into_iter()
                .take(k)
                .map(|j| labels[j])
                .collect();
            (users.user_ids[q].clone(), labels[q], top)
        })
        .collect();
    Ok(NeighborMatrix { k, rows })
}

impl NeighborMatrix {
    /// Writes `query_id,query_label,n0..n{k-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write!(w, "query_id,query_label")?;
        for i in 0..self.k {
            write!(w, ",n{i}")?;
        }
        writeln!(w)?;
        for (id, label, top) in &self.rows {
            write!(w, "{id},{label}")?;
            for l in top {
                write!(w, ",{l}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_labels(users: &UserEmbeddingMatrix, labels: &[CohortLabel]) -> Result<()> {
    if users.len() != labels.len() {
        return Err(Error::Dimension {
            expected: users.len(),
            got: labels.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRoc {
    pub class: CohortLabel,
    /// ROC over (query, candidate) pairs pooled across all queries of the class.
    pub roc: RocCurve,
    /// Mean of the per-query AUCs.
    pub per_query_auc: f64,
}

fn class_roc(sim: &Array2<f64>, labels: &[CohortLabel], class: CohortLabel) -> Result<ClassRoc> {
    let members = labels.iter().filter(|&&l| l == class).count();
    if members < 2 || members == labels.len() {
        return Err(Error::invalid(format!(
            "class {class} needs at least two members and one outsider (has {members} of {})",
            labels.len()
        )));
    }
    let mut scores = Vec::new();
    let mut positives = Vec::new();
    let mut per_query = Vec::new();
    for q in (0..labels.len()).filter(|&q| labels[q] == class) {
        let start = scores.len();
        for c in (0..labels.len()).filter(|&c| c != q) {
            scores.push(sim[[q, c]]);
            positives.push(labels[c] == class);
        }
        per_query.push(auc(&scores[start..], &positives[start..])?);
    }
    Ok(ClassRoc {
        class,
        roc: roc_curve(&scores, &positives)?,
        per_query_auc: per_query.iter().sum::<f64>() / per_query.len() as f64,
    })
}

/// Pooled ROC for one class: every query of `class` against every other
/// user, positive when the candidate shares the class.
pub fn homophily_roc(users: &UserEmbeddingMatrix, labels: &[CohortLabel], class: CohortLabel) -> Result<ClassRoc> {
    check_labels(users, labels)?;
    class_roc(&similarity_matrix(users)?, labels, class)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomophilyReport {
    pub per_class: Vec<ClassRoc>,
    /// Unweighted mean of the pooled per-class AUCs.
    pub macro_auc: f64,
}

impl HomophilyReport {
    /// Writes `class,fpr,tpr` rows.
    pub fn write_roc_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "class,fpr,tpr")?;
        for c in &self.per_class {
            for (fpr, tpr) in &c.roc.points {
                writeln!(w, "{},{fpr:.16e},{tpr:.16e}", c.class)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `class,auc,per_query_auc` rows plus a `macro` row.
    pub fn write_auc_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "class,auc,per_query_auc")?;
        for c in &self.per_class {
            writeln!(w, "{},{:.16e},{:.16e}", c.class, c.roc.auc, c.per_query_auc)?;
        }
        let pq = self.per_class.iter().map(|c| c.per_query_auc).sum::<f64>() / self.per_class.len() as f64;
        writeln!(w, "macro,{:.16e},{pq:.16e}", self.macro_auc)?;
        w.flush()?;
        Ok(())
    }
}

/// Per-class pooled ROC/AUC for every class, plus the macro average.
pub fn homophily_report(users: &UserEmbeddingMatrix, labels: &[CohortLabel]) -> Result<HomophilyReport> {
    check_labels(users, labels)?;
    let sim = similarity_matrix(users)?;
    let per_class = label_set(labels)
        .into_iter()
        .map(|c| class_roc(&sim, labels, c))
        .collect::<Result<Vec<_>>>()?;
    let macro_auc = per_class.iter().map(|c| c.roc.auc).sum::<f64>() / per_class.len() as f64;
    Ok(HomophilyReport { per_class, macro_auc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::CohortLabel::{Control, Ptsd};
    use ndarray::array;

    fn users(v: Array2<f64>) -> UserEmbeddingMatrix {
        let ids = (1..=v.nrows()).map(|i| format!("e{i}")).collect();
        UserEmbeddingMatrix::new(ids, v).unwrap()
    }

    #[test]
    fn ranking_example() {
        let u = users(array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]]);
        let r = rank_neighbors(&u, "e1").unwrap();
        let ids: Vec<&str> = r.neighbors.iter().map(|(id, _)| id.as_str()).collect();
        assert_eq!(ids, vec!["e2", "e3"]);
        assert!(r.neighbors.windows(2).all(|w| w[0].1 >= w[1].1));
        assert!(rank_neighbors(&u, "e9").is_err());

        let two = users(array![[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(rank_neighbors(&two, "e2").unwrap().neighbors.len(), 1);
    }

    #[test]
    fn ties_follow_user_id() {
        let u = UserEmbeddingMatrix::new(
            vec!["q".into(), "z".into(), "a".into()],
            array![[1.0, 0.0], [0.0, 1.0], [0.0, 2.0]],
        )
        .unwrap();
        let r = rank_neighbors(&u, "q").unwrap();
        assert_eq!(r.neighbors[0].0, "a");
    }

    #[test]
    fn clustered_neighbors_share_class() {
        let u = users(array![[1.0, 0.0], [0.9, 0.1], [0.95, 0.0], [0.0, 1.0], [0.1, 0.9], [0.0, 0.8]]);
        let labels = [Control, Control, Control, Ptsd, Ptsd, Ptsd];
        let m = neighbor_matrix(&u, &labels, 2).unwrap();
        for (_, q, top) in &m.rows {
            assert!(top.iter().all(|l| l == q));
        }
        let full = neighbor_matrix(&u, &labels, 5).unwrap();
        assert!(full.rows.iter().all(|r| r.2.len() == 5));
        assert!(neighbor_matrix(&u, &labels, 6).is_err());

        let report = homophily_report(&u, &labels).unwrap();
        assert_eq!(report.per_class.len(), 2);
        assert_eq!(report.macro_auc, 1.0);
        assert!(homophily_roc(&u, &labels, CohortLabel::Depression).is_err());
    }
}
