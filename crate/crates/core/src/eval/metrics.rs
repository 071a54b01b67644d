//! Similarity, ranking and classification metrics.

use std::cmp::Ordering;

use log::warn;

use crate::error::{Error, Result};
use crate::math::{dot, norm};

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

fn check_scores(scores: &[f64], positives: &[bool]) -> Result<(u64, u64)> {
    if scores.len() != positives.len() {
        return Err(Error::Dimension {
            expected: scores.len(),
            got: positives.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let p = positives.iter().filter(|&&b| b).count() as u64;
    let n = positives.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(Error::invalid("AUC needs at least one positive and one negative"));
    }
    Ok((p, n))
}

/// Area under the ROC curve from the Mann-Whitney rank sum, with tied
/// scores given their mid-rank. Equal to
/// `(concordant pairs + 0.5 * tied pairs) / (P * N)`.
pub fn auc(scores: &[f64], positives: &[bool]) -> Result<f64> {
    let (p, n) = check_scores(scores, positives)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the positive rank sum, kept integral: a tie group covering ranks
    // start+1..=start+len has mid-rank (2*start + len + 1) / 2.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let pos = order[start..end].iter().filter(|&&i| positives[i]).count() as u128;
        let len = (end - start) as u128;
        twice_rank_sum += pos * (2 * start as u128 + len + 1);
        start = end;
    }
    let twice_u = twice_rank_sum - (p as u128) * (p as u128 + 1);
    Ok((twice_u as f64 * 0.5) / (p as f64 * n as f64))
}

/// ROC points, one per distinct score threshold, from `(0,0)` to `(1,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(false-positive rate, true-positive rate)`
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<RocCurve> {
    let (p, n) = check_scores(scores, positives)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            if positives[i] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        points.push((fp as f64 / n as f64, tp as f64 / p as f64));
        start = end;
    }
    Ok(RocCurve {
        points,
        auc: auc(scores, positives)?,
    })
}

/// Rows are true classes, columns predicted classes.
pub type Confusion = Vec<Vec<u64>>;

pub fn confusion_matrix(truth: &[usize], predicted: &[usize], n_classes: usize) -> Confusion {
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        m[t][p] += 1;
    }
    m
}

/// One-vs-rest F1 per class. Undefined precision or recall counts as 0.
pub fn per_class_f1(confusion: &Confusion) -> Vec<f64> {
    let k = confusion.len();
    (0..k)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let actual: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
            if actual == 0 && predicted == 0 {
                warn!("class {c} is neither present nor predicted; its F1 is taken as 0");
            }
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect()
}

pub fn macro_f1(confusion: &Confusion) -> f64 {
    let f1 = per_class_f1(confusion);
    if f1.is_empty() {
        return 0.0;
    }
    f1.iter().sum::<f64>() / f1.len() as f64
}

/// Mean F1 over the `afflicted` class indices only.
pub fn binary_f1(confusion: &Confusion, afflicted: &[usize]) -> f64 {
    if afflicted.is_empty() {
        warn!("binary F1 requested without afflicted classes");
        return 0.0;
    }
    let f1 = per_class_f1(confusion);
    afflicted.iter().map(|&c| f1[c]).sum::<f64>() / afflicted.len() as f64
}

/// Total order on similarity scores, highest first.
pub(crate) fn by_score_desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 1.0], &[-1.0, -1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.4, 0.6, 0.2], &[true, false, false, true]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn roc_shape() {
        let roc = roc_curve(&[0.9, 0.4, 0.6, 0.2, 0.6], &[true, false, false, true, true]).unwrap();
        assert_eq!(roc.points.first(), Some(&(0.0, 0.0)));
        assert_eq!(roc.points.last(), Some(&(1.0, 1.0)));
        assert!(roc.points.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
        let trapezoid: f64 = roc
            .points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum();
        assert!((trapezoid - roc.auc).abs() < 1e-12);
    }

    #[test]
    fn f1_worked_example() {
        // truth (c, c, d, p), predicted (c, d, d, p)
        let m = confusion_matrix(&[0, 0, 1, 2], &[0, 1, 1, 2], 3);
        assert!((macro_f1(&m) - 7.0 / 9.0).abs() < 1e-12);
        assert!((binary_f1(&m, &[1, 2]) - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(macro_f1(&confusion_matrix(&[0, 1, 2], &[0, 1, 2], 3)), 1.0);
        let absent = confusion_matrix(&[0, 1], &[0, 1], 3);
        assert_eq!(per_class_f1(&absent), vec![1.0, 1.0, 0.0]);
    }
}
