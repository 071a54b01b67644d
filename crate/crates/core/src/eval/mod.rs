//! Evaluation: homophily analysis over embeddings and supervised
//! cross-validation of classifiers.

pub mod cv;
pub mod homophily;
pub mod metrics;

pub use cv::{cross_validate, stratified_kfold, CvReport, ModelSpec};
pub use homophily::{homophily_report, homophily_roc, neighbor_matrix, rank_neighbors};
pub use metrics::{auc, binary_f1, cosine_similarity, macro_f1, roc_curve, RocCurve};
