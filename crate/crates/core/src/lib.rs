//! Dense user embeddings learned from post histories, adapted to cohort
//! classification with a non-linear subspace embedding (NLSE) classifier.
//!
//! The pipeline is organised bottom-up:
//!
//! * [`corpus`]: text normalisation, tokenisation, vocabulary and held-out splits.
//! * [`wordvec`]: skip-gram word vectors with negative sampling.
//! * [`uservec`]: User2Vec hinge-loss user vectors plus PV-DBOW / PV-DM.
//! * [`features`]: bag-of-words and bag-of-embeddings baselines.
//! * [`lr`]: l2-regularised multinomial logistic regression.
//! * [`nlse`]: the subspace projection classifier.
//! * [`eval`]: homophily rankings, ROC/AUC, F1 and cross-validation.
//! * [`synth`]: planted multi-cohort corpora for desk-scale runs.
//! * [`app`]: configuration and the end-to-end experiment runner.

pub mod app;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod lr;
pub mod math;
pub mod nlse;
pub mod rng;
pub mod synth;
pub mod uservec;
pub mod wordvec;

pub use error::{Error, Result};
