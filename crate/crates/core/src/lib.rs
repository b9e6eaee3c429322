//! Self- and cross-model consistency scoring for black-box hallucination
//! detection.
//!
//! The numerical core (matrices, consistency metrics, mean-embedding
//! geometry, thresholds, ranking metrics) is generic over [`Scalar`]
//! (`f32` or `f64`). Batch detection, the GCN ceiling and the synthetic
//! world work in `f64`. Aliases at the crate root fix the scalar type.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod consistency;
pub mod cost;
pub mod detector;
pub mod error;
pub mod evaluation;
pub mod gcn;
pub mod linalg;
pub mod mean_embedding;
pub mod metrics;
pub mod scalar;
pub mod seeds;
pub mod synth;

pub use consistency::{BoolMatrix, MatrixKind, QuestionCase, SamplingConfig, ScoreRecord};
pub use cost::{GainThreshold, ModelCostProfile};
pub use detector::{BatchResult, DetectionOutcome, DetectorConfig, ScoredBatch};
pub use error::{Error, Result};
pub use evaluation::{BoundReport, RocBand, RocPoint};
pub use gcn::{CeilingReport, ConsistencyGraph, GcnParams, TrainConfig};
pub use metrics::{MetricName, MetricParams};
pub use scalar::Scalar;
pub use synth::{SyntheticWorld, WorldCase, WorldConfig};

pub type EntailmentMatrix = consistency::EntailmentMatrix<f64>;
pub type EntailmentMatrixF32 = consistency::EntailmentMatrix<f32>;
pub type Matrix = linalg::Matrix<f64>;
pub type MatrixF32 = linalg::Matrix<f32>;
pub type ThresholdTriple = detector::ThresholdTriple<f64>;
pub type ThresholdTripleF32 = detector::ThresholdTriple<f32>;
pub type StageDecision = detector::StageDecision<f64>;
pub type TstarCalibrator = detector::TstarCalibrator<f64>;
pub type EmbeddingGeometry = mean_embedding::EmbeddingGeometry<f64>;
pub type EmbeddingGeometryF32 = mean_embedding::EmbeddingGeometry<f32>;
pub type AtomGram = mean_embedding::AtomGram<f64>;
