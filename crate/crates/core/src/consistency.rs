//! Entailment matrices and the per-question records that carry them.
//!
//! `P[j][k]` stores the entailment probability E(row answer j, column answer k).
//! Self matrices index target samples on both axes; cross matrices index
//! target samples on rows and verifier samples on columns.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// Self-entailment diagonal entries below this mark a broken provider.
pub const MIN_SELF_DIAGONAL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    SelfTarget,
    CrossTargetVerifier,
    TargetTruth,
}

impl fmt::Display for MatrixKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixKind::SelfTarget => "self_target",
            MatrixKind::CrossTargetVerifier => "cross_target_verifier",
            MatrixKind::TargetTruth => "target_truth",
        })
    }
}

/// Validated square matrix of entailment probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EntailmentMatrix<T> {
    kind: MatrixKind,
    entries: Matrix<T>,
}

impl<T: Scalar> EntailmentMatrix<T> {
    /// Validates shape, range and (for self matrices) the diagonal.
    pub fn validate(raw: &[Vec<T>], kind: MatrixKind) -> Result<Self> {
        let rows = raw.len();
        let cols = raw.first().map_or(0, Vec::len);
        let entries = Matrix::from_rows(raw).ok_or(Error::Shape { rows, cols })?;
        Self::from_matrix(entries, kind)
    }

    pub fn from_matrix(entries: Matrix<T>, kind: MatrixKind) -> Result<Self> {
        let (rows, cols) = (entries.rows(), entries.cols());
        if rows != cols || rows < 2 {
            return Err(Error::Shape { rows, cols });
        }
        for i in 0..rows {
            for j in 0..cols {
                let value = entries[(i, j)];
                if !(value >= T::zero() && value <= T::one()) {
                    return Err(Error::Range {
                        row: i,
                        col: j,
                        value: value.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        if kind == MatrixKind::SelfTarget {
            for i in 0..rows {
                let value = entries[(i, i)];
                if value < T::lit(MIN_SELF_DIAGONAL) {
                    return Err(Error::Diagonal {
                        index: i,
                        value: value.as_f64(),
                    });
                }
            }
        }
        Ok(Self { kind, entries })
    }

    pub fn from_fn(m: usize, kind: MatrixKind, f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        Self::from_matrix(Matrix::from_fn(m, m, f), kind)
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// Number of samples per axis.
    pub fn m(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Matrix<T> {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[(row, col)]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.entries.to_rows()
    }

    /// `(M + Mᵀ) / 2`. Idempotent, and keeps entries in `[0, 1]`.
    pub fn symmetrize(&self) -> Self {
        let m = self.m();
        let half = T::lit(0.5);
        let e = &self.entries;
        Self {
            kind: self.kind,
            entries: Matrix::from_fn(m, m, |i, j| (e[(i, j)] + e[(j, i)]) * half),
        }
    }

    /// Bidirectional-entailment graph: `B[j][k]` iff both `M[j][k]` and
    /// `M[k][j]` exceed `theta`.
    pub fn binarize(&self, theta: T) -> Result<BoolMatrix> {
        if !(theta > T::zero() && theta < T::one()) {
            return Err(invalid("theta", format!("{theta} not in (0, 1)")));
        }
        let m = self.m();
        let e = &self.entries;
        Ok(BoolMatrix::from_fn(m, |i, j| e[(i, j)] > theta && e[(j, i)] > theta))
    }

    pub fn cast<U: Scalar>(&self) -> EntailmentMatrix<U> {
        EntailmentMatrix {
            kind: self.kind,
            entries: Matrix::from_fn(self.m(), self.m(), |i, j| {
                U::from_f64(self.entries[(i, j)].as_f64()).expect("entry representable")
            }),
        }
    }
}

/// Square boolean adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoolMatrix {
    n: usize,
    data: Vec<bool>,
}

impl BoolMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let data = (0..n * n).map(|idx| f(idx / n, idx % n)).collect();
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.n + j]
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// Temperatures and sample count used to build the matrices of one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub tau: f64,
    pub tau_prime: f64,
    pub m: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            tau: 0.1,
            tau_prime: 1.0,
            m: 10,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(invalid("tau", format!("{} must be positive", self.tau)));
        }
        if !(self.tau_prime >= self.tau) {
            return Err(invalid(
                "tau_prime",
                format!("{} must be at least tau = {}", self.tau_prime, self.tau),
            ));
        }
        if self.m < 2 {
            return Err(invalid("m", format!("{} must be at least 2", self.m)));
        }
        Ok(())
    }
}

/// One question with its answers, entailment matrices and optional label
/// (`true` = hallucination). Unrecognised JSON fields survive a load/store
/// cycle through `extra`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct QuestionCase {
    pub id: String,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_temp_answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_samples: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verifier_samples: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "self_matrix")]
    pub p_self: Option<EntailmentMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "cross_matrix")]
    pub p_cross: Option<EntailmentMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<bool>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl QuestionCase {
    pub fn new(id: impl Into<String>, question: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            question: question.into(),
            ..Default::default()
        }
    }

    /// Checks the cross-field size invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::InconsistentCase {
            question_id: self.id.clone(),
            message,
        };
        if let (Some(p), Some(samples)) = (&self.p_self, &self.target_samples) {
            if p.m() != samples.len() {
                return Err(bad(format!(
                    "p_self is {0}x{0} but there are {1} target samples",
                    p.m(),
                    samples.len()
                )));
            }
        }
        if let (Some(p), Some(samples)) = (&self.p_cross, &self.verifier_samples) {
            if p.m() != samples.len() {
                return Err(bad(format!(
                    "p_cross has {} columns but there are {} verifier samples",
                    p.m(),
                    samples.len()
                )));
            }
        }
        if let (Some(s), Some(c)) = (&self.p_self, &self.p_cross) {
            if s.m() != c.m() {
                return Err(bad(format!(
                    "p_self is {0}x{0} but p_cross is {1}x{1}",
                    s.m(),
                    c.m()
                )));
            }
        }
        Ok(())
    }

    pub fn require_self(&self) -> Result<&EntailmentMatrix<f64>> {
        self.p_self.as_ref().ok_or_else(|| Error::MissingMatrix {
            question_id: self.id.clone(),
            matrix: "p_self",
        })
    }

    pub fn require_cross(&self) -> Result<&EntailmentMatrix<f64>> {
        self.p_cross.as_ref().ok_or_else(|| Error::MissingMatrix {
            question_id: self.id.clone(),
            matrix: "p_cross",
        })
    }

    pub fn require_label(&self) -> Result<bool> {
        self.label.ok_or_else(|| Error::MissingLabel {
            question_id: self.id.clone(),
        })
    }
}

/// Scalar hallucination score for one question; higher means more suspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub question_id: String,
    pub metric_name: String,
    pub value: f64,
}

macro_rules! matrix_field {
    ($module:ident, $kind:expr) => {
        mod $module {
            use super::*;
            use serde::{Deserializer, Serializer};

            pub fn serialize<S: Serializer>(
                value: &Option<EntailmentMatrix<f64>>,
                serializer: S,
            ) -> std::result::Result<S::Ok, S::Error> {
                value.as_ref().map(EntailmentMatrix::to_rows).serialize(serializer)
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(
                deserializer: D,
            ) -> std::result::Result<Option<EntailmentMatrix<f64>>, D::Error> {
                let raw: Option<Vec<Vec<f64>>> = Option::deserialize(deserializer)?;
                raw.map(|rows| EntailmentMatrix::validate(&rows, $kind))
                    .transpose()
                    .map_err(serde::de::Error::custom)
            }
        }
    };
}

matrix_field!(self_matrix, MatrixKind::SelfTarget);
matrix_field!(cross_matrix, MatrixKind::CrossTargetVerifier);
