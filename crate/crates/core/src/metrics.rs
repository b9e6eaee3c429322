//! Consistency functionals mapping an entailment matrix to a hallucination
//! score. Every score is oriented so that larger values mean less
//! consistent answers, hence a more likely hallucination.
//!
//! | function | input | idea |
//! |----------|-------|------|
//! | [`mpd`] | any | one minus the mean entry, diagonal included |
//! | [`semantic_entropy`] | self | entropy over bidirectional-entailment clusters |
//! | [`eigv`] | self | soft count of near-zero normalized-Laplacian eigenvalues |
//! | [`ecc`] | self | spread of spectral node embeddings |
//! | [`kle`] | self | von Neumann entropy of the trace-normalized kernel |
//! | [`combined_score`] | self + cross | convex mix of the two MPDs |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::consistency::{EntailmentMatrix, QuestionCase, ScoreRecord};
use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{compensated_sum, Scalar};

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_EIG_THRESHOLD: f64 = 0.9;

/// Mean pairwise distance, `1 − mean(M)`.
///
/// Entries are accumulated as unordered pairs `M[j][k] + M[k][j]`, which
/// makes the result bit-identical for `M`, `Mᵀ` and `symmetrize(M)`.
pub fn mpd<T: Scalar>(m: &EntailmentMatrix<T>) -> T {
    let e = m.entries();
    let n = m.m();
    let diag = (0..n).map(|i| e[(i, i)]);
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| e[(i, j)] + e[(j, i)]));
    let total = compensated_sum(diag.chain(pairs));
    let mean = total / T::from_count(n * n);
    (T::one() - mean).max(T::zero()).min(T::one())
}

/// Semantic entropy in nats over the connected components of the
/// bidirectional-entailment graph at threshold `theta`.
pub fn semantic_entropy<T: Scalar>(m: &EntailmentMatrix<T>, theta: T) -> Result<T> {
    let graph = m.binarize(theta)?;
    let n = graph.n();
    let mut dsu = DisjointSets::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if graph.get(i, j) {
                dsu.union(i, j);
            }
        }
    }
    let total = T::from_count(n);
    Ok(dsu
        .component_sizes()
        .into_iter()
        .map(|size| {
            let p = T::from_count(size) / total;
            -p * p.ln()
        })
        .sum::<T>()
        .max(T::zero()))
}

/// `I − D^{-1/2} W D^{-1/2}` with `D_jj = Σ_k W_jk`. Zero-degree rows map to
/// a unit diagonal entry and zero off-diagonal entries.
pub fn normalized_laplacian<T: Scalar>(w: &Matrix<T>) -> Result<Matrix<T>> {
    if !w.is_square() {
        return Err(invalid("W", "weight matrix must be square"));
    }
    if !w.is_symmetric(T::zero()) {
        return Err(invalid("W", "weight matrix must be symmetric"));
    }
    let n = w.rows();
    let inv_sqrt_deg: Vec<T> = (0..n)
        .map(|i| {
            let d: T = w.row(i).iter().copied().sum();
            if d > T::zero() {
                T::one() / d.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    Ok(Matrix::from_fn(n, n, |i, j| {
        let delta = if i == j { T::one() } else { T::zero() };
        delta - inv_sqrt_deg[i] * w[(i, j)] * inv_sqrt_deg[j]
    }))
}

fn laplacian_of<T: Scalar>(m: &EntailmentMatrix<T>) -> Matrix<T> {
    normalized_laplacian(m.symmetrize().entries()).expect("symmetrized matrix is symmetric")
}

/// `Σ_k max(0, 1 − λ_k)` over the normalized-Laplacian spectrum of the
/// symmetrized matrix; equals the number of clusters for block-diagonal
/// all-ones inputs.
pub fn eigv<T: Scalar>(m: &EntailmentMatrix<T>) -> T {
    laplacian_of(m)
        .symmetric_eigen()
        .values
        .into_iter()
        .map(|lambda| (T::one() - lambda).max(T::zero()))
        .sum()
}

/// Eccentricity: spread of per-answer spectral embeddings built from the
/// Laplacian eigenvectors with eigenvalue below `eig_threshold`.
pub fn ecc<T: Scalar>(m: &EntailmentMatrix<T>, eig_threshold: T) -> Result<T> {
    if !(eig_threshold > T::zero() && eig_threshold <= T::lit(2.0)) {
        return Err(invalid("eig_threshold", format!("{eig_threshold} not in (0, 2]")));
    }
    let eig = laplacian_of(m).symmetric_eigen();
    let n = m.m();
    let nf = T::from_count(n);
    let mut spread = T::zero();
    for (k, &lambda) in eig.values.iter().enumerate() {
        if lambda >= eig_threshold {
            continue;
        }
        let column: Vec<T> = (0..n).map(|j| eig.vectors[(j, k)]).collect();
        let mean = column.iter().copied().sum::<T>() / nf;
        spread += column.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
    }
    Ok(spread.sqrt())
}

/// Von Neumann entropy (nats) of `ρ = W / tr(W)`, `W` the symmetrized matrix.
pub fn kle<T: Scalar>(m: &EntailmentMatrix<T>) -> T {
    let w = m.symmetrize();
    let trace = w.entries().trace();
    let rho = w.entries().map(|x| x / trace);
    rho.symmetric_eigen()
        .values
        .into_iter()
        .filter(|&l| l > T::zero())
        .map(|l| -l * l.ln())
        .sum::<T>()
        .max(T::zero())
}

/// `(1 − λ)·MPD(P_self) + λ·MPD(P_cross)`.
pub fn combined_score<T: Scalar>(
    p_self: &EntailmentMatrix<T>,
    p_cross: &EntailmentMatrix<T>,
    lambda: T,
) -> Result<T> {
    check_lambda(lambda.as_f64())?;
    Ok((T::one() - lambda) * mpd(p_self) + lambda * mpd(p_cross))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(invalid("lambda", format!("{lambda} not in [0, 1]")))
    }
}

/// The metric family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum MetricName {
    MpdSelf,
    MpdCross,
    #[serde(rename = "se")]
    SemanticEntropy,
    #[serde(rename = "eigv")]
    EigV,
    Ecc,
    Kle,
    Combined { lambda: f64 },
}

impl MetricName {
    pub fn combined(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(MetricName::Combined { lambda })
    }

    pub fn base_name(&self) -> &'static str {
        match self {
            MetricName::MpdSelf => "mpd_self",
            MetricName::MpdCross => "mpd_cross",
            MetricName::SemanticEntropy => "se",
            MetricName::EigV => "eigv",
            MetricName::Ecc => "ecc",
            MetricName::Kle => "kle",
            MetricName::Combined { .. } => "combined",
        }
    }

    /// Name plus the parameters that influence the value.
    pub fn describe(&self, params: &MetricParams) -> String {
        match self {
            MetricName::SemanticEntropy => format!("se(theta={})", params.theta),
            MetricName::Ecc => format!("ecc(eig_threshold={})", params.eig_threshold),
            MetricName::Combined { lambda } => format!("combined(lambda={lambda})"),
            other => other.base_name().to_string(),
        }
    }

    pub fn needs_cross(&self) -> bool {
        matches!(self, MetricName::MpdCross | MetricName::Combined { .. })
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricName::Combined { lambda } => write!(f, "combined:{lambda}"),
            other => f.write_str(other.base_name()),
        }
    }
}

impl FromStr for MetricName {
    type Err = Error;

    /// Accepts the base names; `combined` takes its weight as `combined:0.3`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let metric = match name.to_ascii_lowercase().as_str() {
            "mpd_self" | "mpd" => MetricName::MpdSelf,
            "mpd_cross" => MetricName::MpdCross,
            "se" | "semantic_entropy" => MetricName::SemanticEntropy,
            "eigv" => MetricName::EigV,
            "ecc" => MetricName::Ecc,
            "kle" => MetricName::Kle,
            "combined" => {
                let lambda = match arg {
                    Some(a) => a
                        .parse::<f64>()
                        .map_err(|e| invalid("lambda", format!("{a:?}: {e}")))?,
                    None => 0.5,
                };
                return MetricName::combined(lambda);
            }
            _ => return Err(invalid("metric", format!("unknown metric {s:?}"))),
        };
        if arg.is_some() {
            return Err(invalid("metric", format!("{name} takes no argument")));
        }
        Ok(metric)
    }
}

/// Tunables shared by the threshold-based metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub theta: f64,
    pub eig_threshold: f64,
}

impl Default for MetricParams {
    fn default() -> Self {
        Self {
            theta: DEFAULT_THETA,
            eig_threshold: DEFAULT_EIG_THRESHOLD,
        }
    }
}

/// Raw metric value for a case, without building a record.
pub fn metric_value(case: &QuestionCase, metric: MetricName, params: &MetricParams) -> Result<f64> {
    Ok(match metric {
        MetricName::MpdSelf => mpd(case.require_self()?),
        MetricName::MpdCross => mpd(case.require_cross()?),
        MetricName::SemanticEntropy => semantic_entropy(case.require_self()?, params.theta)?,
        MetricName::EigV => eigv(case.require_self()?),
        MetricName::Ecc => ecc(case.require_self()?, params.eig_threshold)?,
        MetricName::Kle => kle(case.require_self()?),
        MetricName::Combined { lambda } => {
            combined_score(case.require_self()?, case.require_cross()?, lambda)?
        }
    })
}

pub fn score_case(case: &QuestionCase, metric: MetricName, params: &MetricParams) -> Result<ScoreRecord> {
    let value = metric_value(case, metric, params)?;
    Ok(ScoreRecord {
        question_id: case.id.clone(),
        metric_name: metric.describe(params),
        value,
    })
}

struct DisjointSets {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    fn component_sizes(&self) -> Vec<usize> {
        (0..self.parent.len())
            .filter(|&i| self.parent[i] == i)
            .map(|i| self.size[i])
            .collect()
    }
}
