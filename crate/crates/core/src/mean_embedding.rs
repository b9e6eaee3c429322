//! Kernel-mean-embedding view of consistency.
//!
//! With the entailment kernel on answers, the empirical mean embeddings of
//! the target, verifier and reference samples satisfy
//! `‖μ_t‖² = 1 − MPD(P_self)` and `⟨μ_t, μ_v⟩ = 1 − MPD(P_cross)`. On a
//! finite semantic space the same quantities reduce to Gram arithmetic over
//! atom distributions, see [`AtomGram`].

use serde::{Deserialize, Serialize};

use crate::consistency::EntailmentMatrix;
use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::metrics::mpd;
use crate::scalar::Scalar;

pub const DEFAULT_EPS_REG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingGeometry<T> {
    /// `‖μ_t‖²`
    pub self_norm_sq: T,
    /// `⟨μ_t, μ_v⟩`
    pub cross_inner: Option<T>,
    /// `⟨μ_t, μ*⟩`
    pub truth_inner_target: Option<T>,
    /// `⟨μ_v, μ*⟩`
    pub truth_inner_verifier: Option<T>,
}

pub fn geometry_from_matrices<T: Scalar>(
    p_self: &EntailmentMatrix<T>,
    p_cross: Option<&EntailmentMatrix<T>>,
    p_target_truth: Option<&EntailmentMatrix<T>>,
    p_verifier_truth: Option<&EntailmentMatrix<T>>,
) -> EmbeddingGeometry<T> {
    let inner = |m: &EntailmentMatrix<T>| T::one() - mpd(m);
    EmbeddingGeometry {
        self_norm_sq: inner(p_self),
        cross_inner: p_cross.map(inner),
        truth_inner_target: p_target_truth.map(inner),
        truth_inner_verifier: p_verifier_truth.map(inner),
    }
}

/// Entropic-regularized optimal weight on the target embedding:
/// `softmax(⟨μ_t,μ*⟩/ε, ⟨μ_v,μ*⟩/ε)[0]`, stable for tiny `ε`.
pub fn lambda_entropic<T: Scalar>(inner_t_star: T, inner_v_star: T, eps_reg: T) -> Result<T> {
    if !(eps_reg > T::zero()) {
        return Err(invalid("eps_reg", format!("{eps_reg} must be positive")));
    }
    for (name, v) in [("inner_t_star", inner_t_star), ("inner_v_star", inner_v_star)] {
        if !(v >= T::zero() && v <= T::one()) {
            return Err(invalid(name, format!("{v} not in [0, 1]")));
        }
    }
    let a = inner_t_star / eps_reg;
    let b = inner_v_star / eps_reg;
    let top = a.max(b);
    let ea = (a - top).exp();
    let eb = (b - top).exp();
    Ok(ea / (ea + eb))
}

/// `√(2·(1 − ⟨μ*, λμ_t + (1−λ)μ_v⟩))`.
pub fn approx_error_bound<T: Scalar>(mix_truth_inner: T) -> Result<T> {
    if !(mix_truth_inner >= T::zero() && mix_truth_inner <= T::one()) {
        return Err(invalid("mix_truth_inner", format!("{mix_truth_inner} not in [0, 1]")));
    }
    Ok((T::lit(2.0) * (T::one() - mix_truth_inner)).sqrt())
}

/// Kernel Gram matrix over a finite set of semantic atoms. Mean embeddings of
/// atom distributions `p`, `q` have inner product `pᵀ G q`.
#[derive(Debug, Clone)]
pub struct AtomGram<T> {
    gram: Matrix<T>,
}

impl<T: Scalar> AtomGram<T> {
    /// Requires a symmetric kernel bounded by 1.
    pub fn new(gram: Matrix<T>) -> Result<Self> {
        if !gram.is_symmetric(T::zero()) {
            return Err(invalid("gram", "must be square and symmetric"));
        }
        if gram.as_slice().iter().any(|&g| !(g >= T::zero() && g <= T::one())) {
            return Err(invalid("gram", "entries must lie in [0, 1]"));
        }
        Ok(Self { gram })
    }

    /// `intra` on the diagonal, `inter` elsewhere.
    pub fn two_level(atoms: usize, intra: T, inter: T) -> Result<Self> {
        Self::new(Matrix::from_fn(atoms, atoms, |i, j| if i == j { intra } else { inter }))
    }

    pub fn atoms(&self) -> usize {
        self.gram.rows()
    }

    pub fn inner(&self, p: &[T], q: &[T]) -> T {
        assert_eq!(p.len(), self.atoms());
        assert_eq!(q.len(), self.atoms());
        let mut acc = T::zero();
        for (i, &pi) in p.iter().enumerate() {
            if pi == T::zero() {
                continue;
            }
            for (j, &qj) in q.iter().enumerate() {
                acc += pi * qj * self.gram[(i, j)];
            }
        }
        acc
    }
}
