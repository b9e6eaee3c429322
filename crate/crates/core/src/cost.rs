//! FLOP-proxy cost accounting for verifier calls.
//!
//! Forward cost per token is taken as `2N` for a model with `N`
//! non-embedding parameters, so per question the verifier adds
//! `m·l_q·2N_v` (generation) plus `m²·l_a·2N_e` (entailment scoring)
//! against a self-only baseline of `m·l_q·2N_t`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCostProfile {
    pub name: String,
    /// Non-embedding parameter count.
    pub n_params: f64,
    /// Context length in tokens.
    pub context_length: u64,
}

impl ModelCostProfile {
    pub fn new(name: impl Into<String>, n_params: f64, context_length: u64) -> Result<Self> {
        let p = Self {
            name: name.into(),
            n_params,
            context_length,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_params > 0.0 && self.n_params.is_finite()) {
            return Err(invalid("n_params", format!("{}: {} must be positive", self.name, self.n_params)));
        }
        if self.context_length == 0 {
            return Err(invalid("context_length", format!("{}: must be positive", self.name)));
        }
        Ok(())
    }
}

/// Parameter counts and context lengths of the models used in the reference
/// experiments, from public model cards. Configuration data only.
pub fn builtin_profiles() -> Vec<ModelCostProfile> {
    [
        ("Llama-2-13b-chat", 13.0e9, 4_096),
        ("Llama-2-70b-chat-hf", 70.0e9, 4_096),
        ("Llama-3-70B-Instruct", 70.0e9, 8_192),
        ("Mixtral-8x7B-Instruct-v0.1", 46.7e9, 32_768),
        ("merlinite-7b", 7.0e9, 32_768),
    ]
    .into_iter()
    .map(|(name, n, ctx)| ModelCostProfile {
        name: name.to_string(),
        n_params: n,
        context_length: ctx,
    })
    .collect()
}

/// The NLI cross-encoder used as entailment estimator.
pub fn builtin_entailment_profile() -> ModelCostProfile {
    ModelCostProfile {
        name: "deberta-v2-xlarge-mnli".to_string(),
        n_params: 0.9e9,
        context_length: 512,
    }
}

pub fn find_profile<'a>(profiles: &'a [ModelCostProfile], name: &str) -> Option<&'a ModelCostProfile> {
    profiles.iter().find(|p| p.name.eq_ignore_ascii_case(name))
}

/// `p · N_v / N_t`.
pub fn relative_additional_cost(p: f64, target: &ModelCostProfile, verifier: &ModelCostProfile) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("{p} not in [0, 1]")));
    }
    target.validate()?;
    verifier.validate()?;
    Ok(p * (verifier.n_params / target.n_params))
}

/// Ratio of the entailment-scoring term to the verifier-generation term,
/// `m · (l_a / l_q) · (N_e / N_v)`.
pub fn entailment_term_ratio(m: usize, l_a: f64, l_q: f64, n_entail: f64, n_verifier: f64) -> Result<f64> {
    if m == 0 || !(l_a > 0.0 && l_q > 0.0 && n_entail > 0.0 && n_verifier > 0.0) {
        return Err(invalid("entailment_term_ratio", "all quantities must be positive"));
    }
    Ok(m as f64 * (l_a / l_q) * (n_entail / n_verifier))
}

/// Largest entailment-term ratio over `verifiers` in the context-length
/// limit: answer lengths reach the entailment model's context, question
/// lengths the verifier's.
pub fn max_entailment_ratio(
    m: usize,
    entail: &ModelCostProfile,
    verifiers: &[ModelCostProfile],
) -> Result<Option<(String, f64)>> {
    let mut best: Option<(String, f64)> = None;
    for v in verifiers {
        let r = entailment_term_ratio(
            m,
            entail.context_length as f64,
            v.context_length as f64,
            entail.n_params,
            v.n_params,
        )?;
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((v.name.clone(), r));
        }
    }
    Ok(best)
}

/// Smallest budget reaching a given share of the maximal AUROC gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainThreshold {
    pub p_alpha: f64,
    pub delta_max: f64,
    /// `delta_max ≤ 0`; `p_alpha` is then 0 by definition.
    pub no_gain: bool,
}

/// `Δmax = max_p AUROC(p) − AUROC(0)`; `p(α)` is the smallest grid `p` whose
/// gain reaches `α/100 · Δmax`.
pub fn min_p_for_gain(gain_curve: &[(f64, f64)], alpha_pct: f64) -> Result<GainThreshold> {
    if !(alpha_pct > 0.0 && alpha_pct <= 100.0) {
        return Err(invalid("alpha_pct", format!("{alpha_pct} not in (0, 100]")));
    }
    let mut curve = gain_curve.to_vec();
    if curve.iter().any(|(p, a)| !p.is_finite() || !a.is_finite()) {
        return Err(invalid("gain_curve", "non-finite entry"));
    }
    curve.sort_by(|a, b| a.0.total_cmp(&b.0));
    let base = curve
        .iter()
        .find(|(p, _)| *p == 0.0)
        .map(|&(_, a)| a)
        .ok_or_else(|| invalid("gain_curve", "no entry at p = 0"))?;
    let delta_max = curve.iter().map(|&(_, a)| a - base).fold(f64::NEG_INFINITY, f64::max);
    if delta_max <= 0.0 {
        return Ok(GainThreshold {
            p_alpha: 0.0,
            delta_max: delta_max.max(0.0),
            no_gain: true,
        });
    }
    let needed = alpha_pct / 100.0 * delta_max;
    let tol = 1e-12 * delta_max.max(1.0);
    let p_alpha = curve
        .iter()
        .find(|&&(_, a)| a - base >= needed - tol)
        .map(|&(p, _)| p)
        .expect("the maximum reaches every share");
    Ok(GainThreshold {
        p_alpha,
        delta_max,
        no_gain: false,
    })
}
