//! Synthetic questions over a finite set of semantic atoms.
//!
//! Every question has a target answer distribution and a verifier answer
//! distribution over `K` atoms, plus a true atom. The target is calibrated:
//! the true atom is drawn from the target distribution itself, so confident
//! questions are mostly answered correctly. The low-temperature answer is the
//! target's modal atom, and the case is a hallucination when that atom is
//! not the true one.
//!
//! Entailment between two sampled answers is `intra` for equal atoms and
//! `inter` otherwise, plus uniform jitter on `[-σ, σ]`, clamped to `[0, 1]`.
//! Since everything is a finite mixture, expectations have closed forms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::{EntailmentMatrix, MatrixKind, QuestionCase};
use crate::error::{invalid, Result};
use crate::seeds::derive_seed2;

const DIST_STREAM: u64 = 0;
const SAMPLE_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierConfig {
    /// Weight of the point mass on the true atom, in `[0, 1]`.
    pub strength: f64,
    /// Dirichlet concentration of the remaining mass.
    pub concentration: f64,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        Self {
            strength: 0.5,
            concentration: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_questions: usize,
    pub atoms: usize,
    /// Symmetric Dirichlet concentration of the target distributions.
    pub concentration: f64,
    /// Jitter half-width `σ`, in `[0, 0.2]`.
    pub kernel_noise: f64,
    pub intra_entail: f64,
    pub inter_entail: f64,
    pub verifier: VerifierConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_questions: 400,
            atoms: 4,
            concentration: 0.5,
            kernel_noise: 0.05,
            intra_entail: 0.95,
            inter_entail: 0.05,
            verifier: VerifierConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.atoms == 0 {
            return Err(invalid("atoms", "must be at least 1"));
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return Err(invalid("concentration", format!("{} must be positive", self.concentration)));
        }
        if !(0.0..=0.2).contains(&self.kernel_noise) {
            return Err(invalid("kernel_noise", format!("{} not in [0, 0.2]", self.kernel_noise)));
        }
        let unit = 0.0..=1.0;
        if !unit.contains(&self.intra_entail) || !unit.contains(&self.inter_entail) {
            return Err(invalid("entailment levels", "must lie in [0, 1]"));
        }
        if self.intra_entail <= self.inter_entail {
            return Err(invalid("intra_entail", "must exceed inter_entail"));
        }
        if !unit.contains(&self.verifier.strength) {
            return Err(invalid("verifier.strength", format!("{} not in [0, 1]", self.verifier.strength)));
        }
        if !(self.verifier.concentration > 0.0 && self.verifier.concentration.is_finite()) {
            return Err(invalid("verifier.concentration", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub config: WorldConfig,
    pub seed: u64,
    pub target_dist: Vec<Vec<f64>>,
    pub verifier_dist: Vec<Vec<f64>>,
    pub truth_atom: Vec<usize>,
}

/// A sampled question together with its hidden generative state.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldCase {
    pub case: QuestionCase,
    pub target_atoms: Vec<usize>,
    pub verifier_atoms: Vec<usize>,
    /// Probability that a target sample is the true atom.
    pub exact_correctness: f64,
}

/// Symmetric Dirichlet draw via normalized Gamma variates. When every
/// variate underflows (tiny concentration) the draw degenerates to a point
/// mass on a uniformly chosen atom, which is the limiting distribution.
fn dirichlet(k: usize, alpha: f64, rng: &mut impl Rng) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(alpha, 1.0).expect("positive concentration");
    let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        let hot = rng.random_range(0..k);
        return (0..k).map(|i| if i == hot { 1.0 } else { 0.0 }).collect();
    }
    draws.iter().map(|d| d / total).collect()
}

fn categorical(dist: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the running sum; fall back to the last supported atom
    dist.iter().rposition(|&p| p > 0.0).unwrap_or(dist.len() - 1)
}

/// Modal atom, lowest index on ties.
pub fn argmax_atom(dist: &[f64]) -> usize {
    dist.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &p)| if p > best.1 { (i, p) } else { best })
        .0
}

pub fn gen_world(config: &WorldConfig, seed: u64) -> Result<SyntheticWorld> {
    config.validate()?;
    let per_question: Vec<(Vec<f64>, Vec<f64>, usize)> = (0..config.n_questions)
        .into_par_iter()
        .map(|q| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(seed, q as u64, DIST_STREAM));
            let target = dirichlet(config.atoms, config.concentration, &mut rng);
            let truth = categorical(&target, &mut rng);
            let noise = dirichlet(config.atoms, config.verifier.concentration, &mut rng);
            let s = config.verifier.strength;
            let mut verifier: Vec<f64> = noise.iter().map(|&x| (1.0 - s) * x).collect();
            verifier[truth] += s;
            let total: f64 = verifier.iter().sum();
            verifier.iter_mut().for_each(|x| *x /= total);
            (target, verifier, truth)
        })
        .collect();
    let mut world = SyntheticWorld {
        config: *config,
        seed,
        target_dist: Vec::with_capacity(config.n_questions),
        verifier_dist: Vec::with_capacity(config.n_questions),
        truth_atom: Vec::with_capacity(config.n_questions),
    };
    for (t, v, a) in per_question {
        world.target_dist.push(t);
        world.verifier_dist.push(v);
        world.truth_atom.push(a);
    }
    Ok(world)
}

impl SyntheticWorld {
    pub fn n_questions(&self) -> usize {
        self.truth_atom.len()
    }

    fn check_index(&self, q: usize) -> Result<()> {
        if q >= self.n_questions() {
            return Err(invalid("q_index", format!("{q} >= {}", self.n_questions())));
        }
        Ok(())
    }

    fn entail_score(&self, a: usize, b: usize, rng: &mut impl Rng) -> f64 {
        let base = if a == b {
            self.config.intra_entail
        } else {
            self.config.inter_entail
        };
        let sigma = self.config.kernel_noise;
        let jitter = if sigma > 0.0 { rng.random_range(-sigma..=sigma) } else { 0.0 };
        (base + jitter).clamp(0.0, 1.0)
    }

    /// Samples `m` target and `m` verifier answers and builds both matrices,
    /// using the question's default sample stream.
    pub fn sample_case(&self, q: usize, m: usize) -> Result<WorldCase> {
        self.sample_case_replicate(q, m, 0)
    }

    /// Independent resample of the same question; replicate `r` has its own
    /// deterministic stream.
    pub fn sample_case_replicate(&self, q: usize, m: usize, replicate: u64) -> Result<WorldCase> {
        self.check_index(q)?;
        let stream = SAMPLE_STREAM + replicate.wrapping_mul(2);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed2(self.seed, q as u64, stream));
        self.sample_case_with(q, m, &mut rng)
    }

    pub fn sample_case_with(&self, q: usize, m: usize, rng: &mut impl Rng) -> Result<WorldCase> {
        self.check_index(q)?;
        if m < 2 {
            return Err(invalid("m", "must be at least 2"));
        }
        let target = &self.target_dist[q];
        let verifier = &self.verifier_dist[q];
        let target_atoms: Vec<usize> = (0..m).map(|_| categorical(target, rng)).collect();
        let verifier_atoms: Vec<usize> = (0..m).map(|_| categorical(verifier, rng)).collect();

        let mut p_self = vec![vec![1.0; m]; m];
        for (j, row) in p_self.iter_mut().enumerate() {
            for (k, cell) in row.iter_mut().enumerate() {
                if j != k {
                    *cell = self.entail_score(target_atoms[j], target_atoms[k], rng);
                }
            }
        }
        let p_cross: Vec<Vec<f64>> = target_atoms
            .iter()
            .map(|&a| verifier_atoms.iter().map(|&b| self.entail_score(a, b, rng)).collect())
            .collect();

        let answer = argmax_atom(target);
        let truth = self.truth_atom[q];
        let atom_text = |a: usize| format!("atom {a}");
        let mut case = QuestionCase::new(format!("q{q}"), format!("synthetic question {q}"));
        case.low_temp_answer = Some(atom_text(answer));
        case.target_samples = Some(target_atoms.iter().map(|&a| atom_text(a)).collect());
        case.verifier_samples = Some(verifier_atoms.iter().map(|&a| atom_text(a)).collect());
        case.p_self = Some(EntailmentMatrix::validate(&p_self, MatrixKind::SelfTarget)?);
        case.p_cross = Some(EntailmentMatrix::validate(&p_cross, MatrixKind::CrossTargetVerifier)?);
        case.label = Some(answer != truth);
        case.extra.insert("truth_atom".into(), serde_json::json!(truth));
        let exact_correctness = target[truth];
        case.extra
            .insert("exact_correctness".into(), serde_json::json!(exact_correctness));

        Ok(WorldCase {
            case,
            target_atoms,
            verifier_atoms,
            exact_correctness,
        })
    }

    /// One case per question, in question order.
    pub fn sample_all(&self, m: usize, replicate: u64) -> Result<Vec<WorldCase>> {
        (0..self.n_questions())
            .into_par_iter()
            .map(|q| self.sample_case_replicate(q, m, replicate))
            .collect()
    }

    /// Closed-form pair score expectation `E[clamp(base + U(-σ,σ), 0, 1)]`.
    pub fn expected_entail(&self, same_atom: bool) -> f64 {
        let base = if same_atom {
            self.config.intra_entail
        } else {
            self.config.inter_entail
        };
        clamped_uniform_mean(base, self.config.kernel_noise)
    }

    /// `E[1 − MPD(P_cross)]` for question `q`, exactly.
    pub fn exact_cross_consistency(&self, q: usize) -> Result<f64> {
        self.check_index(q)?;
        let (same, diff) = (self.expected_entail(true), self.expected_entail(false));
        let t = &self.target_dist[q];
        let v = &self.verifier_dist[q];
        let overlap: f64 = t.iter().zip(v).map(|(a, b)| a * b).sum();
        Ok(overlap * same + (1.0 - overlap) * diff)
    }

    /// `E[MPD(P_self)]` for question `q` with `m` samples, exactly.
    pub fn exact_self_mpd(&self, q: usize, m: usize) -> Result<f64> {
        self.check_index(q)?;
        let (same, diff) = (self.expected_entail(true), self.expected_entail(false));
        let collision: f64 = self.target_dist[q].iter().map(|p| p * p).sum();
        let off = collision * same + (1.0 - collision) * diff;
        let mf = m as f64;
        Ok(1.0 - (mf + mf * (mf - 1.0) * off) / (mf * mf))
    }
}

/// `E[clamp(c + U, 0, 1)]` for `U ~ Uniform(-σ, σ)`.
pub fn clamped_uniform_mean(c: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return c.clamp(0.0, 1.0);
    }
    // antiderivative of clamp(x, 0, 1)
    let prim = |x: f64| {
        if x <= 0.0 {
            0.0
        } else if x <= 1.0 {
            x * x / 2.0
        } else {
            0.5 + (x - 1.0)
        }
    };
    (prim(c + sigma) - prim(c - sigma)) / (2.0 * sigma)
}
