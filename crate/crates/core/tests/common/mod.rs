//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use xcheck_core::consistency::{EntailmentMatrix, MatrixKind};
use xcheck_core::gcn::{gcn_grad, gcn_loss, ConsistencyGraph, GcnParams};
use xcheck_core::QuestionCase;

pub fn random_self(rng: &mut impl Rng, m: usize) -> EntailmentMatrix<f64> {
    EntailmentMatrix::from_fn(m, MatrixKind::SelfTarget, |i, j| {
        if i == j {
            rng.random_range(0.5..=1.0)
        } else {
            rng.random_range(0.0..=1.0)
        }
    })
    .unwrap()
}

pub fn random_cross(rng: &mut impl Rng, m: usize) -> EntailmentMatrix<f64> {
    EntailmentMatrix::from_fn(m, MatrixKind::CrossTargetVerifier, |_, _| rng.random_range(0.0..=1.0)).unwrap()
}

pub fn rows(m: &EntailmentMatrix<f64>) -> Vec<Vec<f64>> {
    m.to_rows()
}

fn to_dmatrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j])
}

/// Ascending eigenvalues of a symmetric matrix via nalgebra.
pub fn eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut v: Vec<f64> = to_dmatrix(rows).symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn sym_rows(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = m.len();
    (0..n).map(|i| (0..n).map(|j| (m[i][j] + m[j][i]) / 2.0).collect()).collect()
}

pub fn oracle_mpd(m: &[Vec<f64>]) -> f64 {
    let n = m.len() as f64;
    1.0 - m.iter().flatten().sum::<f64>() / (n * n)
}

/// Laplacian built from scratch with `1/sqrt(d_i d_j)` scaling.
pub fn oracle_laplacian(w: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = w.len();
    let d: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    if d[i] == 0.0 || d[j] == 0.0 {
                        id
                    } else {
                        id - w[i][j] / (d[i] * d[j]).sqrt()
                    }
                })
                .collect()
        })
        .collect()
}

pub fn oracle_eigv(m: &[Vec<f64>]) -> f64 {
    eigenvalues(&oracle_laplacian(&sym_rows(m)))
        .into_iter()
        .map(|l| (1.0 - l).max(0.0))
        .sum()
}

pub fn oracle_kle(m: &[Vec<f64>]) -> f64 {
    let w = sym_rows(m);
    let tr: f64 = (0..w.len()).map(|i| w[i][i]).sum();
    let rho: Vec<Vec<f64>> = w.iter().map(|r| r.iter().map(|x| x / tr).collect()).collect();
    eigenvalues(&rho)
        .into_iter()
        .filter(|&l| l > 0.0)
        .map(|l| -l * l.ln())
        .sum::<f64>()
        .max(0.0)
}

/// Entropy of connected components found by Floyd–Warshall closure.
pub fn oracle_semantic_entropy_adj(adj: &[Vec<bool>]) -> f64 {
    let n = adj.len();
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j || adj[i][j]).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut h = 0.0;
    for i in 0..n {
        if seen[i] {
            continue;
        }
        let size = (0..n).filter(|&j| reach[i][j]).inspect(|&j| seen[j] = true).count();
        let p = size as f64 / n as f64;
        h -= p * p.ln();
    }
    h
}

pub fn oracle_semantic_entropy(m: &[Vec<f64>], theta: f64) -> f64 {
    let n = m.len();
    let adj: Vec<Vec<bool>> = (0..n)
        .map(|i| (0..n).map(|j| m[i][j] > theta && m[j][i] > theta).collect())
        .collect();
    oracle_semantic_entropy_adj(&adj)
}

/// `P(s_pos > s_neg) + ½ P(tie)` by enumerating all pairs.
pub fn brute_auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Worst per-entry relative error of the analytic gradient against central
/// differences with step `h`.
pub fn gradient_check(params: &GcnParams, graph: &ConsistencyGraph, label: bool, h: f64) -> f64 {
    let analytic = gcn_grad(params, graph, label).to_flat();
    let base = params.to_flat();
    let mut worst: f64 = 0.0;
    for k in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[k] += h;
        minus[k] -= h;
        let lp = gcn_loss(&GcnParams::from_flat(params.d_h(), &plus).unwrap(), graph, label);
        let lm = gcn_loss(&GcnParams::from_flat(params.d_h(), &minus).unwrap(), graph, label);
        let numeric = (lp - lm) / (2.0 * h);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    worst
}

pub fn labels(cases: &[QuestionCase]) -> Vec<bool> {
    cases.iter().map(|c| c.label.unwrap()).collect()
}

pub fn print_criterion(name: &str, pass: bool, detail: &str) {
    println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
}

/// Cases whose labels depend on the matrices only through `mpd(P_self)`:
/// `P(label) = sigmoid((mpd − median) / scale)`.
pub fn mpd_sufficient_cases(n: usize, seed: u64, scale: f64) -> Vec<QuestionCase> {
    use rand::SeedableRng;
    use xcheck_core::metrics::mpd;
    use xcheck_core::synth::gen_world;
    use xcheck_core::WorldConfig;

    let world = gen_world(&WorldConfig { n_questions: n, ..Default::default() }, seed).unwrap();
    let mut cases: Vec<QuestionCase> = world.sample_all(10, 0).unwrap().into_iter().map(|w| w.case).collect();
    let scores: Vec<f64> = cases.iter().map(|c| mpd(c.p_self.as_ref().unwrap())).collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[n / 2];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    for (c, s) in cases.iter_mut().zip(&scores) {
        let prob = 1.0 / (1.0 + (-(s - median) / scale).exp());
        c.label = Some(rng.random::<f64>() < prob);
    }
    cases
}
