//! End-to-end acceptance criteria. Runs without the libtest harness so that
//! every criterion prints one PASS/FAIL line; exits non-zero on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xcheck_core::consistency::{EntailmentMatrix, MatrixKind};
use xcheck_core::cost::{
    builtin_entailment_profile, builtin_profiles, entailment_term_ratio, find_profile, max_entailment_ratio,
    min_p_for_gain, relative_additional_cost,
};
use xcheck_core::detector::{batch_detect, DetectorConfig, ScoredBatch};
use xcheck_core::evaluation::{
    aurac, auroc, band_points, hoeffding_epsilon, monte_carlo_theorem_check, test_band_auc, unit_grid, RocBand,
    DEFAULT_BIN_WIDTH,
};
use xcheck_core::gcn::{activation_margin, build_graph, ceiling_estimate, gcn_forward, stratified_split, GcnParams, TrainConfig};
use xcheck_core::linalg::Matrix;
use xcheck_core::mean_embedding::geometry_from_matrices;
use xcheck_core::metrics::{eigv, kle, mpd, semantic_entropy, MetricName, MetricParams};
use xcheck_core::synth::{gen_world, VerifierConfig};
use xcheck_core::{QuestionCase, WorldConfig};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);
type GainFixture<'a> = (&'a [(f64, f64)], f64, f64);

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let m = 2 + k % 7;
        let p = common::random_self(&mut rng, m);
        let r = p.to_rows();
        let errs = [
            (mpd(&p) - common::oracle_mpd(&r)).abs(),
            (semantic_entropy(&p, 0.5).unwrap() - common::oracle_semantic_entropy(&r, 0.5)).abs(),
            (eigv(&p) - common::oracle_eigv(&r)).abs(),
            (kle(&p) - common::oracle_kle(&r)).abs(),
        ];
        worst = errs.iter().fold(worst, |a, &b| a.max(b));
    }

    // every symmetric bidirectional-entailment pattern at m <= 5
    let mut patterns = 0usize;
    let mut se_worst: f64 = 0.0;
    for m in 2..=5usize {
        let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
        for mask in 0u32..(1 << pairs.len()) {
            let mut raw = vec![vec![1.0; m]; m];
            let mut adj = vec![vec![false; m]; m];
            for (b, &(i, j)) in pairs.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    raw[i][j] = rng.random_range(0.51..=1.0);
                    raw[j][i] = rng.random_range(0.51..=1.0);
                    adj[i][j] = true;
                    adj[j][i] = true;
                } else {
                    // one direction may still entail
                    let (hi, lo) = if rng.random_bool(0.5) { ((i, j), (j, i)) } else { ((j, i), (i, j)) };
                    raw[hi.0][hi.1] = rng.random_range(0.0..=1.0);
                    raw[lo.0][lo.1] = rng.random_range(0.0..=0.49);
                }
            }
            let p = EntailmentMatrix::validate(&raw, MatrixKind::SelfTarget).unwrap();
            let got = semantic_entropy(&p, 0.5).unwrap();
            se_worst = se_worst.max((got - common::oracle_semantic_entropy_adj(&adj)).abs());
            patterns += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-9 && se_worst <= 1e-9 && elapsed < Duration::from_secs(10);
    (
        pass,
        format!(
            "max |err| {worst:.2e} over 200 random matrices, semantic entropy {se_worst:.2e} over {patterns} patterns, {elapsed:.2?}"
        ),
    )
}

/// Explicit feature vectors for the atom kernel: rows of the Cholesky factor.
fn atom_features(intra: f64, inter: f64, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |i, j| if i == j { intra } else { inter });
    g.cholesky().expect("positive definite atom kernel").l()
}

fn geometry_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut checked = 0usize;
    // jittered worlds: explicit double sum over the kernel matrix
    for seed in 0..5u64 {
        let cfg = WorldConfig {
            n_questions: 100,
            kernel_noise: 0.05 * seed as f64 / 2.0,
            ..Default::default()
        };
        let world = gen_world(&cfg, seed).unwrap();
        for wc in world.sample_all(10, 0).unwrap() {
            let (s, c) = (wc.case.p_self.unwrap(), wc.case.p_cross.unwrap());
            let geo = geometry_from_matrices(&s, Some(&c), None, None);
            let mean = |m: &EntailmentMatrix<f64>| m.to_rows().iter().flatten().sum::<f64>() / (m.m() * m.m()) as f64;
            worst = worst.max((geo.self_norm_sq - mean(&s)).abs());
            worst = worst.max((geo.cross_inner.unwrap() - mean(&c)).abs());
            worst = worst.max((geo.self_norm_sq - (1.0 - mpd(&s))).abs());
            worst = worst.max((geo.cross_inner.unwrap() - (1.0 - mpd(&c))).abs());
            checked += 2;
        }
    }
    // noiseless worlds: mean embeddings as explicit vectors
    for seed in 0..5u64 {
        let k = 2 + seed as usize;
        let cfg = WorldConfig {
            n_questions: 100,
            atoms: k,
            kernel_noise: 0.0,
            ..Default::default()
        };
        let world = gen_world(&cfg, 10 + seed).unwrap();
        let l = atom_features(cfg.intra_entail, cfg.inter_entail, k);
        for wc in world.sample_all(8, 0).unwrap() {
            let m = wc.target_atoms.len();
            // target samples carry an extra private coordinate so that k(x, x) = 1
            let dim = k + m;
            let mut mu_t = vec![0.0; dim];
            let mut mu_v = vec![0.0; dim];
            for (j, &a) in wc.target_atoms.iter().enumerate() {
                for d in 0..k {
                    mu_t[d] += l[(a, d)] / m as f64;
                }
                mu_t[k + j] += (1.0 - cfg.intra_entail).sqrt() / m as f64;
            }
            for &b in &wc.verifier_atoms {
                for d in 0..k {
                    mu_v[d] += l[(b, d)] / m as f64;
                }
            }
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let (s, c) = (wc.case.p_self.unwrap(), wc.case.p_cross.unwrap());
            let geo = geometry_from_matrices(&s, Some(&c), None, None);
            worst = worst.max((geo.self_norm_sq - dot(&mu_t, &mu_t)).abs());
            worst = worst.max((geo.cross_inner.unwrap() - dot(&mu_t[..k], &mu_v[..k])).abs());
            checked += 2;
        }
    }
    (worst <= 1e-12, format!("max |err| {worst:.2e} over {checked} matrices"))
}

fn ranking_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while draws < 300 {
        let n = rng.random_range(2..=200);
        let levels = rng.random_range(2..=20);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
            continue;
        }
        worst = worst.max((auroc(&scores, &labels).unwrap() - common::brute_auroc(&scores, &labels)).abs());
        draws += 1;
    }

    // two cases, clean split at X = 0.5: accuracy 1 then 1/2
    let two = aurac(&[0.1, 0.9], &[false, true]).unwrap();
    // six cases, accuracy after k kept cases: 1, 1, 2/3, 3/4, 3/5, 1/2
    let six_scores = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let six_labels = [false, false, true, false, true, true];
    let acc = [1.0, 1.0, 2.0 / 3.0, 0.75, 0.6, 0.5];
    let curve: Vec<f64> = (1..=100usize).map(|j| acc[(6 * j).div_ceil(100) - 1]).collect();
    let hand = curve.windows(2).map(|w| 0.01 * (w[0] + w[1]) / 2.0).sum::<f64>() / 0.99;
    let six = aurac(&six_scores, &six_labels).unwrap();
    let aurac_err = (two - 0.75).abs().max((six - hand).abs());
    (
        worst <= 1e-12 && aurac_err <= 1e-12,
        format!("AUROC max |err| {worst:.2e} over {draws} tied inputs; AURAC fixtures {two:.6}, {six:.6} (hand {hand:.6})"),
    )
}

fn theorem_bound() -> Outcome {
    let start = Instant::now();
    let r = hoeffding_epsilon(100, 100, 400, 400).unwrap();
    let direct_eps = ((100f64.ln() + 100f64.ln()) / 400.0).sqrt();
    let direct_conf = (1.0 - 2.0 / (100.0 * 100.0f64)).powi(2);
    let eps_ok = (r.epsilon - 0.15174).abs() <= 1e-4 && (r.epsilon - direct_eps).abs() <= 1e-15;
    let conf_ok = (r.confidence - direct_conf).abs() <= 1e-8 && (r.confidence - 0.99960).abs() < 5e-6;
    let trials = 1000;
    let coverage = monte_carlo_theorem_check((100, 100), 400, 400, trials, 7).unwrap();
    let sigma = (r.confidence * (1.0 - r.confidence) / trials as f64).sqrt();
    let elapsed = start.elapsed();
    let mc_ok = coverage >= r.confidence - 3.0 * sigma && elapsed < Duration::from_secs(60);
    (
        eps_ok && conf_ok && mc_ok,
        format!(
            "epsilon {:.6}, confidence {:.8}, coverage {coverage:.4} (floor {:.4}), {elapsed:.2?}",
            r.epsilon,
            r.confidence,
            r.confidence - 3.0 * sigma
        ),
    )
}

fn synthetic_cases(n: usize, seed: u64, config: WorldConfig) -> Vec<QuestionCase> {
    let world = gen_world(&WorldConfig { n_questions: n, ..config }, seed).unwrap();
    world.sample_all(10, 0).unwrap().into_iter().map(|w| w.case).collect()
}

fn detector_degenerations() -> Outcome {
    let cases = synthetic_cases(500, 40, WorldConfig::default());
    let params = MetricParams::default();
    let s_self: Vec<f64> = cases
        .iter()
        .map(|c| xcheck_core::metrics::metric_value(c, MetricName::MpdSelf, &params).unwrap())
        .collect();
    let s_cross: Vec<f64> = cases
        .iter()
        .map(|c| xcheck_core::metrics::metric_value(c, MetricName::MpdCross, &params).unwrap())
        .collect();
    let mut mismatches = 0usize;
    let mut checks = 0usize;
    let mut sorted = s_self.clone();
    sorted.sort_by(f64::total_cmp);
    // t1 at grid values and at exact score values (ties route to stage two)
    let t1s: Vec<f64> = unit_grid(21).into_iter().chain([sorted[100], sorted[250], sorted[400]]).collect();
    for &t1 in &t1s {
        for t2 in [0.2, 0.5, 0.8] {
            let res = batch_detect(&cases, &DetectorConfig::new(t1, t2, 0.0), None).unwrap();
            for (i, o) in res.outcomes.iter().enumerate() {
                let s = s_self[i];
                let expect = if s < t1 {
                    false
                } else if s > t1 {
                    true
                } else {
                    s_cross[i] >= t2
                };
                let calls_ok = o.verifier_called == (s == t1);
                mismatches += usize::from(o.predicted != expect || !calls_ok);
                checks += 1;
            }
        }
    }
    for t2 in unit_grid(21) {
        let res = batch_detect(&cases, &DetectorConfig::new(f64::NEG_INFINITY, t2, 1.0), None).unwrap();
        if res.t_star != f64::INFINITY || res.realized_call_fraction != 1.0 {
            mismatches += 1;
        }
        for (i, o) in res.outcomes.iter().enumerate() {
            mismatches += usize::from(o.predicted != (s_cross[i] >= t2) || !o.verifier_called);
            checks += 1;
        }
    }
    (mismatches == 0, format!("{mismatches} mismatches in {checks} outcome comparisons on 500 cases"))
}

fn mpd_batch(cases: &[QuestionCase]) -> ScoredBatch {
    ScoredBatch::from_cases(cases, MetricName::MpdSelf, MetricName::MpdCross, &MetricParams::default()).unwrap()
}

/// Validation frontier area and test AUROC of the frontier's combinations.
fn band_aucs(val: &ScoredBatch, test: &ScoredBatch, p: f64) -> (f64, f64) {
    let grid = unit_grid(51);
    let pts = band_points(val, &grid, &grid, p, Some(val.calibrator())).unwrap();
    let band = RocBand::new(pts, DEFAULT_BIN_WIDTH).unwrap();
    let test_auc = test_band_auc(test, &band.frontier, p, Some(val.calibrator())).unwrap();
    (band.frontier_area(), test_auc)
}

fn band_protocol() -> Outcome {
    let cases = synthetic_cases(400, 50, WorldConfig::default());
    let b = mpd_batch(&cases);
    let mut same_worst = f64::INFINITY;
    for p in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let (val, test) = band_aucs(&b, &b, p);
        same_worst = same_worst.min(test - val);
    }
    let same_ok = same_worst >= -1e-12;

    let runs = 100u64;
    let held: Vec<bool> = (0..runs)
        .map(|seed| {
            let all = synthetic_cases(800, 1000 + seed, WorldConfig::default());
            let (val_cases, test_cases) = all.split_at(400);
            let (vb, tb) = (mpd_batch(val_cases), mpd_batch(test_cases));
            let labels = common::labels(val_cases);
            let pos = labels.iter().filter(|&&l| l).count();
            let eps = hoeffding_epsilon(51, 51, labels.len() - pos, pos).unwrap().epsilon;
            let (val, test) = band_aucs(&vb, &tb, 0.5);
            test >= val - 2.0 * eps
        })
        .collect();
    let frac = held.iter().filter(|&&h| h).count() as f64 / runs as f64;
    (
        same_ok && frac >= 0.95,
        format!("same-set margin {same_worst:.2e}; disjoint 400/400 bound held in {:.0}% of {runs} runs", frac * 100.0),
    )
}

fn directional_verifier_gain() -> Outcome {
    let start = Instant::now();
    let config = WorldConfig {
        atoms: 4,
        verifier: VerifierConfig {
            strength: 0.9,
            concentration: 0.1,
        },
        ..Default::default()
    };
    let mut details = Vec::new();
    let mut pass = true;
    for seed in 0..3u64 {
        // 500 test questions, 500 further questions of the same world for validation
        let all = synthetic_cases(1000, seed, config);
        let (test_cases, val_cases) = all.split_at(500);
        let (tb, vb) = (mpd_batch(test_cases), mpd_batch(val_cases));
        let curve: Vec<f64> = (0..=10).map(|k| band_aucs(&vb, &tb, k as f64 / 10.0).1).collect();
        let gain: Vec<(f64, f64)> = curve.iter().enumerate().map(|(k, &a)| (k as f64 / 10.0, a)).collect();
        let argmax = (0..curve.len()).fold(0, |b, k| if curve[k] > curve[b] { k } else { b });
        let monotone = curve[..=argmax].windows(2).all(|w| w[1] >= w[0]);
        let g = min_p_for_gain(&gain, 70.0).unwrap();
        let lift = curve[10] - curve[0];
        let ok = lift >= 0.03 && monotone && !g.no_gain && g.p_alpha <= 0.5;
        pass &= ok;
        details.push(format!(
            "seed {seed}: lift {lift:.3}, p(70%) {:.1}, rises to max at p={:.1}: {monotone}",
            g.p_alpha,
            argmax as f64 / 10.0
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(120);
    (pass, format!("{}; {elapsed:.2?}", details.join("; ")))
}

fn gcn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let mut worst_grad: f64 = 0.0;
    let mut checked = 0;
    let mut draw = 0u64;
    while checked < 50 {
        draw += 1;
        let m = rng.random_range(2..=8);
        let s = common::random_self(&mut rng, m);
        let c = rng.random_bool(0.5).then(|| common::random_cross(&mut rng, m));
        let g = build_graph(&s, c.as_ref()).unwrap();
        let p = GcnParams::xavier(rng.random_range(2..=16), draw);
        if activation_margin(&p, &g) < 1e-3 {
            continue;
        }
        worst_grad = worst_grad.max(common::gradient_check(&p, &g, rng.random_bool(0.5), 1e-5));
        checked += 1;
    }

    let mut worst_perm: f64 = 0.0;
    for k in 0..50u64 {
        let m = 2 + (k as usize) % 7;
        let s = common::random_self(&mut rng, m);
        let c = common::random_cross(&mut rng, m);
        let g = build_graph(&s, (k % 2 == 0).then_some(&c)).unwrap();
        let n = g.n_nodes();
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let a = g.adjacency();
        let pg = xcheck_core::gcn::ConsistencyGraph::from_adjacency(
            Matrix::from_fn(n, n, |i, j| a[(perm[i], perm[j])]),
            &perm.iter().map(|&i| g.node_features()[(i, 2)] == 1.0).collect::<Vec<_>>(),
        )
        .unwrap();
        let params = GcnParams::xavier(16, k);
        worst_perm = worst_perm.max((gcn_forward(&params, &g) - gcn_forward(&params, &pg)).abs());
    }

    let cases = common::mpd_sufficient_cases(2000, 61, 0.03);
    let labels = common::labels(&cases);
    let split_seed = 62;
    let (_, _, test_idx) = stratified_split(&labels, split_seed);
    let test_scores: Vec<f64> = test_idx.iter().map(|&i| mpd(cases[i].p_self.as_ref().unwrap())).collect();
    let test_labels: Vec<bool> = test_idx.iter().map(|&i| labels[i]).collect();
    let mpd_auc = auroc(&test_scores, &test_labels).unwrap();
    let ceiling = ceiling_estimate(&cases, false, split_seed, &TrainConfig::default()).unwrap();
    let gap = (ceiling.auroc - mpd_auc).abs();
    (
        worst_grad <= 1e-4 && worst_perm <= 1e-12 && gap <= 0.02,
        format!(
            "gradient rel err {worst_grad:.2e}, permutation {worst_perm:.2e}, ceiling {:.4} vs mpd {mpd_auc:.4}",
            ceiling.auroc
        ),
    )
}

fn cost_model() -> Outcome {
    let profiles = builtin_profiles();
    let mut exact = true;
    for t in &profiles {
        for v in &profiles {
            for k in 0..=20 {
                let p = k as f64 / 20.0;
                let c = relative_additional_cost(p, t, v).unwrap();
                let direct = p * v.n_params / t.n_params;
                exact &= (c - direct).abs() <= 2.0 * f64::EPSILON * direct.max(1.0);
            }
        }
    }
    let t = find_profile(&profiles, "Llama-2-13b-chat").unwrap();
    let v = find_profile(&profiles, "Llama-2-70b-chat-hf").unwrap();
    let example = relative_additional_cost(0.865, t, v).unwrap();
    exact &= (example - 4.658).abs() < 1e-3;

    let linear: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64 / 10.0, 0.6 + 0.02 * k as f64)).collect();
    let concave = [(0.0, 0.60), (0.1, 0.66), (0.2, 0.70), (0.3, 0.72), (0.4, 0.73), (0.5, 0.74), (1.0, 0.75)];
    let hump = [(0.0, 0.70), (0.25, 0.76), (0.5, 0.80), (0.75, 0.78), (1.0, 0.74)];
    // hand enumeration: smallest p whose gain reaches alpha% of the maximum gain
    let fixtures: [GainFixture; 7] = [
        (&linear, 50.0, 0.5),
        (&linear, 95.0, 1.0),
        (&concave, 60.0, 0.2),
        (&concave, 80.0, 0.3),
        (&concave, 90.0, 0.5),
        (&hump, 100.0, 0.5),
        (&hump, 50.0, 0.25),
    ];
    let gains_ok = fixtures
        .iter()
        .all(|(curve, alpha, want)| min_p_for_gain(curve, *alpha).unwrap().p_alpha == *want);
    let flat = min_p_for_gain(&[(0.0, 0.7), (0.5, 0.7), (1.0, 0.69)], 90.0).unwrap();

    let configured = entailment_term_ratio(10, 512.0, 4096.0, 0.9e9, 46.7e9).unwrap();
    let (worst_name, worst) = max_entailment_ratio(10, &builtin_entailment_profile(), &profiles)
        .unwrap()
        .unwrap();
    let ratio_ok = configured <= 0.087 && worst <= 0.087;
    (
        exact && gains_ok && flat.no_gain && flat.p_alpha == 0.0 && ratio_ok,
        format!(
            "cost exact: {exact}, 0.865·70/13 = {example:.4}; p(alpha) fixtures: {gains_ok}; entailment ratio {configured:.4} (configured), {worst:.4} ({worst_name})"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("metric oracle equivalence", metric_oracles),
        ("geometry identities", geometry_identities),
        ("AUROC/AURAC oracles", ranking_oracles),
        ("generalization bound", theorem_bound),
        ("two-stage degenerations", detector_degenerations),
        ("band protocol sanity", band_protocol),
        ("directional verifier gain", directional_verifier_gain),
        ("GCN ceiling oracle", gcn_oracle),
        ("cost model", cost_model),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(run)) {
            Ok(r) => r,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        common::print_criterion(name, pass, &detail);
        failed += usize::from(!pass);
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
