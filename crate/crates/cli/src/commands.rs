use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use xcheck_core::cost::{builtin_profiles, find_profile, min_p_for_gain, relative_additional_cost};
use xcheck_core::detector::batch_detect;
use xcheck_core::evaluation::{
    aurac, auroc, band_points, hoeffding_epsilon, roc_area, select_frontier, test_band_points, unit_grid,
};
use xcheck_core::metrics::{metric_value, score_case};
use xcheck_core::synth::{gen_world, VerifierConfig};
use xcheck_core::{DetectorConfig, MetricName, MetricParams, QuestionCase, SamplingConfig, ScoredBatch, WorldConfig};
use xcheck_io::{EndpointConfig, EntailClient, GenerationClient, HttpEndpoint, MatrixCache, Pipeline};

use crate::args::{CostArgs, DetectArgs, EvaluateArgs, GridKind, MetricArgs, PipelineArgs, ScoreArgs, SynthArgs};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;
use crate::svg;

fn require<'a, T>(value: &'a Option<T>, flag: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| CliError::Usage(format!("missing required flag --{flag}")))
}

fn parse_metric(name: &str) -> Result<MetricName> {
    name.parse().map_err(|e: xcheck_core::Error| CliError::Usage(e.to_string()))
}

fn metric_params(a: &MetricArgs) -> MetricParams {
    MetricParams {
        theta: a.theta,
        eig_threshold: a.eig_threshold,
    }
}

fn load(path: &Path) -> Result<Vec<QuestionCase>> {
    xcheck_io::load_cases(path).map_err(|e| match e {
        xcheck_io::IoError::Parse { .. } | xcheck_io::IoError::MissingField { .. } => {
            CliError::Data(format!("{}: {e}", path.display()))
        }
        other => other.into(),
    })
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    xcheck_io::write_atomic(path, bytes).map_err(CliError::from)
}

fn write_manifest(manifest: &RunManifest) -> Result<()> {
    manifest.write(&RunManifest::default_path(&manifest.output_paths[0]))
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Data(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::Data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let out = require(&a.out, "out")?;
    let cfg = WorldConfig {
        n_questions: a.n,
        atoms: a.atoms,
        concentration: a.concentration,
        kernel_noise: a.sigma,
        intra_entail: a.intra,
        inter_entail: a.inter,
        verifier: VerifierConfig {
            strength: a.verifier_strength,
            concentration: a.verifier_concentration,
        },
    };
    let world = gen_world(&cfg, a.seed)?;
    let cases: Vec<QuestionCase> = world.sample_all(a.m, a.replicate)?.into_iter().map(|w| w.case).collect();
    write_output(out, &xcheck_io::jsonl::to_jsonl(&cases)?)?;
    write_manifest(&RunManifest::new("synth", a, a.seed, &[], std::slice::from_ref(out))?)
}

pub fn score(a: &ScoreArgs) -> Result<()> {
    let input = require(&a.input, "in")?;
    let out = require(&a.out, "out")?;
    let metric = match (parse_metric(&a.metric)?, a.lambda) {
        (MetricName::Combined { .. }, Some(lambda)) => MetricName::combined(lambda)?,
        (_, Some(_)) => return Err(CliError::Usage("--lambda applies only to the combined metric".into())),
        (m, None) => m,
    };
    let params = metric_params(&a.metric_params);
    let cases = load(input)?;
    let rows = cases
        .iter()
        .map(|c| {
            let r = score_case(c, metric, &params)?;
            Ok(vec![r.question_id, r.metric_name, r.value.to_string()])
        })
        .collect::<Result<Vec<_>>>()?;
    write_output(out, &csv_bytes(&["question_id", "metric", "value"], &rows)?)?;
    write_manifest(&RunManifest::new("score", a, 0, &[input], std::slice::from_ref(out))?)
}

pub fn detect(a: &DetectArgs, log: &mut dyn Write) -> Result<()> {
    let input = require(&a.input, "in")?;
    let out = require(&a.out, "out")?;
    let cfg = DetectorConfig {
        t1: a.t1,
        t2: a.t2,
        p: a.p,
        self_metric: parse_metric(&a.self_metric)?,
        cross_metric: parse_metric(&a.cross_metric)?,
        params: metric_params(&a.metric_params),
    };
    let cases = load(input)?;
    let calibration = match &a.calibration {
        Some(path) => Some(
            load(path)?
                .iter()
                .map(|c| metric_value(c, cfg.self_metric, &cfg.params))
                .collect::<xcheck_core::Result<Vec<f64>>>()?,
        ),
        None => None,
    };
    let result = batch_detect(&cases, &cfg, calibration.as_deref())?;
    write_output(out, &xcheck_io::jsonl::to_jsonl(&result.outcomes)?)?;
    let _ = writeln!(
        log,
        "verifier calls: {}/{} (realized call fraction {}), t* = {}",
        result.verifier_calls(),
        result.outcomes.len(),
        result.realized_call_fraction,
        result.t_star
    );
    let mut inputs: Vec<&Path> = vec![input];
    if let Some(c) = &a.calibration {
        inputs.push(c);
    }
    write_manifest(&RunManifest::new("detect", a, 0, &inputs, std::slice::from_ref(out))?)
}

fn threshold_grid(kind: GridKind, scores: impl Iterator<Item = f64>, n: usize) -> Vec<f64> {
    match kind {
        GridKind::Unit => unit_grid(n),
        GridKind::Data => {
            let (lo, hi) = scores.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s), hi.max(s)));
            if !lo.is_finite() || n <= 1 || lo == hi {
                return if lo.is_finite() { vec![lo] } else { unit_grid(n) };
            }
            (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
        }
    }
}

fn first_unlabeled(cases: &[QuestionCase], path: &Path) -> Result<()> {
    match cases.iter().find(|c| c.label.is_none()) {
        Some(c) => Err(CliError::Data(format!("{}: question {} has no label", path.display(), c.id))),
        None => Ok(()),
    }
}

fn class_counts(labels: &[Option<bool>]) -> (usize, usize) {
    let pos = labels.iter().filter(|l| **l == Some(true)).count();
    (labels.len() - pos, pos)
}

/// One row of the evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetRow {
    pub p: f64,
    pub val_frontier_auroc: f64,
    pub test_band_auroc: f64,
    pub mean_test_call_fraction: f64,
    pub frontier_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerSummary {
    pub metric: String,
    pub auroc: f64,
    pub aurac: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_val: usize,
    pub n_test: usize,
    pub grid_sizes: (usize, usize),
    pub bin_width: f64,
    pub epsilon: f64,
    pub confidence: f64,
    pub self_scorer: ScorerSummary,
    pub cross_scorer: Option<ScorerSummary>,
    pub budgets: Vec<BudgetRow>,
}

fn band_file(prefix: &Path, p: f64) -> PathBuf {
    PathBuf::from(format!("{}_band_p{p}.csv", prefix.display()))
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", prefix.display()))
}

pub fn evaluate(a: &EvaluateArgs, log: &mut dyn Write) -> Result<()> {
    let val_path = require(&a.val, "val")?;
    let test_path = require(&a.test, "test")?;
    let prefix = require(&a.out_prefix, "out-prefix")?;
    if a.p.is_empty() {
        return Err(CliError::Usage("--p needs at least one budget".into()));
    }
    if let Some(p) = a.p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(CliError::Usage(format!("budget {p} not in [0, 1]")));
    }
    if a.grid_t1 == 0 || a.grid_t2 == 0 {
        return Err(CliError::Usage("grid sizes must be positive".into()));
    }
    let self_metric = parse_metric(&a.self_metric)?;
    let cross_metric = parse_metric(&a.cross_metric)?;
    let params = metric_params(&a.metric_params);
    let val_cases = load(val_path)?;
    let test_cases = load(test_path)?;
    first_unlabeled(&val_cases, val_path)?;
    first_unlabeled(&test_cases, test_path)?;
    let val = ScoredBatch::from_cases(&val_cases, self_metric, cross_metric, &params)?;
    let test = ScoredBatch::from_cases(&test_cases, self_metric, cross_metric, &params)?;
    let g1 = threshold_grid(a.grid, val.s_self.iter().copied(), a.grid_t1);
    let g2 = threshold_grid(a.grid, val.s_cross.iter().flatten().copied(), a.grid_t2);
    let cal = val.calibrator();

    let mut outputs = Vec::new();
    let mut budgets = Vec::new();
    let mut series = Vec::new();
    for &p in &a.p {
        let points = band_points(&val, &g1, &g2, p, Some(cal))?;
        let frontier = select_frontier(&points, a.bin_width)?;
        let val_area = roc_area(frontier.values().map(|q| (q.p_fa, q.p_d)));
        let test_points = test_band_points(&test, &frontier, p, Some(cal))?;
        let test_area = roc_area(test_points.iter().map(|q| (q.p_fa, q.p_d)));
        let mut fractions = 0.0;
        for f in frontier.values() {
            fractions += test.detect(f.t1, f.t2, p, Some(cal))?.realized_call_fraction;
        }
        let rows: Vec<Vec<String>> = test_points
            .iter()
            .map(|q| vec![q.p_fa.to_string(), q.p_d.to_string(), q.t1.to_string(), q.t2.to_string()])
            .collect();
        let path = band_file(prefix, p);
        write_output(&path, &csv_bytes(&["x", "y", "t1", "t2"], &rows)?)?;
        outputs.push(path);
        series.push(svg::Series {
            label: format!("p = {p}: {test_area:.4}"),
            points: test_points.iter().map(|q| (q.p_fa, q.p_d)).collect(),
        });
        let _ = writeln!(log, "p = {p}: validation frontier AUROC {val_area}, test band AUROC {test_area}");
        budgets.push(BudgetRow {
            p,
            val_frontier_auroc: val_area,
            test_band_auroc: test_area,
            mean_test_call_fraction: fractions / frontier.len() as f64,
            frontier_size: frontier.len(),
        });
    }

    let test_labels: Vec<bool> = test.labels.iter().map(|l| l.expect("checked above")).collect();
    let self_scorer = ScorerSummary {
        metric: self_metric.describe(&params),
        auroc: auroc(&test.s_self, &test_labels)?,
        aurac: aurac(&test.s_self, &test_labels)?,
    };
    let cross_scores: Option<Vec<f64>> = test.s_cross.iter().copied().collect();
    let cross_scorer = match cross_scores {
        Some(s) if !s.is_empty() => Some(ScorerSummary {
            metric: cross_metric.describe(&params),
            auroc: auroc(&s, &test_labels)?,
            aurac: aurac(&s, &test_labels)?,
        }),
        _ => None,
    };
    let (n_neg, n_pos) = class_counts(&val.labels);
    let bound = hoeffding_epsilon(g1.len(), g2.len(), n_neg, n_pos)?;
    let report = EvaluationReport {
        n_val: val.len(),
        n_test: test.len(),
        grid_sizes: (g1.len(), g2.len()),
        bin_width: a.bin_width,
        epsilon: bound.epsilon,
        confidence: bound.confidence,
        self_scorer,
        cross_scorer,
        budgets,
    };

    let rows: Vec<Vec<String>> = report
        .budgets
        .iter()
        .map(|b| {
            vec![
                b.p.to_string(),
                b.val_frontier_auroc.to_string(),
                b.test_band_auroc.to_string(),
                b.mean_test_call_fraction.to_string(),
                b.frontier_size.to_string(),
            ]
        })
        .collect();
    let report_csv = suffixed(prefix, "_report.csv");
    write_output(
        &report_csv,
        &csv_bytes(
            &["p", "val_frontier_auroc", "test_band_auroc", "mean_test_call_fraction", "frontier_size"],
            &rows,
        )?,
    )?;
    let report_json = suffixed(prefix, "_report.json");
    let mut json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::Data(e.to_string()))?;
    json.push(b'\n');
    write_output(&report_json, &json)?;
    outputs.insert(0, report_json);
    outputs.insert(0, report_csv);
    if a.svg {
        let path = suffixed(prefix, "_roc.svg");
        write_output(&path, svg::roc_plot("test operating points", &series).as_bytes())?;
        outputs.push(path);
    }
    let manifest = RunManifest::new("evaluate", a, 0, &[val_path, test_path], &outputs)?;
    manifest.write(&suffixed(prefix, ".manifest.json"))
}

#[derive(Deserialize)]
struct CurveRow {
    p: f64,
    auroc: f64,
}

pub fn read_curve(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let curve = reader
        .deserialize::<CurveRow>()
        .map(|r| r.map(|row| (row.p, row.auroc)))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if !curve.iter().any(|&(p, _)| p == 0.0) {
        return Err(CliError::Data(format!("{}: gain curve has no p = 0 row", path.display())));
    }
    Ok(curve)
}

pub fn cost(a: &CostArgs, log: &mut dyn Write) -> Result<()> {
    let curve_path = require(&a.curve, "curve")?;
    let out = require(&a.out, "out")?;
    let curve = read_curve(curve_path)?;
    let profiles = match &a.profiles {
        Some(path) => xcheck_io::load_profiles(path)?,
        None => builtin_profiles(),
    };
    let lookup = |name: &Option<String>| -> Result<Option<_>> {
        name.as_ref()
            .map(|n| {
                find_profile(&profiles, n)
                    .cloned()
                    .ok_or_else(|| CliError::Usage(format!("unknown model profile {n:?}")))
            })
            .transpose()
    };
    let pair = match (lookup(&a.target)?, lookup(&a.verifier)?) {
        (Some(t), Some(v)) => Some((t, v)),
        (None, None) => None,
        _ => return Err(CliError::Usage("--target and --verifier go together".into())),
    };
    let mut rows = Vec::new();
    for &alpha in &a.alpha {
        let g = min_p_for_gain(&curve, alpha)?;
        let relative = match &pair {
            Some((t, v)) => relative_additional_cost(g.p_alpha, t, v)?.to_string(),
            None => String::new(),
        };
        let _ = writeln!(log, "alpha {alpha}: p = {}, delta_max = {}", g.p_alpha, g.delta_max);
        rows.push(vec![
            alpha.to_string(),
            g.p_alpha.to_string(),
            g.delta_max.to_string(),
            g.no_gain.to_string(),
            relative,
        ]);
    }
    write_output(
        out,
        &csv_bytes(&["alpha", "p_alpha", "delta_max", "no_gain", "relative_cost"], &rows)?,
    )?;
    let mut inputs: Vec<&Path> = vec![curve_path];
    if let Some(p) = &a.profiles {
        inputs.push(p);
    }
    write_manifest(&RunManifest::new("cost", a, 0, &inputs, std::slice::from_ref(out))?)
}

fn endpoint(url: &str, model: &str, key_env: &str, a: &PipelineArgs) -> Result<HttpEndpoint> {
    let cfg = EndpointConfig {
        base_url: url.to_string(),
        model_id: model.to_string(),
        api_key_env: key_env.to_string(),
        max_in_flight: a.max_in_flight,
        timeout_ms: a.timeout_ms,
        retries: a.retries,
    };
    Ok(HttpEndpoint::new(cfg)?)
}

pub fn pipeline(a: &PipelineArgs, log: &mut dyn Write) -> Result<()> {
    let questions = require(&a.questions, "questions")?;
    let out = require(&a.out, "out")?;
    let target = GenerationClient::new(endpoint(require(&a.target_url, "target-url")?, &a.target_model, &a.target_key_env, a)?);
    let verifier = match &a.verifier_url {
        Some(url) => Some(GenerationClient::new(endpoint(url, &a.verifier_model, &a.verifier_key_env, a)?)),
        None => None,
    };
    let entail = EntailClient::new(endpoint(require(&a.entail_url, "entail-url")?, &a.entail_model, &a.entail_key_env, a)?);
    let cache = a.cache_dir.as_ref().map(MatrixCache::open).transpose()?;
    let sampling = SamplingConfig {
        tau: a.tau,
        tau_prime: a.tau_prime,
        m: a.m,
    };
    sampling.validate()?;
    let cases = load(questions)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Transport(e.to_string()))?;
    let done = runtime.block_on(
        Pipeline {
            target: &target,
            verifier: verifier.as_ref(),
            entail: &entail,
            cache: cache.as_ref(),
            sampling,
        }
        .run(cases),
    )?;
    write_output(out, &xcheck_io::jsonl::to_jsonl(&done)?)?;
    let _ = writeln!(
        log,
        "{} cases written{}",
        done.len(),
        if verifier.is_some() { "" } else { " (no verifier: p_cross absent)" }
    );
    write_manifest(&RunManifest::new("pipeline", a, 0, &[questions], std::slice::from_ref(out))?)
}
