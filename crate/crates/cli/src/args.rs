//! Flag definitions. Field names double as config-file keys.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "xcheck", version, about = "Self- and cross-model consistency hallucination detection")]
pub struct Cli {
    /// TOML or JSON file with one table per command; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic world as cases JSONL.
    Synth(SynthArgs),
    /// Score every case with one metric (CSV question_id,metric,value).
    Score(ScoreArgs),
    /// Run budget-aware two-stage detection.
    Detect(DetectArgs),
    /// Threshold-band evaluation on validation and test cases.
    Evaluate(EvaluateArgs),
    /// Minimum verifier budget and relative cost from a gain curve.
    Cost(CostArgs),
    /// Sample answers and build matrices from live endpoints.
    Pipeline(PipelineArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Score(_) => "score",
            Command::Detect(_) => "detect",
            Command::Evaluate(_) => "evaluate",
            Command::Cost(_) => "cost",
            Command::Pipeline(_) => "pipeline",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub atoms: usize,
    /// Dirichlet concentration of the target distributions.
    #[arg(long, default_value_t = 0.5)]
    pub concentration: f64,
    /// Half-width of the uniform entailment jitter.
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.95)]
    pub intra: f64,
    #[arg(long, default_value_t = 0.05)]
    pub inter: f64,
    #[arg(long, default_value_t = 0.5)]
    pub verifier_strength: f64,
    #[arg(long, default_value_t = 0.5)]
    pub verifier_concentration: f64,
    /// Samples per model and question.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub replicate: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricArgs {
    /// Binarization threshold for semantic entropy.
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    /// Eigenvalue cut-off for Ecc.
    #[arg(long, default_value_t = 0.9)]
    pub eig_threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScoreArgs {
    #[arg(long = "in", id = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// mpd_self, mpd_cross, se, eigv, ecc, kle or combined[:lambda].
    #[arg(long, default_value = "mpd_self")]
    pub metric: String,
    /// Weight of the cross term for `combined`.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric_params: MetricArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DetectArgs {
    #[arg(long = "in", id = "in")]
    #[serde(rename = "in")]
    pub input: Option<PathBuf>,
    /// Lower self threshold; `-inf` sends everything below t* to stage two.
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.5)]
    #[serde(with = "ext_float")]
    pub t1: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.5)]
    #[serde(with = "ext_float")]
    pub t2: f64,
    /// Target fraction of questions sent to the verifier.
    #[arg(long, default_value_t = 0.5)]
    pub p: f64,
    /// Cases whose self scores calibrate t*; defaults to the input batch.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long, default_value = "mpd_self")]
    pub self_metric: String,
    #[arg(long, default_value = "mpd_cross")]
    pub cross_metric: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric_params: MetricArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    /// Evenly spaced over [0, 1].
    Unit,
    /// Evenly spaced over the range of validation scores.
    Data,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// One or more budgets, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5])]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 51)]
    pub grid_t1: usize,
    #[arg(long, default_value_t = 51)]
    pub grid_t2: usize,
    #[arg(long, value_enum, default_value_t = GridKind::Unit)]
    pub grid: GridKind,
    #[arg(long, default_value_t = 0.02)]
    pub bin_width: f64,
    #[arg(long, default_value = "mpd_self")]
    pub self_metric: String,
    #[arg(long, default_value = "mpd_cross")]
    pub cross_metric: String,
    #[command(flatten)]
    #[serde(flatten)]
    pub metric_params: MetricArgs,
    #[arg(long)]
    pub out_prefix: Option<PathBuf>,
    /// Also write an SVG plot of the test bands.
    #[arg(long, default_value_t = false)]
    pub svg: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CostArgs {
    /// CSV with columns p,auroc.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![50.0, 90.0, 95.0])]
    pub alpha: Vec<f64>,
    /// TOML or JSON model profiles; built-in table when absent.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub verifier: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    /// JSONL with at least `id` and `question` per line.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long)]
    pub target_url: Option<String>,
    #[arg(long, default_value = "target")]
    pub target_model: String,
    #[arg(long, default_value = "")]
    pub target_key_env: String,
    #[arg(long)]
    pub verifier_url: Option<String>,
    #[arg(long, default_value = "verifier")]
    pub verifier_model: String,
    #[arg(long, default_value = "")]
    pub verifier_key_env: String,
    #[arg(long)]
    pub entail_url: Option<String>,
    #[arg(long, default_value = "nli")]
    pub entail_model: String,
    #[arg(long, default_value = "")]
    pub entail_key_env: String,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value_t = 60_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 3)]
    pub retries: usize,
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tau: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau_prime: f64,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Floats that may be infinite: finite values as JSON numbers, others as
/// the strings `inf`, `-inf`.
mod ext_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.trim().parse().map_err(serde::de::Error::custom),
        }
    }
}
