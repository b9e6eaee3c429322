//! Budget-aware two-stage detection.
//!
//! Stage one thresholds the self-consistency score: below `t1` the answer is
//! accepted, above `t*` it is flagged. Scores in the closed band `[t1, t*]`
//! go to stage two, which thresholds the cross-consistency score at `t2`.
//! `t*` is calibrated so that roughly a fraction `p` of self scores falls in
//! the band; `p` is therefore the verifier budget.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::consistency::QuestionCase;
use crate::error::{invalid, Error, Result};
use crate::metrics::{metric_value, MetricName, MetricParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTriple<T> {
    pub t1: T,
    pub t_star: T,
    pub t2: T,
}

impl<T: Scalar> ThresholdTriple<T> {
    pub fn new(t1: T, t_star: T, t2: T) -> Result<Self> {
        if t1.is_nan() || t_star.is_nan() || t2.is_nan() {
            return Err(invalid("thresholds", "NaN threshold"));
        }
        if t1 > t_star {
            return Err(invalid("t_star", format!("t1 = {t1} exceeds t_star = {t_star}")));
        }
        Ok(Self { t1, t_star, t2 })
    }
}

/// Result of running both stages on one score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageDecision<T> {
    pub predicted: bool,
    pub verifier_called: bool,
    pub s_self: T,
    pub s_cross: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub question_id: String,
    pub predicted: bool,
    pub verifier_called: bool,
    pub s_self: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_cross: Option<f64>,
}

/// Runs the two stages. `cross_score` is invoked only for the middle band.
pub fn two_stage_decide<T: Scalar>(
    s_self: T,
    thr: &ThresholdTriple<T>,
    cross_score: impl FnOnce() -> Result<T>,
) -> Result<StageDecision<T>> {
    if s_self < thr.t1 {
        return Ok(StageDecision {
            predicted: false,
            verifier_called: false,
            s_self,
            s_cross: None,
        });
    }
    if s_self > thr.t_star {
        return Ok(StageDecision {
            predicted: true,
            verifier_called: false,
            s_self,
            s_cross: None,
        });
    }
    let s_cross = cross_score()?;
    Ok(StageDecision {
        predicted: s_cross >= thr.t2,
        verifier_called: true,
        s_self,
        s_cross: Some(s_cross),
    })
}

/// Sorted self scores for repeated `t*` calibration.
#[derive(Debug, Clone)]
pub struct TstarCalibrator<T> {
    sorted: Vec<T>,
}

impl<T: Scalar> TstarCalibrator<T> {
    pub fn new(scores: &[T]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::EmptyScores);
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(invalid("scores", "NaN score"));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        Ok(Self { sorted })
    }

    /// Upper stage-one threshold for budget `p` given lower threshold `t1`.
    ///
    /// Candidates are `t1`, every score `≥ t1`, and `+∞`. The target band
    /// mass is the largest achievable fraction not above `p` (or the tie mass
    /// at `t1` if even that exceeds `p`); the smallest candidate reaching it
    /// is returned, with `+∞` standing in when the band must cover every
    /// score `≥ t1`.
    pub fn calibrate(&self, t1: T, p: T) -> Result<T> {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(invalid("p", format!("{p} not in [0, 1]")));
        }
        if t1.is_nan() {
            return Err(invalid("t1", "NaN"));
        }
        let s = &self.sorted;
        let n = s.len();
        let lo = s.partition_point(|&x| x < t1);
        let upper = |c: T| s.partition_point(|&x| x <= c);
        let available = n - lo;
        let at_t1 = upper(t1) - lo;

        let slack = T::lit(1e-12);
        let cap = (p * T::from_count(n) + slack).floor().to_usize().unwrap_or(0).min(available);

        let target = if cap == available {
            available
        } else if cap <= at_t1 {
            at_t1
        } else {
            let v = s[lo + cap - 1];
            let through_v = upper(v) - lo;
            if through_v <= cap {
                through_v
            } else {
                (s.partition_point(|&x| x < v) - lo).max(at_t1)
            }
        };

        if at_t1 >= target {
            Ok(t1)
        } else if target == available {
            Ok(T::infinity())
        } else {
            Ok(s[lo + target - 1])
        }
    }
}

pub fn calibrate_tstar<T: Scalar>(self_scores: &[T], t1: T, p: T) -> Result<T> {
    TstarCalibrator::new(self_scores)?.calibrate(t1, p)
}

/// Detector settings. `t*` is derived from `p` per batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub t1: f64,
    pub t2: f64,
    pub p: f64,
    pub self_metric: MetricName,
    pub cross_metric: MetricName,
    pub params: MetricParams,
}

impl DetectorConfig {
    pub fn new(t1: f64, t2: f64, p: f64) -> Self {
        Self {
            t1,
            t2,
            p,
            self_metric: MetricName::MpdSelf,
            cross_metric: MetricName::MpdCross,
            params: MetricParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub outcomes: Vec<DetectionOutcome>,
    pub t_star: f64,
    pub realized_call_fraction: f64,
}

impl BatchResult {
    pub fn verifier_calls(&self) -> usize {
        self.outcomes.iter().filter(|o| o.verifier_called).count()
    }
}

/// Stage-one and (where available) stage-two scores for a batch, computed
/// once so that many threshold combinations can be replayed cheaply.
#[derive(Debug, Clone)]
pub struct ScoredBatch {
    pub ids: Vec<String>,
    pub s_self: Vec<f64>,
    pub s_cross: Vec<Option<f64>>,
    pub labels: Vec<Option<bool>>,
    calibrator: TstarCalibrator<f64>,
}

impl ScoredBatch {
    pub fn from_cases(
        cases: &[QuestionCase],
        self_metric: MetricName,
        cross_metric: MetricName,
        params: &MetricParams,
    ) -> Result<Self> {
        let scored: Vec<(f64, Option<f64>)> = cases
            .par_iter()
            .map(|case| {
                let s_self = metric_value(case, self_metric, params)?;
                let s_cross = match metric_value(case, cross_metric, params) {
                    Ok(v) => Some(v),
                    Err(Error::MissingMatrix { .. }) => None,
                    Err(e) => return Err(e),
                };
                Ok((s_self, s_cross))
            })
            .collect::<Result<_>>()?;
        let (s_self, s_cross): (Vec<f64>, Vec<Option<f64>>) = scored.into_iter().unzip();
        Ok(Self {
            ids: cases.iter().map(|c| c.id.clone()).collect(),
            calibrator: TstarCalibrator::new(&s_self)?,
            s_self,
            s_cross,
            labels: cases.iter().map(|c| c.label).collect(),
        })
    }

    pub fn for_config(cases: &[QuestionCase], cfg: &DetectorConfig) -> Result<Self> {
        Self::from_cases(cases, cfg.self_metric, cfg.cross_metric, &cfg.params)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn calibrator(&self) -> &TstarCalibrator<f64> {
        &self.calibrator
    }

    /// Runs both stages. `calibration` overrides the batch's own self-score
    /// distribution for `t*` (e.g. validation scores).
    pub fn detect(
        &self,
        t1: f64,
        t2: f64,
        p: f64,
        calibration: Option<&TstarCalibrator<f64>>,
    ) -> Result<BatchResult> {
        let t_star = calibration.unwrap_or(&self.calibrator).calibrate(t1, p)?;
        let thr = ThresholdTriple::new(t1, t_star, t2)?;
        let outcomes = (0..self.len())
            .map(|i| {
                let d = two_stage_decide(self.s_self[i], &thr, || {
                    self.s_cross[i].ok_or_else(|| Error::MissingMatrix {
                        question_id: self.ids[i].clone(),
                        matrix: "p_cross",
                    })
                })?;
                Ok(DetectionOutcome {
                    question_id: self.ids[i].clone(),
                    predicted: d.predicted,
                    verifier_called: d.verifier_called,
                    s_self: d.s_self,
                    s_cross: d.s_cross,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(finish(outcomes, t_star))
    }
}

fn finish(outcomes: Vec<DetectionOutcome>, t_star: f64) -> BatchResult {
    let calls = outcomes.iter().filter(|o| o.verifier_called).count();
    let realized_call_fraction = if outcomes.is_empty() {
        0.0
    } else {
        calls as f64 / outcomes.len() as f64
    };
    BatchResult {
        outcomes,
        t_star,
        realized_call_fraction,
    }
}

/// Scores every case, calibrates `t*` and applies both stages using the
/// cases' own cross matrices.
pub fn batch_detect(
    cases: &[QuestionCase],
    cfg: &DetectorConfig,
    calibration_scores: Option<&[f64]>,
) -> Result<BatchResult> {
    let batch = ScoredBatch::for_config(cases, cfg)?;
    let calibrator = calibration_scores.map(TstarCalibrator::new).transpose()?;
    batch.detect(cfg.t1, cfg.t2, cfg.p, calibrator.as_ref())
}

/// Like [`batch_detect`], but stage-two scores come from `cross_provider`,
/// which is called only for middle-band cases.
pub fn batch_detect_with<F>(
    cases: &[QuestionCase],
    cfg: &DetectorConfig,
    calibration_scores: Option<&[f64]>,
    mut cross_provider: F,
) -> Result<BatchResult>
where
    F: FnMut(&QuestionCase) -> Result<f64>,
{
    let s_self: Vec<f64> = cases
        .par_iter()
        .map(|c| metric_value(c, cfg.self_metric, &cfg.params))
        .collect::<Result<_>>()?;
    let t_star = match calibration_scores {
        Some(scores) => calibrate_tstar(scores, cfg.t1, cfg.p)?,
        None => calibrate_tstar(&s_self, cfg.t1, cfg.p)?,
    };
    let thr = ThresholdTriple::new(cfg.t1, t_star, cfg.t2)?;
    let outcomes = cases
        .iter()
        .zip(&s_self)
        .map(|(case, &s)| {
            let d = two_stage_decide(s, &thr, || cross_provider(case))?;
            Ok(DetectionOutcome {
                question_id: case.id.clone(),
                predicted: d.predicted,
                verifier_called: d.verifier_called,
                s_self: d.s_self,
                s_cross: d.s_cross,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(finish(outcomes, t_star))
}
