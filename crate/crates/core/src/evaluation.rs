//! Ranking metrics and the two-threshold band evaluation protocol.
//!
//! Positive class is "hallucination" (`label == true`) throughout.
//!
//! A two-threshold detector at fixed budget traces a band of `(p_FA, p_D)`
//! points over the `(t1, t2)` grid rather than a curve. The protocol picks,
//! on validation data, the best combination per `p_FA` bin (the frontier),
//! then replays only those combinations on test data and integrates the
//! resulting ROC polyline.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{ScoredBatch, TstarCalibrator};
use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;
use crate::seeds::derive_seed;

pub const DEFAULT_BIN_WIDTH: f64 = 0.02;
pub const DEFAULT_GRID_POINTS: usize = 51;

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

fn check_inputs<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(invalid(
            "labels",
            format!("{} scores but {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(invalid("scores", "NaN score"));
    }
    Ok(())
}

/// `P(score_pos > score_neg) + ½·P(tie)`, via midranks in `O(n log n)`.
pub fn auroc<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    check_inputs(scores, labels)?;
    let (positives, negatives) = class_counts(labels);
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));

    // Sum of (1-based) midranks of positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j + 1;
    }
    let np = positives as f64;
    let u = rank_sum - np * (np + 1.0) / 2.0;
    Ok(u / (np * negatives as f64))
}

/// Accuracy (fraction of non-hallucinated cases) among the `⌈X·n⌉`
/// lowest-scoring cases, for each `X` in `grid`. Ties keep input order.
pub fn rejection_accuracy_curve<T: Scalar>(
    scores: &[T],
    labels: &[bool],
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    check_inputs(scores, labels)?;
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));
    let mut correct_prefix = Vec::with_capacity(n + 1);
    correct_prefix.push(0usize);
    for &k in &order {
        correct_prefix.push(correct_prefix.last().unwrap() + usize::from(!labels[k]));
    }
    grid.iter()
        .map(|&x| {
            if !(x > 0.0 && x <= 1.0) {
                return Err(invalid("grid", format!("fraction {x} not in (0, 1]")));
            }
            // guard against 0.07 * 100 = 7.000000000000001
            let keep = ((x * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
            Ok((x, correct_prefix[keep] as f64 / keep as f64))
        })
        .collect()
}

/// The 100-point rejection grid `{0.01, …, 1.00}`.
pub fn aurac_grid() -> Vec<f64> {
    (1..=100).map(|k| k as f64 / 100.0).collect()
}

/// Trapezoidal area under the rejection-accuracy curve over
/// `X ∈ {0.01, …, 1.00}`, divided by the covered range.
pub fn aurac<T: Scalar>(scores: &[T], labels: &[bool]) -> Result<f64> {
    let curve = rejection_accuracy_curve(scores, labels, &aurac_grid())?;
    Ok(trapezoid(&curve) / (curve.last().unwrap().0 - curve[0].0))
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

/// One threshold combination and its operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub p_fa: f64,
    pub p_d: f64,
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocBand {
    pub points: Vec<RocPoint>,
    pub bin_width: f64,
    pub frontier: BTreeMap<usize, RocPoint>,
}

impl RocBand {
    pub fn new(points: Vec<RocPoint>, bin_width: f64) -> Result<Self> {
        let frontier = select_frontier(&points, bin_width)?;
        Ok(Self {
            points,
            bin_width,
            frontier,
        })
    }

    /// Area under the validation frontier (anchored at (0,0) and (1,1)).
    pub fn frontier_area(&self) -> f64 {
        roc_area(self.frontier.values().map(|p| (p.p_fa, p.p_d)))
    }
}

/// `n` evenly spaced values covering `[0, 1]`.
pub fn unit_grid(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

fn labels_of(batch: &ScoredBatch) -> Result<Vec<bool>> {
    let labels = batch
        .labels
        .iter()
        .zip(&batch.ids)
        .map(|(l, id)| {
            l.ok_or_else(|| Error::MissingLabel {
                question_id: id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (positives, negatives) = class_counts(&labels);
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabels { positives, negatives });
    }
    Ok(labels)
}

fn operating_point(
    batch: &ScoredBatch,
    labels: &[bool],
    t1: f64,
    t2: f64,
    p: f64,
    calibration: Option<&TstarCalibrator<f64>>,
) -> Result<RocPoint> {
    let result = batch.detect(t1, t2, p, calibration)?;
    let (mut fp, mut tp) = (0usize, 0usize);
    for (o, &l) in result.outcomes.iter().zip(labels) {
        if o.predicted {
            if l {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let (positives, negatives) = class_counts(labels);
    Ok(RocPoint {
        p_fa: fp as f64 / negatives as f64,
        p_d: tp as f64 / positives as f64,
        t1,
        t2,
    })
}

/// Operating points for every `(t1, t2)` in `grid_t1 × grid_t2`, in
/// row-major grid order.
pub fn band_points(
    batch: &ScoredBatch,
    grid_t1: &[f64],
    grid_t2: &[f64],
    p: f64,
    calibration: Option<&TstarCalibrator<f64>>,
) -> Result<Vec<RocPoint>> {
    let labels = labels_of(batch)?;
    let combos: Vec<(f64, f64)> = grid_t1
        .iter()
        .flat_map(|&t1| grid_t2.iter().map(move |&t2| (t1, t2)))
        .collect();
    combos
        .par_iter()
        .map(|&(t1, t2)| operating_point(batch, &labels, t1, t2, p, calibration))
        .collect()
}

/// Best combination per `p_FA` bin: highest `p_D`, then lower `p_FA`, `t1`,
/// `t2`.
pub fn select_frontier(points: &[RocPoint], bin_width: f64) -> Result<BTreeMap<usize, RocPoint>> {
    if !(bin_width > 0.0 && bin_width <= 1.0) {
        return Err(invalid("bin_width", format!("{bin_width} not in (0, 1]")));
    }
    let bins = ((1.0 / bin_width) - 1e-9).ceil().max(1.0) as usize;
    let mut frontier: BTreeMap<usize, RocPoint> = BTreeMap::new();
    for &pt in points {
        let bin = ((pt.p_fa / bin_width).floor().max(0.0) as usize).min(bins - 1);
        let better = match frontier.get(&bin) {
            None => true,
            Some(cur) => {
                let key = |q: &RocPoint| (-q.p_d, q.p_fa, q.t1, q.t2);
                key(&pt).partial_cmp(&key(cur)) == Some(std::cmp::Ordering::Less)
            }
        };
        if better {
            frontier.insert(bin, pt);
        }
    }
    Ok(frontier)
}

/// ROC polyline area: anchors (0,0) and (1,1) added, points sorted by
/// `p_FA`, duplicate `p_FA` collapsed to the largest `p_D`.
pub fn roc_area(points: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.into_iter().collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite rates"));
    let mut collapsed: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (x, y) in pts {
        match collapsed.last_mut() {
            Some(last) if last.0 == x => last.1 = last.1.max(y),
            _ => collapsed.push((x, y)),
        }
    }
    trapezoid(&collapsed)
}

/// Test operating points of the validation frontier's combinations.
pub fn test_band_points(
    test: &ScoredBatch,
    frontier: &BTreeMap<usize, RocPoint>,
    p: f64,
    calibration: Option<&TstarCalibrator<f64>>,
) -> Result<Vec<RocPoint>> {
    if frontier.is_empty() {
        return Err(invalid("frontier", "empty"));
    }
    let labels = labels_of(test)?;
    frontier
        .values()
        .map(|f| operating_point(test, &labels, f.t1, f.t2, p, calibration))
        .collect()
}

pub fn test_band_auc(
    test: &ScoredBatch,
    frontier: &BTreeMap<usize, RocPoint>,
    p: f64,
    calibration: Option<&TstarCalibrator<f64>>,
) -> Result<f64> {
    let points = test_band_points(test, frontier, p, calibration)?;
    Ok(roc_area(points.iter().map(|q| (q.p_fa, q.p_d))))
}

/// Uniform-deviation bound for threshold selection over a finite grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub epsilon: f64,
    pub confidence: f64,
    pub n_neg: usize,
    pub n_pos: usize,
    pub grid_sizes: (usize, usize),
}

/// `ε = √((ln|T1| + ln|T2|) / min(n_neg, n_pos))`, holding with probability
/// at least `(1 − 2/(|T1|·|T2|))²`.
pub fn hoeffding_epsilon(size_t1: usize, size_t2: usize, n_neg: usize, n_pos: usize) -> Result<BoundReport> {
    if size_t1 == 0 || size_t2 == 0 || n_neg == 0 || n_pos == 0 {
        return Err(invalid("counts", "grid sizes and class counts must be at least 1"));
    }
    let cells = size_t1 as f64 * size_t2 as f64;
    if cells <= 2.0 {
        return Err(invalid("grid_sizes", "|T1|·|T2| must exceed 2"));
    }
    Ok(epsilon_for(
        (size_t1 as f64).ln() + (size_t2 as f64).ln(),
        cells,
        n_neg,
        n_pos,
        (size_t1, size_t2),
    ))
}

fn epsilon_for(log_cells: f64, cells: f64, n_neg: usize, n_pos: usize, grid: (usize, usize)) -> BoundReport {
    let n_min = n_neg.min(n_pos) as f64;
    BoundReport {
        epsilon: (log_cells / n_min).sqrt(),
        confidence: (1.0 - 2.0 / cells).powi(2),
        n_neg,
        n_pos,
        grid_sizes: grid,
    }
}

/// Same formula with real-valued grid sizes (e.g. `|T| = e`).
pub fn hoeffding_epsilon_real(size_t1: f64, size_t2: f64, n_neg: usize, n_pos: usize) -> Result<BoundReport> {
    if !(size_t1 >= 1.0 && size_t2 >= 1.0) || n_neg == 0 || n_pos == 0 {
        return Err(invalid("counts", "grid sizes and class counts must be at least 1"));
    }
    let cells = size_t1 * size_t2;
    if cells <= 2.0 {
        return Err(invalid("grid_sizes", "|T1|·|T2| must exceed 2"));
    }
    Ok(epsilon_for(
        size_t1.ln() + size_t2.ln(),
        cells,
        n_neg,
        n_pos,
        (size_t1.round() as usize, size_t2.round() as usize),
    ))
}

/// Fraction of simulated validation draws in which every grid cell's
/// empirical `(p_FA, p_D)` lies within `ε` of its true value.
///
/// True rates are drawn uniformly per cell per trial; estimates are binomial
/// proportions over `n_neg` negatives and `n_pos` positives. Trials use
/// independent derived seeds, so the result does not depend on scheduling.
pub fn monte_carlo_theorem_check(
    grid_sizes: (usize, usize),
    n_neg: usize,
    n_pos: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    let eps = hoeffding_epsilon(grid_sizes.0, grid_sizes.1, n_neg, n_pos)?.epsilon;
    let cells = grid_sizes.0 * grid_sizes.1;
    let held = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, trial as u64));
            (0..cells).all(|_| {
                let p_fa: f64 = rng.random();
                let p_d: f64 = rng.random();
                let fa_hat = Binomial::new(n_neg as u64, p_fa).expect("p in [0,1)").sample(&mut rng) as f64
                    / n_neg as f64;
                let d_hat =
                    Binomial::new(n_pos as u64, p_d).expect("p in [0,1)").sample(&mut rng) as f64 / n_pos as f64;
                (fa_hat - p_fa).abs() <= eps && (d_hat - p_d).abs() <= eps
            })
        })
        .filter(|&ok| ok)
        .count();
    Ok(held as f64 / trials as f64)
}
