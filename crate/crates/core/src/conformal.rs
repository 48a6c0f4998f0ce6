//! Split-conformal thresholding of nonconformity scores and the OOD gate.

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{RngSeed, SpaceTimeField};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::nominal::NominalModel;

/// How a window of errors is reduced to one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalarization {
    #[default]
    MaxAbs,
    Rms,
}

pub fn nonconformity_score(prediction: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<f64> {
    score_with(prediction, truth, Scalarization::MaxAbs)
}

pub fn score_with(prediction: &DMatrix<f64>, truth: &DMatrix<f64>, how: Scalarization) -> Result<f64> {
    if prediction.shape() != truth.shape() {
        return Err(Error::dim(format!(
            "prediction is {:?}, truth is {:?}",
            prediction.shape(),
            truth.shape()
        )));
    }
    let diff = prediction.iter().zip(truth.iter()).map(|(p, t)| (p - t).abs());
    Ok(match how {
        Scalarization::MaxAbs => diff.fold(0.0, f64::max),
        Scalarization::Rms => (diff.map(|d| d * d).sum::<f64>() / truth.len().max(1) as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    #[serde(rename = "ID")]
    InDistribution,
    #[serde(rename = "OOD")]
    OutOfDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoredCalibration")]
pub struct ConformalCalibration {
    scores: Vec<f64>,
    delta: f64,
    threshold: f64,
    quantile_index: usize,
}

/// On load the threshold is recomputed from the scores, so an edited file
/// cannot carry an inconsistent one.
#[derive(Deserialize)]
struct StoredCalibration {
    scores: Vec<f64>,
    delta: f64,
}

impl TryFrom<StoredCalibration> for ConformalCalibration {
    type Error = Error;

    fn try_from(s: StoredCalibration) -> Result<Self> {
        calibrate(&s.scores, s.delta)
    }
}

/// Slack for `(K+1)(1−δ)` landing a rounding error above an integer.
const LEVEL_TOL: f64 = 1e-9;

/// Fewest scores for which the corrected quantile level stays at most one.
pub fn min_calibration_size(delta: f64) -> usize {
    ((1.0 - delta) / delta - LEVEL_TOL).ceil().max(1.0) as usize
}

pub fn calibrate(scores: &[f64], delta: f64) -> Result<ConformalCalibration> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::config(format!("delta must be in (0, 1), got {delta}")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Data("calibration scores must be finite".into()));
    }
    let k = scores.len();
    let min_k = min_calibration_size(delta);
    if k < min_k {
        return Err(Error::Calibration { k, min_k, delta });
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((k as f64 + 1.0) * (1.0 - delta) - LEVEL_TOL).ceil();
    let p = (rank as usize).clamp(1, k);
    Ok(ConformalCalibration {
        threshold: sorted[p - 1],
        scores: sorted,
        delta,
        quantile_index: p,
    })
}

impl ConformalCalibration {
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// One-based rank of the threshold among the sorted scores.
    pub fn quantile_index(&self) -> usize {
        self.quantile_index
    }

    pub fn decide(&self, score: f64) -> Decision {
        if score > self.threshold {
            Decision::OutOfDistribution
        } else {
            Decision::InDistribution
        }
    }
}

/// Window start offsets for a field of `n_frames` frames.
fn window_starts(n_frames: usize, window: usize, stride: usize) -> Vec<usize> {
    if n_frames < window {
        return Vec::new();
    }
    (0..=n_frames - window).step_by(stride.max(1)).collect()
}

/// Nominal-model scores on windows taken every `stride` frames.
pub fn window_scores(
    model: &NominalModel,
    field: &SpaceTimeField,
    stride: usize,
    how: Scalarization,
) -> Result<Vec<f64>> {
    let cfg = model.config();
    let (h, w) = (cfg.history_h, cfg.horizon_w);
    let starts = window_starts(field.n_times(), h + w, stride);
    if starts.is_empty() {
        return Err(Error::Data(format!(
            "{} frames cannot hold a {}-frame window",
            field.n_times(),
            h + w
        )));
    }
    let v = field.values();
    starts
        .iter()
        .map(|&s| {
            let pred = model.predict(&v.rows(s, h).into_owned())?;
            score_with(&pred, &v.rows(s + h, w).into_owned(), how)
        })
        .collect()
}

/// Calibration scores from non-overlapping windows.
pub fn calibration_scores(model: &NominalModel, field: &SpaceTimeField, how: Scalarization) -> Result<Vec<f64>> {
    window_scores(model, field, model.config().window(), how)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub scores: Vec<f64>,
    pub flags: Vec<bool>,
    pub threshold: f64,
    pub flagged_fraction: f64,
    pub verdict: Decision,
}

/// Scores every stride-1 window; the verdict is OOD when more than half of
/// the windows are flagged.
pub fn gate_trajectory(
    model: &NominalModel,
    field: &SpaceTimeField,
    calib: &ConformalCalibration,
    how: Scalarization,
) -> Result<GateReport> {
    let scores = window_scores(model, field, 1, how)?;
    let flags: Vec<bool> = scores
        .iter()
        .map(|&s| calib.decide(s) == Decision::OutOfDistribution)
        .collect();
    let flagged = flags.iter().filter(|&&f| f).count();
    let flagged_fraction = flagged as f64 / flags.len() as f64;
    Ok(GateReport {
        verdict: if flagged_fraction > 0.5 {
            Decision::OutOfDistribution
        } else {
            Decision::InDistribution
        },
        threshold: calib.threshold(),
        scores,
        flags,
        flagged_fraction,
    })
}

/// Miscoverage rate of `calib` on fresh scores.
pub fn empirical_ood_rate(calib: &ConformalCalibration, scores: &[f64]) -> f64 {
    let flagged = scores
        .iter()
        .filter(|&&s| calib.decide(s) == Decision::OutOfDistribution)
        .count();
    flagged as f64 / scores.len().max(1) as f64
}

/// Repeats the calibrate-then-test experiment on |N(0,1)| scores and returns
/// each repetition's miscoverage rate. Repetition `r` uses stream `r` of `seed`.
pub fn coverage_experiment(
    k: usize,
    delta: f64,
    n_test: usize,
    repetitions: usize,
    seed: RngSeed,
    exec: Exec,
) -> Result<Vec<f64>> {
    exec.map_range(repetitions, |r| {
        let mut rng = seed.fork(r as u64).rng();
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z.abs()
                })
                .collect()
        };
        let calib = calibrate(&draw(k), delta)?;
        Ok(empirical_ood_rate(&calib, &draw(n_test)))
    })
    .into_iter()
    .collect()
}
