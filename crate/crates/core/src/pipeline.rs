//! End-to-end run: nominal training, conformal gating and, on an OOD verdict,
//! the GP-dPHS fallback evaluated against the vanilla GP and nominal model.

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use crate::baseline::{vanilla_gp_baseline, VanillaGp, VanillaParams};
use crate::conformal::{self, ConformalCalibration, Decision, GateReport, Scalarization};
use crate::domain::{RngSeed, SpaceTimeField, SpatialGrid, StateTrajectory};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gpdphs::{self, KernelParams, TrainConfig};
use crate::integrate::{self, IntegratorConfig};
use crate::io;
use crate::nominal::{self, NominalModel, PredictorConfig, TrainingReport};
use crate::optim::AdamConfig;
use crate::preprocess::{self, SmootherConfig};
use crate::simulate::{self, InitialProfile, RigidOscillatorParams, WaveParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestRegime {
    /// Damped string: the out-of-distribution case.
    Wave,
    /// A fresh draw of the nominal regime: the control case.
    Nominal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub nominal: RngSeed,
    pub calibration: RngSeed,
    pub test: RngSeed,
    pub observation_noise: RngSeed,
    pub sampling: RngSeed,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            nominal: RngSeed(1),
            calibration: RngSeed(2),
            test: RngSeed(3),
            observation_noise: RngSeed(4),
            sampling: RngSeed(5),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpDphsSettings {
    pub init: KernelParams,
    pub train: TrainConfig,
    /// States handed to the GP, spread evenly over the training window.
    pub n_train_states: usize,
    /// Frames skipped at both ends of the training window, where the
    /// surface derivatives are least reliable.
    pub edge_margin: usize,
    /// Posterior samples for uncertainty bands; zero disables them.
    pub ensemble_samples: usize,
    pub n_basis: usize,
}

impl Default for GpDphsSettings {
    fn default() -> Self {
        GpDphsSettings {
            init: KernelParams {
                sigma_f: 1.0,
                lengthscale: 3.0,
                damping: 0.1,
                noise_var: 1e-3,
                jitter: 1e-8,
            },
            train: TrainConfig::default(),
            n_train_states: 20,
            edge_margin: 8,
            ensemble_samples: 0,
            n_basis: gpdphs::DEFAULT_BASIS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VanillaSettings {
    pub init: VanillaParams,
    pub optimizer: AdamConfig,
}

impl Default for VanillaSettings {
    fn default() -> Self {
        VanillaSettings {
            init: VanillaParams {
                noise_var: 1e-3,
                ..VanillaParams::default()
            },
            optimizer: TrainConfig::default().optimizer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub nominal_regime: RigidOscillatorParams,
    /// Frames in the held-out nominal run used for calibration.
    pub calibration_frames: usize,
    pub predictor: PredictorConfig,
    pub wave: WaveParams,
    pub test_regime: TestRegime,
    pub observation_noise_std: f64,
    pub smoother: SmootherConfig,
    pub use_kalman: bool,
    pub gpdphs: GpDphsSettings,
    pub vanilla: VanillaSettings,
    pub split_train_fraction: f64,
    pub delta: f64,
    pub scalarization: Scalarization,
    pub seeds: Seeds,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let nominal_grid = SpatialGrid::unit(100).expect("valid grid");
        ExperimentConfig {
            nominal_regime: RigidOscillatorParams {
                angular_freq: std::f64::consts::PI,
                amplitude: 0.1,
                noise_std: 0.5,
                grid: nominal_grid,
                dt: 0.02,
                n_steps: 1999,
            },
            calibration_frames: 1500,
            predictor: PredictorConfig::new(100),
            wave: WaveParams {
                wave_speed_sq: 1.0,
                damping: 0.03,
                grid: SpatialGrid::unit(50).expect("valid grid"),
                dt: 0.02,
                n_steps: 233,
                initial_profile: InitialProfile::GaussianBump {
                    center: 0.3,
                    width: 0.12,
                    amplitude: 0.1,
                },
            },
            test_regime: TestRegime::Wave,
            observation_noise_std: 1e-3,
            smoother: SmootherConfig {
                kalman_process_var: 50.0,
                kalman_obs_var: 1e-6,
                gp_lengthscale_t: 0.2,
                gp_lengthscale_z: 0.2,
                gp_signal_var: 0.01,
                gp_noise_var: 1e-6,
                ..SmootherConfig::default()
            },
            use_kalman: true,
            gpdphs: GpDphsSettings::default(),
            vanilla: VanillaSettings::default(),
            split_train_fraction: 0.8,
            delta: 0.1,
            scalarization: Scalarization::MaxAbs,
            seeds: Seeds::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.split_train_fraction > 0.0 && self.split_train_fraction < 1.0) {
            return Err(Error::config("split_train_fraction must be in (0, 1)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta must be in (0, 1)"));
        }
        if self.predictor.n_nodes != self.nominal_regime.grid.n_nodes() {
            return Err(Error::config("predictor n_nodes must match the nominal grid"));
        }
        if self.gpdphs.n_train_states == 0 {
            return Err(Error::config("n_train_states must be >= 1"));
        }
        self.nominal_regime.validate()?;
        self.wave.validate()?;
        self.predictor.validate()?;
        self.smoother.validate()
    }
}

/// Per-time normalized errors for one forecasting method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub mse_over_time: Vec<f64>,
    pub aggregate_mse: f64,
}

impl MethodScore {
    fn new(mse_over_time: Vec<f64>) -> Self {
        let aggregate_mse = mse_over_time.iter().sum::<f64>() / mse_over_time.len().max(1) as f64;
        MethodScore {
            mse_over_time,
            aggregate_mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovered {
    pub gpdphs: KernelParams,
    pub vanilla_gp: VanillaParams,
    pub gpdphs_nlml: f64,
    pub vanilla_gp_nlml: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub verdict: Decision,
    pub flagged_fraction: f64,
    pub threshold: f64,
    pub calibration_size: usize,
    pub delta: f64,
    pub window_scores: Vec<f64>,
    pub nominal_train_rmse: f64,
    pub test_times: Vec<f64>,
    pub nominal: MethodScore,
    pub vanilla_gp: Option<MethodScore>,
    pub gpdphs: Option<MethodScore>,
    /// Share of test steps where GP-dPHS beats the vanilla GP.
    pub gpdphs_win_fraction: Option<f64>,
    pub recovered: Option<Recovered>,
}

/// Everything produced by a run, including the arrays behind the plot files.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: EvaluationReport,
    pub gate: GateReport,
    pub truth: SpaceTimeField,
    pub nominal_forecast: SpaceTimeField,
    pub vanilla_forecast: Option<SpaceTimeField>,
    pub gpdphs_forecast: Option<SpaceTimeField>,
    pub gpdphs_bands: Option<(SpaceTimeField, SpaceTimeField)>,
}

/// Per-time spatial MSE; with `normalize`, both fields are first divided by
/// the truth's largest absolute value.
pub fn mse_over_time(pred: &SpaceTimeField, truth: &SpaceTimeField, normalize: bool) -> Result<Vec<f64>> {
    if pred.grid() != truth.grid() || pred.n_times() != truth.n_times() {
        return Err(Error::dim("prediction and truth are on different grids"));
    }
    let tol = 1e-9 * truth.times().last().map_or(1.0, |t| t.abs().max(1.0));
    if pred.times().iter().zip(truth.times()).any(|(a, b)| (a - b).abs() > tol) {
        return Err(Error::dim("prediction and truth have different time stamps"));
    }
    let scale = if normalize {
        let m = truth.values().amax();
        if m > 0.0 {
            m
        } else {
            1.0
        }
    } else {
        1.0
    };
    let diff = (pred.values() - truth.values()) / scale;
    Ok(diff.row_iter().map(|r| r.norm_squared() / r.len() as f64).collect())
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

/// Runs the full flow described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    stage("config", cfg.validate())?;
    let exec = Exec::default();

    let reference = fit_reference(cfg)?;
    let (model, calib) = (&reference.model, &reference.calibration);
    let (truth, observed) = stage("simulate_test", observe_test_regime(cfg))?;
    let nominal_grid = cfg.nominal_regime.grid;
    let gate = stage("gate", gate_observation(model, calib, &observed, cfg.scalarization))?;

    let n_frames = observed.n_times();
    let n_train = ((n_frames as f64) * cfg.split_train_fraction).round() as usize;
    if n_train < cfg.predictor.history_h || n_train + 1 >= n_frames {
        return Err(Error::config("train/test split leaves no room for forecasting").at_stage("split"));
    }
    let horizon = n_frames - n_train;
    let test_truth = stage("split", truth.slice_frames(n_train, n_frames))?;

    let nominal_forecast = stage(
        "nominal_forecast",
        nominal_forecast(model, &observed, &nominal_grid, n_train, horizon),
    )?;
    let nominal_score = MethodScore::new(stage(
        "evaluate",
        mse_over_time(&nominal_forecast, &test_truth, true),
    )?);

    let mut report = EvaluationReport {
        verdict: gate.verdict,
        flagged_fraction: gate.flagged_fraction,
        threshold: calib.threshold(),
        calibration_size: calib.scores().len(),
        delta: calib.delta(),
        window_scores: gate.scores.clone(),
        nominal_train_rmse: reference.training.train_rmse,
        test_times: test_truth.times().to_vec(),
        nominal: nominal_score,
        vanilla_gp: None,
        gpdphs: None,
        gpdphs_win_fraction: None,
        recovered: None,
    };
    let mut out = ExperimentOutput {
        report: report.clone(),
        gate: gate.clone(),
        truth: test_truth.clone(),
        nominal_forecast,
        vanilla_forecast: None,
        gpdphs_forecast: None,
        gpdphs_bands: None,
    };
    if gate.verdict == Decision::InDistribution {
        return Ok(out);
    }

    let train_field = stage("preprocess", observed.slice_frames(0, n_train))?;
    let (train_traj, x0) = stage("preprocess", physics_training_data(cfg, &train_field))?;
    let t0 = train_field.times()[n_train - 1];
    let grid = *observed.grid();
    let icfg = IntegratorConfig::new(cfg.wave.dt, horizon);

    let dphs = stage(
        "train_gpdphs",
        gpdphs::train(&train_traj, cfg.gpdphs.init, &cfg.gpdphs.train, exec),
    )?;
    let dphs_traj = stage("integrate_gpdphs", integrate::integrate(&dphs, &x0, t0, &grid, &icfg))?;
    let dphs_forecast = stage("integrate_gpdphs", forecast_field(&dphs_traj))?;

    let vanilla = stage(
        "train_vanilla_gp",
        vanilla_gp_baseline(&train_traj, cfg.vanilla.init, &cfg.vanilla.optimizer),
    )?;
    let vanilla_traj = stage("integrate_vanilla_gp", integrate::integrate(&vanilla, &x0, t0, &grid, &icfg))?;
    let vanilla_forecast = stage("integrate_vanilla_gp", forecast_field(&vanilla_traj))?;

    if cfg.gpdphs.ensemble_samples > 0 {
        let samples: Vec<_> = stage(
            "ensemble",
            (0..cfg.gpdphs.ensemble_samples)
                .map(|r| dphs.sample_field(cfg.seeds.sampling.fork(r as u64), cfg.gpdphs.n_basis))
                .collect::<Result<Vec<_>>>(),
        )?;
        let trajs = stage("ensemble", integrate::integrate_ensemble(&samples, &x0, t0, &grid, &icfg, exec))?;
        let fields = stage("ensemble", trajs.iter().map(forecast_field).collect::<Result<Vec<_>>>())?;
        out.gpdphs_bands = Some(stage("ensemble", integrate::ensemble_bands(&fields))?);
    }

    let dphs_score = MethodScore::new(stage("evaluate", mse_over_time(&dphs_forecast, &test_truth, true))?);
    let vanilla_score = MethodScore::new(stage("evaluate", mse_over_time(&vanilla_forecast, &test_truth, true))?);
    let wins = dphs_score
        .mse_over_time
        .iter()
        .zip(&vanilla_score.mse_over_time)
        .filter(|(a, b)| a < b)
        .count();
    report.gpdphs_win_fraction = Some(wins as f64 / horizon as f64);
    report.recovered = Some(Recovered {
        gpdphs: *dphs.params(),
        vanilla_gp: *vanilla.params(),
        gpdphs_nlml: dphs.nlml(),
        vanilla_gp_nlml: vanilla.nlml(),
    });
    report.gpdphs = Some(dphs_score);
    report.vanilla_gp = Some(vanilla_score);
    out.report = report;
    out.gpdphs_forecast = Some(dphs_forecast);
    out.vanilla_forecast = Some(vanilla_forecast);
    Ok(out)
}

/// Nominal model trained on the reference regime with its conformal threshold.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    pub model: NominalModel,
    pub training: TrainingReport,
    pub calibration: ConformalCalibration,
}

/// Simulates the reference regime twice (training and held-out calibration
/// runs), fits the nominal model and calibrates it.
pub fn fit_reference(cfg: &ExperimentConfig) -> Result<ReferenceModel> {
    let d0 = stage("simulate_nominal", simulate::simulate_rigid(&cfg.nominal_regime, cfg.seeds.nominal))?;
    let (model, training) = stage(
        "train_nominal",
        nominal::train_nominal(&d0, &cfg.predictor, cfg.split_train_fraction),
    )?;
    let calib_params = RigidOscillatorParams {
        n_steps: cfg.calibration_frames.saturating_sub(1).max(1),
        ..cfg.nominal_regime.clone()
    };
    let calib_field = stage("calibrate", simulate::simulate_rigid(&calib_params, cfg.seeds.calibration))?;
    let scores = stage(
        "calibrate",
        conformal::calibration_scores(&model, &calib_field, cfg.scalarization),
    )?;
    let calibration = stage("calibrate", conformal::calibrate(&scores, cfg.delta))?;
    Ok(ReferenceModel {
        model,
        training,
        calibration,
    })
}

/// Ground truth and the observation of the test regime. A nominal draw is
/// already an observation of the reference distribution and gets no extra noise.
pub fn observe_test_regime(cfg: &ExperimentConfig) -> Result<(SpaceTimeField, SpaceTimeField)> {
    match cfg.test_regime {
        TestRegime::Wave => {
            let truth = simulate::simulate_wave(&cfg.wave)?;
            let observed =
                simulate::add_observation_noise(&truth, cfg.observation_noise_std, cfg.seeds.observation_noise)?;
            Ok((truth, observed))
        }
        TestRegime::Nominal => {
            let params = RigidOscillatorParams {
                n_steps: cfg.wave.n_steps,
                ..cfg.nominal_regime.clone()
            };
            let draw = simulate::simulate_rigid(&params, cfg.seeds.test)?;
            Ok((draw.clone(), draw))
        }
    }
}

/// Gates `observed` after mapping it onto the model's node count.
pub fn gate_observation(
    model: &NominalModel,
    calib: &ConformalCalibration,
    observed: &SpaceTimeField,
    how: Scalarization,
) -> Result<GateReport> {
    let g = observed.grid();
    let target = SpatialGrid::new(model.config().n_nodes, g.z_min(), g.z_max())?;
    conformal::gate_trajectory(model, &observed.resample(&target)?, calib, how)
}

/// Nominal rollout from the last `h` observed training frames, mapped back to
/// the observation grid.
fn nominal_forecast(
    model: &NominalModel,
    observed: &SpaceTimeField,
    nominal_grid: &SpatialGrid,
    n_train: usize,
    horizon: usize,
) -> Result<SpaceTimeField> {
    let h = model.config().history_h;
    let on_grid = observed.resample(nominal_grid)?;
    let history = on_grid.values().rows(n_train - h, h).into_owned();
    let rolled = model.rollout(&history, horizon)?;
    let times = observed.times()[n_train..].to_vec();
    SpaceTimeField::new(*nominal_grid, times, rolled)?.resample(observed.grid())
}

/// Drops the initial state, which duplicates the last training frame.
fn forecast_field(traj: &StateTrajectory) -> Result<SpaceTimeField> {
    let s = integrate::predict_deflection(traj)?;
    s.slice_frames(1, s.n_times())
}

/// Up to `n_states` frame indices spread evenly over `0..n_frames`, keeping
/// `margin` frames clear at each end when there is room.
pub fn training_indices(n_frames: usize, n_states: usize, margin: usize) -> Vec<usize> {
    if n_frames == 0 || n_states == 0 {
        return Vec::new();
    }
    let margin = margin.min((n_frames - 1) / 2);
    let (lo, hi) = (margin, n_frames - 1 - margin);
    let k = n_states.min(hi - lo + 1);
    if k == 1 {
        return vec![lo];
    }
    (0..k)
        .map(|i| lo + ((i * (hi - lo)) as f64 / (k - 1) as f64).round() as usize)
        .collect()
}

/// Smoothed derivative data for the GP models and the forecast start state.
fn physics_training_data(
    cfg: &ExperimentConfig,
    train_field: &SpaceTimeField,
) -> Result<(StateTrajectory, crate::domain::StateSnapshot)> {
    let smoothed = if cfg.use_kalman {
        preprocess::kalman_smooth(train_field, &cfg.smoother)?
    } else {
        train_field.clone()
    };
    let surface = preprocess::fit_surface_gp(&smoothed, &cfg.smoother)?;
    let times: Vec<f64> = training_indices(train_field.n_times(), cfg.gpdphs.n_train_states, cfg.gpdphs.edge_margin)
        .into_iter()
        .map(|i| train_field.times()[i])
        .collect();
    let traj = preprocess::estimate_derivatives(&surface, &times, train_field.grid())?;
    let last = *train_field.times().last().expect("non-empty field");
    let start = preprocess::estimate_derivatives(&surface, &[last], train_field.grid())?;
    Ok((traj, start.states[0].clone()))
}

/// Writes `report.json`, `mse_over_time.csv`, `prediction_surface.csv` and
/// `scores.csv` into `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut json = serde_json::to_string_pretty(&out.report)?;
    json.push('\n');
    std::fs::write(dir.join("report.json"), json)?;

    let r = &out.report;
    let mut header = vec!["t", "nominal"];
    if r.gpdphs.is_some() {
        header.extend(["vanilla_gp", "gpdphs"]);
    }
    let rows: Vec<Vec<f64>> = (0..r.test_times.len())
        .map(|i| {
            let mut row = vec![r.test_times[i], r.nominal.mse_over_time[i]];
            if let (Some(v), Some(g)) = (&r.vanilla_gp, &r.gpdphs) {
                row.extend([v.mse_over_time[i], g.mse_over_time[i]]);
            }
            row
        })
        .collect();
    io::write_table(std::fs::File::create(dir.join("mse_over_time.csv"))?, &header, &rows)?;

    // Deflection surfaces: `s` is the selected forecast (GP-dPHS when the
    // gate tripped, nominal otherwise) followed by the comparison columns.
    let primary = out.gpdphs_forecast.as_ref().unwrap_or(&out.nominal_forecast);
    let mut header = vec!["t", "z", "s", "truth", "nominal"];
    let mut extra: Vec<&SpaceTimeField> = vec![&out.truth, &out.nominal_forecast];
    if let Some(v) = &out.vanilla_forecast {
        header.push("vanilla_gp");
        extra.push(v);
    }
    if let Some((mean, std)) = &out.gpdphs_bands {
        header.extend(["s_mean", "s_std"]);
        extra.extend([mean, std]);
    }
    let z = primary.grid().coords();
    let rows: Vec<Vec<f64>> = (0..primary.n_times())
        .flat_map(|i| {
            let z = &z;
            let extra = &extra;
            (0..z.len()).map(move |j| {
                let mut row = vec![primary.times()[i], z[j], primary.values()[(i, j)]];
                row.extend(extra.iter().map(|f| f.values()[(i, j)]));
                row
            })
        })
        .collect();
    io::write_table(std::fs::File::create(dir.join("prediction_surface.csv"))?, &header, &rows)?;

    let rows: Vec<Vec<f64>> = out
        .gate
        .scores
        .iter()
        .zip(&out.gate.flags)
        .enumerate()
        .map(|(i, (&s, &f))| vec![i as f64, s, if f { 1.0 } else { 0.0 }, out.gate.threshold])
        .collect();
    io::write_table(
        std::fs::File::create(dir.join("scores.csv"))?,
        &["window", "score", "flagged", "threshold"],
        &rows,
    )?;
    Ok(())
}

/// Column `name` of a table written by [`write_outputs`].
pub fn read_column(path: &Path, name: &str) -> Result<Vec<f64>> {
    let (header, rows) = io::read_table(std::fs::File::open(path)?)?;
    let c = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Data(format!("no column `{name}` in {}", path.display())))?;
    Ok(rows.iter().map(|r| r[c]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn field(vals: &[f64], n: usize) -> SpaceTimeField {
        let g = SpatialGrid::unit(n).unwrap();
        let t = vals.len() / n;
        SpaceTimeField::new(g, (0..t).map(|k| k as f64).collect(), DMatrix::from_row_slice(t, n, vals)).unwrap()
    }

    #[test]
    fn mse_definitions() {
        let truth = field(&[0.0, 1.0, -2.0, 0.5, 0.1, 0.0], 3);
        assert!(mse_over_time(&truth, &truth, true).unwrap().iter().all(|&v| v == 0.0));
        let shifted = truth.with_values(truth.values().add_scalar(0.1)).unwrap();
        for v in mse_over_time(&shifted, &truth, false).unwrap() {
            assert!((v - 0.01).abs() < 1e-15);
        }
        let a = mse_over_time(&shifted, &truth, true).unwrap();
        let scale = |f: &SpaceTimeField| f.with_values(f.values() * 5.0).unwrap();
        let b = mse_over_time(&scale(&shifted), &scale(&truth), true).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
        assert!(mse_over_time(&field(&[0.0; 8], 4), &truth, false).is_err());
    }

    #[test]
    fn training_indices_are_spread_and_distinct() {
        let idx = training_indices(187, 20, 8);
        assert_eq!(idx.len(), 20);
        assert_eq!((idx[0], idx[19]), (8, 178));
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(training_indices(5, 20, 8), vec![2]);
        assert_eq!(training_indices(10, 3, 0), vec![0, 5, 9]);
        assert!(training_indices(0, 3, 0).is_empty());
    }

    #[test]
    fn config_defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let empty: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, cfg);
        let bad = ExperimentConfig {
            split_train_fraction: 1.0,
            ..cfg
        };
        assert!(bad.validate().is_err());
    }
}
