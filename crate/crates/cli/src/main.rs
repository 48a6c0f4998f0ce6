use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pnp_core::conformal::{self, ConformalCalibration, Scalarization};
use pnp_core::gpdphs::{self, GpDphsModel};
use pnp_core::integrate::{self, IntegratorConfig};
use pnp_core::nominal::{self, NominalModel, PredictorConfig};
use pnp_core::pipeline::{self, GpDphsSettings};
use pnp_core::preprocess::{self, SmootherConfig};
use pnp_core::simulate::{self, RigidOscillatorParams, WaveParams};
use pnp_core::{io, Exec, RngSeed, SpaceTimeField, SpatialGrid};

#[derive(Parser)]
#[command(name = "pnp", version, about = "Physics-informed fallback forecasting for vibrating strings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum System {
    Wave,
    Rigid,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreNorm {
    MaxAbs,
    Rms,
}

impl From<ScoreNorm> for Scalarization {
    fn from(s: ScoreNorm) -> Self {
        match s {
            ScoreNorm::MaxAbs => Scalarization::MaxAbs,
            ScoreNorm::Rms => Scalarization::Rms,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deflection field as `t,z,s` CSV.
    Simulate {
        #[arg(long, value_enum)]
        system: System,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smooth a field and estimate `(p, q)` states and their time derivatives.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the linear autoregressive reference model.
    TrainNominal {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Conformal threshold from held-out nominal data.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calib_data: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
        #[arg(long, value_enum, default_value = "max-abs")]
        score: ScoreNorm,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score sliding windows of a field and decide ID vs OOD.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "max-abs")]
        score: ScoreNorm,
        #[arg(long)]
        report: PathBuf,
    },
    /// Learn the port-Hamiltonian GP from a state trajectory.
    TrainGpdphs {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll a learned model forward from a `z,p,q` snapshot.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        steps: usize,
        /// Posterior samples; above one, `s_mean,s_std` bands are added.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = gpdphs::DEFAULT_BASIS)]
        n_basis: usize,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full experiment: gate, fall back on OOD, evaluate, write report and CSVs.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Wave parameters plus optional measurement noise drawn from `--seed`.
#[derive(Deserialize)]
struct WaveJob {
    #[serde(flatten)]
    params: WaveParams,
    #[serde(default)]
    observation_noise_std: f64,
}

#[derive(Deserialize, Default)]
struct PreprocessJob {
    #[serde(flatten)]
    smoother: SmootherConfig,
    #[serde(default = "yes")]
    use_kalman: bool,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(default)]
struct NominalJob {
    history_h: usize,
    horizon_w: usize,
    ridge_lambda: f64,
    /// Fraction of frames used for fitting; the rest yields a held-out RMSE.
    split: f64,
}

impl Default for NominalJob {
    fn default() -> Self {
        let p = PredictorConfig::new(1);
        NominalJob {
            history_h: p.history_h,
            horizon_w: p.horizon_w,
            ridge_lambda: p.ridge_lambda,
            split: 1.0,
        }
    }
}

#[derive(Serialize)]
struct TrainingSummary {
    train_rmse: f64,
    heldout_rmse: Option<f64>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_field(path: &Path) -> anyhow::Result<SpaceTimeField> {
    io::read_field_file(path).with_context(|| format!("reading {}", path.display()))
}

/// Brings `field` onto the node count a nominal model expects.
fn to_model_grid(field: SpaceTimeField, model: &NominalModel) -> anyhow::Result<SpaceTimeField> {
    let n = model.config().n_nodes;
    let g = field.grid();
    if g.n_nodes() == n {
        return Ok(field);
    }
    let target = SpatialGrid::new(n, g.z_min(), g.z_max())?;
    Ok(field.resample(&target)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate { system, config, seed, out } => {
            let field = match system {
                System::Wave => {
                    let job: WaveJob = read_json(&config)?;
                    let clean = simulate::simulate_wave(&job.params)?;
                    simulate::add_observation_noise(&clean, job.observation_noise_std, RngSeed(seed))?
                }
                System::Rigid => {
                    let params: RigidOscillatorParams = read_json(&config)?;
                    simulate::simulate_rigid(&params, RngSeed(seed))?
                }
            };
            io::write_field(create(&out)?, &field)?;
        }
        Command::Preprocess { input, config, out } => {
            let job: PreprocessJob = read_json_or_default(config.as_deref())?;
            let mut field = read_field(&input)?;
            if job.use_kalman {
                field = preprocess::kalman_smooth(&field, &job.smoother)?;
            }
            let traj = pnp_core::domain::field_to_trajectory(&field, &job.smoother)?;
            io::write_trajectory(create(&out)?, &traj)?;
        }
        Command::TrainNominal { input, config, out } => {
            let job: NominalJob = read_json_or_default(config.as_deref())?;
            let field = read_field(&input)?;
            let cfg = PredictorConfig {
                history_h: job.history_h,
                horizon_w: job.horizon_w,
                ridge_lambda: job.ridge_lambda,
                n_nodes: field.grid().n_nodes(),
            };
            let (model, report) = nominal::train_nominal(&field, &cfg, job.split)?;
            write_json(&out, &model)?;
            println!(
                "{}",
                serde_json::to_string(&TrainingSummary {
                    train_rmse: report.train_rmse,
                    heldout_rmse: report.heldout_rmse,
                })?
            );
        }
        Command::Calibrate { model, calib_data, delta, score, out } => {
            let model: NominalModel = read_json(&model)?;
            let field = to_model_grid(read_field(&calib_data)?, &model)?;
            let scores = conformal::calibration_scores(&model, &field, score.into())?;
            let calib = conformal::calibrate(&scores, delta)?;
            write_json(&out, &calib)?;
            println!("threshold {} from {} scores", calib.threshold(), calib.scores().len());
        }
        Command::Detect { model, calib, input, score, report } => {
            let model: NominalModel = read_json(&model)?;
            let calib: ConformalCalibration = read_json(&calib)?;
            let gate = pipeline::gate_observation(&model, &calib, &read_field(&input)?, score.into())?;
            write_json(&report, &gate)?;
            println!("{} ({:.3} of windows flagged)", serde_json::to_string(&gate.verdict)?, gate.flagged_fraction);
        }
        Command::TrainGpdphs { trajectory, config, out } => {
            let settings: GpDphsSettings = read_json_or_default(config.as_deref())?;
            let file = File::open(&trajectory).with_context(|| format!("reading {}", trajectory.display()))?;
            let traj = io::read_trajectory(file)?;
            let idx = pipeline::training_indices(traj.len(), settings.n_train_states, settings.edge_margin);
            let traj = traj.select(&idx)?;
            let model = gpdphs::train(&traj, settings.init, &settings.train, Exec::default())?;
            fs::write(&out, model.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
            println!("{}", serde_json::to_string(model.params())?);
        }
        Command::Predict { model, init, dt, steps, samples, seed, n_basis, t0, out } => {
            if samples == 0 {
                bail!("--samples must be at least 1");
            }
            let text = fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let model = GpDphsModel::from_json(&text)?;
            let file = File::open(&init).with_context(|| format!("reading {}", init.display()))?;
            let (grid, x0) = io::read_snapshot(file)?;
            if grid != *model.grid() {
                bail!("snapshot grid does not match the model grid");
            }
            let cfg = IntegratorConfig::new(dt, steps);
            let mean = integrate::predict_deflection(&integrate::integrate(&model, &x0, t0, &grid, &cfg)?)?;
            if samples == 1 {
                io::write_field(create(&out)?, &mean)?;
            } else {
                let draws = (0..samples)
                    .map(|r| model.sample_field(RngSeed(seed).fork(r as u64), n_basis))
                    .collect::<pnp_core::Result<Vec<_>>>()?;
                let members = integrate::integrate_ensemble(&draws, &x0, t0, &grid, &cfg, Exec::default())?
                    .iter()
                    .map(integrate::predict_deflection)
                    .collect::<pnp_core::Result<Vec<_>>>()?;
                let (band_mean, band_std) = integrate::ensemble_bands(&members)?;
                io::write_field_with_bands(create(&out)?, &mean, &band_mean, &band_std)?;
            }
        }
        Command::Run { config, out_dir } => {
            let cfg: pipeline::ExperimentConfig = read_json_or_default(config.as_deref())?;
            let out = pipeline::run_experiment(&cfg)?;
            pipeline::write_outputs(&out, &out_dir)?;
            let r = &out.report;
            println!("verdict {}", serde_json::to_string(&r.verdict)?);
            println!("nominal aggregate MSE {:.4e}", r.nominal.aggregate_mse);
            if let (Some(v), Some(g)) = (&r.vanilla_gp, &r.gpdphs) {
                println!("vanilla_gp aggregate MSE {:.4e}", v.aggregate_mse);
                println!("gpdphs aggregate MSE {:.4e}", g.aggregate_mse);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
