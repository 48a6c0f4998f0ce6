//! Reference nominal predictor: ridge-regularized linear autoregression from
//! `h` past frames to `w` future frames.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::SpaceTimeField;
use crate::error::{Error, Result};
use crate::linalg::{self, Cholesky};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    #[serde(default = "default_history")]
    pub history_h: usize,
    #[serde(default = "default_horizon")]
    pub horizon_w: usize,
    #[serde(default)]
    pub ridge_lambda: f64,
    pub n_nodes: usize,
}

fn default_history() -> usize {
    10
}

fn default_horizon() -> usize {
    5
}

impl PredictorConfig {
    pub fn new(n_nodes: usize) -> Self {
        PredictorConfig {
            history_h: default_history(),
            horizon_w: default_horizon(),
            ridge_lambda: 1e-6,
            n_nodes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_h == 0 || self.horizon_w == 0 {
            return Err(Error::config("history_h and horizon_w must be >= 1"));
        }
        if self.n_nodes == 0 {
            return Err(Error::config("n_nodes must be >= 1"));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(Error::config("ridge_lambda must be >= 0"));
        }
        Ok(())
    }

    /// Frames covered by one input/output window.
    pub fn window(&self) -> usize {
        self.history_h + self.horizon_w
    }

    fn n_inputs(&self) -> usize {
        self.history_h * self.n_nodes + 1
    }

    fn n_outputs(&self) -> usize {
        self.horizon_w * self.n_nodes
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StoredModel", into = "StoredModel")]
pub struct NominalModel {
    config: PredictorConfig,
    /// `[(h·n + 1) × (w·n)]`; the last row is the bias.
    weights: DMatrix<f64>,
    train_rmse: f64,
}

#[derive(Serialize, Deserialize)]
struct StoredModel {
    config: PredictorConfig,
    rows: usize,
    cols: usize,
    /// Row-major.
    weights: Vec<f64>,
    train_rmse: f64,
}

impl From<NominalModel> for StoredModel {
    fn from(m: NominalModel) -> Self {
        StoredModel {
            config: m.config,
            rows: m.weights.nrows(),
            cols: m.weights.ncols(),
            weights: m.weights.transpose().as_slice().to_vec(),
            train_rmse: m.train_rmse,
        }
    }
}

impl TryFrom<StoredModel> for NominalModel {
    type Error = Error;

    fn try_from(s: StoredModel) -> Result<Self> {
        if s.weights.len() != s.rows * s.cols {
            return Err(Error::dim(format!(
                "{} weights for a {}x{} matrix",
                s.weights.len(),
                s.rows,
                s.cols
            )));
        }
        NominalModel::from_weights(s.config, DMatrix::from_row_slice(s.rows, s.cols, &s.weights))
            .map(|m| NominalModel {
                train_rmse: s.train_rmse,
                ..m
            })
    }
}

impl NominalModel {
    pub fn from_weights(config: PredictorConfig, weights: DMatrix<f64>) -> Result<Self> {
        config.validate()?;
        if weights.shape() != (config.n_inputs(), config.n_outputs()) {
            return Err(Error::dim(format!(
                "weights are {:?}, config needs {:?}",
                weights.shape(),
                (config.n_inputs(), config.n_outputs())
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Data("non-finite weights".into()));
        }
        Ok(NominalModel {
            config,
            weights,
            train_rmse: f64::NAN,
        })
    }

    /// Repeats the last history frame over the whole horizon.
    pub fn persistence(config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_nodes;
        let last = (config.history_h - 1) * n;
        let mut w = DMatrix::zeros(config.n_inputs(), config.n_outputs());
        for k in 0..config.horizon_w {
            for j in 0..n {
                w[(last + j, k * n + j)] = 1.0;
            }
        }
        Self::from_weights(config, w)
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn train_rmse(&self) -> f64 {
        self.train_rmse
    }

    /// Forecast of the next `w` frames, `[w × n]`.
    pub fn predict(&self, history: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let c = &self.config;
        if history.shape() != (c.history_h, c.n_nodes) {
            return Err(Error::dim(format!(
                "history is {:?}, model expects {:?}",
                history.shape(),
                (c.history_h, c.n_nodes)
            )));
        }
        let x = features(history);
        let y = self.weights.tr_mul(&x);
        Ok(DMatrix::from_row_slice(c.horizon_w, c.n_nodes, y.as_slice()))
    }

    /// Iterated forecast of `n_future` frames, feeding predictions back in.
    pub fn rollout(&self, history: &DMatrix<f64>, n_future: usize) -> Result<DMatrix<f64>> {
        if n_future == 0 {
            return Err(Error::config("n_future must be >= 1"));
        }
        let (h, n) = (self.config.history_h, self.config.n_nodes);
        let mut window = history.clone();
        let mut out = DMatrix::zeros(n_future, n);
        let mut filled = 0;
        while filled < n_future {
            let block = self.predict(&window)?;
            let take = block.nrows().min(n_future - filled);
            out.rows_mut(filled, take).copy_from(&block.rows(0, take));
            filled += take;
            let mut joined = DMatrix::zeros(h + block.nrows(), n);
            joined.rows_mut(0, h).copy_from(&window);
            joined.rows_mut(h, block.nrows()).copy_from(&block);
            window = joined.rows(joined.nrows() - h, h).into_owned();
        }
        Ok(out)
    }

    /// Ridge objective `‖XW − Y‖² + λ‖W‖²` on a field's sliding windows.
    pub fn ridge_loss(&self, data: &SpaceTimeField) -> Result<f64> {
        let (x, y) = design(data, &self.config, 0, data.n_times())?;
        let r = x * &self.weights - y;
        Ok(r.norm_squared() + self.config.ridge_lambda * self.weights.norm_squared())
    }
}

/// History flattened row-major by time, then the bias entry.
fn features(history: &DMatrix<f64>) -> DVector<f64> {
    let (h, n) = history.shape();
    let mut x = DVector::zeros(h * n + 1);
    for i in 0..h {
        for j in 0..n {
            x[i * n + j] = history[(i, j)];
        }
    }
    x[h * n] = 1.0;
    x
}

/// Stride-1 windows starting in `start..end - window + 1`.
fn design(
    data: &SpaceTimeField,
    cfg: &PredictorConfig,
    start: usize,
    end: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if data.grid().n_nodes() != cfg.n_nodes {
        return Err(Error::dim(format!(
            "data has {} nodes, predictor expects {}",
            data.grid().n_nodes(),
            cfg.n_nodes
        )));
    }
    let win = cfg.window();
    let count = (end - start + 1).saturating_sub(win);
    let v = data.values();
    let n = cfg.n_nodes;
    let mut x = DMatrix::zeros(count, cfg.n_inputs());
    let mut y = DMatrix::zeros(count, cfg.n_outputs());
    for r in 0..count {
        let s = start + r;
        for i in 0..cfg.history_h {
            for j in 0..n {
                x[(r, i * n + j)] = v[(s + i, j)];
            }
        }
        x[(r, cfg.history_h * n)] = 1.0;
        for k in 0..cfg.horizon_w {
            for j in 0..n {
                y[(r, k * n + j)] = v[(s + cfg.history_h + k, j)];
            }
        }
    }
    Ok((x, y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub train_rmse: f64,
    /// RMSE on windows lying entirely in the held-out tail, if any fit.
    pub heldout_rmse: Option<f64>,
}

/// Fits the ridge regression on windows from the first `split` fraction of
/// frames; the rest is used only for the held-out RMSE.
pub fn train_nominal(
    data: &SpaceTimeField,
    cfg: &PredictorConfig,
    split: f64,
) -> Result<(NominalModel, TrainingReport)> {
    cfg.validate()?;
    if !(split > 0.0 && split <= 1.0) {
        return Err(Error::config(format!("split must be in (0, 1], got {split}")));
    }
    let needed = cfg.window() + 10;
    if data.n_times() < needed {
        return Err(Error::InsufficientData {
            what: "frames for nominal training",
            needed,
            have: data.n_times(),
        });
    }
    let cut = ((data.n_times() as f64 * split).round() as usize).clamp(needed.min(data.n_times()), data.n_times());
    let (x, y) = design(data, cfg, 0, cut)?;
    let mut gram = linalg::transpose_product(&x, &x)?;
    for i in 0..gram.nrows() {
        gram[(i, i)] += cfg.ridge_lambda;
    }
    let rhs = linalg::transpose_product(&x, &y)?;
    let chol = Cholesky::factor(&gram, 0.0).map_err(|_| {
        Error::Conditioning("normal equations are singular; use a positive ridge_lambda".into())
    })?;
    if cfg.ridge_lambda == 0.0 && chol.jitter() > 0.0 {
        return Err(Error::Conditioning(
            "normal equations are singular; use a positive ridge_lambda".into(),
        ));
    }
    let weights = chol.solve_mat(&rhs);
    let rmse = |x: &DMatrix<f64>, y: &DMatrix<f64>| ((x * &weights - y).norm_squared() / y.len() as f64).sqrt();
    let train_rmse = rmse(&x, &y);
    let heldout_rmse = if data.n_times() - cut >= cfg.window() {
        let (xh, yh) = design(data, cfg, cut, data.n_times())?;
        Some(rmse(&xh, &yh))
    } else {
        None
    };
    let mut model = NominalModel::from_weights(*cfg, weights)?;
    model.train_rmse = train_rmse;
    Ok((
        model,
        TrainingReport {
            train_rmse,
            heldout_rmse,
        },
    ))
}
