//! Adam on a black-box objective with central finite-difference gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    pub fd_step: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.05,
            iterations: 60,
            fd_step: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
        }
    }
}

const MAX_REJECTIONS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimTrace {
    /// Objective at every accepted iterate, starting with the initial point.
    pub objective: Vec<f64>,
    pub rejected_steps: usize,
}

impl OptimTrace {
    pub fn initial(&self) -> f64 {
        self.objective[0]
    }

    pub fn best(&self) -> f64 {
        self.objective.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn eval(f: &(impl Fn(&[f64]) -> Result<f64> + Sync), x: &[f64]) -> Option<f64> {
    f(x).ok().filter(|v| v.is_finite())
}

/// Central-difference gradient; coordinates with `frozen[i]` get zero.
pub fn fd_gradient(
    f: &(impl Fn(&[f64]) -> Result<f64> + Sync),
    x: &[f64],
    step: f64,
    frozen: &[bool],
    exec: Exec,
) -> Option<Vec<f64>> {
    let probes = exec.map_range(2 * x.len(), |k| {
        let i = k / 2;
        if frozen.get(i).copied().unwrap_or(false) {
            return Some(0.0);
        }
        let mut y = x.to_vec();
        y[i] += if k % 2 == 0 { step } else { -step };
        eval(f, &y)
    });
    probes
        .chunks(2)
        .enumerate()
        .map(|(i, pair)| {
            if frozen.get(i).copied().unwrap_or(false) {
                return Some(0.0);
            }
            Some((pair[0]? - pair[1]?) / (2.0 * step))
        })
        .collect()
}

/// Minimizes `f` from `x0`, returning the best iterate seen.
///
/// A step landing on a non-finite value (or an evaluation error) is rejected
/// and the learning rate halved; too many rejections in a row is an error.
pub fn minimize(
    f: impl Fn(&[f64]) -> Result<f64> + Sync,
    x0: &[f64],
    frozen: &[bool],
    cfg: &AdamConfig,
    exec: Exec,
) -> Result<(Vec<f64>, OptimTrace)> {
    let f0 = f(x0)?;
    if !f0.is_finite() {
        return Err(Error::Optimization(format!("objective is {f0} at the initial point")));
    }
    let d = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f0;
    let (mut best_x, mut best_f) = (x.clone(), f0);
    let (mut m, mut v) = (vec![0.0; d], vec![0.0; d]);
    let mut lr = cfg.learning_rate;
    let mut trace = OptimTrace {
        objective: vec![f0],
        rejected_steps: 0,
    };
    let mut rejections = 0;
    let mut t = 0;
    while t < cfg.iterations {
        let grad = match fd_gradient(&f, &x, cfg.fd_step, frozen, exec) {
            Some(g) => g,
            None => {
                rejections += 1;
                trace.rejected_steps += 1;
                if rejections >= MAX_REJECTIONS {
                    return Err(Error::Optimization("non-finite gradient probes".into()));
                }
                continue;
            }
        };
        let step_t = (t + 1) as i32;
        let mut m_next = m.clone();
        let mut v_next = v.clone();
        let mut proposal = x.clone();
        for i in 0..d {
            if frozen.get(i).copied().unwrap_or(false) {
                continue;
            }
            m_next[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
            v_next[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
            let mh = m_next[i] / (1.0 - cfg.beta1.powi(step_t));
            let vh = v_next[i] / (1.0 - cfg.beta2.powi(step_t));
            proposal[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
        match eval(&f, &proposal) {
            Some(fp) => {
                rejections = 0;
                x = proposal;
                fx = fp;
                m = m_next;
                v = v_next;
                t += 1;
                trace.objective.push(fx);
                if fx < best_f {
                    best_f = fx;
                    best_x = x.clone();
                }
            }
            None => {
                rejections += 1;
                trace.rejected_steps += 1;
                lr *= 0.5;
                if rejections >= MAX_REJECTIONS {
                    return Err(Error::Optimization(format!(
                        "{MAX_REJECTIONS} consecutive non-finite steps (last objective {fx})"
                    )));
                }
            }
        }
    }
    Ok((best_x, trace))
}
