use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Diagonal Gaussian posterior `N(mean, exp(log_var))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianEmbedding {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianEmbedding {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                actual: log_var.len(),
            });
        }
        Ok(GaussianEmbedding { mean, log_var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Product of independent posteriors: a block-diagonal Gaussian over the
    /// concatenated coordinates.
    pub fn concat(parts: &[GaussianEmbedding]) -> GaussianEmbedding {
        GaussianEmbedding {
            mean: parts.iter().flat_map(|p| p.mean.iter().copied()).collect(),
            log_var: parts.iter().flat_map(|p| p.log_var.iter().copied()).collect(),
        }
    }

    pub fn kl_to_standard_normal(&self) -> f64 {
        kl_to_standard_normal(self)
    }
}

/// `KL(N(μ, σ²) ‖ N(0, I))` in nats.
pub fn kl_to_standard_normal(e: &GaussianEmbedding) -> f64 {
    0.5 * e
        .mean
        .iter()
        .zip(&e.log_var)
        .map(|(&m, &lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

/// Batch InfoNCE result, all in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNce {
    /// Sum of the per-sample terms over the batch.
    pub loss: f64,
    pub per_sample: Vec<f64>,
    /// `ln n - loss / n`, clamped below at zero.
    pub mi_estimate: f64,
}

impl InfoNce {
    pub fn mean_loss(&self) -> f64 {
        self.loss / self.per_sample.len() as f64
    }
}

/// InfoNCE over matched rows of `u` and `v` (`[n, d]` each) with
/// similarity `-‖u - v‖² / τ`.
pub fn infonce_loss(u: &Tensor, v: &Tensor, temperature: f64) -> Result<InfoNce> {
    if u.shape().len() != 2 || u.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            op: "infonce_loss",
            lhs: u.shape().to_vec(),
            rhs: v.shape().to_vec(),
        });
    }
    let n = u.rows();
    if n < 2 {
        return Err(Error::OutOfRange(format!(
            "InfoNCE needs at least 2 pairs to have distractors, got {n}"
        )));
    }
    let mut logits = vec![0.0; n];
    let mut per_sample = Vec::with_capacity(n);
    for i in 0..n {
        let ui = u.row(i);
        for (j, l) in logits.iter_mut().enumerate() {
            let d: f64 = ui.iter().zip(v.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            *l = -d / temperature;
        }
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        per_sample.push(lse - logits[i]);
    }
    let loss: f64 = per_sample.iter().sum();
    let mi_estimate = ((n as f64).ln() - loss / n as f64).max(0.0);
    Ok(InfoNce {
        loss,
        per_sample,
        mi_estimate,
    })
}

/// All terms of the minimized objective `β·Σ KL + InfoNCE`, in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub kl_per_variable: Vec<f64>,
    pub kl_total: f64,
    /// Mean per-sample InfoNCE loss.
    pub infonce_loss: f64,
    pub mi_estimate: f64,
}

/// Assemble the objective from per-bottleneck KLs and the mean InfoNCE loss.
///
/// `beta = 0` is accepted for evaluation.
pub fn total_loss(kl_per_variable: &[f64], infonce_mean_loss: f64, batch_size: usize, beta: f64) -> LossBreakdown {
    let kl_total: f64 = kl_per_variable.iter().sum();
    LossBreakdown {
        total: beta * kl_total + infonce_mean_loss,
        kl_per_variable: kl_per_variable.to_vec(),
        kl_total,
        infonce_loss: infonce_mean_loss,
        mi_estimate: ((batch_size as f64).ln() - infonce_mean_loss).max(0.0),
    }
}

/// Geometric annealing of β from `beta_initial` to `beta_final`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub beta_initial: f64,
    pub beta_final: f64,
    pub n_steps: u64,
}

impl Default for BetaSchedule {
    fn default() -> Self {
        BetaSchedule {
            beta_initial: 5e-4,
            beta_final: 2.0,
            n_steps: 50_000,
        }
    }
}

impl BetaSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_initial > 0.0 && self.beta_final > 0.0) {
            return Err(Error::InvalidConfig("beta endpoints must be positive".into()));
        }
        Ok(())
    }

    /// `β(step) = β₀ · (β₁/β₀)^(step/n_steps)`. A zero-length schedule sits at `β₀`.
    pub fn beta_at(&self, step: u64) -> Result<f64> {
        if step > self.n_steps {
            return Err(Error::OutOfRange(format!(
                "step {step} beyond schedule length {}",
                self.n_steps
            )));
        }
        if self.n_steps == 0 {
            return Ok(self.beta_initial);
        }
        let frac = step as f64 / self.n_steps as f64;
        Ok(self.beta_initial * (self.beta_final / self.beta_initial).powf(frac))
    }
}
