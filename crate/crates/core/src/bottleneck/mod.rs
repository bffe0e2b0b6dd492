//! Variational information bottleneck models and their objective.
//!
//! The present state is compressed into a diagonal-Gaussian posterior (one
//! for the whole state, or one per state variable in distributed mode),
//! sampled, and mapped into a shared space where it is contrasted against a
//! deterministic embedding of the future state. The rate term is the KL
//! divergence of each posterior from a standard normal prior; the
//! predictive term is the InfoNCE loss with negative squared Euclidean
//! similarity.

mod losses;
mod network;

pub use losses::{
    infonce_loss, kl_to_standard_normal, total_loss, BetaSchedule, GaussianEmbedding, InfoNce, LossBreakdown,
};
pub use network::{Encoded, Model, Normalizer, ObjectiveVars, ParamStore};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whole-state bottleneck or one bottleneck per state variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ib,
    Dib,
}

impl Mode {
    /// Number of independent bottlenecks.
    pub fn n_bottlenecks(self) -> usize {
        match self {
            Mode::Ib => 1,
            Mode::Dib => 4,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Ib => "ib",
            Mode::Dib => "dib",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ib" => Ok(Mode::Ib),
            "dib" => Ok(Mode::Dib),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}, expected ib or dib"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: Mode,
    pub bottleneck_dim: usize,
    pub shared_dim: usize,
    /// Hidden widths of each bottleneck encoder.
    pub encoder_widths: Vec<usize>,
    /// Hidden widths of the map from bottleneck samples to the shared space.
    pub shared_widths: Vec<usize>,
    /// Hidden widths of the future-state encoder.
    pub future_widths: Vec<usize>,
    pub pe_frequencies: Vec<f64>,
    pub nce_temperature: f64,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            mode: Mode::Ib,
            bottleneck_dim: 32,
            shared_dim: 64,
            encoder_widths: vec![128, 128],
            shared_widths: vec![256, 256],
            future_widths: vec![256, 256],
            pe_frequencies: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0],
            nce_temperature: 1.0,
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn with_mode(mode: Mode) -> Self {
        ModelConfig {
            mode,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bottleneck_dim == 0 || self.shared_dim == 0 {
            return Err(Error::InvalidConfig("embedding dimensions must be positive".into()));
        }
        let widths = self
            .encoder_widths
            .iter()
            .chain(&self.shared_widths)
            .chain(&self.future_widths);
        if widths.clone().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        if self.pe_frequencies.is_empty() || self.pe_frequencies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig(
                "positional encoding frequencies must be non-empty and strictly increasing".into(),
            ));
        }
        if !(self.nce_temperature > 0.0) {
            return Err(Error::InvalidConfig("temperature must be positive".into()));
        }
        Ok(())
    }

    /// Encoded feature count for one scalar variable.
    pub fn pe_width(&self) -> usize {
        2 * self.pe_frequencies.len()
    }
}

/// `(sin f·x, cos f·x)` for every frequency `f`, in frequency order.
pub fn positional_encode(x: f64, frequencies: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * frequencies.len());
    positional_encode_into(x, frequencies, &mut out);
    out
}

pub(crate) fn positional_encode_into(x: f64, frequencies: &[f64], out: &mut Vec<f64>) {
    for &f in frequencies {
        let (s, c) = (f * x).sin_cos();
        out.push(s);
        out.push(c);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn encoding_at_zero() {
        let e = positional_encode(0.0, &[1.0, 2.0, 4.0]);
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn encoding_quarter_turn() {
        let e = positional_encode(PI / 2.0, &[1.0, 2.0]);
        let want = [1.0, 0.0, 0.0, -1.0];
        for (a, b) in e.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn encoding_is_periodic_for_integer_frequencies() {
        let f = ModelConfig::default().pe_frequencies;
        for x in [-3.0, -1.2, 0.4, 2.9] {
            let a = positional_encode(x, &f);
            let b = positional_encode(x + 2.0 * PI, &f);
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn config_checks() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            pe_frequencies: vec![1.0, 1.0],
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!("DIB".parse::<Mode>().unwrap(), Mode::Dib);
        assert!("vib".parse::<Mode>().is_err());
    }
}
