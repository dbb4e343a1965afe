//! Forward pass of the compress-and-send network.
//!
//! Every node runs the same [`Encoder`] and node-level [`Dpr`]. The fusion
//! center queries the received node features with [`Cwq`], aligns each node
//! against the enhanced reference, fuses the aligned features with a second
//! query and decodes a magnitude spectrum for the reference microphone.

mod cwq;
mod decoder;
mod dpr;
mod encoder;
mod fusion;
mod layers;
mod net;
mod weights;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cwq::{Cwq, KeyWindows, WindowMask};
pub use decoder::Decoder;
pub use dpr::Dpr;
pub use encoder::{Encoded, Encoder};
pub use fusion::Fusion;
pub use net::CasNet;
pub use weights::{Tensor, TensorSpec, WeightManifest, MANIFEST_VERSION};

/// How CWQ fills key frames that were lost, arrived too late, or fall
/// before the start of the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PaddingPolicy {
    /// Learned padding frame stored in the manifest.
    #[default]
    Learned,
    /// All-zero frame.
    Zero,
    /// Leave the slot out; a query with no key at all is an error.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature channels `D`.
    pub d: usize,
    /// Reduced frequency bins `F'` after the encoder.
    pub f_prime: usize,
    pub heads: usize,
    /// Past frames `b` in the query window.
    pub past: usize,
    /// Future frames `c` in the query window.
    pub future: usize,
    pub dpr_hidden: usize,
    /// Channels of the first two encoder stages.
    pub enc_channels: usize,
    /// STFT bins at the encoder input.
    pub n_bins: usize,
    pub kernel_time: usize,
    pub kernel_freq: usize,
    /// Magnitude compression exponent.
    pub alpha: f64,
    pub padding: PaddingPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 16,
            f_prime: 32,
            heads: 4,
            past: 2,
            future: 0,
            dpr_hidden: 16,
            enc_channels: 16,
            n_bins: 257,
            kernel_time: 2,
            kernel_freq: 3,
            alpha: 0.5,
            padding: PaddingPolicy::Learned,
        }
    }
}

impl ModelConfig {
    pub const ENCODER_STAGES: usize = 3;

    /// Frequency sizes at the input and after every encoder stage.
    pub fn stage_bins(&self) -> Vec<usize> {
        let mut bins = vec![self.n_bins];
        for _ in 0..Self::ENCODER_STAGES {
            bins.push(bins.last().unwrap() / 2);
        }
        bins
    }

    /// Channel count at the input and after every encoder stage.
    pub fn stage_channels(&self) -> Vec<usize> {
        vec![3, self.enc_channels, self.enc_channels, self.d]
    }

    /// Flattened frame size `D * F'` seen by the attention layers.
    pub fn embed_dim(&self) -> usize {
        self.d * self.f_prime
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim() / self.heads
    }

    pub fn window_len(&self) -> usize {
        self.past + self.future + 1
    }

    pub fn validate(&self) -> Result<()> {
        let derived = *self.stage_bins().last().unwrap();
        if derived != self.f_prime {
            return Err(Error::Config(format!(
                "F' = {} but the encoder reduces {} bins to {}",
                self.f_prime, self.n_bins, derived
            )));
        }
        if self.d == 0 || self.heads == 0 || self.embed_dim() % self.heads != 0 {
            return Err(Error::Config(format!(
                "{} heads do not divide the attention dimension {}",
                self.heads,
                self.embed_dim()
            )));
        }
        if self.d > self.f_prime {
            return Err(Error::Config(format!(
                "D = {} exceeds F' = {}",
                self.d, self.f_prime
            )));
        }
        if self.kernel_time == 0 || self.kernel_freq == 0 || self.dpr_hidden == 0 {
            return Err(Error::Config("kernel sizes and hidden size must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        Ok(())
    }

    /// Largest usable compression rank, `min(D, F')`.
    pub fn max_rank(&self) -> usize {
        self.d.min(self.f_prime)
    }
}

/// Real `D x T x F'` hidden representation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub data: Array3<f64>,
}

impl FeatureTensor {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature tensor"));
        }
        Ok(Self { data })
    }

    pub fn zeros(d: usize, t: usize, f: usize) -> Self {
        Self {
            data: Array3::zeros((d, t, f)),
        }
    }

    pub fn channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn n_frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn n_bins(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    pub fn frame(&self, t: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(1), t)
    }

    /// Frames flattened row-major into a `T x (D * F')` matrix.
    pub fn to_rows(&self) -> Array2<f64> {
        let (d, t, f) = self.data.dim();
        let mut rows = Array2::zeros((t, d * f));
        for (k, mut row) in rows.outer_iter_mut().enumerate() {
            for (dst, src) in row.iter_mut().zip(self.frame(k).iter()) {
                *dst = *src;
            }
        }
        rows
    }

    pub fn from_rows(rows: &Array2<f64>, d: usize, f: usize) -> Self {
        let t = rows.nrows();
        let mut data = Array3::zeros((d, t, f));
        for (k, row) in rows.outer_iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                data[[i / f, k, i % f]] = *v;
            }
        }
        Self { data }
    }

    pub(crate) fn check_shape(&self, name: &str, d: usize, f: usize) -> Result<()> {
        if self.channels() != d || self.n_bins() != f {
            return Err(Error::Shape {
                name: name.into(),
                expected: vec![d, self.n_frames(), f],
                found: self.data.shape().to_vec(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_consistent() {
        let cfg = ModelConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.stage_bins(), vec![257, 128, 64, 32]);
        assert_eq!(cfg.embed_dim(), 512);
        assert_eq!(cfg.head_dim(), 128);
        assert_eq!(cfg.window_len(), 3);
    }

    #[test]
    fn config_rejects_bad_head_count() {
        let cfg = ModelConfig {
            heads: 3,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ModelConfig {
            f_prime: 30,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rows_round_trip() {
        let data = Array3::from_shape_fn((2, 3, 4), |(a, b, c)| (a * 100 + b * 10 + c) as f64);
        let t = FeatureTensor::new(data).unwrap();
        let rows = t.to_rows();
        assert_eq!(rows[[1, 4 + 2]], 112.0);
        assert_eq!(FeatureTensor::from_rows(&rows, 2, 4), t);
    }
}
