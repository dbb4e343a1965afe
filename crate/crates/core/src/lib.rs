//! Compression-aware distributed speech enhancement for ad-hoc microphone
//! arrays.
//!
//! Nodes encode their STFT features, send low-rank SVD factors over a lossy
//! link, and a fusion center combines them with its own reference channel
//! using cross-window attention.

pub mod baselines;
pub mod compressor;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scene;
pub mod transport;
pub mod wav;

pub use compressor::{compress_frame, compress_sequence, decompress_frame, SvdFactors};
pub use dsp::{griffin_lim, istft, stft, StftConfig, Spectrogram, Waveform};
pub use error::{Error, Result};
pub use model::{CasNet, FeatureTensor, ModelConfig, PaddingPolicy, WeightManifest};
