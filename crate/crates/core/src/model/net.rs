use ndarray::{Array2, Array3};

use super::{
    Cwq, Decoder, Encoded, Encoder, FeatureTensor, Fusion, KeyWindows, ModelConfig,
    WeightManifest,
};
use crate::dsp::InputFeature;
use crate::error::Result;

/// The full network, loaded once from a manifest and shared read-only.
#[derive(Debug, Clone)]
pub struct CasNet {
    config: ModelConfig,
    encoder: Encoder,
    cwq: Cwq,
    fusion: Fusion,
    decoder: Decoder,
}

impl CasNet {
    pub fn from_manifest(m: &WeightManifest) -> Result<Self> {
        m.validate()?;
        let cfg = m.config.clone();
        Ok(Self {
            encoder: Encoder::load(m, &cfg)?,
            cwq: Cwq::load(m, "cwq1", &cfg)?,
            fusion: Fusion::load(m, &cfg)?,
            decoder: Decoder::load(m, &cfg)?,
            config: cfg,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Node-side encoding; identical for every microphone.
    pub fn encode(&self, phi: &InputFeature) -> Result<Encoded> {
        self.encoder.forward(phi)
    }

    /// First cross-window query. Without nodes the reference passes
    /// through unchanged.
    pub fn query(&self, h_ref: &FeatureTensor, nodes: &[KeyWindows]) -> Result<FeatureTensor> {
        if nodes.is_empty() {
            return Ok(h_ref.clone());
        }
        self.cwq.forward(h_ref, nodes)
    }

    pub fn cwq(&self) -> &Cwq {
        &self.cwq
    }

    pub fn align_and_fuse(
        &self,
        h_ref_bar: &FeatureTensor,
        nodes: &[KeyWindows],
    ) -> Result<FeatureTensor> {
        self.fusion.forward(h_ref_bar, nodes)
    }

    pub fn decode(&self, phi_hat: &FeatureTensor, skips: &[Array3<f64>]) -> Result<Array2<f64>> {
        self.decoder.forward(phi_hat, skips)
    }

    /// Fusion-center path from the encoded reference and the received node
    /// features to the compressed magnitude estimate (`T x bins`).
    pub fn forward(&self, reference: &Encoded, nodes: &[KeyWindows]) -> Result<Array2<f64>> {
        let h_bar = self.query(&reference.h, nodes)?;
        let phi_hat = self.align_and_fuse(&h_bar, nodes)?;
        self.decode(&phi_hat, &reference.skips)
    }
}
