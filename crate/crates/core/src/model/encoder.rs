use ndarray::Array3;

use super::layers::{FrameNorm, FreqDownConv, Prelu};
use super::{Dpr, FeatureTensor, ModelConfig, WeightManifest};
use crate::dsp::InputFeature;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Stage {
    conv: FreqDownConv,
    norm: FrameNorm,
    act: Prelu,
    out_bins: usize,
}

/// Output of the shared node encoder.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Node-level representation `D x T x F'`.
    pub h: FeatureTensor,
    /// Stage outputs, finest first: `C x T x 128`, `C x T x 64`, `D x T x 32`.
    pub skips: Vec<Array3<f64>>,
}

/// Convolutional front end followed by the node-level DPR. One instance
/// serves every microphone.
#[derive(Debug, Clone)]
pub struct Encoder {
    stages: Vec<Stage>,
    dpr: Dpr,
    n_bins: usize,
}

impl Encoder {
    pub fn load(m: &WeightManifest, cfg: &ModelConfig) -> Result<Self> {
        let ch = cfg.stage_channels();
        let bins = cfg.stage_bins();
        let stages = (0..ModelConfig::ENCODER_STAGES)
            .map(|i| {
                let p = format!("enc.{i}");
                Ok(Stage {
                    conv: FreqDownConv::load(
                        m,
                        &format!("{p}.conv"),
                        ch[i + 1],
                        ch[i],
                        cfg.kernel_time,
                        cfg.kernel_freq,
                    )?,
                    norm: FrameNorm::load(m, &format!("{p}.norm"), ch[i + 1])?,
                    act: Prelu::load(m, &format!("{p}.prelu"), ch[i + 1])?,
                    out_bins: bins[i + 1],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stages,
            dpr: Dpr::load(m, "node_dpr", cfg)?,
            n_bins: cfg.n_bins,
        })
    }

    pub fn forward(&self, phi: &InputFeature) -> Result<Encoded> {
        let (c, t, f) = phi.maps.dim();
        if c != 3 || f != self.n_bins || t == 0 {
            return Err(Error::Shape {
                name: "input feature".into(),
                expected: vec![3, t.max(1), self.n_bins],
                found: vec![c, t, f],
            });
        }
        let mut x = phi.maps.clone();
        let mut skips = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            x = stage.conv.forward(&x, stage.out_bins);
            stage.norm.apply(&mut x);
            stage.act.apply(&mut x);
            skips.push(x.clone());
        }
        let h = self.dpr.forward(&FeatureTensor { data: x })?;
        Ok(Encoded { h, skips })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_follow_the_stage_plan() {
        let cfg = ModelConfig::default();
        let m = WeightManifest::random(cfg.clone(), 5).unwrap();
        let enc = Encoder::load(&m, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in [1, 5] {
            let phi = InputFeature {
                maps: Array3::from_shape_fn((3, t, 257), |_| rng.random_range(-1.0..1.0)),
            };
            let out = enc.forward(&phi).unwrap();
            assert_eq!(out.h.data.dim(), (16, t, 32));
            let dims: Vec<_> = out.skips.iter().map(|s| s.dim()).collect();
            assert_eq!(dims, vec![(16, t, 128), (16, t, 64), (16, t, 32)]);
        }
    }

    #[test]
    fn zero_input_without_biases_is_zero() {
        let cfg = ModelConfig::default();
        let m = WeightManifest::random_without_biases(cfg.clone(), 5).unwrap();
        let enc = Encoder::load(&m, &cfg).unwrap();
        let out = enc
            .forward(&InputFeature {
                maps: Array3::zeros((3, 4, 257)),
            })
            .unwrap();
        assert!(out.h.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_bin_count_rejected() {
        let cfg = ModelConfig::default();
        let m = WeightManifest::random(cfg.clone(), 5).unwrap();
        let enc = Encoder::load(&m, &cfg).unwrap();
        let err = enc
            .forward(&InputFeature {
                maps: Array3::zeros((3, 4, 256)),
            })
            .unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }

    #[test]
    fn bad_manifest_names_offending_tensor() {
        let cfg = ModelConfig::default();
        let mut m = WeightManifest::random(cfg.clone(), 5).unwrap();
        m.insert("enc.1.conv.weight", super::super::Tensor::zeros(vec![16, 16, 1, 3]));
        let err = Encoder::load(&m, &cfg).unwrap_err();
        assert!(err.to_string().contains("enc.1.conv.weight"), "{err}");
    }
}
