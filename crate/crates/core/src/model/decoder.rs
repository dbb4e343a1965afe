use ndarray::{concatenate, Array2, Array3, Axis};

use super::layers::{FrameNorm, FreqUpConv, Prelu};
use super::{FeatureTensor, ModelConfig, WeightManifest};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Stage {
    index: usize,
    conv: FreqUpConv,
    post: Option<(FrameNorm, Prelu)>,
    out_bins: usize,
}

/// Mirror of the encoder: each stage concatenates the matching encoder
/// skip, doubles the frequency resolution and ends in a ReLU on the last
/// stage so the estimate is a valid magnitude.
#[derive(Debug, Clone)]
pub struct Decoder {
    stages: Vec<Stage>,
    skip_shapes: Vec<(usize, usize)>,
    d: usize,
    f: usize,
}

impl Decoder {
    pub fn load(m: &WeightManifest, cfg: &ModelConfig) -> Result<Self> {
        let ch = cfg.stage_channels();
        let bins = cfg.stage_bins();
        let (kt, kf) = (cfg.kernel_time, cfg.kernel_freq);
        let stages = (0..ModelConfig::ENCODER_STAGES)
            .rev()
            .map(|i| {
                let p = format!("dec.{i}");
                let c_in = 2 * ch[i + 1];
                let c_out = if i == 0 { 1 } else { ch[i] };
                let post = if i > 0 {
                    Some((
                        FrameNorm::load(m, &format!("{p}.norm"), c_out)?,
                        Prelu::load(m, &format!("{p}.prelu"), c_out)?,
                    ))
                } else {
                    None
                };
                Ok(Stage {
                    index: i,
                    conv: FreqUpConv::load(m, &format!("{p}.conv"), c_in, c_out, kt, kf)?,
                    post,
                    out_bins: bins[i],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let skip_shapes = (0..ModelConfig::ENCODER_STAGES)
            .map(|i| (ch[i + 1], bins[i + 1]))
            .collect();
        Ok(Self {
            stages,
            skip_shapes,
            d: cfg.d,
            f: cfg.f_prime,
        })
    }

    /// Decodes a `T x n_bins` non-negative (compressed) magnitude.
    pub fn forward(&self, phi_hat: &FeatureTensor, skips: &[Array3<f64>]) -> Result<Array2<f64>> {
        phi_hat.check_shape("decoder input", self.d, self.f)?;
        let t = phi_hat.n_frames();
        if skips.len() != self.skip_shapes.len() {
            return Err(Error::Shape {
                name: "decoder skips".into(),
                expected: vec![self.skip_shapes.len()],
                found: vec![skips.len()],
            });
        }
        for (i, (skip, &(c, f))) in skips.iter().zip(&self.skip_shapes).enumerate() {
            if skip.dim() != (c, t, f) {
                return Err(Error::Shape {
                    name: format!("decoder skip {i}"),
                    expected: vec![c, t, f],
                    found: skip.shape().to_vec(),
                });
            }
        }
        let mut x = phi_hat.data.clone();
        for stage in &self.stages {
            let input = concatenate(Axis(0), &[x.view(), skips[stage.index].view()])
                .expect("shapes checked");
            x = stage.conv.forward(&input, stage.out_bins);
            if let Some((norm, act)) = &stage.post {
                norm.apply(&mut x);
                act.apply(&mut x);
            }
        }
        Ok(x.index_axis(Axis(0), 0).mapv(|v| v.max(0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn skips(rng: &mut ChaCha8Rng, t: usize) -> Vec<Array3<f64>> {
        [(16, 128), (16, 64), (16, 32)]
            .iter()
            .map(|&(c, f)| Array3::from_shape_fn((c, t, f), |_| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn output_is_non_negative_magnitude() {
        let cfg = ModelConfig::default();
        let dec = Decoder::load(&WeightManifest::random(cfg.clone(), 3).unwrap(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let phi = FeatureTensor {
            data: Array3::from_shape_fn((16, 7, 32), |_| rng.random_range(-1.0..1.0)),
        };
        let out = dec.forward(&phi, &skips(&mut rng, 7)).unwrap();
        assert_eq!(out.dim(), (7, 257));
        assert!(out.iter().all(|&v| v >= 0.0));
        assert!(out.iter().any(|&v| v > 0.0));
    }

    #[test]
    fn zero_in_zero_out_without_biases() {
        let cfg = ModelConfig::default();
        let m = WeightManifest::random_without_biases(cfg.clone(), 3).unwrap();
        let dec = Decoder::load(&m, &cfg).unwrap();
        let zeros: Vec<_> = [(16, 128), (16, 64), (16, 32)]
            .iter()
            .map(|&(c, f)| Array3::zeros((c, 4, f)))
            .collect();
        let out = dec.forward(&FeatureTensor::zeros(16, 4, 32), &zeros).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn skip_mismatch_is_an_error() {
        let cfg = ModelConfig::default();
        let dec = Decoder::load(&WeightManifest::random(cfg.clone(), 3).unwrap(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = skips(&mut rng, 4);
        s[1] = Array3::zeros((16, 4, 63));
        let err = dec.forward(&FeatureTensor::zeros(16, 4, 32), &s).unwrap_err();
        assert!(err.to_string().contains("decoder skip 1"));
    }
}
