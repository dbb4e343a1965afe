use ndarray::{concatenate, s, Array3, Axis};

use super::layers::{FrameNorm, Gru, Linear};
use super::{FeatureTensor, ModelConfig, WeightManifest};
use crate::error::Result;

/// Dual-path recurrent block.
///
/// The intra path runs a bidirectional GRU across the bins of each frame;
/// the inter path runs a forward-only GRU across frames for each bin. Each
/// path is followed by a linear projection back to `D` channels, a
/// per-frame layer norm and a residual add, so output frame `k` only
/// depends on input frames `0..=k`.
#[derive(Debug, Clone)]
pub struct Dpr {
    d: usize,
    intra_fwd: Gru,
    intra_bwd: Gru,
    intra_proj: Linear,
    intra_norm: FrameNorm,
    inter: Gru,
    inter_proj: Linear,
    inter_norm: FrameNorm,
}

impl Dpr {
    pub fn load(m: &WeightManifest, prefix: &str, cfg: &ModelConfig) -> Result<Self> {
        let (d, h) = (cfg.d, cfg.dpr_hidden);
        Ok(Self {
            d,
            intra_fwd: Gru::load(m, &format!("{prefix}.intra.fwd"), d, h)?,
            intra_bwd: Gru::load(m, &format!("{prefix}.intra.bwd"), d, h)?,
            intra_proj: Linear::load(m, &format!("{prefix}.intra.proj"), d, 2 * h)?,
            intra_norm: FrameNorm::load(m, &format!("{prefix}.intra.norm"), d)?,
            inter: Gru::load(m, &format!("{prefix}.inter.rnn"), d, h)?,
            inter_proj: Linear::load(m, &format!("{prefix}.inter.proj"), d, h)?,
            inter_norm: FrameNorm::load(m, &format!("{prefix}.inter.norm"), d)?,
        })
    }

    pub fn forward(&self, h: &FeatureTensor) -> Result<FeatureTensor> {
        h.check_shape("dpr input", self.d, h.n_bins())?;
        let x = &h.data;
        let (d, t, f) = x.dim();

        let mut intra = Array3::zeros((d, t, f));
        for ti in 0..t {
            let seq = x.slice(s![.., ti, ..]).reversed_axes();
            let fwd = self.intra_fwd.run(seq, false);
            let bwd = self.intra_bwd.run(seq, true);
            let both = concatenate(Axis(1), &[fwd.view(), bwd.view()]).expect("same rows");
            let proj = self.intra_proj.rows(&both);
            intra.slice_mut(s![.., ti, ..]).assign(&proj.t());
        }
        self.intra_norm.apply(&mut intra);
        let mid = x + &intra;

        let mut inter = Array3::zeros((d, t, f));
        for fi in 0..f {
            let seq = mid.slice(s![.., .., fi]).reversed_axes();
            let out = self.inter.run(seq, false);
            let proj = self.inter_proj.rows(&out);
            inter.slice_mut(s![.., .., fi]).assign(&proj.t());
        }
        self.inter_norm.apply(&mut inter);
        Ok(FeatureTensor { data: mid + inter })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block(seed: u64) -> (Dpr, ModelConfig) {
        let cfg = ModelConfig::default();
        let m = WeightManifest::random(cfg.clone(), seed).unwrap();
        (Dpr::load(&m, "node_dpr", &cfg).unwrap(), cfg)
    }

    fn random_feature(rng: &mut ChaCha8Rng, t: usize) -> FeatureTensor {
        FeatureTensor {
            data: Array3::from_shape_fn((16, t, 32), |_| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn preserves_shape() {
        let (dpr, _) = block(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for t in [1, 2, 7] {
            let out = dpr.forward(&random_feature(&mut rng, t)).unwrap();
            assert_eq!(out.data.dim(), (16, t, 32));
        }
    }

    #[test]
    fn later_frames_do_not_leak_backwards() {
        let (dpr, _) = block(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_feature(&mut rng, 10);
        let base = dpr.forward(&x).unwrap();
        let mut y = x.clone();
        for v in y.data.slice_mut(s![.., 6.., ..]).iter_mut() {
            *v += rng.random_range(-3.0..3.0);
        }
        let out = dpr.forward(&y).unwrap();
        assert_eq!(out.data.slice(s![.., ..6, ..]), base.data.slice(s![.., ..6, ..]));
        assert_ne!(out.data.slice(s![.., 6.., ..]), base.data.slice(s![.., 6.., ..]));
    }

    #[test]
    fn wrong_channel_count_rejected() {
        let (dpr, _) = block(3);
        assert!(dpr.forward(&FeatureTensor::zeros(8, 4, 32)).is_err());
    }
}
