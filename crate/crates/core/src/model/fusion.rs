use ndarray::{concatenate, Axis};

use super::layers::Linear;
use super::{Cwq, Dpr, FeatureTensor, KeyWindows, ModelConfig, WeightManifest, WindowMask};
use crate::error::{Error, Result};

/// Alignment of every node against the enhanced reference, followed by
/// the second cross-window query and the final DPR.
#[derive(Debug, Clone)]
pub struct Fusion {
    d: usize,
    f: usize,
    past: usize,
    future: usize,
    align: Linear,
    align_dpr: Dpr,
    cwq: Cwq,
    fuse_dpr: Dpr,
}

impl Fusion {
    pub fn load(m: &WeightManifest, cfg: &ModelConfig) -> Result<Self> {
        Ok(Self {
            d: cfg.d,
            f: cfg.f_prime,
            past: cfg.past,
            future: cfg.future,
            align: Linear::load(m, "align.proj", cfg.d, 2 * cfg.d)?,
            align_dpr: Dpr::load(m, "align_dpr", cfg)?,
            cwq: Cwq::load(m, "cwq2", cfg)?,
            fuse_dpr: Dpr::load(m, "fuse_dpr", cfg)?,
        })
    }

    /// Concatenates the reference with one node, mixes channels and runs
    /// the alignment DPR. Node frames that had not arrived when their own
    /// query ran are zeroed.
    pub fn align_node(&self, h_ref_bar: &FeatureTensor, node: KeyWindows) -> Result<FeatureTensor> {
        node.features.check_shape("node features", self.d, self.f)?;
        if node.features.n_frames() != h_ref_bar.n_frames() {
            return Err(Error::Shape {
                name: "node frames".into(),
                expected: vec![h_ref_bar.n_frames()],
                found: vec![node.features.n_frames()],
            });
        }
        let mut received = node.features.data.clone();
        for k in 0..node.mask.n_frames() {
            if !node.mask.current(k) {
                received.index_axis_mut(Axis(1), k).fill(0.0);
            }
        }
        let joint = concatenate(Axis(0), &[h_ref_bar.data.view(), received.view()])
            .expect("shapes checked");
        self.align_dpr.forward(&FeatureTensor {
            data: self.align.channels(&joint),
        })
    }

    /// With no nodes this reduces to the final DPR on the reference alone.
    pub fn forward(&self, h_ref_bar: &FeatureTensor, nodes: &[KeyWindows]) -> Result<FeatureTensor> {
        h_ref_bar.check_shape("reference embedding", self.d, self.f)?;
        if nodes.is_empty() {
            return self.fuse_dpr.forward(h_ref_bar);
        }
        let aligned = nodes
            .iter()
            .map(|n| self.align_node(h_ref_bar, *n))
            .collect::<Result<Vec<_>>>()?;
        let mask = WindowMask::full(h_ref_bar.n_frames(), self.past, self.future);
        let windows: Vec<_> = aligned
            .iter()
            .map(|a| KeyWindows {
                features: a,
                mask: &mask,
            })
            .collect();
        let refined = self.cwq.forward(h_ref_bar, &windows)?;
        self.fuse_dpr.forward(&refined)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Fusion, ChaCha8Rng) {
        let cfg = ModelConfig::default();
        let m = WeightManifest::random(cfg.clone(), 77).unwrap();
        (Fusion::load(&m, &cfg).unwrap(), ChaCha8Rng::seed_from_u64(77))
    }

    fn feature(rng: &mut ChaCha8Rng, t: usize) -> FeatureTensor {
        FeatureTensor {
            data: Array3::from_shape_fn((16, t, 32), |_| rng.random_range(-1.0..1.0)),
        }
    }

    #[test]
    fn no_nodes_falls_back_to_reference_refinement() {
        let (fusion, mut rng) = setup();
        let r = feature(&mut rng, 5);
        let out = fusion.forward(&r, &[]).unwrap();
        assert_eq!(out.data.dim(), (16, 5, 32));
        assert_eq!(out, fusion.fuse_dpr.forward(&r).unwrap());
    }

    #[test]
    fn node_order_does_not_matter() {
        let (fusion, mut rng) = setup();
        let r = feature(&mut rng, 6);
        let a = feature(&mut rng, 6);
        let b = feature(&mut rng, 6);
        let mask = WindowMask::full(6, 2, 0);
        let ka = KeyWindows { features: &a, mask: &mask };
        let kb = KeyWindows { features: &b, mask: &mask };
        let ab = fusion.forward(&r, &[ka, kb]).unwrap();
        let ba = fusion.forward(&r, &[kb, ka]).unwrap();
        let diff = (&ab.data - &ba.data).mapv(f64::abs).fold(0.0f64, |m, v| m.max(*v));
        assert!(diff < 1e-12, "{diff}");
        let aa = fusion.forward(&r, &[ka, ka]).unwrap();
        assert_eq!(aa, fusion.forward(&r, &[ka, ka]).unwrap());
    }

    #[test]
    fn mismatched_node_is_rejected() {
        let (fusion, mut rng) = setup();
        let r = feature(&mut rng, 6);
        let short = feature(&mut rng, 5);
        let mask = WindowMask::full(5, 2, 0);
        let err = fusion
            .forward(&r, &[KeyWindows { features: &short, mask: &mask }])
            .unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }
}
