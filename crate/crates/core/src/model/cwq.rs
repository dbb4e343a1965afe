use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::layers::{Linear, VecNorm};
use super::{FeatureTensor, ModelConfig, PaddingPolicy, WeightManifest};
use crate::error::{Error, Result};

/// Which key frames each query frame may use.
///
/// Row `k` covers frames `k - past ..= k + future`; column `o` is frame
/// `k - past + o`. Out-of-range frames are always unavailable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowMask {
    past: usize,
    future: usize,
    avail: Array2<bool>,
}

impl WindowMask {
    /// Every in-range frame available.
    pub fn full(n_frames: usize, past: usize, future: usize) -> Self {
        Self::from_fn(n_frames, past, future, |_, _| true)
    }

    /// Frames in range for which `available(query, frame)` holds.
    pub fn from_fn(
        n_frames: usize,
        past: usize,
        future: usize,
        available: impl Fn(usize, usize) -> bool,
    ) -> Self {
        let width = past + future + 1;
        let avail = Array2::from_shape_fn((n_frames, width), |(k, o)| {
            let j = k as isize - past as isize + o as isize;
            j >= 0 && (j as usize) < n_frames && available(k, j as usize)
        });
        Self {
            past,
            future,
            avail,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.avail.nrows()
    }

    pub fn past(&self) -> usize {
        self.past
    }

    pub fn future(&self) -> usize {
        self.future
    }

    /// `(frame index, available)` for every slot of query `k`'s window.
    pub fn window(&self, k: usize) -> impl Iterator<Item = (isize, bool)> + '_ {
        self.avail
            .row(k)
            .into_iter()
            .enumerate()
            .map(move |(o, &a)| (k as isize - self.past as isize + o as isize, a))
            .collect::<Vec<_>>()
            .into_iter()
    }

    /// Whether frame `k` itself had arrived when query `k` ran.
    pub fn current(&self, k: usize) -> bool {
        self.avail[[k, self.past]]
    }

    /// Window slots whose frame lies inside the sequence but is missing.
    pub fn gaps(&self) -> usize {
        (0..self.n_frames())
            .map(|k| {
                self.window(k)
                    .filter(|&(j, a)| !a && j >= 0 && (j as usize) < self.n_frames())
                    .count()
            })
            .sum()
    }
}

/// A node's feature sequence together with its availability mask.
#[derive(Debug, Clone, Copy)]
pub struct KeyWindows<'a> {
    pub features: &'a FeatureTensor,
    pub mask: &'a WindowMask,
}

/// Result of one query frame.
#[derive(Debug, Clone)]
pub struct CwqFrame {
    pub output: Array2<f64>,
    /// Softmax weights, one row per head, one column per key.
    pub weights: Vec<Vec<f64>>,
}

/// Cross-window query: the reference frame attends to a window of frames
/// from every node, and the attention output is added back onto the
/// reference frame.
///
/// Frames are flattened to `D * F'` vectors. Keys and values are layer
/// normalized and projected with projections shared by all nodes.
#[derive(Debug, Clone)]
pub struct Cwq {
    d: usize,
    f: usize,
    heads: usize,
    past: usize,
    future: usize,
    kv_norm: VecNorm,
    query: Linear,
    key: Linear,
    value: Linear,
    out: Linear,
    /// Projected key and value of the padding frame, if padding is used.
    pad_kv: Option<(Array1<f64>, Array1<f64>)>,
}

impl Cwq {
    pub fn load(m: &WeightManifest, prefix: &str, cfg: &ModelConfig) -> Result<Self> {
        let e = cfg.embed_dim();
        let kv_norm = VecNorm::load(m, &format!("{prefix}.kv_norm"), e)?;
        let key = Linear::load(m, &format!("{prefix}.key"), e, e)?;
        let value = Linear::load(m, &format!("{prefix}.value"), e, e)?;
        let learned = super::layers::vector(m, &format!("{prefix}.pad"), e)?;
        let pad = match cfg.padding {
            PaddingPolicy::Learned => Some(learned),
            PaddingPolicy::Zero => Some(Array1::zeros(e)),
            PaddingPolicy::Skip => None,
        };
        let pad_kv = pad.map(|p| {
            let n = kv_norm.rows(&p.insert_axis(ndarray::Axis(0)));
            (key.rows(&n).row(0).to_owned(), value.rows(&n).row(0).to_owned())
        });
        Ok(Self {
            d: cfg.d,
            f: cfg.f_prime,
            heads: cfg.heads,
            past: cfg.past,
            future: cfg.future,
            kv_norm,
            query: Linear::load(m, &format!("{prefix}.query"), e, e)?,
            key,
            value,
            out: Linear::load(m, &format!("{prefix}.out"), e, e)?,
            pad_kv,
        })
    }

    fn embed(&self) -> usize {
        self.d * self.f
    }

    /// Multi-head attention of one projected query over projected keys;
    /// returns the concatenated head outputs and the weights.
    fn attend(
        &self,
        q: ArrayView1<f64>,
        kv: &[(ArrayView1<f64>, ArrayView1<f64>)],
    ) -> (Array1<f64>, Vec<Vec<f64>>) {
        let dh = self.embed() / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Array1::zeros(self.embed());
        let mut all = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let span = s![h * dh..(h + 1) * dh];
            let qh = q.slice(span);
            let scores: Vec<f64> = kv
                .iter()
                .map(|(k, _)| qh.dot(&k.slice(span)) * scale)
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exp.iter().sum();
            let weights: Vec<f64> = exp.iter().map(|e| e / total).collect();
            let mut head = ctx.slice_mut(span);
            for (w, (_, v)) in weights.iter().zip(kv) {
                head.scaled_add(*w, &v.slice(span));
            }
            all.push(weights);
        }
        (ctx, all)
    }

    fn flatten(frame: ArrayView2<f64>) -> Array1<f64> {
        frame.iter().cloned().collect()
    }

    /// Attends one `D x F'` query frame to a flat list of key frames;
    /// `None` marks a missing frame and is handled by the padding policy.
    pub fn attend_frame(
        &self,
        query: ArrayView2<f64>,
        keys: &[Option<ArrayView2<f64>>],
    ) -> Result<CwqFrame> {
        if query.dim() != (self.d, self.f) {
            return Err(Error::Shape {
                name: "cwq query".into(),
                expected: vec![self.d, self.f],
                found: query.shape().to_vec(),
            });
        }
        let present: Vec<Array1<f64>> = keys
            .iter()
            .flatten()
            .map(|k| {
                if k.dim() != (self.d, self.f) {
                    return Err(Error::Shape {
                        name: "cwq key".into(),
                        expected: vec![self.d, self.f],
                        found: k.shape().to_vec(),
                    });
                }
                Ok(Self::flatten(*k))
            })
            .collect::<Result<_>>()?;
        let mut kv_owned = Vec::new();
        if !present.is_empty() {
            let rows = ndarray::stack(
                ndarray::Axis(0),
                &present.iter().map(|r| r.view()).collect::<Vec<_>>(),
            )
            .expect("equal lengths");
            let n = self.kv_norm.rows(&rows);
            kv_owned.push((self.key.rows(&n), self.value.rows(&n)));
        }
        let mut kv = Vec::new();
        let mut next = 0;
        for k in keys {
            match k {
                Some(_) => {
                    let (kk, vv) = &kv_owned[0];
                    kv.push((kk.row(next), vv.row(next)));
                    next += 1;
                }
                None => {
                    if let Some((pk, pv)) = &self.pad_kv {
                        kv.push((pk.view(), pv.view()));
                    }
                }
            }
        }
        if kv.is_empty() {
            return Err(Error::NoContext);
        }
        let q_flat = Self::flatten(query);
        let q = self.query.vec(q_flat.view());
        let (ctx, weights) = self.attend(q.view(), &kv);
        let out = self.out.vec(ctx.view()) + &q_flat;
        Ok(CwqFrame {
            output: out
                .into_shape_with_order((self.d, self.f))
                .expect("embed size"),
            weights,
        })
    }

    /// Runs the query for every frame of `query` against the windows of
    /// every node. With no nodes at all this is a [`Error::NoContext`].
    pub fn forward(&self, query: &FeatureTensor, nodes: &[KeyWindows]) -> Result<FeatureTensor> {
        query.check_shape("cwq query", self.d, self.f)?;
        let t = query.n_frames();
        let mut projected = Vec::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            node.features
                .check_shape(&format!("node {i} features"), self.d, self.f)?;
            if node.features.n_frames() != t || node.mask.n_frames() != t {
                return Err(Error::Shape {
                    name: format!("node {i} frames"),
                    expected: vec![t],
                    found: vec![node.features.n_frames(), node.mask.n_frames()],
                });
            }
            if node.mask.past() != self.past || node.mask.future() != self.future {
                return Err(Error::Config(format!(
                    "node {i} window [-{}, +{}] differs from the model's [-{}, +{}]",
                    node.mask.past(),
                    node.mask.future(),
                    self.past,
                    self.future
                )));
            }
            let n = self.kv_norm.rows(&node.features.to_rows());
            projected.push((self.key.rows(&n), self.value.rows(&n)));
        }

        let q_rows = query.to_rows();
        let q_proj = self.query.rows(&q_rows);
        let mut ctx = Array2::zeros((t, self.embed()));
        for k in 0..t {
            let mut kv = Vec::with_capacity(nodes.len() * (self.past + self.future + 1));
            for (node, (keys, values)) in nodes.iter().zip(&projected) {
                for (j, available) in node.mask.window(k) {
                    if available {
                        kv.push((keys.row(j as usize), values.row(j as usize)));
                    } else if let Some((pk, pv)) = &self.pad_kv {
                        kv.push((pk.view(), pv.view()));
                    }
                }
            }
            if kv.is_empty() {
                return Err(Error::NoContext);
            }
            let (c, _) = self.attend(q_proj.row(k), &kv);
            ctx.row_mut(k).assign(&c);
        }
        let out = self.out.rows(&ctx) + &q_rows;
        Ok(FeatureTensor::from_rows(&out, self.d, self.f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_feature(rng: &mut ChaCha8Rng, t: usize) -> FeatureTensor {
        FeatureTensor {
            data: ndarray::Array3::from_shape_fn((16, t, 32), |_| rng.random_range(-1.0..1.0)),
        }
    }

    fn cwq_with(cfg: ModelConfig, edit: impl FnOnce(&mut WeightManifest)) -> Cwq {
        let mut m = WeightManifest::random(cfg.clone(), 9).unwrap();
        edit(&mut m);
        Cwq::load(&m, "cwq1", &cfg).unwrap()
    }

    #[test]
    fn zero_output_projection_returns_query() {
        let cwq = cwq_with(ModelConfig::default(), |m| {
            m.insert("cwq1.out.weight", Tensor::zeros(vec![512, 512]));
            m.insert("cwq1.out.bias", Tensor::zeros(vec![512]));
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let q = random_feature(&mut rng, 6);
        let node = random_feature(&mut rng, 6);
        let mask = WindowMask::full(6, 2, 0);
        let out = cwq
            .forward(&q, &[KeyWindows { features: &node, mask: &mask }])
            .unwrap();
        assert_eq!(out, q);
    }

    #[test]
    fn weights_sum_to_one() {
        let cwq = cwq_with(ModelConfig::default(), |_| {});
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_feature(&mut rng, 1);
        let keys = random_feature(&mut rng, 5);
        let views: Vec<_> = (0..5).map(|t| Some(keys.frame(t))).collect();
        let mut with_gap = views.clone();
        with_gap[2] = None;
        for ks in [views, with_gap] {
            let r = cwq.attend_frame(q.frame(0), &ks).unwrap();
            assert_eq!(r.weights.len(), 4);
            for w in &r.weights {
                assert_eq!(w.len(), 5);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn frame_and_sequence_paths_agree() {
        let cwq = cwq_with(ModelConfig::default(), |_| {});
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_feature(&mut rng, 5);
        let a = random_feature(&mut rng, 5);
        let b = random_feature(&mut rng, 5);
        let mask_a = WindowMask::full(5, 2, 0);
        let mask_b = WindowMask::from_fn(5, 2, 0, |_, j| j != 3);
        let seq = cwq
            .forward(
                &q,
                &[
                    KeyWindows { features: &a, mask: &mask_a },
                    KeyWindows { features: &b, mask: &mask_b },
                ],
            )
            .unwrap();
        for k in 0..5 {
            let mut keys = Vec::new();
            for (f, m) in [(&a, &mask_a), (&b, &mask_b)] {
                for (j, avail) in m.window(k) {
                    keys.push(avail.then(|| f.frame(j as usize)));
                }
            }
            let frame = cwq.attend_frame(q.frame(k), &keys).unwrap();
            let diff = (&frame.output - &seq.frame(k)).mapv(f64::abs).fold(0.0, |m: f64, v| m.max(*v));
            assert!(diff < 1e-9, "frame {k}: {diff}");
        }
    }

    #[test]
    fn empty_context_is_an_error() {
        let cfg = ModelConfig {
            padding: PaddingPolicy::Skip,
            ..Default::default()
        };
        let cwq = cwq_with(cfg, |_| {});
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_feature(&mut rng, 3);
        assert!(matches!(cwq.forward(&q, &[]), Err(Error::NoContext)));
        let node = random_feature(&mut rng, 3);
        let dropped = WindowMask::from_fn(3, 2, 0, |_, _| false);
        let r = cwq.forward(&q, &[KeyWindows { features: &node, mask: &dropped }]);
        assert!(matches!(r, Err(Error::NoContext)));
        assert!(matches!(
            cwq.attend_frame(q.frame(0), &[None, None]),
            Err(Error::NoContext)
        ));
    }

    #[test]
    fn padding_keeps_fully_dropped_nodes_usable() {
        for padding in [PaddingPolicy::Learned, PaddingPolicy::Zero] {
            let cfg = ModelConfig {
                padding,
                ..Default::default()
            };
            let cwq = cwq_with(cfg, |_| {});
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let q = random_feature(&mut rng, 3);
            let node = random_feature(&mut rng, 3);
            let dropped = WindowMask::from_fn(3, 2, 0, |_, _| false);
            let out = cwq
                .forward(&q, &[KeyWindows { features: &node, mask: &dropped }])
                .unwrap();
            assert!(out.data.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn mask_bookkeeping() {
        let m = WindowMask::from_fn(4, 2, 0, |k, j| !(k == 3 && j == 2));
        assert_eq!(m.window(0).collect::<Vec<_>>(), vec![(-2, false), (-1, false), (0, true)]);
        assert!(m.current(3));
        assert_eq!(m.gaps(), 1);
        assert_eq!(WindowMask::full(4, 2, 0).gaps(), 0);
    }
}
