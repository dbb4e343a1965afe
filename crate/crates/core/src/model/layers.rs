//! Building blocks. Activations are laid out `C x T x F`.

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, Axis};

use super::WeightManifest;
use crate::error::Result;

const NORM_EPS: f64 = 1e-5;

pub(crate) fn vector(m: &WeightManifest, name: &str, n: usize) -> Result<Array1<f64>> {
    Ok(Array1::from(m.get(name, &[n])?.to_f64()))
}

pub(crate) fn matrix(m: &WeightManifest, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
    let t = m.get(name, &[rows, cols])?;
    Ok(Array2::from_shape_vec((rows, cols), t.to_f64()).expect("shape checked"))
}

fn tensor4(m: &WeightManifest, name: &str, shape: [usize; 4]) -> Result<Array4<f64>> {
    let t = m.get(name, &shape)?;
    Ok(Array4::from_shape_vec(shape, t.to_f64()).expect("shape checked"))
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    /// `out x in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn load(m: &WeightManifest, prefix: &str, n_out: usize, n_in: usize) -> Result<Self> {
        Ok(Self {
            weight: matrix(m, &format!("{prefix}.weight"), n_out, n_in)?,
            bias: vector(m, &format!("{prefix}.bias"), n_out)?,
        })
    }

    /// Applies the layer to every row of `x`.
    pub fn rows(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }

    pub fn vec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.weight.dot(&x) + &self.bias
    }

    /// Pointwise channel mixing of a `C_in x T x F` tensor.
    pub fn channels(&self, x: &Array3<f64>) -> Array3<f64> {
        let (c, t, f) = x.dim();
        let flat = x.view().into_shape_with_order((c, t * f)).expect("contiguous");
        let mixed = self.weight.dot(&flat) + &self.bias.view().insert_axis(Axis(1));
        mixed
            .into_shape_with_order((self.weight.nrows(), t, f))
            .expect("size preserved")
    }
}

/// Layer normalization over all channels and bins of one frame, with a
/// per-channel affine map. Depends on a single frame only.
#[derive(Debug, Clone)]
pub(crate) struct FrameNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl FrameNorm {
    pub fn load(m: &WeightManifest, prefix: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: vector(m, &format!("{prefix}.gamma"), channels)?,
            beta: vector(m, &format!("{prefix}.beta"), channels)?,
        })
    }

    pub fn apply(&self, x: &mut Array3<f64>) {
        let (c, t, f) = x.dim();
        let n = (c * f) as f64;
        for ti in 0..t {
            let mut frame = x.index_axis_mut(Axis(1), ti);
            let mean = frame.sum() / n;
            let var = frame.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for (ci, mut row) in frame.outer_iter_mut().enumerate() {
                let (g, b) = (self.gamma[ci], self.beta[ci]);
                row.mapv_inplace(|v| (v - mean) * inv * g + b);
            }
        }
    }
}

/// Layer normalization of a flat vector with elementwise affine map.
#[derive(Debug, Clone)]
pub(crate) struct VecNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl VecNorm {
    pub fn load(m: &WeightManifest, prefix: &str, n: usize) -> Result<Self> {
        Ok(Self {
            gamma: vector(m, &format!("{prefix}.gamma"), n)?,
            beta: vector(m, &format!("{prefix}.beta"), n)?,
        })
    }

    pub fn rows(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        let n = x.ncols() as f64;
        for mut row in out.outer_iter_mut() {
            let mean = row.sum() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for ((v, g), b) in row.iter_mut().zip(&self.gamma).zip(&self.beta) {
                *v = (*v - mean) * inv * g + b;
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Prelu {
    pub slope: Array1<f64>,
}

impl Prelu {
    pub fn load(m: &WeightManifest, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            slope: vector(m, name, channels)?,
        })
    }

    pub fn apply(&self, x: &mut Array3<f64>) {
        for (mut ch, &a) in x.outer_iter_mut().zip(&self.slope) {
            ch.mapv_inplace(|v| if v >= 0.0 { v } else { a * v });
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-layer GRU with gate order (reset, update, new).
#[derive(Debug, Clone)]
pub(crate) struct Gru {
    w_ih: Array2<f64>,
    w_hh: Array2<f64>,
    b_ih: Array1<f64>,
    b_hh: Array1<f64>,
    hidden: usize,
}

impl Gru {
    pub fn load(m: &WeightManifest, prefix: &str, input: usize, hidden: usize) -> Result<Self> {
        Ok(Self {
            w_ih: matrix(m, &format!("{prefix}.w_ih"), 3 * hidden, input)?,
            w_hh: matrix(m, &format!("{prefix}.w_hh"), 3 * hidden, hidden)?,
            b_ih: vector(m, &format!("{prefix}.b_ih"), 3 * hidden)?,
            b_hh: vector(m, &format!("{prefix}.b_hh"), 3 * hidden)?,
            hidden,
        })
    }

    /// Runs over the rows of `seq` (`L x input`) from a zero state;
    /// `reverse` walks from the last row to the first.
    pub fn run(&self, seq: ArrayView2<f64>, reverse: bool) -> Array2<f64> {
        let h = self.hidden;
        let gx = seq.dot(&self.w_ih.t()) + &self.b_ih;
        let len = seq.nrows();
        let mut out = Array2::zeros((len, h));
        let mut state = Array1::<f64>::zeros(h);
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..len).rev())
        } else {
            Box::new(0..len)
        };
        for i in order {
            let gh = self.w_hh.dot(&state) + &self.b_hh;
            let gxi = gx.row(i);
            let mut next = Array1::zeros(h);
            for j in 0..h {
                let r = sigmoid(gxi[j] + gh[j]);
                let z = sigmoid(gxi[h + j] + gh[h + j]);
                let n = (gxi[2 * h + j] + r * gh[2 * h + j]).tanh();
                next[j] = (1.0 - z) * n + z * state[j];
            }
            out.row_mut(i).assign(&next);
            state = next;
        }
        out
    }
}

/// 2-D convolution, causal along time, stride 2 along frequency.
///
/// Output bin `f` reads input bins `2f .. 2f + kf`; bins past the input
/// edge read zero (right-side padding only).
#[derive(Debug, Clone)]
pub(crate) struct FreqDownConv {
    /// `out x in x kt x kf`
    weight: Array4<f64>,
    bias: Array1<f64>,
}

impl FreqDownConv {
    pub fn load(
        m: &WeightManifest,
        prefix: &str,
        c_out: usize,
        c_in: usize,
        kt: usize,
        kf: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: tensor4(m, &format!("{prefix}.weight"), [c_out, c_in, kt, kf])?,
            bias: vector(m, &format!("{prefix}.bias"), c_out)?,
        })
    }

    pub fn forward(&self, x: &Array3<f64>, out_bins: usize) -> Array3<f64> {
        let (c_out, c_in, kt, kf) = self.weight.dim();
        let (_, t, f_in) = x.dim();
        let mut out = Array3::zeros((c_out, t, out_bins));
        for co in 0..c_out {
            let mut plane = out.index_axis_mut(Axis(0), co);
            plane.fill(self.bias[co]);
            for ci in 0..c_in {
                let input = x.index_axis(Axis(0), ci);
                for dt in 0..kt {
                    let lag = kt - 1 - dt;
                    for df in 0..kf {
                        let w = self.weight[[co, ci, dt, df]];
                        if w == 0.0 {
                            continue;
                        }
                        for ti in lag..t {
                            let src = input.row(ti - lag);
                            let mut dst = plane.row_mut(ti);
                            for fo in 0..out_bins {
                                let fi = 2 * fo + df;
                                if fi < f_in {
                                    dst[fo] += w * src[fi];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Transposed counterpart of [`FreqDownConv`]: input bin `f` scatters to
/// output bins `2f .. 2f + kf`, cropped to `out_bins`.
#[derive(Debug, Clone)]
pub(crate) struct FreqUpConv {
    /// `in x out x kt x kf`
    weight: Array4<f64>,
    bias: Array1<f64>,
}

impl FreqUpConv {
    pub fn load(
        m: &WeightManifest,
        prefix: &str,
        c_in: usize,
        c_out: usize,
        kt: usize,
        kf: usize,
    ) -> Result<Self> {
        Ok(Self {
            weight: tensor4(m, &format!("{prefix}.weight"), [c_in, c_out, kt, kf])?,
            bias: vector(m, &format!("{prefix}.bias"), c_out)?,
        })
    }

    pub fn forward(&self, x: &Array3<f64>, out_bins: usize) -> Array3<f64> {
        let (c_in, c_out, kt, kf) = self.weight.dim();
        let (_, t, f_in) = x.dim();
        let mut out = Array3::zeros((c_out, t, out_bins));
        for co in 0..c_out {
            let mut plane = out.index_axis_mut(Axis(0), co);
            plane.fill(self.bias[co]);
            for ci in 0..c_in {
                let input = x.index_axis(Axis(0), ci);
                for dt in 0..kt {
                    let lag = kt - 1 - dt;
                    for df in 0..kf {
                        let w = self.weight[[ci, co, dt, df]];
                        if w == 0.0 {
                            continue;
                        }
                        for ti in lag..t {
                            let src = input.row(ti - lag);
                            let mut dst = plane.row_mut(ti);
                            for fi in 0..f_in {
                                let fo = 2 * fi + df;
                                if fo < out_bins {
                                    dst[fo] += w * src[fi];
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
