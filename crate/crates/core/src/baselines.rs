//! Oracle MVDR beamformer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dsp::{istft, stft, Spectrogram, StftConfig, Waveform};
use crate::error::{Error, Result};
use crate::scene::{Scene, REFERENCE_CHANNEL};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative diagonal loading applied to the noise covariance.
pub const DIAGONAL_LOADING: f64 = 1e-6;

/// Analysis window of the beamformer. Longer than the network's 32 ms so
/// that more of the room response fits in one frame and the speech
/// covariance stays close to rank one.
pub const MVDR_WIN_LEN: usize = 1024;

pub fn mvdr_stft_config() -> StftConfig {
    StftConfig {
        win_len: MVDR_WIN_LEN,
        hop: MVDR_WIN_LEN / 2,
        ..StftConfig::default()
    }
}

/// Per-bin spatial covariances of the speech and noise images.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialCovariance {
    pub speech: Vec<CMatrix>,
    /// Includes diagonal loading.
    pub noise: Vec<CMatrix>,
    pub frames: usize,
}

impl SpatialCovariance {
    pub fn n_channels(&self) -> usize {
        self.speech.first().map_or(0, |m| m.nrows())
    }

    pub fn n_bins(&self) -> usize {
        self.speech.len()
    }
}

fn check_stack(name: &str, specs: &[Spectrogram], dim: (usize, usize)) -> Result<()> {
    for s in specs {
        if s.data.dim() != dim {
            return Err(Error::Shape {
                name: name.into(),
                expected: vec![dim.0, dim.1],
                found: s.data.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Time-averaged outer products `(1/T) sum_t x_t x_t^H` per bin.
fn covariance(specs: &[Spectrogram]) -> Vec<CMatrix> {
    let m = specs.len();
    let (t, f) = specs[0].data.dim();
    (0..f)
        .into_par_iter()
        .map(|k| {
            let mut r = CMatrix::zeros(m, m);
            for i in 0..m {
                for j in i..m {
                    let acc: Complex64 = (0..t)
                        .map(|n| specs[i].data[[n, k]] * specs[j].data[[n, k]].conj())
                        .sum();
                    r[(i, j)] = acc / t as f64;
                    r[(j, i)] = r[(i, j)].conj();
                }
                r[(i, i)].im = 0.0;
            }
            r
        })
        .collect()
}

pub fn estimate_oracle_cov(speech: &[Spectrogram], noise: &[Spectrogram]) -> Result<SpatialCovariance> {
    if speech.is_empty() || speech.len() != noise.len() {
        return Err(Error::Shape {
            name: "oracle channels".into(),
            expected: vec![speech.len()],
            found: vec![noise.len()],
        });
    }
    let dim = speech[0].data.dim();
    check_stack("speech spectrogram", speech, dim)?;
    check_stack("noise spectrogram", noise, dim)?;
    let m = speech.len();
    if dim.0 < m {
        return Err(Error::RankDeficient {
            frames: dim.0,
            channels: m,
        });
    }
    let speech_cov = covariance(speech);
    let noise_cov = covariance(noise)
        .into_iter()
        .map(|mut r| {
            let load = DIAGONAL_LOADING * r.trace().re / m as f64;
            for i in 0..m {
                r[(i, i)].re += load;
            }
            r
        })
        .collect();
    Ok(SpatialCovariance {
        speech: speech_cov,
        noise: noise_cov,
        frames: dim.0,
    })
}

/// Principal eigenvector of a Hermitian matrix, scaled so the reference
/// entry is 1. A vanishing reference entry leaves it unit-norm.
pub fn steering_vector(r_s: &CMatrix, reference: usize) -> CVector {
    let eig = SymmetricEigen::new(r_s.clone());
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    let v: CVector = eig.eigenvectors.column(top).into_owned();
    let r = v[reference];
    if r.norm() > 1e-12 * v.norm() {
        v / r
    } else {
        v
    }
}

/// `w = R_n^-1 d / (d^H R_n^-1 d)`; `bin` only labels errors.
pub fn mvdr_weights(r_n: &CMatrix, d: &CVector, bin: usize) -> Result<CVector> {
    let chol = r_n.clone().cholesky().ok_or(Error::Singular(bin))?;
    let rd = chol.solve(d);
    let denom = d.dotc(&rd);
    if !(denom.norm() > 0.0 && denom.is_finite()) {
        return Err(Error::Singular(bin));
    }
    Ok(rd / denom)
}

pub fn delay_and_sum_weights(d: &CVector) -> CVector {
    d / Complex64::from(d.norm_squared())
}

/// Filter-and-sum `y = w^H x` per bin followed by inverse STFT.
pub fn mvdr_enhance(mix: &[Spectrogram], cov: &SpatialCovariance, reference: usize) -> Result<Waveform> {
    let m = mix.len();
    if m == 0 || m != cov.n_channels() {
        return Err(Error::Shape {
            name: "mixture channels".into(),
            expected: vec![cov.n_channels()],
            found: vec![m],
        });
    }
    if reference >= m {
        return Err(Error::Config(format!("reference channel {reference} of {m}")));
    }
    let dim = mix[0].data.dim();
    check_stack("mixture spectrogram", mix, dim)?;
    if dim.1 != cov.n_bins() {
        return Err(Error::Shape {
            name: "covariance bins".into(),
            expected: vec![dim.1],
            found: vec![cov.n_bins()],
        });
    }
    let weights = (0..dim.1)
        .into_par_iter()
        .map(|k| {
            if m == 1 {
                return Ok(CVector::from_element(1, Complex64::new(1.0, 0.0)));
            }
            let d = steering_vector(&cov.speech[k], reference);
            mvdr_weights(&cov.noise[k], &d, k)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = Array2::from_shape_fn(dim, |(t, k)| {
        (0..m)
            .map(|c| weights[k][c].conj() * mix[c].data[[t, k]])
            .sum::<Complex64>()
    });
    istft(&Spectrogram::new(out, mix[0].config)?)
}

fn fit(mut w: Waveform, len: usize) -> Waveform {
    w.samples.resize(len, 0.0);
    w
}

/// Oracle MVDR on a rendered scene using its separated speech and noise
/// images; output has the mixture length.
pub fn oracle_mvdr(scene: &Scene, cfg: &StftConfig) -> Result<Waveform> {
    let specs = |ws: &[Waveform]| ws.iter().map(|w| stft(w, cfg)).collect::<Result<Vec<_>>>();
    let cov = estimate_oracle_cov(&specs(&scene.speech)?, &specs(&scene.noise)?)?;
    let out = mvdr_enhance(&specs(&scene.mix)?, &cov, REFERENCE_CHANNEL)?;
    Ok(fit(out, scene.reference().len()))
}
