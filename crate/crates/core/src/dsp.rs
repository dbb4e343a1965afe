//! Short-time Fourier analysis and synthesis, node input features and
//! Griffin-Lim phase reconstruction.
//!
//! Frames are not center padded: a signal of `n` samples yields
//! `1 + (n - win_len) / hop` frames, and synthesis returns
//! `(frames - 1) * hop + win_len` samples.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mono sample buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub fs: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, fs: u32) -> Self {
        Self { samples, fs }
    }

    pub fn zeros(len: usize, fs: u32) -> Self {
        Self::new(vec![0.0; len], fs)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.fs as f64
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WindowKind {
    #[default]
    Hann,
}

impl WindowKind {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub fs: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            win_len: 512,
            hop: 256,
            window: WindowKind::Hann,
            fs: 16_000,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fs == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if self.hop == 0 || self.win_len != 2 * self.hop {
            return Err(Error::Config(format!(
                "window length {} must be twice the hop {}",
                self.win_len, self.hop
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.win_len / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.win_len {
            0
        } else {
            1 + (n_samples - self.win_len) / self.hop
        }
    }

    /// Samples produced by synthesizing `n_frames` frames.
    pub fn synthesis_len(&self, n_frames: usize) -> usize {
        if n_frames == 0 {
            0
        } else {
            (n_frames - 1) * self.hop + self.win_len
        }
    }
}

/// One-sided complex time-frequency matrix, frames along rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub data: Array2<Complex64>,
    pub config: StftConfig,
}

impl Spectrogram {
    pub fn new(data: Array2<Complex64>, config: StftConfig) -> Result<Self> {
        config.validate()?;
        if data.ncols() != config.n_bins() {
            return Err(Error::Shape {
                name: "spectrogram".into(),
                expected: vec![data.nrows(), config.n_bins()],
                found: data.shape().to_vec(),
            });
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("spectrogram"));
        }
        Ok(Self { data, config })
    }

    pub fn from_polar(
        mag: ArrayView2<f64>,
        phase: ArrayView2<f64>,
        config: StftConfig,
    ) -> Result<Self> {
        if mag.dim() != phase.dim() {
            return Err(Error::Shape {
                name: "phase".into(),
                expected: mag.shape().to_vec(),
                found: phase.shape().to_vec(),
            });
        }
        let mut data = Array2::zeros(mag.dim());
        ndarray::Zip::from(&mut data)
            .and(&mag)
            .and(&phase)
            .for_each(|d, &m, &p| *d = Complex64::from_polar(m, p));
        Self::new(data, config)
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.data.ncols()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.data.mapv(|c| c.norm())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.data.mapv(|c| c.arg())
    }
}

/// Node input maps stacked as `3 x T x F`: compressed magnitude, cosine
/// and sine of the phase.
#[derive(Debug, Clone, PartialEq)]
pub struct InputFeature {
    pub maps: Array3<f64>,
}

impl InputFeature {
    pub fn n_frames(&self) -> usize {
        self.maps.len_of(Axis(1))
    }

    pub fn n_bins(&self) -> usize {
        self.maps.len_of(Axis(2))
    }
}

struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }
}

pub fn stft(x: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if x.len() < cfg.win_len {
        return Err(Error::InsufficientSamples {
            needed: cfg.win_len,
            got: x.len(),
        });
    }
    let fft = FftPair::new(cfg.win_len);
    Ok(stft_with(&fft, &x.samples, cfg))
}

fn stft_with(fft: &FftPair, x: &[f64], cfg: &StftConfig) -> Spectrogram {
    let n_frames = cfg.n_frames(x.len());
    let n_bins = cfg.n_bins();
    let window = cfg.window.coefficients(cfg.win_len);
    let mut data = Array2::zeros((n_frames, n_bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.win_len];
    for (t, mut row) in data.outer_iter_mut().enumerate() {
        let start = t * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(x[start + i] * window[i], 0.0);
        }
        fft.forward.process(&mut buf);
        for (dst, src) in row.iter_mut().zip(buf.iter()) {
            *dst = *src;
        }
    }
    Spectrogram { data, config: *cfg }
}

/// Least-squares overlap-add synthesis: each inverse frame is weighted by
/// the synthesis window and the sum is normalized by the overlapped
/// squared-window envelope.
pub fn istft(s: &Spectrogram) -> Result<Waveform> {
    s.config.validate()?;
    if s.n_bins() != s.config.n_bins() {
        return Err(Error::Shape {
            name: "spectrogram".into(),
            expected: vec![s.n_frames(), s.config.n_bins()],
            found: s.data.shape().to_vec(),
        });
    }
    let fft = FftPair::new(s.config.win_len);
    Ok(istft_with(&fft, s))
}

/// Lower bound of the synthesis normalizer relative to its steady-state
/// peak. Only the outer half-windows of a signal are affected.
pub const ENVELOPE_FLOOR: f64 = 0.1;

fn steady_envelope_peak(window: &[f64], hop: usize) -> f64 {
    (0..hop)
        .map(|r| window.iter().skip(r).step_by(hop).map(|w| w * w).sum::<f64>())
        .fold(0.0, f64::max)
}

fn istft_with(fft: &FftPair, s: &Spectrogram) -> Waveform {
    let cfg = &s.config;
    let n = cfg.win_len;
    let len = cfg.synthesis_len(s.n_frames());
    let window = cfg.window.coefficients(n);
    let mut out = vec![0.0; len];
    let mut envelope = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (t, row) in s.data.outer_iter().enumerate() {
        hermitian_complete(row.as_slice().expect("standard layout"), &mut buf);
        fft.inverse.process(&mut buf);
        let start = t * cfg.hop;
        for i in 0..n {
            out[start + i] += buf[i].re / n as f64 * window[i];
            envelope[start + i] += window[i] * window[i];
        }
    }
    // Near both ends only one frame covers a sample and the envelope falls
    // to ~1e-9; dividing by it would blow up any inconsistency in `s`.
    let floor = ENVELOPE_FLOOR * steady_envelope_peak(&window, cfg.hop);
    for (o, e) in out.iter_mut().zip(envelope.iter()) {
        *o /= e.max(floor);
    }
    Waveform::new(out, cfg.fs)
}

/// Fill a full-length spectrum from its one-sided half. DC and Nyquist
/// bins are forced real.
fn hermitian_complete(half: &[Complex64], full: &mut [Complex64]) {
    let n = full.len();
    let n_bins = half.len();
    full[0] = Complex64::new(half[0].re, 0.0);
    for k in 1..n_bins - 1 {
        full[k] = half[k];
        full[n - k] = half[k].conj();
    }
    full[n_bins - 1] = Complex64::new(half[n_bins - 1].re, 0.0);
}

/// Compressed magnitude `|S|^alpha` plus phase cosine and sine. Bins with
/// zero magnitude get the phase maps `(1, 0)`.
pub fn extract_features(s: &Spectrogram, alpha: f64) -> Result<InputFeature> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("alpha {alpha} outside (0, 1]")));
    }
    let (t, f) = s.data.dim();
    let mut maps = Array3::zeros((3, t, f));
    for ((ti, fi), c) in s.data.indexed_iter() {
        let mag = c.norm();
        let (cos, sin) = if mag > 0.0 {
            (c.re / mag, c.im / mag)
        } else {
            (1.0, 0.0)
        };
        maps[[0, ti, fi]] = mag.powf(alpha);
        maps[[1, ti, fi]] = cos;
        maps[[2, ti, fi]] = sin;
    }
    Ok(InputFeature { maps })
}

/// Griffin-Lim phase retrieval starting from `init_phase`.
///
/// Runs `iters` rounds of synthesis, re-analysis and magnitude
/// replacement, then synthesizes once more. `iters = 0` is plain
/// synthesis of `mag * exp(i * init_phase)`.
pub fn griffin_lim(
    mag: ArrayView2<f64>,
    init_phase: ArrayView2<f64>,
    iters: usize,
    cfg: &StftConfig,
) -> Result<Waveform> {
    if mag.iter().any(|&m| m < 0.0 || !m.is_finite()) {
        return Err(Error::Config(
            "magnitude must be finite and non-negative".into(),
        ));
    }
    let fft = FftPair::new(cfg.win_len);
    let mut spec = Spectrogram::from_polar(mag, init_phase, *cfg)?;
    let mut x = istft_with(&fft, &spec);
    for _ in 0..iters {
        let rebuilt = stft_with(&fft, &x.samples, cfg);
        ndarray::Zip::from(&mut spec.data)
            .and(&rebuilt.data)
            .and(&mag)
            .for_each(|dst, &c, &m| {
                let norm = c.norm();
                *dst = if norm > 0.0 {
                    c * (m / norm)
                } else {
                    Complex64::new(m, 0.0)
                };
            });
        x = istft_with(&fft, &spec);
    }
    Ok(x)
}

/// `|| P(S) - S ||_F` where `P` replaces the magnitude of `S = stft(x)` by
/// `mag`. Zero when `x` has exactly the target magnitude.
pub fn consistency_residual(x: &Waveform, mag: ArrayView2<f64>, cfg: &StftConfig) -> Result<f64> {
    let s = stft(x, cfg)?;
    if s.data.dim() != mag.dim() {
        return Err(Error::Shape {
            name: "magnitude".into(),
            expected: s.data.shape().to_vec(),
            found: mag.shape().to_vec(),
        });
    }
    let mut acc = 0.0;
    ndarray::Zip::from(&s.data).and(&mag).for_each(|&c, &m| {
        let norm = c.norm();
        let projected = if norm > 0.0 {
            c * (m / norm)
        } else {
            Complex64::new(m, 0.0)
        };
        acc += (projected - c).norm_sqr();
    });
    Ok(acc.sqrt())
}

/// Linear-interpolation resampler used on WAV import.
pub fn resample_linear(x: &Waveform, fs: u32) -> Waveform {
    if x.fs == fs || x.is_empty() {
        return Waveform::new(x.samples.clone(), fs);
    }
    let ratio = x.fs as f64 / fs as f64;
    let out_len = ((x.len() as f64) / ratio).floor().max(1.0) as usize;
    let last = x.len() - 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let i0 = (pos.floor() as usize).min(last);
            let i1 = (i0 + 1).min(last);
            let frac = pos - i0 as f64;
            x.samples[i0] * (1.0 - frac) + x.samples[i1] * frac
        })
        .collect();
    Waveform::new(samples, fs)
}

/// Full linear convolution (`a.len() + b.len() - 1` samples) via FFT.
pub fn fft_convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let load = |x: &[f64]| {
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf.iter_mut().zip(x).for_each(|(d, &v)| d.re = v);
        fwd.process(&mut buf);
        buf
    };
    let mut fa = load(a);
    let fb = load(b);
    fa.iter_mut().zip(&fb).for_each(|(x, y)| *x *= y);
    inv.process(&mut fa);
    fa[..out_len].iter().map(|c| c.re / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(len: usize, seed: u64) -> Waveform {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 16_000)
    }

    #[test]
    fn zero_input_gives_zero_spectrogram() {
        let cfg = StftConfig::default();
        let s = stft(&Waveform::zeros(64_000, 16_000), &cfg).unwrap();
        assert_eq!(s.data.dim(), (249, 257));
        assert!(s.data.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn short_signal_is_rejected() {
        let cfg = StftConfig::default();
        let err = stft(&Waveform::zeros(511, 16_000), &cfg).unwrap_err();
        assert!(err.to_string().contains("insufficient samples"));
    }

    #[test]
    fn mismatched_window_and_hop_rejected() {
        let cfg = StftConfig {
            hop: 128,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cosine_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let f0 = 16.0 * cfg.fs as f64 / cfg.win_len as f64;
        let x = Waveform::new(
            (0..8000)
                .map(|n| (2.0 * PI * f0 * n as f64 / cfg.fs as f64).cos())
                .collect(),
            cfg.fs,
        );
        let s = stft(&x, &cfg).unwrap();

        // Direct DFT of the first windowed frame.
        let w = cfg.window.coefficients(cfg.win_len);
        let oracle: Vec<f64> = (0..cfg.n_bins())
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for n in 0..cfg.win_len {
                    let ang = -2.0 * PI * (k * n) as f64 / cfg.win_len as f64;
                    acc += Complex64::from_polar(x.samples[n] * w[n], ang);
                }
                acc.norm()
            })
            .collect();
        for (k, o) in oracle.iter().enumerate() {
            assert!((s.data[[0, k]].norm() - o).abs() < 1e-8, "bin {k}");
        }

        for row in s.magnitude().outer_iter() {
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(peak, 16);
            let total: f64 = row.iter().map(|m| m * m).sum();
            let near: f64 = (15..=17).map(|k| row[k] * row[k]).sum();
            assert!(near / total > 1.0 - 1e-12);
        }
    }

    #[test]
    fn round_trip_interior() {
        let cfg = StftConfig::default();
        let x = random_signal(20_000, 3);
        let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
        assert_eq!(y.len(), cfg.synthesis_len(cfg.n_frames(x.len())));
        let peak = x.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for n in cfg.win_len..y.len() - cfg.win_len {
            assert!((x.samples[n] - y.samples[n]).abs() <= 1e-6 * peak);
        }
    }

    #[test]
    fn inconsistent_spectrogram_stays_bounded_at_edges() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = Array2::from_shape_fn((20, 257), |_| {
            Complex64::from_polar(1.0, rng.random_range(-PI..PI))
        });
        let y = istft(&Spectrogram::new(data, cfg).unwrap()).unwrap();
        let interior = y.samples[512..y.len() - 512]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let all = y.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(all < 4.0 * interior, "{all} vs {interior}");
    }

    #[test]
    fn zero_spectrogram_synthesizes_silence() {
        let cfg = StftConfig::default();
        let s = Spectrogram::new(Array2::zeros((10, 257)), cfg).unwrap();
        let y = istft(&s).unwrap();
        assert_eq!(y.len(), 9 * 256 + 512);
        assert!(y.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hermitian_completion_is_real() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let half: Vec<Complex64> = (0..257)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let mut full = vec![Complex64::new(0.0, 0.0); 512];
        hermitian_complete(&half, &mut full);
        FftPair::new(512).inverse.process(&mut full);
        let residue = full.iter().map(|c| c.im.abs() / 512.0).fold(0.0, f64::max);
        assert!(residue < 1e-9, "{residue}");
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = random_signal(4096, 5);
        let s = stft(&x, &cfg).unwrap();
        let w = cfg.window.coefficients(cfg.win_len);
        for (t, row) in s.data.outer_iter().enumerate() {
            let start = t * cfg.hop;
            let energy: f64 = (0..cfg.win_len)
                .map(|i| (x.samples[start + i] * w[i]).powi(2))
                .sum();
            let last = row.len() - 1;
            let spec: f64 = row
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if k == 0 || k == last {
                        c.norm_sqr()
                    } else {
                        2.0 * c.norm_sqr()
                    }
                })
                .sum::<f64>()
                / cfg.win_len as f64;
            assert!((energy - spec).abs() <= 1e-6 * energy);
        }
    }

    #[test]
    fn feature_conventions() {
        let cfg = StftConfig::default();
        let zero = Spectrogram::new(Array2::zeros((4, 257)), cfg).unwrap();
        let f = extract_features(&zero, 0.5).unwrap();
        assert_eq!(f.maps.dim(), (3, 4, 257));
        assert!(f.maps.index_axis(Axis(0), 0).iter().all(|&v| v == 0.0));
        assert!(f.maps.index_axis(Axis(0), 1).iter().all(|&v| v == 1.0));
        assert!(f.maps.index_axis(Axis(0), 2).iter().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let unit = Array2::from_shape_fn((5, 257), |_| {
            Complex64::from_polar(1.0, rng.random_range(-PI..PI))
        });
        let f = extract_features(&Spectrogram::new(unit, cfg).unwrap(), 1.0).unwrap();
        for t in 0..5 {
            for k in 0..257 {
                assert!((f.maps[[0, t, k]] - 1.0).abs() < 1e-12);
                let r = f.maps[[1, t, k]].powi(2) + f.maps[[2, t, k]].powi(2);
                assert!((r - 1.0).abs() < 1e-12);
            }
        }
        assert!(extract_features(&zero, 0.0).is_err());
        assert!(extract_features(&zero, 1.5).is_err());
    }

    #[test]
    fn griffin_lim_zero_iterations_is_plain_synthesis() {
        let cfg = StftConfig::default();
        let s = stft(&random_signal(6000, 9), &cfg).unwrap();
        let direct = istft(&s).unwrap();
        let gla = griffin_lim(s.magnitude().view(), s.phase().view(), 0, &cfg).unwrap();
        assert_eq!(direct.len(), gla.len());
        // polar round trip rounding is amplified where the window envelope
        // is tiny (first and last few samples)
        for (a, b) in direct.samples.iter().zip(gla.samples.iter()) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn griffin_lim_fixed_point() {
        let cfg = StftConfig::default();
        let x = random_signal(16_000, 4);
        let s = stft(&x, &cfg).unwrap();
        let y = griffin_lim(s.magnitude().view(), s.phase().view(), 1, &cfg).unwrap();
        let peak = x.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for n in cfg.win_len..y.len() - cfg.win_len {
            assert!((x.samples[n] - y.samples[n]).abs() <= 1e-5 * peak);
        }
    }

    #[test]
    fn griffin_lim_does_not_increase_inconsistency() {
        let cfg = StftConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let mag = Array2::from_shape_fn((30, 257), |_| rng.random_range(0.0..2.0));
            let phase = Array2::from_shape_fn((30, 257), |_| rng.random_range(-PI..PI));
            let r0 = griffin_lim(mag.view(), phase.view(), 0, &cfg).unwrap();
            let r1 = griffin_lim(mag.view(), phase.view(), 1, &cfg).unwrap();
            let e0 = consistency_residual(&r0, mag.view(), &cfg).unwrap();
            let e1 = consistency_residual(&r1, mag.view(), &cfg).unwrap();
            assert!(e1 <= e0 * (1.0 + 1e-12), "{e1} > {e0}");
        }
    }

    #[test]
    fn negative_magnitude_rejected() {
        let cfg = StftConfig::default();
        let mag = Array2::from_elem((3, 257), -1.0);
        let phase = Array2::zeros((3, 257));
        assert!(griffin_lim(mag.view(), phase.view(), 1, &cfg).is_err());
    }

    #[test]
    fn linear_resample_halves_length() {
        let x = Waveform::new((0..3200).map(|n| n as f64).collect(), 32_000);
        let y = resample_linear(&x, 16_000);
        assert_eq!(y.len(), 1600);
        assert_eq!(y.fs, 16_000);
        assert!((y.samples[10] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let a = random_signal(300, 1).samples;
        let b = random_signal(41, 2).samples;
        let c = fft_convolve(&a, &b);
        assert_eq!(c.len(), 340);
        for (n, v) in c.iter().enumerate() {
            let direct: f64 = (0..b.len())
                .filter(|&k| n >= k && n - k < a.len())
                .map(|k| b[k] * a[n - k])
                .sum();
            assert!((v - direct).abs() < 1e-10);
        }
    }
}
