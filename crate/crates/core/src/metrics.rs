//! Quality metrics and transmission accounting.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::dsp::Waveform;
use crate::error::{Error, Result};

/// Normalized sample amount: values sent per microphone relative to the raw
/// waveform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NsaReport {
    pub frames: usize,
    pub d: usize,
    pub f_prime: usize,
    pub rank: usize,
    pub hop: usize,
    /// `frames * (d + f_prime) * rank`
    pub total_samples_sent: usize,
    pub raw_samples: usize,
    pub nsa: f64,
    /// Long-signal limit `(d + f_prime) * rank / hop`.
    pub asymptotic: f64,
}

impl NsaReport {
    pub fn compute(
        frames: usize,
        d: usize,
        f_prime: usize,
        rank: usize,
        raw_samples: usize,
        hop: usize,
    ) -> Result<Self> {
        if frames == 0 || d == 0 || f_prime == 0 || rank == 0 || raw_samples == 0 || hop == 0 {
            return Err(Error::Config("NSA inputs must all be positive".into()));
        }
        let sent = frames * (d + f_prime) * rank;
        Ok(Self {
            frames,
            d,
            f_prime,
            rank,
            hop,
            total_samples_sent: sent,
            raw_samples,
            nsa: sent as f64 / raw_samples as f64,
            asymptotic: ((d + f_prime) * rank) as f64 / hop as f64,
        })
    }

    /// Sending the waveform itself.
    pub fn raw(raw_samples: usize, hop: usize) -> Self {
        Self {
            frames: 0,
            d: 0,
            f_prime: 0,
            rank: 0,
            hop,
            total_samples_sent: raw_samples,
            raw_samples,
            nsa: 1.0,
            asymptotic: 1.0,
        }
    }
}

/// Asymptotic NSA for a rank: `(d + f_prime) * rank / hop`.
pub fn nsa_asymptotic(d: usize, f_prime: usize, rank: usize, hop: usize) -> f64 {
    ((d + f_prime) * rank) as f64 / hop as f64
}

pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Scale-invariant SDR in dB, clamped to +-100 dB.
pub fn si_sdr(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::Shape {
            name: "si-sdr estimate".into(),
            expected: vec![reference.len()],
            found: vec![est.len()],
        });
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let dot: f64 = est.iter().zip(reference).map(|(e, r)| e * r).sum();
    let alpha = dot / ref_energy;
    let target: f64 = alpha * alpha * ref_energy;
    let residual: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - alpha * r).powi(2))
        .sum();
    let db = if residual == 0.0 {
        SI_SDR_CAP_DB
    } else if target == 0.0 {
        -SI_SDR_CAP_DB
    } else {
        10.0 * (target / residual).log10()
    };
    Ok(db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB))
}

// Classic STOI constants.
const STOI_FS: u32 = 10_000;
const STOI_FRAME: usize = 256;
const STOI_HOP: usize = 128;
const STOI_NFFT: usize = 512;
const STOI_BANDS: usize = 15;
const STOI_MIN_FREQ: f64 = 150.0;
const STOI_SEGMENT: usize = 30;
const STOI_BETA_DB: f64 = -15.0;
const STOI_DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

/// Short-time objective intelligibility of `est` against the clean `reference`.
///
/// Follows the original algorithm: resampling to 10 kHz, removal of frames
/// more than 40 dB below the loudest clean frame, 15 one-third octave bands
/// from 150 Hz, 30-frame (384 ms) segments and clipping at -15 dB SDR.
pub fn stoi(est: &[f64], reference: &[f64], fs: u32) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::Shape {
            name: "stoi estimate".into(),
            expected: vec![reference.len()],
            found: vec![est.len()],
        });
    }
    let (x, y) = if fs != STOI_FS {
        (
            resample_poly_octave(reference, STOI_FS, fs),
            resample_poly_octave(est, STOI_FS, fs),
        )
    } else {
        (reference.to_vec(), est.to_vec())
    };
    let (x, y) = remove_silent_frames(&x, &y);
    let xs = band_envelopes(&x);
    let ys = band_envelopes(&y);
    let frames = xs.first().map_or(0, |b| b.len());
    if frames < STOI_SEGMENT {
        return Err(Error::TooShort(format!(
            "{frames} active frames, need at least {STOI_SEGMENT}"
        )));
    }

    let clip = 10f64.powf(-STOI_BETA_DB / 20.0);
    let mut total = 0.0;
    let segments = frames - STOI_SEGMENT + 1;
    for m in STOI_SEGMENT..=frames {
        for band in 0..STOI_BANDS {
            let xseg = &xs[band][m - STOI_SEGMENT..m];
            let yseg = &ys[band][m - STOI_SEGMENT..m];
            let scale = norm(xseg) / (norm(yseg) + EPS);
            let mut yp: Vec<f64> = yseg
                .iter()
                .zip(xseg)
                .map(|(yv, xv)| (yv * scale).min(xv * (1.0 + clip)))
                .collect();
            let mut xp = xseg.to_vec();
            center(&mut yp);
            center(&mut xp);
            let (ny, nx) = (norm(&yp) + EPS, norm(&xp) + EPS);
            total += yp.iter().zip(&xp).map(|(a, b)| (a / ny) * (b / nx)).sum::<f64>();
        }
    }
    Ok(total / (segments * STOI_BANDS) as f64)
}

/// Convenience wrapper over waveforms; sample rates must agree.
pub fn stoi_waveform(est: &Waveform, reference: &Waveform) -> Result<f64> {
    if est.fs != reference.fs {
        return Err(Error::SampleRate {
            expected: reference.fs,
            found: est.fs,
        });
    }
    stoi(&est.samples, &reference.samples, reference.fs)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// `hanning(n + 2)` with the zero end points removed.
fn inner_hanning(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n + 1) as f64).cos())
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(STOI_FRAME)).step_by(STOI_HOP)
}

fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = inner_hanning(STOI_FRAME);
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..STOI_FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, &e)| max - STOI_DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let len = (kept.len() - 1) * STOI_HOP + STOI_FRAME;
    let mut xo = vec![0.0; len];
    let mut yo = vec![0.0; len];
    for (k, &s) in kept.iter().enumerate() {
        for i in 0..STOI_FRAME {
            xo[k * STOI_HOP + i] += w[i] * x[s + i];
            yo[k * STOI_HOP + i] += w[i] * y[s + i];
        }
    }
    (xo, yo)
}

/// One-third octave band edges as FFT bin ranges `[lo, hi)`.
fn third_octave_bins() -> Vec<(usize, usize)> {
    let n_bins = STOI_NFFT / 2 + 1;
    let freqs: Vec<f64> = (0..n_bins)
        .map(|i| i as f64 * STOI_FS as f64 / STOI_NFFT as f64)
        .collect();
    let nearest = |target: f64| {
        freqs
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - target).powi(2).total_cmp(&(b.1 - target).powi(2)))
            .unwrap()
            .0
    };
    (0..STOI_BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = STOI_MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = STOI_MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes `bands x frames` of the 10 kHz signal.
fn band_envelopes(x: &[f64]) -> Vec<Vec<f64>> {
    let w = inner_hanning(STOI_FRAME);
    let fft = FftPlanner::new().plan_fft_forward(STOI_NFFT);
    let bands = third_octave_bins();
    let mut out = vec![Vec::new(); STOI_BANDS];
    let mut buf = vec![Complex64::new(0.0, 0.0); STOI_NFFT];
    for s in frame_starts(x.len()) {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for i in 0..STOI_FRAME {
            buf[i].re = w[i] * x[s + i];
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let power: f64 = buf[lo..hi].iter().map(|c| c.norm_sqr()).sum();
            out[b].push(power.sqrt());
        }
    }
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Polyphase rational resampler with the Kaiser-windowed sinc used by the
/// Octave `resample` routine (60 dB rejection, 10% roll-off).
pub fn resample_poly_octave(x: &[f64], fs_out: u32, fs_in: u32) -> Vec<f64> {
    let g = gcd(fs_out as u64, fs_in as u64);
    let (up, down) = (fs_out as u64 / g, fs_in as u64 / g);
    if up == down {
        return x.to_vec();
    }
    let (p, q) = (up as f64, down as f64);
    let stop = 1.0 / (2.0 * p.max(q));
    let roll_off = stop / 10.0;
    let rejection_db = 60.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let len = (2 * half + 1) as usize;
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 - half as f64;
            let arg = 2.0 * stop * t;
            let sinc = if arg == 0.0 {
                1.0
            } else {
                (PI * arg).sin() / (PI * arg)
            };
            let r = 2.0 * i as f64 / (len - 1) as f64 - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / bessel_i0(beta);
            kaiser * 2.0 * p * stop * sinc
        })
        .collect();
    let total: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v = *v / total * p);

    let (up, down, half) = (up as i64, down as i64, half);
    let n_out = (x.len() as i64 * up + down - 1) / down;
    (0..n_out)
        .map(|n| {
            // y[n] = sum_u x[u] h[n*down + half - u*up]
            let base = n * down + half;
            let u_min = ((base - len as i64 + 1) as f64 / up as f64).ceil().max(0.0) as i64;
            let u_max = (base / up).min(x.len() as i64 - 1);
            (u_min..=u_max)
                .map(|u| x[u as usize] * h[(base - u * up) as usize])
                .sum()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn nsa_values() {
        assert_eq!(nsa_asymptotic(16, 32, 4, 256), 0.75);
        assert_eq!(nsa_asymptotic(16, 32, 16, 256), 3.0);
        let r = NsaReport::compute(249, 16, 32, 4, 64_000, 256).unwrap();
        assert_eq!(r.total_samples_sent, 47_808);
        assert!((r.nsa - 0.747).abs() < 1e-12);
        assert_eq!(r.asymptotic, 0.75);
        assert!(NsaReport::compute(0, 16, 32, 4, 64_000, 256).is_err());
    }

    #[test]
    fn si_sdr_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        assert_eq!(si_sdr(&s, &s).unwrap(), 100.0);
        let s2: Vec<f64> = s.iter().map(|v| 2.0 * v).collect();
        assert_eq!(si_sdr(&s2, &s).unwrap(), si_sdr(&s, &s).unwrap());

        // Orthogonal noise of equal energy: 0 dB.
        let raw: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let proj = raw.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / ss;
        let mut n: Vec<f64> = raw.iter().zip(&s).map(|(a, b)| a - proj * b).collect();
        let nn: f64 = n.iter().map(|v| v * v).sum();
        n.iter_mut().for_each(|v| *v *= (ss / nn).sqrt());
        let est: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + b).collect();
        assert!(si_sdr(&est, &s).unwrap().abs() < 1e-9);

        let noisy: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + 0.1 * b).collect();
        let base = si_sdr(&noisy, &s).unwrap();
        for scale in [-3.0, 0.01, 7.5] {
            let scaled: Vec<f64> = noisy.iter().map(|v| v * scale).collect();
            assert!((si_sdr(&scaled, &s).unwrap() - base).abs() < 1e-9);
        }
    }

    #[test]
    fn si_sdr_errors() {
        assert!(matches!(si_sdr(&[1.0, 2.0], &[0.0, 0.0]), Err(Error::ZeroReference)));
        assert!(si_sdr(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn stoi_of_identical_signals_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s: Vec<f64> = (0..48_000)
            .map(|n| {
                let t = n as f64 / 16_000.0;
                (2.0 * PI * 3.0 * t).sin().max(0.0) * (2.0 * PI * 220.0 * t).sin()
                    + 0.01 * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        assert!((stoi(&s, &s, 16_000).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn stoi_too_short() {
        let s = vec![0.5; 2000];
        assert!(matches!(stoi(&s, &s, 16_000), Err(Error::TooShort(_))));
    }

    #[test]
    fn resampler_preserves_a_low_tone() {
        let x: Vec<f64> = (0..16_000)
            .map(|n| (2.0 * PI * 200.0 * n as f64 / 16_000.0).sin())
            .collect();
        let y = resample_poly_octave(&x, 10_000, 16_000);
        assert_eq!(y.len(), 10_000);
        for (n, v) in y.iter().enumerate().skip(500).take(9000) {
            let want = (2.0 * PI * 200.0 * n as f64 / 10_000.0).sin();
            assert!((v - want).abs() < 2e-3, "{n}: {v} vs {want}");
        }
    }

    #[test]
    fn band_edges_match_reference_table() {
        // Bin ranges of the classic 15-band matrix at 10 kHz / 512 points.
        let bins = third_octave_bins();
        assert_eq!(bins[0], (7, 9));
        assert_eq!(bins[13], (138, 174));
        assert_eq!(bins[14], (174, 219));
    }
}
