//! Shoebox room simulation: image-method impulse responses and noisy
//! multichannel mixtures with a controlled SNR at the reference channel.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::{fft_convolve, Waveform};
use crate::error::{Error, Result};

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Taps of the windowed-sinc fractional delay kernel.
pub const DELAY_TAPS: usize = 81;
pub const REFERENCE_CHANNEL: usize = 0;
pub const MAX_NOISES: usize = 3;

pub type Position = [f64; 3];

fn default_c() -> f64 {
    SPEED_OF_SOUND
}

fn default_fs() -> u32 {
    16_000
}

fn default_duration() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    /// Length, width, height in meters.
    pub dims: [f64; 3],
    /// Maximum reflection order; 0 is anechoic.
    pub order: usize,
    /// Energy absorption of every wall, in (0, 1].
    pub absorption: f64,
    #[serde(default = "default_c")]
    pub c: f64,
}

impl Room {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::SceneConfig(format!(
                "room dimensions must be positive, got {:?}",
                self.dims
            )));
        }
        if !(self.absorption > 0.0 && self.absorption <= 1.0) {
            return Err(Error::SceneConfig(format!(
                "absorption must lie in (0, 1], got {}",
                self.absorption
            )));
        }
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::SceneConfig(format!("speed of sound {}", self.c)));
        }
        Ok(())
    }

    /// Strictly inside the walls.
    pub fn contains(&self, p: Position) -> bool {
        p.iter()
            .zip(&self.dims)
            .all(|(&x, &l)| x.is_finite() && x > 0.0 && x < l)
    }

    fn check_inside(&self, p: Position) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::OutsideRoom(p))
        }
    }

    /// Pressure reflection coefficient of a wall.
    pub fn reflection(&self) -> f64 {
        (1.0 - self.absorption).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: Position,
    pub reflections: u32,
}

/// Mirror images of `src` with at most `order` wall reflections, the
/// direct path first.
pub fn image_sources(room: &Room, src: Position, order: usize) -> Vec<ImageSource> {
    let o = order as i64;
    let mut out = Vec::new();
    for nx in -o..=o {
        for ny in -o..=o {
            for nz in -o..=o {
                for parity in 0..8u8 {
                    let n = [nx, ny, nz];
                    let mut position = [0.0; 3];
                    let mut reflections = 0i64;
                    for axis in 0..3 {
                        let p = ((parity >> axis) & 1) as i64;
                        position[axis] = (1 - 2 * p) as f64 * src[axis]
                            + 2.0 * n[axis] as f64 * room.dims[axis];
                        reflections += (2 * n[axis] - p).abs();
                    }
                    if reflections <= o {
                        out.push(ImageSource {
                            position,
                            reflections: reflections as u32,
                        });
                    }
                }
            }
        }
    }
    out.sort_by_key(|s| s.reflections);
    out
}

fn distance(a: Position, b: Position) -> f64 {
    a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Adds `amp * delta(n - delay)` using an 81-tap Hann-windowed sinc.
/// Integer delays produce a single exact tap.
fn add_fractional_impulse(h: &mut [f64], delay: f64, amp: f64) {
    let center = delay.round();
    if (delay - center).abs() < 1e-9 {
        if let Some(v) = h.get_mut(center as usize) {
            *v += amp;
        }
        return;
    }
    let half = (DELAY_TAPS / 2) as i64;
    let width = (half + 1) as f64;
    for k in (center as i64 - half)..=(center as i64 + half) {
        if k < 0 || k as usize >= h.len() {
            continue;
        }
        let x = k as f64 - delay;
        let sinc = (PI * x).sin() / (PI * x);
        let window = 0.5 * (1.0 + (PI * x / width).cos());
        h[k as usize] += amp * sinc * window;
    }
}

/// Room impulse response from `src` to `mic`.
pub fn image_method_rir(
    room: &Room,
    src: Position,
    mic: Position,
    order: usize,
    fs: u32,
) -> Result<Waveform> {
    room.validate()?;
    if distance(src, mic) < 1e-9 {
        return Err(Error::CoincidentGeometry);
    }
    room.check_inside(src)?;
    room.check_inside(mic)?;
    let beta = room.reflection();
    let taps: Vec<(f64, f64)> = image_sources(room, src, order)
        .into_iter()
        .map(|img| {
            let d = distance(img.position, mic);
            (d / room.c * fs as f64, beta.powi(img.reflections as i32) / (4.0 * PI * d))
        })
        .filter(|&(_, amp)| amp != 0.0)
        .collect();
    let max_delay = taps.iter().map(|t| t.0).fold(0.0, f64::max);
    let len = max_delay.ceil() as usize + DELAY_TAPS / 2 + 1;
    let mut h = vec![0.0; len];
    for (delay, amp) in taps {
        add_fractional_impulse(&mut h, delay, amp);
    }
    Ok(Waveform::new(h, fs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSource {
    pub position: Position,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetMode {
    /// Speech convolved with the full reference-channel RIR.
    #[default]
    Reverberant,
    /// Speech through the direct path only.
    DirectPath,
}

/// Where the dry signals come from. Missing files fall back to the
/// synthetic generators seeded from the scene seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speech: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub noises: Vec<PathBuf>,
    /// Length of synthetic signals.
    #[serde(default = "default_duration")]
    pub duration_secs: f64,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self {
            speech: None,
            noises: Vec::new(),
            duration_secs: default_duration(),
        }
    }
}

/// Geometry and mixing parameters of one scene; the reference
/// microphone is `mics[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub room: Room,
    pub source: Position,
    pub mics: Vec<Position>,
    pub noises: Vec<NoiseSource>,
    pub snr_db: f64,
    pub seed: u64,
    #[serde(default = "default_fs")]
    pub fs: u32,
    #[serde(default)]
    pub target: TargetMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<SourceSpec>,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        if self.mics.is_empty() {
            return Err(Error::SceneConfig("at least one microphone is required".into()));
        }
        if self.noises.is_empty() || self.noises.len() > MAX_NOISES {
            return Err(Error::SceneConfig(format!(
                "between 1 and {MAX_NOISES} noise sources required, got {}",
                self.noises.len()
            )));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::SceneConfig("SNR must be finite".into()));
        }
        if self.fs == 0 {
            return Err(Error::SceneConfig("sample rate must be positive".into()));
        }
        self.room.check_inside(self.source)?;
        for &p in self.mics.iter().chain(self.noises.iter().map(|n| &n.position)) {
            self.room.check_inside(p)?;
        }
        for &m in &self.mics {
            if distance(m, self.source) < 1e-9
                || self.noises.iter().any(|n| distance(m, n.position) < 1e-9)
            {
                return Err(Error::CoincidentGeometry);
            }
        }
        Ok(())
    }

    pub fn n_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s).map_err(|e| Error::SceneConfig(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scene spec is always serializable")
    }

    /// Reads a TOML scene; relative source paths are taken relative to
    /// the file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml_str(&text)
            .map_err(|e| Error::SceneConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(src) = &mut spec.sources {
            for p in src.speech.iter_mut().chain(src.noises.iter_mut()) {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    /// Dry speech and noise signals named by `sources`, synthesized where
    /// no file is given.
    pub fn load_sources(&self) -> Result<(Waveform, Vec<Waveform>)> {
        let src = self.sources.clone().unwrap_or_default();
        if !src.noises.is_empty() && src.noises.len() != self.noises.len() {
            return Err(Error::SceneConfig(format!(
                "{} noise files for {} noise sources",
                src.noises.len(),
                self.noises.len()
            )));
        }
        let (synth_speech, synth_noises) = synthetic_sources(self, src.duration_secs);
        let speech = match &src.speech {
            Some(p) => crate::wav::read_wav(p, Some(self.fs))?,
            None => synth_speech,
        };
        let noises = if src.noises.is_empty() {
            synth_noises
        } else {
            src.noises
                .iter()
                .map(|p| crate::wav::read_wav(p, Some(self.fs)))
                .collect::<Result<_>>()?
        };
        Ok((speech, noises))
    }

    /// Random geometry in the style of the usual ad-hoc array setups:
    /// a 4-8 m room, freely placed microphones, 1-3 noise sources and an
    /// SNR drawn from [-5, 15] dB.
    pub fn random(seed: u64, n_mics: usize) -> Result<Self> {
        if n_mics == 0 {
            return Err(Error::SceneConfig("at least one microphone is required".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = [
            rng.random_range(4.0..8.0),
            rng.random_range(4.0..8.0),
            rng.random_range(2.5..3.5),
        ];
        let room = Room {
            dims,
            order: 4,
            absorption: rng.random_range(0.35..0.8),
            c: SPEED_OF_SOUND,
        };
        let place = |rng: &mut ChaCha8Rng| -> Position {
            [
                rng.random_range(0.5..dims[0] - 0.5),
                rng.random_range(0.5..dims[1] - 0.5),
                rng.random_range(1.0..2.0),
            ]
        };
        let source = place(&mut rng);
        let mut mics = Vec::with_capacity(n_mics);
        while mics.len() < n_mics {
            let p = place(&mut rng);
            if distance(p, source) > 0.5 {
                mics.push(p);
            }
        }
        let n_noise = rng.random_range(1..=MAX_NOISES);
        let mut noises = Vec::with_capacity(n_noise);
        while noises.len() < n_noise {
            let p = place(&mut rng);
            if mics.iter().all(|&m| distance(m, p) > 0.5) && distance(p, source) > 0.5 {
                noises.push(NoiseSource { position: p });
            }
        }
        let spec = Self {
            room,
            source,
            mics,
            noises,
            snr_db: rng.random_range(-5.0..15.0),
            seed,
            fs: default_fs(),
            target: TargetMode::default(),
            sources: None,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Rendered scene. Everything is `speech.len()` samples long.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub mix: Vec<Waveform>,
    /// Reverberant speech at each microphone.
    pub speech: Vec<Waveform>,
    /// Scaled noise at each microphone.
    pub noise: Vec<Waveform>,
    pub target: Waveform,
}

impl Scene {
    pub fn n_mics(&self) -> usize {
        self.mix.len()
    }

    pub fn reference(&self) -> &Waveform {
        &self.mix[REFERENCE_CHANNEL]
    }
}

fn check_fs(w: &Waveform, fs: u32) -> Result<()> {
    if w.fs != fs {
        return Err(Error::SampleRate {
            expected: fs,
            found: w.fs,
        });
    }
    Ok(())
}

fn fit_length(x: &[f64], len: usize) -> Vec<f64> {
    x.iter().copied().cycle().take(len).collect()
}

fn convolve_truncated(x: &[f64], h: &[f64], len: usize) -> Vec<f64> {
    let mut y = fft_convolve(x, h);
    y.resize(len, 0.0);
    y
}

/// Mixes `speech` and `noises` (one per noise source, looped or trimmed to
/// the speech length) so that the reference channel has the requested SNR.
pub fn render_scene(spec: &SceneSpec, speech: &Waveform, noises: &[Waveform]) -> Result<Scene> {
    spec.validate()?;
    check_fs(speech, spec.fs)?;
    if speech.len() < spec.fs as usize {
        return Err(Error::InsufficientSamples {
            needed: spec.fs as usize,
            got: speech.len(),
        });
    }
    if noises.len() != spec.noises.len() {
        return Err(Error::SceneConfig(format!(
            "{} noise sources configured but {} noise signals given",
            spec.noises.len(),
            noises.len()
        )));
    }
    if speech.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("speech"));
    }
    if speech.power() == 0.0 {
        return Err(Error::DegenerateSource("speech has zero power".into()));
    }
    for n in noises {
        check_fs(n, spec.fs)?;
        if n.is_empty() || n.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("noise"));
        }
    }
    let len = speech.len();
    let noise_sigs: Vec<Vec<f64>> = noises.iter().map(|n| fit_length(&n.samples, len)).collect();
    let room = &spec.room;

    let per_mic: Vec<(Vec<f64>, Vec<f64>)> = spec
        .mics
        .par_iter()
        .map(|&mic| {
            let h = image_method_rir(room, spec.source, mic, room.order, spec.fs)?;
            let y = convolve_truncated(&speech.samples, &h.samples, len);
            let mut n = vec![0.0; len];
            for (sig, src) in noise_sigs.iter().zip(&spec.noises) {
                let hn = image_method_rir(room, src.position, mic, room.order, spec.fs)?;
                for (acc, v) in n.iter_mut().zip(convolve_truncated(sig, &hn.samples, len)) {
                    *acc += v;
                }
            }
            Ok((y, n))
        })
        .collect::<Result<_>>()?;

    let power = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let (y_ref, n_ref) = &per_mic[REFERENCE_CHANNEL];
    let (ps, pn) = (power(y_ref), power(n_ref));
    if ps == 0.0 {
        return Err(Error::DegenerateSource(
            "speech is silent at the reference microphone".into(),
        ));
    }
    if pn == 0.0 {
        return Err(Error::DegenerateSource(
            "noise is silent at the reference microphone".into(),
        ));
    }
    let gain = (ps / (pn * 10f64.powf(spec.snr_db / 10.0))).sqrt();

    let mut mix = Vec::with_capacity(spec.n_mics());
    let mut speech_img = Vec::with_capacity(spec.n_mics());
    let mut noise_img = Vec::with_capacity(spec.n_mics());
    for (y, n) in per_mic {
        let n: Vec<f64> = n.into_iter().map(|v| v * gain).collect();
        mix.push(Waveform::new(
            y.iter().zip(&n).map(|(a, b)| a + b).collect(),
            spec.fs,
        ));
        speech_img.push(Waveform::new(y, spec.fs));
        noise_img.push(Waveform::new(n, spec.fs));
    }
    let target = match spec.target {
        TargetMode::Reverberant => speech_img[REFERENCE_CHANNEL].clone(),
        TargetMode::DirectPath => {
            let h = image_method_rir(room, spec.source, spec.mics[REFERENCE_CHANNEL], 0, spec.fs)?;
            Waveform::new(convolve_truncated(&speech.samples, &h.samples, len), spec.fs)
        }
    };
    Ok(Scene {
        mix,
        speech: speech_img,
        noise: noise_img,
        target,
    })
}

/// Voiced, speech-like test signal: harmonic syllables with a drifting
/// pitch and formant-shaped harmonic weights, separated by short pauses.
pub fn synthetic_speech(duration_secs: f64, fs: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (duration_secs * fs as f64).round() as usize;
    let mut out = vec![0.0; len];
    let mut start = (0.05 * fs as f64) as usize;
    while start < len {
        let syl = (rng.random_range(0.12..0.35) * fs as f64) as usize;
        let gap = (rng.random_range(0.03..0.15) * fs as f64) as usize;
        let f0 = rng.random_range(95.0..230.0);
        let drift = rng.random_range(-0.25..0.25);
        let formants = [
            rng.random_range(300.0..900.0),
            rng.random_range(900.0..2400.0),
            rng.random_range(2400.0..3400.0),
        ];
        let mut phase = 0.0;
        for i in 0..syl.min(len - start) {
            let u = i as f64 / syl as f64;
            let env = (PI * u).sin().powi(2);
            let pitch = f0 * (1.0 + drift * u);
            phase += 2.0 * PI * pitch / fs as f64;
            let mut v = 0.0;
            let mut h = 1;
            while h as f64 * pitch < 0.45 * fs as f64 && h <= 40 {
                let f = h as f64 * pitch;
                let gain: f64 = formants
                    .iter()
                    .map(|&fc| 1.0 / (1.0 + ((f - fc) / (0.12 * fc)).powi(2)))
                    .sum();
                v += gain * (h as f64 * phase).sin() / (h as f64).sqrt();
                h += 1;
            }
            out[start + i] = env * v;
        }
        start += syl + gap;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::new(out, fs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    /// Approximately 1/f power spectrum.
    Pink,
}

pub fn synthetic_noise(kind: NoiseKind, duration_secs: f64, fs: u32, seed: u64) -> Waveform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (duration_secs * fs as f64).round() as usize;
    let white: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
    let samples = match kind {
        NoiseKind::White => white,
        NoiseKind::Pink => {
            // Paul Kellet's economy filter.
            let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
            white
                .iter()
                .map(|&w| {
                    b0 = 0.99765 * b0 + w * 0.0990460;
                    b1 = 0.96300 * b1 + w * 0.2965164;
                    b2 = 0.57000 * b2 + w * 1.0526913;
                    (b0 + b1 + b2 + w * 0.1848) * 0.2
                })
                .collect()
        }
    };
    Waveform::new(samples, fs)
}

/// Default sources for a spec: synthetic speech and alternating
/// white/pink noises, all derived from the scene seed.
pub fn synthetic_sources(spec: &SceneSpec, duration_secs: f64) -> (Waveform, Vec<Waveform>) {
    let speech = synthetic_speech(duration_secs, spec.fs, spec.seed);
    let noises = (0..spec.noises.len())
        .map(|i| {
            let kind = if i % 2 == 0 {
                NoiseKind::White
            } else {
                NoiseKind::Pink
            };
            synthetic_noise(kind, duration_secs, spec.fs, spec.seed.wrapping_add(1 + i as u64))
        })
        .collect();
    (speech, noises)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(order: usize) -> Room {
        Room {
            dims: [6.0, 5.0, 3.0],
            order,
            absorption: 0.4,
            c: SPEED_OF_SOUND,
        }
    }

    fn spec(mics: Vec<Position>) -> SceneSpec {
        SceneSpec {
            room: room(2),
            source: [2.0, 2.5, 1.5],
            mics,
            noises: vec![NoiseSource {
                position: [4.5, 1.0, 1.2],
            }],
            snr_db: 0.0,
            seed: 3,
            fs: 16_000,
            target: TargetMode::Reverberant,
            sources: None,
        }
    }

    #[test]
    fn anechoic_rir_is_single_scaled_impulse() {
        // 40 samples of travel at 16 kHz
        let d = SPEED_OF_SOUND * 40.0 / 16_000.0;
        let src = [1.0, 1.0, 1.0];
        let mic = [1.0 + d, 1.0, 1.0];
        let h = image_method_rir(&room(0), src, mic, 0, 16_000).unwrap();
        let amp = 1.0 / (4.0 * PI * d);
        for (n, &v) in h.samples.iter().enumerate() {
            if n == 40 {
                assert!((v - amp).abs() < 1e-12);
            } else {
                assert_eq!(v, 0.0, "tap {n}");
            }
        }
    }

    #[test]
    fn fractional_delay_peaks_near_true_delay() {
        let src = [1.0, 1.0, 1.0];
        let mic = [2.2, 1.3, 1.1];
        let h = image_method_rir(&room(0), src, mic, 0, 16_000).unwrap();
        let delay = distance(src, mic) / SPEED_OF_SOUND * 16_000.0;
        let peak = h
            .samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((peak as f64 - delay).abs() <= 0.5);
    }

    #[test]
    fn first_order_has_seven_images() {
        let imgs = image_sources(&room(1), [2.0, 2.0, 1.0], 1);
        assert_eq!(imgs.len(), 7);
        assert_eq!(imgs[0].reflections, 0);
        assert_eq!(imgs[0].position, [2.0, 2.0, 1.0]);
        assert!(imgs[1..].iter().all(|i| i.reflections == 1));
        let mut pos: Vec<_> = imgs.iter().map(|i| i.position).collect();
        pos.dedup();
        assert_eq!(pos.len(), 7);
        assert_eq!(image_sources(&room(0), [2.0, 2.0, 1.0], 0).len(), 1);
    }

    #[test]
    fn first_order_rir_is_sum_of_seven_impulses() {
        let r = room(1);
        let src = [2.0, 2.0, 1.0];
        let mic = [3.1, 2.7, 1.4];
        let h = image_method_rir(&r, src, mic, 1, 16_000).unwrap();
        let mut expect = vec![0.0; h.len()];
        for img in image_sources(&r, src, 1) {
            let d = distance(img.position, mic);
            let amp = r.reflection().powi(img.reflections as i32) / (4.0 * PI * d);
            add_fractional_impulse(&mut expect, d / SPEED_OF_SOUND * 16_000.0, amp);
        }
        for (a, b) in h.samples.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn doubling_distance_halves_direct_amplitude() {
        let src = [1.0, 2.0, 1.5];
        let d = SPEED_OF_SOUND * 20.0 / 16_000.0;
        let near = image_method_rir(&room(0), src, [1.0 + d, 2.0, 1.5], 0, 16_000).unwrap();
        let far = image_method_rir(&room(0), src, [1.0 + 2.0 * d, 2.0, 1.5], 0, 16_000).unwrap();
        assert!((near.samples[20] / far.samples[40] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn coincident_and_outside_positions_rejected() {
        let p = [1.0, 1.0, 1.0];
        assert!(matches!(
            image_method_rir(&room(1), p, p, 1, 16_000),
            Err(Error::CoincidentGeometry)
        ));
        assert!(matches!(
            image_method_rir(&room(1), p, [7.0, 1.0, 1.0], 1, 16_000),
            Err(Error::OutsideRoom(_))
        ));
        let mut bad = room(1);
        bad.absorption = 0.0;
        assert!(image_method_rir(&bad, p, [2.0, 1.0, 1.0], 1, 16_000).is_err());
    }

    #[test]
    fn snr_is_set_at_the_reference() {
        let s = spec(vec![[3.0, 3.0, 1.5], [1.0, 4.0, 1.0]]);
        let (speech, noises) = synthetic_sources(&s, 1.5);
        for snr in [0.0, -5.0, 12.0] {
            let mut s = s.clone();
            s.snr_db = snr;
            let scene = render_scene(&s, &speech, &noises).unwrap();
            let ratio = scene.speech[0].power() / scene.noise[0].power();
            let want = 10f64.powf(snr / 10.0);
            assert!((ratio / want - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mixture_is_speech_plus_noise() {
        let s = spec(vec![[3.0, 3.0, 1.5], [1.0, 4.0, 1.0], [5.0, 4.0, 2.0]]);
        let (speech, noises) = synthetic_sources(&s, 1.2);
        let scene = render_scene(&s, &speech, &noises).unwrap();
        for m in 0..3 {
            let h = image_method_rir(&s.room, s.source, s.mics[m], s.room.order, s.fs).unwrap();
            let direct = convolve_truncated(&speech.samples, &h.samples, speech.len());
            for ((x, n), y) in scene.mix[m].samples.iter().zip(&scene.noise[m].samples).zip(&direct) {
                assert!((x - n - y).abs() < 1e-12);
            }
            assert_eq!(scene.mix[m].len(), speech.len());
        }
        assert_eq!(scene.target, scene.speech[0]);
    }

    #[test]
    fn propagation_delay_shows_in_cross_correlation() {
        let d = 1.0;
        let src = [1.5, 2.5, 1.5];
        let mut s = spec(vec![[1.5 + d, 2.5, 1.5], [1.5 + 2.0 * d, 2.5, 1.5]]);
        s.room.order = 0;
        s.source = src;
        s.snr_db = 40.0;
        let speech = synthetic_noise(NoiseKind::White, 1.0, 16_000, 8);
        let noises = vec![synthetic_noise(NoiseKind::White, 1.0, 16_000, 9)];
        let scene = render_scene(&s, &speech, &noises).unwrap();
        let (a, b) = (&scene.mix[0].samples, &scene.mix[1].samples);
        let best = (0..200)
            .max_by(|&x, &y| {
                let c = |lag: usize| (0..a.len() - lag).map(|i| a[i] * b[i + lag]).sum::<f64>();
                c(x).total_cmp(&c(y))
            })
            .unwrap();
        let want = d / SPEED_OF_SOUND * 16_000.0;
        assert!((best as f64 - want).abs() <= 1.0, "{best} vs {want}");
    }

    #[test]
    fn rendering_is_deterministic() {
        let s = SceneSpec::random(11, 4).unwrap();
        let (speech, noises) = synthetic_sources(&s, 1.0);
        let a = render_scene(&s, &speech, &noises).unwrap();
        let (speech2, noises2) = synthetic_sources(&s, 1.0);
        let b = render_scene(&s, &speech2, &noises2).unwrap();
        assert_eq!(a, b);
        assert_eq!(SceneSpec::random(11, 4).unwrap(), s);
    }

    #[test]
    fn degenerate_inputs() {
        let s = spec(vec![[3.0, 3.0, 1.5]]);
        let noises = vec![synthetic_noise(NoiseKind::White, 1.0, 16_000, 1)];
        let silent = Waveform::zeros(16_000, 16_000);
        assert!(matches!(
            render_scene(&s, &silent, &noises),
            Err(Error::DegenerateSource(_))
        ));
        let short = synthetic_speech(0.5, 16_000, 1);
        assert!(matches!(
            render_scene(&s, &short, &noises),
            Err(Error::InsufficientSamples { .. })
        ));
        let speech = synthetic_speech(1.0, 16_000, 1);
        assert!(render_scene(&s, &speech, &[]).is_err());
    }

    #[test]
    fn channel_count_follows_spec() {
        for m in 1..=12 {
            let s = SceneSpec::random(100 + m as u64, m).unwrap();
            let (speech, noises) = synthetic_sources(&s, 1.0);
            let scene = render_scene(&s, &speech, &noises).unwrap();
            assert_eq!(scene.n_mics(), m);
        }
    }

    #[test]
    fn direct_path_target() {
        let mut s = spec(vec![[3.0, 3.0, 1.5]]);
        s.target = TargetMode::DirectPath;
        let (speech, noises) = synthetic_sources(&s, 1.0);
        let scene = render_scene(&s, &speech, &noises).unwrap();
        assert!(scene.target.power() < scene.speech[0].power());
    }

    #[test]
    fn toml_round_trip() {
        let s = SceneSpec::random(5, 3).unwrap();
        let text = s.to_toml_string();
        assert_eq!(SceneSpec::from_toml_str(&text).unwrap(), s);
        let bad = text.replace("snr_db", "snr");
        assert!(SceneSpec::from_toml_str(&bad).is_err());

        let mut with_sources = s.clone();
        with_sources.sources = Some(SourceSpec {
            speech: Some("speech.wav".into()),
            noises: vec![],
            duration_secs: 2.0,
        });
        let text = with_sources.to_toml_string();
        assert_eq!(SceneSpec::from_toml_str(&text).unwrap(), with_sources);
    }

    #[test]
    fn relative_sources_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = SceneSpec::random(6, 2).unwrap();
        s.sources = Some(SourceSpec {
            speech: Some("missing.wav".into()),
            ..Default::default()
        });
        let path = dir.path().join("scene.toml");
        std::fs::write(&path, s.to_toml_string()).unwrap();
        let loaded = SceneSpec::load(&path).unwrap();
        let err = loaded.load_sources().unwrap_err();
        assert!(err.to_string().contains(&dir.path().join("missing.wav").display().to_string()));
    }
}
