//! Mono WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavSpec, WavWriter};

use crate::dsp::{resample_linear, Waveform};
use crate::error::{Error, Result};
use crate::scene::{Scene, SceneSpec};

pub const SCENE_MANIFEST: &str = "manifest.toml";
pub const TARGET_FILE: &str = "target.wav";

fn wav_err(path: &Path, source: hound::Error) -> Error {
    match source {
        hound::Error::IoError(e) => Error::io(path, e),
        source => Error::Wav {
            path: path.to_path_buf(),
            source,
        },
    }
}

/// Reads 16/24/32-bit PCM or 32-bit float WAV; multichannel files are
/// averaged to mono. With `target_fs` set, other rates are resampled.
pub fn read_wav(path: impl AsRef<Path>, target_fs: Option<u32>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
        }
    }
    .map_err(|e| wav_err(path, e))?;
    let ch = spec.channels.max(1) as usize;
    let samples = interleaved
        .chunks(ch)
        .map(|c| c.iter().sum::<f64>() / ch as f64)
        .collect();
    let w = Waveform::new(samples, spec.sample_rate);
    Ok(match target_fs {
        Some(fs) if fs != w.fs => resample_linear(&w, fs),
        _ => w,
    })
}

/// Writes 32-bit float mono.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.fs,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in &w.samples {
        writer.write_sample(s as f32).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))
}

fn mix_name(m: usize) -> String {
    format!("mix_{m:02}.wav")
}

/// Writes `mix_00.wav`, `mix_01.wav`, ..., `target.wav` and the scene
/// manifest into `dir`, creating it if needed.
pub fn write_scene_dir(dir: impl AsRef<Path>, spec: &SceneSpec, scene: &Scene) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (m, w) in scene.mix.iter().enumerate() {
        write_wav(dir.join(mix_name(m)), w)?;
    }
    write_wav(dir.join(TARGET_FILE), &scene.target)?;
    let manifest = dir.join(SCENE_MANIFEST);
    std::fs::write(&manifest, spec.to_toml_string()).map_err(|e| Error::io(&manifest, e))
}

/// A scene directory as written by [`write_scene_dir`].
#[derive(Debug, Clone)]
pub struct SceneDir {
    pub mix: Vec<Waveform>,
    pub target: Option<Waveform>,
    pub spec: Option<SceneSpec>,
}

pub fn read_scene_dir(dir: impl AsRef<Path>, fs: u32) -> Result<SceneDir> {
    let dir = dir.as_ref();
    let mut mix = Vec::new();
    while dir.join(mix_name(mix.len())).exists() {
        mix.push(read_wav(dir.join(mix_name(mix.len())), Some(fs))?);
    }
    if mix.is_empty() {
        return Err(Error::io(
            dir.join(mix_name(0)),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no mixture channels"),
        ));
    }
    let target_path = dir.join(TARGET_FILE);
    let target = if target_path.exists() {
        Some(read_wav(target_path, Some(fs))?)
    } else {
        None
    };
    let manifest = dir.join(SCENE_MANIFEST);
    let spec = if manifest.exists() {
        Some(SceneSpec::load(manifest)?)
    } else {
        None
    };
    Ok(SceneDir { mix, target, spec })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let w = Waveform::new(vec![0.0, 0.5, -0.25, 0.125], 16_000);
        write_wav(&p, &w).unwrap();
        assert_eq!(read_wav(&p, None).unwrap(), w);
    }

    #[test]
    fn pcm16_is_scaled_and_resampled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 32_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut wr = WavWriter::create(&p, spec).unwrap();
        for i in 0..64 {
            wr.write_sample(if i % 2 == 0 { 16384i16 } else { -16384 }).unwrap();
        }
        wr.finalize().unwrap();
        let native = read_wav(&p, None).unwrap();
        assert_eq!(native.fs, 32_000);
        assert_eq!(native.samples[0], 0.5);
        let down = read_wav(&p, Some(16_000)).unwrap();
        assert_eq!((down.fs, down.len()), (16_000, 32));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_wav("/nonexistent/noise.wav", None).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/noise.wav"));
    }

    #[test]
    fn scene_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SceneSpec::random(2, 3).unwrap();
        let (speech, noises) = crate::scene::synthetic_sources(&spec, 1.0);
        let scene = crate::scene::render_scene(&spec, &speech, &noises).unwrap();
        write_scene_dir(dir.path(), &spec, &scene).unwrap();
        let back = read_scene_dir(dir.path(), 16_000).unwrap();
        assert_eq!(back.mix.len(), 3);
        assert_eq!(back.spec.unwrap(), spec);
        let t = back.target.unwrap();
        assert_eq!(t.len(), scene.target.len());
        assert!(t.samples.iter().zip(&scene.target.samples).all(|(a, b)| (a - b).abs() < 1e-6));
    }
}
