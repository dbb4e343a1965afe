//! SI-SDR and STOI of a clean signal against noisier copies of itself.

use casnet::metrics::{si_sdr, stoi};
use casnet::scene::{synthetic_noise, synthetic_speech, NoiseKind};

fn main() -> casnet::Result<()> {
    let clean = synthetic_speech(3.0, 16_000, 2);
    let noise = synthetic_noise(NoiseKind::White, 3.0, 16_000, 4);
    let gain = (clean.power() / noise.power()).sqrt();
    for snr in [20.0, 10.0, 0.0, -10.0] {
        let g = gain * 10f64.powf(-snr / 20.0);
        let noisy: Vec<f64> = clean.samples.iter().zip(&noise.samples).map(|(s, n)| s + g * n).collect();
        println!(
            "{snr:>5} dB: si-sdr {:7.2}  stoi {:.3}",
            si_sdr(&noisy, &clean.samples)?,
            stoi(&noisy, &clean.samples, 16_000)?
        );
    }
    Ok(())
}
