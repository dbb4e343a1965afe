//! STFT analysis, overlap-add resynthesis, and Griffin-Lim from a
//! deliberately wrong phase.

use casnet::dsp::{consistency_residual, griffin_lim, istft, stft, StftConfig};
use casnet::scene::synthetic_speech;

fn main() -> casnet::Result<()> {
    let cfg = StftConfig::default();
    let x = synthetic_speech(2.0, cfg.fs, 1);
    let s = stft(&x, &cfg)?;
    println!("{} frames x {} bins", s.n_frames(), s.n_bins());

    let y = istft(&s)?;
    let interior = cfg.win_len..x.len() - cfg.win_len;
    let err = interior
        .map(|n| (x.samples[n] - y.samples[n]).abs())
        .fold(0.0, f64::max);
    println!("round trip max error {err:.2e}");

    let mag = s.magnitude();
    let zero_phase = mag.mapv(|_| 0.0);
    for iters in [0, 1, 8, 32] {
        let g = griffin_lim(mag.view(), zero_phase.view(), iters, &cfg)?;
        println!("gla {iters:>2} iterations: residual {:.4}", consistency_residual(&g, mag.view(), &cfg)?);
    }
    Ok(())
}
