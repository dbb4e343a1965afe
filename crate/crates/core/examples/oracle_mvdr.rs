//! Oracle MVDR on a handful of scenes at 0 dB.

use casnet::baselines::{mvdr_stft_config, oracle_mvdr};
use casnet::metrics::si_sdr;
use casnet::scene::{render_scene, synthetic_sources, SceneSpec};

fn main() -> casnet::Result<()> {
    let cfg = mvdr_stft_config();
    for seed in 0..5 {
        let mut spec = SceneSpec::random(seed, 6)?;
        spec.snr_db = 0.0;
        let (speech, noises) = synthetic_sources(&spec, 4.0);
        let scene = render_scene(&spec, &speech, &noises)?;
        let target = &scene.target.samples;
        let before = si_sdr(&scene.reference().samples, target)?;
        let after = si_sdr(&oracle_mvdr(&scene, &cfg)?.samples, target)?;
        println!("scene {seed}: {before:6.2} -> {after:6.2} dB");
    }
    Ok(())
}
