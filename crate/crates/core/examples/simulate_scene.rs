//! Renders a random shoebox scene and prints per-channel SNR.

use casnet::scene::{render_scene, synthetic_sources, SceneSpec};

fn main() -> casnet::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let spec = SceneSpec::random(seed, 6)?;
    println!("{}", spec.to_toml_string());

    let (speech, noises) = synthetic_sources(&spec, 3.0);
    let scene = render_scene(&spec, &speech, &noises)?;
    for m in 0..scene.n_mics() {
        let snr = 10.0 * (scene.speech[m].power() / scene.noise[m].power()).log10();
        println!("mic {m}: snr {snr:6.2} dB");
    }
    Ok(())
}
