//! Enhances a simulated scene raw and compressed at a few ranks.
//! The weights are random, so quality numbers only show the plumbing.

use casnet::metrics::{si_sdr, stoi};
use casnet::model::{ModelConfig, WeightManifest};
use casnet::pipeline::{Enhancer, Transmission};
use casnet::scene::{render_scene, synthetic_sources, SceneSpec};

fn main() -> casnet::Result<()> {
    let spec = SceneSpec::random(3, 4)?;
    let (speech, noises) = synthetic_sources(&spec, 3.0);
    let scene = render_scene(&spec, &speech, &noises)?;
    let enhancer = Enhancer::from_manifest(&WeightManifest::random(ModelConfig::default(), 1)?)?;

    let target = &scene.target.samples;
    println!(
        "noisy:      si-sdr {:7.2} dB  stoi {:.3}",
        si_sdr(&scene.reference().samples, target)?,
        stoi(&scene.reference().samples, target, 16_000)?
    );
    let modes = [
        ("raw", Transmission::Raw),
        ("rank 1", Transmission::lossless(1)),
        ("rank 4", Transmission::lossless(4)),
        ("rank 16", Transmission::lossless(16)),
    ];
    for (name, mode) in modes {
        let run = enhancer.run(&scene.mix, &mode)?;
        let est = &run.enhanced.waveform.samples;
        println!(
            "{name:<10}  si-sdr {:7.2} dB  stoi {:.3}  nsa {:.3}",
            si_sdr(est, target)?,
            stoi(est, target, 16_000)?,
            run.nsa.nsa
        );
    }
    Ok(())
}
