//! Rank sweep as CSV on stdout.

use casnet::model::{ModelConfig, WeightManifest};
use casnet::pipeline::{sweep_rank, Enhancer, SWEEP_CSV_HEADER};
use casnet::scene::{render_scene, synthetic_sources, SceneSpec};

fn main() -> casnet::Result<()> {
    let spec = SceneSpec::random(9, 4)?;
    let (speech, noises) = synthetic_sources(&spec, 2.0);
    let scene = render_scene(&spec, &speech, &noises)?;
    let enhancer = Enhancer::from_manifest(&WeightManifest::random(ModelConfig::default(), 1)?)?;
    let ranks: Vec<usize> = (1..=16).collect();

    println!("{SWEEP_CSV_HEADER}");
    for row in sweep_rank(&enhancer, &scene.mix, &scene.target, &ranks)? {
        println!("{}", row.csv_line());
    }
    Ok(())
}
