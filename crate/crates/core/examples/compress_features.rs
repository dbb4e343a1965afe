//! Truncated-SVD compression of encoder features at every rank.

use casnet::compressor::{compress_sequence, reconstruction_mse};
use casnet::metrics::nsa_asymptotic;
use casnet::model::{ModelConfig, WeightManifest};
use casnet::pipeline::Enhancer;
use casnet::scene::synthetic_speech;

fn main() -> casnet::Result<()> {
    let cfg = ModelConfig::default();
    let enhancer = Enhancer::from_manifest(&WeightManifest::random(cfg.clone(), 7)?)?;
    let x = synthetic_speech(2.0, 16_000, 3);
    let h = enhancer.edge_encode(&x)?;
    println!("features: D={} T={} F'={}", cfg.d, h.n_frames(), cfg.f_prime);

    for rank in 1..=cfg.d {
        let factors = compress_sequence(&h, rank)?;
        let floats: usize = factors.iter().map(|f| f.payload_len()).sum();
        println!(
            "rank {rank:>2}: {floats:>6} floats, nsa {:.4}, mse {:.3e}",
            nsa_asymptotic(cfg.d, cfg.f_prime, rank, 256),
            reconstruction_mse(&h, rank)?
        );
    }
    Ok(())
}
