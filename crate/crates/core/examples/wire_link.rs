//! Frames on the wire, a lossy link, and a `.casf` replay.

use casnet::compressor::compress_sequence;
use casnet::model::{ModelConfig, WeightManifest};
use casnet::pipeline::Enhancer;
use casnet::scene::synthetic_speech;
use casnet::transport::{deserialize, replay, serialize, simulate_link, write_container, ChannelModel};

fn main() -> casnet::Result<()> {
    let cfg = ModelConfig::default();
    let enhancer = Enhancer::from_manifest(&WeightManifest::random(cfg.clone(), 7)?)?;
    let streams: Vec<_> = (0..3)
        .map(|n| compress_sequence(&enhancer.edge_encode(&synthetic_speech(1.0, 16_000, n))?, 4))
        .collect::<casnet::Result<_>>()?;

    let bytes = serialize(&streams[0][0], 1, 0)?;
    println!("one frame: {} bytes", bytes.len());
    let mut bad = bytes.clone();
    *bad.last_mut().unwrap() ^= 0x40;
    println!("corrupted frame: {}", deserialize(&bad).unwrap_err());

    let ch = ChannelModel {
        drop_prob: 0.1,
        max_delay_frames: 2,
        jitter_seed: 5,
    };
    let (received, stats) = simulate_link(&streams, &ch, cfg.past, cfg.future)?;
    println!("{stats:?}");
    for r in &received {
        let have = r.frames.iter().filter(|f| f.is_some()).count();
        println!("node {}: {have}/{} frames usable", r.node_id, r.n_frames());
    }

    let frames: Vec<Vec<u8>> = streams[0]
        .iter()
        .enumerate()
        .map(|(k, f)| serialize(f, 1, k as u32))
        .collect::<casnet::Result<_>>()?;
    let path = std::env::temp_dir().join("casnet_example.casf");
    write_container(&path, &frames)?;
    let (_, report) = replay(&std::fs::read(&path).unwrap())?;
    println!("replayed {} frames, {} corrupt", report.frames, report.corrupt);
    Ok(())
}
