//! STOI against values produced by the reference Python implementation
//! (`fixtures/stoi_reference.py`).

use std::f64::consts::PI;

use casnet::metrics::stoi;

const FS: u32 = 16_000;

fn lcg_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            2.0 * ((state >> 11) as f64 / 2f64.powi(53)) - 1.0
        })
        .collect()
}

fn clean() -> Vec<f64> {
    (0..3 * FS as usize)
        .map(|n| {
            let t = n as f64 / FS as f64;
            let env = (2.0 * PI * 3.0 * t).sin().max(0.0).powi(2);
            let f0 = 140.0 + 20.0 * (2.0 * PI * 0.5 * t).sin();
            let mut acc = 0.0;
            for h in 1..9 {
                acc += (2.0 * PI * h as f64 * f0 * t).sin() / h as f64;
            }
            env * acc
        })
        .collect()
}

fn mixture(x: &[f64], snr_db: f64, seed: u64) -> Vec<f64> {
    let v = lcg_noise(x.len(), seed);
    let px: f64 = x.iter().map(|a| a * a).sum();
    let pv: f64 = v.iter().map(|a| a * a).sum();
    let g = (px / (pv * 10f64.powf(snr_db / 10.0))).sqrt();
    x.iter().zip(&v).map(|(a, b)| a + g * b).collect()
}

#[test]
fn matches_reference_implementation() {
    let x = clean();
    for (snr, seed, want) in [
        (0.0, 7, 0.7916153582549145),
        (-5.0, 11, 0.7469852608754126),
        (10.0, 13, 0.83750986385588),
    ] {
        let got = stoi(&mixture(&x, snr, seed), &x, FS).unwrap();
        assert!((got - want).abs() < 1e-6, "snr {snr}: {got} vs {want}");
    }
}

#[test]
fn independent_white_noise_scores_near_zero() {
    for trial in 0..10u64 {
        let x = lcg_noise(48_000, 1000 + trial);
        let v = lcg_noise(48_000, 2000 + trial);
        let score = stoi(&v, &x, FS).unwrap();
        assert!(score.abs() < 0.2, "trial {trial}: {score}");
    }
}

#[test]
fn noise_against_modulated_reference() {
    // Clipping ties the scaled noise envelope to the reference envelope, so
    // pure noise does not score zero against a signal with strong
    // syllabic modulation. Value from the reference implementation.
    let x = clean();
    let score = stoi(&lcg_noise(x.len(), 99), &x, FS).unwrap();
    assert!((score - 0.3774463995900691).abs() < 1e-6, "{score}");
}
