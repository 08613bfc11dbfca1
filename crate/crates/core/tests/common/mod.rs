#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sl0sr::imaging::{write_pgm, Image};

/// Smooth random texture: a few oriented sinusoids plus mild noise.
pub fn texture(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.05..0.6),
                rng.gen_range(0.0..std::f64::consts::PI),
                rng.gen_range(0.0..6.28),
                rng.gen_range(0.05..0.15),
            )
        })
        .collect();
    let pixels = (0..width * height)
        .map(|i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            let mut v = 0.5;
            for &(f, theta, phase, amp) in &waves {
                v += amp * (f * (x * theta.cos() + y * theta.sin()) + phase).sin();
            }
            (v + rng.gen_range(-0.02..0.02)).clamp(0.0, 1.0)
        })
        .collect();
    Image::new(width, height, pixels).unwrap()
}

pub fn write_texture(path: &Path, width: usize, height: usize, seed: u64) {
    write_pgm(&texture(width, height, seed), path).unwrap();
}

pub fn sl0sr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sl0sr"))
        .args(args)
        .env_remove("SL0SR_THREADS")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> Output {
    let out = sl0sr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn manifest_of(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}
