//! Shared fixtures for the criterion benches.

use std::path::Path;

use nerfsynth_core::bench::{ItemStatus, LEVELS};
use nerfsynth_core::critic::synthetic::{corner_scene, SceneConfig};
use nerfsynth_core::critic::{Image, ViewSample};
use nerfsynth_core::{FileRecord, NoveltyItem, Repository};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random DAG over `n` modules, each importing a random subset of earlier ones.
pub fn dag_files(n: usize, p: f64, seed: u64) -> Vec<FileRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let mut src = String::new();
            for a in 0..k {
                if rng.random_bool(p) {
                    src.push_str(&format!("from g.m{a} import X{a}\n"));
                }
            }
            src.push_str(&format!("X{k} = 1\n"));
            FileRecord::new(format!("g/m{k}.py"), None, src)
        })
        .collect()
}

/// A render and ground truth that differ by seeded noise.
pub fn image_pair(width: usize, height: usize, seed: u64) -> (Image, Image) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<[f64; 3]> = (0..width * height)
        .map(|_| [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)])
        .collect();
    let gt = Image::from_fn(width, height, |x, y| {
        let v = 0.5 + 0.4 * ((x as f64 * 0.2).sin() * (y as f64 * 0.15).cos());
        [v, v * 0.9, 1.0 - v]
    });
    let render = Image::from_fn(width, height, |x, y| {
        let g = gt.get(x, y);
        let n = noise[y * width + x];
        [(g[0] + n[0]).clamp(0.0, 1.0), (g[1] + n[1]).clamp(0.0, 1.0), (g[2] + n[2]).clamp(0.0, 1.0)]
    });
    (render, gt)
}

pub fn scene_views(width: usize, height: usize) -> Vec<ViewSample> {
    corner_scene(&SceneConfig {
        width,
        height,
        floater: true,
        ..SceneConfig::default()
    })
    .views
}

pub fn novelty_items(n: usize, seed: u64) -> Vec<NoveltyItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let (status, level) = match rng.random_range(0..3) {
                0 => (ItemStatus::Correct, 1.0),
                1 => (ItemStatus::IncorrectPartial, LEVELS[rng.random_range(1..5)]),
                _ => (ItemStatus::Missing, 0.0),
            };
            let theta = rng.random_range(0.5..2.0);
            NoveltyItem {
                id: format!("n{k}"),
                description: String::new(),
                w: rng.random_range(0.05..1.0),
                theta: Some(theta),
                theta_hat: Some(theta * rng.random_range(0.9..1.1)),
                status,
                level,
            }
        })
        .collect()
}

/// The gold plugin skeleton from the core test fixtures.
pub fn gold_repo() -> Repository {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/grammar/gold");
    Repository::read_dir(&dir).expect("gold fixture")
}
