//! Fixtures shared by the benchmarks: a synthetic scene and a small model
//! trained on synthetic data.

use nnnf_core::featpool::{gen_pool, KindCounts, PoolConfig};
use nnnf_core::synth::{gen_dataset, SceneParams};
use nnnf_core::train::train_with_mining;
use nnnf_core::{AnnotatedImage, BoostedModel, RgbImage, TrainConfig};

pub fn scenes(seed: u64, count: usize) -> Vec<AnnotatedImage> {
    gen_dataset(seed, count, 2, &SceneParams::default())
        .expect("default scene parameters are valid")
        .into_iter()
        .map(|s| AnnotatedImage {
            image: s.image,
            boxes: s.boxes,
        })
        .collect()
}

pub fn scene(seed: u64) -> RgbImage {
    scenes(seed, 1).remove(0).image
}

/// A two-round model over a reduced pool; enough trees for the cascade to
/// matter while keeping setup under a minute.
pub fn small_model(seed: u64) -> BoostedModel {
    let images = scenes(seed, 24);
    let pool = gen_pool(&PoolConfig {
        counts: KindCounts {
            local_mean: 400,
            neighbor_diff: 400,
            sidf: 200,
            ssf: 200,
        },
        seed,
        ..PoolConfig::default()
    })
    .expect("pool");
    let cfg = TrainConfig {
        rounds: vec![16, 64],
        initial_negatives: 2000,
        negatives_per_round: 500,
        negative_cap: 3000,
        seed,
        ..TrainConfig::default()
    };
    train_with_mining(&images, &images, &pool, &cfg).expect("training").model
}
