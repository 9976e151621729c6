//! The desk-scale blob task used by the runner defaults and the
//! acceptance experiments.

use deeptwist_core::data::{synth_blobs_with, BlobParams, Dataset};
use deeptwist_core::lowrank::CompressionSpec;
use deeptwist_core::nn::{toy_cnn, LayerSpec, LrSchedule, TrainOptions};
use deeptwist_core::Result;

pub const CLASSES: usize = 3;
pub const IMAGE_SIZE: usize = 8;
pub const TRAIN_SIZE: usize = 3000;
pub const TEST_SIZE: usize = 300;
pub const SEPARATION: f64 = 3.0;
pub const WIDTH: usize = 16;
pub const BATCH_SIZE: usize = 32;
pub const BASE_LR: f64 = 0.05;
pub const STEPS: usize = 3000;
pub const SD: usize = 200;
pub const RC: f64 = 0.5;
/// Keeps the single-channel stem conv uncompressed.
pub const MIN_IN_CHANNELS: usize = 4;

#[derive(Debug, Clone)]
pub struct BlobTask {
    pub train: Dataset,
    pub test: Dataset,
}

/// One blob draw split into train and test parts that share centroids.
pub fn blob_task(
    classes: usize,
    image_size: usize,
    train_size: usize,
    test_size: usize,
    separation: f64,
    seed: u64,
) -> Result<BlobTask> {
    let total = train_size + test_size;
    let mut p = BlobParams::new(classes, total.div_ceil(classes), image_size, seed);
    p.separation = separation;
    let all = synth_blobs_with(&p)?;
    Ok(BlobTask {
        train: all.subset(&(0..train_size).collect::<Vec<_>>()),
        test: all.subset(&(train_size..total).collect::<Vec<_>>()),
    })
}

pub fn default_task(seed: u64) -> Result<BlobTask> {
    blob_task(CLASSES, IMAGE_SIZE, TRAIN_SIZE, TEST_SIZE, SEPARATION, seed)
}

pub fn default_model() -> Vec<LayerSpec> {
    toy_cnn(1, CLASSES, WIDTH, IMAGE_SIZE)
}

/// `lr` for the first half of the epochs the run spans, `lr/10` for the
/// next quarter and `lr/100` after that.
pub fn staged_schedule(lr: f64, steps: usize, batch_size: usize, train_size: usize) -> Result<LrSchedule> {
    let epochs = (steps * batch_size).div_ceil(train_size.max(1)).max(4);
    let half = epochs / 2;
    let quarter = epochs / 4;
    LrSchedule::new(vec![(half, lr), (quarter, lr / 10.0), (epochs - half - quarter, lr / 100.0)])
}

pub fn default_options(seed: u64) -> Result<TrainOptions> {
    let mut opts = TrainOptions::new(staged_schedule(BASE_LR, STEPS, BATCH_SIZE, TRAIN_SIZE)?, BATCH_SIZE);
    opts.shuffle_seed = seed;
    Ok(opts)
}

/// Tucker at `R_c = 0.5` on the 16-channel conv: ratio 2304 / 832, about 2.77.
pub fn default_compression() -> Result<CompressionSpec> {
    CompressionSpec::tucker(RC, MIN_IN_CHANNELS)
}
