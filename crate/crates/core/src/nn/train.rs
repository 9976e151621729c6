use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{arg_err, Result};
use crate::nn::model::ModelState;
use crate::nn::optim::{backward_and_step, LrSchedule, Sgd};

/// Optimizer and batching settings shared by every training mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub momentum: Option<f64>,
    /// Seeds the per-epoch shuffle of the training set.
    pub shuffle_seed: u64,
}

impl TrainOptions {
    pub fn new(schedule: LrSchedule, batch_size: usize) -> Self {
        Self {
            schedule,
            batch_size,
            momentum: None,
            shuffle_seed: 0,
        }
    }
}

/// Streams mini-batches over reshuffled epochs and applies SGD steps.
/// Batches continue across epoch boundaries; the epoch index only selects
/// the learning rate.
pub struct SgdTrainer<'a> {
    data: &'a Dataset,
    opts: TrainOptions,
    sgd: Sgd,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
    steps: u64,
}

impl<'a> SgdTrainer<'a> {
    pub fn new(data: &'a Dataset, opts: TrainOptions) -> Result<Self> {
        if data.is_empty() {
            return Err(arg_err!("training set is empty"));
        }
        if opts.batch_size == 0 {
            return Err(arg_err!("batch size must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.shuffle_seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        Ok(Self {
            data,
            sgd: Sgd::new(opts.momentum),
            opts,
            rng,
            order,
            cursor: 0,
            epoch: 0,
            steps: 0,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn learning_rate(&self) -> f64 {
        self.opts.schedule.rate_at(self.epoch)
    }

    pub fn reset_optimizer(&mut self) {
        self.sgd.reset();
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
            self.epoch += 1;
        }
        let end = (self.cursor + self.opts.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// One batch; returns the loss measured before the update.
    pub fn step(&mut self, model: &mut ModelState) -> Result<f64> {
        let batch = self.next_batch();
        let lr = self.learning_rate();
        let loss = backward_and_step(model, self.data, &batch, &mut self.sgd, lr)?;
        self.steps += 1;
        Ok(loss)
    }

    /// Runs `n` batches; returns the mean training loss over them.
    pub fn run(&mut self, model: &mut ModelState, n: usize) -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..n {
            total += self.step(model)?;
        }
        Ok(if n == 0 { 0.0 } else { total / n as f64 })
    }
}

/// Plain SGD for `steps` batches.
pub fn train(model: &mut ModelState, data: &Dataset, opts: &TrainOptions, steps: usize) -> Result<f64> {
    SgdTrainer::new(data, opts.clone())?.run(model, steps)
}
