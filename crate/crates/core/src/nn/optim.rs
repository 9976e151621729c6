use alloc::vec::Vec;

use crate::data::Dataset;
use crate::error::{arg_err, Result};
use crate::nn::model::{loss_and_gradients, Gradients, ModelState};

/// Piecewise-constant learning rate over epochs. Epochs past the last
/// segment keep the final rate.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    segments: Vec<(usize, f64)>,
}

impl LrSchedule {
    /// `segments` are `(epoch_count, rate)` pairs in order.
    pub fn new(segments: Vec<(usize, f64)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(arg_err!("learning-rate schedule needs at least one segment"));
        }
        for &(epochs, rate) in &segments {
            if epochs == 0 || !(rate > 0.0) || !rate.is_finite() {
                return Err(arg_err!("invalid schedule segment ({epochs} epochs, rate {rate})"));
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(alloc::vec![(1, rate)])
    }

    pub fn segments(&self) -> &[(usize, f64)] {
        &self.segments
    }

    pub fn total_epochs(&self) -> usize {
        self.segments.iter().map(|s| s.0).sum()
    }

    pub fn rate_at(&self, epoch: usize) -> f64 {
        let mut end = 0;
        for &(epochs, rate) in &self.segments {
            end += epochs;
            if epoch < end {
                return rate;
            }
        }
        self.segments.last().unwrap().1
    }
}

/// SGD, optionally with classical momentum `v <- mu*v + g; w <- w - lr*v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    momentum: Option<f64>,
    velocity: Option<Gradients>,
}

impl Sgd {
    pub fn new(momentum: Option<f64>) -> Self {
        Self { momentum, velocity: None }
    }

    pub fn plain() -> Self {
        Self::new(None)
    }

    pub fn momentum(&self) -> Option<f64> {
        self.momentum
    }

    /// Drops accumulated velocity (e.g. after the model structure changes).
    pub fn reset(&mut self) {
        self.velocity = None;
    }

    pub fn apply(&mut self, model: &mut ModelState, grads: &Gradients, lr: f64) {
        let update: &Gradients = match self.momentum {
            None => grads,
            Some(mu) => {
                let v = self.velocity.get_or_insert_with(|| Gradients::zeros_like(model));
                for (vs, gs) in v.weight.iter_mut().zip(&grads.weight).chain(v.bias.iter_mut().zip(&grads.bias)) {
                    for (vi, gi) in vs.iter_mut().zip(gs) {
                        *vi = mu * *vi + gi;
                    }
                }
                v
            }
        };
        for (li, layer) in model.layers_mut().iter_mut().enumerate() {
            for (w, g) in layer.weight_mut().iter_mut().zip(&update.weight[li]) {
                *w -= lr * g;
            }
            for (b, g) in layer.bias_mut().iter_mut().zip(&update.bias[li]) {
                *b -= lr * g;
            }
        }
        model.step += 1;
    }
}

/// One optimizer step on the batch; returns the pre-step loss.
pub fn backward_and_step(
    model: &mut ModelState,
    data: &Dataset,
    indices: &[usize],
    sgd: &mut Sgd,
    lr: f64,
) -> Result<f64> {
    let (loss, grads) = loss_and_gradients(model, data, indices)?;
    sgd.apply(model, &grads, lr);
    Ok(loss)
}
