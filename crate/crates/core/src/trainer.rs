//! The DeepTwist loop and the decompose-then-fine-tune baseline.
//!
//! DeepTwist trains the original network with ordinary SGD and, every
//! `S_D` batches, overwrites each targeted conv kernel with its low-rank
//! reconstruction. The structure never changes during training; the final
//! step is always a distortion, so the factors of that last step describe
//! the trained weights exactly.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::lowering::{lower_kernel, raise_kernel, LoweredKernel};
use crate::lowrank::{
    tiled_svd_decompose, tiled_svd_reconstruct, tucker_decompose, tucker_ranks, tucker_reconstruct,
    CompressionMethod, CompressionSpec, TileGridSvd, TuckerFactors,
};
use crate::nn::{evaluate, forward, Layer, LayerKind, LayerSpec, ModelState, SgdTrainer, TrainOptions};
use crate::tensor::Kernel4;

pub const DEFAULT_PROBE_SIZE: usize = 512;

/// Decomposition of one conv kernel.
#[derive(Debug, Clone, PartialEq)]
pub enum Factors {
    Tucker(TuckerFactors),
    /// Tiled SVD of the lowered `T x (S*d*d)` kernel matrix.
    Svd { grid: TileGridSvd, d: usize, s: usize, t: usize },
}

impl Factors {
    pub fn reconstruct_kernel(&self) -> Result<Kernel4> {
        match self {
            Factors::Tucker(f) => Ok(tucker_reconstruct(f)),
            Factors::Svd { grid, d, s, t } => raise_kernel(&LoweredKernel {
                matrix: tiled_svd_reconstruct(grid),
                d: *d,
                s: *s,
                t: *t,
            }),
        }
    }

    /// Stored parameters, with sigma folded into `U` for SVD tiles.
    pub fn param_count(&self) -> usize {
        match self {
            Factors::Tucker(f) => f.param_count(),
            Factors::Svd { grid, .. } => grid.param_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerFactors {
    /// Position of the conv layer in the model.
    pub layer: usize,
    pub name: String,
    pub factors: Factors,
}

/// Result of one distortion step.
#[derive(Debug, Clone)]
pub struct Distortion {
    pub model: ModelState,
    /// `||w - w~||_F^2 / N` over the targeted kernels; 0 when nothing is targeted.
    pub delta_w: f64,
    /// Number of weights subject to compression.
    pub targeted: usize,
    pub factors: Vec<LayerFactors>,
}

pub fn decompose_kernel(kernel: &Kernel4, spec: &CompressionSpec) -> Result<Factors> {
    match spec.method {
        CompressionMethod::Tucker { rc, hooi_iters } => {
            let (rs, rt) = tucker_ranks(kernel.in_channels(), kernel.out_channels(), rc);
            Ok(Factors::Tucker(tucker_decompose(kernel, rs, rt, hooi_iters)?))
        }
        CompressionMethod::SvdFull { rank } => svd_factors(kernel, None, rank),
        CompressionMethod::SvdTiled { rank, tile_h, tile_w } => svd_factors(kernel, Some((tile_h, tile_w)), rank),
    }
}

fn svd_factors(kernel: &Kernel4, tile: Option<(usize, usize)>, rank: usize) -> Result<Factors> {
    let lowered = lower_kernel(kernel);
    let (rows, cols) = lowered.matrix.shape();
    let (th, tw) = tile.unwrap_or((rows, cols));
    Ok(Factors::Svd {
        grid: tiled_svd_decompose(&lowered.matrix, th, tw, rank)?,
        d: lowered.d,
        s: lowered.s,
        t: lowered.t,
    })
}

/// Replaces every targeted conv kernel by its low-rank reconstruction.
/// The input model is left untouched.
pub fn distort_weights(model: &ModelState, spec: &CompressionSpec) -> Result<Distortion> {
    let mut out = model.clone();
    let mut factors = Vec::new();
    let mut sq = 0.0;
    let mut targeted = 0;
    for (li, layer) in model.layers().iter().enumerate() {
        let LayerKind::Conv2d { in_ch, .. } = layer.kind() else {
            continue;
        };
        if !spec.targets(in_ch) {
            continue;
        }
        let kernel = layer.kernel().expect("conv layer has a kernel");
        let f = decompose_kernel(&kernel, spec)?;
        let approx = f.reconstruct_kernel()?;
        for (a, b) in kernel.data().iter().zip(approx.data()) {
            sq += (a - b) * (a - b);
        }
        targeted += kernel.data().len();
        out.layers_mut()[li].set_kernel(&approx)?;
        factors.push(LayerFactors {
            layer: li,
            name: String::from(layer.name()),
            factors: f,
        });
    }
    let delta_w = if targeted == 0 { 0.0 } else { sq / targeted as f64 };
    Ok(Distortion {
        model: out,
        delta_w,
        targeted,
        factors,
    })
}

/// Replaces each Tucker-factored conv layer by the chain
/// `1x1 (S -> R_s)`, `d x d (R_s -> R_t)`, `1x1 (R_t -> T)`. The original
/// stride and padding go on the middle conv and the bias on the last.
pub fn build_decomposed_model(model: &ModelState, factors: &[LayerFactors]) -> Result<ModelState> {
    let mut layers = Vec::with_capacity(model.layers().len() + 2 * factors.len());
    for (li, layer) in model.layers().iter().enumerate() {
        let Some(lf) = factors.iter().find(|f| f.layer == li) else {
            layers.push(layer.clone());
            continue;
        };
        let Factors::Tucker(tf) = &lf.factors else {
            return Err(Error::Unsupported(format!(
                "layer {}: SVD factors have no layer-graph form; keep the distorted kernel",
                lf.name
            )));
        };
        let LayerKind::Conv2d {
            d,
            in_ch,
            out_ch,
            stride,
            padding,
            bias,
        } = layer.kind()
        else {
            return Err(arg_err!("factors for {} target a non-conv layer", lf.name));
        };
        let (rs, rt) = tf.ranks();
        if tf.kernel_size() != d || tf.ps.rows() != in_ch || tf.pt.rows() != out_ch {
            return Err(arg_err!("factors do not match layer {}", lf.name));
        }
        let name = layer.name();
        layers.push(Layer::new(
            LayerSpec::new(format!("{name}.ps"), LayerKind::conv(1, in_ch, rs, 1, 0, false)),
            tf.ps.data().to_vec(),
            Vec::new(),
        )?);
        layers.push(Layer::new(
            LayerSpec::new(format!("{name}.core"), LayerKind::conv(d, rs, rt, stride, padding, false)),
            tf.core.data().to_vec(),
            Vec::new(),
        )?);
        layers.push(Layer::new(
            LayerSpec::new(format!("{name}.pt"), LayerKind::conv(1, rt, out_ch, 1, 0, bias)),
            tf.pt.transpose().into_data(),
            layer.bias().to_vec(),
        )?);
    }
    ModelState::new(layers, model.seed, model.step)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeepTwistConfig {
    sd: usize,
    total_steps: usize,
    pub compression: CompressionSpec,
    pub train: TrainOptions,
    /// Size of the fixed training subset on which loss is measured around
    /// each distortion.
    pub probe_size: usize,
}

impl DeepTwistConfig {
    /// `total_steps` is rounded up to a multiple of `sd` so the run ends on
    /// a distortion.
    pub fn new(sd: usize, total_steps: usize, compression: CompressionSpec, train: TrainOptions) -> Result<Self> {
        if total_steps == 0 {
            return Err(arg_err!("total steps must be positive"));
        }
        if sd == 0 || sd > total_steps {
            return Err(arg_err!("distortion period must lie in [1, {total_steps}], got {sd}"));
        }
        Ok(Self {
            sd,
            total_steps: total_steps.div_ceil(sd) * sd,
            compression,
            train,
            probe_size: DEFAULT_PROBE_SIZE,
        })
    }

    pub fn distortion_period(&self) -> usize {
        self.sd
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn distortions(&self) -> usize {
        self.total_steps / self.sd
    }
}

/// One row of the flatness log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionRecord {
    /// Batches trained so far in this run.
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    pub loss_pre: f64,
    pub loss_post: f64,
    /// `(loss_post - loss_pre) / loss_pre`, or 0 when `loss_pre` is 0.
    pub rel_loss_jump: f64,
    pub delta_w: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct DeepTwistRun {
    /// Final weights in the original structure.
    pub model: ModelState,
    /// Factors of the final distortion.
    pub factors: Vec<LayerFactors>,
    pub log: Vec<DistortionRecord>,
}

fn probe_indices(data: &Dataset, size: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15));
    idx.truncate(size.max(1));
    idx.sort_unstable();
    idx
}

pub fn deeptwist_train(
    model: ModelState,
    train: &Dataset,
    test: &Dataset,
    cfg: &DeepTwistConfig,
) -> Result<DeepTwistRun> {
    deeptwist_train_with(model, train, test, cfg, |_| {})
}

/// As [`deeptwist_train`], handing each record to `on_record` as soon as
/// it exists so callers can persist partial logs.
pub fn deeptwist_train_with(
    mut model: ModelState,
    train: &Dataset,
    test: &Dataset,
    cfg: &DeepTwistConfig,
    mut on_record: impl FnMut(&DistortionRecord),
) -> Result<DeepTwistRun> {
    let mut trainer = SgdTrainer::new(train, cfg.train.clone())?;
    let probe = probe_indices(train, cfg.probe_size, cfg.train.shuffle_seed);
    let mut log = Vec::with_capacity(cfg.distortions());
    let mut factors = Vec::new();
    for _ in 0..cfg.distortions() {
        trainer.run(&mut model, cfg.sd)?;
        let loss_pre = forward(&model, train, &probe)?.loss;
        let distortion = distort_weights(&model, &cfg.compression)?;
        model = distortion.model;
        factors = distortion.factors;
        let loss_post = forward(&model, train, &probe)?.loss;
        let test_acc = if test.is_empty() { f64::NAN } else { evaluate(&model, test)?.1 };
        let record = DistortionRecord {
            step: trainer.steps(),
            epoch: trainer.epoch(),
            lr: trainer.learning_rate(),
            loss_pre,
            loss_post,
            rel_loss_jump: if loss_pre > 0.0 { (loss_post - loss_pre) / loss_pre } else { 0.0 },
            delta_w: distortion.delta_w,
            test_acc,
        };
        on_record(&record);
        log.push(record);
    }
    Ok(DeepTwistRun { model, factors, log })
}

/// Periodic training-progress sample for runs without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProgressRecord {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    /// Mean training-batch loss since the previous record.
    pub loss: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    /// The decomposed (three-conv) structure after fine-tuning.
    pub model: ModelState,
    /// Accuracy right after decomposition, before any fine-tuning.
    pub one_shot_acc: f64,
    pub log: Vec<ProgressRecord>,
}

/// Decomposes once, rebuilds the layer graph with the factors and
/// fine-tunes that structure with plain SGD for `steps` batches, logging
/// every `log_every` batches and at the end.
pub fn baseline_finetune(
    model: &ModelState,
    train: &Dataset,
    test: &Dataset,
    spec: &CompressionSpec,
    opts: &TrainOptions,
    steps: usize,
    log_every: usize,
) -> Result<BaselineRun> {
    if !matches!(spec.method, CompressionMethod::Tucker { .. }) {
        return Err(Error::Unsupported(format!(
            "fine-tuning needs a restructured model, which {} does not produce; use deeptwist instead",
            spec.method_name()
        )));
    }
    let distortion = distort_weights(model, spec)?;
    let mut decomposed = build_decomposed_model(model, &distortion.factors)?;
    let test_acc = |m: &ModelState| -> Result<f64> {
        Ok(if test.is_empty() { f64::NAN } else { evaluate(m, test)?.1 })
    };
    let one_shot_acc = test_acc(&decomposed)?;
    let mut log = Vec::new();
    if steps > 0 {
        let mut trainer = SgdTrainer::new(train, opts.clone())?;
        let every = log_every.clamp(1, steps);
        let mut done = 0;
        while done < steps {
            let n = every.min(steps - done);
            let loss = trainer.run(&mut decomposed, n)?;
            done += n;
            log.push(ProgressRecord {
                step: trainer.steps(),
                epoch: trainer.epoch(),
                lr: trainer.learning_rate(),
                loss,
                test_acc: test_acc(&decomposed)?,
            });
        }
    }
    Ok(BaselineRun {
        model: decomposed,
        one_shot_acc,
        log,
    })
}
