//! The subcommands behind the `deeptwist` binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use deeptwist_core::data::Dataset;
use deeptwist_core::lowrank::{
    svd_rank_for_ratio, tiled_param_count, tiling_variance_study, tucker_ranks, tucker_ratio, CompressionMethod,
    CompressionSpec, DEFAULT_HOOI_ITERS,
};
use deeptwist_core::nn::{evaluate, gap_cnn, toy_cnn, LayerSpec, LrSchedule, ModelState, SgdTrainer, TrainOptions};
use deeptwist_core::trainer::{
    baseline_finetune, build_decomposed_model, deeptwist_train_with, distort_weights, DeepTwistConfig,
    Factors, ProgressRecord, DEFAULT_PROBE_SIZE,
};
use deeptwist_core::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{parse_tile, RunConfig};
use crate::datasets::{concat, load_cifar10_binary, load_idx};
use crate::error::{Error, Result};
use crate::metrics::{sig9, write_histogram, write_metrics, write_progress};
use crate::runmeta::{dataset_digest, sha256_hex, write_run_metadata};
use crate::toy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Train,
    DeepTwist,
    Baseline,
    Decompose,
    Eval,
    Ratio,
    VarianceStudy,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Train => "train",
            Task::DeepTwist => "deeptwist",
            Task::Baseline => "baseline",
            Task::Decompose => "decompose",
            Task::Eval => "eval",
            Task::Ratio => "ratio",
            Task::VarianceStudy => "variance-study",
        }
    }
}

pub fn run(task: Task, cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    match task {
        Task::Train => train(cfg, out),
        Task::DeepTwist => deeptwist(cfg, out),
        Task::Baseline => baseline(cfg, out),
        Task::Decompose => decompose(cfg, out),
        Task::Eval => eval(cfg, out),
        Task::Ratio => ratio(cfg, out),
        Task::VarianceStudy => variance_study(cfg, out),
    }
}

struct Inputs {
    train: Dataset,
    test: Dataset,
    digests: Vec<(&'static str, String)>,
}

fn require_path(cfg: &RunConfig, key: &str) -> Result<PathBuf> {
    cfg.path(key)
        .ok_or_else(|| Error::Argument(format!("dataset needs the {key} setting")))
}

fn load_data(cfg: &RunConfig) -> Result<Inputs> {
    let seed = cfg.get_or("seed", 0u64)?;
    let (train, test) = match cfg.raw("dataset").unwrap_or("synthetic") {
        "synthetic" => {
            let task = toy::blob_task(
                cfg.get_or("classes", toy::CLASSES)?,
                cfg.get_or("image_size", toy::IMAGE_SIZE)?,
                cfg.get_or("train_size", toy::TRAIN_SIZE)?,
                cfg.get_or("test_size", toy::TEST_SIZE)?,
                cfg.get_or("separation", toy::SEPARATION)?,
                seed,
            )?;
            (task.train, task.test)
        }
        "idx" => (
            load_idx(&require_path(cfg, "train_images")?, &require_path(cfg, "train_labels")?)?,
            load_idx(&require_path(cfg, "test_images")?, &require_path(cfg, "test_labels")?)?,
        ),
        "cifar" => {
            let files = cfg
                .raw("train_files")
                .ok_or_else(|| Error::Argument("dataset needs the train_files setting".into()))?;
            let parts = files
                .split(',')
                .map(|f| load_cifar10_binary(Path::new(f.trim())))
                .collect::<Result<Vec<_>>>()?;
            (concat(&parts)?, load_cifar10_binary(&require_path(cfg, "test_file")?)?)
        }
        other => return Err(Error::Argument(format!("unknown dataset {other:?}"))),
    };
    if train.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    let digests = vec![("train", dataset_digest(&train)), ("test", dataset_digest(&test))];
    Ok(Inputs { train, test, digests })
}

fn model_specs(cfg: &RunConfig, data: &Dataset) -> Result<Vec<LayerSpec>> {
    let width = cfg.get_or("width", toy::WIDTH)?;
    let (c, k) = (data.channels(), data.classes());
    match cfg.raw("model").unwrap_or("toy_cnn") {
        "toy_cnn" => {
            if data.height() != data.width() || data.height() % 4 != 0 {
                return Err(Error::Argument("toy_cnn needs square images with a side divisible by 4".into()));
            }
            Ok(toy_cnn(c, k, width, data.height()))
        }
        "gap_cnn" => Ok(gap_cnn(c, k, width, cfg.get_or("depth", 2)?)),
        other => Err(Error::Argument(format!("unknown model {other:?}"))),
    }
}

fn checkpoint_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Model from `checkpoint` when set, else freshly initialized.
fn initial_model(cfg: &RunConfig, data: &Dataset, digests: &mut Vec<(&'static str, String)>) -> Result<ModelState> {
    match cfg.path("checkpoint") {
        Some(p) => {
            digests.push(("checkpoint", checkpoint_digest(&p)?));
            load_checkpoint(&p)
        }
        None => Ok(ModelState::init(model_specs(cfg, data)?, cfg.get_or("seed", 0)?)?),
    }
}

fn train_options(cfg: &RunConfig, steps: usize, train_size: usize) -> Result<TrainOptions> {
    let lr = cfg.get_or("lr", toy::BASE_LR)?;
    let batch = cfg.get_or("batch_size", toy::BATCH_SIZE)?;
    let schedule = match cfg.raw("schedule").unwrap_or("staged") {
        "staged" => toy::staged_schedule(lr, steps, batch, train_size)?,
        "constant" => LrSchedule::constant(lr)?,
        other => return Err(Error::Argument(format!("unknown schedule {other:?}"))),
    };
    let mut opts = TrainOptions::new(schedule, batch);
    opts.shuffle_seed = cfg.get_or("seed", 0)?;
    let momentum: f64 = cfg.get_or("momentum", 0.0)?;
    if momentum != 0.0 {
        opts.momentum = Some(momentum);
    }
    Ok(opts)
}

pub fn compression_spec(cfg: &RunConfig) -> Result<CompressionSpec> {
    let min_in = cfg.get_or("min_in_channels", toy::MIN_IN_CHANNELS)?;
    let method = match cfg.raw("method").unwrap_or("tucker") {
        "tucker" => CompressionMethod::Tucker {
            rc: cfg.get_or("rc", toy::RC)?,
            hooi_iters: cfg.get_or("hooi_iters", DEFAULT_HOOI_ITERS)?,
        },
        "svd" | "svd_full" | "svd_tiled" => {
            let rank = cfg.get_or("rank", 1)?;
            match cfg.raw("tile") {
                Some(t) => {
                    let (tile_h, tile_w) = parse_tile(t)?;
                    CompressionMethod::SvdTiled { rank, tile_h, tile_w }
                }
                None => CompressionMethod::SvdFull { rank },
            }
        }
        other => return Err(Error::Argument(format!("unknown method {other:?}"))),
    };
    Ok(CompressionSpec::new(method, min_in)?)
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.path("out").unwrap_or_else(|| PathBuf::from("runs/out"))
}

fn acc_text(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else {
        format!("{v:.4}")
    }
}

fn test_acc(model: &ModelState, test: &Dataset) -> Result<f64> {
    Ok(if test.is_empty() { f64::NAN } else { evaluate(model, test)?.1 })
}

fn train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let Inputs { train, test, mut digests } = load_data(cfg)?;
    let steps = cfg.get_or("steps", toy::STEPS)?;
    let every = cfg.get_or("log_every", 200usize)?.max(1);
    let mut model = initial_model(cfg, &train, &mut digests)?;
    let dir = out_dir(cfg);
    write_run_metadata(&dir, "train", cfg, &digests)?;
    let mut trainer = SgdTrainer::new(&train, train_options(cfg, steps, train.len())?)?;
    let mut log = Vec::new();
    let mut done = 0;
    while done < steps {
        let n = every.min(steps - done);
        let loss = trainer.run(&mut model, n)?;
        done += n;
        log.push(ProgressRecord {
            step: trainer.steps(),
            epoch: trainer.epoch(),
            lr: trainer.learning_rate(),
            loss,
            test_acc: test_acc(&model, &test)?,
        });
    }
    write_progress(&log, &dir.join("progress.csv"))?;
    save_checkpoint(&model, &dir.join("model.dtw"))?;
    writeln!(out, "trained {steps} steps, test_acc={}", acc_text(test_acc(&model, &test)?))?;
    Ok(())
}

fn deeptwist(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let steps: usize = cfg.get_or("steps", toy::STEPS)?;
    if steps == 0 {
        return Err(Error::Argument("deeptwist needs at least one step".into()));
    }
    let sd = cfg.get_or("sd", toy::SD.min(steps))?;
    let spec = compression_spec(cfg)?;
    let Inputs { train, test, mut digests } = load_data(cfg)?;
    let model = initial_model(cfg, &train, &mut digests)?;
    let mut dt = DeepTwistConfig::new(sd, steps, spec, train_options(cfg, steps, train.len())?)?;
    dt.probe_size = cfg.get_or("probe_size", DEFAULT_PROBE_SIZE)?;
    let dir = out_dir(cfg);
    write_run_metadata(&dir, "deeptwist", cfg, &digests)?;
    let mut log = Vec::new();
    let result = deeptwist_train_with(model, &train, &test, &dt, |r| log.push(*r));
    write_metrics(&log, &dir.join("metrics.csv"))?;
    let run = result?;
    save_checkpoint(&run.model, &dir.join("model.dtw"))?;
    let tucker = run.factors.iter().all(|f| matches!(f.factors, Factors::Tucker(_)));
    if tucker {
        save_checkpoint(&build_decomposed_model(&run.model, &run.factors)?, &dir.join("decomposed.dtw"))?;
    }
    writeln!(out, "{} distortions over {} steps", run.log.len(), dt.total_steps())?;
    if let Some(last) = run.log.last() {
        writeln!(
            out,
            "final: rel_loss_jump={} delta_w={} test_acc={}",
            sig9(last.rel_loss_jump),
            sig9(last.delta_w),
            acc_text(last.test_acc)
        )?;
    }
    for lf in &run.factors {
        let original = run.model.layers()[lf.layer].weight().len();
        writeln!(out, "{}: ratio {:.4}", lf.name, original as f64 / lf.factors.param_count() as f64)?;
    }
    Ok(())
}

fn baseline(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let spec = compression_spec(cfg)?;
    let Inputs { train, test, mut digests } = load_data(cfg)?;
    let steps = cfg.get_or("steps", toy::STEPS)?;
    let every = cfg.get_or("log_every", 200usize)?;
    let mut model = initial_model(cfg, &train, &mut digests)?;
    if cfg.raw("checkpoint").is_none() {
        let pre = cfg.get_or("pretrain_steps", steps)?;
        SgdTrainer::new(&train, train_options(cfg, pre, train.len())?)?.run(&mut model, pre)?;
    }
    let dir = out_dir(cfg);
    write_run_metadata(&dir, "baseline", cfg, &digests)?;
    let opts = train_options(cfg, steps, train.len())?;
    let run = baseline_finetune(&model, &train, &test, &spec, &opts, steps, every)?;
    write_progress(&run.log, &dir.join("progress.csv"))?;
    save_checkpoint(&run.model, &dir.join("decomposed.dtw"))?;
    writeln!(
        out,
        "one-shot test_acc={} fine-tuned test_acc={}",
        acc_text(run.one_shot_acc),
        acc_text(test_acc(&run.model, &test)?)
    )?;
    Ok(())
}

fn loaded_checkpoint(cfg: &RunConfig, digests: &mut Vec<(&'static str, String)>) -> Result<ModelState> {
    let path = cfg
        .path("checkpoint")
        .ok_or_else(|| Error::Argument("--checkpoint is required".into()))?;
    digests.push(("checkpoint", checkpoint_digest(&path)?));
    load_checkpoint(&path)
}

fn decompose(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let spec = compression_spec(cfg)?;
    let mut digests = Vec::new();
    let model = loaded_checkpoint(cfg, &mut digests)?;
    let Inputs { test, digests: data_digests, .. } = load_data(cfg)?;
    digests.extend(data_digests);
    let distortion = distort_weights(&model, &spec)?;
    let exported = match spec.method {
        CompressionMethod::Tucker { .. } => build_decomposed_model(&model, &distortion.factors)?,
        _ => distortion.model.clone(),
    };
    let dir = out_dir(cfg);
    write_run_metadata(&dir, "decompose", cfg, &digests)?;
    save_checkpoint(&exported, &dir.join("decomposed.dtw"))?;
    for lf in &distortion.factors {
        let original = model.layers()[lf.layer].weight().len();
        writeln!(out, "{}: ratio {:.4}", lf.name, original as f64 / lf.factors.param_count() as f64)?;
    }
    writeln!(
        out,
        "delta_w={} test_acc before={} after={}",
        sig9(distortion.delta_w),
        acc_text(test_acc(&model, &test)?),
        acc_text(test_acc(&exported, &test)?)
    )?;
    Ok(())
}

fn eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let mut digests = Vec::new();
    let model = loaded_checkpoint(cfg, &mut digests)?;
    let Inputs { test, .. } = load_data(cfg)?;
    let (loss, acc) = evaluate(&model, &test)?;
    writeln!(out, "test_loss={} test_acc={acc:.4} samples={}", sig9(loss), test.len())?;
    Ok(())
}

fn ratio(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    match cfg.raw("method").unwrap_or("tucker") {
        "tucker" => {
            let (d, s, t): (usize, usize, usize) = (cfg.require("d")?, cfg.require("s")?, cfg.require("t")?);
            let rc: f64 = cfg.require("rc")?;
            if d == 0 || s == 0 || t == 0 || !(rc > 0.0 && rc <= 1.0) {
                return Err(Error::Argument("need positive d, s, t and rc in (0, 1]".into()));
            }
            let (rs, rt) = tucker_ranks(s, t, rc);
            writeln!(out, "R_s={rs} R_t={rt}")?;
            writeln!(out, "params original={} compressed={}", d * d * s * t, s * rs + d * d * rs * rt + t * rt)?;
            writeln!(out, "ratio {:.6}", tucker_ratio(d, s, t, rs, rt))?;
        }
        "svd" | "svd_full" | "svd_tiled" => {
            let (n, m): (usize, usize) = (cfg.require("n")?, cfg.require("m")?);
            if n == 0 || m == 0 {
                return Err(Error::Argument("need positive n and m".into()));
            }
            let (th, tw) = match cfg.raw("tile") {
                Some(t) => parse_tile(t)?,
                None => (n, m),
            };
            let rank = match (cfg.get::<usize>("rank")?, cfg.get::<f64>("target")?) {
                (Some(r), _) if r > 0 => r,
                (Some(_), _) => return Err(Error::Argument("rank must be positive".into())),
                (None, Some(target)) => svd_rank_for_ratio(n, m, th, tw, target)?.0,
                (None, None) => return Err(Error::Argument("give --rank or --target".into())),
            };
            let compressed = tiled_param_count(n, m, th, tw, rank);
            writeln!(out, "rank={rank} tiles={}", n.div_ceil(th) * m.div_ceil(tw))?;
            writeln!(out, "params original={} compressed={compressed}", n * m)?;
            writeln!(out, "ratio {:.6}", (n * m) as f64 / compressed as f64)?;
        }
        other => return Err(Error::Argument(format!("unknown method {other:?}"))),
    }
    Ok(())
}

fn variance_study(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let n = cfg.get_or("n", 1024usize)?;
    let m = cfg.get_or("m", n)?;
    let target = cfg.get_or("target", 4.0)?;
    let tiles = cfg
        .raw("tiles")
        .unwrap_or("1024x1024,64x64,8x8")
        .split(',')
        .map(parse_tile)
        .collect::<Result<Vec<_>>>()?;
    if n == 0 || m == 0 {
        return Err(Error::Argument("need positive n and m".into()));
    }
    let seed = cfg.get_or("seed", 0u64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f64> = (0..n * m).map(|_| StandardNormal.sample(&mut rng)).collect();
    let matrix = Matrix::new(n, m, data)?;
    let entries = tiling_variance_study(&matrix, &tiles, target)?;
    let dir = out_dir(cfg);
    write_run_metadata(&dir, "variance-study", cfg, &[("matrix", sha256_hex(&f64_bytes(matrix.data())))])?;
    writeln!(out, "tile,rank,ratio,variance")?;
    for e in &entries {
        write_histogram(&e.histogram, &dir.join(format!("hist_{}x{}.csv", e.tile_h, e.tile_w)))?;
        writeln!(out, "{}x{},{},{:.6},{}", e.tile_h, e.tile_w, e.rank, e.achieved_ratio, sig9(e.variance))?;
    }
    Ok(())
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}
