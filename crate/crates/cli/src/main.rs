use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deeptwist::config::RunConfig;
use deeptwist::runner::{run, Task};
use deeptwist::Error;

/// Compression-aware CNN training by periodic low-rank weight distortion.
#[derive(Parser)]
#[command(name = "deeptwist", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plain SGD training.
    Train(Flags),
    /// Training with a low-rank distortion every `sd` batches.
    Deeptwist(Flags),
    /// One-shot Tucker decomposition followed by fine-tuning.
    Baseline(Flags),
    /// Compress a checkpoint once, without training.
    Decompose(Flags),
    /// Test loss and accuracy of a checkpoint.
    Eval(Flags),
    /// Compression ratio arithmetic for Tucker or tiled SVD.
    Ratio(Flags),
    /// Weight spread of tiled SVD reconstructions of a Gaussian matrix.
    VarianceStudy(Flags),
}

#[derive(Args)]
struct Flags {
    /// key = value settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Distortion period in batches.
    #[arg(long)]
    sd: Option<usize>,
    /// Tucker rank fraction.
    #[arg(long)]
    rc: Option<f64>,
    /// SVD rank per tile.
    #[arg(long)]
    rank: Option<usize>,
    /// SVD tile as HxW.
    #[arg(long)]
    tile: Option<String>,
    /// tucker, svd or svd_tiled.
    #[arg(long)]
    method: Option<String>,
    /// Training batches.
    #[arg(long)]
    steps: Option<usize>,
    /// Input checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    /// Kernel size for `ratio`.
    #[arg(long)]
    d: Option<usize>,
    /// Input channels for `ratio`.
    #[arg(long)]
    s: Option<usize>,
    /// Output channels for `ratio`.
    #[arg(long)]
    t: Option<usize>,
    /// Matrix rows.
    #[arg(long)]
    n: Option<usize>,
    /// Matrix columns.
    #[arg(long)]
    m: Option<usize>,
    /// Target compression ratio.
    #[arg(long)]
    target: Option<f64>,
    /// Comma list of HxW tiles for `variance-study`.
    #[arg(long)]
    tiles: Option<String>,
}

impl Flags {
    fn resolve(self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let pairs = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.map(|v| v.display().to_string())),
            ("sd", self.sd.map(|v| v.to_string())),
            ("rc", self.rc.map(|v| v.to_string())),
            ("rank", self.rank.map(|v| v.to_string())),
            ("tile", self.tile),
            ("method", self.method),
            ("steps", self.steps.map(|v| v.to_string())),
            ("checkpoint", self.checkpoint.map(|v| v.display().to_string())),
            ("lr", self.lr.map(|v| v.to_string())),
            ("d", self.d.map(|v| v.to_string())),
            ("s", self.s.map(|v| v.to_string())),
            ("t", self.t.map(|v| v.to_string())),
            ("n", self.n.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("target", self.target.map(|v| v.to_string())),
            ("tiles", self.tiles),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (task, flags) = match cli.cmd {
        Cmd::Train(f) => (Task::Train, f),
        Cmd::Deeptwist(f) => (Task::DeepTwist, f),
        Cmd::Baseline(f) => (Task::Baseline, f),
        Cmd::Decompose(f) => (Task::Decompose, f),
        Cmd::Eval(f) => (Task::Eval, f),
        Cmd::Ratio(f) => (Task::Ratio, f),
        Cmd::VarianceStudy(f) => (Task::VarianceStudy, f),
    };
    let stdout = io::stdout();
    let result = flags.resolve().and_then(|cfg| run(task, &cfg, &mut stdout.lock()));
    let _ = io::stdout().flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("deeptwist {}: {e}", task.name());
            ExitCode::from(e.exit_code())
        }
    }
}
