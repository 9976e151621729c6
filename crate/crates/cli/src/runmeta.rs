//! Per-run metadata: the resolved settings plus content hashes of every input.

use std::fmt::Write as _;
use std::path::Path;

use deeptwist_core::data::Dataset;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::Result;
use crate::fsutil::write_atomic;

pub const FILE_NAME: &str = "run.txt";

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// Hash of the decoded samples, so synthetic and file-backed data are
/// fingerprinted the same way.
pub fn dataset_digest(data: &Dataset) -> String {
    let mut h = Sha256::new();
    for v in [data.channels(), data.height(), data.width(), data.classes(), data.len()] {
        h.update((v as u64).to_le_bytes());
    }
    for v in data.images() {
        h.update(v.to_le_bytes());
    }
    for &l in data.labels() {
        h.update((l as u64).to_le_bytes());
    }
    hex(&h.finalize())
}

/// Writes `run.txt` with the task, every setting, one digest per input and
/// a combined digest over all of them.
pub fn write_run_metadata(out: &Path, task: &str, cfg: &RunConfig, inputs: &[(&str, String)]) -> Result<()> {
    let mut text = format!("task={task}\nversion={}\n", env!("CARGO_PKG_VERSION"));
    text.push_str(&cfg.echo());
    for (key, default) in [("seed", "0"), ("momentum", "0")] {
        if cfg.raw(key).is_none() {
            let _ = writeln!(text, "{key}={default}");
        }
    }
    text.push_str("weight_decay=0\n");
    let mut all = Sha256::new();
    for (name, digest) in inputs {
        let _ = writeln!(text, "input.{name}={digest}");
        all.update(name.as_bytes());
        all.update(digest.as_bytes());
    }
    let _ = writeln!(text, "inputs_sha256={}", hex(&all.finalize()));
    write_atomic(&out.join(FILE_NAME), text.as_bytes())
}
