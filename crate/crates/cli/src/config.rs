//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `seed` | init, shuffle and synthetic-data seed | 0 |
//! | `out` | output directory | `runs/out` |
//! | `dataset` | `synthetic`, `idx` or `cifar` | `synthetic` |
//! | `train_images`, `train_labels`, `test_images`, `test_labels` | IDX files | |
//! | `train_files` (comma list), `test_file` | CIFAR-10 binary batches | |
//! | `classes`, `train_size`, `test_size`, `image_size`, `separation` | synthetic blobs | 3, 3000, 300, 8, 3.0 |
//! | `model` | `toy_cnn` or `gap_cnn` | `toy_cnn` |
//! | `width`, `depth` | conv width, extra convs of `gap_cnn` | 16, 2 |
//! | `checkpoint` | input checkpoint | |
//! | `steps` | training batches | 3000 |
//! | `pretrain_steps` | plain training before `baseline` when no checkpoint is given | `steps` |
//! | `sd` | distortion period in batches | 200 |
//! | `method` | `tucker`, `svd` or `svd_tiled` | `tucker` |
//! | `rc` | Tucker rank fraction | 0.5 |
//! | `rank`, `tile` (`HxW`) | SVD rank and tile | 1, whole matrix |
//! | `hooi_iters` | HOOI rounds | 3 |
//! | `min_in_channels` | skip convs with fewer input channels | 4 |
//! | `lr`, `schedule` | base rate; `constant` or `staged` (rate, /10, /100 over 1/2, 1/4, 1/4 of the run) | 0.05, `staged` |
//! | `batch_size`, `momentum` | SGD settings; momentum 0 disables it | 32, 0 |
//! | `probe_size` | samples for loss around each distortion | 512 |
//! | `log_every` | progress-log period for `train` and `baseline` | 200 |
//! | `n`, `m`, `d`, `s`, `t`, `target` | dimensions and target ratio for `ratio` / `variance-study` | |
//! | `tiles` | comma list of `HxW` for `variance-study` | `1024x1024,64x64,8x8` |

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const KEYS: &[&str] = &[
    "seed", "out", "dataset", "train_images", "train_labels", "test_images", "test_labels", "train_files",
    "test_file", "classes", "train_size", "test_size", "image_size", "separation", "model", "width", "depth",
    "checkpoint", "steps", "pretrain_steps", "sd", "method", "rc", "rank", "tile", "hooi_iters",
    "min_in_channels", "lr", "schedule", "batch_size", "momentum", "probe_size", "log_every", "n", "m", "d", "s",
    "t", "target", "tiles",
];

/// Validated key/value settings; later assignments override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("config line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Argument(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::Argument(format!("unknown config key {key:?}")));
        }
        self.values.insert(key.to_owned(), value.into());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Argument(format!("bad value {v:?} for {key}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Argument(format!("missing required setting {key}")))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    /// The settings as `key=value` lines in key order.
    pub fn echo(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}

/// Parses `HxW`.
pub fn parse_tile(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Argument(format!("tile must look like 64x64, got {s:?}"));
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut c = RunConfig::parse("# run\nseed = 7\nrc=0.5\n\nsd = 100\n").unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(7));
        c.set("sd", "50").unwrap();
        assert_eq!(c.require::<usize>("sd").unwrap(), 50);
        assert_eq!(c.echo(), "rc=0.5\nsd=50\nseed=7\n");
        assert!(RunConfig::parse("bogus = 1").is_err());
        assert!(RunConfig::parse("seed 1").is_err());
        assert!(c.get::<usize>("rc").is_err());
    }

    #[test]
    fn tiles() {
        assert_eq!(parse_tile("64x8").unwrap(), (64, 8));
        assert!(parse_tile("64").is_err());
        assert!(parse_tile("0x3").is_err());
    }
}
