//! How tile size shapes the distribution of reconstructed weights.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::lowrank::tiled::{svd_rank_for_ratio, tiled_svd_decompose, tiled_svd_reconstruct};
use crate::matrix::Matrix;

pub const HISTOGRAM_BINS: usize = 200;

/// Uniform bins over `[0, hi]`; the last bin is closed on the right.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `(bin_lo, bin_hi, count)` rows.
    pub fn bins(&self) -> impl Iterator<Item = (f64, f64, u64)> + '_ {
        let n = self.counts.len() as f64;
        self.counts.iter().enumerate().map(move |(i, &c)| {
            (self.hi * i as f64 / n, self.hi * (i + 1) as f64 / n, c)
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TilingStudyEntry {
    pub tile_h: usize,
    pub tile_w: usize,
    pub rank: usize,
    pub achieved_ratio: f64,
    pub variance: f64,
    pub histogram: Histogram,
}

/// Unbiased sample variance; zero for fewer than two values.
pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Histogram of the strictly positive entries over `[0, max |w|]`.
pub fn positive_histogram(values: &[f64], bins: usize) -> Histogram {
    let hi = values.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
    let mut counts = vec![0u64; bins];
    if hi > 0.0 {
        for &v in values.iter().filter(|v| **v > 0.0) {
            let idx = ((v / hi) * bins as f64) as usize;
            counts[idx.min(bins - 1)] += 1;
        }
    }
    Histogram { hi, counts }
}

/// Compress `m` with each tile configuration at the largest rank that still
/// reaches `target_ratio`, and describe the reconstructed weights.
pub fn tiling_variance_study(
    m: &Matrix,
    tiles: &[(usize, usize)],
    target_ratio: f64,
) -> Result<Vec<TilingStudyEntry>> {
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(arg_err!("study matrix contains non-finite entries"));
    }
    let (n, cols) = m.shape();
    tiles
        .iter()
        .map(|&(tile_h, tile_w)| {
            let (rank, achieved_ratio) = svd_rank_for_ratio(n, cols, tile_h, tile_w, target_ratio)?;
            let grid = tiled_svd_decompose(m, tile_h, tile_w, rank)?;
            let rec = tiled_svd_reconstruct(&grid);
            Ok(TilingStudyEntry {
                tile_h,
                tile_w,
                rank,
                achieved_ratio,
                variance: sample_variance(rec.data()),
                histogram: positive_histogram(rec.data(), HISTOGRAM_BINS),
            })
        })
        .collect()
}
