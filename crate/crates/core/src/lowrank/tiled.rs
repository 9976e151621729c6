//! Tiled truncated SVD of (usually skewed) lowered kernel matrices.
//!
//! The matrix is cut into a grid of `tile_h x tile_w` blocks; edge blocks are
//! smaller when the tile size does not divide the matrix. Each block keeps
//! rank `min(r, h, w)`. Storage is counted with the singular values folded
//! into `U`, so a block costs `r * (h + w)` parameters.

use alloc::vec::Vec;

use crate::error::{arg_err, Error, Result};
use crate::linalg::{truncated_svd, SvdFactors};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TileSvd {
    pub row0: usize,
    pub col0: usize,
    pub factors: SvdFactors,
}

impl TileSvd {
    pub fn height(&self) -> usize {
        self.factors.u.rows()
    }

    pub fn width(&self) -> usize {
        self.factors.v.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileGridSvd {
    pub rows: usize,
    pub cols: usize,
    pub tile_h: usize,
    pub tile_w: usize,
    pub rank: usize,
    /// Row-major over the grid.
    pub tiles: Vec<TileSvd>,
}

impl TileGridSvd {
    /// `sum r_tile * (h + w)`, sigma folded into `U`.
    pub fn param_count(&self) -> usize {
        self.tiles
            .iter()
            .map(|t| t.factors.rank() * (t.height() + t.width()))
            .sum()
    }

    /// `sum r_tile * (h + w + 1)`, sigma stored separately.
    pub fn param_count_with_sigma(&self) -> usize {
        self.tiles
            .iter()
            .map(|t| t.factors.rank() * (t.height() + t.width() + 1))
            .sum()
    }

    pub fn ratio(&self) -> f64 {
        (self.rows * self.cols) as f64 / self.param_count() as f64
    }
}

fn tile_extents(total: usize, tile: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..total)
        .step_by(tile)
        .map(move |start| (start, tile.min(total - start)))
}

pub fn tiled_svd_decompose(
    m: &Matrix,
    tile_h: usize,
    tile_w: usize,
    rank: usize,
) -> Result<TileGridSvd> {
    if rank == 0 || tile_h == 0 || tile_w == 0 {
        return Err(arg_err!(
            "tiled SVD needs rank and tile dims >= 1, got r={rank} tile={tile_h}x{tile_w}"
        ));
    }
    let (rows, cols) = m.shape();
    let mut tiles = Vec::new();
    for (row0, h) in tile_extents(rows, tile_h) {
        for (col0, w) in tile_extents(cols, tile_w) {
            let block = m.block(row0, col0, h, w);
            let factors = truncated_svd(&block, rank.min(h).min(w))?;
            tiles.push(TileSvd {
                row0,
                col0,
                factors,
            });
        }
    }
    Ok(TileGridSvd {
        rows,
        cols,
        tile_h,
        tile_w,
        rank,
        tiles,
    })
}

pub fn tiled_svd_reconstruct(grid: &TileGridSvd) -> Matrix {
    let mut out = Matrix::zeros(grid.rows, grid.cols);
    for tile in &grid.tiles {
        out.set_block(tile.row0, tile.col0, &tile.factors.reconstruct());
    }
    out
}

/// Folded-sigma parameter count of an `n x m` matrix tiled at rank `r`.
pub fn tiled_param_count(n: usize, m: usize, tile_h: usize, tile_w: usize, r: usize) -> usize {
    let mut total = 0;
    for (_, h) in tile_extents(n, tile_h) {
        for (_, w) in tile_extents(m, tile_w) {
            total += r.min(h).min(w) * (h + w);
        }
    }
    total
}

/// Largest rank whose compression ratio still reaches `target`, together
/// with the ratio it achieves.
pub fn svd_rank_for_ratio(
    n: usize,
    m: usize,
    tile_h: usize,
    tile_w: usize,
    target: f64,
) -> Result<(usize, f64)> {
    if n == 0 || m == 0 || tile_h == 0 || tile_w == 0 {
        return Err(arg_err!("matrix and tile dims must be positive"));
    }
    if !(target >= 1.0) {
        return Err(arg_err!("target ratio must be >= 1, got {target}"));
    }
    let original = (n * m) as f64;
    let ratio_at = |r: usize| original / tiled_param_count(n, m, tile_h, tile_w, r) as f64;
    let max_rank = tile_h.min(n).min(tile_w.min(m));
    for r in (1..=max_rank).rev() {
        let achieved = ratio_at(r);
        if achieved >= target {
            return Ok((r, achieved));
        }
    }
    Err(Error::Infeasible {
        target,
        best: ratio_at(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius_sq;
    use crate::oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn err_sq(a: &Matrix, b: &Matrix) -> f64 {
        let d: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        frobenius_sq(&d)
    }

    #[test]
    fn single_tile_equals_plain_svd() {
        let m = random(10, 14, 1);
        let grid = tiled_svd_decompose(&m, 10, 14, 4).unwrap();
        assert_eq!(grid.tiles.len(), 1);
        let plain = truncated_svd(&m, 4).unwrap().reconstruct();
        assert!(tiled_svd_reconstruct(&grid).max_abs_diff(&plain) <= 1e-12);
    }

    #[test]
    fn resnet_layer_accounting() {
        let m = random(64, 576, 2);
        let grid = tiled_svd_decompose(&m, 64, 64, 16).unwrap();
        assert_eq!(grid.tiles.len(), 9);
        assert_eq!(grid.param_count(), 18432);
        assert_eq!(grid.ratio(), 2.0);
        assert_eq!(grid.param_count_with_sigma(), 9 * 16 * 129);

        let grid = tiled_svd_decompose(&m, 8, 8, 1).unwrap();
        assert_eq!(grid.tiles.len(), 576);
        assert_eq!(grid.param_count(), 9216);
        assert_eq!(grid.ratio(), 4.0);
    }

    #[test]
    fn table_rank_selection() {
        let cases = [
            ((64, 64), 2.0, 16),
            ((64, 64), 4.0, 8),
            ((32, 32), 2.0, 8),
            ((32, 32), 4.0, 4),
            ((16, 16), 2.0, 4),
            ((16, 16), 4.0, 2),
            ((8, 8), 2.0, 2),
            ((8, 8), 4.0, 1),
        ];
        for ((th, tw), target, expected) in cases {
            let (r, achieved) = svd_rank_for_ratio(64, 576, th, tw, target).unwrap();
            assert_eq!(r, expected, "tile {th}x{tw} at {target}x");
            assert!(achieved >= target);
        }
    }

    #[test]
    fn infeasible_target() {
        let err = svd_rank_for_ratio(64, 576, 8, 8, 5.0).unwrap_err();
        assert_eq!(err, Error::Infeasible { target: 5.0, best: 4.0 });
        assert!(svd_rank_for_ratio(64, 576, 8, 8, 0.5).is_err());
    }

    #[test]
    fn remainder_tiles() {
        let m = random(10, 13, 3);
        let grid = tiled_svd_decompose(&m, 4, 5, 3).unwrap();
        assert_eq!(grid.tiles.len(), 3 * 3);
        let last = grid.tiles.last().unwrap();
        assert_eq!((last.height(), last.width()), (2, 3));
        assert_eq!(last.factors.rank(), 2);
        assert_eq!(grid.param_count(), tiled_param_count(10, 13, 4, 5, 3));
        // full per-tile rank reconstructs exactly
        let full = tiled_svd_decompose(&m, 4, 5, 5).unwrap();
        assert!(err_sq(&tiled_svd_reconstruct(&full), &m) / frobenius_sq(m.data()) <= 1e-18);
    }

    #[test]
    fn error_is_sum_of_tile_tails() {
        let m = random(12, 20, 4);
        let grid = tiled_svd_decompose(&m, 6, 8, 2).unwrap();
        let err = err_sq(&tiled_svd_reconstruct(&grid), &m);
        let mut tails = 0.0;
        for tile in &grid.tiles {
            let block = m.block(tile.row0, tile.col0, tile.height(), tile.width());
            let sv2 = oracle::singular_values_squared(&block);
            tails += sv2[tile.factors.rank()..].iter().sum::<f64>();
        }
        assert!((err - tails).abs() / tails <= 1e-8);
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(
            rows in 1usize..=16, cols in 1usize..=16, th in 1usize..=8, tw in 1usize..=8, r in 1usize..=4,
            seed in any::<u64>(),
        ) {
            let m = random(rows, cols, seed);
            let once = tiled_svd_reconstruct(&tiled_svd_decompose(&m, th, tw, r).unwrap());
            let twice = tiled_svd_reconstruct(&tiled_svd_decompose(&once, th, tw, r).unwrap());
            let scale = frobenius_sq(once.data()).max(1e-300);
            prop_assert!(libm::sqrt(err_sq(&once, &twice) / scale) <= 1e-8);
        }
    }
}
