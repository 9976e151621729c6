//! Low-rank approximation of convolution kernels and the compression-ratio
//! bookkeeping around it.

mod spec;
mod study;
mod tiled;
mod tucker;

pub use spec::{CompressionMethod, CompressionSpec, DEFAULT_HOOI_ITERS};
pub use study::{positive_histogram, sample_variance, tiling_variance_study, Histogram, TilingStudyEntry, HISTOGRAM_BINS};
pub use tiled::{
    svd_rank_for_ratio, tiled_param_count, tiled_svd_decompose, tiled_svd_reconstruct, TileGridSvd, TileSvd,
};
pub use tucker::{
    tucker_decompose, tucker_decompose_traced, tucker_ranks, tucker_ratio, tucker_reconstruct, TuckerFactors,
    HOOI_REL_TOL,
};
