use crate::error::{arg_err, Result};

/// HOOI refinement rounds after the HOSVD initialization.
pub const DEFAULT_HOOI_ITERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CompressionMethod {
    /// Tucker-2 over the channel modes with `R_s = round(rc*S)`, `R_t = round(rc*T)`.
    Tucker { rc: f64, hooi_iters: usize },
    /// Truncated SVD of the whole lowered `T x (S*d*d)` matrix.
    SvdFull { rank: usize },
    /// Truncated SVD of each `tile_h x tile_w` block of the lowered matrix.
    SvdTiled {
        rank: usize,
        tile_h: usize,
        tile_w: usize,
    },
}

/// What to compress and how.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionSpec {
    pub method: CompressionMethod,
    /// Conv layers with fewer input channels than this are left alone.
    pub min_in_channels: usize,
}

impl CompressionSpec {
    pub fn new(method: CompressionMethod, min_in_channels: usize) -> Result<Self> {
        match method {
            CompressionMethod::Tucker { rc, .. } => {
                if !(rc > 0.0 && rc <= 1.0) {
                    return Err(arg_err!("R_c must lie in (0, 1], got {rc}"));
                }
            }
            CompressionMethod::SvdFull { rank } => {
                if rank == 0 {
                    return Err(arg_err!("SVD rank must be at least 1"));
                }
            }
            CompressionMethod::SvdTiled {
                rank,
                tile_h,
                tile_w,
            } => {
                if rank == 0 || tile_h == 0 || tile_w == 0 {
                    return Err(arg_err!(
                        "tiled SVD needs rank and tile dims >= 1, got r={rank} tile={tile_h}x{tile_w}"
                    ));
                }
            }
        }
        Ok(Self {
            method,
            min_in_channels,
        })
    }

    pub fn tucker(rc: f64, min_in_channels: usize) -> Result<Self> {
        Self::new(
            CompressionMethod::Tucker {
                rc,
                hooi_iters: DEFAULT_HOOI_ITERS,
            },
            min_in_channels,
        )
    }

    /// Whether a conv layer with `in_channels` inputs is targeted.
    pub fn targets(&self, in_channels: usize) -> bool {
        in_channels >= self.min_in_channels
    }

    pub fn method_name(&self) -> &'static str {
        match self.method {
            CompressionMethod::Tucker { .. } => "tucker",
            CompressionMethod::SvdFull { .. } => "svd_full",
            CompressionMethod::SvdTiled { .. } => "svd_tiled",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(CompressionSpec::tucker(0.0, 1).is_err());
        assert!(CompressionSpec::tucker(1.5, 1).is_err());
        assert!(CompressionSpec::tucker(1.0, 1).is_ok());
        assert!(CompressionSpec::new(CompressionMethod::SvdFull { rank: 0 }, 1).is_err());
        assert!(CompressionSpec::new(
            CompressionMethod::SvdTiled { rank: 1, tile_h: 0, tile_w: 4 },
            1
        )
        .is_err());
    }

    #[test]
    fn skip_predicate() {
        let spec = CompressionSpec::tucker(0.5, 128).unwrap();
        assert!(!spec.targets(64));
        assert!(spec.targets(128));
    }
}
