//! im2col lowering: convolution as a single matrix product.
//!
//! The kernel becomes a `T x (S*d*d)` matrix and the input a redundant
//! `(S*d*d) x (h_out*w_out)` Toeplitz-style matrix. Both sides pack the
//! reduction index as `c = s*d*d + i*d + j` (channel, then kernel row, then
//! kernel column). Padding is zero padding and
//! `h_out = (h + 2*padding - d) / stride + 1`.

use alloc::vec;

use crate::error::{arg_err, Result};
use crate::matrix::Matrix;
use crate::tensor::Kernel4;

/// A kernel reshaped to `T x (S*d*d)`, with the extents needed to undo it.
#[derive(Debug, Clone, PartialEq)]
pub struct LoweredKernel {
    pub matrix: Matrix,
    pub d: usize,
    pub s: usize,
    pub t: usize,
}

/// The lowered input feature map for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzInput {
    pub matrix: Matrix,
    pub h_out: usize,
    pub w_out: usize,
}

#[inline]
pub fn packed_column(d: usize, s: usize, i: usize, j: usize) -> usize {
    s * d * d + i * d + j
}

pub fn lower_kernel(k: &Kernel4) -> LoweredKernel {
    let (d, s_ch, t_ch) = (k.size(), k.in_channels(), k.out_channels());
    let cols = s_ch * d * d;
    let mut m = Matrix::zeros(t_ch, cols);
    for i in 0..d {
        for j in 0..d {
            for s in 0..s_ch {
                let c = packed_column(d, s, i, j);
                for t in 0..t_ch {
                    m[(t, c)] = k.get(i, j, s, t);
                }
            }
        }
    }
    LoweredKernel {
        matrix: m,
        d,
        s: s_ch,
        t: t_ch,
    }
}

pub fn raise_kernel(lowered: &LoweredKernel) -> Result<Kernel4> {
    let LoweredKernel { matrix, d, s, t } = lowered;
    let (d, s, t) = (*d, *s, *t);
    if d == 0 || s == 0 || t == 0 || matrix.rows() != t || matrix.cols() != s * d * d {
        return Err(arg_err!(
            "lowered matrix {}x{} does not match d={d}, S={s}, T={t}",
            matrix.rows(),
            matrix.cols()
        ));
    }
    Kernel4::from_fn(d, s, t, |i, j, si, ti| {
        matrix[(ti, packed_column(d, si, i, j))]
    })
}

pub fn output_extent(size: usize, d: usize, stride: usize, padding: usize) -> usize {
    (size + 2 * padding - d) / stride + 1
}

/// Lowers a `(channels, h, w)` activation map for a `d x d` kernel.
pub fn im2col(
    input: &[f64],
    channels: usize,
    h: usize,
    w: usize,
    d: usize,
    stride: usize,
    padding: usize,
) -> Result<ToeplitzInput> {
    if input.len() != channels * h * w {
        return Err(arg_err!(
            "input has {} values, expected {channels}x{h}x{w}",
            input.len()
        ));
    }
    if d == 0 || stride == 0 {
        return Err(arg_err!("kernel size and stride must be positive"));
    }
    if h + 2 * padding < d || w + 2 * padding < d {
        return Err(arg_err!(
            "kernel {d}x{d} larger than padded input {}x{}",
            h + 2 * padding,
            w + 2 * padding
        ));
    }
    let h_out = output_extent(h, d, stride, padding);
    let w_out = output_extent(w, d, stride, padding);
    let cols = h_out * w_out;
    let mut data = vec![0.0; channels * d * d * cols];
    for s in 0..channels {
        for i in 0..d {
            for j in 0..d {
                let row = packed_column(d, s, i, j);
                for y in 0..h_out {
                    let yy = y * stride + i;
                    if yy < padding || yy - padding >= h {
                        continue;
                    }
                    for x in 0..w_out {
                        let xx = x * stride + j;
                        if xx < padding || xx - padding >= w {
                            continue;
                        }
                        data[row * cols + y * w_out + x] =
                            input[(s * h + yy - padding) * w + xx - padding];
                    }
                }
            }
        }
    }
    Ok(ToeplitzInput {
        matrix: Matrix::new(channels * d * d, cols, data)?,
        h_out,
        w_out,
    })
}

/// Convolution computed as `lower_kernel(k) x im2col(x)`; `T x (h_out*w_out)`.
pub fn conv_by_lowering(
    kernel: &Kernel4,
    input: &[f64],
    h: usize,
    w: usize,
    stride: usize,
    padding: usize,
) -> Result<Matrix> {
    let cols = im2col(input, kernel.in_channels(), h, w, kernel.size(), stride, padding)?;
    lower_kernel(kernel).matrix.matmul(&cols.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use alloc::vec::Vec;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(d: usize, s: usize, t: usize, rng: &mut ChaCha8Rng) -> Kernel4 {
        Kernel4::from_fn(d, s, t, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    #[test]
    fn scalar_kernel() {
        let k = Kernel4::new(1, 1, 1, vec![2.5]).unwrap();
        let l = lower_kernel(&k);
        assert_eq!(l.matrix.data(), &[2.5]);
        assert_eq!(raise_kernel(&l).unwrap(), k);
    }

    #[test]
    fn packing_of_2x2_kernel() {
        // kernel [[a, b], [c, e]] with S = T = 1
        let k = Kernel4::new(2, 1, 1, vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(lower_kernel(&k).matrix.data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn lowering_round_trip_is_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_kernel(3, 4, 5, &mut rng);
        let l = lower_kernel(&k);
        assert_eq!(l.matrix.shape(), (5, 36));
        assert_eq!(raise_kernel(&l).unwrap(), k);
    }

    #[test]
    fn raise_rejects_bad_metadata() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut l = lower_kernel(&random_kernel(3, 2, 2, &mut rng));
        l.s = 3;
        assert!(raise_kernel(&l).is_err());
    }

    #[test]
    fn window_sums_3x3() {
        let input: Vec<f64> = (1..=9).map(|v| v as f64).collect();
        let cols = im2col(&input, 1, 3, 3, 2, 1, 0).unwrap();
        assert_eq!(cols.matrix.shape(), (4, 4));
        let ones = Kernel4::new(2, 1, 1, vec![1.0; 4]).unwrap();
        let out = lower_kernel(&ones).matrix.matmul(&cols.matrix).unwrap();
        assert_eq!(out.data(), &[12., 16., 24., 28.]);
    }

    #[test]
    fn pointwise_identity_kernel() {
        let input: Vec<f64> = (0..12).map(|v| v as f64 * 0.5).collect();
        let k = Kernel4::new(1, 1, 1, vec![1.0]).unwrap();
        let out = conv_by_lowering(&k, &input, 3, 4, 1, 0).unwrap();
        assert_eq!(out.data(), &input[..]);
    }

    #[test]
    fn random_case_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = random_kernel(3, 3, 2, &mut rng);
        let input: Vec<f64> = (0..75).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = conv_by_lowering(&k, &input, 5, 5, 1, 1).unwrap();
        let (slow, ho, wo) = oracle::direct_conv(&input, 5, 5, &k, 1, 1);
        assert_eq!((ho, wo), (5, 5));
        for (a, b) in fast.data().iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn kernel_larger_than_input() {
        assert!(im2col(&[0.0; 4], 1, 2, 2, 3, 1, 0).is_err());
        assert!(im2col(&[0.0; 4], 1, 2, 2, 3, 1, 1).is_ok());
    }

    proptest! {
        #[test]
        fn gemm_equals_direct(
            s in 1usize..=4, t in 1usize..=4, d in 1usize..=3,
            h in 1usize..=8, w in 1usize..=8, stride in 1usize..=2, padding in 0usize..=1,
            seed in any::<u64>(),
        ) {
            prop_assume!(h + 2 * padding >= d && w + 2 * padding >= d);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = random_kernel(d, s, t, &mut rng);
            let input: Vec<f64> = (0..s * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = conv_by_lowering(&k, &input, h, w, stride, padding).unwrap();
            let (slow, _, _) = oracle::direct_conv(&input, h, w, &k, stride, padding);
            for (a, b) in fast.data().iter().zip(&slow) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }

        #[test]
        fn toeplitz_holds_only_inputs_and_zeros(
            s in 1usize..=3, d in 1usize..=3, h in 3usize..=6, stride in 1usize..=2, padding in 0usize..=1,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let input: Vec<f64> = (0..s * h * h).map(|_| rng.random_range(0.5..1.0)).collect();
            let cols = im2col(&input, s, h, h, d, stride, padding).unwrap();
            for &v in cols.matrix.data() {
                prop_assert!(v == 0.0 || input.contains(&v));
            }
        }
    }
}
