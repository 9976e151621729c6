//! Slow reference implementations for test suites.
//!
//! Nothing here calls into the code paths it is used to check: contractions
//! are literal index sums, eigenvalues come from classical two-sided Jacobi
//! on a symmetric matrix, and convolution is the textbook nested loop.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::tensor::{DenseTensor, Kernel4};

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn symmetric_eigenvalues(a: &Matrix) -> Vec<f64> {
    let n = a.rows();
    assert_eq!(n, a.cols(), "eigen oracle needs a square matrix");
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a.row(i).to_vec()).collect();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        let diag: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q] == 0.0 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = libm::copysign(1.0, theta)
                    / (libm::fabs(theta) + libm::sqrt(theta * theta + 1.0));
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    eig
}

/// Singular values of `m` via eigenvalues of the smaller Gram matrix,
/// descending, clamped at zero.
pub fn singular_values_squared(m: &Matrix) -> Vec<f64> {
    let gram = if m.rows() >= m.cols() {
        gram_of(&m.transpose())
    } else {
        gram_of(m)
    };
    symmetric_eigenvalues(&gram)
        .into_iter()
        .map(|e| e.max(0.0))
        .collect()
}

/// `x x^T` computed by explicit loops.
fn gram_of(x: &Matrix) -> Matrix {
    let (r, c) = x.shape();
    Matrix::from_fn(r, r, |i, j| (0..c).map(|k| x[(i, k)] * x[(j, k)]).sum())
}

/// Mode product by an explicit index sum over all output entries.
pub fn mode_multiply_loops(x: &DenseTensor, m: &Matrix, mode: usize) -> DenseTensor {
    let mut out_shape = x.shape().to_vec();
    out_shape[mode] = m.rows();
    let out_len: usize = out_shape.iter().product();
    let mut data = vec![0.0; out_len];
    let mut idx = vec![0usize; out_shape.len()];
    for (lin, slot) in data.iter_mut().enumerate() {
        let mut rem = lin;
        for d in (0..out_shape.len()).rev() {
            idx[d] = rem % out_shape[d];
            rem /= out_shape[d];
        }
        let q = idx[mode];
        let mut src = idx.clone();
        let mut acc = 0.0;
        for k in 0..x.shape()[mode] {
            src[mode] = k;
            acc += m[(q, k)] * x.get(&src);
        }
        *slot = acc;
    }
    DenseTensor::new(out_shape, data).unwrap()
}

/// `K~[i][j][s][t] = sum_{a,b} core[i][j][a][b] * ps[s][a] * pt[t][b]`.
pub fn tucker_reconstruct_loops(core: &DenseTensor, ps: &Matrix, pt: &Matrix) -> Kernel4 {
    let sh = core.shape();
    let (d, rs, rt) = (sh[0], sh[2], sh[3]);
    Kernel4::from_fn(d, ps.rows(), pt.rows(), |i, j, s, t| {
        let mut acc = 0.0;
        for a in 0..rs {
            for b in 0..rt {
                acc += core.get(&[i, j, a, b]) * ps[(s, a)] * pt[(t, b)];
            }
        }
        acc
    })
    .unwrap()
}

/// Zero-padded strided convolution of a `(S, h, w)` input, returning
/// `(T, h_out, w_out)` row-major.
pub fn direct_conv(
    input: &[f64],
    h: usize,
    w: usize,
    kernel: &Kernel4,
    stride: usize,
    padding: usize,
) -> (Vec<f64>, usize, usize) {
    let (d, s_ch, t_ch) = (kernel.size(), kernel.in_channels(), kernel.out_channels());
    let h_out = (h + 2 * padding - d) / stride + 1;
    let w_out = (w + 2 * padding - d) / stride + 1;
    let mut out = vec![0.0; t_ch * h_out * w_out];
    for t in 0..t_ch {
        for y in 0..h_out {
            for x in 0..w_out {
                let mut acc = 0.0;
                for s in 0..s_ch {
                    for i in 0..d {
                        for j in 0..d {
                            let yy = (y * stride + i) as isize - padding as isize;
                            let xx = (x * stride + j) as isize - padding as isize;
                            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                                continue;
                            }
                            acc += kernel.get(i, j, s, t)
                                * input[(s * h + yy as usize) * w + xx as usize];
                        }
                    }
                }
                out[(t * h_out + y) * w_out + x] = acc;
            }
        }
    }
    (out, h_out, w_out)
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` at the listed
/// coordinates.
pub fn central_difference(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    coords: &[usize],
    h: f64,
) -> Vec<f64> {
    let mut x = point.to_vec();
    coords
        .iter()
        .map(|&i| {
            x[i] = point[i] + h;
            let plus = f(&x);
            x[i] = point[i] - h;
            let minus = f(&x);
            x[i] = point[i];
            (plus - minus) / (2.0 * h)
        })
        .collect()
}
