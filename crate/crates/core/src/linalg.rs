//! Dense SVD by one-sided (Hestenes) Jacobi rotations, plus Frobenius norms.
//!
//! Output is deterministic: a fixed cyclic pivot order, no randomization,
//! singular values sorted descending with ties kept in column order, and each
//! left singular vector signed so its largest-magnitude entry is positive.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Error, Result};
use crate::matrix::Matrix;

/// Rotations stop once every normalized column inner product is below this.
pub const JACOBI_TOL: f64 = 1e-12;
/// Sweep cap; hitting it is reported as a numerical error.
pub const MAX_SWEEPS: usize = 60;

/// Thin SVD `M = U diag(sigma) V^T` with `r` retained triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    /// `n x r`, orthonormal columns.
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// `m x r`, orthonormal columns.
    pub v: Matrix,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// Leading `r` triplets.
    pub fn truncate(&self, r: usize) -> SvdFactors {
        let r = r.min(self.rank());
        SvdFactors {
            u: self.u.leading_columns(r),
            sigma: self.sigma[..r].to_vec(),
            v: self.v.leading_columns(r),
        }
    }

    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let (n, m) = (self.u.rows(), self.v.rows());
        let mut out = Matrix::zeros(n, m);
        for k in 0..self.rank() {
            let s = self.sigma[k];
            if s == 0.0 {
                continue;
            }
            for i in 0..n {
                let a = self.u[(i, k)] * s;
                if a == 0.0 {
                    continue;
                }
                let row = &mut out.data_mut()[i * m..(i + 1) * m];
                for (j, o) in row.iter_mut().enumerate() {
                    *o += a * self.v[(j, k)];
                }
            }
        }
        out
    }

    /// `U diag(sigma)`, the left factor once the singular values are folded in.
    pub fn scaled_u(&self) -> Matrix {
        Matrix::from_fn(self.u.rows(), self.rank(), |i, k| {
            self.u[(i, k)] * self.sigma[k]
        })
    }
}

/// Sum of squares of all entries.
pub fn frobenius_sq(values: &[f64]) -> f64 {
    values.iter().map(|x| x * x).sum()
}

/// Full thin SVD with `r = min(n, m)`.
pub fn svd(m: &Matrix) -> Result<SvdFactors> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(arg_err!("svd of an empty {rows}x{cols} matrix"));
    }
    if m.data().iter().any(|x| !x.is_finite()) {
        return Err(arg_err!("svd input contains non-finite entries"));
    }
    let mut f = if rows >= cols {
        jacobi_tall(m)?
    } else {
        let t = jacobi_tall(&m.transpose())?;
        SvdFactors {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        }
    };
    normalize_signs(&mut f);
    Ok(f)
}

/// Leading `r` singular triplets, `1 <= r <= min(n, m)`.
pub fn truncated_svd(m: &Matrix, r: usize) -> Result<SvdFactors> {
    let max = m.rows().min(m.cols());
    if r == 0 || r > max {
        return Err(arg_err!("rank {r} outside 1..={max}"));
    }
    Ok(svd(m)?.truncate(r))
}

/// One-sided Jacobi on a matrix with `rows >= cols`.
fn jacobi_tall(m: &Matrix) -> Result<SvdFactors> {
    let (n, k) = m.shape();
    // column-major working copies so every inner loop is contiguous
    let mut a: Vec<Vec<f64>> = (0..k).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; k];
            e[j] = 1.0;
            e
        })
        .collect();

    let total = frobenius_sq(m.data());
    // columns below this energy are numerically zero
    let negligible = total * f64::EPSILON * f64::EPSILON * 1e-2;

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut norms: Vec<f64> = a.iter().map(|c| dot(c, c)).collect();
        let mut worst: f64 = 0.0;
        for p in 0..k {
            for q in p + 1..k {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = dot(&a[p], &a[q]);
                let off = libm::fabs(gamma) / libm::sqrt(alpha * beta);
                if off > worst {
                    worst = off;
                }
                if off < JACOBI_TOL {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
                norms[p] = alpha - t * gamma;
                norms[q] = beta + t * gamma;
            }
        }
        if worst < JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "one-sided Jacobi did not converge within {MAX_SWEEPS} sweeps"
        )));
    }

    let sigma_raw: Vec<f64> = a.iter().map(|c| libm::sqrt(dot(c, c))).collect();
    let mut order: Vec<usize> = (0..k).collect();
    // stable: equal values keep Jacobi column order
    order.sort_by(|&x, &y| sigma_raw[y].total_cmp(&sigma_raw[x]));

    let mut u = Matrix::zeros(n, k);
    let mut vm = Matrix::zeros(k, k);
    let mut sigma = Vec::with_capacity(k);
    let mut missing = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = sigma_raw[src];
        if s * s <= negligible || s == 0.0 {
            sigma.push(0.0);
            missing.push(dst);
        } else {
            sigma.push(s);
            for i in 0..n {
                u[(i, dst)] = a[src][i] / s;
            }
        }
        for i in 0..k {
            vm[(i, dst)] = v[src][i];
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(SvdFactors { u, sigma, v: vm })
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    for (x, y) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the listed (zero) columns of `u` with unit vectors orthogonal to
/// every other column, by Gram-Schmidt over the standard basis.
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let n = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|c| !missing.contains(c)).collect();
    let mut candidate = 0;
    for &col in missing {
        loop {
            assert!(candidate < n, "cannot complete an orthonormal basis");
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of classical Gram-Schmidt
            for _ in 0..2 {
                for &f in &filled {
                    let proj: f64 = (0..n).map(|i| e[i] * u[(i, f)]).sum();
                    for (i, ei) in e.iter_mut().enumerate() {
                        *ei -= proj * u[(i, f)];
                    }
                }
            }
            let norm = libm::sqrt(dot(&e, &e));
            if norm > 0.5 {
                for (i, ei) in e.iter().enumerate() {
                    u[(i, col)] = ei / norm;
                }
                filled.push(col);
                break;
            }
        }
    }
}

fn normalize_signs(f: &mut SvdFactors) {
    for k in 0..f.rank() {
        let mut best = 0.0;
        let mut sign = 1.0;
        for i in 0..f.u.rows() {
            let x = f.u[(i, k)];
            if libm::fabs(x) > best {
                best = libm::fabs(x);
                sign = if x < 0.0 { -1.0 } else { 1.0 };
            }
        }
        if sign < 0.0 {
            for i in 0..f.u.rows() {
                f.u[(i, k)] = -f.u[(i, k)];
            }
            for i in 0..f.v.rows() {
                f.v[(i, k)] = -f.v[(i, k)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn assert_orthonormal(m: &Matrix) {
        let g = m.transpose().matmul(m).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(m.cols())) <= 1e-10);
    }

    fn rel_recon_err(m: &Matrix, f: &SvdFactors) -> f64 {
        let r = f.reconstruct();
        let diff: Vec<f64> = r.data().iter().zip(m.data()).map(|(a, b)| a - b).collect();
        libm::sqrt(frobenius_sq(&diff)) / libm::sqrt(frobenius_sq(m.data())).max(1.0)
    }

    #[test]
    fn diagonal_singular_values() {
        let m = Matrix::from_diag(2, 2, &[3.0, 1.0]);
        let f = svd(&m).unwrap();
        assert!((f.sigma[0] - 3.0).abs() < 1e-14);
        assert!((f.sigma[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_one_all_ones() {
        let m = Matrix::new(2, 2, alloc::vec![1.0; 4]).unwrap();
        let f = svd(&m).unwrap();
        assert!((f.sigma[0] - 2.0).abs() < 1e-14);
        assert!(f.sigma[1].abs() < 1e-14);
        assert_orthonormal(&f.u);
        assert_orthonormal(&f.v);
        assert!(rel_recon_err(&m, &f) < 1e-14);
    }

    #[test]
    fn squared_singular_values_match_eigen_oracle() {
        let m = random(8, 5, 3);
        let f = svd(&m).unwrap();
        let gram = m.transpose().matmul(&m).unwrap();
        let eig = oracle::symmetric_eigenvalues(&gram);
        for (s, e) in f.sigma.iter().zip(&eig) {
            assert!((s * s - e).abs() / e.abs().max(1e-300) <= 1e-8, "{s} vs {e}");
        }
    }

    #[test]
    fn truncated_diagonal() {
        let m = Matrix::from_diag(2, 2, &[3.0, 1.0]);
        let r = truncated_svd(&m, 1).unwrap().reconstruct();
        assert!(r.max_abs_diff(&Matrix::from_diag(2, 2, &[3.0, 0.0])) < 1e-14);
    }

    #[test]
    fn truncated_tail_sum_12x20() {
        let m = random(12, 20, 5);
        let f = truncated_svd(&m, 3).unwrap();
        let r = f.reconstruct();
        let diff: Vec<f64> = r.data().iter().zip(m.data()).map(|(a, b)| a - b).collect();
        let err2 = frobenius_sq(&diff);
        let eig = oracle::symmetric_eigenvalues(&m.matmul(&m.transpose()).unwrap());
        let tail: f64 = eig[3..].iter().sum();
        assert!((err2 - tail).abs() / tail <= 1e-8);
    }

    #[test]
    fn truncated_rank_bounds() {
        let m = random(3, 4, 1);
        assert!(truncated_svd(&m, 0).is_err());
        assert!(truncated_svd(&m, 4).is_err());
        let full = truncated_svd(&m, 3).unwrap();
        assert!(rel_recon_err(&m, &full) <= 1e-9);
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = random(3, 3, 1);
        m[(1, 1)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_matrix_still_orthonormal() {
        let m = Matrix::zeros(4, 3);
        let f = svd(&m).unwrap();
        assert!(f.sigma.iter().all(|&s| s == 0.0));
        assert_orthonormal(&f.u);
        assert_orthonormal(&f.v);
    }

    #[test]
    fn sign_convention() {
        let f = svd(&random(6, 4, 9)).unwrap();
        for k in 0..f.rank() {
            let col = f.u.column(k);
            let big = col.iter().cloned().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn frobenius_basics() {
        assert_eq!(frobenius_sq(&[0.0; 5]), 0.0);
        assert_eq!(frobenius_sq(&[1.0; 4]), 4.0);
    }

    proptest! {
        #[test]
        fn factors_are_valid(rows in 1usize..=12, cols in 1usize..=12, seed in any::<u64>()) {
            let m = random(rows, cols, seed);
            let f = svd(&m).unwrap();
            prop_assert!(rel_recon_err(&m, &f) <= 1e-9);
            prop_assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
            prop_assert!(f.sigma.iter().all(|&s| s >= 0.0));
            assert_orthonormal(&f.u);
            assert_orthonormal(&f.v);
            // bitwise determinism
            prop_assert_eq!(svd(&m).unwrap(), f);
        }

        #[test]
        fn eckart_young_error_non_increasing(rows in 1usize..=10, cols in 1usize..=10, seed in any::<u64>()) {
            let m = random(rows, cols, seed);
            let f = svd(&m).unwrap();
            let mut last = f64::INFINITY;
            for r in 1..=f.rank() {
                let rec = f.truncate(r).reconstruct();
                let diff: Vec<f64> = rec.data().iter().zip(m.data()).map(|(a, b)| a - b).collect();
                let e = frobenius_sq(&diff);
                prop_assert!(e <= last + 1e-12);
                last = e;
            }
        }

        #[test]
        fn rank_deficient_reconstructs(rows in 2usize..=10, cols in 2usize..=10, seed in any::<u64>()) {
            // rank-1 outer product, singular values tie at zero
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = Matrix::from_fn(rows, cols, |i, j| x[i] * y[j]);
            let f = svd(&m).unwrap();
            prop_assert!(rel_recon_err(&m, &f) <= 1e-9);
            assert_orthonormal(&f.u);
            assert_orthonormal(&f.v);
        }
    }
}
