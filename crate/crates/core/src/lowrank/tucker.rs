//! Tucker-2 decomposition of a `d x d x S x T` kernel over its channel modes:
//!
//! `K~[i][j][s][t] = sum_{a < R_s} sum_{b < R_t} C[i][j][a][b] * P_S[s][a] * P_T[t][b]`
//!
//! Factors are initialized by HOSVD (leading left singular vectors of the
//! mode-S and mode-T unfoldings) and refined by higher-order orthogonal
//! iteration, which never increases the Frobenius reconstruction error.

use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::linalg::{frobenius_sq, svd};
use crate::matrix::Matrix;
use crate::tensor::{mode_multiply, unfold, DenseTensor, Kernel4};

const MODE_S: usize = 2;
const MODE_T: usize = 3;

/// HOOI stops early once the relative error improves by less than this.
pub const HOOI_REL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    /// Reduced kernel, shape `[d, d, R_s, R_t]`.
    pub core: DenseTensor,
    /// `S x R_s`, orthonormal columns.
    pub ps: Matrix,
    /// `T x R_t`, orthonormal columns.
    pub pt: Matrix,
}

impl TuckerFactors {
    pub fn ranks(&self) -> (usize, usize) {
        (self.ps.cols(), self.pt.cols())
    }

    pub fn kernel_size(&self) -> usize {
        self.core.shape()[0]
    }

    /// `S*R_s + d^2*R_s*R_t + T*R_t`.
    pub fn param_count(&self) -> usize {
        let (rs, rt) = self.ranks();
        let d = self.kernel_size();
        self.ps.rows() * rs + d * d * rs * rt + self.pt.rows() * rt
    }
}

/// `R = clamp(round_half_up(rc * dim), 1, dim)` for both channel modes.
pub fn tucker_ranks(s: usize, t: usize, rc: f64) -> (usize, usize) {
    let pick = |dim: usize| {
        let r = libm::floor(rc * dim as f64 + 0.5) as usize;
        r.clamp(1, dim)
    };
    (pick(s), pick(t))
}

/// `d^2 S T / (S R_s + d^2 R_s R_t + T R_t)`.
pub fn tucker_ratio(d: usize, s: usize, t: usize, rs: usize, rt: usize) -> f64 {
    let original = (d * d * s * t) as f64;
    let compressed = (s * rs + d * d * rs * rt + t * rt) as f64;
    original / compressed
}

pub fn tucker_decompose(
    kernel: &Kernel4,
    rs: usize,
    rt: usize,
    hooi_iters: usize,
) -> Result<TuckerFactors> {
    decompose(kernel, rs, rt, hooi_iters, Some(HOOI_REL_TOL)).map(|(f, _)| f)
}

/// Runs exactly `hooi_iters` refinement rounds (no early stop) and returns
/// the squared reconstruction error after HOSVD and after every round.
pub fn tucker_decompose_traced(
    kernel: &Kernel4,
    rs: usize,
    rt: usize,
    hooi_iters: usize,
) -> Result<(TuckerFactors, Vec<f64>)> {
    decompose(kernel, rs, rt, hooi_iters, None)
}

pub fn tucker_reconstruct(f: &TuckerFactors) -> Kernel4 {
    let partial = mode_multiply(&f.core, &f.ps, MODE_S).expect("factor shapes checked at construction");
    let full = mode_multiply(&partial, &f.pt, MODE_T).expect("factor shapes checked at construction");
    Kernel4::from_tensor(full).expect("reconstruction keeps the kernel layout")
}

fn decompose(
    kernel: &Kernel4,
    rs: usize,
    rt: usize,
    hooi_iters: usize,
    early_stop: Option<f64>,
) -> Result<(TuckerFactors, Vec<f64>)> {
    let (s, t) = (kernel.in_channels(), kernel.out_channels());
    if rs == 0 || rs > s || rt == 0 || rt > t {
        return Err(arg_err!(
            "Tucker ranks ({rs}, {rt}) out of bounds for S={s}, T={t}"
        ));
    }
    let x = kernel.tensor();
    let norm = frobenius_sq(x.data());

    let mut ps = leading_left_vectors(&unfold(x, MODE_S)?, rs)?;
    let mut pt = leading_left_vectors(&unfold(x, MODE_T)?, rt)?;
    let mut factors = project(x, ps.clone(), pt.clone())?;
    let mut history = Vec::with_capacity(hooi_iters + 1);
    history.push(error_sq(kernel, &factors));

    for _ in 0..hooi_iters {
        let y = mode_multiply(x, &pt.transpose(), MODE_T)?;
        ps = leading_left_vectors(&unfold(&y, MODE_S)?, rs)?;
        let z = mode_multiply(x, &ps.transpose(), MODE_S)?;
        pt = leading_left_vectors(&unfold(&z, MODE_T)?, rt)?;
        let next = project(x, ps.clone(), pt.clone())?;
        let err = error_sq(kernel, &next);
        let prev = *history.last().unwrap();
        factors = next;
        history.push(err);
        if let Some(tol) = early_stop {
            if norm == 0.0 || (prev - err) / norm < tol {
                break;
            }
        }
    }
    Ok((factors, history))
}

fn project(x: &DenseTensor, ps: Matrix, pt: Matrix) -> Result<TuckerFactors> {
    let core = mode_multiply(&mode_multiply(x, &ps.transpose(), MODE_S)?, &pt.transpose(), MODE_T)?;
    Ok(TuckerFactors { core, ps, pt })
}

fn error_sq(kernel: &Kernel4, f: &TuckerFactors) -> f64 {
    let rec = tucker_reconstruct(f);
    kernel
        .data()
        .iter()
        .zip(rec.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `r` leading left singular vectors, completing the basis when the
/// unfolding has fewer columns than `r`.
fn leading_left_vectors(m: &Matrix, r: usize) -> Result<Matrix> {
    let padded;
    let m = if m.cols() < r {
        padded = Matrix::from_fn(m.rows(), r, |i, j| if j < m.cols() { m[(i, j)] } else { 0.0 });
        &padded
    } else {
        m
    };
    Ok(svd(m)?.u.leading_columns(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kernel(d: usize, s: usize, t: usize, seed: u64) -> Kernel4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Kernel4::from_fn(d, s, t, |_, _, _, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    fn orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let m = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
        svd(&m).unwrap().u
    }

    pub(crate) fn planted(d: usize, s: usize, t: usize, rs: usize, rt: usize, seed: u64) -> Kernel4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let core_data = (0..d * d * rs * rt).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = TuckerFactors {
            core: DenseTensor::new(alloc::vec![d, d, rs, rt], core_data).unwrap(),
            ps: orthonormal(s, rs, &mut rng),
            pt: orthonormal(t, rt, &mut rng),
        };
        tucker_reconstruct(&f)
    }

    fn rel_err(a: &Kernel4, b: &Kernel4) -> f64 {
        let diff: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        libm::sqrt(frobenius_sq(&diff) / frobenius_sq(a.data()))
    }

    #[test]
    fn rank_selection() {
        assert_eq!(tucker_ranks(64, 64, 0.5), (32, 32));
        assert_eq!(tucker_ranks(48, 20, 1.0), (48, 20));
        assert_eq!(tucker_ranks(16, 16, 0.3), (5, 5));
        assert_eq!(tucker_ranks(3, 3, 0.01), (1, 1));
    }

    #[test]
    fn ratio_formula() {
        let r = tucker_ratio(3, 64, 64, 32, 32);
        assert_eq!(r, 36864.0 / 13312.0);
        assert!((r - 2.769).abs() < 1e-3);
        assert!(tucker_ratio(3, 16, 16, 16, 16) < 1.0);
    }

    #[test]
    fn full_rank_is_exact() {
        let k = random_kernel(3, 5, 4, 1);
        let f = tucker_decompose(&k, 5, 4, DEFAULT_ITERS).unwrap();
        assert!(rel_err(&k, &tucker_reconstruct(&f)) <= 1e-9);
    }

    const DEFAULT_ITERS: usize = crate::lowrank::DEFAULT_HOOI_ITERS;

    #[test]
    fn planted_rank_is_recovered() {
        let k = planted(3, 6, 7, 2, 2, 4);
        let f = tucker_decompose(&k, 2, 2, DEFAULT_ITERS).unwrap();
        assert!(rel_err(&k, &tucker_reconstruct(&f)) <= 1e-8);
        // idempotence on an already-low-rank kernel
        let again = tucker_reconstruct(&tucker_decompose(&tucker_reconstruct(&f), 2, 2, DEFAULT_ITERS).unwrap());
        assert!(rel_err(&tucker_reconstruct(&f), &again) <= 1e-8);
    }

    #[test]
    fn hooi_is_monotone() {
        let k = random_kernel(3, 8, 8, 9);
        let (_, hist) = tucker_decompose_traced(&k, 4, 4, 5).unwrap();
        assert_eq!(hist.len(), 6);
        for w in hist.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{hist:?}");
        }
    }

    #[test]
    fn reconstruct_matches_index_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (d, s, t, rs, rt) = (2, 5, 4, 3, 2);
        let core = DenseTensor::new(
            alloc::vec![d, d, rs, rt],
            (0..d * d * rs * rt).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let ps = Matrix::from_fn(s, rs, |_, _| rng.random_range(-1.0..1.0));
        let pt = Matrix::from_fn(t, rt, |_, _| rng.random_range(-1.0..1.0));
        let fast = tucker_reconstruct(&TuckerFactors { core: core.clone(), ps: ps.clone(), pt: pt.clone() });
        let slow = oracle::tucker_reconstruct_loops(&core, &ps, &pt);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn identity_factors_return_core() {
        let core = random_kernel(3, 4, 5, 2).into_tensor();
        let f = TuckerFactors { core: core.clone(), ps: Matrix::identity(4), pt: Matrix::identity(5) };
        assert_eq!(tucker_reconstruct(&f).tensor(), &core);
    }

    #[test]
    fn factors_are_orthonormal() {
        let k = random_kernel(3, 8, 6, 5);
        let (rs, rt) = tucker_ranks(8, 6, 0.5);
        let f = tucker_decompose(&k, rs, rt, DEFAULT_ITERS).unwrap();
        for p in [&f.ps, &f.pt] {
            let g = p.transpose().matmul(p).unwrap();
            assert!(g.max_abs_diff(&Matrix::identity(p.cols())) <= 1e-10);
        }
        assert_eq!(f.param_count(), 8 * 4 + 9 * 4 * 3 + 6 * 3);
    }

    #[test]
    fn rank_exceeding_unfolding_width() {
        // d=1, T=2: the mode-S unfolding is only 2 columns wide
        let k = random_kernel(1, 6, 2, 3);
        let f = tucker_decompose(&k, 4, 2, DEFAULT_ITERS).unwrap();
        assert_eq!(f.ps.shape(), (6, 4));
        assert!(rel_err(&k, &tucker_reconstruct(&f)) <= 1e-9);
    }

    #[test]
    fn ranks_out_of_bounds() {
        let k = random_kernel(3, 4, 4, 1);
        assert!(tucker_decompose(&k, 5, 2, 1).is_err());
        assert!(tucker_decompose(&k, 0, 2, 1).is_err());
    }
}
