//! Dense row-major tensors, mode unfolding and mode products.
//!
//! `unfold(x, m)` places mode `m` on the rows. Columns enumerate the remaining
//! modes in ascending mode order, row-major (the last remaining index moves
//! fastest). `fold` is its exact inverse.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{arg_err, Result};
use crate::matrix::Matrix;

/// Multi-dimensional array of `f64`, last index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(arg_err!("tensor extents must be positive, got {shape:?}"));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(arg_err!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| {
            assert!(i < n, "index {i} out of bounds for extent {n}");
            acc * n + i
        })
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    /// Splits the shape around `mode` into (outer, extent, inner) products.
    fn split(shape: &[usize], mode: usize) -> (usize, usize, usize) {
        let outer = shape[..mode].iter().product();
        let inner = shape[mode + 1..].iter().product();
        (outer, shape[mode], inner)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.rank() {
            return Err(arg_err!("mode {mode} out of range for rank {}", self.rank()));
        }
        Ok(())
    }
}

/// Mode-`mode` matricization: a `shape[mode] x (product of the rest)` matrix.
pub fn unfold(tensor: &DenseTensor, mode: usize) -> Result<Matrix> {
    tensor.check_mode(mode)?;
    let (outer, n, inner) = DenseTensor::split(&tensor.shape, mode);
    let cols = outer * inner;
    let mut out = vec![0.0; n * cols];
    for o in 0..outer {
        for k in 0..n {
            let src = &tensor.data[(o * n + k) * inner..(o * n + k + 1) * inner];
            let dst = &mut out[k * cols + o * inner..k * cols + (o + 1) * inner];
            dst.copy_from_slice(src);
        }
    }
    Matrix::new(n, cols, out)
}

/// Inverse of [`unfold`] for the same `mode` and `shape`.
pub fn fold(matrix: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    if mode >= shape.len() {
        return Err(arg_err!("mode {mode} out of range for shape {shape:?}"));
    }
    if shape.contains(&0) {
        return Err(arg_err!("tensor extents must be positive, got {shape:?}"));
    }
    let (outer, n, inner) = DenseTensor::split(shape, mode);
    if matrix.rows() != n || matrix.cols() != outer * inner {
        return Err(arg_err!(
            "a {}x{} matrix cannot fold into {shape:?} along mode {mode}",
            matrix.rows(),
            matrix.cols()
        ));
    }
    let cols = outer * inner;
    let src = matrix.data();
    let mut data = vec![0.0; n * cols];
    for o in 0..outer {
        for k in 0..n {
            data[(o * n + k) * inner..(o * n + k + 1) * inner]
                .copy_from_slice(&src[k * cols + o * inner..k * cols + (o + 1) * inner]);
        }
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// Mode-`mode` product `X x_mode M`: contracts `M`'s columns against mode
/// `mode` of the tensor, so that extent becomes `M.rows()`.
pub fn mode_multiply(tensor: &DenseTensor, matrix: &Matrix, mode: usize) -> Result<DenseTensor> {
    tensor.check_mode(mode)?;
    let (outer, n, inner) = DenseTensor::split(&tensor.shape, mode);
    if matrix.cols() != n {
        return Err(arg_err!(
            "matrix has {} columns but mode {mode} has extent {n}",
            matrix.cols()
        ));
    }
    let p = matrix.rows();
    let mut data = vec![0.0; outer * p * inner];
    for o in 0..outer {
        for q in 0..p {
            let dst = &mut data[(o * p + q) * inner..(o * p + q + 1) * inner];
            for k in 0..n {
                let a = matrix[(q, k)];
                let src = &tensor.data[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
    }
    let mut shape = tensor.shape.clone();
    shape[mode] = p;
    DenseTensor::new(shape, data)
}

/// Convolution kernel with logical index order `(i, j, s, t)`: spatial
/// row, spatial column, input channel, output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel4 {
    d: usize,
    s: usize,
    t: usize,
    tensor: DenseTensor,
}

impl Kernel4 {
    pub fn new(d: usize, s: usize, t: usize, data: Vec<f64>) -> Result<Self> {
        let tensor = DenseTensor::new(vec![d, d, s, t], data)?;
        Ok(Self { d, s, t, tensor })
    }

    pub fn zeros(d: usize, s: usize, t: usize) -> Result<Self> {
        Self::new(d, s, t, vec![0.0; d * d * s * t])
    }

    pub fn from_fn(
        d: usize,
        s: usize,
        t: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(d * d * s * t);
        for i in 0..d {
            for j in 0..d {
                for si in 0..s {
                    for ti in 0..t {
                        data.push(f(i, j, si, ti));
                    }
                }
            }
        }
        Self::new(d, s, t, data)
    }

    pub fn from_tensor(tensor: DenseTensor) -> Result<Self> {
        match *tensor.shape() {
            [d, d2, s, t] if d == d2 => Ok(Self { d, s, t, tensor }),
            _ => Err(arg_err!(
                "kernel tensor must have shape [d, d, S, T], got {:?}",
                tensor.shape()
            )),
        }
    }

    /// Spatial size `d`.
    pub fn size(&self) -> usize {
        self.d
    }

    /// Input channels `S`.
    pub fn in_channels(&self) -> usize {
        self.s
    }

    /// Output channels `T`.
    pub fn out_channels(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn index_of(&self, i: usize, j: usize, s: usize, t: usize) -> usize {
        ((i * self.d + j) * self.s + s) * self.t + t
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, s: usize, t: usize) -> f64 {
        self.tensor.data[self.index_of(i, j, s, t)]
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn data(&self) -> &[f64] {
        self.tensor.data()
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        DenseTensor::new(shape.to_vec(), data).unwrap()
    }

    #[test]
    fn unfold_matrix_mode0_is_identity_map() {
        let eye = DenseTensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap();
        let m = unfold(&eye, 0).unwrap();
        assert_eq!(m, Matrix::identity(2));
    }

    #[test]
    fn unfold_matrix_mode1_is_transpose() {
        let x = DenseTensor::new(vec![2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let m = unfold(&x, 1).unwrap();
        let direct = Matrix::new(2, 3, x.data().to_vec()).unwrap().transpose();
        assert_eq!(m, direct);
    }

    #[test]
    fn unfold_column_order_matches_convention() {
        // shape [2,3,4], mode 1: column index = i0 * 4 + i2
        let x = random_tensor(&[2, 3, 4], 11);
        let m = unfold(&x, 1).unwrap();
        for i0 in 0..2 {
            for i1 in 0..3 {
                for i2 in 0..4 {
                    assert_eq!(m[(i1, i0 * 4 + i2)], x.get(&[i0, i1, i2]));
                }
            }
        }
    }

    #[test]
    fn fold_round_trip_345() {
        let x = random_tensor(&[3, 4, 5], 7);
        let back = fold(&unfold(&x, 1).unwrap(), 1, &[3, 4, 5]).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn fold_row_vector() {
        let m = Matrix::new(1, 4, vec![1., 2., 3., 4.]).unwrap();
        let t = fold(&m, 0, &[1, 4]).unwrap();
        assert_eq!(t.data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn fold_rejects_mismatch() {
        let m = Matrix::zeros(2, 5);
        assert!(fold(&m, 0, &[2, 3]).is_err());
        assert!(fold(&m, 2, &[2, 5]).is_err());
    }

    #[test]
    fn unfold_rejects_bad_mode() {
        let x = random_tensor(&[2, 2], 1);
        assert!(matches!(unfold(&x, 2), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn mode_multiply_all_ones() {
        let x = DenseTensor::new(vec![2, 2, 2], vec![1.0; 8]).unwrap();
        let v = Matrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let y = mode_multiply(&x, &v, 2).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert!(y.data().iter().all(|&e| e == 2.0));
    }

    #[test]
    fn mode_multiply_dimension_mismatch() {
        let x = random_tensor(&[2, 3], 1);
        assert!(mode_multiply(&x, &Matrix::zeros(2, 2), 1).is_err());
    }

    #[test]
    fn kernel_index_order() {
        let k = Kernel4::from_fn(2, 3, 4, |i, j, s, t| (i * 1000 + j * 100 + s * 10 + t) as f64)
            .unwrap();
        assert_eq!(k.get(1, 0, 2, 3), 1023.0);
        assert_eq!(k.tensor().get(&[1, 0, 2, 3]), 1023.0);
        assert!(Kernel4::from_tensor(DenseTensor::zeros(vec![2, 3, 1, 1]).unwrap()).is_err());
    }

    fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(1usize..=6, 1..=4)
    }

    proptest! {
        #[test]
        fn fold_inverts_unfold(shape in shape_strategy(), seed in any::<u64>(), mode_pick in 0usize..4) {
            let x = random_tensor(&shape, seed);
            let mode = mode_pick % shape.len();
            let back = fold(&unfold(&x, mode).unwrap(), mode, &shape).unwrap();
            prop_assert_eq!(back, x);
        }

        #[test]
        fn identity_mode_product_is_noop(shape in shape_strategy(), seed in any::<u64>(), mode_pick in 0usize..4) {
            let x = random_tensor(&shape, seed);
            let mode = mode_pick % shape.len();
            let y = mode_multiply(&x, &Matrix::identity(shape[mode]), mode).unwrap();
            for (a, b) in x.data().iter().zip(y.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn mode_product_matches_loop_oracle(shape in shape_strategy(), seed in any::<u64>(), mode_pick in 0usize..4, rows in 1usize..=6) {
            let x = random_tensor(&shape, seed);
            let mode = mode_pick % shape.len();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let m = Matrix::from_fn(rows, shape[mode], |_, _| rng.random_range(-1.0..1.0));
            let fast = mode_multiply(&x, &m, mode).unwrap();
            let slow = oracle::mode_multiply_loops(&x, &m, mode);
            prop_assert_eq!(fast.shape(), slow.shape());
            for (a, b) in fast.data().iter().zip(slow.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            // algebraic route: fold(M * unfold(X))
            let mut out_shape = shape.clone();
            out_shape[mode] = rows;
            let via_unfold = fold(&m.matmul(&unfold(&x, mode).unwrap()).unwrap(), mode, &out_shape).unwrap();
            for (a, b) in fast.data().iter().zip(via_unfold.data()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
