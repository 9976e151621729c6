//! Compression-aware training for convolutional networks.
//!
//! Weights are trained in their original structure and, every `S_D` batches,
//! replaced in place by a low-rank reconstruction (Tucker decomposition of
//! the 4D kernel, or tiled truncated SVD of the lowered `T x (S*d*d)`
//! kernel matrix). Training always ends on such a distortion step, so the
//! final weights can be exported in factored form with no further loss.
//!
//! The crate is `no_std` (it needs `alloc`) and does no IO. File formats,
//! dataset readers and the command line live in the `deeptwist` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod linalg;
pub mod lowering;
pub mod lowrank;
pub mod matrix;
pub mod nn;
pub mod tensor;
pub mod trainer;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use tensor::{DenseTensor, Kernel4};
