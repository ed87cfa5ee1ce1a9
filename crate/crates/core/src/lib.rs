//! Multi-Gabor matching pursuit with kernel-based residual updates.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod dict;
pub mod engine;
pub mod error;
pub mod kernels;
pub mod maxtree;
pub mod oracle;
pub mod par;
pub mod transform;

pub use dict::{atom, validate_multidict, GaborDictParams, MultiDict, WindowKind, WindowSpec};
pub use error::{MpError, Result};
pub use kernels::{KernelBank, TruncatedKernel};
pub use par::Exec;
pub use transform::{analyze, energy, synthesize, CoefficientGrid, GaborTransform};
