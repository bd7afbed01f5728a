// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod compare;
pub mod config;
pub mod convergence;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod interp;
pub mod reference;
pub mod run;
pub mod snapshot;
pub mod solver;
pub mod spectral;
pub mod weber;
pub mod wiener;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::{PeriodicGrid, Point};
pub use interp::{InterpScheme, Interpolant};
pub use spectral::SpectralWorkspace;
pub use wiener::WienerEnsemble;
