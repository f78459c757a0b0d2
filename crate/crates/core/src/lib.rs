//! Entire solutions of `−Δu = F'(u)` in the plane that grow like `Re(z^d)`,
//! and one-dimensional solutions with linear growth.

// `!(x > 0.0)` is how NaN gets rejected along with the bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fourier;
pub mod geometry;
pub mod harmonic;
pub mod io;
pub mod linalg;
pub mod oned;
pub mod plot;
pub mod potential;
pub mod run;
pub mod solver;

pub use error::{Error, Result};
