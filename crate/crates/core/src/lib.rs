#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]
//! Conformal scattering laboratory for the defocusing cubic wave equation on the
//! compactified Schwarzschild exterior, one multipole mode at a time.

pub mod analysis;
pub mod cauchygrid;
pub mod chart;
pub mod cli;
pub mod coeff;
pub mod config;
pub mod energy;
pub mod error;
pub mod interp;
pub mod io;
pub mod nullgrid;
pub mod scatter;

pub use error::{Error, Result};
