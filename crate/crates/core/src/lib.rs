//! Numerical lab for geodesic flows, Jacobi frames and loop-space counting
//! estimates on analytic Riemannian charts.

pub mod bounds;
pub mod count;
pub mod error;
pub mod geodesic;
pub mod jacobi;
pub mod loops;
pub mod metric;
pub mod quadrature;
pub mod seed;

pub use error::{Error, ParseError, ParseErrorKind, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
