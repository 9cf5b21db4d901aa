//! Dense-matrix value type, seeded random streams, and the small set of
//! linear-algebra primitives the rest of the crate is built on.

mod matrix;
mod rng;

pub use matrix::{logdet_and_inverse, Matrix};
pub use rng::RngStream;
