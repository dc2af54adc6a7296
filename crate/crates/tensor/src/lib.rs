//! Dense `f64` arrays with a tape-free reverse-mode autodiff graph.
//!
//! Values live in [`Array`]; graph nodes are [`Var`]s that own their value and
//! a closure mapping the output gradient back to their parents. Model weights
//! are kept in a [`ParamStore`] and bound into each forward pass as leaves.

mod array;
mod conv;
pub mod gradcheck;
mod linalg;
mod ops;
mod params;
mod resize;
mod var;

pub use array::Array;
pub use conv::Conv2dGeometry;
pub use linalg::gemm;
pub use ops::{softplus, stable_sigmoid};
pub use params::{Bound, ParamId, ParamStore};
pub use resize::{resize_bilinear, resize_nearest};
pub use var::{BackwardFn, Gradients, Var};
