//! GraphRec-style social recommendation: attentive aggregation over a
//! user-item rating graph and a user-user trust graph.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod diffmath;
pub mod error;
pub mod eval;
pub mod graphdata;
pub mod model;
pub mod scalar;
pub mod seeds;
pub mod training;

pub use diffmath::{Tape, Tensor, Var};
pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Params64 = model::GraphRecParams<f64>;
pub type Params32 = model::GraphRecParams<f32>;
pub type Tape64<'a> = Tape<'a, f64>;
