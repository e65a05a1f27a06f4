//! Differentiable simulation of rigid bodies with frictional, restitutive
//! contacts, plus system identification and trajectory planning on top of it.

pub mod contact;
pub mod dynamics;
pub mod error;
pub mod learn;
pub mod linalg;
pub mod model;
pub mod plan;
pub mod rng;
pub mod sim;
pub mod socp;
pub mod systems;

pub use error::{Error, Result};
