//! Closed geodesics of semi-Riemannian metrics on flat tori.

pub mod error;
pub mod fft;
pub mod fixtures;
pub mod flow;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod loopspace;
pub mod perturbation;
pub mod solver;

pub use error::{Error, Result};
