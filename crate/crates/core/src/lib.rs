//! Numerical laboratory for sparse domination of Calderón–Zygmund operators,
//! Muckenhoupt weights and rough homogeneous singular integrals on grids.

pub mod calibration;
pub mod dyadic;
pub mod error;
pub mod fft;
pub mod grid;
pub mod operators;
pub mod lpdecomp;
pub mod normlab;
pub mod sparse;
pub mod special;
pub mod stats;
pub mod weights;

pub use error::{Error, Result};
