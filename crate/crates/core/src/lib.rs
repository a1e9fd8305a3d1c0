//! Spectral theory of the chiral continuum model of twisted trilayer
//! graphene: magic parameters through the Birman–Schwinger operator, flat
//! band diagnostics, trace formulas, theta-function Bloch states, Chern
//! numbers and squeezing experiments.

pub mod asymptotics;
pub mod bands;
pub mod basis;
pub mod birman_schwinger;
pub mod cli;
pub mod error;
pub mod fourier_ops;
pub mod lattice;
pub mod linalg;
pub mod potential;
pub mod samples;
pub mod theta;
pub mod traces;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
