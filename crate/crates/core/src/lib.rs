//! Velocity-Markov lattice walks and their continuum limits.
//!
//! The lattice side propagates joint (position, velocity) densities exactly:
//! [`binomial`] for the two-velocity persistent walk, [`multinomial`] for
//! walks with velocities `j·c`, `|j| <= J`. The continuum side
//! ([`continuum`]) evaluates the Telegraph / Klein-Gordon Cauchy solution and
//! its diffusion limit, and [`moments`] compares empirical moments with the
//! closed-form predictions. [`experiment`] ties everything to the CLI.

// `!(x < y)` rejects NaN on purpose; Bessel coefficients keep their published digits
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod binomial;
pub mod continuum;
pub mod crosscheck;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod lattice;
pub mod moments;
pub mod multinomial;

pub use error::{Error, Result};
pub use exec::Exec;
pub use lattice::{
    gaussian_initial, make_grid, to_state_density, total_mass, DensitySnapshot, GridSpec, JointDensity2,
    MomentSeries, RateFn, RateForm, RateSpec2, StateDensity,
};
