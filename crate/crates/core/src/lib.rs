//! Monte Carlo and exact tools for cover times of disks by planar random walk
//! and Brownian motion, organized around excursions between concentric circles.

pub mod annulus;
pub mod brownian;
pub mod coupling;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod rng;
pub mod scales;
pub mod srw;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
