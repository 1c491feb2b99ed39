//! Chernoff exponents for telling two faint incoherent optical sources
//! apart through a diffraction-limited aperture.
//!
//! The crate has three layers that deliberately do not share formulas:
//! closed-form engines ([`chernoff`], [`subdiff`]) built on thermal-state
//! spectra, brute-force verification backends ([`fock`], and the matrix
//! route in [`chernoff`]) that evaluate the same quantities from first
//! principles, and a Monte Carlo simulator ([`sim`]) that measures error
//! rates of the photon-counting measurement directly. Tests hold the
//! layers against each other.
//!
//! Conventions used throughout: lengths are in units of the aperture's
//! Gaussian point-spread width, `i0` is the expected photon number per
//! detection window, `chi` is the source-size parameter of the small-image
//! expansion, and matrix powers at the interval ends follow `x^0 = 1` for
//! `x > 0` and `0^s = 0` for every `s` in `[0, 1]`.

pub mod chernoff;
pub mod cov;
mod eigen;
pub mod error;
pub mod fock;
pub mod io;
pub mod optimize;
pub mod sim;
pub mod source;
pub mod subdiff;

pub use error::{Error, Result};
