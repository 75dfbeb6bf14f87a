//! Best-basis bandlet denoising in the white noise model.
//!
//! The crate is organised bottom-up:
//!
//! * [`pyramid`]: periodic orthonormal Daubechies transforms and the
//!   subband layout of the approximation space.
//! * [`geometry`]: dyadic squares, quadtrees, quantized polynomial flows and
//!   the orthogonal Alpert recombination of coefficients along a flow.
//! * [`selection`]: penalized costs, thresholding, the per-square flow search
//!   and the bottom-up best-partition dynamic program.
//! * [`estimator`]: the σ → (resolution, threshold) plan, the denoiser, the
//!   single-basis baseline and the oracle evaluator.
//! * [`synthlab`]: synthetic geometrically regular scenes, noisy observations
//!   and Monte Carlo experiments.
//!
//! Units: an [`Image`] stores pixel samples of a function on the unit square.
//! Everything measured in `L²([0,1]²)` (thresholds, penalized costs, risks)
//! uses the continuous normalization, in which the orthonormal pixel-basis
//! coefficient of a pixel with value `v` is `v / side`. See
//! [`estimator::to_coefficient_units`].

pub mod error;
pub mod estimator;
pub mod geometry;
pub mod image;
pub mod pyramid;
pub mod rng;
pub mod selection;
pub mod synthlab;

pub use error::{Error, Result};
pub use image::Image;
