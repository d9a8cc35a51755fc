//! Numerical machinery relating total variation to Hellinger and χ² distances
//! between Gaussian location mixtures.
//!
//! The crate is `no_std` with `alloc`. It covers:
//!
//! * [`hermite`]: normalized Hermite polynomials, Christoffel–Darboux and Mehler kernels
//! * [`mixtures`]: finitely atomic mixing measures, moment differences and Hermite expansions
//! * [`divergences`]: TV, Hellinger, χ² and KL with quadrature error control
//! * [`bounds`]: the constants and transfer function of the TV-to-χ² inequality
//! * [`extremal`]: the extremal L¹/L² ratio over polynomials and norm inequalities
//! * [`sharpness`]: the Chebyshev-node family showing the exponent cannot be improved
//! * [`robust`]: Huber contamination, coverings and the Yatracos estimator
//! * [`ebayes`]: Tweedie denoisers and empirical-Bayes regret
#![no_std]

extern crate alloc;

pub mod bounds;
pub mod divergences;
pub mod ebayes;
pub mod error;
pub mod extremal;
pub mod hermite;
pub mod mixtures;
pub mod precision;
pub mod quad;
pub mod robust;
pub mod sharpness;
pub mod special;

pub use error::{Error, Result};
pub use mixtures::MixingMeasure;
pub use precision::{PrecisionRequest, Tier};
