//! Time-changed horocycle flows on the modular quotient `SL(2,Z) \ SL(2,R)`.
//!
//! The crate instantiates the unipotent (horocycle) flow `h_t`, the geodesic
//! flow, smooth time-changes `h^τ_t` and the shear machinery used to prove
//! polynomial decay of correlations, and checks the finitely checkable
//! statements numerically:
//!
//! * [`lie`]: 2×2 group and algebra arithmetic, closed-form exponentials, flows.
//! * [`quotient`]: fundamental-domain reduction, Haar sampling, lattice enumeration.
//! * [`observable`]: smooth compactly supported test functions as Poincaré sums.
//! * [`timechange`]: admissible generators, the cocycle `u(x,t)`, the time-changed flow.
//! * [`shear`]: the shear function `v(r,x,t)`, distortion, exceedance statistics.
//! * [`stats`]: ergodic integrals, correlations, power-law decay fits.
//! * [`harness`]: configuration, the verification suite and experiment runners.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod harness;
pub mod lie;
pub mod observable;
pub mod parallel;
pub mod quotient;
pub mod rng;
pub mod shear;
pub mod stats;
pub mod timechange;

pub use error::{Error, Result};
pub use lie::{AlgebraElement, GroupElement};
pub use observable::BumpObservable;
pub use quotient::{LatticeElement, PointM};
pub use rng::SampleStreams;
pub use timechange::{CocycleConfig, TimeChangeGenerator};
