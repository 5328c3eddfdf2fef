//! Numerical checks of Malliavin and fractional smoothness for functionals of
//! a compound Poisson process.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: the jump measure, box sets and their exact measures;
//! * [`simulate`]: paths of the Poisson random measure and pathwise perturbation;
//! * [`dsl`]: a small language for path functionals `Y = F(X)`;
//! * [`chaos`]: the random measure `M`, step-function multiple integrals and the isometry;
//! * [`malliavin`]: the add-one-jump derivative and the pathwise/Mecke identities;
//! * [`smoothness`]: weighted norms, the K-functional surrogate and interpolation norms;
//! * [`orlicz`]: the `L2 log L2` inclusion and its strictness counterexample.
//!
//! Monte Carlo loops fan out over counter-based streams (see [`rng`]) and
//! reduce in stream order, so estimates are reproducible for any worker count.

pub mod chaos;
pub mod dsl;
pub mod error;
pub mod estimate;
pub mod malliavin;
pub mod model;
pub mod orlicz;
pub mod parallel;
pub mod rng;
pub mod simulate;
pub mod smoothness;
pub mod special;

pub use error::{Error, Result};
pub use estimate::Estimate;
pub use model::{BoxSet, Interval, JumpModel, NuComponent, Rect};
pub use rng::SeedSpec;
pub use simulate::{sample_path, Jump, JumpPath};
