//! Numerical laboratory for the trajectory (microstate) representation of
//! stationary quantum mechanics.
//!
//! * [`numerics`]: uniform-grid stencils, quadrature and table inversion.
//! * [`potentials`]: catalog of 1-D potentials.
//! * [`qshje`]: basis solutions, microstate reduced actions, the quantum
//!   potential as a Schwarzian derivative and the state function.
//! * [`floyd`]: Floydian time, quantum mass, trajectories, Legendre duality,
//!   uncertainty diagnostics and the Ehrenfest check.
//! * [`spin3d`]: stationary Madelung fields in 3-D, spin-vector constraints
//!   and the current-velocity versus trajectory-velocity comparison.
//! * [`report`]: residual reports and CSV export.

pub mod error;
pub mod floyd;
pub mod numerics;
pub mod potentials;
pub mod qshje;
pub mod report;
pub mod spin3d;

pub use error::{Error, Result};
pub use numerics::{Grid1D, SampledField1D};
pub use potentials::Potential;
pub use qshje::{ActionSlice, BasisPair, Constants, Microstate};
pub use report::Residual;
