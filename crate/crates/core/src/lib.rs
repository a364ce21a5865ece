//! Domain walls of the Landau–Lifshitz–Gilbert–Slonczewski equation on a
//! nanowire, studied through the coherent-structure ODE.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] parameters, state representations and the two right-hand sides
//! * [`analytic`] closed-form chart solutions and the homogeneous wall family
//! * [`classification`] regimes, thresholds and stability curves
//! * [`hamiltonian`] chart first integrals and the center-case energy gap
//! * [`melnikov`] splitting matrix of the codim-2 connection
//! * [`integrator`] and [`shooting`] initial-value tools
//! * [`bvp`] and [`continuation`] collocation of heteroclinic orbits
//! * [`freezing`] the PDE in a co-moving, co-rotating frame
//! * [`io`] serialisable profiles, branches and CSV output

pub mod analytic;
pub mod banded;
pub mod bvp;
pub mod classification;
pub mod collocation;
pub mod continuation;
mod error;
pub mod freezing;
pub mod hamiltonian;
pub mod integrator;
pub mod io;
pub mod melnikov;
pub mod model;
pub mod par;
pub mod shooting;

pub use error::{Error, Result};
pub use model::{ChartState, MaterialParams, Param, SingularState, SphereState, WaveFrame};
