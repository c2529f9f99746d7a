//! Small-noise diffusion lab: hypothesis probing, Freidlin–Wentzell rate
//! functionals on discrete paths, action minimization, tamed Euler
//! simulation, rare-event Monte Carlo, and Lyapunov/martingale certificate
//! checks.

pub mod action;
pub mod config;
pub mod error;
pub mod estimator;
pub mod minact;
pub mod model;
pub mod path;
pub mod psdlinalg;
pub mod sde;
pub mod util;
pub mod verify;

pub use error::{Error, Result};
