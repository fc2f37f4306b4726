//! Pseudo-spectral simulator and diagnostics for the compressible
//! Euler-alignment system with a singular fractional-Laplacian communication
//! kernel on the periodic torus `[0,1)ᴺ`, `N ∈ {1, 2}`.

pub mod alignment;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod integrator;
pub mod io;
pub mod oracle;
pub mod par;
pub mod runner;
pub mod special;
pub mod spectral;
pub mod state;
mod stencil;

pub use error::{Error, Result};
