//! Transmission-grid transient dynamics: structure-preserving swing
//! equations, RoCoF-based disturbance quantification, Laplacian spectral
//! analysis and inertia-placement experiments.

pub mod dispatch;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod ingest;
pub mod io;
pub mod ode;
pub mod placement;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{Bus, BusKind, GridModel, Line};
