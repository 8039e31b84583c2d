//! Photon/spin-wave position–momentum entanglement: Gaussian model under
//! diffusion decoherence, Monte Carlo detection frames, the `.events.csv`
//! format and coincidence analysis.

pub mod analysis;
pub mod events_io;
pub mod model;
pub mod simulate;

pub use model::{Basis, DiffusionModel, EprGaussianState, Regime};
