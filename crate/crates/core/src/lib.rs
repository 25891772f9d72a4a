//! Classical simulation of a reactive molecular model coupled to a single
//! cavity mode.
//!
//! Internal units are atomic units throughout (Hartree, bohr, electron
//! masses, ħ = 1); conversions live in [`units`].

pub mod analysis;
pub mod cavity;
pub mod commands;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod model;
pub mod output;
pub mod reactive;
pub mod surrogate;
pub mod units;

pub use cavity::{CavityMode, FullState, PhotonState};
pub use dynamics::{propagate, ReactionEvent, ReactionMonitor, Trajectory};
pub use error::{Error, Result};
pub use model::ModelSystem;
