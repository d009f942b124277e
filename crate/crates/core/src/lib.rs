//! Traffic signal scheduling for mixed pedestrian and vehicle flows on grid
//! networks.
//!
//! The crate models a rectangular grid of signalised junctions over a discrete
//! time horizon.  Each junction alternates between a horizontal and a vertical
//! stage; pedestrians hop between the four corner areas of a junction along
//! the crosswalks released by the active stage, while vehicles move along
//! one-way links gated by the same signals.  On top of the two flow models sit
//! several schedule optimisers (exhaustive search, branch-and-bound, discrete
//! harmony search), an integer-program builder with an LP-format exporter, a
//! weighted pedestrian/vehicle objective with weight sweeps, and a rolling
//! model-predictive control loop.
//!
//! All simulation state is integer-valued (people and vehicles are counts),
//! which keeps traces exactly reproducible and lets the optimisers compare
//! costs without floating-point ambiguity.

pub mod dhs;
pub mod error;
pub mod exact;
pub mod experiments;
pub mod integrate;
pub mod milp;
pub mod mpc;
pub mod num;
pub mod ped;
pub mod scenario;
pub mod schedule;
pub mod topology;
pub mod unhappiness;
pub mod veh;

pub use error::{Error, Result};
