//! Bounds on the feedback, delayed-feedback and feedforward capacity of
//! unifilar finite-state channels.

pub mod app;
pub mod channels;
pub mod delay;
pub mod dual_mdp;
pub mod error;
pub mod graph;
pub mod info;
pub mod graph_bounds;
pub mod qgraph;

pub use error::{Error, Result};
