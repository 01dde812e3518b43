//! Mean-field analysis and simulation of a leader/follower majority
//! consensus protocol in the population model.

pub mod coupling;
pub mod experiments;
pub mod meanfield;
pub mod model;
pub mod plot;
pub mod potentials;
pub mod sim;
pub mod trace;
pub mod verify;
