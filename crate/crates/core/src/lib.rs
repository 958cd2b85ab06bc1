//! Workbench for channel-aided interference alignment in single-antenna
//! interference networks with general message demands.
//!
//! The pipeline runs: exact DoF linear program ([`lp`]), alignment graph and
//! aiding conditions over a diagonal channel extension ([`graph`]),
//! verification and synthesis of aided channels ([`aiding`]), beamformer
//! design and rank checks ([`design`]), and zero-forcing rate simulation
//! ([`sim`]).

pub mod aiding;
pub mod channel;
pub mod design;
pub mod diag;
pub mod graph;
pub mod linalg;
pub mod lp;
pub mod network;
pub mod sim;

pub use network::{DemandNetwork, NetworkError, PrimeReceiverSet};
