//! Unbalanced network modelling, power flow, optimal power flow and the
//! configuration framework shared by the simulation crate.

#[cfg(test)]
mod fixtures;
pub mod collection;
pub mod event;
pub mod network;
pub mod opf;
pub mod parsers;
pub mod powerflow;
pub mod property;
pub mod sparse;
pub mod time;
pub mod timeseries;

pub use collection::{CollectionError, ComponentCollection, Handle};
pub use network::Network;
