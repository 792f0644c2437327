//! Discrete-event quasi-steady-state simulation of grid components.

pub mod config;
pub mod scripted;
pub mod simlib;
pub mod simulation;

pub use simulation::{
    ComponentError, ComponentEvents, LinkContext, SimComponent, SimError, SimHandle, Simulation, TimestepRecord,
    UpdateKind, UpdateRecord,
};
