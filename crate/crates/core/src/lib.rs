//! Deterministic discrete-event simulation of an economy-driven grid resource
//! broker running deadline and budget constrained (DBC) scheduling.
//!
//! The broker prices every resource in G$ per MI, then schedules a
//! task-farming workload with one of three strategies:
//!
//! * [`Strategy::Cost`] fills the cheapest resources first,
//! * [`Strategy::Time`] sends each job wherever it is predicted to finish first,
//! * [`Strategy::CostTime`] walks equally priced resource groups from cheapest
//!   up and applies time optimisation inside each group.
//!
//! [`harness`] runs single experiments and deadline x budget sweeps and writes
//! the CSV outputs.

pub mod broker;
pub mod engine;
pub mod error;
pub mod harness;
pub mod model;
pub mod workload;

pub use error::{Error, Result};
pub use model::{Constraint, Experiment, Gridlet, GridletStatus, Manager, Resource, Strategy};
