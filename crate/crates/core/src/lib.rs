//! Modeling, sequencing and analysis of a two-class signal-free intersection.

pub mod error;
pub mod model;
pub mod analytics;
pub mod drift;
pub mod policy;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};
pub use model::{
    aggregate, sample_interarrival, AggregateState, CrossingTimeDist, DemandProfile, Departure, HeadwayMatrix,
    HybridState, IntersectionSpec, OdClass, QueuedVehicle, VehicleId, VehicleRecord,
};
pub use policy::{switchover_count, MsMode, PolicyKind, PolicyState, TieRule};
pub use scheduler::microsim::{MicroSimConfig, MicroSimResult};
pub use scheduler::{ApproachSpec, Schedule, ScheduleEntry, Scheduler};
pub use sim::{SimConfig, SimResult, Verdict};
