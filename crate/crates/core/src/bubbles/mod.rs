//! Bubbles, their projections onto the pierced ball, admissible partitions
//! and the concentration-rate schedule.

mod bubble;
mod constants;
mod partition;
mod tower;

pub use bubble::{
    project_bubble, project_dbubble, projection_expansion_constant, projection_expansion_error, Bubble, ProjectedBubble, ProjectedDerivative,
};
pub use constants::{compute_constants, UniversalConstants, ALPHA4, GAMMA4, SPHERE3_AREA};
pub use partition::{validate_partition, Partition, PartitionViolation};
pub use tower::{rate_factors, rate_schedule, schedule, RateSchedule, TowerConfig};
