//! System-level simulator for NOMA-assisted offloading of visual processing
//! tasks from IoVT devices to multiple MEC-equipped base stations.
//!
//! One run goes: scenario generation, channel draw, device association
//! ([`association`]), per-cell uplink NOMA ([`noma`]), task division and
//! water-filling of MEC capacity ([`compute`]), then staged transmission for
//! realized delays. [`harness`] sweeps this over device counts and strategy
//! arms.
//!
//! The physics and allocation code is generic over [`Real`] (`f32`/`f64`);
//! the aliases below fix the scalar to `f64`, which is what the harness uses.

pub mod association;
pub mod channel;
pub mod compute;
pub mod error;
pub mod harness;
pub mod noma;
pub mod scalar;
pub mod scenario;

pub use association::{AssociationMode, Matching, PreferenceLists};
pub use error::{Result, SimError};
pub use harness::{Arm, ExperimentConfig, RunMetrics, SweepTable};
pub use noma::SicMode;
pub use scalar::Real;

pub type SimParams = scenario::SimParams<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type MecBs = scenario::MecBs<f64>;
pub type IovtDevice = scenario::IovtDevice<f64>;
pub type ChannelState = channel::ChannelState<f64>;
pub type UplinkPlan = noma::UplinkPlan<f64>;
pub type AllocationResult = compute::AllocationResult<f64>;

pub type SimParamsF32 = scenario::SimParams<f32>;
pub type ScenarioF32 = scenario::Scenario<f32>;
pub type ChannelStateF32 = channel::ChannelState<f32>;
pub type UplinkPlanF32 = noma::UplinkPlan<f32>;
