pub mod attacks;
pub mod cpl;
pub mod dynamics;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod sim;
pub mod topology;
pub mod twinlayer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Double-precision aliases for the common case.
pub type LeaderModelF64 = dynamics::LeaderModel<f64>;
pub type FollowerModelF64 = dynamics::FollowerModel<f64>;
pub type ControllerGainsF64 = dynamics::ControllerGains<f64>;
pub type TopologyF64 = topology::Topology<f64>;
pub type GraphMatricesF64 = topology::GraphMatrices<f64>;
pub type ClosedLoopConfigF64 = sim::ClosedLoopConfig<f64>;
pub type ClosedLoopF64 = sim::ClosedLoop<f64>;
pub type ActuationAttackF64 = attacks::ActuationAttack<f64>;
