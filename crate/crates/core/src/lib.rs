pub mod demand;
pub mod dispatch;
pub mod energy;
pub mod engine;
pub mod error;
pub mod geom;
pub mod hexgrid;
pub mod metrics;
pub mod network;
pub mod placement;
pub mod rng;
pub mod scenario;
pub mod time;

pub use error::{Error, Result};

pub type VehicleId = usize;
