//! Communication-cost calculus for coded storage on mobile devices with
//! periodic repair: closed-form costs, the incoming-content extension, a
//! discrete-event simulator and an exhaustive code search.

pub mod analytic;
pub mod error;
pub mod incoming;
pub mod model;
pub mod oracle;
pub mod search;
pub mod simulator;

pub use analytic::CostQuery;
pub use error::{Error, Result};
pub use incoming::{ChainConfig, StationaryDist};
pub use search::{DeltaMax, SearchSpec};
pub use simulator::{Availability, RequestModel, SimConfig, SimResult};
pub use model::{derive_code, CodeFamily, CodeSpec, CostBreakdown, NetworkParams, Scheme};
