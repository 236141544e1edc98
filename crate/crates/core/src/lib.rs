//! Discrete-event simulator for slot-based platoon formation over a shared
//! broadcast radio, with a CSMA/CA baseline.

pub mod config;
pub mod csma;
pub mod frame;
pub mod kernel;
pub mod medium;
pub mod tsnctl;
pub mod metrics;
pub mod scenario;
pub mod sim;
pub mod oracle;
pub mod trace;
