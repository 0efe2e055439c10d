//! Energy-minimal data processing in wireless device-to-device edge
//! networks: joint link selection, subchannel allocation, transmit
//! beamforming with power control, and receive combining.

pub mod alloc;
pub mod error;
pub mod harness;
pub mod mimo;
pub mod model;
pub mod optimizer;
pub mod oracle;

pub use error::{Error, Result};
