//! Degrees of freedom of the 3-user rank-deficient MIMO interference
//! channel, and a constructive two-layer transceiver scheme that attains it.

pub mod channel;
pub mod dof;
pub mod example;
pub mod exec;
pub mod inner;
pub mod io;
pub mod linalg;
pub mod outer;
pub mod rng;
pub mod sweep;
pub mod verify;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
