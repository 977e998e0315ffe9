//! Multi-user VR field-of-view workload generation and edge-cache replay.
//!
//! The pipeline runs in stages that communicate through plain-text files:
//!
//! 1. [`scenario::run_simulation`] moves principals and groupies through a
//!    cube of objects and logs every FoV enter/exit.
//! 2. [`trace::derive_requests`] turns the log into a request trace under one
//!    of three strategies; [`trace::generate_irm`] builds the IRM baseline.
//! 3. [`replay`] pushes traces through a cache policy and reports hit rates,
//!    delays and deadline misses.

pub mod cache;
pub mod delay;
pub mod error;
pub mod geometry;
pub mod motion;
pub mod node;
pub mod replay;
pub mod scenario;
pub mod time;
pub mod trace;

pub use error::{ConfigError, Error, Result};
pub use scenario::ObjectId;
pub use motion::UserId;
pub use time::Timestamp;
