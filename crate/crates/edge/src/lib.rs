//! Network-facing edge cache.
//!
//! [`server`] exposes an [`xrflux_core::node::EdgeNode`] over HTTP and
//! [`client`] drives it from a request trace. Because every request runs
//! through one lock around the node, a serialized client sees exactly the
//! decisions the in-process replay would make.

pub mod api;
pub mod client;
pub mod config;
pub mod error;
pub mod server;

pub use client::EdgeClient;
pub use config::{DelayMode, ServiceConfig};
pub use error::EdgeError;
pub use server::{spawn, RunningServer};
