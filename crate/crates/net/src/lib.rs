//! Stream-socket transport for pod.
//!
//! One listening socket per replica carries tagged frames in both directions.
//! Each replica's state machine runs in a single task fed by per-connection
//! reader tasks; per-connection writer tasks drain bounded queues, and a
//! connection whose queue overflows is dropped.

pub mod bench;
pub mod client;
pub mod clock;
pub mod server;
mod wire;

pub use client::{NetClient, NetClientConfig};
pub use clock::{Clock, ManualClock, MillisClock};
pub use server::{serve_replica, ReplicaHandle, ServerConfig};
