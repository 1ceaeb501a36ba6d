//! Control protocol server for the corpus agent.
//!
//! Clients send requests as JSON lines; the engine thread applies them in
//! order at block boundaries and streams events back. See `PROTOCOL.md`.

pub mod engine;
pub mod outbox;
pub mod protocol;
pub mod replay;
pub mod scatter;
pub mod server;
pub mod session;

pub use engine::{Command, Engine, ParamPatch};
pub use protocol::{EventKind, Op, Request, Response, PROTOCOL_VERSION};
pub use scatter::{scatter_data, ScatterAxes, ScatterPoint};
pub use server::{ClockMode, Server, ServerConfig, Service, TOKEN_ENV};
pub use session::{ControlQueue, Session};
