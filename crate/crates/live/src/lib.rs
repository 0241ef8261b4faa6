//! Live sessions: a world steps on a fixed tick while one human may hold a
//! cell and observers try to tell which cell it is.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{ErrorCode, Message, Role};
pub use server::{Service, ServiceConfig, ServiceError};
pub use session::{ClientId, GuessRecord, SessionCore};
