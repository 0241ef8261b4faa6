//! Wire messages. One JSON text frame per message, tagged by `kind`.
//!
//! ```text
//! hello{session, role}     client -> server
//! assign{cell}             server -> player
//! act{color}               player -> server
//! state{step, cells, reset} server -> all
//! guess{cell}              observer -> server
//! guess_result{correct}    server -> observer
//! error{code, text}        server -> client
//! ```

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Player,
    Observer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    Hello { session: String, role: Role },
    Assign { cell: usize },
    Act { color: u8 },
    State { step: u64, cells: Vec<u8>, reset: bool },
    Guess { cell: usize },
    GuessResult { correct: bool },
    Error { code: ErrorCode, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadMessage,
    UnknownSession,
    PlayerTaken,
    NotOwner,
    BadColor,
    BadCell,
    NotObserver,
    NoHuman,
    Capacity,
}

impl Message {
    pub fn error(code: ErrorCode, text: impl Into<String>) -> Self {
        Message::Error { code, text: text.into() }
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    pub fn from_text(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}
