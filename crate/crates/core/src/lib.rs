//! Simulator for the one-pixel-per-player collective drawing game, in which
//! every agent steers the shared grid toward simple patterns that would be
//! unexpected given the last pattern the group completed.

pub mod decision;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod pattern;
pub mod sim;

pub use decision::{
    agent_decide, candidates, desirability, generation_complexity, select_target, unexpectedness,
    AgentAction, Alpha, DesirabilityRecord,
};
pub use error::{Error, Result};
pub use grid::{hamming, ColorId, Grid};
pub use pattern::{
    describe_complexity, enumerate_patterns, AbstractPattern, BasicState, BasicStateId, Catalogue,
    ShapeClass,
};
pub use sim::{run, Event, InitMode, RunLog, SimConfig, World};
