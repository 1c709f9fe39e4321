//! Deterministic multi-agent message-relay game with a Dijkstra relay-chain
//! baseline, budget calibration, policy plumbing and an evaluation harness.

pub mod baseline;
pub mod calibration;
pub mod comms;
pub mod eval;
pub mod game;
pub mod geometry;
pub mod policy;

pub use game::{
    AgentAction, GameState, JointAction, Phase, Scenario, ScenarioParams, TerminalBudget,
};
pub use geometry::Vec2;
pub use policy::{BaselinePolicy, Policy, ZeroPolicy};
