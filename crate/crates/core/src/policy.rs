//! Policies, observation encodings, the discrete action set and the
//! line-delimited JSON protocol for external policy processes.
//!
//! Protocol, one JSON object per line:
//!
//! ```text
//! -> {"type":"hello","protocol":1,"K":3,"directional":false,"jammed":true,
//!     "encoding":"relative-sorted","action_mode":"discrete"}
//! <- {"protocol":1}
//! -> {"t":0,"agent":1,"obs":[...]}            one request per agent and step
//! <- {"motion":4,"steer":1}                    discrete mode
//! <- {"dp":[0.1,-0.05],"dphi":0.2}             continuous mode
//! ```
//!
//! Agents are numbered from 1 on the wire. `t` restarts at 0 with every
//! episode.

use std::f64::consts::TAU;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::baseline::{self, PlanError, PlannerOptions, RelayPlan};
use crate::game::{ActionCheck, AgentAction, GameState, JointAction, ScenarioParams};
use crate::geometry::Vec2;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("planning failed: {0}")]
    Plan(#[from] PlanError),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("policy process i/o failed: {0}")]
    Io(#[from] std::io::Error),
}

impl PolicyError {
    pub fn is_protocol(&self) -> bool {
        matches!(self, PolicyError::Protocol(_) | PolicyError::Io(_))
    }
}

/// A joint policy driven by the evaluation loop.
pub trait Policy {
    fn name(&self) -> String;

    /// How the game validates this policy's actions.
    fn action_check(&self) -> ActionCheck;

    /// Called with the settled initial state of every episode.
    fn begin_episode(
        &mut self,
        state: &GameState,
        params: &ScenarioParams,
    ) -> Result<(), PolicyError>;

    fn act(
        &mut self,
        t: usize,
        state: &GameState,
        params: &ScenarioParams,
    ) -> Result<JointAction, PolicyError>;

    /// The relay plan of the current episode, for policies that have one.
    fn plan(&self) -> Option<&RelayPlan> {
        None
    }
}

/// The handcrafted planner: plans once per episode, then follows waypoints.
#[derive(Debug, Clone, Default)]
pub struct BaselinePolicy {
    pub options: PlannerOptions,
    /// Agents allowed to take part; `None` means all.
    pub members: Option<Vec<usize>>,
    current: Option<RelayPlan>,
}

impl BaselinePolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_members(members: Vec<usize>) -> Self {
        Self {
            members: Some(members),
            ..Self::default()
        }
    }
}

impl Policy for BaselinePolicy {
    fn name(&self) -> String {
        "baseline".into()
    }

    fn action_check(&self) -> ActionCheck {
        ActionCheck::Strict
    }

    fn begin_episode(
        &mut self,
        state: &GameState,
        params: &ScenarioParams,
    ) -> Result<(), PolicyError> {
        let members = match &self.members {
            Some(m) => m.clone(),
            None => (0..state.agents()).collect(),
        };
        self.current = Some(baseline::plan_with(state, params, &members, &self.options)?);
        Ok(())
    }

    fn act(
        &mut self,
        _t: usize,
        state: &GameState,
        params: &ScenarioParams,
    ) -> Result<JointAction, PolicyError> {
        let plan = self.current.as_ref().ok_or(PlanError::MissingPlan)?;
        Ok(baseline::act(state, plan, params)?)
    }

    fn plan(&self) -> Option<&RelayPlan> {
        self.current.as_ref()
    }
}

/// Every agent stands still.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn name(&self) -> String {
        "zero".into()
    }

    fn action_check(&self) -> ActionCheck {
        ActionCheck::Strict
    }

    fn begin_episode(&mut self, _: &GameState, _: &ScenarioParams) -> Result<(), PolicyError> {
        Ok(())
    }

    fn act(
        &mut self,
        _t: usize,
        state: &GameState,
        _: &ScenarioParams,
    ) -> Result<JointAction, PolicyError> {
        Ok(JointAction::still(state.agents()))
    }
}

/// Observation layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    /// Bases, jammer, own orientation and flag, then the other agents by
    /// ascending distance.
    RelativeSorted,
    /// Circularly shifted relative positions and carry flags.
    Shifted,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::RelativeSorted => "relative-sorted",
            Encoding::Shifted => "shifted",
        }
    }

    pub fn len(self, agents: usize) -> usize {
        match self {
            Encoding::RelativeSorted => 10 + 4 * (agents - 1),
            Encoding::Shifted => 2 * (agents + 1) + agents,
        }
    }

    pub fn encode(self, state: &GameState, agent: usize) -> Vec<f64> {
        match self {
            Encoding::RelativeSorted => encode_relative_sorted(state, agent),
            Encoding::Shifted => encode_shifted(state, agent),
        }
    }
}

impl std::str::FromStr for Encoding {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "relative-sorted" => Ok(Encoding::RelativeSorted),
            "shifted" => Ok(Encoding::Shifted),
            other => Err(format!("unknown encoding '{other}'")),
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Observation of agent `agent` (0-based) in the relative-sorted layout.
pub fn encode_relative_sorted(state: &GameState, agent: usize) -> Vec<f64> {
    let p_k = state.positions[agent];
    let mut obs = Vec::with_capacity(Encoding::RelativeSorted.len(state.agents()));
    for v in [
        state.sender() - p_k,
        state.receiver() - p_k,
        state.jammer - p_k,
        state.jammer_step,
    ] {
        obs.extend([v.x, v.y]);
    }
    obs.push(state.orientations[agent]);
    obs.push(flag(state.carrying[agent]));
    let mut others: Vec<(f64, usize)> = (0..state.agents())
        .filter(|&i| i != agent)
        .map(|i| (state.positions[i].distance(p_k), i))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (_, i) in others {
        let d = state.positions[i] - p_k;
        obs.extend([d.x, d.y, state.orientations[i], flag(state.carrying[i])]);
    }
    obs
}

/// `shift(α; k) = (α_{k+1}, …, α_M, α_1, …, α_k)`.
pub fn circular_shift<T: Clone>(seq: &[T], k: usize) -> Vec<T> {
    if seq.is_empty() {
        return Vec::new();
    }
    let k = k % seq.len();
    seq[k..].iter().chain(&seq[..k]).cloned().collect()
}

/// Observation of agent `agent` (0-based) in the shifted layout: the
/// relative positions of the other agents followed by both bases, shifted by
/// `agent`, then the carry flags of all agents shifted by `agent`.
pub fn encode_shifted(state: &GameState, agent: usize) -> Vec<f64> {
    let p_k = state.positions[agent];
    let mut rel: Vec<Vec2> = (0..state.agents())
        .filter(|&i| i != agent)
        .map(|i| state.positions[i] - p_k)
        .collect();
    rel.push(state.sender() - p_k);
    rel.push(state.receiver() - p_k);
    let flags: Vec<f64> = state.carrying.iter().map(|&b| flag(b)).collect();
    let mut obs = Vec::with_capacity(Encoding::Shifted.len(state.agents()));
    for v in circular_shift(&rel, agent) {
        obs.extend([v.x, v.y]);
    }
    obs.extend(circular_shift(&flags, agent));
    obs
}

pub const MOTION_ACTIONS: usize = 9;
pub const STEER_ACTIONS: usize = 3;

/// Action for motion index `ℓ ∈ 0..9` and steer index `s ∈ 0..3`.
pub fn decode_discrete_action(
    motion: usize,
    steer: usize,
    params: &ScenarioParams,
) -> Result<AgentAction, PolicyError> {
    if motion >= MOTION_ACTIONS || steer >= STEER_ACTIONS {
        return Err(PolicyError::Protocol(format!(
            "discrete action ({motion}, {steer}) out of range"
        )));
    }
    let dp = if motion == 8 {
        Vec2::ZERO
    } else {
        let v = Vec2::from_polar(params.sigma_p, TAU * motion as f64 / 8.0);
        // cos(π/2) and friends come out as ~1e-17
        let snap = |x: f64| if x.abs() < 1e-12 { 0.0 } else { x };
        Vec2::new(snap(v.x), snap(v.y))
    };
    let dphi = (steer as f64 - 1.0) * params.sigma_phi;
    Ok(AgentAction { dp, dphi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionMode {
    Discrete,
    Continuous,
}

impl ActionMode {
    pub fn name(self) -> &'static str {
        match self {
            ActionMode::Discrete => "discrete",
            ActionMode::Continuous => "continuous",
        }
    }
}

impl std::str::FromStr for ActionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "discrete" => Ok(ActionMode::Discrete),
            "continuous" => Ok(ActionMode::Continuous),
            other => Err(format!("unknown action mode '{other}'")),
        }
    }
}

/// Wire reply for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireAction {
    Discrete { motion: usize, steer: usize },
    Continuous { dp: [f64; 2], dphi: f64 },
}

impl WireAction {
    pub fn decode(
        &self,
        mode: ActionMode,
        params: &ScenarioParams,
    ) -> Result<AgentAction, PolicyError> {
        match (self, mode) {
            (WireAction::Discrete { motion, steer }, ActionMode::Discrete) => {
                decode_discrete_action(*motion, *steer, params)
            }
            (WireAction::Continuous { dp, dphi }, ActionMode::Continuous) => {
                Ok(AgentAction::new(Vec2::from(*dp), *dphi))
            }
            _ => Err(PolicyError::Protocol(format!(
                "reply {self:?} does not match action mode {}",
                mode.name()
            ))),
        }
    }
}

/// Per-agent request on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub t: usize,
    pub agent: usize,
    pub obs: Vec<f64>,
}

/// Handshake sent on start-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    #[serde(rename = "type")]
    pub kind: String,
    pub protocol: u32,
    #[serde(rename = "K")]
    pub agents: usize,
    pub directional: bool,
    pub jammed: bool,
    pub encoding: Encoding,
    pub action_mode: ActionMode,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExternalSpec {
    /// Shell command line that starts the policy.
    pub command: String,
    pub encoding: Encoding,
    pub action_mode: ActionMode,
}

/// A policy served by a child process over stdin/stdout.
pub struct ExternalPolicy {
    spec: ExternalSpec,
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    agents: usize,
    params: ScenarioParams,
}

impl ExternalPolicy {
    /// Starts the process and performs the handshake.
    pub fn spawn(
        spec: ExternalSpec,
        agents: usize,
        params: &ScenarioParams,
    ) -> Result<Self, PolicyError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&spec.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        let mut policy = Self {
            spec,
            child,
            stdin,
            stdout,
            agents,
            params: *params,
        };
        let hello = Hello {
            kind: "hello".into(),
            protocol: PROTOCOL_VERSION,
            agents,
            directional: params.directional,
            jammed: params.jammed,
            encoding: policy.spec.encoding,
            action_mode: policy.spec.action_mode,
        };
        policy.send(&serde_json::to_value(&hello).expect("hello serializes"))?;
        let ack = policy.receive()?;
        match ack.get("protocol").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(PROTOCOL_VERSION) => Ok(policy),
            _ => Err(PolicyError::Protocol(format!("bad handshake reply: {ack}"))),
        }
    }

    fn send(&mut self, msg: &serde_json::Value) -> Result<(), PolicyError> {
        let mut line = serde_json::to_string(msg).expect("json value serializes");
        line.push('\n');
        self.stdin.write_all(line.as_bytes())?;
        self.stdin.flush()?;
        Ok(())
    }

    fn receive(&mut self) -> Result<serde_json::Value, PolicyError> {
        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            return Err(PolicyError::Protocol(
                "policy process closed its output".into(),
            ));
        }
        serde_json::from_str(line.trim())
            .map_err(|e| PolicyError::Protocol(format!("malformed reply {:?}: {e}", line.trim())))
    }

    /// One request/reply exchange; `agent` is 0-based.
    pub fn request(
        &mut self,
        t: usize,
        agent: usize,
        obs: Vec<f64>,
    ) -> Result<AgentAction, PolicyError> {
        let req = WireRequest {
            t,
            agent: agent + 1,
            obs,
        };
        self.send(&serde_json::to_value(&req).expect("request serializes"))?;
        let reply = self.receive()?;
        let action: WireAction = serde_json::from_value(reply.clone())
            .map_err(|e| PolicyError::Protocol(format!("unrecognized action {reply}: {e}")))?;
        action.decode(self.spec.action_mode, &self.params)
    }
}

impl Policy for ExternalPolicy {
    fn name(&self) -> String {
        format!("external:{}", self.spec.command)
    }

    fn action_check(&self) -> ActionCheck {
        ActionCheck::Lenient
    }

    fn begin_episode(
        &mut self,
        state: &GameState,
        params: &ScenarioParams,
    ) -> Result<(), PolicyError> {
        if state.agents() != self.agents || params.scenario() != self.params.scenario() {
            return Err(PolicyError::Protocol(
                "episode does not match the handshake".into(),
            ));
        }
        Ok(())
    }

    fn act(
        &mut self,
        t: usize,
        state: &GameState,
        _params: &ScenarioParams,
    ) -> Result<JointAction, PolicyError> {
        let mut actions = Vec::with_capacity(state.agents());
        for k in 0..state.agents() {
            let obs = self.spec.encoding.encode(state, k);
            actions.push(self.request(t, k, obs)?);
        }
        Ok(JointAction { actions })
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        let _ = self.send(&json!({"type": "bye"}));
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::GameState;

    fn state3() -> GameState {
        let mut s = GameState::with_positions(
            4.0,
            vec![
                Vec2::new(1.0, 0.0),
                Vec2::new(1.7, 0.0),
                Vec2::new(1.3, 0.0),
            ],
        );
        s.orientations = vec![0.1, 0.2, 0.3];
        s.carrying = vec![true, false, true];
        s
    }

    #[test]
    fn relative_sorted_layout() {
        let s = state3();
        let o = encode_relative_sorted(&s, 0);
        assert_eq!(o.len(), Encoding::RelativeSorted.len(3));
        assert_eq!(&o[..4], &[-1.0, 0.0, 3.0, 0.0]);
        assert_eq!(o[8], 0.1);
        assert_eq!(o[9], 1.0);
        // agent 2 (distance 0.3) precedes agent 1 (distance 0.7)
        assert!((o[10] - 0.3).abs() < 1e-12);
        assert_eq!(o[12], 0.3);
        assert!((o[14] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn relative_sorted_single_agent() {
        let s = GameState::with_positions(2.0, vec![Vec2::ZERO]);
        let o = encode_relative_sorted(&s, 0);
        assert_eq!(o.len(), 10);
        assert_eq!(&o[..2], &[0.0, 0.0]);
    }

    #[test]
    fn shift_identity_and_inverse() {
        let a = [1, 2, 3, 4, 5];
        assert_eq!(circular_shift(&a, 0), a.to_vec());
        for k in 0..5 {
            assert_eq!(circular_shift(&circular_shift(&a, k), 5 - k), a.to_vec());
        }
    }

    #[test]
    fn shifted_layout_for_second_agent() {
        let s = state3();
        let o = encode_shifted(&s, 1);
        assert_eq!(o.len(), Encoding::Shifted.len(3));
        // sequence (agent 1, agent 3, sender, receiver) relative to agent 2,
        // shifted by one: agent 3 first
        assert!((o[0] - (1.3 - 1.7)).abs() < 1e-12);
        assert_eq!(&o[8..], &[0.0, 1.0, 1.0]);
    }

    #[test]
    fn discrete_examples() {
        let p = ScenarioParams::default();
        let a = decode_discrete_action(0, 1, &p).unwrap();
        assert_eq!(a, AgentAction::new(Vec2::new(0.2, 0.0), 0.0));
        let b = decode_discrete_action(8, 0, &p).unwrap();
        assert_eq!(
            b,
            AgentAction::new(Vec2::ZERO, -std::f64::consts::FRAC_PI_8)
        );
        let c = decode_discrete_action(2, 2, &p).unwrap();
        assert_eq!(c.dp, Vec2::new(0.0, 0.2));
        assert!(decode_discrete_action(9, 0, &p).is_err());
        assert!(decode_discrete_action(0, 3, &p).is_err());
    }

    #[test]
    fn wire_actions_parse() {
        let d: WireAction = serde_json::from_str(r#"{"motion":3,"steer":2}"#).unwrap();
        assert_eq!(
            d,
            WireAction::Discrete {
                motion: 3,
                steer: 2
            }
        );
        let c: WireAction = serde_json::from_str(r#"{"dp":[0.1,0.2],"dphi":-0.3}"#).unwrap();
        assert_eq!(
            c,
            WireAction::Continuous {
                dp: [0.1, 0.2],
                dphi: -0.3
            }
        );
        let p = ScenarioParams::default();
        assert!(d.decode(ActionMode::Continuous, &p).is_err());
    }
}
