//! The deterministic relay game: scenario constants, state, scene sampling,
//! the transition function with message propagation, and the shared reward.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_8, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::comms::{meets_threshold, sinr, AntennaModel, Link};
use crate::geometry::{sample_disk, wrap_positive, Capsule, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("agent count must be at least 1")]
    NoAgents,
    #[error("expected {expected} agent actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
    #[error("action of agent {agent} out of bounds: {reason}")]
    ActionOutOfBounds { agent: usize, reason: String },
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("unknown scenario '{0}' (expected iso-nojam, iso-jam, dir-nojam or dir-jam)")]
    UnknownScenario(String),
}

/// The four evaluated cells: isotropic/directional transmit antennas, with
/// or without a jammer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scenario {
    IsoNoJam,
    IsoJam,
    DirNoJam,
    DirJam,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::IsoNoJam,
        Scenario::IsoJam,
        Scenario::DirNoJam,
        Scenario::DirJam,
    ];

    pub fn new(directional: bool, jammed: bool) -> Self {
        match (directional, jammed) {
            (false, false) => Scenario::IsoNoJam,
            (false, true) => Scenario::IsoJam,
            (true, false) => Scenario::DirNoJam,
            (true, true) => Scenario::DirJam,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::IsoNoJam => "iso-nojam",
            Scenario::IsoJam => "iso-jam",
            Scenario::DirNoJam => "dir-nojam",
            Scenario::DirJam => "dir-jam",
        }
    }

    pub fn directional(self) -> bool {
        matches!(self, Scenario::DirNoJam | Scenario::DirJam)
    }

    pub fn jammed(self) -> bool {
        matches!(self, Scenario::IsoJam | Scenario::DirJam)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| GameError::UnknownScenario(s.to_string()))
    }
}

impl TryFrom<String> for Scenario {
    type Error = GameError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> Self {
        s.name().to_string()
    }
}

/// Game constants and scenario flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub r_com: f64,
    pub sinr_threshold: f64,
    pub sigma_p: f64,
    pub sigma_phi: f64,
    pub sigma_j: f64,
    pub gamma: f64,
    pub c_pos: f64,
    pub c_phi: f64,
    pub directional: bool,
    pub jammed: bool,
    /// Transmit array size used when `directional` is set.
    #[serde(default = "default_elements")]
    pub elements: usize,
}

fn default_elements() -> usize {
    2
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            r_com: 1.0,
            sinr_threshold: 1.0,
            sigma_p: 0.2,
            sigma_phi: FRAC_PI_8,
            sigma_j: 0.1,
            gamma: 0.99,
            c_pos: 0.5,
            c_phi: 0.1,
            directional: false,
            jammed: false,
            elements: 2,
        }
    }
}

/// Jamming coefficient of a present jammer.
pub const JAMMER_STRENGTH: f64 = 3.0;

impl ScenarioParams {
    pub fn for_scenario(scenario: Scenario) -> Self {
        Self {
            directional: scenario.directional(),
            jammed: scenario.jammed(),
            ..Self::default()
        }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario::new(self.directional, self.jammed)
    }

    /// Same constants with isotropic antennas and no jammer.
    pub fn without_scenario_effects(&self) -> Self {
        Self {
            directional: false,
            jammed: false,
            ..*self
        }
    }

    pub fn c_dir(&self) -> f64 {
        if self.directional {
            1.0
        } else {
            0.0
        }
    }

    pub fn c_jam(&self) -> f64 {
        if self.jammed {
            JAMMER_STRENGTH
        } else {
            0.0
        }
    }

    /// Transmit antenna of every agent.
    pub fn agent_antenna(&self) -> AntennaModel {
        AntennaModel {
            c_dir: self.c_dir(),
            elements: self.elements,
        }
    }

    pub fn r_min(&self, agents: usize) -> f64 {
        agents as f64 * self.r_com
    }

    pub fn r_max(&self, agents: usize) -> f64 {
        (agents as f64 + 4.0) * self.r_com
    }

    /// Jammer roaming region for base separation `base_distance`.
    pub fn capsule(&self, base_distance: f64) -> Capsule {
        Capsule::new(Vec2::ZERO, Vec2::new(base_distance, 0.0), 1.5 * self.r_com)
    }

    pub fn validate(&self) -> Result<(), GameError> {
        let bad = |msg: &str| Err(GameError::InvalidParams(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.c_pos) || !(0.0..1.0).contains(&self.c_phi) {
            return bad("c_pos and c_phi must lie in [0, 1)");
        }
        if !(self.sigma_p > 0.0 && self.sigma_phi > 0.0 && self.sigma_j > 0.0) {
            return bad("sigma_p, sigma_phi and sigma_j must be positive");
        }
        if !(self.r_com > 0.0 && self.sinr_threshold > 0.0) {
            return bad("r_com and sinr_threshold must be positive");
        }
        if self.elements < 2 {
            return bad("antenna needs at least 2 elements");
        }
        Ok(())
    }
}

/// Termination variable: 0 before delivery, 1 on the delivery step, 2 after.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Phase {
    Active,
    Delivered,
    Terminated,
}

impl From<Phase> for u8 {
    fn from(p: Phase) -> u8 {
        match p {
            Phase::Active => 0,
            Phase::Delivered => 1,
            Phase::Terminated => 2,
        }
    }
}

impl TryFrom<u8> for Phase {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, String> {
        match v {
            0 => Ok(Phase::Active),
            1 => Ok(Phase::Delivered),
            2 => Ok(Phase::Terminated),
            other => Err(format!(
                "termination variable must be 0, 1 or 2, got {other}"
            )),
        }
    }
}

/// Perfect-information game state. The bases sit at `(0, 0)` and
/// `(base_distance, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameState {
    pub positions: Vec<Vec2>,
    pub orientations: Vec<f64>,
    pub carrying: Vec<bool>,
    pub jammer: Vec2,
    pub jammer_step: Vec2,
    pub base_distance: f64,
    pub phase: Phase,
}

impl GameState {
    /// Agents at the given positions, boresight 0, nobody carrying, no jammer.
    pub fn with_positions(base_distance: f64, positions: Vec<Vec2>) -> Self {
        let k = positions.len();
        Self {
            positions,
            orientations: vec![0.0; k],
            carrying: vec![false; k],
            jammer: Vec2::ZERO,
            jammer_step: Vec2::ZERO,
            base_distance,
            phase: Phase::Active,
        }
    }

    pub fn agents(&self) -> usize {
        self.positions.len()
    }

    pub fn sender(&self) -> Vec2 {
        Vec2::ZERO
    }

    pub fn receiver(&self) -> Vec2 {
        Vec2::new(self.base_distance, 0.0)
    }

    pub fn midpoint(&self) -> Vec2 {
        Vec2::new(0.5 * self.base_distance, 0.0)
    }
}

/// Positional and orientation displacement of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentAction {
    pub dp: Vec2,
    pub dphi: f64,
}

impl AgentAction {
    pub const STILL: AgentAction = AgentAction {
        dp: Vec2::ZERO,
        dphi: 0.0,
    };

    pub fn new(dp: Vec2, dphi: f64) -> Self {
        Self { dp, dphi }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JointAction {
    pub actions: Vec<AgentAction>,
}

impl JointAction {
    pub fn still(agents: usize) -> Self {
        Self {
            actions: vec![AgentAction::STILL; agents],
        }
    }
}

/// How out-of-bounds actions are treated by [`step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionCheck {
    /// Reject with [`GameError::ActionOutOfBounds`].
    Strict,
    /// Scale `dp` back to `sigma_p` and clamp `dphi`.
    Lenient,
}

/// Relative slack admitted on the action bounds for rounding in `σ·(cos, sin)`.
const ACTION_TOLERANCE: f64 = 1e-12;

/// Terminal reward `budget(R, 1; K)` paid once on the step taken from `w = 1`.
pub trait TerminalBudget: Sync {
    fn terminal_reward(&self, base_distance: f64) -> f64;
}

/// A constant terminal reward, independent of `R`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedBudget(pub f64);

impl TerminalBudget for FixedBudget {
    fn terminal_reward(&self, _base_distance: f64) -> f64 {
        self.0
    }
}

/// Draws an initial state: `R ~ U[K r_com, (K+4) r_com]`, agents uniform on
/// the disk of radius `0.6 R` around the base midpoint, uniform boresights,
/// and in jammed scenes a jammer uniform on the capsule heading into the
/// half-plane facing the midpoint.
pub fn sample_initial_state<R: Rng + ?Sized>(
    params: &ScenarioParams,
    agents: usize,
    rng: &mut R,
) -> Result<GameState, GameError> {
    if agents == 0 {
        return Err(GameError::NoAgents);
    }
    let (lo, hi) = (params.r_min(agents), params.r_max(agents));
    let base_distance = lo + (hi - lo) * rng.random::<f64>();
    let center = Vec2::new(0.5 * base_distance, 0.0);
    let positions: Vec<Vec2> = (0..agents)
        .map(|_| sample_disk(rng, center, 0.6 * base_distance))
        .collect();
    let orientations = (0..agents).map(|_| TAU * rng.random::<f64>()).collect();

    let (jammer, jammer_step) = if params.jammed {
        let p_j = params.capsule(base_distance).sample(rng);
        let toward = match (center - p_j).normalized() {
            Some(dir) => dir.angle(),
            None => TAU * rng.random::<f64>(),
        };
        let heading = toward - FRAC_PI_2 + std::f64::consts::PI * rng.random::<f64>();
        (p_j, Vec2::from_polar(params.sigma_j, heading))
    } else {
        (Vec2::ZERO, Vec2::ZERO)
    };

    Ok(GameState {
        positions,
        orientations,
        carrying: vec![false; agents],
        jammer,
        jammer_step,
        base_distance,
        phase: Phase::Active,
    })
}

/// Applies message propagation to a freshly sampled state, so that agents
/// already in range of the sender start as carriers. A state delivered at
/// this point enters [`Phase::Delivered`] with delivery time 0.
pub fn settle_initial_state(state: &mut GameState, params: &ScenarioParams) {
    if state.phase != Phase::Active {
        return;
    }
    let prop = message_propagation(state, params);
    state.carrying = prop.carrying;
    if prop.delivered {
        state.phase = Phase::Delivered;
    }
}

/// Result of running message transfers to a fixpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Propagation {
    pub carrying: Vec<bool>,
    pub delivered: bool,
    pub passes: usize,
}

pub fn message_propagation(state: &GameState, params: &ScenarioParams) -> Propagation {
    let order: Vec<usize> = (0..state.agents()).collect();
    message_propagation_ordered(state, params, &order)
}

/// Message propagation sweeping the agents in `order`. Every order reaches
/// the same fixpoint; the order-free entry point is [`message_propagation`].
pub fn message_propagation_ordered(
    state: &GameState,
    params: &ScenarioParams,
    order: &[usize],
) -> Propagation {
    let env = LinkEnv::new(state, params);
    let mut carrying = state.carrying.clone();
    let mut passes = 0;
    loop {
        passes += 1;
        let mut changed = false;
        for &k in order {
            if !carrying[k] && env.base_reaches(state.positions[k]) {
                carrying[k] = true;
                changed = true;
            }
        }
        for &from in order {
            if !carrying[from] {
                continue;
            }
            for &to in order {
                if !carrying[to] && env.agent_reaches(state, from, state.positions[to]) {
                    carrying[to] = true;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let receiver = state.receiver();
    let delivered = env.base_reaches(receiver)
        || (0..state.agents()).any(|k| carrying[k] && env.agent_reaches(state, k, receiver));
    Propagation {
        carrying,
        delivered,
        passes,
    }
}

/// Shared link context of one propagation sweep.
struct LinkEnv<'a> {
    params: &'a ScenarioParams,
    jammer: Option<Vec2>,
    antenna: AntennaModel,
}

impl<'a> LinkEnv<'a> {
    fn new(state: &GameState, params: &'a ScenarioParams) -> Self {
        Self {
            params,
            jammer: params.jammed.then_some(state.jammer),
            antenna: params.agent_antenna(),
        }
    }

    fn base_reaches(&self, to: Vec2) -> bool {
        self.link_ok(Vec2::ZERO, 0.0, AntennaModel::ISOTROPIC, to)
    }

    fn agent_reaches(&self, state: &GameState, from: usize, to: Vec2) -> bool {
        self.link_ok(
            state.positions[from],
            state.orientations[from],
            self.antenna,
            to,
        )
    }

    fn link_ok(&self, p_t: Vec2, phi: f64, antenna: AntennaModel, p_r: Vec2) -> bool {
        if p_t == p_r {
            // co-located: unbounded SINR unless the jammer sits on the receiver
            return self.jammer.is_none_or(|p_j| p_j != p_r);
        }
        let link = Link {
            p_t,
            p_r,
            phi,
            jammer: self.jammer,
            c_jam: self.params.c_jam(),
            antenna,
        };
        sinr(&link).is_ok_and(|s| meets_threshold(s.value, self.params.sinr_threshold))
    }
}

/// Outcome of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: GameState,
    pub reward: f64,
    /// `Σ_k ‖δp_k‖` actually applied.
    pub distance: f64,
    /// `Σ_k ‖δp_k‖²` actually applied.
    pub motion_sq: f64,
    /// Number of agent actions modified by lenient clipping.
    pub clipped: usize,
}

/// One step of the game: move and rotate agents, propagate the message to a
/// fixpoint, advance the jammer, update the termination variable and pay
/// the shared reward. Motion is suppressed once `w ≥ 1`.
pub fn step(
    state: &GameState,
    joint: &JointAction,
    params: &ScenarioParams,
    budget: &dyn TerminalBudget,
    check: ActionCheck,
) -> Result<Transition, GameError> {
    let k = state.agents();
    if joint.actions.len() != k {
        return Err(GameError::WrongActionCount {
            expected: k,
            got: joint.actions.len(),
        });
    }
    match state.phase {
        Phase::Terminated => {
            return Ok(Transition {
                state: state.clone(),
                reward: 0.0,
                distance: 0.0,
                motion_sq: 0.0,
                clipped: 0,
            })
        }
        Phase::Delivered => {
            let mut next = state.clone();
            next.phase = Phase::Terminated;
            return Ok(Transition {
                state: next,
                reward: budget.terminal_reward(state.base_distance),
                distance: 0.0,
                motion_sq: 0.0,
                clipped: 0,
            });
        }
        Phase::Active => {}
    }

    let mut clipped = 0;
    let mut actions = Vec::with_capacity(k);
    for (agent, a) in joint.actions.iter().enumerate() {
        let (checked, was_clipped) = check_action(agent, a, params, check)?;
        clipped += usize::from(was_clipped);
        actions.push(checked);
    }

    let mut next = state.clone();
    let mut distance = 0.0;
    let mut motion_sq = 0.0;
    let mut steering_sq = 0.0;
    for (i, a) in actions.iter().enumerate() {
        next.positions[i] += a.dp;
        next.orientations[i] = wrap_positive(next.orientations[i] + a.dphi);
        let sq = a.dp.norm_sq();
        motion_sq += sq;
        distance += sq.sqrt();
        steering_sq += a.dphi * a.dphi;
    }

    let prop = message_propagation(&next, params);
    next.carrying = prop.carrying;
    if prop.delivered {
        next.phase = Phase::Delivered;
    }

    if params.jammed {
        next.jammer += next.jammer_step;
        if !params.capsule(next.base_distance).contains(next.jammer) {
            next.jammer_step = -next.jammer_step;
        }
    }

    let reward = -params.c_pos * motion_sq - params.c_phi * steering_sq;
    Ok(Transition {
        state: next,
        reward,
        distance,
        motion_sq,
        clipped,
    })
}

fn check_action(
    agent: usize,
    a: &AgentAction,
    params: &ScenarioParams,
    check: ActionCheck,
) -> Result<(AgentAction, bool), GameError> {
    let dp_limit = params.sigma_p * (1.0 + ACTION_TOLERANCE);
    let dphi_limit = params.sigma_phi * (1.0 + ACTION_TOLERANCE);
    let finite = a.dp.is_finite() && a.dphi.is_finite();
    let norm = a.dp.norm();
    let in_bounds = finite && norm <= dp_limit && a.dphi.abs() <= dphi_limit;
    if in_bounds {
        return Ok((*a, false));
    }
    match check {
        ActionCheck::Strict => {
            let reason = if !finite {
                "non-finite component".to_string()
            } else if norm > dp_limit {
                format!("|dp| = {norm} exceeds sigma_p = {}", params.sigma_p)
            } else {
                format!(
                    "|dphi| = {} exceeds sigma_phi = {}",
                    a.dphi.abs(),
                    params.sigma_phi
                )
            };
            Err(GameError::ActionOutOfBounds { agent, reason })
        }
        ActionCheck::Lenient => {
            let dp = if !a.dp.is_finite() {
                Vec2::ZERO
            } else if norm > params.sigma_p {
                a.dp * (params.sigma_p / norm)
            } else {
                a.dp
            };
            let dphi = if a.dphi.is_finite() {
                a.dphi.clamp(-params.sigma_phi, params.sigma_phi)
            } else {
                0.0
            };
            Ok((AgentAction { dp, dphi }, true))
        }
    }
}

/// Episode horizon `⌈c_time ((1.1 R_max + 2 r_com)/σ_p + K)⌉`.
pub fn t_max(agents: usize, params: &ScenarioParams, c_time: f64) -> usize {
    let raw = c_time
        * ((1.1 * params.r_max(agents) + 2.0 * params.r_com) / params.sigma_p + agents as f64);
    // absorb representation error so exact integers are not bumped up
    (raw - 1e-9).ceil().max(0.0) as usize
}

/// Discounted return `Σ_t γ^t r_t` of a reward sequence starting at `t = 0`.
pub fn rollout_value(rewards: &[f64], gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut value = 0.0;
    for r in rewards {
        value += discount * r;
        discount *= gamma;
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iso() -> ScenarioParams {
        ScenarioParams::default()
    }

    #[test]
    fn t_max_examples() {
        let p = iso();
        assert_eq!(t_max(1, &p, 1.0), 39);
        assert_eq!(t_max(1, &p, 1.5), 58);
        assert_eq!(t_max(3, &p, 1.0), 52);
    }

    #[test]
    fn sampling_respects_regions() {
        let p = ScenarioParams::for_scenario(Scenario::IsoJam);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let s = sample_initial_state(&p, 3, &mut rng).unwrap();
            assert!((3.0..=7.0).contains(&s.base_distance));
            let c = s.midpoint();
            for q in &s.positions {
                assert!(q.distance(c) <= 0.6 * s.base_distance);
            }
            assert!(s.orientations.iter().all(|o| (0.0..TAU).contains(o)));
            assert!(s.carrying.iter().all(|b| !b));
            assert_eq!(s.phase, Phase::Active);
            assert!(p.capsule(s.base_distance).contains(s.jammer));
            assert!((s.jammer_step.norm() - 0.1).abs() < 1e-12);
            assert!(s.jammer_step.dot(c - s.jammer) >= 0.0);
        }
    }

    #[test]
    fn unjammed_state_has_placeholder_jammer() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample_initial_state(&iso(), 2, &mut rng).unwrap();
        assert_eq!(s.jammer, Vec2::ZERO);
        assert_eq!(s.jammer_step, Vec2::ZERO);
    }

    #[test]
    fn zero_agents_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(
            sample_initial_state(&iso(), 0, &mut rng),
            Err(GameError::NoAgents)
        );
    }

    #[test]
    fn sender_reaches_nearby_agent() {
        let s = GameState::with_positions(3.0, vec![Vec2::new(0.5, 0.0)]);
        let prop = message_propagation(&s, &iso());
        assert_eq!(prop.carrying, vec![true]);
        assert!(!prop.delivered);
    }

    #[test]
    fn static_chain_delivers_in_one_sweep() {
        let s = GameState::with_positions(2.0, vec![Vec2::new(0.5, 0.0), Vec2::new(1.5, 0.0)]);
        let prop = message_propagation(&s, &iso());
        assert_eq!(prop.carrying, vec![true, true]);
        assert!(prop.delivered);
        assert!(prop.passes <= s.agents() + 1);
    }

    #[test]
    fn carrier_at_range_hands_over() {
        let mut s = GameState::with_positions(6.0, vec![Vec2::new(2.0, 0.0), Vec2::new(3.0, 0.0)]);
        s.carrying[0] = true;
        let prop = message_propagation(&s, &iso());
        assert_eq!(prop.carrying, vec![true, true]);
        assert!(!prop.delivered);
    }

    #[test]
    fn directional_carrier_must_face_receiver() {
        let p = ScenarioParams::for_scenario(Scenario::DirNoJam);
        let mut s = GameState::with_positions(6.0, vec![Vec2::new(2.0, 0.0), Vec2::new(3.3, 0.0)]);
        s.carrying[0] = true;
        s.orientations[0] = std::f64::consts::PI;
        assert_eq!(message_propagation(&s, &p).carrying, vec![true, false]);
        s.orientations[0] = 0.0;
        assert_eq!(message_propagation(&s, &p).carrying, vec![true, true]);
    }

    #[test]
    fn no_carrier_near_receiver_means_no_delivery() {
        let mut s = GameState::with_positions(5.0, vec![Vec2::new(2.0, 0.0)]);
        s.carrying[0] = true;
        assert!(!message_propagation(&s, &iso()).delivered);
    }

    #[test]
    fn terminated_state_is_fixed_point() {
        let mut s = GameState::with_positions(5.0, vec![Vec2::new(2.0, 0.0)]);
        s.phase = Phase::Terminated;
        let joint = JointAction {
            actions: vec![AgentAction::new(Vec2::new(0.1, 0.0), 0.1)],
        };
        let tr = step(&s, &joint, &iso(), &FixedBudget(3.0), ActionCheck::Strict).unwrap();
        assert_eq!(tr.state, s);
        assert_eq!(tr.reward, 0.0);
    }

    #[test]
    fn delivered_state_pays_budget_once_without_motion() {
        let mut s = GameState::with_positions(5.0, vec![Vec2::new(4.5, 0.0)]);
        s.carrying[0] = true;
        s.phase = Phase::Delivered;
        let joint = JointAction {
            actions: vec![AgentAction::new(Vec2::new(0.2, 0.0), 0.0)],
        };
        let tr = step(&s, &joint, &iso(), &FixedBudget(1.25), ActionCheck::Strict).unwrap();
        assert_eq!(tr.reward, 1.25);
        assert_eq!(tr.state.phase, Phase::Terminated);
        assert_eq!(tr.state.positions, s.positions);
        let tr2 = step(
            &tr.state,
            &joint,
            &iso(),
            &FixedBudget(1.25),
            ActionCheck::Strict,
        )
        .unwrap();
        assert_eq!(tr2.reward, 0.0);
    }

    #[test]
    fn reward_is_negative_cost_before_delivery() {
        let s = GameState::with_positions(5.0, vec![Vec2::new(2.5, 2.0), Vec2::new(2.5, -2.0)]);
        let joint = JointAction {
            actions: vec![
                AgentAction::new(Vec2::new(0.2, 0.0), 0.1),
                AgentAction::new(Vec2::new(0.0, -0.1), 0.0),
            ],
        };
        let tr = step(&s, &joint, &iso(), &FixedBudget(9.0), ActionCheck::Strict).unwrap();
        let expected = -0.5 * (0.04 + 0.01) - 0.1 * 0.01;
        assert!((tr.reward - expected).abs() < 1e-15);
        assert!((tr.distance - 0.3).abs() < 1e-15);
    }

    #[test]
    fn strict_mode_names_offending_agent() {
        let s = GameState::with_positions(5.0, vec![Vec2::new(2.5, 2.0); 2]);
        let joint = JointAction {
            actions: vec![
                AgentAction::STILL,
                AgentAction::new(Vec2::new(0.3, 0.0), 0.0),
            ],
        };
        match step(&s, &joint, &iso(), &FixedBudget(0.0), ActionCheck::Strict) {
            Err(GameError::ActionOutOfBounds { agent, .. }) => assert_eq!(agent, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lenient_mode_clips() {
        let s = GameState::with_positions(5.0, vec![Vec2::new(2.5, 2.0)]);
        let joint = JointAction {
            actions: vec![AgentAction::new(Vec2::new(0.3, 0.4), -1.0)],
        };
        let tr = step(&s, &joint, &iso(), &FixedBudget(0.0), ActionCheck::Lenient).unwrap();
        assert_eq!(tr.clipped, 1);
        assert!((tr.distance - 0.2).abs() < 1e-15);
        let turned = tr.state.orientations[0];
        assert!((turned - (TAU - FRAC_PI_8)).abs() < 1e-12);
    }

    #[test]
    fn wrong_action_count_rejected() {
        let s = GameState::with_positions(5.0, vec![Vec2::new(2.5, 2.0)]);
        assert!(matches!(
            step(
                &s,
                &JointAction::still(2),
                &iso(),
                &FixedBudget(0.0),
                ActionCheck::Strict
            ),
            Err(GameError::WrongActionCount {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn jammer_turns_back_at_capsule_boundary() {
        let p = ScenarioParams::for_scenario(Scenario::IsoJam);
        let mut s = GameState::with_positions(4.0, vec![Vec2::new(2.0, 3.0)]);
        s.jammer = Vec2::new(2.0, 1.45);
        s.jammer_step = Vec2::new(0.0, 0.1);
        let tr = step(
            &s,
            &JointAction::still(1),
            &p,
            &FixedBudget(0.0),
            ActionCheck::Strict,
        )
        .unwrap();
        assert!((tr.state.jammer.y - 1.55).abs() < 1e-12);
        assert_eq!(tr.state.jammer_step, Vec2::new(0.0, -0.1));
        let tr2 = step(
            &tr.state,
            &JointAction::still(1),
            &p,
            &FixedBudget(0.0),
            ActionCheck::Strict,
        )
        .unwrap();
        assert!((tr2.state.jammer.y - 1.45).abs() < 1e-12);
        assert_eq!(tr2.state.jammer_step, Vec2::new(0.0, -0.1));
    }

    #[test]
    fn rollout_value_examples() {
        assert_eq!(rollout_value(&[0.0; 10], 0.99), 0.0);
        assert_eq!(rollout_value(&[-0.02, 0.0, 0.0], 0.99), -0.02);
        assert!((rollout_value(&[1.0, 1.0], 0.5) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        assert!("iso".parse::<Scenario>().is_err());
    }

    #[test]
    fn params_validation() {
        assert!(iso().validate().is_ok());
        let bad = ScenarioParams {
            gamma: 1.0,
            ..iso()
        };
        assert!(bad.validate().is_err());
    }
}
