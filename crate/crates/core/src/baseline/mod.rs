//! Handcrafted relay planner and its waypoint controller.

mod controller;
mod frame;
mod graph;
mod repulsion;

pub use controller::act;
pub use frame::{
    lambda_solve, relay_residual, retrieval_point, CandidateFrame, FrameEntry, FrameError,
};
pub use graph::{build_graph, shortest_path, shortest_relay, Node, RelayGraph, RelayPath};
pub use repulsion::{repulsion, RepulsionOptions, RepulsionReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameState, ScenarioParams};
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("cannot plan without participating agents")]
    NoAgents,
    #[error("agent {0} is not part of the state")]
    UnknownAgent(usize),
    #[error("plan covers {plan} agents but the state has {state}")]
    AgentMismatch { plan: usize, state: usize },
    #[error("no baseline plan for this episode")]
    MissingPlan,
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerOptions {
    /// Relative shrink of the communication range at which carriers stop
    /// short of a handover target, so that the link survives rounding.
    pub margin: f64,
    pub second_pass: bool,
    pub repulsion: Option<RepulsionOptions>,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        Self {
            margin: 1e-9,
            second_pass: true,
            repulsion: Some(RepulsionOptions::default()),
        }
    }
}

/// Which refinement produced the final chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStage {
    FirstPass,
    SecondPass,
    PrunedRepulsion,
    FullRepulsion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayPlan {
    pub agents: usize,
    pub retriever: usize,
    /// Relay order, retriever first.
    pub chain: Vec<usize>,
    /// Relay point of each chain agent, aligned with `chain`.
    pub waypoints: Vec<Vec2>,
    pub passive: Vec<usize>,
    pub total_carry_distance: f64,
    pub stage: PlanStage,
    pub margin: f64,
}

/// Plans with every agent and the default options.
pub fn plan(state: &GameState, params: &ScenarioParams) -> Result<RelayPlan, PlanError> {
    let members: Vec<usize> = (0..state.agents()).collect();
    plan_with(state, params, &members, &PlannerOptions::default())
}

struct Candidate {
    frame: CandidateFrame,
    path: RelayPath,
    stage: PlanStage,
}

impl Candidate {
    fn solve(frame: CandidateFrame, p_r: Vec2, stage: PlanStage) -> Self {
        let graph = build_graph(&frame, p_r);
        let path = shortest_relay(&graph).expect("k -> t -> r always exists");
        Self { frame, path, stage }
    }
}

/// Plans using only `members`; every other agent is passive.
pub fn plan_with(
    state: &GameState,
    params: &ScenarioParams,
    members: &[usize],
    options: &PlannerOptions,
) -> Result<RelayPlan, PlanError> {
    if members.is_empty() {
        return Err(PlanError::NoAgents);
    }
    if let Some(&bad) = members.iter().find(|&&i| i >= state.agents()) {
        return Err(PlanError::UnknownAgent(bad));
    }
    let mut members = members.to_vec();
    members.sort_unstable();
    members.dedup();

    let r = params.r_com;
    let (p_t, p_r) = (state.sender(), state.receiver());
    let build =
        |set: &[usize], k: usize| CandidateFrame::build(&state.positions, set, k, p_t, p_r, r);

    let mut best: Option<Candidate> = None;
    for &k in &members {
        let c = Candidate::solve(build(&members, k)?, p_r, PlanStage::FirstPass);
        if best.as_ref().is_none_or(|b| c.path.cost < b.path.cost) {
            best = Some(c);
        }
    }
    let first = best.expect("non-empty member set");
    let k_star = first.frame.retriever;

    let mut candidates = Vec::with_capacity(3);
    let pruned = if options.second_pass {
        let chain = first.path.agents();
        let second = Candidate::solve(build(&chain, k_star)?, p_r, PlanStage::SecondPass);
        Some(second)
    } else {
        None
    };
    if let Some(rep) = &options.repulsion {
        if let Some(second) = &pruned {
            let mut frame = second.frame.clone();
            repulsion(&mut frame, rep);
            candidates.push(Candidate::solve(frame, p_r, PlanStage::PrunedRepulsion));
        }
        let mut frame = first.frame.clone();
        repulsion(&mut frame, rep);
        candidates.push(Candidate::solve(frame, p_r, PlanStage::FullRepulsion));
    }
    let mut chosen = match pruned {
        Some(second) if second.path.cost <= first.path.cost => second,
        _ => first,
    };
    for c in candidates {
        if c.path.cost < chosen.path.cost {
            chosen = c;
        }
    }

    let chain = chosen.path.agents();
    let waypoints = chain
        .iter()
        .map(|&i| {
            chosen
                .frame
                .entry(i)
                .expect("path agents belong to the frame")
                .relay_point
        })
        .collect();
    let passive = (0..state.agents()).filter(|i| !chain.contains(i)).collect();
    Ok(RelayPlan {
        agents: state.agents(),
        retriever: k_star,
        chain,
        waypoints,
        passive,
        total_carry_distance: chosen.path.cost,
        stage: chosen.stage,
        margin: options.margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_agent_plan() {
        let s = GameState::with_positions(3.0, vec![Vec2::new(2.0, 1.0)]);
        let p = plan(&s, &ScenarioParams::default()).unwrap();
        assert_eq!(p.chain, vec![0]);
        assert!((p.waypoints[0].norm() - 1.0).abs() < 1e-8);
        assert!(p.passive.is_empty());
    }

    #[test]
    fn static_chain_has_zero_cost() {
        let s = GameState::with_positions(2.0, vec![Vec2::new(0.5, 0.0), Vec2::new(1.5, 0.0)]);
        let p = plan(&s, &ScenarioParams::default()).unwrap();
        assert_eq!(p.total_carry_distance, 0.0);
        assert_eq!(p.chain.len(), 2);
        assert_eq!(p.chain[0], 0);
    }

    #[test]
    fn planning_is_pure() {
        let s = GameState::with_positions(
            6.0,
            vec![
                Vec2::new(1.0, 2.0),
                Vec2::new(4.0, -1.0),
                Vec2::new(3.0, 0.5),
            ],
        );
        let params = ScenarioParams::default();
        assert_eq!(plan(&s, &params).unwrap(), plan(&s, &params).unwrap());
    }

    #[test]
    fn empty_member_set_rejected() {
        let s = GameState::with_positions(3.0, vec![Vec2::new(2.0, 1.0)]);
        let r = plan_with(
            &s,
            &ScenarioParams::default(),
            &[],
            &PlannerOptions::default(),
        );
        assert_eq!(r, Err(PlanError::NoAgents));
    }
}
