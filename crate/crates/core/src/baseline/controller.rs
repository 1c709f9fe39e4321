//! Open-loop waypoint following for a fixed relay plan.

use super::{PlanError, RelayPlan};
use crate::game::{AgentAction, GameState, JointAction, ScenarioParams};
use crate::geometry::{wrap_signed, Vec2};

/// Distances below this count as "at the point".
const ARRIVED: f64 = 1e-12;

/// Relative overshoot of `sigma_p` accepted to land exactly on a target
/// that is a full step away up to rounding.
const STEP_SLACK: f64 = 1e-13;

fn move_towards(p: Vec2, target: Vec2, max_step: f64) -> Vec2 {
    let delta = target - p;
    if delta.norm() <= max_step * (1.0 + STEP_SLACK) {
        delta
    } else {
        p.step_towards(target, max_step)
    }
}

/// Joint action of the baseline at `state`.
///
/// Chain agents head for their waypoint until they hold the message, then
/// carry it towards the next waypoint (or the receiver). Without a jammer a
/// carrier stops just inside communication range of that point; with a
/// jammer it keeps going until the successor holds the message, and the
/// retriever heads straight for the sender. An agent idles once any later
/// chain member carries. Directional agents hold their boresight until the
/// remaining steps to their next transmission no longer exceed the rotation
/// steps needed, then turn towards the link target.
pub fn act(
    state: &GameState,
    plan: &RelayPlan,
    params: &ScenarioParams,
) -> Result<JointAction, PlanError> {
    let k = state.agents();
    if plan.agents != k || plan.chain.iter().any(|&i| i >= k) {
        return Err(PlanError::AgentMismatch {
            plan: plan.agents,
            state: k,
        });
    }
    let mut joint = JointAction::still(k);
    let last_carrier = plan.chain.iter().rposition(|&i| state.carrying[i]);
    let handover = params.r_com * (1.0 - plan.margin);
    let sigma = params.sigma_p;

    for (j, &agent) in plan.chain.iter().enumerate() {
        if last_carrier.is_some_and(|lc| lc > j) {
            continue;
        }
        let p = state.positions[agent];
        let waypoint = plan.waypoints[j];
        let successor = plan.chain.get(j + 1).copied();
        let next_waypoint = match successor {
            Some(_) => plan.waypoints[j + 1],
            None => state.receiver(),
        };
        let carrying = state.carrying[agent];

        let dp = if !carrying {
            let target = if j == 0 && (params.jammed || p.distance(waypoint) <= ARRIVED) {
                state.sender()
            } else {
                waypoint
            };
            move_towards(p, target, sigma)
        } else if params.jammed {
            let target = match successor {
                Some(s) if p.distance(next_waypoint) <= ARRIVED => state.positions[s],
                _ => next_waypoint,
            };
            move_towards(p, target, sigma)
        } else {
            let dist = p.distance(next_waypoint);
            if dist <= handover {
                Vec2::ZERO
            } else if dist - handover <= sigma * (1.0 + STEP_SLACK) {
                let stop = next_waypoint + (p - next_waypoint) * (handover / dist);
                stop - p
            } else {
                p.step_towards(next_waypoint, sigma)
            }
        };

        let dphi = if params.directional {
            let link_target = match successor {
                Some(s) if params.jammed && carrying && p.distance(next_waypoint) <= ARRIVED => {
                    state.positions[s]
                }
                _ => next_waypoint,
            };
            let after = p + dp;
            let (origin, distance) = if carrying {
                (after, (after.distance(link_target) - handover).max(0.0))
            } else {
                (
                    waypoint,
                    after.distance(waypoint) + (waypoint.distance(link_target) - handover).max(0.0),
                )
            };
            steer(
                state.orientations[agent],
                origin,
                link_target,
                distance,
                params,
            )
        } else {
            0.0
        };

        joint.actions[agent] = AgentAction { dp, dphi };
    }
    Ok(joint)
}

/// Rotation for this step given the link geometry. `distance` is the travel
/// left after this step before the agent transmits.
fn steer(phi: f64, origin: Vec2, target: Vec2, distance: f64, params: &ScenarioParams) -> f64 {
    let delta = target - origin;
    if delta.norm() <= ARRIVED {
        return 0.0;
    }
    let turn = wrap_signed(delta.angle() - phi);
    if turn == 0.0 {
        return 0.0;
    }
    let rotation_steps = (turn.abs() / params.sigma_phi - 1e-9).ceil();
    let transmit_steps = 1.0 + (distance / params.sigma_p - 1e-9).ceil().max(0.0);
    if rotation_steps >= transmit_steps {
        turn.clamp(-params.sigma_phi, params.sigma_phi)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baseline::plan;
    use crate::game::{Scenario, ScenarioParams};

    #[test]
    fn passive_agents_stand_still() {
        let s = GameState::with_positions(
            3.0,
            vec![
                Vec2::new(0.5, 0.0),
                Vec2::new(2.2, 0.0),
                Vec2::new(1.5, 2.5),
            ],
        );
        let params = ScenarioParams::default();
        let p = plan(&s, &params).unwrap();
        assert!(p.passive.contains(&2));
        let a = act(&s, &p, &params).unwrap();
        assert_eq!(a.actions[2], AgentAction::STILL);
    }

    #[test]
    fn no_overshoot_near_waypoint() {
        let s = GameState::with_positions(4.0, vec![Vec2::new(1.1, 0.0)]);
        let params = ScenarioParams::default();
        let p = plan(&s, &params).unwrap();
        let a = act(&s, &p, &params).unwrap();
        let expected = s.positions[0].distance(p.waypoints[0]);
        assert!((a.actions[0].dp.norm() - expected).abs() < 1e-12);
        assert!(expected < 0.2);
    }

    #[test]
    fn jammed_retriever_heads_for_sender() {
        let params = ScenarioParams::for_scenario(Scenario::IsoJam);
        let s = GameState::with_positions(4.0, vec![Vec2::new(2.0, 2.0)]);
        let p = plan(&s, &params).unwrap();
        let a = act(&s, &p, &params).unwrap();
        let expected = (Vec2::ZERO - s.positions[0]) * (0.2 / s.positions[0].norm());
        assert!((a.actions[0].dp - expected).norm() < 1e-15);
    }

    #[test]
    fn mismatched_plan_is_rejected() {
        let s = GameState::with_positions(4.0, vec![Vec2::new(2.0, 2.0)]);
        let params = ScenarioParams::default();
        let p = plan(&s, &params).unwrap();
        let bigger = GameState::with_positions(4.0, vec![Vec2::new(2.0, 2.0); 2]);
        assert!(act(&bigger, &p, &params).is_err());
    }

    #[test]
    fn directional_agent_defers_turning() {
        let params = ScenarioParams::for_scenario(Scenario::DirNoJam);
        let mut s = GameState::with_positions(5.0, vec![Vec2::new(0.5, 3.0)]);
        s.orientations[0] = std::f64::consts::PI;
        let p = plan(&s, &params).unwrap();
        let a = act(&s, &p, &params).unwrap();
        assert_eq!(a.actions[0].dphi, 0.0);
    }
}
