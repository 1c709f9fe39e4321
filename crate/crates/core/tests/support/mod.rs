//! Oracle checks shared by the property tests and the acceptance run.
//! Each suite returns the worst observed error or a description of the
//! first mismatch.

#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relay_core::baseline::{
    build_graph, lambda_solve, relay_residual, shortest_relay, CandidateFrame, Node, RelayGraph,
};
use relay_core::comms::{array_gain, can_communicate, AntennaModel, Link};
use relay_core::game::{message_propagation, message_propagation_ordered, sample_initial_state};
use relay_core::{GameState, Scenario, ScenarioParams, Vec2};

/// Plain bisection on `a − λ − c − max(0, √(d² + λ²) − i r) = 0`.
pub fn bisect(a: f64, c: f64, d: f64, i: usize, r: f64) -> f64 {
    let f = |l: f64| a - l - c - ((d * d + l * l).sqrt() - i as f64 * r).max(0.0);
    let (mut lo, mut hi) = (0.0, a);
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Feasible `(a, c, d, i)`: `a − c` exceeds `max(0, d − i)`, so the root
/// has `λ > 0`.
pub fn feasible(c: f64, d: f64, i: usize, excess: f64) -> (f64, f64, f64, usize) {
    (c + (d - i as f64).max(0.0) + excess, c, d, i)
}

/// `(residual, distance to the bisection root)` of the closed form.
pub fn lambda_errors(a: f64, c: f64, d: f64, i: usize) -> Result<(f64, f64), String> {
    let lambda = lambda_solve(a, c, d, i, 1.0).map_err(|e| format!("({a}, {c}, {d}, {i}): {e}"))?;
    if !(lambda > 0.0 && lambda <= a) {
        return Err(format!(
            "({a}, {c}, {d}, {i}): lambda {lambda} outside (0, a]"
        ));
    }
    Ok((
        relay_residual(lambda, a, c, d, i, 1.0).abs(),
        (lambda - bisect(a, c, d, i, 1.0)).abs(),
    ))
}

pub fn lambda_suite(n: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let (a, c, d, i) = feasible(
            rng.random_range(0.0..4.0),
            rng.random_range(0.0..4.0),
            rng.random_range(1..10),
            rng.random_range(1e-6..6.0),
        );
        let (res, gap) = lambda_errors(a, c, d, i)?;
        if res > 1e-9 || gap > 1e-9 {
            return Err(format!(
                "({a}, {c}, {d}, {i}): residual {res:.2e}, bisection gap {gap:.2e}"
            ));
        }
        worst = worst.max(res);
    }
    Ok(worst)
}

/// `|a(0)ᴴ a(θ)|` of a two-element half-wavelength array.
pub fn complex_gain(theta: f64) -> f64 {
    let a0 = [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
    let a = [
        Complex64::new(1.0, 0.0),
        Complex64::from_polar(1.0, PI * theta.sin()),
    ];
    a0.iter()
        .zip(&a)
        .map(|(x, y)| x.conj() * y)
        .sum::<Complex64>()
        .norm()
}

pub fn gain_suite(n: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let theta = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
        let closed = 2.0 * (PI * theta.sin() / 2.0).cos().abs();
        let e = (array_gain(theta, &AntennaModel::DIRECTIONAL) - complex_gain(theta))
            .abs()
            .max((closed - complex_gain(theta)).abs());
        if e > 1e-12 {
            return Err(format!("theta {theta}: error {e:.2e}"));
        }
        worst = worst.max(e);
    }
    Ok(worst)
}

/// Cheapest simple path by exhaustive enumeration; ties go to the
/// lexicographically smallest node sequence.
fn brute_force(graph: &RelayGraph) -> (f64, Vec<Node>) {
    fn walk(g: &RelayGraph, path: &mut Vec<Node>, best: &mut Option<(f64, Vec<Node>)>) {
        let last = *path.last().unwrap();
        if last == Node::Receiver {
            let cost = g.path_cost(path).unwrap();
            let better = match best {
                None => true,
                Some((c, p)) => cost < *c || (cost == *c && path.as_slice() < p.as_slice()),
            };
            if better {
                *best = Some((cost, path.clone()));
            }
            return;
        }
        for &(next, _) in g.neighbors(last) {
            if !path.contains(&next) {
                path.push(next);
                walk(g, path, best);
                path.pop();
            }
        }
    }
    let mut best = None;
    walk(graph, &mut vec![Node::Agent(graph.retriever)], &mut best);
    best.unwrap()
}

fn check_graph(graph: &RelayGraph) -> Result<(), String> {
    let found = shortest_relay(graph).ok_or("no path found")?;
    let (cost, nodes) = brute_force(graph);
    if found.cost != cost || found.nodes != nodes {
        return Err(format!(
            "dijkstra {:?} at {} vs enumeration {nodes:?} at {cost}",
            found.nodes, found.cost
        ));
    }
    Ok(())
}

/// Graphs built by the planner from sampled states.
pub fn planner_graph_suite(n: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ScenarioParams::default();
    for _ in 0..n {
        let k = rng.random_range(1..=6);
        let state = sample_initial_state(&params, k, &mut rng).unwrap();
        let members: Vec<usize> = (0..k).collect();
        let retriever = rng.random_range(0..k);
        let frame = CandidateFrame::build(
            &state.positions,
            &members,
            retriever,
            state.sender(),
            state.receiver(),
            params.r_com,
        )
        .map_err(|e| e.to_string())?;
        check_graph(&build_graph(&frame, state.receiver()))?;
    }
    Ok(())
}

/// Same topology with coarse random weights, so that ties are common.
pub fn random_graph_suite(n: usize, seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n {
        let k = rng.random_range(1..=6);
        let retriever = rng.random_range(0..k);
        let mut g = RelayGraph::new(retriever);
        let mut w = || f64::from(rng.random_range(0..4u8)) * 0.5;
        g.add_edge(Node::Agent(retriever), Node::Sender, w());
        g.add_edge(Node::Sender, Node::Receiver, w());
        let others: Vec<usize> = (0..k).filter(|&i| i != retriever).collect();
        for &i in &others {
            g.add_edge(Node::Sender, Node::Agent(i), w());
            g.add_edge(Node::Agent(i), Node::Receiver, w());
            for &j in &others {
                if i != j {
                    g.add_edge(Node::Agent(i), Node::Agent(j), w());
                }
            }
        }
        check_graph(&g)?;
    }
    Ok(())
}

/// States with agents strung along the base axis so that multi-hop
/// transfers are common.
fn propagation_instance(rng: &mut ChaCha8Rng) -> (GameState, ScenarioParams) {
    let scenario = Scenario::ALL[rng.random_range(0..4)];
    let params = ScenarioParams::for_scenario(scenario);
    let k = rng.random_range(1..=9);
    let mut state = sample_initial_state(&params, k, rng).unwrap();
    // shuffled slots along the base axis, spaced just under the link range
    let mut slots: Vec<usize> = (0..k).collect();
    slots.shuffle(rng);
    for (p, slot) in state.positions.iter_mut().zip(slots) {
        if rng.random_bool(0.8) {
            let x = (slot as f64 + 1.0) * rng.random_range(0.6..1.0) * params.r_com;
            *p = Vec2::new(x, rng.random_range(-0.3..0.3));
        }
    }
    for b in state.carrying.iter_mut() {
        *b = rng.random_bool(0.05);
    }
    (state, params)
}

/// Breadth-first closure over direct links; returns carriers and the hop
/// depth of the deepest new carrier.
fn bfs_closure(state: &GameState, params: &ScenarioParams) -> (Vec<bool>, usize) {
    let reaches = |p_t: Vec2, phi: f64, antenna: AntennaModel, p_r: Vec2| {
        if p_t == p_r {
            return true;
        }
        let link = Link {
            p_t,
            p_r,
            phi,
            jammer: params.jammed.then_some(state.jammer),
            c_jam: params.c_jam(),
            antenna,
        };
        can_communicate(&link, params.sinr_threshold).unwrap_or(false)
    };
    let k = state.agents();
    let mut carrying = state.carrying.clone();
    let mut frontier: Vec<usize> = (0..k).filter(|&i| carrying[i]).collect();
    for i in 0..k {
        if !carrying[i] && reaches(Vec2::ZERO, 0.0, AntennaModel::ISOTROPIC, state.positions[i]) {
            carrying[i] = true;
            frontier.push(i);
        }
    }
    let mut depth = 0;
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for &from in &frontier {
            for to in 0..k {
                let p = state.positions[from];
                if !carrying[to]
                    && reaches(
                        p,
                        state.orientations[from],
                        params.agent_antenna(),
                        state.positions[to],
                    )
                {
                    carrying[to] = true;
                    next.push(to);
                }
            }
        }
        if !next.is_empty() {
            depth += 1;
        }
        frontier = next;
    }
    (carrying, depth)
}

/// Returns the number of instances with two or more relay hops.
pub fn propagation_suite(n: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chained = 0;
    for case in 0..n {
        let (state, params) = propagation_instance(&mut rng);
        let reference = message_propagation(&state, &params);
        let (closure, depth) = bfs_closure(&state, &params);
        if reference.carrying != closure {
            return Err(format!(
                "case {case}: fixpoint {:?} vs closure {closure:?}",
                reference.carrying
            ));
        }
        if depth >= 2 {
            chained += 1;
        }
        let mut order: Vec<usize> = (0..state.agents()).collect();
        for _ in 0..10 {
            order.shuffle(&mut rng);
            let p = message_propagation_ordered(&state, &params, &order);
            if p.carrying != reference.carrying || p.delivered != reference.delivered {
                return Err(format!("case {case}: order {order:?} changes the fixpoint"));
            }
            if p.passes > state.agents() + 2 {
                return Err(format!("case {case}: {} passes", p.passes));
            }
        }
    }
    Ok(chained)
}
