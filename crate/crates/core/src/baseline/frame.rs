//! Retrieval points, the line frame `L_k` and motion-envelope relay points.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{golden_section_min, wrap_signed, Vec2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("relay condition has no positive root: a = {a}, c = {c}, d = {d}, i = {i}")]
    NoPositiveRoot { a: f64, c: f64, d: f64, i: usize },
}

const CIRCLE_TOLERANCE: f64 = 1e-10;

/// Minimizer of `‖p − p_k‖ + ‖p_r − p‖` over the closed ball `B̄(p_t, r_com)`,
/// or `p_k` itself when it already lies in the ball.
pub fn retrieval_point(p_k: Vec2, p_t: Vec2, p_r: Vec2, r_com: f64) -> Vec2 {
    if p_k.distance(p_t) <= r_com {
        return p_k;
    }
    if let Some(hit) = segment_ball_entry(p_k, p_r, p_t, r_com) {
        return hit;
    }
    let on_circle = |angle: f64| p_t + Vec2::from_polar(r_com, angle);
    let objective = |angle: f64| {
        let p = on_circle(angle);
        p.distance(p_k) + p_r.distance(p)
    };
    let a_k = (p_k - p_t).angle();
    let a_r = (p_r - p_t).angle();
    let bisector = a_k + 0.5 * wrap_signed(a_r - a_k);
    let brackets = [
        (a_k, a_k + wrap_signed(a_r - a_k)),
        (bisector - 0.5 * PI, bisector + 0.5 * PI),
        (a_r - 0.5 * PI, a_r + 0.5 * PI),
    ];
    let (best, _) = brackets
        .iter()
        .map(|&(lo, hi)| golden_section_min(objective, lo, hi, CIRCLE_TOLERANCE))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("three brackets");
    into_ball(on_circle(best), p_t, r_com)
}

/// Pulls `p` onto the closed ball if rounding left `‖p − center‖²` above
/// `radius²`, so that links at exactly the planned range still hold.
fn into_ball(p: Vec2, center: Vec2, radius: f64) -> Vec2 {
    let mut off = p - center;
    let r2 = radius * radius;
    let mut shrink = 1.0;
    while off.norm_sq() > r2 {
        shrink -= 2.0 * f64::EPSILON;
        off = (p - center) * shrink;
    }
    center + off
}

/// First point of the segment `[from, to]` inside `B̄(center, radius)`.
fn segment_ball_entry(from: Vec2, to: Vec2, center: Vec2, radius: f64) -> Option<Vec2> {
    let dir = to - from;
    let f = from - center;
    let a = dir.norm_sq();
    if a == 0.0 {
        return None;
    }
    let b = 2.0 * f.dot(dir);
    let c = f.norm_sq() - radius * radius;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let s = (-b - disc.sqrt()) / (2.0 * a);
    if !(0.0..=1.0).contains(&s) {
        return None;
    }
    Some(into_ball(from + dir * s, center, radius))
}

/// Residual of the relay condition `a − λ = c + max(0, √(d² + λ²) − i r)`.
pub fn relay_residual(lambda: f64, a: f64, c: f64, d: f64, i: usize, r_com: f64) -> f64 {
    a - lambda - c - (d.hypot(lambda) - i as f64 * r_com).max(0.0)
}

/// Root `λ ∈ (0, a)` of the relay condition.
///
/// The closed forms are `λ = a − c` when `√(d² + (a − c)²) ≤ i r` and
/// `λ = (s² − d²) / 2s` with `s = a − c + i r` otherwise. The branch is
/// picked by residual; bisection covers anything the closed forms miss.
pub fn lambda_solve(a: f64, c: f64, d: f64, i: usize, r_com: f64) -> Result<f64, FrameError> {
    let err = FrameError::NoPositiveRoot { a, c, d, i };
    let finite = a.is_finite() && c.is_finite() && d.is_finite();
    if !finite || a < 0.0 || c < 0.0 || d < 0.0 {
        return Err(err);
    }
    if relay_residual(0.0, a, c, d, i, r_com) <= 0.0 {
        return Err(err);
    }
    let reach = i as f64 * r_com;
    let tol = 1e-12 * (1.0 + a + c + d + reach);
    let linear = a - c;
    if d.hypot(linear) <= reach {
        return Ok(linear);
    }
    let s = a - c + reach;
    if s > 0.0 {
        let quadratic = (s * s - d * d) / (2.0 * s);
        if quadratic > 0.0
            && quadratic < a
            && relay_residual(quadratic, a, c, d, i, r_com).abs() <= tol
        {
            return Ok(quadratic);
        }
    }
    let (mut lo, mut hi) = (0.0, a);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if relay_residual(mid, a, c, d, i, r_com) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * a {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One agent of a candidate frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub agent: usize,
    /// 1-based position along `L_k`, the retriever being 1.
    pub index: usize,
    pub origin: Vec2,
    pub projection: Vec2,
    pub relay_point: Vec2,
}

/// Candidate relay points for retriever `k` over a set of member agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFrame {
    pub retriever: usize,
    pub retrieval_point: Vec2,
    /// Unit direction of `L_k`, from the retrieval point to the receiver.
    pub u: Vec2,
    /// Length of `L_k`.
    pub length: f64,
    /// Travel of the retriever to its retrieval point.
    pub approach: f64,
    pub r_com: f64,
    /// Retriever first, then the other members in order along `L_k`.
    pub entries: Vec<FrameEntry>,
}

impl CandidateFrame {
    /// Builds the frame for `retriever` over `members`, which must contain
    /// the retriever. `positions` is indexed by agent.
    pub fn build(
        positions: &[Vec2],
        members: &[usize],
        retriever: usize,
        p_t: Vec2,
        p_r: Vec2,
        r_com: f64,
    ) -> Result<Self, FrameError> {
        Self::build_with_retrieval_radius(positions, members, retriever, p_t, p_r, r_com, r_com)
    }

    /// As [`CandidateFrame::build`], with the retrieval point searched on a
    /// ball of `retrieval_radius` instead of `r_com`.
    pub fn build_with_retrieval_radius(
        positions: &[Vec2],
        members: &[usize],
        retriever: usize,
        p_t: Vec2,
        p_r: Vec2,
        r_com: f64,
        retrieval_radius: f64,
    ) -> Result<Self, FrameError> {
        let p_k = positions[retriever];
        let p_hat_k = retrieval_point(p_k, p_t, p_r, retrieval_radius);
        let length = p_r.distance(p_hat_k);
        let u = (p_r - p_hat_k).normalized().unwrap_or(Vec2::new(1.0, 0.0));
        let approach = p_hat_k.distance(p_k);

        let mut others: Vec<(f64, usize)> = members
            .iter()
            .copied()
            .filter(|&i| i != retriever)
            .map(|i| ((positions[i] - p_hat_k).dot(u), i))
            .collect();
        others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

        let mut entries = Vec::with_capacity(others.len() + 1);
        entries.push(FrameEntry {
            agent: retriever,
            index: 1,
            origin: p_k,
            projection: p_hat_k,
            relay_point: p_hat_k,
        });
        for (pos, &(s, agent)) in others.iter().enumerate() {
            let index = pos + 2;
            let origin = positions[agent];
            let projection = p_hat_k + u * s;
            let relay_point =
                candidate_relay_point(origin, projection, p_hat_k, approach, index, r_com)?;
            entries.push(FrameEntry {
                agent,
                index,
                origin,
                projection,
                relay_point,
            });
        }
        Ok(Self {
            retriever,
            retrieval_point: p_hat_k,
            u,
            length,
            approach,
            r_com,
            entries,
        })
    }

    /// Envelope bound `‖p̂_k − p_k‖ + max(0, ‖q − p̂_k‖ − i r)` at `q`.
    pub fn envelope(&self, index: usize, q: Vec2) -> f64 {
        self.approach + (q.distance(self.retrieval_point) - index as f64 * self.r_com).max(0.0)
    }

    /// Remaining movement budget of an entry at its current relay point.
    pub fn slack(&self, entry: &FrameEntry) -> f64 {
        if entry.agent == self.retriever {
            return 0.0;
        }
        self.envelope(entry.index, entry.relay_point) - entry.relay_point.distance(entry.origin)
    }

    /// Coordinate of a point along `L_k`.
    pub fn coordinate(&self, q: Vec2) -> f64 {
        (q - self.retrieval_point).dot(self.u)
    }

    pub fn entry(&self, agent: usize) -> Option<&FrameEntry> {
        self.entries.iter().find(|e| e.agent == agent)
    }
}

fn candidate_relay_point(
    origin: Vec2,
    projection: Vec2,
    p_hat_k: Vec2,
    approach: f64,
    index: usize,
    r_com: f64,
) -> Result<Vec2, FrameError> {
    let a = projection.distance(origin);
    let d = projection.distance(p_hat_k);
    let bound = approach + (d - index as f64 * r_com).max(0.0);
    if a <= bound {
        return Ok(projection);
    }
    let lambda = lambda_solve(a, approach, d, index, r_com)?;
    let v = (origin - projection) * (1.0 / a);
    Ok(projection + v * lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retrieval_inside_ball_is_identity() {
        let p = Vec2::new(0.3, -0.4);
        assert_eq!(retrieval_point(p, Vec2::ZERO, Vec2::new(3.0, 0.0), 1.0), p);
    }

    #[test]
    fn retrieval_behind_receiver() {
        let q = retrieval_point(Vec2::new(2.2, 0.0), Vec2::ZERO, Vec2::new(2.0, 0.0), 1.0);
        assert!(q.distance(Vec2::new(1.0, 0.0)) < 1e-9);
        assert!(q.norm_sq() <= 1.0);
    }

    #[test]
    fn retrieval_on_segment_entry() {
        let q = retrieval_point(Vec2::new(-3.0, 0.0), Vec2::ZERO, Vec2::new(3.0, 0.0), 1.0);
        assert!(q.distance(Vec2::new(-1.0, 0.0)) < 1e-12);
    }

    #[test]
    fn retrieval_off_axis_beats_dense_samples() {
        let (p_k, p_r) = (Vec2::new(3.0, 0.0), Vec2::new(2.0, 0.0));
        let q = retrieval_point(p_k, Vec2::ZERO, p_r, 1.0);
        assert!((q.norm() - 1.0).abs() < 1e-12);
        let f = |p: Vec2| p.distance(p_k) + p_r.distance(p);
        let n = 100;
        for a in 0..n {
            for b in 0..n {
                let r = (a as f64 + 0.5) / n as f64;
                let th = 2.0 * PI * b as f64 / n as f64;
                assert!(f(q) <= f(Vec2::from_polar(r, th)) + 1e-12);
            }
        }
    }

    #[test]
    fn lambda_examples() {
        assert_eq!(lambda_solve(2.0, 1.0, 0.5, 2, 1.0).unwrap(), 1.0);
        assert_eq!(lambda_solve(2.0, 1.0, 0.5, 1, 1.0).unwrap(), 0.9375);
        let tiny = lambda_solve(1.0 + 1e-9, 1.0, 0.5, 1, 1.0).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-8);
    }

    #[test]
    fn lambda_rejects_satisfied_envelope() {
        assert!(lambda_solve(1.0, 1.0, 0.5, 1, 1.0).is_err());
        assert!(lambda_solve(1.0, 2.0, 0.5, 1, 1.0).is_err());
    }

    #[test]
    fn frame_orders_agents_along_segment() {
        let positions = [
            Vec2::new(0.5, 0.0),
            Vec2::new(3.0, 1.0),
            Vec2::new(1.5, -1.0),
            Vec2::new(1.5, 1.0),
        ];
        let f = CandidateFrame::build(
            &positions,
            &[0, 1, 2, 3],
            0,
            Vec2::ZERO,
            Vec2::new(4.0, 0.0),
            1.0,
        )
        .unwrap();
        let order: Vec<usize> = f.entries.iter().map(|e| e.agent).collect();
        assert_eq!(order, vec![0, 2, 3, 1]);
        let idx: Vec<usize> = f.entries.iter().map(|e| e.index).collect();
        assert_eq!(idx, vec![1, 2, 3, 4]);
    }

    #[test]
    fn relay_points_respect_envelope() {
        let positions = [
            Vec2::new(2.0, 0.0),
            Vec2::new(2.5, 3.0),
            Vec2::new(4.0, -0.2),
        ];
        let f = CandidateFrame::build(
            &positions,
            &[0, 1, 2],
            0,
            Vec2::ZERO,
            Vec2::new(5.0, 0.0),
            1.0,
        )
        .unwrap();
        for e in &f.entries {
            let travel = e.relay_point.distance(e.origin);
            assert!(travel <= f.envelope(e.index, e.relay_point) + 1e-9);
            assert!(f.slack(e) >= -1e-9);
            // relay point lies on [projection, origin]
            let seg = e.projection.distance(e.origin);
            let sum = e.projection.distance(e.relay_point) + e.relay_point.distance(e.origin);
            assert!((sum - seg).abs() < 1e-9);
        }
        let far = f.entry(1).unwrap();
        assert!(far.relay_point != far.projection);
        assert!((f.slack(far)).abs() < 1e-9);
    }

    #[test]
    fn agent_on_line_keeps_position() {
        let positions = [Vec2::new(0.5, 0.0), Vec2::new(2.0, 0.0)];
        let f = CandidateFrame::build(&positions, &[0, 1], 0, Vec2::ZERO, Vec2::new(4.0, 0.0), 1.0)
            .unwrap();
        let e = f.entry(1).unwrap();
        assert_eq!(e.relay_point, positions[1]);
        assert_eq!(e.projection, positions[1]);
    }
}
