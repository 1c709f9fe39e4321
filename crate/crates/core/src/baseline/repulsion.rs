//! Repulsion: spreads clustered relay points along `L_k` within each
//! agent's remaining movement budget.
//!
//! Clusters are connected components of the "closer than `r_com`" relation.
//! Inside a cluster, fixed agents (no budget left, or the retriever) anchor
//! the layout. Movable agents on either side of the fixed members are given
//! 1-D targets at spacing `r_com`, the closest feasible layout in the least
//! squares sense, clamped to the segment. Movable agents sandwiched between
//! fixed ones stay put. A cluster without fixed members spreads around its
//! centroid. Points then walk towards their targets in increments of
//! `step · r_com` and stop before leaving their envelope.

use super::frame::CandidateFrame;

/// Slack below which an agent counts as fixed.
const FIXED_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepulsionOptions {
    /// Walk increment as a fraction of `r_com`.
    pub step: f64,
    /// Upper bound on re-clustering rounds; `None` means the member count.
    pub max_rounds: Option<usize>,
}

impl Default for RepulsionOptions {
    fn default() -> Self {
        Self {
            step: 0.01,
            max_rounds: None,
        }
    }
}

/// Outcome of [`repulsion`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RepulsionReport {
    pub rounds: usize,
    pub moved: usize,
}

/// Applies repulsion to the relay points of `frame` in place.
pub fn repulsion(frame: &mut CandidateFrame, options: &RepulsionOptions) -> RepulsionReport {
    let n = frame.entries.len();
    let max_rounds = options.max_rounds.unwrap_or(n);
    let link = frame.r_com * (1.0 - 1e-9);
    let mut report = RepulsionReport {
        rounds: 0,
        moved: 0,
    };
    for _ in 0..max_rounds {
        let clusters = clusters(frame, link);
        let mut moved = 0;
        for cluster in clusters.iter().filter(|c| c.len() > 1) {
            for (entry, target) in cluster_targets(frame, cluster) {
                if walk(frame, entry, target, options.step) {
                    moved += 1;
                }
            }
        }
        report.rounds += 1;
        report.moved += moved;
        if moved == 0 {
            break;
        }
    }
    report
}

/// Connected components of entries closer than `link`, each sorted by
/// coordinate along `L_k` and then agent index.
fn clusters(frame: &CandidateFrame, link: f64) -> Vec<Vec<usize>> {
    let n = frame.entries.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..n {
        for b in a + 1..n {
            let pa = frame.entries[a].relay_point;
            let pb = frame.entries[b].relay_point;
            if pa.distance(pb) < link {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if root_slot[r] == usize::MAX {
            root_slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_slot[r]].push(i);
    }
    for g in &mut groups {
        g.sort_by(|&a, &b| {
            let ca = frame.coordinate(frame.entries[a].relay_point);
            let cb = frame.coordinate(frame.entries[b].relay_point);
            ca.total_cmp(&cb)
                .then(frame.entries[a].agent.cmp(&frame.entries[b].agent))
        });
    }
    groups
}

/// Target coordinates for the movable entries of a sorted cluster.
fn cluster_targets(frame: &CandidateFrame, cluster: &[usize]) -> Vec<(usize, f64)> {
    let r = frame.r_com;
    let coords: Vec<f64> = cluster
        .iter()
        .map(|&e| frame.coordinate(frame.entries[e].relay_point))
        .collect();
    let fixed: Vec<bool> = cluster
        .iter()
        .map(|&e| frame.slack(&frame.entries[e]) <= FIXED_SLACK)
        .collect();
    let mut out = Vec::new();
    match (
        fixed.iter().position(|&f| f),
        fixed.iter().rposition(|&f| f),
    ) {
        (None, _) | (_, None) => {
            let targets = spread(&coords, 0.0, frame.length, r);
            out.extend(cluster.iter().copied().zip(targets));
        }
        (Some(first), Some(last)) => {
            if first > 0 {
                let hi = coords[first] - r;
                let targets = spread(&coords[..first], 0.0, hi, r);
                out.extend(cluster[..first].iter().copied().zip(targets));
            }
            if last + 1 < cluster.len() {
                let lo = coords[last] + r;
                let targets = spread(&coords[last + 1..], lo, frame.length, r);
                out.extend(cluster[last + 1..].iter().copied().zip(targets));
            }
        }
    }
    out
}

/// Closest layout `x_1 ≤ … ≤ x_m` (least squares) to the sorted coordinates
/// `s` with gaps of at least `gap` and all points inside `[lo, hi]`. Falls
/// back to the input if the interval cannot hold the group.
fn spread(s: &[f64], lo: f64, hi: f64, gap: f64) -> Vec<f64> {
    let m = s.len();
    let span = gap * (m as f64 - 1.0);
    if hi - lo < span {
        return s.to_vec();
    }
    let y: Vec<f64> = s
        .iter()
        .enumerate()
        .map(|(j, &v)| v - j as f64 * gap)
        .collect();
    let z = isotonic(&y);
    z.iter()
        .enumerate()
        .map(|(j, &v)| v.clamp(lo, hi - span) + j as f64 * gap)
        .collect()
}

/// Pool-adjacent-violators fit of a nondecreasing sequence.
fn isotonic(y: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(y.len());
    for &v in y {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let total = n1 + n2;
            *blocks.last_mut().expect("two blocks") =
                ((m1 * n1 as f64 + m2 * n2 as f64) / total as f64, total);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// Walks entry `e` along `L_k` towards coordinate `target`. Returns whether
/// it moved.
fn walk(frame: &mut CandidateFrame, e: usize, target: f64, step: f64) -> bool {
    let entry = frame.entries[e].clone();
    let start = frame.coordinate(entry.relay_point);
    let total = target - start;
    if total.abs() <= 1e-12 {
        return false;
    }
    let increment = step * frame.r_com;
    let dir = total.signum();
    let feasible = |c: f64| {
        let q = entry.relay_point + frame.u * (c - start);
        q.distance(entry.origin) <= frame.envelope(entry.index, q) + 1e-12
    };
    let mut reached = start;
    loop {
        let remaining = (target - reached).abs();
        if remaining <= 1e-12 {
            break;
        }
        let next = reached + dir * increment.min(remaining);
        if !feasible(next) {
            break;
        }
        reached = next;
    }
    if reached == start {
        return false;
    }
    frame.entries[e].relay_point = entry.relay_point + frame.u * (reached - start);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;

    fn frame(positions: &[Vec2], r: f64) -> CandidateFrame {
        let members: Vec<usize> = (0..positions.len()).collect();
        CandidateFrame::build(positions, &members, 0, Vec2::ZERO, Vec2::new(r, 0.0), 1.0).unwrap()
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic(&[1.0, 3.0, 2.0]), vec![1.0, 2.5, 2.5]);
        assert_eq!(isotonic(&[3.0, 2.0, 1.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spread_keeps_mean_without_bounds() {
        let x = spread(&[2.0, 2.0], 0.0, 10.0, 1.0);
        assert_eq!(x, vec![1.5, 2.5]);
    }

    #[test]
    fn separated_points_are_unchanged() {
        let positions = [
            Vec2::new(0.5, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(3.5, 0.0),
        ];
        let mut f = frame(&positions, 5.0);
        let before = f.clone();
        let report = repulsion(&mut f, &RepulsionOptions::default());
        assert_eq!(f, before);
        assert_eq!(report.moved, 0);
    }

    #[test]
    fn fixed_points_are_unchanged() {
        // agents far from L_k use their whole budget reaching it
        let positions = [
            Vec2::new(0.5, 0.0),
            Vec2::new(2.0, 3.0),
            Vec2::new(2.1, 3.0),
        ];
        let mut f = frame(&positions, 5.0);
        assert!(f.entries.iter().all(|e| f.slack(e) <= FIXED_SLACK));
        let before = f.clone();
        repulsion(&mut f, &RepulsionOptions::default());
        assert_eq!(f, before);
    }

    #[test]
    fn colocated_movable_points_separate_to_range() {
        let positions = [
            Vec2::new(-4.0, 0.0),
            Vec2::new(3.0, 0.0),
            Vec2::new(3.0, 0.0),
        ];
        let mut f = frame(&positions, 6.0);
        assert!(f.slack(&f.entries[1]) > 1.0 && f.slack(&f.entries[2]) > 1.0);
        repulsion(&mut f, &RepulsionOptions::default());
        let gap = f.entries[1].relay_point.distance(f.entries[2].relay_point);
        assert!((gap - 1.0).abs() < 1e-9, "gap {gap}");
    }

    #[test]
    fn movement_stays_within_envelope() {
        let positions = [
            Vec2::new(2.0, 0.3),
            Vec2::new(2.6, 0.2),
            Vec2::new(2.7, -0.2),
            Vec2::new(2.65, 0.0),
        ];
        let mut f = frame(&positions, 6.0);
        let report = repulsion(&mut f, &RepulsionOptions::default());
        assert!(report.rounds <= positions.len());
        for e in &f.entries {
            assert!(e.relay_point.distance(e.origin) <= f.envelope(e.index, e.relay_point) + 1e-9);
        }
    }
}
