//! Relay graph `G_k` and a deterministic Dijkstra.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::frame::CandidateFrame;
use crate::geometry::Vec2;

/// Graph node. The derived order (sender, receiver, agents by index) is the
/// tie-break order of path labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Node {
    Sender,
    Receiver,
    Agent(usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelayGraph {
    pub retriever: usize,
    adjacency: BTreeMap<Node, Vec<(Node, f64)>>,
}

impl RelayGraph {
    pub fn new(retriever: usize) -> Self {
        Self {
            retriever,
            adjacency: BTreeMap::new(),
        }
    }

    pub fn add_edge(&mut self, from: Node, to: Node, weight: f64) {
        self.adjacency.entry(to).or_default();
        self.adjacency.entry(from).or_default().push((to, weight));
    }

    pub fn weight(&self, from: Node, to: Node) -> Option<f64> {
        self.adjacency
            .get(&from)?
            .iter()
            .find(|(n, _)| *n == to)
            .map(|&(_, w)| w)
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Node, Node, f64)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&from, out)| out.iter().map(move |&(to, w)| (from, to, w)))
    }

    pub fn neighbors(&self, node: Node) -> &[(Node, f64)] {
        self.adjacency.get(&node).map_or(&[], Vec::as_slice)
    }

    /// Sum of edge weights along `path`, or `None` if an edge is missing.
    pub fn path_cost(&self, path: &[Node]) -> Option<f64> {
        path.windows(2)
            .try_fold(0.0, |acc, w| Some(acc + self.weight(w[0], w[1])?))
    }
}

/// Builds `G_k` from a candidate frame.
pub fn build_graph(frame: &CandidateFrame, p_r: Vec2) -> RelayGraph {
    let r = frame.r_com;
    let k = frame.retriever;
    let p_hat_k = frame.retrieval_point;
    let mut g = RelayGraph::new(k);
    g.add_edge(Node::Agent(k), Node::Sender, frame.approach);
    g.add_edge(Node::Sender, Node::Receiver, p_r.distance(p_hat_k));
    let others: Vec<_> = frame.entries.iter().filter(|e| e.agent != k).collect();
    for e in &others {
        let i = Node::Agent(e.agent);
        g.add_edge(
            Node::Sender,
            i,
            (e.relay_point.distance(p_hat_k) - r).max(0.0),
        );
        g.add_edge(
            i,
            Node::Receiver,
            (p_r.distance(e.relay_point) - r).max(0.0),
        );
        for f in &others {
            if f.agent != e.agent {
                let w = (f.relay_point.distance(e.relay_point) - r).max(0.0);
                g.add_edge(i, Node::Agent(f.agent), w);
            }
        }
    }
    g
}

/// Shortest path from the retriever to the receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayPath {
    pub nodes: Vec<Node>,
    pub cost: f64,
}

impl RelayPath {
    /// Agents on the path in relay order.
    pub fn agents(&self) -> Vec<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Agent(i) => Some(*i),
                _ => None,
            })
            .collect()
    }
}

fn label_cmp(a: &(f64, Vec<Node>), b: &(f64, Vec<Node>)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

/// Dijkstra from `Agent(retriever)` to `Receiver` over (cost, node sequence)
/// labels, so equal-cost paths resolve to the lexicographically smallest.
pub fn shortest_relay(graph: &RelayGraph) -> Option<RelayPath> {
    shortest_path(graph, Node::Agent(graph.retriever), Node::Receiver)
}

pub fn shortest_path(graph: &RelayGraph, source: Node, target: Node) -> Option<RelayPath> {
    let mut labels: BTreeMap<Node, (f64, Vec<Node>)> = BTreeMap::new();
    let mut done: BTreeMap<Node, ()> = BTreeMap::new();
    labels.insert(source, (0.0, vec![source]));
    loop {
        let current = labels
            .iter()
            .filter(|(n, _)| !done.contains_key(n))
            .min_by(|a, b| label_cmp(a.1, b.1))
            .map(|(n, l)| (*n, l.clone()));
        let (node, (cost, path)) = current?;
        if node == target {
            return Some(RelayPath { nodes: path, cost });
        }
        done.insert(node, ());
        for &(next, w) in graph.neighbors(node) {
            if done.contains_key(&next) {
                continue;
            }
            let mut next_path = path.clone();
            next_path.push(next);
            let candidate = (cost + w, next_path);
            let better = labels
                .get(&next)
                .is_none_or(|old| label_cmp(&candidate, old) == Ordering::Less);
            if better {
                labels.insert(next, candidate);
            }
        }
    }
}
