//! Successive-shortest-path min-cost flow with Dijkstra and node potentials.
//!
//! Costs are non-negative reals. Ties in Dijkstra are broken by node index, so
//! the returned flow is a deterministic function of the arc list.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: usize,
    cap: i64,
    cost: f64,
}

pub(crate) struct MinCostFlow {
    arcs: Vec<Arc>,
    adjacency: Vec<Vec<usize>>,
}

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed so the std max-heap pops the smallest distance, then node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl MinCostFlow {
    pub(crate) fn new(nodes: usize) -> Self {
        MinCostFlow {
            arcs: Vec::new(),
            adjacency: vec![Vec::new(); nodes],
        }
    }

    /// Adds `u -> v` and its residual twin; returns the forward arc id.
    pub(crate) fn add_arc(&mut self, u: usize, v: usize, cap: i64, cost: f64) -> usize {
        debug_assert!(cost >= 0.0);
        let id = self.arcs.len();
        self.arcs.push(Arc { to: v, cap, cost });
        self.arcs.push(Arc { to: u, cap: 0, cost: -cost });
        self.adjacency[u].push(id);
        self.adjacency[v].push(id + 1);
        id
    }

    /// Flow currently on forward arc `id`.
    pub(crate) fn flow(&self, id: usize) -> i64 {
        self.arcs[id + 1].cap
    }

    /// Routes `amount` units from `source` to `sink` at minimum cost.
    pub(crate) fn run(&mut self, source: usize, sink: usize, amount: i64) -> Result<f64> {
        let n = self.adjacency.len();
        let mut potential = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![usize::MAX; n];
        let mut remaining = amount;
        let mut total = 0.0;

        while remaining > 0 {
            dist.iter_mut().for_each(|d| *d = f64::INFINITY);
            parent.iter_mut().for_each(|p| *p = usize::MAX);
            dist[source] = 0.0;
            let mut heap = BinaryHeap::new();
            heap.push(Entry { dist: 0.0, node: source });
            while let Some(Entry { dist: d, node: u }) = heap.pop() {
                if d > dist[u] {
                    continue;
                }
                for &id in &self.adjacency[u] {
                    let arc = self.arcs[id];
                    if arc.cap <= 0 {
                        continue;
                    }
                    let reduced = (arc.cost + potential[u] - potential[arc.to]).max(0.0);
                    let nd = d + reduced;
                    if nd < dist[arc.to] {
                        dist[arc.to] = nd;
                        parent[arc.to] = id;
                        heap.push(Entry { dist: nd, node: arc.to });
                    }
                }
            }
            if !dist[sink].is_finite() {
                return Err(Error::InfeasibleNetwork(format!(
                    "{remaining} unit(s) of residue could not be routed"
                )));
            }
            let cap_sink = dist[sink];
            for v in 0..n {
                potential[v] += dist[v].min(cap_sink);
            }

            let mut push = remaining;
            let mut v = sink;
            while v != source {
                let id = parent[v];
                push = push.min(self.arcs[id].cap);
                v = self.arcs[id ^ 1].to;
            }
            let mut v = sink;
            while v != source {
                let id = parent[v];
                self.arcs[id].cap -= push;
                self.arcs[id ^ 1].cap += push;
                total += push as f64 * self.arcs[id].cost;
                v = self.arcs[id ^ 1].to;
            }
            remaining -= push;
        }
        Ok(total)
    }
}
