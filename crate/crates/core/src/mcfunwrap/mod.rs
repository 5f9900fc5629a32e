//! Minimum-cost-flow phase unwrapping on a Delaunay network of sparse pixels.
//!
//! Wrapped phase gradients are taken along every triangulation edge. Around
//! each triangle they sum to `2π` times an integer, the residue. Unwrapping
//! adds `2π k_e` to each edge gradient so that every triangle sums to zero,
//! choosing the integers `k_e` to minimise `Σ c_e |k_e|`. That is a min-cost
//! flow on the dual graph: triangles are nodes, residues are supplies, edges
//! connect the two triangles that share them, and boundary edges connect to
//! one extra ground node that absorbs any net residue.
//!
//! Orientation conventions: edge `e = (u, v)` always has `u < v` and gradient
//! `wrap(φ_v - φ_u)`. Triangles are counterclockwise; a triangle traverses an
//! edge with sign `+1` when it walks from `u` to `v`.

mod delaunay;
mod flow;

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::TAU;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthstack::wrap;

use flow::MinCostFlow;

/// Delaunay triangulation with edge/triangle incidence.
#[derive(Debug, Clone, PartialEq)]
pub struct TriNetwork {
    nodes: Vec<[f64; 2]>,
    edges: Vec<(usize, usize)>,
    triangles: Vec<[usize; 3]>,
    triangle_edges: Vec<[(usize, i8); 3]>,
    /// `(triangle traversing u→v, triangle traversing v→u)`.
    edge_triangles: Vec<(Option<usize>, Option<usize>)>,
    node_edges: Vec<Vec<usize>>,
}

impl TriNetwork {
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Edge ids and traversal signs of triangle `t`, in vertex order.
    pub fn triangle_edges(&self, t: usize) -> &[(usize, i8); 3] {
        &self.triangle_edges[t]
    }

    pub fn edge_triangles(&self, e: usize) -> (Option<usize>, Option<usize>) {
        self.edge_triangles[e]
    }

    pub fn node_edges(&self, v: usize) -> &[usize] {
        &self.node_edges[v]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&(a.min(b), a.max(b))).ok()
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let (u, v) = self.edges[e];
        let (p, q) = (self.nodes[u], self.nodes[v]);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    pub fn is_boundary(&self, e: usize) -> bool {
        let (l, r) = self.edge_triangles[e];
        l.is_none() || r.is_none()
    }

    /// Neighbouring nodes of `v`, ascending.
    pub fn neighbours(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.node_edges[v].iter().map(move |&e| {
            let (a, b) = self.edges[e];
            if a == v {
                b
            } else {
                a
            }
        })
    }

    /// Plain-text dump for visual inspection (see `docs/formats.md`).
    pub fn debug_dump(&self, residues: Option<&ResidueField>) -> String {
        let mut out = String::from("# insar-ts triangulation v1\n");
        let _ = writeln!(out, "nodes {}", self.nodes.len());
        for (k, p) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "{k} {} {}", p[0], p[1]);
        }
        let _ = writeln!(out, "triangles {}", self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let r = residues.map_or(0, |f| f.residues[t]);
            let _ = writeln!(out, "{t} {} {} {} {r}", tri[0], tri[1], tri[2]);
        }
        out
    }
}

/// Triangulates planar points. Deterministic for a given point set.
pub fn triangulate(points: &[[f64; 2]]) -> Result<TriNetwork> {
    let raw = delaunay::delaunay_triangles(points)?;
    build_network(points, raw)
}

fn build_network(points: &[[f64; 2]], raw: Vec<[usize; 3]>) -> Result<TriNetwork> {
    let mut triangles: Vec<[usize; 3]> = raw
        .into_iter()
        .map(|t| {
            let start = (0..3).min_by_key(|&k| t[k]).expect("three vertices");
            [t[start], t[(start + 1) % 3], t[(start + 2) % 3]]
        })
        .collect();
    triangles.sort_unstable();

    let mut edges: Vec<(usize, usize)> = triangles
        .iter()
        .flat_map(|t| (0..3).map(move |k| (t[k].min(t[(k + 1) % 3]), t[k].max(t[(k + 1) % 3]))))
        .collect();
    edges.sort_unstable();
    edges.dedup();

    let index: BTreeMap<(usize, usize), usize> = edges.iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let mut edge_triangles = vec![(None, None); edges.len()];
    let mut triangle_edges = Vec::with_capacity(triangles.len());
    for (t, tri) in triangles.iter().enumerate() {
        let mut slots = [(0usize, 0i8); 3];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let e = index[&(a.min(b), a.max(b))];
            let sign: i8 = if a < b { 1 } else { -1 };
            let slot = if sign > 0 {
                &mut edge_triangles[e].0
            } else {
                &mut edge_triangles[e].1
            };
            if slot.replace(t).is_some() {
                return Err(Error::DegenerateInput(format!(
                    "edge ({}, {}) traversed twice in one direction",
                    a.min(b),
                    a.max(b)
                )));
            }
            slots[k] = (e, sign);
        }
        triangle_edges.push(slots);
    }

    let mut node_edges = vec![Vec::new(); points.len()];
    for (e, &(a, b)) in edges.iter().enumerate() {
        node_edges[a].push(e);
        node_edges[b].push(e);
    }
    Ok(TriNetwork {
        nodes: points.to_vec(),
        edges,
        triangles,
        triangle_edges,
        edge_triangles,
        node_edges,
    })
}

/// Integer residue per triangle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidueField {
    pub residues: Vec<i32>,
}

impl ResidueField {
    pub fn count_nonzero(&self) -> usize {
        self.residues.iter().filter(|&&r| r != 0).count()
    }

    pub fn total(&self) -> i64 {
        self.residues.iter().map(|&r| i64::from(r)).sum()
    }
}

/// Wrapped gradient `wrap(φ_v - φ_u)` of every edge.
pub fn edge_gradients(net: &TriNetwork, wrapped_phase: &[f64]) -> Vec<f64> {
    net.edges
        .iter()
        .map(|&(u, v)| wrap(wrapped_phase[v] - wrapped_phase[u]))
        .collect()
}

fn check_len(net: &TriNetwork, phase: &[f64]) -> Result<()> {
    if phase.len() != net.nodes.len() {
        return Err(Error::DimensionMismatch {
            context: "phase vs network nodes",
            expected: net.nodes.len(),
            actual: phase.len(),
        });
    }
    Ok(())
}

/// Residue of every triangle: its oriented wrapped-gradient sum over `2π`.
pub fn compute_residues(net: &TriNetwork, wrapped_phase: &[f64]) -> Result<ResidueField> {
    check_len(net, wrapped_phase)?;
    let g = edge_gradients(net, wrapped_phase);
    let residues = net
        .triangle_edges
        .iter()
        .map(|slots| {
            let sum: f64 = slots.iter().map(|&(e, s)| f64::from(s) * g[e]).sum();
            (sum / TAU).round() as i32
        })
        .collect();
    Ok(ResidueField { residues })
}

/// Integer cycle corrections per edge and their total cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub flows: Vec<i32>,
    pub objective: f64,
}

/// Edge-cost models for [`solve_mcf`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostModel {
    /// `1 / length`: short arcs are cheap to correct.
    #[default]
    InverseLength,
    Unit,
}

pub fn edge_costs(net: &TriNetwork, model: CostModel) -> Vec<f64> {
    (0..net.edges.len())
        .map(|e| match model {
            CostModel::InverseLength => 1.0 / net.edge_length(e),
            CostModel::Unit => 1.0,
        })
        .collect()
}

/// Minimum-cost integer flow cancelling all residues.
pub fn solve_mcf(net: &TriNetwork, residues: &ResidueField, costs: &[f64]) -> Result<FlowSolution> {
    let n_tri = net.triangles.len();
    if residues.residues.len() != n_tri {
        return Err(Error::DimensionMismatch {
            context: "residues vs triangles",
            expected: n_tri,
            actual: residues.residues.len(),
        });
    }
    if costs.len() != net.edges.len() {
        return Err(Error::DimensionMismatch {
            context: "costs vs edges",
            expected: net.edges.len(),
            actual: costs.len(),
        });
    }
    if costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::invalid("edge costs", "must be positive and finite"));
    }

    let ground = n_tri;
    let source = n_tri + 1;
    let sink = n_tri + 2;
    let mut supply: Vec<i64> = residues.residues.iter().map(|&r| i64::from(r)).collect();
    supply.push(-residues.total());
    let amount: i64 = supply.iter().filter(|&&s| s > 0).sum();
    if amount == 0 {
        return Ok(FlowSolution {
            flows: vec![0; net.edges.len()],
            objective: 0.0,
        });
    }

    let mut graph = MinCostFlow::new(n_tri + 3);
    let mut arcs = Vec::with_capacity(net.edges.len());
    for (e, &(left, right)) in net.edge_triangles.iter().enumerate() {
        let plus = left.unwrap_or(ground);
        let minus = right.unwrap_or(ground);
        let forward = graph.add_arc(minus, plus, amount, costs[e]);
        let backward = graph.add_arc(plus, minus, amount, costs[e]);
        arcs.push((forward, backward));
    }
    for (node, &s) in supply.iter().enumerate() {
        if s > 0 {
            graph.add_arc(source, node, s, 0.0);
        } else if s < 0 {
            graph.add_arc(node, sink, -s, 0.0);
        }
    }
    graph.run(source, sink, amount)?;

    let flows: Vec<i32> = arcs
        .iter()
        .map(|&(f, b)| (graph.flow(f) - graph.flow(b)) as i32)
        .collect();
    let objective = flows
        .iter()
        .zip(costs)
        .map(|(&k, c)| c * f64::from(k.abs()))
        .sum();
    Ok(FlowSolution { flows, objective })
}

/// True when `flows` cancels every residue.
pub fn is_feasible(net: &TriNetwork, residues: &ResidueField, flows: &[i32]) -> bool {
    net.triangle_edges.iter().zip(&residues.residues).all(|(slots, &r)| {
        let s: i64 = slots
            .iter()
            .map(|&(e, sign)| i64::from(sign) * i64::from(flows[e]))
            .sum();
        s + i64::from(r) == 0
    })
}

/// Integrates corrected gradients outward from `ref_node`, which keeps its
/// wrapped value.
pub fn integrate_unwrapped(
    net: &TriNetwork,
    wrapped_phase: &[f64],
    flow: &FlowSolution,
    ref_node: usize,
) -> Result<Vec<f64>> {
    check_len(net, wrapped_phase)?;
    if ref_node >= net.nodes.len() {
        return Err(Error::invalid("ref_node", format!("{ref_node} is not a network node")));
    }
    if flow.flows.len() != net.edges.len() {
        return Err(Error::DimensionMismatch {
            context: "flow vs edges",
            expected: net.edges.len(),
            actual: flow.flows.len(),
        });
    }
    let g = edge_gradients(net, wrapped_phase);
    let mut out = vec![f64::NAN; net.nodes.len()];
    let mut seen = vec![false; net.nodes.len()];
    out[ref_node] = wrapped_phase[ref_node];
    seen[ref_node] = true;
    let mut queue = VecDeque::from([ref_node]);
    while let Some(u) = queue.pop_front() {
        for &e in &net.node_edges[u] {
            let (a, b) = net.edges[e];
            let step = g[e] + TAU * f64::from(flow.flows[e]);
            let (v, value) = if a == u { (b, out[u] + step) } else { (a, out[u] - step) };
            if !seen[v] {
                seen[v] = true;
                out[v] = value;
                queue.push_back(v);
            }
        }
    }
    Ok(out)
}

/// One interferogram unwrapped end to end.
#[derive(Debug, Clone, PartialEq)]
pub struct Unwrapped {
    pub phase: Vec<f64>,
    pub residues: usize,
    pub objective: f64,
}

/// Residues, flow and integration in one call.
pub fn unwrap_phase(net: &TriNetwork, wrapped_phase: &[f64], costs: &[f64], ref_node: usize) -> Result<Unwrapped> {
    let residues = compute_residues(net, wrapped_phase)?;
    let flow = solve_mcf(net, &residues, costs)?;
    let phase = integrate_unwrapped(net, wrapped_phase, &flow, ref_node)?;
    Ok(Unwrapped {
        phase,
        residues: residues.count_nonzero(),
        objective: flow.objective,
    })
}
