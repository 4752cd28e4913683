//! RC thermal networks and the state-space models built from them.
//!
//! A building is an undirected weighted graph: nodes carry a thermal
//! capacitance, edges carry a thermal resistance, and heated nodes carry a
//! maximum heater output. Outdoor air is modelled as an *external* node with
//! infinite capacitance, so its row of the rate matrix is zero and its
//! temperature is imposed by the weather.
//!
//! The identifiable quantities are not `R` and `C` separately but the RC
//! products seen from each node, plus one heater coefficient per heated
//! zone. [`minimal_parameterization`] extracts them, [`assemble_continuous`]
//! rebuilds the rate matrix from them and [`discretize`] turns the continuous
//! model into an exact zero-order-hold step.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// One node of the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    /// Thermal capacitance. Ignored for external nodes.
    #[serde(default)]
    pub capacitance: f64,
    #[serde(default)]
    pub external: bool,
}

/// Undirected resistive link between two nodes (by index).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub resistance: f64,
}

/// Validated building graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    heaters: Vec<f64>,
    // sorted neighbour lists: (neighbour, resistance)
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl ThermalNetwork {
    /// Build and validate a network. `heaters[i]` is the heater output of node
    /// `i` (zero when the node has no heater).
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, heaters: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::InvalidNetwork("a network needs at least two nodes".into()));
        }
        if heaters.len() != n {
            return Err(Error::InvalidNetwork(format!("{} heater entries for {n} nodes", heaters.len())));
        }
        for (i, node) in nodes.iter().enumerate() {
            if nodes[..i].iter().any(|o| o.name == node.name) {
                return Err(Error::InvalidNetwork(format!("duplicate node name {:?}", node.name)));
            }
            if !node.external && !(node.capacitance > 0.0 && node.capacitance.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "node {:?} has non-positive capacitance {}",
                    node.name, node.capacitance
                )));
            }
        }
        if nodes.iter().all(|n| n.external) {
            return Err(Error::InvalidNetwork("no internal node".into()));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (k, e) in edges.iter().enumerate() {
            if e.a >= n || e.b >= n {
                return Err(Error::InvalidNetwork(format!("edge {k} references a missing node")));
            }
            if e.a == e.b {
                return Err(Error::InvalidNetwork(format!("self edge on node {}", nodes[e.a].name)));
            }
            if !(e.resistance > 0.0 && e.resistance.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {}-{} has non-positive resistance {}",
                    nodes[e.a].name, nodes[e.b].name, e.resistance
                )));
            }
            if adjacency[e.a].iter().any(|&(j, _)| j == e.b) {
                return Err(Error::InvalidNetwork(format!("duplicate edge {}-{}", nodes[e.a].name, nodes[e.b].name)));
            }
            adjacency[e.a].push((e.b, e.resistance));
            adjacency[e.b].push((e.a, e.resistance));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        for (i, &b) in heaters.iter().enumerate() {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "heater output {b} on node {} must be non-negative",
                    nodes[i].name
                )));
            }
            if nodes[i].external && b != 0.0 {
                return Err(Error::InvalidNetwork(format!("external node {} cannot carry a heater", nodes[i].name)));
            }
        }
        // connectivity
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &(j, _) in &adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidNetwork(format!("graph is disconnected (node {} unreachable)", nodes[i].name)));
        }
        Ok(Self { nodes, edges, heaters, adjacency })
    }

    /// The two-zone building used throughout: zones 1 and 2 share a weak wall,
    /// both lose heat to the outside node.
    pub fn two_zone() -> Self {
        let node = |name: &str, c: f64, ext: bool| Node { name: name.into(), capacitance: c, external: ext };
        Self::new(
            vec![node("zone1", 17.0, false), node("zone2", 10.0, false), node("outside", 0.0, true)],
            vec![
                Edge { a: 0, b: 1, resistance: 150.0 },
                Edge { a: 0, b: 2, resistance: 60.0 },
                Edge { a: 1, b: 2, resistance: 100.0 },
            ],
            vec![0.18, 0.22, 0.0],
        )
        .expect("built-in network is valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { path: path.display().to_string(), message },
            other => other,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: NetworkFile =
            toml::from_str(text).map_err(|e| Error::Parse { path: "<network>".into(), message: e.to_string() })?;
        file.into_network()
    }

    pub fn to_toml(&self) -> String {
        let file = NetworkFile::from(self);
        toml::to_string(&file).expect("network serializes")
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn heaters(&self) -> &[f64] {
        &self.heaters
    }

    pub fn resistance(&self, i: usize, j: usize) -> Option<f64> {
        self.adjacency[i].iter().find(|&&(k, _)| k == j).map(|&(_, r)| r)
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[i].iter().map(|&(j, _)| j)
    }

    pub fn is_external(&self, i: usize) -> bool {
        self.nodes[i].external
    }

    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].external).collect()
    }

    pub fn external_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].external).collect()
    }

    /// Nodes with a heater, in node order. These are the control inputs.
    pub fn heated_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.heaters[i] > 0.0).collect()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Index layout of the minimal parameterization.
    pub fn layout(&self) -> ParameterLayout {
        let mut edge_map = Vec::new();
        for i in self.internal_nodes() {
            for j in self.neighbors(i) {
                edge_map.push((i, j));
            }
        }
        ParameterLayout { edge_map, zone_map: self.heated_nodes(), node_count: self.nodes.len() }
    }

    /// A copy with different resistances, capacitances and heater outputs but
    /// the same topology.
    pub fn with_heaters(&self, heaters: Vec<f64>) -> Result<Self> {
        Self::new(self.nodes.clone(), self.edges.clone(), heaters)
    }
}

/// Index maps of a [`ParameterVector`]: `p_k` belongs to the directed edge
/// `edge_map[k] = (i, j)` (head `i` is internal, value `R_ij C_i`), `q_l`
/// to heated node `zone_map[l]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterLayout {
    edge_map: Vec<(usize, usize)>,
    zone_map: Vec<usize>,
    node_count: usize,
}

impl ParameterLayout {
    pub fn edge_map(&self) -> &[(usize, usize)] {
        &self.edge_map
    }

    pub fn zone_map(&self) -> &[usize] {
        &self.zone_map
    }

    pub fn p_len(&self) -> usize {
        self.edge_map.len()
    }

    pub fn q_len(&self) -> usize {
        self.zone_map.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// RC-product name of `p_k`, e.g. `R12C1` (1-based node numbers, lower
    /// number first in the resistance, head node in the capacitance).
    pub fn p_label(&self, k: usize) -> String {
        let (i, j) = self.edge_map[k];
        format!("R{}{}C{}", i.min(j) + 1, i.max(j) + 1, i + 1)
    }

    pub fn q_label(&self, l: usize) -> String {
        format!("b{}", self.zone_map[l] + 1)
    }

    /// Labels of all parameters, p block first.
    pub fn labels(&self) -> Vec<String> {
        (0..self.p_len()).map(|k| self.p_label(k)).chain((0..self.q_len()).map(|l| self.q_label(l))).collect()
    }

    pub fn p_index_of(&self, head: usize, tail: usize) -> Option<usize> {
        self.edge_map.iter().position(|&e| e == (head, tail))
    }
}

/// Minimal identifiable parameterization: RC products `p` and heater
/// coefficients `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub p: DVector<f64>,
    pub q: DVector<f64>,
    layout: Arc<ParameterLayout>,
}

impl ParameterVector {
    pub fn new(layout: Arc<ParameterLayout>, p: DVector<f64>, q: DVector<f64>) -> Result<Self> {
        if p.len() != layout.p_len() || q.len() != layout.q_len() {
            return Err(contract(format!(
                "parameter lengths ({}, {}) do not match layout ({}, {})",
                p.len(),
                q.len(),
                layout.p_len(),
                layout.q_len()
            )));
        }
        Ok(Self { p, q, layout })
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn shared_layout(&self) -> Arc<ParameterLayout> {
        Arc::clone(&self.layout)
    }

    pub fn edge_map(&self) -> &[(usize, usize)] {
        &self.layout.edge_map
    }

    pub fn zone_map(&self) -> &[usize] {
        &self.layout.zone_map
    }

    /// Same layout, new values.
    pub fn with_values(&self, p: DVector<f64>, q: DVector<f64>) -> Self {
        assert_eq!(p.len(), self.p.len());
        assert_eq!(q.len(), self.q.len());
        Self { p, q, layout: Arc::clone(&self.layout) }
    }

    /// `[p; q]` stacked.
    pub fn stacked(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.p.len() + self.q.len());
        v.rows_mut(0, self.p.len()).copy_from(&self.p);
        v.rows_mut(self.p.len(), self.q.len()).copy_from(&self.q);
        v
    }

    pub fn is_physical(&self) -> bool {
        self.p.iter().chain(self.q.iter()).all(|&x| x > 0.0 && x.is_finite())
    }
}

/// `Ṫ = A T + B u` over all nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousDynamics {
    pub a: DMatrix<f64>,
    /// n × m, column `l` drives heated node `zone_map[l]`.
    pub b_ctrl: DMatrix<f64>,
    pub external: Vec<bool>,
}

impl ContinuousDynamics {
    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.external.len()).filter(|&i| !self.external[i]).collect()
    }

    pub fn external_nodes(&self) -> Vec<usize> {
        (0..self.external.len()).filter(|&i| self.external[i]).collect()
    }
}

/// Exact zero-order-hold step over the internal nodes:
/// `T⁺ = Φ T + Γ_ext T_ext + Γ_ctrl u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDynamics {
    pub phi: DMatrix<f64>,
    pub gamma_ext: DMatrix<f64>,
    pub gamma_ctrl: DMatrix<f64>,
    pub dt: f64,
    /// Node index of each row of `phi`.
    pub internal: Vec<usize>,
    /// Node index of each column of `gamma_ext`.
    pub external: Vec<usize>,
}

impl DiscreteDynamics {
    pub fn n_internal(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_external(&self) -> usize {
        self.gamma_ext.ncols()
    }

    pub fn n_controls(&self) -> usize {
        self.gamma_ctrl.ncols()
    }

    /// One step from internal temperatures `t_int`.
    pub fn step(&self, t_int: &DVector<f64>, t_ext: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.phi * t_int + &self.gamma_ext * t_ext + &self.gamma_ctrl * u
    }

    /// One step of the full node vector; external entries are carried over.
    pub fn step_nodes(&self, temps: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let t_int = DVector::from_iterator(self.internal.len(), self.internal.iter().map(|&i| temps[i]));
        let t_ext = DVector::from_iterator(self.external.len(), self.external.iter().map(|&i| temps[i]));
        let next = self.step(&t_int, &t_ext, u);
        let mut out = temps.clone();
        for (r, &i) in self.internal.iter().enumerate() {
            out[i] = next[r];
        }
        out
    }
}

pub fn minimal_parameterization(net: &ThermalNetwork) -> ParameterVector {
    let layout = Arc::new(net.layout());
    let p = DVector::from_iterator(
        layout.p_len(),
        layout
            .edge_map
            .iter()
            .map(|&(i, j)| net.resistance(i, j).expect("layout edges exist") * net.nodes[i].capacitance),
    );
    let q = DVector::from_iterator(layout.q_len(), layout.zone_map.iter().map(|&i| net.heaters[i]));
    ParameterVector { p, q, layout }
}

/// Rate matrix directly from `R` and `C`, without going through the
/// parameterization. Used as a cross-check.
pub fn rate_matrix_from_network(net: &ThermalNetwork) -> DMatrix<f64> {
    let n = net.node_count();
    let mut a = DMatrix::zeros(n, n);
    for i in net.internal_nodes() {
        let c = net.nodes[i].capacitance;
        for &(j, r) in &net.adjacency[i] {
            a[(i, j)] = 1.0 / (c * r);
        }
        let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        a[(i, i)] = -row_sum;
    }
    a
}

pub fn assemble_continuous(params: &ParameterVector, topology: &ThermalNetwork) -> Result<ContinuousDynamics> {
    let layout = params.layout();
    if layout.node_count != topology.node_count() || *layout != topology.layout() {
        return Err(contract("parameter layout does not match the network topology"));
    }
    if let Some(k) = params.p.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::PhysicsViolation(format!("{} = {} is not positive", layout.p_label(k), params.p[k])));
    }
    let n = topology.node_count();
    let mut a = DMatrix::zeros(n, n);
    for (k, &(i, j)) in layout.edge_map.iter().enumerate() {
        a[(i, j)] = 1.0 / params.p[k];
    }
    for i in 0..n {
        let row_sum: f64 = (0..n).filter(|&j| j != i).map(|j| a[(i, j)]).sum();
        a[(i, i)] = -row_sum;
    }
    let m = layout.q_len();
    let mut b_ctrl = DMatrix::zeros(n, m);
    for (l, &i) in layout.zone_map.iter().enumerate() {
        b_ctrl[(i, l)] = params.q[l];
    }
    let external = topology.nodes.iter().map(|n| n.external).collect();
    Ok(ContinuousDynamics { a, b_ctrl, external })
}

/// Exact ZOH discretization via one exponential of the augmented block
/// matrix `[[A_int, A_ie, B], [0, 0, 0]]·dt`.
pub fn discretize(cont: &ContinuousDynamics, dt: f64) -> Result<DiscreteDynamics> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(contract(format!("time step must be positive, got {dt}")));
    }
    let internal = cont.internal_nodes();
    let external = cont.external_nodes();
    let (ni, ne, m) = (internal.len(), external.len(), cont.b_ctrl.ncols());
    let size = ni + ne + m;
    let mut aug = DMatrix::<f64>::zeros(size, size);
    for (r, &i) in internal.iter().enumerate() {
        for (c, &j) in internal.iter().enumerate() {
            aug[(r, c)] = cont.a[(i, j)] * dt;
        }
        for (c, &j) in external.iter().enumerate() {
            aug[(r, ni + c)] = cont.a[(i, j)] * dt;
        }
        for l in 0..m {
            aug[(r, ni + ne + l)] = cont.b_ctrl[(i, l)] * dt;
        }
    }
    let e = aug.exp();
    Ok(DiscreteDynamics {
        phi: e.view((0, 0), (ni, ni)).into_owned(),
        gamma_ext: e.view((0, ni), (ni, ne)).into_owned(),
        gamma_ctrl: e.view((0, ni + ne), (ni, m)).into_owned(),
        dt,
        internal,
        external,
    })
}

/// Convenience: parameters → discrete model in one call.
pub fn discrete_model(params: &ParameterVector, topology: &ThermalNetwork, dt: f64) -> Result<DiscreteDynamics> {
    discretize(&assemble_continuous(params, topology)?, dt)
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Serialize, Deserialize)]
struct NetworkFile {
    nodes: Vec<Node>,
    #[serde(default)]
    edges: Vec<EdgeRecord>,
    #[serde(default)]
    heaters: Vec<HeaterRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    a: String,
    b: String,
    resistance: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct HeaterRecord {
    node: String,
    output: f64,
}

impl NetworkFile {
    fn into_network(self) -> Result<ThermalNetwork> {
        let index = |name: &str| {
            self.nodes
                .iter()
                .position(|n| n.name == name)
                .ok_or_else(|| Error::InvalidNetwork(format!("unknown node {name:?}")))
        };
        let mut edges = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            edges.push(Edge { a: index(&e.a)?, b: index(&e.b)?, resistance: e.resistance });
        }
        let mut heaters = vec![0.0; self.nodes.len()];
        for h in &self.heaters {
            let i = index(&h.node)?;
            if heaters[i] != 0.0 {
                return Err(Error::InvalidNetwork(format!("two heaters on node {}", h.node)));
            }
            heaters[i] = h.output;
        }
        ThermalNetwork::new(self.nodes, edges, heaters)
    }
}

impl From<&ThermalNetwork> for NetworkFile {
    fn from(net: &ThermalNetwork) -> Self {
        let name = |i: usize| net.nodes[i].name.clone();
        NetworkFile {
            nodes: net.nodes.clone(),
            edges: net
                .edges
                .iter()
                .map(|e| EdgeRecord { a: name(e.a), b: name(e.b), resistance: e.resistance })
                .collect(),
            heaters: net
                .heaters
                .iter()
                .enumerate()
                .filter(|(_, &b)| b > 0.0)
                .map(|(i, &b)| HeaterRecord { node: name(i), output: b })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn node(name: &str, c: f64) -> Node {
        Node { name: name.into(), capacitance: c, external: false }
    }

    fn outside() -> Node {
        Node { name: "out".into(), capacitance: 0.0, external: true }
    }

    #[test]
    fn two_zone_parameters() {
        let pv = minimal_parameterization(&ThermalNetwork::two_zone());
        assert_eq!(pv.p.as_slice(), &[2550.0, 1020.0, 1500.0, 1000.0]);
        assert_eq!(pv.q.as_slice(), &[0.18, 0.22]);
        let labels: Vec<_> = (0..4).map(|k| pv.layout().p_label(k)).collect();
        assert_eq!(labels, ["R12C1", "R13C1", "R12C2", "R23C2"]);
    }

    #[test]
    fn single_zone_parameters() {
        let net = ThermalNetwork::new(
            vec![node("z", 5.0), outside()],
            vec![Edge { a: 0, b: 1, resistance: 2.0 }],
            vec![0.1, 0.0],
        )
        .unwrap();
        let pv = minimal_parameterization(&net);
        assert_eq!(pv.p.len(), 1);
        assert_eq!(pv.q.len(), 1);
        assert_eq!(pv.p[0], 10.0);
    }

    #[test]
    fn path_with_external_counts_five() {
        let net = ThermalNetwork::new(
            vec![node("a", 1.0), node("b", 1.0), node("c", 1.0), outside()],
            vec![
                Edge { a: 0, b: 1, resistance: 1.0 },
                Edge { a: 1, b: 2, resistance: 1.0 },
                Edge { a: 0, b: 3, resistance: 1.0 },
            ],
            vec![0.0; 4],
        )
        .unwrap();
        assert_eq!(minimal_parameterization(&net).p.len(), 5);
    }

    #[test]
    fn validation_errors() {
        let disconnected = ThermalNetwork::new(
            vec![node("a", 1.0), node("b", 1.0), outside()],
            vec![Edge { a: 0, b: 2, resistance: 1.0 }],
            vec![0.0; 3],
        );
        assert!(matches!(disconnected, Err(Error::InvalidNetwork(_))));
        let bad_r = ThermalNetwork::new(
            vec![node("a", 1.0), outside()],
            vec![Edge { a: 0, b: 1, resistance: 0.0 }],
            vec![0.0; 2],
        );
        assert!(bad_r.is_err());
        let bad_c = ThermalNetwork::new(
            vec![node("a", -1.0), outside()],
            vec![Edge { a: 0, b: 1, resistance: 1.0 }],
            vec![0.0; 2],
        );
        assert!(bad_c.is_err());
        let dup = ThermalNetwork::new(
            vec![node("a", 1.0), outside()],
            vec![Edge { a: 0, b: 1, resistance: 1.0 }, Edge { a: 1, b: 0, resistance: 2.0 }],
            vec![0.0; 2],
        );
        assert!(dup.is_err());
        let heated_outside = ThermalNetwork::new(
            vec![node("a", 1.0), outside()],
            vec![Edge { a: 0, b: 1, resistance: 1.0 }],
            vec![0.0, 1.0],
        );
        assert!(heated_outside.is_err());
    }

    #[test]
    fn two_zone_rate_matrix() {
        let net = ThermalNetwork::two_zone();
        let cont = assemble_continuous(&minimal_parameterization(&net), &net).unwrap();
        let a = &cont.a;
        assert_relative_eq!(a[(0, 1)], 1.0 / 2550.0, max_relative = 1e-12);
        assert_relative_eq!(a[(0, 2)], 1.0 / 1020.0, max_relative = 1e-12);
        assert_relative_eq!(a[(1, 0)], 1.0 / 1500.0, max_relative = 1e-12);
        assert_relative_eq!(a[(1, 2)], 1.0e-3, max_relative = 1e-12);
        assert_relative_eq!(a[(0, 0)], -1.372549019607843e-3, max_relative = 1e-12);
        assert_relative_eq!(a[(1, 1)], -1.6666666666666668e-3, max_relative = 1e-12);
        assert!(a.row(2).iter().all(|&x| x == 0.0));
        assert_eq!(cont.b_ctrl[(0, 0)], 0.18);
        assert_eq!(cont.b_ctrl[(1, 1)], 0.22);
        let uniform = DVector::from_element(3, 55.0);
        assert!((a * uniform).amax() < 1e-15);
    }

    #[test]
    fn external_row_is_zero() {
        let net = ThermalNetwork::two_zone();
        let cont = assemble_continuous(&minimal_parameterization(&net), &net).unwrap();
        assert_eq!(cont.a.row(2).amax(), 0.0);
    }

    #[test]
    fn non_positive_parameter_is_physics_violation() {
        let net = ThermalNetwork::two_zone();
        let pv = minimal_parameterization(&net);
        let mut p = pv.p.clone();
        p[1] = -3.0;
        let bad = pv.with_values(p, pv.q.clone());
        assert!(matches!(assemble_continuous(&bad, &net), Err(Error::PhysicsViolation(_))));
    }

    #[test]
    fn discretize_small_step_is_identity() {
        let net = ThermalNetwork::two_zone();
        let d = discrete_model(&minimal_parameterization(&net), &net, 1e-9).unwrap();
        let id = DMatrix::<f64>::identity(2, 2);
        assert!((&d.phi - id).norm() < 1e-6);
        assert!(d.gamma_ext.norm() < 1e-6);
        assert!(d.gamma_ctrl.norm() < 1e-6);
    }

    #[test]
    fn discretize_scalar_closed_form() {
        let cont = ContinuousDynamics {
            a: DMatrix::from_row_slice(2, 2, &[-1e-3, 1e-3, 0.0, 0.0]),
            b_ctrl: DMatrix::zeros(2, 0),
            external: vec![false, true],
        };
        let d = discretize(&cont, 15.0).unwrap();
        assert_relative_eq!(d.phi[(0, 0)], (-0.015f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(d.phi[(0, 0)], 0.985112, epsilon = 1e-6);
    }

    #[test]
    fn discretize_conserves_uniform_state() {
        let net = ThermalNetwork::two_zone();
        let d = discrete_model(&minimal_parameterization(&net), &net, 15.0).unwrap();
        for r in 0..2 {
            let s: f64 = d.phi.row(r).sum() + d.gamma_ext.row(r).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // Φ is not symmetric; check its eigenvalues through the 2×2 characteristic roots.
        let tr = d.phi.trace();
        let det = d.phi.determinant();
        let disc = tr * tr - 4.0 * det;
        assert!(disc >= 0.0, "thermal modes are real");
        for root in [(tr - disc.sqrt()) / 2.0, (tr + disc.sqrt()) / 2.0] {
            assert!(root > 0.0 && root <= 1.0);
        }
    }

    #[test]
    fn rejects_bad_dt() {
        let net = ThermalNetwork::two_zone();
        let cont = assemble_continuous(&minimal_parameterization(&net), &net).unwrap();
        assert!(discretize(&cont, 0.0).is_err());
        assert!(discretize(&cont, -1.0).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let net = ThermalNetwork::two_zone();
        let back = ThermalNetwork::from_toml(&net.to_toml()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn toml_unknown_node() {
        let text = r#"
            nodes = [{ name = "a", capacitance = 1.0 }, { name = "out", external = true }]
            edges = [{ a = "a", b = "nowhere", resistance = 1.0 }]
        "#;
        assert!(ThermalNetwork::from_toml(text).is_err());
    }
}
