//! Local observability of the joint temperature/RC-product state.
//!
//! The augmented state is `[T (all nodes); p]`; heater gains are left out.
//! Parameters are constant, so the linearization is
//! `J = [[A, ∂f/∂p], [0, 0]]`, discretized as `F = exp(J·dt)`, and only
//! temperatures are measured.

use nalgebra::{DMatrix, DVector};

use crate::error::{contract, Result};
use crate::network::{assemble_continuous, ParameterVector, ThermalNetwork};
use crate::simulator::SimulationTrace;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// `∂f/∂[T; p]` at node temperatures `temps`. External rows are zero.
pub fn augmented_jacobian(
    temps: &DVector<f64>,
    params: &ParameterVector,
    topology: &ThermalNetwork,
) -> Result<DMatrix<f64>> {
    let n = topology.node_count();
    if temps.len() != n {
        return Err(contract(format!("{} temperatures for {n} nodes", temps.len())));
    }
    let np = params.p.len();
    let a = assemble_continuous(params, topology)?.a;
    let mut j = DMatrix::zeros(n + np, n + np);
    j.view_mut((0, 0), (n, n)).copy_from(&a);
    for (k, &(i, l)) in params.edge_map().iter().enumerate() {
        j[(i, n + k)] = -(temps[l] - temps[i]) / (params.p[k] * params.p[k]);
    }
    Ok(j)
}

/// `exp(J·dt)`.
pub fn transition(jacobian: &DMatrix<f64>, dt: f64) -> DMatrix<f64> {
    (jacobian * dt).exp()
}

/// `[C; CF; …; CF^(d−1)]` with `d` the state dimension.
pub fn observability_matrix(f: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = f.nrows();
    if f.ncols() != d || c.ncols() != d {
        return Err(contract("observability needs a square F and a C with matching columns"));
    }
    let m = c.nrows();
    let mut o = DMatrix::zeros(m * d, d);
    let mut block = c.clone();
    for k in 0..d {
        o.view_mut((k * m, 0), (m, d)).copy_from(&block);
        block = &block * f;
    }
    Ok(o)
}

/// `[I 0]`: every node temperature measured, no parameter.
pub fn temperature_output(nodes: usize, params: usize) -> DMatrix<f64> {
    DMatrix::from_fn(nodes, nodes + params, |i, j| if i == j { 1.0 } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilitySnapshot {
    pub time: f64,
    pub rank: usize,
    /// Largest over smallest singular value (infinite when the smallest is zero).
    pub condition_number: f64,
    pub singular_values: Vec<f64>,
    /// Orthonormal nullspace basis, one column per unobservable direction.
    pub nullspace: DMatrix<f64>,
    /// Norm of each coordinate's projection onto the nullspace.
    pub magnitudes: Vec<f64>,
}

impl ObservabilitySnapshot {
    pub fn nullity(&self) -> usize {
        self.nullspace.ncols()
    }
}

/// Rank and nullspace of `O` from its SVD.
pub fn analyze(o: &DMatrix<f64>, time: f64, threshold: f64) -> ObservabilitySnapshot {
    let d = o.ncols();
    let svd = o.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > threshold * smax).count();
    // rows of Vᵀ beyond the returned singular values are also null directions
    let mut null_rows: Vec<usize> =
        order.iter().copied().filter(|&k| !(svd.singular_values[k] > threshold * smax)).collect();
    null_rows.extend(sv.len()..v_t.nrows());
    let nullspace = DMatrix::from_fn(d, null_rows.len(), |i, c| v_t[(null_rows[c], i)]);
    let magnitudes = (0..d).map(|i| nullspace.row(i).norm()).collect();
    let smin = if sv.len() < d { 0.0 } else { sv.last().copied().unwrap_or(0.0) };
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    ObservabilitySnapshot { time, rank, condition_number, singular_values: sv, nullspace, magnitudes }
}

/// Observability snapshot at one operating point.
pub fn snapshot(
    time: f64,
    temps: &DVector<f64>,
    params: &ParameterVector,
    topology: &ThermalNetwork,
    dt: f64,
    threshold: f64,
) -> Result<ObservabilitySnapshot> {
    let j = augmented_jacobian(temps, params, topology)?;
    let f = transition(&j, dt);
    let c = temperature_output(topology.node_count(), params.p.len());
    Ok(analyze(&observability_matrix(&f, &c)?, time, threshold))
}

/// Coordinate names of the augmented state: node names, then RC-product labels.
pub fn coordinate_labels(params: &ParameterVector, topology: &ThermalNetwork) -> Vec<String> {
    let layout = params.layout();
    topology
        .nodes()
        .iter()
        .map(|n| format!("T_{}", n.name))
        .chain((0..layout.p_len()).map(|k| layout.p_label(k)))
        .collect()
}

/// Snapshot per trace row along the true temperatures, linearized at `params`.
pub fn nullspace_trace(
    trace: &SimulationTrace,
    topology: &ThermalNetwork,
    params: &ParameterVector,
    threshold: f64,
) -> Result<Vec<ObservabilitySnapshot>> {
    trace
        .rows
        .iter()
        .map(|row| {
            snapshot(row.time, &DVector::from_column_slice(&row.true_temps), params, topology, trace.dt, threshold)
        })
        .collect()
}
