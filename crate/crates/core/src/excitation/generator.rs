//! Experiment generators: rank node sets whose excitation should inform the
//! least certain parameters.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::network::{ParameterLayout, ParameterVector, ThermalNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorMethod {
    Eigen,
    Variational,
    MonteCarlo,
}

impl GeneratorMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorMethod::Eigen => "eigen",
            GeneratorMethod::Variational => "variational",
            GeneratorMethod::MonteCarlo => "montecarlo",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationCandidate {
    /// Uncertainty magnitude (an eigenvalue for the eigen method, a score otherwise).
    pub eigenvalue: f64,
    /// Direction in parameter space (`|p|` entries).
    pub direction: DVector<f64>,
    /// One signed weight per network node.
    pub node_weights: DVector<f64>,
    pub source: GeneratorMethod,
}

impl ExcitationCandidate {
    /// Node indices by descending weight magnitude, ties in index order.
    pub fn ranked_nodes(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.node_weights.len()).collect();
        idx.sort_by(|&a, &b| self.node_weights[b].abs().total_cmp(&self.node_weights[a].abs()));
        idx
    }
}

/// Spread a parameter-space direction over the nodes: each `p_k = R_ij C_i`
/// places `v_k` at `(i, j)`, internal diagonals take the signed row-minus-column
/// sum, and an external node's diagonal takes its column sum.
pub fn node_weights(direction: &DVector<f64>, layout: &ParameterLayout, topology: &ThermalNetwork) -> DVector<f64> {
    let n = layout.node_count();
    let mut a = DMatrix::zeros(n, n);
    for (k, &(i, j)) in layout.edge_map().iter().enumerate() {
        a[(i, j)] = direction[k];
    }
    DVector::from_fn(n, |i, _| {
        let col: f64 = (0..n).filter(|&l| l != i).map(|l| a[(l, i)]).sum();
        if topology.is_external(i) {
            col
        } else {
            let row: f64 = (0..n).filter(|&l| l != i).map(|l| a[(i, l)]).sum();
            row - col
        }
    })
}

/// Flip a direction so its largest-magnitude entry (first on ties) is positive.
fn canonical_sign(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for k in 1..v.len() {
        if v[k].abs() > v[best].abs() {
            best = k;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

fn sort_candidates(cands: &mut [ExcitationCandidate]) {
    // stable: equal magnitudes keep their construction order
    cands.sort_by(|a, b| b.eigenvalue.abs().total_cmp(&a.eigenvalue.abs()));
}

/// Candidates from the eigen-decomposition of the RC-product covariance,
/// ordered by eigenvalue magnitude.
///
/// A diagonal `P_RC` is decomposed exactly onto the unit vectors, so ties
/// (e.g. isotropic uncertainty) keep parameter order. Otherwise eigenvectors
/// with equal eigenvalues are ordered by the index of their largest entry.
pub fn generate_eigen(p_rc: &DMatrix<f64>, topology: &ThermalNetwork) -> Result<Vec<ExcitationCandidate>> {
    let layout = topology.layout();
    let np = layout.p_len();
    if p_rc.shape() != (np, np) {
        return Err(contract(format!("P_RC is {:?}, expected {np}×{np}", p_rc.shape())));
    }
    let scale = (0..np).map(|i| p_rc[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let asym = (p_rc - p_rc.transpose()).amax();
    if asym > 1e-9 * scale {
        return Err(contract(format!("P_RC is not symmetric (max asymmetry {asym:e})")));
    }
    let sym = (p_rc + p_rc.transpose()) * 0.5;
    let is_diagonal = (0..np).all(|i| (0..np).all(|j| i == j || sym[(i, j)] == 0.0));
    let mut pairs: Vec<(f64, DVector<f64>)> = if is_diagonal {
        (0..np)
            .map(|k| {
                let mut e = DVector::zeros(np);
                e[k] = 1.0;
                (sym[(k, k)], e)
            })
            .collect()
    } else {
        let eig = SymmetricEigen::new(sym);
        let mut v: Vec<(f64, DVector<f64>)> =
            (0..np).map(|k| (eig.eigenvalues[k], canonical_sign(eig.eigenvectors.column(k).into_owned()))).collect();
        let lead = |d: &DVector<f64>| d.iamax();
        v.sort_by_key(|(_, d)| lead(d));
        v
    };
    if let Some(&(neg, _)) = pairs.iter().find(|(l, _)| *l < -1e-9 * scale) {
        return Err(contract(format!("P_RC is indefinite (eigenvalue {neg:e})")));
    }
    let mut cands: Vec<ExcitationCandidate> = pairs
        .drain(..)
        .map(|(lambda, dir)| ExcitationCandidate {
            eigenvalue: lambda.max(0.0),
            node_weights: node_weights(&dir, &layout, topology),
            direction: dir,
            source: GeneratorMethod::Eigen,
        })
        .collect();
    sort_candidates(&mut cands);
    Ok(cands)
}

/// `∂Ṫ_i/∂p_k` at the given node temperatures: `−(T_j − T_i)/p_k²` for
/// `p_k = R_ij C_i`, zero elsewhere. Rows follow the internal nodes.
pub fn generate_variational(
    params: &ParameterVector,
    topology: &ThermalNetwork,
    temps: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let layout = params.layout();
    if temps.len() != layout.node_count() {
        return Err(contract(format!("{} temperatures for {} nodes", temps.len(), layout.node_count())));
    }
    let internal = topology.internal_nodes();
    let mut s = DMatrix::zeros(internal.len(), layout.p_len());
    for (k, &(i, j)) in layout.edge_map().iter().enumerate() {
        if let Some(r) = internal.iter().position(|&x| x == i) {
            s[(r, k)] = -(temps[j] - temps[i]) / (params.p[k] * params.p[k]);
        }
    }
    Ok(s)
}

/// One candidate per parameter, scored by `score[k]`, with direction `e_k`.
pub fn candidates_from_scores(
    scores: &[f64],
    topology: &ThermalNetwork,
    source: GeneratorMethod,
) -> Vec<ExcitationCandidate> {
    let layout = topology.layout();
    let mut cands: Vec<ExcitationCandidate> = scores
        .iter()
        .enumerate()
        .map(|(k, &score)| {
            let mut e = DVector::zeros(scores.len());
            e[k] = 1.0;
            ExcitationCandidate {
                eigenvalue: score,
                node_weights: node_weights(&e, &layout, topology),
                direction: e,
                source,
            }
        })
        .collect();
    sort_candidates(&mut cands);
    cands
}

/// Variational candidates: each parameter scored by the squared norm of its
/// temperature sensitivity, scaled by its variance so the score is the
/// temperature-rate variance it induces.
pub fn variational_candidates(
    sensitivity: &DMatrix<f64>,
    p_variance: &[f64],
    topology: &ThermalNetwork,
) -> Vec<ExcitationCandidate> {
    let scores: Vec<f64> = (0..sensitivity.ncols())
        .map(|k| sensitivity.column(k).norm_squared() * p_variance.get(k).copied().unwrap_or(1.0).max(0.0))
        .collect();
    candidates_from_scores(&scores, topology, GeneratorMethod::Variational)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{assemble_continuous, minimal_parameterization};

    #[test]
    fn isotropic_keeps_parameter_order() {
        let net = ThermalNetwork::two_zone();
        let c = generate_eigen(&(DMatrix::identity(4, 4) * 2.5), &net).unwrap();
        assert_eq!(c.len(), 4);
        for (k, cand) in c.iter().enumerate() {
            assert_eq!(cand.eigenvalue, 2.5);
            assert_eq!(cand.direction.iamax(), k);
        }
    }

    #[test]
    fn variance_on_inter_zone_edge_points_at_both_zones() {
        // unit direction on R12C1 puts +1 at (1,2): N = [1, -1, 0]
        let net = ThermalNetwork::two_zone();
        let mut p = DMatrix::zeros(4, 4);
        p[(0, 0)] = 1.0;
        p[(1, 1)] = 1e-3;
        let c = generate_eigen(&p, &net).unwrap();
        assert_eq!(c[0].node_weights.as_slice(), &[1.0, -1.0, 0.0]);
        assert_eq!(c[0].ranked_nodes()[..2], [0, 1]);
    }

    #[test]
    fn external_node_takes_column_sum() {
        // R13C1 and R23C2 both point at the outside node
        let net = ThermalNetwork::two_zone();
        let n = node_weights(&DVector::from_vec(vec![0.0, 0.5, 0.0, 0.25]), &net.layout(), &net);
        assert_eq!(n.as_slice(), &[0.5, 0.25, 0.75]);
    }

    #[test]
    fn zero_covariance_has_no_weight() {
        let net = ThermalNetwork::two_zone();
        let c = generate_eigen(&DMatrix::zeros(4, 4), &net).unwrap();
        assert!(c.iter().all(|x| x.eigenvalue == 0.0));
        assert!(c.iter().all(|x| x.node_weights.iter().all(|w| w.abs() <= 1.0)));
    }

    #[test]
    fn rejects_bad_covariance() {
        let net = ThermalNetwork::two_zone();
        let mut p = DMatrix::identity(4, 4);
        p[(0, 1)] = 0.5;
        assert!(generate_eigen(&p, &net).is_err());
        let mut q = DMatrix::identity(4, 4);
        q[(0, 1)] = 2.0;
        q[(1, 0)] = 2.0;
        assert!(generate_eigen(&q, &net).is_err());
        assert!(generate_eigen(&DMatrix::identity(3, 3), &net).is_err());
    }

    #[test]
    fn general_covariance_sorted_by_magnitude() {
        let net = ThermalNetwork::two_zone();
        let m = DMatrix::from_row_slice(
            4,
            4,
            &[4.0, 1.0, 0.0, 0.2, 1.0, 3.0, 0.1, 0.0, 0.0, 0.1, 2.0, 0.3, 0.2, 0.0, 0.3, 1.0],
        );
        let c = generate_eigen(&m, &net).unwrap();
        for w in c.windows(2) {
            assert!(w[0].eigenvalue >= w[1].eigenvalue);
        }
        for cand in &c {
            let r = &m * &cand.direction - &cand.direction * cand.eigenvalue;
            assert!(r.amax() < 1e-10);
        }
    }

    #[test]
    fn uniform_temperatures_have_no_sensitivity() {
        let net = ThermalNetwork::two_zone();
        let pv = minimal_parameterization(&net);
        let s = generate_variational(&pv, &net, &DVector::from_element(3, 65.0)).unwrap();
        assert_eq!(s.amax(), 0.0);
    }

    #[test]
    fn sensitivity_matches_finite_differences() {
        let net = ThermalNetwork::two_zone();
        let pv = minimal_parameterization(&net);
        let temps = DVector::from_vec(vec![70.0, 64.0, 30.0]);
        let s = generate_variational(&pv, &net, &temps).unwrap();
        let rate = |p: &ParameterVector| {
            let a = assemble_continuous(p, &net).unwrap().a;
            let r = &a * &temps;
            DVector::from_vec(vec![r[0], r[1]])
        };
        for k in 0..4 {
            let h = 1e-4 * pv.p[k];
            let mut up = pv.p.clone();
            up[k] += h;
            let mut dn = pv.p.clone();
            dn[k] -= h;
            let fd = (rate(&pv.with_values(up, pv.q.clone())) - rate(&pv.with_values(dn, pv.q.clone()))) / (2.0 * h);
            for r in 0..2 {
                let tol = 1e-6 * s[(r, k)].abs().max(1e-12);
                assert!((fd[r] - s[(r, k)]).abs() <= tol.max(1e-14), "k={k} r={r}: {} vs {}", fd[r], s[(r, k)]);
            }
        }
    }

    #[test]
    fn sensitivity_linear_in_temperature_difference() {
        let net = ThermalNetwork::two_zone();
        let pv = minimal_parameterization(&net);
        let a = generate_variational(&pv, &net, &DVector::from_vec(vec![70.0, 66.0, 40.0])).unwrap();
        let b = generate_variational(&pv, &net, &DVector::from_vec(vec![70.0, 62.0, 10.0])).unwrap();
        assert!((b - a * 2.0).amax() < 1e-15);
    }

    #[test]
    fn variational_scores_rank_by_induced_variance() {
        let net = ThermalNetwork::two_zone();
        let pv = minimal_parameterization(&net);
        let s = generate_variational(&pv, &net, &DVector::from_vec(vec![70.0, 70.0, 20.0])).unwrap();
        let c = variational_candidates(&s, &[1.0; 4], &net);
        // no inter-zone gradient: only the outside edges carry information
        assert!(matches!(c[0].direction.iamax(), 1 | 3));
        assert_eq!(c[3].eigenvalue, 0.0);
    }
}
