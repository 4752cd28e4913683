//! Joint temperature/parameter estimation with an unscented Kalman filter.
//!
//! The state is `[T (every node); p; q]`. Parameters follow a random walk, so
//! the dynamics are bilinear in state and parameters; prediction goes through
//! the unscented transform with an exact per-point discretization. Sensors
//! read temperatures directly, so the update is the linear Kalman update.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::linalg::{min_eigenvalue, psd_cholesky, symmetrize};
use crate::network::{assemble_continuous, discretize, ParameterLayout, ParameterVector, ThermalNetwork};

/// Parameters are clamped to this value inside a sigma point before the
/// dynamics are assembled.
pub const PARAMETER_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UkfConfig {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Per-step random-walk std of internal temperatures.
    pub temp_process_std: f64,
    /// Per-step random-walk std of external temperatures. The filter has no
    /// weather model, so this has to cover a step's worth of weather change.
    pub ext_process_std: f64,
    /// Per-step random-walk std of each `p_k`, relative to its estimate.
    pub p_process_rel: f64,
    pub q_process_rel: f64,
    /// Sensor noise std, shared by every node.
    pub measurement_std: f64,
    pub initial_temp_std: f64,
    /// Initial std of each parameter relative to its seed.
    pub initial_p_rel_std: f64,
    pub initial_q_rel_std: f64,
}

impl Default for UkfConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 2.0,
            kappa: 0.0,
            temp_process_std: 0.01,
            ext_process_std: 1.0,
            p_process_rel: 1e-3,
            q_process_rel: 1e-3,
            measurement_std: 0.1,
            initial_temp_std: 0.5,
            initial_p_rel_std: 0.5,
            initial_q_rel_std: 0.5,
        }
    }
}

impl UkfConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        let stds = [
            self.temp_process_std,
            self.ext_process_std,
            self.p_process_rel,
            self.q_process_rel,
            self.measurement_std,
            self.initial_temp_std,
            self.initial_p_rel_std,
            self.initial_q_rel_std,
        ];
        if stds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Config("noise levels must be finite and non-negative".into()));
        }
        if self.measurement_std == 0.0 {
            return Err(Error::Config("measurement_std must be positive".into()));
        }
        Ok(())
    }

    fn lambda(&self, l: usize) -> f64 {
        self.alpha * self.alpha * (l as f64 + self.kappa) - l as f64
    }
}

/// Augmented mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub step: u64,
    layout: Arc<ParameterLayout>,
}

impl UkfState {
    /// Filter seeded at `temps` (every node) and `params`, with the initial
    /// spreads from `config`.
    pub fn new(temps: &DVector<f64>, params: &ParameterVector, config: &UkfConfig) -> Result<Self> {
        let layout = params.shared_layout();
        let n = layout.node_count();
        if temps.len() != n {
            return Err(contract(format!("{} temperatures for {n} nodes", temps.len())));
        }
        let mut x = DVector::zeros(n + layout.p_len() + layout.q_len());
        x.rows_mut(0, n).copy_from(temps);
        x.rows_mut(n, layout.p_len()).copy_from(&params.p);
        x.rows_mut(n + layout.p_len(), layout.q_len()).copy_from(&params.q);
        let mut diag = DVector::zeros(x.len());
        for i in 0..n {
            diag[i] = config.initial_temp_std.powi(2);
        }
        for k in 0..layout.p_len() {
            diag[n + k] = (config.initial_p_rel_std * params.p[k]).powi(2);
        }
        for l in 0..layout.q_len() {
            diag[n + layout.p_len() + l] = (config.initial_q_rel_std * params.q[l]).powi(2);
        }
        Ok(Self { x, p: DMatrix::from_diagonal(&diag), step: 0, layout })
    }

    pub fn from_parts(x: DVector<f64>, p: DMatrix<f64>, layout: Arc<ParameterLayout>) -> Result<Self> {
        let dim = layout.node_count() + layout.p_len() + layout.q_len();
        if x.len() != dim || p.nrows() != dim || p.ncols() != dim {
            return Err(contract("state and covariance do not match the parameter layout"));
        }
        Ok(Self { x, p, step: 0, layout })
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn shared_layout(&self) -> Arc<ParameterLayout> {
        Arc::clone(&self.layout)
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.layout.node_count()
    }

    pub fn temps(&self) -> DVector<f64> {
        self.x.rows(0, self.n_nodes()).into_owned()
    }

    pub fn p_offset(&self) -> usize {
        self.n_nodes()
    }

    pub fn q_offset(&self) -> usize {
        self.n_nodes() + self.layout.p_len()
    }

    pub fn p_hat(&self) -> DVector<f64> {
        self.x.rows(self.p_offset(), self.layout.p_len()).into_owned()
    }

    pub fn q_hat(&self) -> DVector<f64> {
        self.x.rows(self.q_offset(), self.layout.q_len()).into_owned()
    }

    /// Mean parameters as a [`ParameterVector`].
    pub fn params(&self) -> ParameterVector {
        ParameterVector::new(self.shared_layout(), self.p_hat(), self.q_hat()).expect("layout matches")
    }

    /// Indices of the parameter entries (`p` then `q`) in the state vector.
    pub fn parameter_range(&self) -> std::ops::Range<usize> {
        self.p_offset()..self.dim()
    }

    /// Smallest eigenvalue of `P` relative to its largest diagonal entry.
    pub fn relative_min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.p) / crate::linalg::max_abs_diag(&self.p).max(f64::MIN_POSITIVE)
    }
}

/// Scaled sigma point set. `points` has one column per point.
#[derive(Debug, Clone)]
pub struct SigmaPoints {
    pub points: DMatrix<f64>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

/// `2L+1` scaled unscented points around `x`.
///
/// The square root factors the correlation matrix and rescales, which keeps
/// the pivot tolerance meaningful when blocks differ by many orders of
/// magnitude. If that fails, increasing diagonal jitter is tried before giving up.
pub fn sigma_points(x: &DVector<f64>, p: &DMatrix<f64>, config: &UkfConfig) -> Result<SigmaPoints> {
    let l = x.len();
    if p.nrows() != l || p.ncols() != l {
        return Err(contract("covariance shape does not match the mean"));
    }
    let lambda = config.lambda(l);
    let c = l as f64 + lambda;
    let sqrt = scaled_sqrt(p)?;
    let gamma = c.sqrt();
    let mut points = DMatrix::zeros(l, 2 * l + 1);
    points.set_column(0, x);
    for i in 0..l {
        let col = sqrt.column(i) * gamma;
        points.set_column(1 + i, &(x + &col));
        points.set_column(1 + l + i, &(x - &col));
    }
    let w = 1.0 / (2.0 * c);
    let mut wm = vec![w; 2 * l + 1];
    let mut wc = wm.clone();
    wm[0] = lambda / c;
    wc[0] = lambda / c + (1.0 - config.alpha * config.alpha + config.beta);
    Ok(SigmaPoints { points, wm, wc })
}

fn scaled_sqrt(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = p.nrows();
    let d: Vec<f64> = (0..l).map(|i| p[(i, i)].max(0.0).sqrt()).collect();
    let mut corr = p.clone();
    for i in 0..l {
        for j in 0..l {
            let s = d[i] * d[j];
            corr[(i, j)] = if s > 0.0 { p[(i, j)] / s } else { 0.0 };
        }
    }
    symmetrize(&mut corr);
    let mut last = None;
    for jitter in [0.0, 1e-12, 1e-10, 1e-8, 1e-6] {
        let mut m = corr.clone();
        for i in 0..l {
            if d[i] > 0.0 {
                m[(i, i)] += jitter;
            }
        }
        match psd_cholesky(&m) {
            Ok(lc) => {
                let mut s = lc;
                for i in 0..l {
                    for j in 0..l {
                        s[(i, j)] *= d[i];
                    }
                }
                return Ok(s);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap_or_else(|| Error::Degenerate("covariance square root failed".into())))
}

/// Outcome of [`predict`].
#[derive(Debug, Clone)]
pub struct Prediction {
    pub state: UkfState,
    /// Some sigma point had a non-positive parameter that was floored.
    pub clamped: bool,
}

/// Propagate the filter over one step of length `dt` with inputs `u` held.
/// `param_noise_scale` multiplies the parameter random-walk std (the monitor
/// raises it after a restore, convergence lowers it).
pub fn predict(
    ukf: &UkfState,
    u: &DVector<f64>,
    dt: f64,
    config: &UkfConfig,
    topology: &ThermalNetwork,
    param_noise_scale: f64,
) -> Result<Prediction> {
    let layout = ukf.layout();
    if u.len() != layout.q_len() {
        return Err(contract(format!("{} inputs for {} heaters", u.len(), layout.q_len())));
    }
    if u.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(contract("control inputs must lie in [0, 1]"));
    }
    let n = ukf.n_nodes();
    let (np, nq) = (layout.p_len(), layout.q_len());
    let sp = sigma_points(&ukf.x, &ukf.p, config)?;
    let mut props = sp.points.clone();
    let mut clamped = false;
    let internal = topology.internal_nodes();
    let external = topology.external_nodes();
    for c in 0..props.ncols() {
        let col = sp.points.column(c);
        let mut p = DVector::from_iterator(np, (0..np).map(|k| col[n + k]));
        for v in p.iter_mut() {
            if !(*v > 0.0) {
                *v = PARAMETER_FLOOR;
                clamped = true;
            }
        }
        let q = DVector::from_iterator(nq, (0..nq).map(|l| col[n + np + l]));
        let pv = ParameterVector::new(ukf.shared_layout(), p, q)?;
        let d = discretize(&assemble_continuous(&pv, topology)?, dt)?;
        let t_int = DVector::from_iterator(internal.len(), internal.iter().map(|&i| col[i]));
        let t_ext = DVector::from_iterator(external.len(), external.iter().map(|&i| col[i]));
        let next = d.step(&t_int, &t_ext, u);
        for (r, &i) in internal.iter().enumerate() {
            props[(i, c)] = next[r];
        }
    }
    let dim = ukf.dim();
    let mut mean = DVector::zeros(dim);
    for c in 0..props.ncols() {
        mean.axpy(sp.wm[c], &props.column(c), 1.0);
    }
    let mut cov = DMatrix::zeros(dim, dim);
    for c in 0..props.ncols() {
        let dev = props.column(c) - &mean;
        cov.ger(sp.wc[c], &dev, &dev, 1.0);
    }
    for i in 0..n {
        let s = if topology.is_external(i) { config.ext_process_std } else { config.temp_process_std };
        cov[(i, i)] += s * s;
    }
    for k in 0..np {
        let s = config.p_process_rel * param_noise_scale * mean[n + k].abs();
        cov[(n + k, n + k)] += s * s;
    }
    for l in 0..nq {
        let s = config.q_process_rel * param_noise_scale * mean[n + np + l].abs();
        cov[(n + np + l, n + np + l)] += s * s;
    }
    symmetrize(&mut cov);
    let state = UkfState { x: mean, p: cov, step: ukf.step + 1, layout: ukf.shared_layout() };
    Ok(Prediction { state, clamped })
}

/// Innovation of an update, kept for monitoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub residual: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl Innovation {
    /// `νᵀ S⁻¹ ν`.
    pub fn normalized_squared(&self) -> f64 {
        match self.covariance.clone().cholesky() {
            Some(ch) => self.residual.dot(&ch.solve(&self.residual)),
            None => f64::INFINITY,
        }
    }
}

/// Linear Kalman update with every node measured (`H = [I 0]`), Joseph form.
pub fn update(ukf: &UkfState, z: &DVector<f64>, config: &UkfConfig) -> Result<(UkfState, Innovation)> {
    let r = DVector::from_element(ukf.n_nodes(), config.measurement_std.powi(2));
    update_with_variance(ukf, z, &r)
}

/// [`update`] with an explicit variance per sensor.
pub fn update_with_variance(ukf: &UkfState, z: &DVector<f64>, r: &DVector<f64>) -> Result<(UkfState, Innovation)> {
    let n = ukf.n_nodes();
    if z.len() != n || r.len() != n {
        return Err(contract(format!("{} measurements for {n} nodes", z.len())));
    }
    let dim = ukf.dim();
    let residual = z - ukf.x.rows(0, n);
    let pht = ukf.p.columns(0, n).into_owned();
    let mut s = ukf.p.view((0, 0), (n, n)).into_owned();
    for i in 0..n {
        s[(i, i)] += r[i];
    }
    symmetrize(&mut s);
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("innovation covariance is not positive definite".into()))?;
    // K = P Hᵀ S⁻¹
    let k = chol.solve(&pht.transpose()).transpose();
    let x = &ukf.x + &k * &residual;
    let mut i_kh = DMatrix::<f64>::identity(dim, dim);
    for c in 0..n {
        for row in 0..dim {
            i_kh[(row, c)] -= k[(row, c)];
        }
    }
    let mut p = &i_kh * &ukf.p * i_kh.transpose() + &k * DMatrix::from_diagonal(r) * k.transpose();
    symmetrize(&mut p);
    let state = UkfState { x, p, step: ukf.step, layout: ukf.shared_layout() };
    Ok((state, Innovation { residual, covariance: s }))
}

/// The `|p|×|p|` covariance block of the RC products.
pub fn parameter_covariance_block(ukf: &UkfState) -> DMatrix<f64> {
    let (o, np) = (ukf.p_offset(), ukf.layout().p_len());
    let mut b = ukf.p.view((o, o), (np, np)).into_owned();
    symmetrize(&mut b);
    b
}

/// `P` is PSD up to a tolerance relative to its largest diagonal entry.
pub fn covariance_is_psd(ukf: &UkfState, rel_tol: f64) -> bool {
    ukf.relative_min_eigenvalue() > -rel_tol
}
