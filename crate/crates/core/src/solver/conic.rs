//! Primal-dual interior-point method for small linear cone programs
//!
//! ```text
//! minimize    cᵀx
//! subject to  G x + s = h,   s ∈ K
//! ```
//!
//! where `K` is a nonnegative orthant followed by second-order cones. The
//! method is infeasible-start path following with Nesterov-Todd scaling and a
//! Mehrotra predictor-corrector step, in the form described by Vandenberghe
//! for CVXOPT's cone solvers. `G` is stored by sparse rows; the reduced
//! normal matrix `Gᵀ W⁻² G` is assembled densely and factored with a packed
//! Cholesky.

use crate::linalg::DenseCholesky;

/// One sparse row of `G`: `(column, value)` pairs in increasing column order.
pub type SparseRow = Vec<(usize, f64)>;

/// A cone program. Rows of `g` and entries of `h` are ordered: `nonneg`
/// orthant rows first, then one contiguous block per entry of `soc`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeProgram {
    pub c: Vec<f64>,
    pub g: Vec<SparseRow>,
    pub h: Vec<f64>,
    pub nonneg: usize,
    pub soc: Vec<usize>,
}

impl ConeProgram {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_rows(&self) -> usize {
        self.h.len()
    }

    fn check(&self) -> Result<(), String> {
        let rows = self.nonneg + self.soc.iter().sum::<usize>();
        if self.g.len() != rows || self.h.len() != rows {
            return Err(format!("{} rows of G and {} of h for a cone of dimension {rows}", self.g.len(), self.h.len()));
        }
        if self.soc.iter().any(|&d| d < 2) {
            return Err("second-order cones need dimension ≥ 2".into());
        }
        let n = self.c.len();
        for (r, row) in self.g.iter().enumerate() {
            if row.windows(2).any(|w| w[0].0 >= w[1].0) || row.iter().any(|&(j, _)| j >= n) {
                return Err(format!("row {r} of G is not sorted or has an out-of-range column"));
            }
        }
        if self.c.iter().chain(&self.h).chain(self.g.iter().flatten().map(|(_, v)| v)).any(|v| !v.is_finite()) {
            return Err("problem data must be finite".into());
        }
        Ok(())
    }

    /// `G x`
    pub fn g_mul(&self, x: &[f64]) -> Vec<f64> {
        self.g.iter().map(|row| row.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    /// `Gᵀ y`
    pub fn gt_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.c.len()];
        for (row, &yr) in self.g.iter().zip(y) {
            if yr != 0.0 {
                for &(j, v) in row {
                    out[j] += v * yr;
                }
            }
        }
        out
    }

    fn degree(&self) -> usize {
        self.nonneg + self.soc.len()
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.soc.iter().scan(self.nonneg, |start, &d| {
            let b = (*start, d);
            *start += d;
            Some(b)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub max_iter: usize,
    pub abstol: f64,
    pub reltol: f64,
    pub feastol: f64,
    pub step_fraction: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { max_iter: 100, abstol: 1e-9, reltol: 1e-10, feastol: 1e-9, step_fraction: 0.99 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub z: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub iterations: usize,
    /// `‖Gx + s − h‖∞`
    pub primal_residual: f64,
    /// `‖Gᵀz + c‖∞`
    pub dual_residual: f64,
    /// `sᵀz`
    pub gap: f64,
}

// ---------------------------------------------------------------------------
// Cone arithmetic

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `x₀² − ‖x₁‖²`, computed as a product to limit cancellation.
fn soc_det(x: &[f64]) -> f64 {
    let n1 = norm2(&x[1..]);
    (x[0] - n1) * (x[0] + n1)
}

/// Smallest "eigenvalue" of `x` in the cone: `x_i` for orthant entries,
/// `x₀ − ‖x₁‖` for second-order blocks.
fn min_cone_value(prob: &ConeProgram, x: &[f64]) -> f64 {
    let mut m = x[..prob.nonneg].iter().copied().fold(f64::INFINITY, f64::min);
    for (start, d) in prob.blocks() {
        let b = &x[start..start + d];
        m = m.min(b[0] - norm2(&b[1..]));
    }
    m
}

fn add_identity(prob: &ConeProgram, x: &mut [f64], t: f64) {
    for v in &mut x[..prob.nonneg] {
        *v += t;
    }
    for (start, _) in prob.blocks() {
        x[start] += t;
    }
}

/// Nesterov-Todd scaling point of one second-order block.
#[derive(Debug, Clone)]
struct SocScaling {
    eta: f64,
    // reflection vector of the scaling, vᵀJv = 1; W = η(2vvᵀ − J)
    w: Vec<f64>,
}

impl SocScaling {
    fn new(s: &[f64], z: &[f64]) -> Option<Self> {
        let ds = soc_det(s);
        let dz = soc_det(z);
        if !(ds > 0.0 && dz > 0.0) {
            return None;
        }
        let (rs, rz) = (ds.sqrt(), dz.sqrt());
        let sb: Vec<f64> = s.iter().map(|v| v / rs).collect();
        let zb: Vec<f64> = z.iter().map(|v| v / rz).collect();
        let gamma = ((1.0 + dot(&sb, &zb)) / 2.0).sqrt();
        // w̄ = (s̄ + J z̄) / (2γ)
        let mut w = vec![0.0; s.len()];
        w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
        for i in 1..w.len() {
            w[i] = (sb[i] - zb[i]) / (2.0 * gamma);
        }
        // v = (w̄ + e) / sqrt(2(w̄₀ + 1))
        let scale = (2.0 * (w[0] + 1.0)).sqrt();
        w[0] += 1.0;
        for v in &mut w {
            *v /= scale;
        }
        let eta = (ds / dz).sqrt().sqrt();
        Some(Self { eta, w })
    }

    /// `W x = η (2 v vᵀ x − J x)`
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let wv = dot(&self.w, v);
        for i in 0..v.len() {
            let jv = if i == 0 { v[0] } else { -v[i] };
            out[i] = self.eta * (2.0 * self.w[i] * wv - jv);
        }
    }

    /// `W⁻¹ x = (1/η) (2 J v vᵀ J x − J x)`
    fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        // vᵀ J x
        let wjv = self.w[0] * v[0] - dot(&self.w[1..], &v[1..]);
        for i in 0..v.len() {
            let (jw, jv) = if i == 0 { (self.w[0], v[0]) } else { (-self.w[i], -v[i]) };
            out[i] = (2.0 * jw * wjv - jv) / self.eta;
        }
    }
}

/// Full NT scaling for the cone: `d` for the orthant (`W = diag(d)`), one
/// [`SocScaling`] per block.
#[derive(Debug, Clone)]
struct Scaling {
    d: Vec<f64>,
    soc: Vec<SocScaling>,
}

impl Scaling {
    fn new(prob: &ConeProgram, s: &[f64], z: &[f64]) -> Option<Self> {
        let l = prob.nonneg;
        let mut d = Vec::with_capacity(l);
        for i in 0..l {
            if !(s[i] > 0.0 && z[i] > 0.0) {
                return None;
            }
            d.push((s[i] / z[i]).sqrt());
        }
        let mut soc = Vec::with_capacity(prob.soc.len());
        for (start, dim) in prob.blocks() {
            soc.push(SocScaling::new(&s[start..start + dim], &z[start..start + dim])?);
        }
        Some(Self { d, soc })
    }

    fn apply(&self, prob: &ConeProgram, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..prob.nonneg {
            out[i] = self.d[i] * v[i];
        }
        for ((start, dim), sc) in prob.blocks().zip(&self.soc) {
            sc.apply(&v[start..start + dim], &mut out[start..start + dim]);
        }
        out
    }

    fn apply_inv(&self, prob: &ConeProgram, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        for i in 0..prob.nonneg {
            out[i] = v[i] / self.d[i];
        }
        for ((start, dim), sc) in prob.blocks().zip(&self.soc) {
            sc.apply_inv(&v[start..start + dim], &mut out[start..start + dim]);
        }
        out
    }
}

/// Jordan product `x ∘ y`.
fn jordan(prob: &ConeProgram, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..prob.nonneg {
        out[i] = x[i] * y[i];
    }
    for (start, dim) in prob.blocks() {
        let (xb, yb) = (&x[start..start + dim], &y[start..start + dim]);
        out[start] = dot(xb, yb);
        for i in 1..dim {
            out[start + i] = xb[0] * yb[i] + yb[0] * xb[i];
        }
    }
    out
}

/// Solve `λ ∘ u = d` for `u`.
fn jordan_div(prob: &ConeProgram, lambda: &[f64], d: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; d.len()];
    for i in 0..prob.nonneg {
        out[i] = d[i] / lambda[i];
    }
    for (start, dim) in prob.blocks() {
        let (l, db) = (&lambda[start..start + dim], &d[start..start + dim]);
        let det = soc_det(l);
        let u0 = (l[0] * db[0] - dot(&l[1..], &db[1..])) / det;
        out[start] = u0;
        for i in 1..dim {
            out[start + i] = (db[i] - u0 * l[i]) / l[0];
        }
    }
    out
}

/// Largest `α ≥ 0` with `x + α d` in the cone, for interior `x`.
fn max_step(prob: &ConeProgram, x: &[f64], d: &[f64]) -> f64 {
    let mut alpha = f64::INFINITY;
    for i in 0..prob.nonneg {
        if d[i] < 0.0 {
            alpha = alpha.min(-x[i] / d[i]);
        }
    }
    for (start, dim) in prob.blocks() {
        let (xb, db) = (&x[start..start + dim], &d[start..start + dim]);
        // q(α) = a α² + b α + c with c = det(x) > 0
        let a = db[0] * db[0] - dot(&db[1..], &db[1..]);
        let b = 2.0 * (xb[0] * db[0] - dot(&xb[1..], &db[1..]));
        let c = soc_det(xb);
        let root = smallest_positive_root(a, b, c);
        let mut lim = root;
        if db[0] < 0.0 {
            lim = lim.min(-xb[0] / db[0]);
        }
        alpha = alpha.min(lim);
    }
    alpha
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> f64 {
    if a == 0.0 {
        return if b < 0.0 { -c / b } else { f64::INFINITY };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return f64::INFINITY;
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let mut best = f64::INFINITY;
    for r in [q / a, if q != 0.0 { c / q } else { f64::INFINITY }] {
        if r > 0.0 && r < best {
            best = r;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Linear algebra for the reduced system

/// Lower triangle of `Gᵀ W⁻² G`, row-major dense `n×n`.
fn normal_matrix(prob: &ConeProgram, sc: &Scaling) -> Vec<f64> {
    let n = prob.n_vars();
    let mut h = vec![0.0; n * n];
    let outer = |row: &SparseRow, w: f64, h: &mut Vec<f64>| {
        for (p, &(a, va)) in row.iter().enumerate() {
            let base = a * n;
            let f = w * va;
            for &(b, vb) in &row[..=p] {
                h[base + b] += f * vb;
            }
        }
    };
    for i in 0..prob.nonneg {
        let w = 1.0 / (sc.d[i] * sc.d[i]);
        outer(&prob.g[i], w, &mut h);
    }
    for ((start, dim), s) in prob.blocks().zip(&sc.soc) {
        // W⁻² = (1/η²)(I + 4‖a‖² a aᵀ − 2 a vᵀ − 2 v aᵀ), a = J v
        let inv_eta2 = 1.0 / (s.eta * s.eta);
        let a: Vec<f64> = s.w.iter().enumerate().map(|(i, &v)| if i == 0 { v } else { -v }).collect();
        let aa = dot(&a, &a);
        let mut ga = vec![0.0; n];
        let mut gw = vec![0.0; n];
        for k in 0..dim {
            let row = &prob.g[start + k];
            outer(row, inv_eta2, &mut h);
            for &(j, v) in row {
                ga[j] += v * a[k];
                gw[j] += v * s.w[k];
            }
        }
        let nz: Vec<usize> = (0..n).filter(|&j| ga[j] != 0.0 || gw[j] != 0.0).collect();
        for (p, &i) in nz.iter().enumerate() {
            for &j in &nz[..=p] {
                h[i * n + j] += inv_eta2 * (4.0 * aa * ga[i] * ga[j] - 2.0 * ga[i] * gw[j] - 2.0 * gw[i] * ga[j]);
            }
        }
    }
    h
}

fn factor_with_regularization(mut h: Vec<f64>, n: usize) -> Option<DenseCholesky> {
    if let Some(f) = DenseCholesky::factor(&h, n) {
        return Some(f);
    }
    let scale = (0..n).map(|i| h[i * n + i].abs()).fold(0.0, f64::max).max(1.0);
    let mut delta = 1e-13 * scale;
    for _ in 0..8 {
        for i in 0..n {
            h[i * n + i] += delta;
        }
        if let Some(f) = DenseCholesky::factor(&h, n) {
            return Some(f);
        }
        delta *= 100.0;
    }
    None
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
    // scaled versions
    ds_t: Vec<f64>,
    dz_t: Vec<f64>,
}

/// Solve the Newton system with right-hand sides `(−rx, −rz, d_s)`, given
/// `u_s = λ⁻¹ ⋄ d_s`.
fn newton(prob: &ConeProgram, sc: &Scaling, chol: &DenseCholesky, rx: &[f64], rz: &[f64], u_s: &[f64]) -> Direction {
    let winv_rz = sc.apply_inv(prob, rz);
    // HΔx = −rx − Gᵀ W⁻¹ (u_s + W⁻¹ rz)
    let tmp: Vec<f64> = u_s.iter().zip(&winv_rz).map(|(a, b)| a + b).collect();
    let back = sc.apply_inv(prob, &tmp);
    let gt = prob.gt_mul(&back);
    let mut dx: Vec<f64> = rx.iter().zip(&gt).map(|(a, b)| -a - b).collect();
    chol.solve_in_place(&mut dx);
    // Δs̃ = −W⁻¹ (GΔx + rz),  Δz̃ = u_s − Δs̃
    let gdx = prob.g_mul(&dx);
    let r: Vec<f64> = gdx.iter().zip(rz).map(|(a, b)| a + b).collect();
    let ds_t: Vec<f64> = sc.apply_inv(prob, &r).into_iter().map(|v| -v).collect();
    let dz_t: Vec<f64> = u_s.iter().zip(&ds_t).map(|(a, b)| a - b).collect();
    let ds = sc.apply(prob, &ds_t);
    let dz = sc.apply_inv(prob, &dz_t);
    Direction { dx, ds, dz, ds_t, dz_t }
}

// ---------------------------------------------------------------------------

fn initial_point(prob: &ConeProgram) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = prob.n_vars();
    let m = prob.n_rows();
    // GᵀG, by treating every row as an orthant row with unit scaling
    let mut flat = prob.clone();
    flat.nonneg = m;
    flat.soc.clear();
    let gtg = normal_matrix(&flat, &Scaling { d: vec![1.0; m], soc: Vec::new() });
    let chol = factor_with_regularization(gtg, n)?;
    let mut x = prob.gt_mul(&prob.h);
    chol.solve_in_place(&mut x);
    let gx = prob.g_mul(&x);
    let mut s: Vec<f64> = prob.h.iter().zip(&gx).map(|(h, g)| h - g).collect();
    let mut y: Vec<f64> = prob.c.iter().map(|v| -v).collect();
    chol.solve_in_place(&mut y);
    let mut z = prob.g_mul(&y);
    for v in [&mut s, &mut z] {
        let m = min_cone_value(prob, v);
        let scale = norm_inf(v).max(1.0);
        if m < 1e-8 * scale {
            add_identity(prob, v, 1.0 - m);
        }
    }
    Some((x, s, z))
}

pub fn solve(prob: &ConeProgram, settings: &SolverSettings) -> Result<ConeSolution, String> {
    prob.check()?;
    let n = prob.n_vars();
    let m = prob.n_rows();
    let degree = prob.degree() as f64;
    let failure = |status, iterations| ConeSolution {
        status,
        x: vec![f64::NAN; n],
        s: vec![f64::NAN; m],
        z: vec![f64::NAN; m],
        primal_objective: f64::NAN,
        dual_objective: f64::NAN,
        iterations,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
    };
    if m == 0 {
        return Err("problem has no constraints".into());
    }
    let Some((mut x, mut s, mut z)) = initial_point(prob) else {
        return Ok(failure(SolveStatus::NumericalFailure, 0));
    };
    let hnorm = norm_inf(&prob.h).max(1.0);
    let cnorm = norm_inf(&prob.c).max(1.0);
    let mut best: Option<ConeSolution> = None;
    for iter in 0..=settings.max_iter {
        let gx = prob.g_mul(&x);
        let rz: Vec<f64> = (0..m).map(|i| gx[i] + s[i] - prob.h[i]).collect();
        let gtz = prob.gt_mul(&z);
        let rx: Vec<f64> = (0..n).map(|j| gtz[j] + prob.c[j]).collect();
        let gap = dot(&s, &z);
        let pcost = dot(&prob.c, &x);
        let dcost = -dot(&prob.h, &z);
        let pres = norm_inf(&rz);
        let dres = norm_inf(&rx);
        let current = ConeSolution {
            status: SolveStatus::Optimal,
            x: x.clone(),
            s: s.clone(),
            z: z.clone(),
            primal_objective: pcost,
            dual_objective: dcost,
            iterations: iter,
            primal_residual: pres,
            dual_residual: dres,
            gap,
        };
        if ![pcost, dcost, gap, pres, dres].iter().all(|v| v.is_finite()) {
            return Ok(best
                .map(|b| ConeSolution { status: SolveStatus::NumericalFailure, ..b })
                .unwrap_or_else(|| failure(SolveStatus::NumericalFailure, iter)));
        }
        let relgap = if pcost < 0.0 {
            gap / -pcost
        } else if dcost > 0.0 {
            gap / dcost
        } else {
            f64::INFINITY
        };
        let feasible = pres <= settings.feastol * hnorm && dres <= settings.feastol * cnorm;
        if feasible && (gap <= settings.abstol || relgap <= settings.reltol) {
            return Ok(current);
        }
        best = Some(current);
        if iter == settings.max_iter {
            break;
        }

        let Some(sc) = Scaling::new(prob, &s, &z) else {
            break;
        };
        let lambda = sc.apply(prob, &z);
        let Some(chol) = factor_with_regularization(normal_matrix(prob, &sc), n) else {
            break;
        };
        let mu = gap / degree;

        // predictor: d_s = −λ∘λ, so u_s = −λ
        let u_aff: Vec<f64> = lambda.iter().map(|v| -v).collect();
        let aff = newton(prob, &sc, &chol, &rx, &rz, &u_aff);
        let a_aff = max_step(prob, &lambda, &aff.ds_t).min(max_step(prob, &lambda, &aff.dz_t)).min(1.0);
        let s_aff: Vec<f64> = (0..m).map(|i| s[i] + a_aff * aff.ds[i]).collect();
        let z_aff: Vec<f64> = (0..m).map(|i| z[i] + a_aff * aff.dz[i]).collect();
        let sigma = (dot(&s_aff, &z_aff) / gap).clamp(0.0, 1.0).powi(3);

        // corrector: d_s = −λ∘λ − Δs̃ₐ∘Δz̃ₐ + σμe
        let ll = jordan(prob, &lambda, &lambda);
        let cross = jordan(prob, &aff.ds_t, &aff.dz_t);
        let mut d_s: Vec<f64> = (0..m).map(|i| -ll[i] - cross[i]).collect();
        add_identity(prob, &mut d_s, sigma * mu);
        let u_s = jordan_div(prob, &lambda, &d_s);
        let dir = newton(prob, &sc, &chol, &rx, &rz, &u_s);
        let a_max = max_step(prob, &lambda, &dir.ds_t).min(max_step(prob, &lambda, &dir.dz_t));
        let alpha = (settings.step_fraction * a_max).min(1.0);
        if !(alpha > 0.0) {
            break;
        }
        for j in 0..n {
            x[j] += alpha * dir.dx[j];
        }
        for i in 0..m {
            s[i] += alpha * dir.ds[i];
            z[i] += alpha * dir.dz[i];
        }
    }
    let b = best.expect("at least one iterate evaluated");
    let status =
        if b.iterations >= settings.max_iter { SolveStatus::MaxIterations } else { SolveStatus::NumericalFailure };
    Ok(ConeSolution { status, ..b })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_rows(rows: &[&[f64]]) -> Vec<SparseRow> {
        rows.iter().map(|r| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, &v)| (j, v)).collect()).collect()
    }

    #[test]
    fn small_lp() {
        // min -x - y  s.t. x + 2y ≤ 4, 3x + y ≤ 6, x, y ≥ 0  → (8/5, 6/5)
        let prob = ConeProgram {
            c: vec![-1.0, -1.0],
            g: dense_rows(&[&[1.0, 2.0], &[3.0, 1.0], &[-1.0, 0.0], &[0.0, -1.0]]),
            h: vec![4.0, 6.0, 0.0, 0.0],
            nonneg: 4,
            soc: vec![],
        };
        let sol = solve(&prob, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.6).abs() < 1e-7);
        assert!((sol.x[1] - 1.2).abs() < 1e-7);
        assert!((sol.primal_objective + 2.8).abs() < 1e-7);
    }

    #[test]
    fn distance_to_point_via_cone() {
        // min t  s.t. ‖x − (3, 4)‖ ≤ t,  x₁ ≤ 0  → x = (0, 4), t = 3
        // row order: orthant row x₁ ≤ 0, then cone (t, x − p)
        let prob = ConeProgram {
            c: vec![0.0, 0.0, 1.0],
            g: vec![vec![(0, 1.0)], vec![(2, -1.0)], vec![(0, -1.0)], vec![(1, -1.0)]],
            h: vec![0.0, 0.0, -3.0, -4.0],
            nonneg: 1,
            soc: vec![3],
        };
        let sol = solve(&prob, &SolverSettings::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[2] - 3.0).abs() < 1e-7, "{:?}", sol.x);
        assert!(sol.x[0].abs() < 1e-6);
        assert!((sol.x[1] - 4.0).abs() < 1e-6);
    }

    #[test]
    fn unbounded_direction_without_cone_reports_failure() {
        // min -x s.t. -x ≤ 0 (unbounded)
        let prob = ConeProgram { c: vec![-1.0], g: vec![vec![(0, -1.0)]], h: vec![0.0], nonneg: 1, soc: vec![] };
        let sol = solve(&prob, &SolverSettings { max_iter: 40, ..Default::default() }).unwrap();
        assert_ne!(sol.status, SolveStatus::Optimal);
    }

    #[test]
    fn infeasible_lp_is_not_optimal() {
        // x ≤ -1 and x ≥ 1
        let prob = ConeProgram {
            c: vec![1.0],
            g: vec![vec![(0, 1.0)], vec![(0, -1.0)]],
            h: vec![-1.0, -1.0],
            nonneg: 2,
            soc: vec![],
        };
        let sol = solve(&prob, &SolverSettings { max_iter: 60, ..Default::default() }).unwrap();
        assert_ne!(sol.status, SolveStatus::Optimal);
    }

    #[test]
    fn rejects_malformed_problem() {
        let prob = ConeProgram { c: vec![1.0], g: vec![vec![(3, 1.0)]], h: vec![1.0], nonneg: 1, soc: vec![] };
        assert!(solve(&prob, &SolverSettings::default()).is_err());
    }

    #[test]
    fn scaling_maps_z_to_inverse_image_of_s() {
        let s = [3.0, 1.0, -0.5];
        let z = [2.0, -0.3, 0.9];
        let sc = SocScaling::new(&s, &z).unwrap();
        let mut wz = [0.0; 3];
        sc.apply(&z, &mut wz);
        let mut winv_s = [0.0; 3];
        sc.apply_inv(&s, &mut winv_s);
        for i in 0..3 {
            assert!((wz[i] - winv_s[i]).abs() < 1e-12);
        }
        let mut back = [0.0; 3];
        sc.apply_inv(&wz, &mut back);
        for i in 0..3 {
            assert!((back[i] - z[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_length_hits_cone_boundary() {
        let prob = ConeProgram { c: vec![], g: vec![vec![]; 3], h: vec![0.0; 3], nonneg: 0, soc: vec![3] };
        let x = [2.0, 0.0, 0.0];
        let d = [0.0, 1.0, 0.0];
        assert!((max_step(&prob, &x, &d) - 2.0).abs() < 1e-12);
        let d = [1.0, 0.5, 0.0];
        assert!(max_step(&prob, &x, &d).is_infinite());
    }
}
