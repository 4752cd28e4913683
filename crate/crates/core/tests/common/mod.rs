#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rc_excite::control::{build_mpc_problem, MpcConfig, MpcProblem};
use rc_excite::network::DiscreteDynamics;

/// Exact ZOH model of a single zone with resistance·capacitance `p` to the
/// outside and heater gain `q`, written out in closed form.
pub fn scalar_model(p: f64, q: f64, dt: f64) -> DiscreteDynamics {
    let phi = (-dt / p).exp();
    DiscreteDynamics {
        phi: DMatrix::from_element(1, 1, phi),
        gamma_ext: DMatrix::from_element(1, 1, 1.0 - phi),
        gamma_ctrl: DMatrix::from_element(1, 1, q * p * (1.0 - phi)),
        dt,
        internal: vec![0],
        external: vec![1],
    }
}

/// Stable two-zone model: a random contraction with non-negative inputs.
pub fn random_model(n: usize, rng: &mut ChaCha8Rng) -> DiscreteDynamics {
    if n == 1 {
        return scalar_model(rng.random_range(200.0..3000.0), rng.random_range(0.05..0.4), 15.0);
    }
    let mut phi = DMatrix::zeros(n, n);
    let mut gamma_ext = DMatrix::zeros(n, 1);
    for i in 0..n {
        let leak = rng.random_range(0.002..0.03);
        let mut row = 1.0 - leak;
        for j in 0..n {
            if j != i {
                let c = rng.random_range(0.0..0.01);
                phi[(i, j)] = c;
                row -= c;
            }
        }
        phi[(i, i)] = row;
        gamma_ext[(i, 0)] = leak;
    }
    let gamma_ctrl =
        DMatrix::from_fn(n, n, |i, l| if i == l { rng.random_range(0.5..3.0) } else { rng.random_range(0.0..0.3) });
    DiscreteDynamics { phi, gamma_ext, gamma_ctrl, dt: 15.0, internal: (0..n).collect(), external: vec![n] }
}

pub fn random_problem(seed: u64) -> MpcProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=2);
    let h = rng.random_range(1..=4);
    let model = random_model(n, &mut rng);
    let t0 = DVector::from_fn(n, |_, _| rng.random_range(55.0..76.0));
    let forecast: Vec<f64> = (0..h).map(|_| rng.random_range(0.0..70.0)).collect();
    let lo = DMatrix::from_fn(n, h, |_, _| rng.random_range(58.0..70.0));
    let hi = DMatrix::from_fn(n, h, |i, k| lo[(i, k)] + rng.random_range(0.0..14.0));
    let config = MpcConfig {
        horizon: h,
        q: if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.5..20.0) },
        r: rng.random_range(0.01..5.0),
        q_togo: if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.0..5.0) },
        ..MpcConfig::default()
    };
    build_mpc_problem(&model, &t0, &forecast, &lo, &hi, &config).unwrap()
}

/// Cost of an input sequence with the slack set to its smallest feasible value.
pub fn oracle_cost(p: &MpcProblem, u: &DMatrix<f64>) -> f64 {
    let m = &p.model;
    let (n, h) = (m.phi.nrows(), p.forecast.len());
    let mut t = p.t0.clone();
    let mut slack2 = 0.0;
    for k in 0..h {
        let mut next = &m.phi * &t + &m.gamma_ctrl * u.column(k);
        for i in 0..n {
            next[i] += m.gamma_ext.row(i).sum() * p.forecast[k];
        }
        t = next;
        for i in 0..n {
            let w = (p.r_min[(i, k)] - t[i]).max(t[i] - p.r_max[(i, k)]).max(0.0);
            slack2 += w * w;
        }
    }
    let mut term = 0.0;
    for i in 0..n {
        let mid = 0.5 * (p.r_min[(i, h - 1)] + p.r_max[(i, h - 1)]);
        term += (t[i] - mid).powi(2);
    }
    p.config.q * (slack2 / (n * h) as f64).sqrt() + p.config.r * u.sum() + p.config.q_togo * (term / n as f64).sqrt()
}

/// Exhaustive search over a uniform grid on `[0, 1]^(m·h)`. The grid is 0.05
/// up to four inputs and coarser beyond, so the result is an upper bound on
/// the optimum either way.
pub fn grid_oracle(p: &MpcProblem) -> (f64, DMatrix<f64>) {
    let m = p.model.gamma_ctrl.ncols();
    let h = p.forecast.len();
    let dims = m * h;
    let levels = match dims {
        0..=4 => 21,
        5..=6 => 6,
        _ => 5,
    };
    let mut idx = vec![0usize; dims];
    let mut best = (f64::INFINITY, DMatrix::zeros(m, h));
    loop {
        let u = DMatrix::from_fn(m, h, |l, k| idx[k * m + l] as f64 / (levels - 1) as f64);
        let c = oracle_cost(p, &u);
        if c < best.0 {
            best = (c, u);
        }
        let mut d = 0;
        loop {
            if d == dims {
                return best;
            }
            idx[d] += 1;
            if idx[d] < levels {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// Largest violation of the problem's constraints by a solution.
pub fn constraint_violation(p: &MpcProblem, u: &DMatrix<f64>, t_pred: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for &v in u.iter() {
        worst = worst.max(-v).max(v - 1.0);
    }
    for &v in w.iter() {
        worst = worst.max(-v);
    }
    for k in 0..t_pred.ncols() {
        for i in 0..t_pred.nrows() {
            worst = worst.max(p.r_min[(i, k)] - t_pred[(i, k)] - w[(i, k)]);
            worst = worst.max(t_pred[(i, k)] - w[(i, k)] - p.r_max[(i, k)]);
        }
    }
    worst
}
