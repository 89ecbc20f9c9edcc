use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::DiffusionOperator;
use crate::physics::{ModelParams, QProfile};
use crate::stepper::{simulate, time_derivative, SimulationOptions, Trajectory};

use super::admissible::PiecewiseAnalytic;
use super::observe::{gradient_at, ObservationWindow};

/// Sup-norm tolerance under which two admissible `q` count as equal.
const Q_EQUAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// Requested observation point.
    pub x0: f64,
    /// Center of the cell actually observed.
    pub x0_snapped: f64,
    pub cell: usize,
    pub times: Vec<f64>,
    /// `|u - u~|(t, x0) + |u_x - u~_x|(t, x0)` at each stored time.
    pub discrepancy: Vec<f64>,
    /// `u - u~` at `x0`.
    pub difference: Vec<f64>,
    pub max_discrepancy: f64,
    pub q_equal: bool,
    /// Sign of the first nonzero `u - u~` sample, 0 if there is none.
    pub first_sign: i8,
}

fn run_pair(
    p: &ModelParams,
    pt: &ModelParams,
    u0: &(dyn Fn(f64, f64) -> f64 + Sync),
    u0_tilde: &(dyn Fn(f64, f64) -> f64 + Sync),
    t_end: f64,
    opts: &SimulationOptions,
) -> Result<(Trajectory, Trajectory)> {
    let (a, b) = rayon::join(|| simulate(p, u0, t_end, opts), || simulate(pt, u0_tilde, t_end, opts));
    Ok((a?, b?))
}

/// Simulates `q` and `q_tilde` from the same initial history and records the
/// discrepancy of `u` and `u_x` at `x0` over `(0, t_end]`.
///
/// `u0` is a closed form, so it carries the regularity the admissible class
/// asks for.
pub fn uniqueness_experiment(
    params: &ModelParams,
    q: &PiecewiseAnalytic,
    q_tilde: &PiecewiseAnalytic,
    u0: impl Fn(f64, f64) -> f64 + Sync,
    x0: f64,
    t_end: f64,
    opts: &SimulationOptions,
) -> Result<UniquenessReport> {
    if !(-1.0 < x0 && x0 < 1.0) {
        return Err(invalid(format!("x0 = {x0} must lie in (-1, 1)")));
    }
    let delta = params.kernel().delta();
    if !(t_end < delta) {
        return Err(invalid(format!("t_end = {t_end} must be below delta = {delta}")));
    }
    let p = params.with_q(QProfile::Piecewise(q.clone()))?;
    let pt = params.with_q(QProfile::Piecewise(q_tilde.clone()))?;
    let (u, ut) = run_pair(&p, &pt, &u0, &u0, t_end, opts)?;
    let grid = params.grid();
    let cell = grid.nearest_cell(x0);
    let mut discrepancy = Vec::with_capacity(u.len());
    let mut difference = Vec::with_capacity(u.len());
    for (a, b) in u.states.iter().zip(&ut.states) {
        let d = a[cell] - b[cell];
        let dx = gradient_at(grid, a, cell) - gradient_at(grid, b, cell);
        difference.push(d);
        discrepancy.push(d.abs() + dx.abs());
    }
    // Samples in (0, t_end]; the initial state is shared.
    let max_discrepancy = discrepancy.iter().skip(1).fold(0.0, |m: f64, &v| m.max(v));
    let first_sign = difference
        .iter()
        .skip(1)
        .find(|d| **d != 0.0)
        .map_or(0, |d| if *d > 0.0 { 1 } else { -1 });
    let q_equal = q.add(&q_tilde.scaled(-1.0)).sup_norm() <= Q_EQUAL_TOL;
    Ok(UniquenessReport {
        x0,
        x0_snapped: grid.centers()[cell],
        cell,
        times: u.times.clone(),
        discrepancy,
        difference,
        max_discrepancy,
        q_equal,
        first_sign,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `numerator / denominator`; 0 for identical inputs, infinite when
    /// only the denominator vanishes.
    pub ratio: f64,
    /// `||q - q~||^2_{L^2}`.
    pub numerator: f64,
    /// `||w(T')||^2_{D(A)}` with the graph norm `||w|| + ||Op w||`.
    pub snapshot_term: f64,
    /// `||w_t||^2` over `[t0, T] x [a, b]`.
    pub window_term: f64,
    /// Squared max over history slots of `||d|| + ||sqrt(rho) D_x d||`.
    pub history_term: f64,
    pub identical_inputs: bool,
}

impl StabilityReport {
    pub fn denominator(&self) -> f64 {
        self.snapshot_term + self.window_term + self.history_term
    }
}

/// Ratio of the coefficient error to the observation-data norms for one pair
/// of runs, an empirical lower estimate of the stability constant.
pub fn stability_ratio(
    params: &ModelParams,
    q: QProfile,
    q_tilde: QProfile,
    u0: impl Fn(f64, f64) -> f64 + Sync,
    u0_tilde: impl Fn(f64, f64) -> f64 + Sync,
    window: &ObservationWindow,
    opts: &SimulationOptions,
) -> Result<StabilityReport> {
    window.validate()?;
    let delta = params.kernel().delta();
    if !(window.t_prime < delta) {
        return Err(invalid(format!(
            "t_prime = {} must be below delta = {delta}",
            window.t_prime
        )));
    }
    let opts = SimulationOptions { stride: 1, ..*opts };
    let p = params.with_q(q)?;
    let pt = params.with_q(q_tilde)?;
    let (u, ut) = run_pair(&p, &pt, &u0, &u0_tilde, window.t_end, &opts)?;
    let grid = params.grid();
    let diff = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x - y).collect() };

    let dq = diff(p.q_cells(), pt.q_cells());
    let numerator = grid.l2_norm(&dq).powi(2);

    let k = u.index_of(window.t_prime)?;
    let w = diff(&u.states[k], &ut.states[k]);
    let snapshot_term = grid.domain_norm(&DiffusionOperator::assemble(grid), &w)?.powi(2);

    let cells = window.cells(grid);
    let ks = window.time_indices(&u);
    let mut window_term = 0.0;
    for (pos, &k) in ks.iter().enumerate() {
        let wt = diff(&time_derivative(&u, k)?, &time_derivative(&ut, k)?);
        let weight = if pos == 0 || pos + 1 == ks.len() {
            0.5 * u.dt
        } else {
            u.dt
        };
        window_term += weight * grid.dx() * cells.iter().map(|&i| wt[i] * wt[i]).sum::<f64>();
    }

    let history_term = u
        .history_0
        .iter()
        .zip(&ut.history_0)
        .map(|(a, b)| grid.v_norm(&diff(a, b)))
        .fold(0.0, f64::max)
        .powi(2);

    let denominator = snapshot_term + window_term + history_term;
    let identical_inputs = numerator == 0.0 && denominator == 0.0;
    let ratio = if identical_inputs {
        0.0
    } else if denominator == 0.0 {
        f64::INFINITY
    } else {
        numerator / denominator
    };
    Ok(StabilityReport {
        ratio,
        numerator,
        snapshot_term,
        window_term,
        history_term,
        identical_inputs,
    })
}
