use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::physics::{ModelParams, QProfile};
use crate::stepper::{select_dt, simulate, SimulationOptions, Simulator, TimeScheme, Trajectory};

use super::observe::{ObservationKind, ObservationSet, ObservationWindow};
use super::ReconstructionResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LeastSquaresOptions {
    pub max_iters: usize,
    /// Stop once `||g|| <= grad_tol ||g_0||`.
    pub grad_tol: f64,
    /// Central-difference step for the gradient.
    pub fd_step: f64,
    /// Constant starting value of every cell.
    pub initial_value: f64,
    pub target_dt: f64,
    pub scheme: TimeScheme,
    /// Accept windows reaching past `delta`. No uniqueness or stability
    /// result covers that regime; results are flagged exploratory.
    pub allow_beyond_delta: bool,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tol: 1e-9,
            fd_step: 1e-6,
            initial_value: 1.0,
            target_dt: 1e-3,
            scheme: TimeScheme::BackwardEuler,
            allow_beyond_delta: false,
        }
    }
}

/// Relative gradient reduction below which a run counts as stalled.
const STALL_REDUCTION: f64 = 1e-3;
const ARMIJO_C: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Forward map `q -> (localized u_t, snapshot)` on a fixed time grid.
struct ForwardModel<'a, F> {
    params: &'a ModelParams,
    u0: F,
    window: ObservationWindow,
    dt: f64,
    steps: usize,
    scheme: TimeScheme,
    /// `H(t_k)` for every step while it is frozen to the initial history.
    frozen_memory: Option<Vec<Vec<f64>>>,
}

impl<'a, F: Fn(f64, f64) -> f64 + Sync> ForwardModel<'a, F> {
    fn new(params: &'a ModelParams, u0: F, window: ObservationWindow, opts: &LeastSquaresOptions) -> Result<Self> {
        let kernel = params.kernel();
        let dt = select_dt(kernel.tau(), kernel.delta(), window.t_end, opts.target_dt)?;
        let steps = (window.t_end / dt).round() as usize;
        let frozen = kernel.support_flag() && window.t_end < kernel.delta();
        let frozen_memory = if frozen {
            let sim = SimulationOptions {
                target_dt: opts.target_dt,
                scheme: opts.scheme,
                record_memory: true,
                bound_slack: f64::INFINITY,
                ..SimulationOptions::default()
            };
            Some(simulate(params, &u0, window.t_end, &sim)?.memory_terms)
        } else {
            None
        };
        Ok(Self {
            params,
            u0,
            window,
            dt,
            steps,
            scheme: opts.scheme,
            frozen_memory,
        })
    }

    fn trajectory(&self, q: &[f64]) -> Result<Trajectory> {
        let p = self.params.with_q(QProfile::Cells { values: q.to_vec() })?;
        let mut sim = Simulator::new(&p, &self.u0, self.dt, self.scheme)?;
        let mut states = Vec::with_capacity(self.steps + 1);
        states.push(sim.state().to_vec());
        for k in 0..self.steps {
            match &self.frozen_memory {
                Some(h) => sim.advance_with_memory(&h[k])?,
                None => sim.advance()?,
            };
            states.push(sim.state().to_vec());
        }
        Ok(Trajectory {
            times: (0..=self.steps).map(|k| k as f64 * self.dt).collect(),
            states,
            history_0: Vec::new(),
            final_history: Vec::new(),
            memory_terms: Vec::new(),
            params_digest: String::new(),
            dt: self.dt,
            stride: 1,
            grid: p.grid().clone(),
            sup_norm_seen: f64::NAN,
        })
    }

    fn observe(&self, q: &[f64]) -> Result<(ObservationSet, ObservationSet)> {
        let traj = self.trajectory(q)?;
        Ok((
            ObservationSet::localized_exact(&traj, &self.window, 0.0, None)?,
            ObservationSet::snapshot_exact(&traj, self.window.t_prime, 0.0, None)?,
        ))
    }
}

/// Misfit `||u_t - u_t^obs||^2 + ||w||^2 + ||Op w||^2 + reg ||q||^2` with
/// `w = u(T') - u^obs(T')` and discrete `L^2` weights.
struct Objective<'a, F> {
    model: ForwardModel<'a, F>,
    localized: &'a ObservationSet,
    snapshot: &'a ObservationSet,
    reg_weight: f64,
    time_weights: Vec<f64>,
}

impl<F: Fn(f64, f64) -> f64 + Sync> Objective<'_, F> {
    fn eval(&self, q: &[f64]) -> Result<f64> {
        let dx = self.model.params.grid().dx();
        let (loc, snap) = self.model.observe(q)?;
        if loc.times.len() != self.localized.times.len() || loc.cells != self.localized.cells {
            return Err(invalid("observation samples do not match the forward time grid"));
        }
        let mut j = 0.0;
        for ((pred, obs), w) in loc.values.iter().zip(&self.localized.values).zip(&self.time_weights) {
            let s: f64 = pred.iter().zip(obs).map(|(a, b)| (a - b) * (a - b)).sum();
            j += w * dx * s;
        }
        let state: f64 = snap.values[0]
            .iter()
            .zip(&self.snapshot.values[0])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let op: f64 = snap.derivative[0]
            .iter()
            .zip(&self.snapshot.derivative[0])
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let reg: f64 = q.iter().map(|v| v * v).sum();
        Ok(j + dx * (state + op + self.reg_weight * reg))
    }

    fn gradient(&self, q: &[f64], h: f64) -> Result<Vec<f64>> {
        (0..q.len())
            .into_par_iter()
            .map(|i| {
                let step = h * q[i].abs().max(1.0);
                let mut qp = q.to_vec();
                qp[i] += step;
                let mut qm = q.to_vec();
                qm[i] -= step;
                Ok((self.eval(&qp)? - self.eval(&qm)?) / (2.0 * step))
            })
            .collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn window_of(localized: &ObservationSet, snapshot: &ObservationSet) -> Result<ObservationWindow> {
    let (a, b, t0, t_end) = match localized.kind {
        ObservationKind::Localized { a, b, t0, t_end } => (a, b, t0, t_end),
        _ => return Err(invalid("first observation set must be localized")),
    };
    let t_prime = match snapshot.kind {
        ObservationKind::Snapshot { t_prime } => t_prime,
        _ => return Err(invalid("second observation set must be a snapshot")),
    };
    let w = ObservationWindow {
        t0,
        t_prime,
        t_end,
        a,
        b,
    };
    w.validate()?;
    Ok(w)
}

/// Least-squares fit of `q` (one value per cell) to localized `u_t` data and
/// a snapshot at `t_prime`, by gradient descent with Armijo backtracking.
///
/// Trial steps use the Barzilai-Borwein length; the gradient is a central
/// difference over cells with the forward solves run in parallel.
pub fn reconstruct_q_leastsq(
    localized: &ObservationSet,
    snapshot: &ObservationSet,
    params: &ModelParams,
    u0: impl Fn(f64, f64) -> f64 + Sync,
    reg_weight: f64,
    opts: &LeastSquaresOptions,
) -> Result<ReconstructionResult> {
    if !(reg_weight >= 0.0) {
        return Err(invalid("reg_weight must be >= 0"));
    }
    let window = window_of(localized, snapshot)?;
    let delta = params.kernel().delta();
    let exploratory = !(window.t_end < delta);
    if exploratory && !opts.allow_beyond_delta {
        return Err(invalid(format!(
            "observation window ends at {} >= delta = {delta}; set allow_beyond_delta for exploratory runs",
            window.t_end
        )));
    }
    let model = ForwardModel::new(params, u0, window, opts)?;
    let sample_dt = model.dt;
    let nt = localized.times.len();
    let time_weights = (0..nt)
        .map(|k| {
            if k == 0 || k + 1 == nt {
                0.5 * sample_dt
            } else {
                sample_dt
            }
        })
        .collect();
    let objective = Objective {
        model,
        localized,
        snapshot,
        reg_weight,
        time_weights,
    };

    let n = params.grid().n();
    let mut q = vec![opts.initial_value; n];
    let mut j = objective.eval(&q)?;
    let mut g = objective.gradient(&q, opts.fd_step)?;
    let g0 = norm(&g);
    let mut history = vec![j];
    let mut alpha = 1.0 / g0.max(1.0);
    let mut iterations = 0;
    while iterations < opts.max_iters && norm(&g) > opts.grad_tol * g0 && g0 > 0.0 {
        let gg: f64 = g.iter().map(|a| a * a).sum();
        let mut step = alpha;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial: Vec<f64> = q.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let jt = objective.eval(&trial)?;
            if jt <= j - ARMIJO_C * step * gg {
                accepted = Some((trial, jt));
                break;
            }
            step *= BACKTRACK;
        }
        let Some((q_new, j_new)) = accepted else {
            break;
        };
        let g_new = objective.gradient(&q_new, opts.fd_step)?;
        let s: Vec<f64> = q_new.iter().zip(&q).map(|(a, b)| a - b).collect();
        let sy: f64 = s
            .iter()
            .zip(g_new.iter().zip(&g))
            .map(|(si, (a, b))| si * (a - b))
            .sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        alpha = if sy > 0.0 { ss / sy } else { 2.0 * step };
        q = q_new;
        j = j_new;
        g = g_new;
        history.push(j);
        iterations += 1;
    }
    if g0 > 0.0 && norm(&g) > STALL_REDUCTION * g0 {
        return Err(Error::OptimizerStall { objective: history });
    }

    let mut result = ReconstructionResult::new(params.grid(), q, j.max(0.0).sqrt(), reg_weight);
    result.iterations = iterations;
    result.objective_history = history;
    result.exploratory = exploratory;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::super::rel_l2_error;
    use super::super::test_support::scenario;
    use super::*;

    fn window(t_end: f64) -> ObservationWindow {
        ObservationWindow {
            t0: 0.05,
            t_prime: 0.2,
            t_end,
            a: -0.5,
            b: 0.5,
        }
    }

    fn data(s: &crate::io::Scenario, w: &ObservationWindow, sigma: f64) -> (ObservationSet, ObservationSet) {
        let opts = SimulationOptions {
            target_dt: 1e-3,
            ..SimulationOptions::default()
        };
        let traj = simulate(&s.params, s.u0(), w.t_end, &opts).unwrap();
        ObservationSet::stability_pair(&traj, w, sigma, 5).unwrap()
    }

    #[test]
    fn recovers_q_on_a_small_grid() {
        let s = scenario(10);
        let w = window(0.3);
        let (loc, snap) = data(&s, &w, 0.0);
        let r = reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), 0.0, &LeastSquaresOptions::default())
            .unwrap()
            .with_truth(s.params.q_cells())
            .unwrap();
        assert!(r.rel_l2_error.unwrap() < 1e-6, "{:?}", r.rel_l2_error);
        assert!(!r.exploratory);
        assert!(r.iterations > 0 && r.iterations < 500);
        assert_eq!(r.objective_history.len(), r.iterations + 1);
        assert!(r.objective_history.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn regularization_pulls_toward_zero() {
        let s = scenario(8);
        let w = window(0.3);
        let (loc, snap) = data(&s, &w, 0.0);
        let opts = LeastSquaresOptions::default();
        let plain = reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), 0.0, &opts).unwrap();
        let reg = reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), 1e-2, &opts).unwrap();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        assert!(norm(&reg.q_hat) < norm(&plain.q_hat));
        assert_eq!(reg.regularization_weight, 1e-2);
    }

    #[test]
    fn windows_past_delta_need_the_override() {
        let s = scenario(6);
        let w = window(0.6);
        let (loc, snap) = data(&s, &w, 0.0);
        let opts = LeastSquaresOptions {
            max_iters: 3,
            ..LeastSquaresOptions::default()
        };
        assert!(reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), 0.0, &opts).is_err());
        let opts = LeastSquaresOptions {
            allow_beyond_delta: true,
            max_iters: 200,
            ..opts
        };
        let r = reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), 0.0, &opts).unwrap();
        assert!(r.exploratory);
        let e = rel_l2_error(&r.q_hat, s.params.q_cells());
        assert!(e < 1e-3, "{e}");
    }

    #[test]
    fn input_checks() {
        let s = scenario(6);
        let w = window(0.3);
        let (loc, snap) = data(&s, &w, 0.0);
        let o = LeastSquaresOptions::default();
        assert!(reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), -1.0, &o).is_err());
        assert!(reconstruct_q_leastsq(&snap, &loc, &s.params, s.u0(), 0.0, &o).is_err());
    }

    #[test]
    fn iteration_cap_reports_a_stall() {
        let s = scenario(8);
        let (loc, snap) = data(&s, &window(0.3), 0.0);
        let o = LeastSquaresOptions {
            max_iters: 1,
            ..LeastSquaresOptions::default()
        };
        match reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), 0.0, &o) {
            Err(Error::OptimizerStall { objective }) => assert_eq!(objective.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
