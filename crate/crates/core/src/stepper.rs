//! IMEX time stepping: implicit degenerate diffusion, explicit reaction and
//! memory terms. One step is a single tridiagonal solve,
//!
//! `u+ = (Id - dt Op)^{-1} (u + dt F(t, u, H(t)))`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{DiffusionOperator, Grid};
use crate::memory::{integer_ratio, HistoryBuffer, HistoryQuadrature};
use crate::physics::{EmissionSpec, ModelParams};

/// Implicit part of the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    /// Backward Euler; keeps the discrete maximum principle.
    #[default]
    BackwardEuler,
    /// Crank-Nicolson on the diffusion. No discrete maximum principle.
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationOptions {
    pub target_dt: f64,
    /// Store every `stride`-th state.
    pub stride: usize,
    /// Relative slack on the sup-norm monitor.
    pub bound_slack: f64,
    pub scheme: TimeScheme,
    /// Keep the memory term `H(t_k)` of every step in the trajectory.
    pub record_memory: bool,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            target_dt: 1e-3,
            stride: 1,
            bound_slack: 0.05,
            scheme: TimeScheme::BackwardEuler,
            record_memory: false,
        }
    }
}

impl SimulationOptions {
    pub fn with_dt(target_dt: f64) -> Self {
        Self {
            target_dt,
            ..Self::default()
        }
    }
}

/// Largest `dt <= target_dt` with `tau / dt`, `t_end / dt` and (when
/// `delta > 0`) `delta / dt` all integers. Candidates are `tau / m`; the
/// search stops at `target_dt / 10`.
pub fn select_dt(tau: f64, delta: f64, t_end: f64, target_dt: f64) -> Result<f64> {
    let cap = if delta > 0.0 { tau.min(delta) } else { tau };
    if !(target_dt > 0.0 && target_dt <= cap * (1.0 + 1e-12)) {
        return Err(invalid(format!("target dt {target_dt} must lie in (0, {cap}]")));
    }
    if !(t_end > 0.0) {
        return Err(invalid(format!("final time must be positive, got {t_end}")));
    }
    let first = (tau / target_dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let last = (10.0 * tau / target_dt).floor() as usize;
    for m in first..=last {
        let dt = tau / m as f64;
        let ok_t = integer_ratio(t_end, dt).is_some_and(|k| k > 0);
        let ok_d = delta <= 0.0 || integer_ratio(delta, dt).is_some();
        if ok_t && ok_d {
            return Ok(dt);
        }
    }
    Err(invalid(format!(
        "no dt in [{}, {target_dt}] divides tau = {tau}, delta = {delta} and T = {t_end}",
        target_dt / 10.0
    )))
}

/// Time-indexed states of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `states[k][i]`, time index first.
    pub states: Vec<Vec<f64>>,
    /// Initial history slots at times `-tau, -tau + dt, ..., 0`.
    pub history_0: Vec<Vec<f64>>,
    /// Last `tau / dt + 1` states, kept for restarts when `stride > 1`.
    pub final_history: Vec<Vec<f64>>,
    /// `H(t_k)` used in step `k`; empty unless requested.
    pub memory_terms: Vec<Vec<f64>>,
    pub params_digest: String,
    pub dt: f64,
    pub stride: usize,
    pub grid: Grid,
    pub sup_norm_seen: f64,
}

impl Trajectory {
    /// Spacing of the stored times.
    pub fn sample_dt(&self) -> f64 {
        self.dt * self.stride as f64
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// Index of the stored time closest to `t`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.sample_dt()).round();
        if k < 0.0 || k as usize >= self.states.len() || (k * self.sample_dt() - t).abs() > 1e-9 * self.dt.max(1.0) {
            return Err(invalid(format!("time {t} is not a stored sample")));
        }
        Ok(k as usize)
    }

    /// History buffer with head at stored index `k` (needs `stride == 1`).
    pub fn history_at(&self, k: usize) -> Result<HistoryBuffer> {
        if self.stride != 1 {
            return Err(invalid("history reconstruction needs stride 1"));
        }
        if k >= self.states.len() {
            return Err(invalid(format!("index {k} out of range")));
        }
        let m = self.history_0.len() - 1;
        let mut slots = Vec::with_capacity(m + 1);
        for step in (k as i64 - m as i64)..=(k as i64) {
            if step <= 0 {
                slots.push(self.history_0[(step + m as i64) as usize].clone());
            } else {
                slots.push(self.states[step as usize].clone());
            }
        }
        Ok(HistoryBuffer::from_parts(self.dt, m, k as i64, slots))
    }
}

/// Sequential driver holding the history buffer and the assembled operator.
pub struct Simulator<'a> {
    params: &'a ModelParams,
    op: DiffusionOperator,
    quad: HistoryQuadrature,
    buf: HistoryBuffer,
    dt: f64,
    scheme: TimeScheme,
    h: Vec<f64>,
    work: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> Simulator<'a> {
    pub fn new(params: &'a ModelParams, u0: impl Fn(f64, f64) -> f64, dt: f64, scheme: TimeScheme) -> Result<Self> {
        let grid = params.grid();
        let kernel = params.kernel();
        if kernel.delta() > 0.0 && integer_ratio(kernel.delta(), dt).is_none() {
            return Err(invalid("delta / dt must be an integer"));
        }
        let buf = HistoryBuffer::init(u0, grid, dt, kernel.tau())?;
        Self::from_history(params, buf, scheme)
    }

    pub fn from_history(params: &'a ModelParams, buf: HistoryBuffer, scheme: TimeScheme) -> Result<Self> {
        let grid = params.grid();
        let dt = buf.dt();
        let n = grid.n();
        if buf.newest().len() != n {
            return Err(invalid("history and grid sizes disagree"));
        }
        Ok(Self {
            params,
            op: DiffusionOperator::assemble(grid),
            quad: HistoryQuadrature::new(params.kernel(), grid, dt)?,
            buf,
            dt,
            scheme,
            h: vec![0.0; n],
            work: vec![0.0; n],
            scratch: vec![0.0; n],
        })
    }

    pub fn time(&self) -> f64 {
        self.buf.head_time()
    }

    pub fn state(&self) -> &[f64] {
        self.buf.newest()
    }

    pub fn history(&self) -> &HistoryBuffer {
        &self.buf
    }

    /// Memory term used by the most recent step.
    pub fn last_memory(&self) -> &[f64] {
        &self.h
    }

    pub fn operator(&self) -> &DiffusionOperator {
        &self.op
    }

    /// Advances one step and returns the new state.
    pub fn advance(&mut self) -> Result<&[f64]> {
        self.h = self.quad.eval(&self.buf)?;
        self.advance_with_current_memory()
    }

    /// Advances one step with a memory term supplied by the caller instead
    /// of the quadrature. Used when `H` is known to be frozen.
    pub(crate) fn advance_with_memory(&mut self, h: &[f64]) -> Result<&[f64]> {
        if h.len() != self.h.len() {
            return Err(invalid("memory term and grid sizes disagree"));
        }
        self.h.copy_from_slice(h);
        self.advance_with_current_memory()
    }

    fn advance_with_current_memory(&mut self) -> Result<&[f64]> {
        let t = self.time();
        let u = self.buf.newest();
        self.params.rhs_into(t, u, &self.h, &mut self.work)?;
        let dt = self.dt;
        let mut next: Vec<f64> = match self.scheme {
            TimeScheme::BackwardEuler => u.iter().zip(&self.work).map(|(a, f)| a + dt * f).collect(),
            TimeScheme::CrankNicolson => {
                let mut au = vec![0.0; u.len()];
                self.op.apply_into(u, &mut au);
                u.iter()
                    .zip(&au)
                    .zip(&self.work)
                    .map(|((a, d), f)| a + 0.5 * dt * d + dt * f)
                    .collect()
            }
        };
        let implicit_dt = match self.scheme {
            TimeScheme::BackwardEuler => dt,
            TimeScheme::CrankNicolson => 0.5 * dt,
        };
        self.op
            .solve_implicit_in_place(&mut next, implicit_dt, &mut self.scratch);
        let t_next = (self.buf.head_step() + 1) as f64 * dt;
        self.buf.push_state(next, t_next)?;
        Ok(self.buf.newest())
    }
}

/// One IMEX step from `u` at time `t`; `buf` must have its head at `t`.
/// The caller pushes the result into the buffer.
pub fn step(u: &[f64], t: f64, buf: &HistoryBuffer, params: &ModelParams, dt: f64) -> Result<Vec<f64>> {
    if (buf.head_time() - t).abs() > 1e-9 * dt {
        return Err(invalid(format!(
            "buffer head {} does not match t = {t}",
            buf.head_time()
        )));
    }
    let grid = params.grid();
    let op = DiffusionOperator::assemble(grid);
    let h = HistoryQuadrature::new(params.kernel(), grid, dt)?.eval(buf)?;
    let f = params.rhs(t, u, &h)?;
    let rhs: Vec<f64> = u.iter().zip(&f).map(|(a, b)| a + dt * b).collect();
    op.solve_implicit(&rhs, dt)
}

fn sup_norm(v: &[f64]) -> (f64, usize) {
    v.iter().enumerate().fold(
        (0.0, 0),
        |(m, im), (i, &x)| if x.abs() > m { (x.abs(), i) } else { (m, im) },
    )
}

/// Runs the model on `[0, t_end]` from the initial history `u0(s, x)`.
///
/// With Stefan-Boltzmann emission every new state is checked against
/// `M (1 + bound_slack)`, `M` the a-priori sup-norm bound.
pub fn simulate(
    params: &ModelParams,
    u0: impl Fn(f64, f64) -> f64,
    t_end: f64,
    opts: &SimulationOptions,
) -> Result<Trajectory> {
    let kernel = params.kernel();
    let dt = select_dt(kernel.tau(), kernel.delta(), t_end, opts.target_dt)?;
    if opts.stride == 0 {
        return Err(invalid("stride must be >= 1"));
    }
    let mut sim = Simulator::new(params, u0, dt, opts.scheme)?;
    let steps = integer_ratio(t_end, dt).expect("select_dt guarantees T / dt is an integer");
    let history_0: Vec<Vec<f64>> = sim.history().slots().cloned().collect();

    let (mut sup_seen, _) = sup_norm(sim.state());
    let limit = match params.emission() {
        EmissionSpec::Sellers { .. } => Some(params.linf_bound(sup_seen)? * (1.0 + opts.bound_slack)),
        EmissionSpec::Budyko { .. } => None,
    };

    let mut times = vec![0.0];
    let mut states = vec![sim.state().to_vec()];
    let mut memory_terms = Vec::new();
    for k in 1..=steps {
        sim.advance()?;
        let u = sim.state();
        let (sup, at) = sup_norm(u);
        if !sup.is_finite() {
            return Err(Error::InvalidState(format!(
                "non-finite state at t = {}",
                k as f64 * dt
            )));
        }
        if let Some(limit) = limit {
            if sup > limit {
                return Err(Error::BoundViolation {
                    t: k as f64 * dt,
                    x: params.grid().centers()[at],
                    value: sup,
                    bound: limit / (1.0 + opts.bound_slack),
                });
            }
        }
        if opts.record_memory {
            memory_terms.push(sim.last_memory().to_vec());
        }
        sup_seen = sup_seen.max(sup);
        if k % opts.stride == 0 {
            times.push(k as f64 * dt);
            states.push(u.to_vec());
        }
    }

    Ok(Trajectory {
        times,
        states,
        history_0,
        final_history: sim.history().slots().cloned().collect(),
        memory_terms,
        params_digest: params.digest(),
        dt,
        stride: opts.stride,
        grid: params.grid().clone(),
        sup_norm_seen: sup_seen,
    })
}

/// Discrete `u_t` at stored index `i`: centered inside, one-sided at the ends.
pub fn time_derivative(traj: &Trajectory, i: usize) -> Result<Vec<f64>> {
    let last = traj
        .states
        .len()
        .checked_sub(1)
        .filter(|&l| l >= 1)
        .ok_or_else(|| invalid("time derivative needs at least two stored states"))?;
    if i > last {
        return Err(invalid(format!("time index {i} out of range 0..={last}")));
    }
    let h = traj.sample_dt();
    let (a, b, scale) = if i == 0 {
        (1, 0, 1.0 / h)
    } else if i == last {
        (last, last - 1, 1.0 / h)
    } else {
        (i + 1, i - 1, 0.5 / h)
    };
    Ok(traj.states[a]
        .iter()
        .zip(&traj.states[b])
        .map(|(p, m)| (p - m) * scale)
        .collect())
}
