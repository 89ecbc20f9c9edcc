use crate::error::{invalid, Error, Result};
use crate::grid::DiffusionOperator;
use crate::memory::HistoryQuadrature;
use crate::physics::ModelParams;
use crate::stepper::{time_derivative, Trajectory};

use super::ReconstructionResult;

/// Smallest `|r beta|` accepted as a divisor.
pub const DIVISION_FLOOR: f64 = 1e-10;

/// Equation residual `u_t - Op u + R_e(u) - f(H)` and the factor `r beta(u)`
/// at stored index `k`.
fn source_terms(traj: &Trajectory, params: &ModelParams, k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let grid = params.grid();
    let t = traj.times[k];
    let u = &traj.states[k];
    let ut = time_derivative(traj, k)?;
    let au = DiffusionOperator::assemble(grid).apply(u)?;
    let h = HistoryQuadrature::new(params.kernel(), grid, traj.dt)?.eval(&traj.history_at(k)?)?;
    let r = params.insolation().r.eval(t);
    let f = params.memory_response();
    let mut num = Vec::with_capacity(u.len());
    let mut den = Vec::with_capacity(u.len());
    for i in 0..u.len() {
        num.push(ut[i] - au[i] + params.emission().eval(u[i]) - f.eval(h[i]));
        den.push(r * params.coalbedo().beta(u[i])?);
    }
    Ok((num, den))
}

/// Pointwise inversion of the model equation at `t_eval < delta`, where the
/// memory term depends on the initial history only.
///
/// The `q` carried by `params` is ignored.
pub fn reconstruct_q_direct(traj: &Trajectory, params: &ModelParams, t_eval: f64) -> Result<ReconstructionResult> {
    let kernel = params.kernel();
    if !kernel.support_flag() {
        return Err(invalid("direct reconstruction needs a kernel with a dead zone"));
    }
    if !(t_eval < kernel.delta()) {
        return Err(invalid(format!(
            "t_eval = {t_eval} must be below delta = {}",
            kernel.delta()
        )));
    }
    if traj.grid != *params.grid() {
        return Err(invalid("trajectory and parameters use different grids"));
    }
    let k = traj.index_of(t_eval)?;
    let (num, den) = source_terms(traj, params, k)?;
    let unstable: Vec<usize> = den
        .iter()
        .enumerate()
        .filter(|(_, d)| !(d.abs() >= DIVISION_FLOOR))
        .map(|(i, _)| i)
        .collect();
    if !unstable.is_empty() {
        return Err(Error::DivisionUnstable { cells: unstable });
    }
    let q_hat: Vec<f64> = num.iter().zip(&den).map(|(a, b)| a / b).collect();

    // Consistency diagnostic: the same equation at a neighboring sample.
    let j = if k + 1 < traj.len() && traj.times[k + 1] < kernel.delta() {
        k + 1
    } else {
        k.saturating_sub(1)
    };
    let (num1, den1) = source_terms(traj, params, j)?;
    let res: Vec<f64> = num1
        .iter()
        .zip(&den1)
        .zip(&q_hat)
        .map(|((a, b), q)| a - b * q)
        .collect();
    let residual_norm = params.grid().l2_norm(&res);

    Ok(ReconstructionResult::new(params.grid(), q_hat, residual_norm, 0.0))
}
