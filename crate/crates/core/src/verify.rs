//! Self-checks behind `ebmm verify`.
//!
//! Each suite compares the solver against an independent route: the
//! operator against a dense matrix built from the flux formula, the
//! time stepper against an exponential integrator on the dense matrix, and
//! the simulated states against the a-priori sup-norm bound.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{DiffusionOperator, Grid};
use crate::memory::{KernelShape, MemoryKernel};
use crate::physics::{
    CoalbedoKind, CoalbedoSpec, EmissionSpec, Emissivity, InsolationSpec, MemoryResponseSpec, ModelParams, QProfile,
    Seasonal,
};
use crate::presets;
use crate::stepper::{simulate, SimulationOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Operator,
    Bounds,
    Oracle,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operator" => Ok(Suite::Operator),
            "bounds" => Ok(Suite::Bounds),
            "oracle" => Ok(Suite::Oracle),
            "all" => Ok(Suite::All),
            _ => Err(invalid(format!("unknown suite {s:?}"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Operator => "operator",
            Suite::Bounds => "bounds",
            Suite::Oracle => "oracle",
            Suite::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(suite: Suite, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            suite: suite.to_string(),
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(suite: Suite, name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(suite, name, passed, detail),
            Err(e) => Self::new(suite, name, false, e.to_string()),
        }
    }
}

pub fn run_suite(suite: Suite) -> Vec<CheckResult> {
    match suite {
        Suite::Operator => operator_suite(),
        Suite::Bounds => bounds_suite(),
        Suite::Oracle => oracle_suite(),
        Suite::All => [operator_suite(), bounds_suite(), oracle_suite()].concat(),
    }
}

/// Dense operator matrix from the flux formula at the faces.
pub fn flux_matrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n();
    let h2 = grid.dx() * grid.dx();
    let rho = |x: f64| grid.rho0() * (1.0 - x * x);
    let faces = grid.faces();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let left = if i == 0 { 0.0 } else { rho(faces[i]) / h2 };
        let right = if i + 1 == n { 0.0 } else { rho(faces[i + 1]) / h2 };
        m[(i, i)] = -(left + right);
        if i > 0 {
            m[(i, i - 1)] = left;
        }
        if i + 1 < n {
            m[(i, i + 1)] = right;
        }
    }
    m
}

pub const OPERATOR_GRIDS: [usize; 4] = [4, 8, 16, 64];
const RANDOM_VECTORS: usize = 100;

pub fn operator_suite() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0b5e);
    for n in OPERATOR_GRIDS {
        let grid = Grid::new(n, 1.0).expect("valid grid");
        let op = DiffusionOperator::assemble(&grid);
        let norm = op.inf_norm();

        let symmetric = op.sub() == op.sup();
        out.push(CheckResult::new(
            Suite::Operator,
            format!("symmetry n={n}"),
            symmetric,
            "",
        ));

        let ones = vec![1.0; n];
        let row_sum = op
            .apply(&ones)
            .expect("sizes match")
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()));
        out.push(CheckResult::new(
            Suite::Operator,
            format!("row sums n={n}"),
            row_sum <= 1e-12 * norm,
            format!("max |row sum| = {row_sum:e}, ||Op|| = {norm:e}"),
        ));

        let mut worst = f64::NEG_INFINITY;
        for _ in 0..RANDOM_VECTORS {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let av = op.apply(&v).expect("sizes match");
            worst = worst.max(v.iter().zip(&av).map(|(a, b)| a * b).sum());
        }
        out.push(CheckResult::new(
            Suite::Operator,
            format!("dissipativity n={n}"),
            worst <= 0.0,
            format!("max v.Op v = {worst:e}"),
        ));

        if n <= 8 {
            let dense = flux_matrix(&grid);
            let mut rel = 0.0f64;
            for _ in 0..RANDOM_VECTORS {
                let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let want = &dense * DVector::from_column_slice(&v);
                let got = op.apply(&v).expect("sizes match");
                let err = got
                    .iter()
                    .zip(want.iter())
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                rel = rel.max(err / want.amax());
            }
            out.push(CheckResult::new(
                Suite::Operator,
                format!("dense agreement n={n}"),
                rel <= 1e-12,
                format!("max relative difference {rel:e}"),
            ));
        }
    }
    out
}

pub const BOUND_SLACK: f64 = 0.05;

fn sellers_bound_check(u0_value: f64) -> Result<(bool, String)> {
    let s = presets::sellers_linf();
    let m = s.params.linf_bound(u0_value)?;
    let opts = SimulationOptions {
        stride: 100,
        bound_slack: f64::INFINITY,
        ..s.simulation_options()
    };
    let traj = simulate(&s.params, |_, _| u0_value, s.t_end(), &opts)?;
    let seen = traj.sup_norm_seen;
    Ok((
        seen <= m * (1.0 + BOUND_SLACK),
        format!("sup |u| = {seen:.6}, M = {m:.6}, margin {:.6}", m - seen),
    ))
}

pub fn bounds_suite() -> Vec<CheckResult> {
    vec![
        CheckResult::from_result(Suite::Bounds, "sellers preset from u0 = 0", sellers_bound_check(0.0)),
        CheckResult::from_result(Suite::Bounds, "sellers preset from u0 = 1.5", sellers_bound_check(1.5)),
    ]
}

/// Small Sellers model with a frozen memory term used by the mild-solution
/// comparison: `n = 6`, cosine-taper kernel on `[-1, -0.5]` and a history
/// constant in `s`.
pub fn mild_solution_params() -> ModelParams {
    ModelParams::new(
        Grid::new(6, 1.0).expect("valid grid"),
        InsolationSpec {
            q: QProfile::LegendreP2 { scale: 1.0 },
            r: Seasonal::Constant { value: 1.0 },
        },
        CoalbedoSpec {
            kind: CoalbedoKind::SellersSmooth,
            a_i: 0.4,
            a_f: 0.8,
            u_bar: 0.0,
            width: 2.0,
        },
        EmissionSpec::Sellers {
            epsilon: Emissivity::Constant { eps1: 1.0 },
        },
        MemoryResponseSpec {
            f_bound: 0.5,
            h_scale: 1.0,
        },
        MemoryKernel::new(1.0, 0.5, true, KernelShape::CosineTaper { amplitude: 1.0 }).expect("valid kernel"),
    )
    .expect("valid parameters")
}

pub fn mild_solution_u0(x: f64) -> f64 {
    0.5 + 0.3 * x
}

/// Horizon and coarse step of the comparison; the fine run halves the step.
pub const MILD_T_END: f64 = 0.1;
pub const MILD_COARSE_DT: f64 = 0.02;

/// Lawson fourth-order integrator: `exp(h Op)` carries the diffusion, RK4
/// the reaction. With `H` frozen the reaction depends on `u` alone.
fn lawson_rk4(
    op: &DMatrix<f64>,
    reaction: impl Fn(&DVector<f64>) -> DVector<f64>,
    u0: DVector<f64>,
    t_end: f64,
    steps: usize,
) -> DVector<f64> {
    let h = t_end / steps as f64;
    let e = (op * h).exp();
    let e2 = (op * (0.5 * h)).exp();
    let mut y = u0;
    for _ in 0..steps {
        let k1 = reaction(&y);
        let k2 = reaction(&(&e2 * (&y + &k1 * (0.5 * h))));
        let k3 = reaction(&(&e2 * &y + &k2 * (0.5 * h)));
        let k4 = reaction(&(&e * &y + &e2 * &k3 * h));
        y = &e * &y + (&e * k1 + &e2 * (k2 + k3) * 2.0 + k4) * (h / 6.0);
    }
    y
}

/// Errors at `MILD_T_END` of the IMEX solver with steps `MILD_COARSE_DT`
/// and `MILD_COARSE_DT / 2` against the exponential-integrator reference.
pub fn mild_solution_errors() -> Result<(f64, f64)> {
    let params = mild_solution_params();
    let grid = params.grid();
    let op = flux_matrix(grid);
    // Trapezoid sums of the cosine taper over its full period are exact,
    // so the solver's H equals u0 * (tau - delta) / 2 up to rounding.
    let kernel = params.kernel();
    let h_frozen: Vec<f64> = grid
        .centers()
        .iter()
        .map(|&x| mild_solution_u0(x) * 0.5 * (kernel.tau() - kernel.delta()))
        .collect();
    let reaction = |u: &DVector<f64>| -> DVector<f64> {
        DVector::from_vec(params.rhs(0.0, u.as_slice(), &h_frozen).expect("smooth coalbedo"))
    };
    let u0 = DVector::from_vec(grid.sample(mild_solution_u0));
    let reference = lawson_rk4(&op, reaction, u0, MILD_T_END, 2000);

    let mut errs = [0.0; 2];
    for (err, dt) in errs.iter_mut().zip([MILD_COARSE_DT, 0.5 * MILD_COARSE_DT]) {
        let traj = simulate(
            &params,
            |_, x| mild_solution_u0(x),
            MILD_T_END,
            &SimulationOptions::with_dt(dt),
        )?;
        if (traj.dt - dt).abs() > 1e-15 {
            return Err(invalid(format!("step {dt} was adjusted to {}", traj.dt)));
        }
        let d: Vec<f64> = traj
            .last_state()
            .iter()
            .zip(reference.iter())
            .map(|(a, b)| a - b)
            .collect();
        *err = grid.l2_norm(&d);
    }
    Ok((errs[0], errs[1]))
}

pub const MILD_RATIO_RANGE: (f64, f64) = (1.7, 2.5);

fn mild_solution_check() -> Result<(bool, String)> {
    let (coarse, fine) = mild_solution_errors()?;
    let ratio = coarse / fine;
    Ok((
        MILD_RATIO_RANGE.0 <= ratio && ratio <= MILD_RATIO_RANGE.1,
        format!("errors {coarse:e}, {fine:e}, ratio {ratio:.4}"),
    ))
}

/// Two runs differing only in `q` must carry bit-identical memory terms
/// while `t < delta`.
fn memory_freeze_check() -> Result<(bool, String)> {
    let s = presets::inversion();
    let opts = SimulationOptions {
        record_memory: true,
        ..s.simulation_options()
    };
    let p2 = s.params.with_q(QProfile::Constant { value: 0.3 })?;
    let a = simulate(&s.params, s.u0(), s.t_end(), &opts)?;
    let b = simulate(&p2, s.u0(), s.t_end(), &opts)?;
    let identical = a.memory_terms.len() == b.memory_terms.len()
        && a.memory_terms
            .iter()
            .flatten()
            .zip(b.memory_terms.iter().flatten())
            .all(|(x, y)| x.to_bits() == y.to_bits());
    let states_differ = a.last_state() != b.last_state();
    Ok((
        identical && states_differ,
        format!("{} memory samples compared", a.memory_terms.len()),
    ))
}

pub fn oracle_suite() -> Vec<CheckResult> {
    vec![
        CheckResult::from_result(Suite::Oracle, "mild solution step halving", mild_solution_check()),
        CheckResult::from_result(Suite::Oracle, "memory frozen before delta", memory_freeze_check()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in [Suite::Operator, Suite::Bounds, Suite::Oracle, Suite::All] {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("fast".parse::<Suite>().is_err());
    }

    #[test]
    fn operator_suite_passes() {
        let r = operator_suite();
        // 4 grids x 3 checks, plus dense agreement for n = 4 and 8.
        assert_eq!(r.len(), 14);
        assert!(r.iter().all(|c| c.passed), "{r:#?}");
    }

    #[test]
    fn lawson_matches_matrix_exponential_without_reaction() {
        let op = flux_matrix(&Grid::new(5, 1.0).unwrap());
        let u0 = DVector::from_vec(vec![1.0, -0.5, 0.25, 2.0, 0.0]);
        let got = lawson_rk4(&op, |u| DVector::zeros(u.len()), u0.clone(), 0.3, 7);
        let want = (&op * 0.3).exp() * u0;
        assert!((got - want).amax() < 1e-12);
    }

    #[test]
    fn lawson_is_fourth_order_on_a_linear_reaction() {
        // u' = Op u - u has the exact solution exp(-t) exp(t Op) u0.
        let op = flux_matrix(&Grid::new(4, 1.0).unwrap());
        let u0 = DVector::from_vec(vec![1.0, 0.0, -1.0, 0.5]);
        let exact = (&op * 1.0).exp() * u0.clone() * (-1.0f64).exp();
        let e1 = (lawson_rk4(&op, |u| -u, u0.clone(), 1.0, 10) - &exact).amax();
        let e2 = (lawson_rk4(&op, |u| -u, u0, 1.0, 20) - &exact).amax();
        let order = (e1 / e2).log2();
        assert!((3.8..4.3).contains(&order), "{order}");
    }
}
