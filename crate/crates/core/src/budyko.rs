//! Set-valued Budyko model solved through the smooth coalbedos `beta_j`.
//!
//! Each `j` in the schedule gives a Sellers-type run; the Cauchy gap
//! `max_t ||u_j(t) - u_prev(t)||_{L^2}` decides convergence. The returned
//! state is the regularization limit, which need not be the only solution
//! of the inclusion.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::memory::HistoryQuadrature;
use crate::physics::{CoalbedoKind, EmissionSpec, ModelParams};
use crate::stepper::{simulate, SimulationOptions, TimeScheme, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BudykoOptions {
    /// Strictly increasing regularization indices, at least two.
    pub j_schedule: Vec<u32>,
    pub tol: f64,
    pub band_tol: f64,
    pub value_tol: f64,
    /// Stop at the first gap below `tol`; otherwise run the whole schedule.
    pub stop_early: bool,
    pub target_dt: f64,
    pub scheme: TimeScheme,
}

impl Default for BudykoOptions {
    fn default() -> Self {
        Self {
            j_schedule: (2..=10).map(|p| 1u32 << p).collect(),
            tol: 1e-3,
            band_tol: 1e-3,
            value_tol: 1e-6,
            stop_early: true,
            target_dt: 1e-3,
            scheme: TimeScheme::BackwardEuler,
        }
    }
}

/// Classification of one `(t, x)` point of the inclusion check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InclusionClass {
    AiBranch,
    AfBranch,
    Interval,
    /// `r q = 0`: the residual itself must vanish.
    ZeroForcing,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionViolation {
    pub t: f64,
    pub x: f64,
    pub time_index: usize,
    pub cell: usize,
    pub u: f64,
    /// Recovered coalbedo `B`, or the raw residual where `r q = 0`.
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionCounts {
    pub ai_branch: usize,
    pub af_branch: usize,
    pub interval: usize,
    pub zero_forcing: usize,
    pub violation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub band_tol: f64,
    pub value_tol: f64,
    pub counts: InclusionCounts,
    pub violations: Vec<InclusionViolation>,
}

impl InclusionReport {
    pub fn is_clean(&self) -> bool {
        self.counts.violation == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudykoSolution {
    /// Run at `j_final`, the limit candidate.
    pub trajectory: Trajectory,
    /// Selection `gamma[k][i]` at the stored times.
    pub gamma: Vec<Vec<f64>>,
    /// `H` at the stored times.
    pub memory: Vec<Vec<f64>>,
    pub j_final: u32,
    pub cauchy_gap: f64,
    /// `(j, gap to the previous j)` for every completed run after the first.
    pub gaps: Vec<(u32, f64)>,
    /// `sup_norm_seen` of every run, in schedule order.
    pub sup_norms: Vec<(u32, f64)>,
    pub inclusion_report: InclusionReport,
}

fn check_budyko_params(params: &ModelParams) -> Result<(f64, f64)> {
    if params.coalbedo().kind != CoalbedoKind::BudykoGraph {
        return Err(invalid("solve_budyko needs the budyko_graph coalbedo"));
    }
    match *params.emission() {
        EmissionSpec::Budyko { a, b } => Ok((a, b)),
        EmissionSpec::Sellers { .. } => Err(invalid("solve_budyko needs the affine emission a + b u")),
    }
}

/// Sup over stored times of the discrete `L^2` distance.
fn cauchy_gap(a: &Trajectory, b: &Trajectory) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(u, v)| {
            let d: Vec<f64> = u.iter().zip(v).map(|(p, q)| p - q).collect();
            a.grid.l2_norm(&d)
        })
        .fold(0.0, f64::max)
}

/// `H` at every stored time of a stride-1 trajectory.
pub fn memory_along(traj: &Trajectory, params: &ModelParams) -> Result<Vec<Vec<f64>>> {
    let quad = HistoryQuadrature::new(params.kernel(), params.grid(), traj.dt)?;
    (0..traj.len()).map(|k| quad.eval(&traj.history_at(k)?)).collect()
}

/// Runs the regularization schedule and extracts the selection `gamma`.
///
/// `params` must carry the Budyko graph coalbedo and affine emission.
pub fn solve_budyko(
    params: &ModelParams,
    u0: impl Fn(f64, f64) -> f64 + Copy,
    t_end: f64,
    opts: &BudykoOptions,
) -> Result<BudykoSolution> {
    let (a, b) = check_budyko_params(params)?;
    let schedule = &opts.j_schedule;
    if schedule.len() < 2 || !schedule.windows(2).all(|w| w[0] < w[1]) || schedule[0] == 0 {
        return Err(invalid(
            "j_schedule must be strictly increasing with at least two positive entries",
        ));
    }
    if !(opts.tol > 0.0) {
        return Err(invalid("tol must be positive"));
    }
    let sim_opts = SimulationOptions {
        target_dt: opts.target_dt,
        scheme: opts.scheme,
        ..SimulationOptions::default()
    };

    let mut prev: Option<(Trajectory, ModelParams)> = None;
    let mut gaps = Vec::new();
    let mut sup_norms = Vec::new();
    for &j in schedule {
        let pj = params.with_coalbedo(params.coalbedo().with_kind(CoalbedoKind::BudykoRegularized { j }))?;
        let traj = simulate(&pj, u0, t_end, &sim_opts)?;
        sup_norms.push((j, traj.sup_norm_seen));
        if let Some((p, _)) = &prev {
            gaps.push((j, cauchy_gap(&traj, p)));
        }
        prev = Some((traj, pj));
        if opts.stop_early && gaps.last().is_some_and(|&(_, g)| g <= opts.tol) {
            break;
        }
    }
    let (trajectory, pj) = prev.expect("schedule is non-empty");
    let &(j_final, gap) = gaps.last().expect("schedule has two entries");
    if !(gap <= opts.tol) {
        return Err(Error::NoConvergence {
            gaps: gaps.iter().map(|&(_, g)| g).collect(),
        });
    }

    let memory = memory_along(&trajectory, &pj)?;
    let q = params.q_cells();
    let f = params.memory_response();
    let gamma: Vec<Vec<f64>> = trajectory
        .states
        .iter()
        .zip(&trajectory.times)
        .zip(&memory)
        .map(|((u, &t), h)| {
            let r = params.insolation().r.eval(t);
            u.iter()
                .enumerate()
                .map(|(i, &ui)| {
                    let beta = pj.coalbedo().beta(ui).expect("regularized coalbedo is single-valued");
                    r * q[i] * beta - (a + b * ui) + f.eval(h[i])
                })
                .collect()
        })
        .collect();

    let mut solution = BudykoSolution {
        trajectory,
        gamma,
        memory,
        j_final,
        cauchy_gap: gap,
        gaps,
        sup_norms,
        inclusion_report: InclusionReport {
            band_tol: 0.0,
            value_tol: opts.value_tol,
            counts: InclusionCounts::default(),
            violations: Vec::new(),
        },
    };
    // Off the band beta_j is pinned to a branch, so the band is at least 1 / j.
    let band = opts.band_tol.max(1.0 / j_final as f64);
    solution.inclusion_report = verify_inclusion(&solution, params, band, opts.value_tol)?;
    Ok(solution)
}

/// Checks `gamma + (a + b u) - f(H) in r q beta(u)` at every stored point.
pub fn verify_inclusion(
    solution: &BudykoSolution,
    params: &ModelParams,
    band_tol: f64,
    value_tol: f64,
) -> Result<InclusionReport> {
    let (a, b) = match *params.emission() {
        EmissionSpec::Budyko { a, b } => (a, b),
        EmissionSpec::Sellers { .. } => return Err(invalid("inclusion check needs the affine emission")),
    };
    let traj = &solution.trajectory;
    if solution.gamma.len() != traj.len() || solution.memory.len() != traj.len() {
        return Err(invalid("gamma, memory and trajectory lengths disagree"));
    }
    let c = params.coalbedo();
    let f = params.memory_response();
    let q = params.q_cells();
    let centers = params.grid().centers();
    let mut counts = InclusionCounts::default();
    let mut violations = Vec::new();
    for (k, &t) in traj.times.iter().enumerate() {
        let r = params.insolation().r.eval(t);
        for (i, &u) in traj.states[k].iter().enumerate() {
            let residual = solution.gamma[k][i] + (a + b * u) - f.eval(solution.memory[k][i]);
            let rq = r * q[i];
            let (class, value) = if rq == 0.0 {
                let ok = residual.abs() <= value_tol;
                (
                    if ok {
                        InclusionClass::ZeroForcing
                    } else {
                        InclusionClass::Violation
                    },
                    residual,
                )
            } else {
                let bv = residual / rq;
                let class = if u < c.u_bar - band_tol {
                    if (bv - c.a_i).abs() <= value_tol {
                        InclusionClass::AiBranch
                    } else {
                        InclusionClass::Violation
                    }
                } else if u > c.u_bar + band_tol {
                    if (bv - c.a_f).abs() <= value_tol {
                        InclusionClass::AfBranch
                    } else {
                        InclusionClass::Violation
                    }
                } else if bv >= c.a_i - value_tol && bv <= c.a_f + value_tol {
                    InclusionClass::Interval
                } else {
                    InclusionClass::Violation
                };
                (class, bv)
            };
            match class {
                InclusionClass::AiBranch => counts.ai_branch += 1,
                InclusionClass::AfBranch => counts.af_branch += 1,
                InclusionClass::Interval => counts.interval += 1,
                InclusionClass::ZeroForcing => counts.zero_forcing += 1,
                InclusionClass::Violation => {
                    counts.violation += 1;
                    violations.push(InclusionViolation {
                        t,
                        x: centers[i],
                        time_index: k,
                        cell: i,
                        u,
                        value,
                    });
                }
            }
        }
    }
    Ok(InclusionReport {
        band_tol,
        value_tol,
        counts,
        violations,
    })
}
