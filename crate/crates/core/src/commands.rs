//! Command-line front end. Each subcommand reads a scenario, runs one
//! experiment and writes tidy CSV plus JSON summaries into `--out`.
//!
//! Exit codes: 0 on success, 1 when the scenario or a module rejects the
//! run, 2 for usage errors including missing input paths.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::budyko::solve_budyko;
use crate::error::{validation, Error};
use crate::inverse::{
    add_noise, reconstruct_q_direct, reconstruct_q_leastsq, stability_ratio, uniqueness_experiment, ObservationSet,
    PiecewiseAnalytic, ReconstructionResult,
};
use crate::io::{
    load_scenario, write_csv, write_json, write_observations, write_reconstruction, write_trajectory, Cell, Scenario,
};
use crate::physics::{EmissionSpec, QProfile};
use crate::stepper::simulate;
use crate::verify::{run_suite, Suite};

#[derive(Debug, Parser)]
#[command(
    name = "ebmm",
    version,
    about = "Delayed energy balance model: forward runs and recovery of the insolation profile q"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the forward model and report the sup norm against the a-priori bound.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the Budyko model by regularization and check the inclusion.
    Budyko {
        scenario: PathBuf,
        /// Cauchy-gap tolerance; overrides the scenario value.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct q from self-generated observations.
    Invert {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Direct)]
        mode: Mode,
        /// Noise levels; a list gives one run per level and an error table.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        noise: Option<Vec<f64>>,
        /// Tikhonov weight of the least-squares mode.
        #[arg(long)]
        reg: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare u and u_x at x0 for q and its perturbation.
    Uniqueness {
        scenario: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stability ratios over perturbation amplitudes of q.
    Stability {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sweep: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in invariant suites; exit 0 iff every check passes.
    Verify {
        #[arg(long, value_enum, default_value_t = SuiteArg::All)]
        suite: SuiteArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Direct,
    Leastsq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SuiteArg {
    Operator,
    Bounds,
    Oracle,
    All,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Operator => Suite::Operator,
            SuiteArg::Bounds => Suite::Bounds,
            SuiteArg::Oracle => Suite::Oracle,
            SuiteArg::All => Suite::All,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Module(#[from] Error),
    /// A check ran but did not pass; the report is already printed.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Module(_) | CliError::Failed(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn open_scenario(path: &Path) -> CliResult<Scenario> {
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "scenario file {} does not exist",
            path.display()
        )));
    }
    Ok(load_scenario(path)?)
}

fn prepare_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(Error::from)?;
    Ok(())
}

fn write_echo(s: &Scenario, out: &Path) -> CliResult<()> {
    write_json(&out.join("scenario.json"), &s.config)?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate { scenario, out } => cmd_simulate(&scenario, &out),
        Command::Budyko { scenario, tol, out } => cmd_budyko(&scenario, tol, &out),
        Command::Invert {
            scenario,
            mode,
            noise,
            reg,
            out,
        } => cmd_invert(&scenario, mode, noise, reg, &out),
        Command::Uniqueness { scenario, x0, out } => cmd_uniqueness(&scenario, x0, &out),
        Command::Stability { scenario, sweep, out } => cmd_stability(&scenario, sweep, &out),
        Command::Verify { suite } => cmd_verify(suite.into()),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    name: &'a str,
    params_digest: &'a str,
    dt: f64,
    t_end: f64,
    stored_states: usize,
    sup_norm: f64,
    bound: Option<f64>,
    margin: Option<f64>,
}

fn u0_sup(s: &Scenario) -> f64 {
    let u0 = s.u0();
    let tau = s.params.kernel().tau();
    let mut m = 0.0f64;
    for k in 0..=200 {
        let t = -tau * k as f64 / 200.0;
        for &x in s.params.grid().centers() {
            m = m.max(u0(t, x).abs());
        }
    }
    m
}

fn cmd_simulate(path: &Path, out: &Path) -> CliResult<()> {
    let s = open_scenario(path)?;
    prepare_out(out)?;
    let traj = simulate(&s.params, s.u0(), s.t_end(), &s.simulation_options())?;
    let bound = match s.params.emission() {
        EmissionSpec::Sellers { .. } => Some(s.params.linf_bound(u0_sup(&s))?),
        EmissionSpec::Budyko { .. } => None,
    };
    let summary = SimulationSummary {
        name: s.name(),
        params_digest: &traj.params_digest,
        dt: traj.dt,
        t_end: s.t_end(),
        stored_states: traj.len(),
        sup_norm: traj.sup_norm_seen,
        bound,
        margin: bound.map(|m| m - traj.sup_norm_seen),
    };
    write_echo(&s, out)?;
    write_trajectory(&traj, &out.join("trajectory.csv"))?;
    write_json(&out.join("summary.json"), &summary)?;
    println!("scenario   {}", s.name());
    println!("dt         {}", traj.dt);
    println!("sup |u|    {}", traj.sup_norm_seen);
    match bound {
        Some(m) => {
            println!("bound M    {m}");
            println!("margin     {}", m - traj.sup_norm_seen);
        }
        None => println!("bound M    n/a (affine emission)"),
    }
    Ok(())
}

fn cmd_budyko(path: &Path, tol: Option<f64>, out: &Path) -> CliResult<()> {
    let s = open_scenario(path)?;
    prepare_out(out)?;
    let mut opts = s.config.budyko.clone();
    if let Some(t) = tol {
        opts.tol = t;
    }
    let sol = solve_budyko(&s.params, s.u0(), s.t_end(), &opts)?;
    write_echo(&s, out)?;
    write_trajectory(&sol.trajectory, &out.join("trajectory.csv"))?;

    let centers = s.params.grid().centers();
    let mut rows = Vec::new();
    for ((&t, g), h) in sol.trajectory.times.iter().zip(&sol.gamma).zip(&sol.memory) {
        for ((&x, &gv), &hv) in centers.iter().zip(g).zip(h) {
            rows.push(vec![Cell::Num(t), Cell::Num(x), Cell::Num(gv), Cell::Num(hv)]);
        }
    }
    write_csv(&out.join("gamma.csv"), &["t", "x", "gamma", "memory"], rows)?;

    let sup = |j: u32| sol.sup_norms.iter().find(|(k, _)| *k == j).map(|(_, v)| *v);
    let mut gap_rows = vec![vec![
        Cell::from(sol.sup_norms[0].0),
        Cell::Empty,
        sup(sol.sup_norms[0].0).into(),
    ]];
    for &(j, g) in &sol.gaps {
        gap_rows.push(vec![Cell::from(j), Cell::Num(g), sup(j).into()]);
    }
    write_csv(&out.join("gaps.csv"), &["j", "cauchy_gap", "sup_norm"], gap_rows)?;
    write_json(&out.join("inclusion.json"), &sol.inclusion_report)?;

    let c = &sol.inclusion_report.counts;
    println!("j_final      {}", sol.j_final);
    println!("cauchy gap   {}", sol.cauchy_gap);
    println!(
        "inclusion    ai {} af {} interval {} zero_forcing {} violations {}",
        c.ai_branch, c.af_branch, c.interval, c.zero_forcing, c.violation
    );
    if sol.inclusion_report.is_clean() {
        println!("verdict      inclusion holds at every checked point");
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} inclusion violations", c.violation)))
    }
}

fn reconstruct_one(
    s: &Scenario,
    mode: Mode,
    sigma: f64,
    reg: f64,
    out: &Path,
    tag: &str,
) -> crate::Result<ReconstructionResult> {
    let inv = &s.config.inverse;
    let seed = s.config.run.seed;
    let sim = crate::stepper::SimulationOptions {
        stride: 1,
        ..s.simulation_options()
    };
    let t_end = match mode {
        Mode::Direct => s.t_end().min(s.params.kernel().delta()),
        Mode::Leastsq => inv.window.t_end,
    };
    let traj = simulate(&s.params, s.u0(), t_end, &sim)?;
    let result = match mode {
        Mode::Direct => {
            let noisy = add_noise(&traj, sigma, seed)?;
            let k = noisy.index_of(inv.t_eval)?;
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(noisy.len() - 1);
            let obs = ObservationSet {
                kind: crate::inverse::ObservationKind::Snapshot { t_prime: inv.t_eval },
                times: noisy.times[lo..=hi].to_vec(),
                cells: (0..noisy.grid.n()).collect(),
                values: noisy.states[lo..=hi].to_vec(),
                derivative: Vec::new(),
                noise_level: sigma,
                seed: Some(seed),
            };
            write_observations(&obs, &noisy.grid, &out.join(format!("observations_{tag}.csv")))?;
            reconstruct_q_direct(&noisy, &s.params, inv.t_eval)?
        }
        Mode::Leastsq => {
            let (loc, snap) = ObservationSet::stability_pair(&traj, &inv.window, sigma, seed)?;
            write_observations(&loc, &traj.grid, &out.join(format!("observations_{tag}_localized.csv")))?;
            write_observations(&snap, &traj.grid, &out.join(format!("observations_{tag}_snapshot.csv")))?;
            reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), reg, &inv.leastsq)?
        }
    }
    .with_truth(s.params.q_cells())?;
    write_reconstruction(&result, &out.join(format!("reconstruction_{tag}.csv")))?;
    Ok(result)
}

fn cmd_invert(path: &Path, mode: Mode, noise: Option<Vec<f64>>, reg: Option<f64>, out: &Path) -> CliResult<()> {
    let s = open_scenario(path)?;
    let levels = noise.unwrap_or_else(|| s.config.inverse.noise.clone());
    if levels.is_empty() {
        return Err(CliError::Usage("--noise needs at least one level".into()));
    }
    let reg = reg.unwrap_or(s.config.inverse.reg_weight);
    prepare_out(out)?;
    write_echo(&s, out)?;
    let results: Vec<ReconstructionResult> = levels
        .par_iter()
        .enumerate()
        .map(|(i, &sigma)| reconstruct_one(&s, mode, sigma, reg, out, &format!("{i:02}")))
        .collect::<crate::Result<_>>()?;
    let rows = levels.iter().zip(&results).map(|(&sigma, r)| {
        vec![
            Cell::Num(sigma),
            r.rel_l2_error.into(),
            Cell::Num(r.residual_norm),
            Cell::from(r.iterations),
        ]
    });
    write_csv(
        &out.join("error_vs_noise.csv"),
        &["noise", "rel_l2_error", "residual_norm", "iterations"],
        rows,
    )?;
    for (sigma, r) in levels.iter().zip(&results) {
        println!(
            "noise {sigma:<10} rel_l2_error {:.6e}  residual {:.3e}{}",
            r.rel_l2_error.unwrap_or(f64::NAN),
            r.residual_norm,
            if r.exploratory { "  (exploratory)" } else { "" }
        );
    }
    Ok(())
}

fn closed_form_q(s: &Scenario) -> CliResult<PiecewiseAnalytic> {
    s.params
        .insolation()
        .q
        .to_piecewise()
        .ok_or_else(|| validation("insolation.q", "this experiment needs a closed-form q").into())
}

fn cmd_uniqueness(path: &Path, x0: Option<f64>, out: &Path) -> CliResult<()> {
    let s = open_scenario(path)?;
    let inv = &s.config.inverse;
    let q = closed_form_q(&s)?;
    let q_tilde = q.add(&inv.q_perturbation);
    let x0 = x0.unwrap_or(inv.x0);
    prepare_out(out)?;
    let rep = uniqueness_experiment(&s.params, &q, &q_tilde, s.u0(), x0, s.t_end(), &s.simulation_options())?;
    write_echo(&s, out)?;
    let rows = rep
        .times
        .iter()
        .zip(&rep.difference)
        .zip(&rep.discrepancy)
        .map(|((&t, &d), &m)| vec![Cell::Num(t), Cell::Num(d), Cell::Num(m)]);
    write_csv(&out.join("discrepancy.csv"), &["t", "difference", "discrepancy"], rows)?;
    write_json(&out.join("uniqueness.json"), &rep)?;
    println!("x0 snapped   {} (cell {})", rep.x0_snapped, rep.cell);
    println!("max discrepancy {:e}", rep.max_discrepancy);
    let verdict = match (rep.q_equal, rep.max_discrepancy > 0.0) {
        (false, true) => "q differs and the observations at x0 differ: consistent with uniqueness",
        (true, false) => "q equal and the observations at x0 agree",
        (false, false) => "q differs but the observations at x0 agree: uniqueness counterexample candidate",
        (true, true) => "q equal but the observations at x0 differ",
    };
    println!("verdict      {verdict}");
    Ok(())
}

fn cmd_stability(path: &Path, sweep: Option<Vec<f64>>, out: &Path) -> CliResult<()> {
    let s = open_scenario(path)?;
    let inv = &s.config.inverse;
    let amps = sweep.unwrap_or_else(|| inv.stability_sweep.clone());
    if amps.is_empty() {
        return Err(CliError::Usage("--sweep needs at least one amplitude".into()));
    }
    let q = closed_form_q(&s)?;
    prepare_out(out)?;
    let opts = s.simulation_options();
    let reports = amps
        .par_iter()
        .map(|&a| {
            let qt = q.add(&inv.stability_shape.scaled(a));
            stability_ratio(
                &s.params,
                QProfile::Piecewise(q.clone()),
                QProfile::Piecewise(qt),
                s.u0(),
                s.u0(),
                &inv.window,
                &opts,
            )
        })
        .collect::<crate::Result<Vec<_>>>()?;
    write_echo(&s, out)?;
    let rows = amps.iter().zip(&reports).map(|(&a, r)| {
        vec![
            Cell::Num(a),
            Cell::Num(r.ratio),
            Cell::Num(r.numerator),
            Cell::Num(r.snapshot_term),
            Cell::Num(r.window_term),
            Cell::Num(r.history_term),
        ]
    });
    write_csv(
        &out.join("stability.csv"),
        &[
            "amplitude",
            "ratio",
            "numerator",
            "snapshot_term",
            "window_term",
            "history_term",
        ],
        rows,
    )?;
    for (a, r) in amps.iter().zip(&reports) {
        println!("amplitude {a:<10} ratio {:.6e}", r.ratio);
    }
    Ok(())
}

fn cmd_verify(suite: Suite) -> CliResult<()> {
    let results = run_suite(suite);
    let mut failed = 0;
    for r in &results {
        println!(
            "{} [{}] {}{}",
            if r.passed { "PASS" } else { "FAIL" },
            r.suite,
            r.name,
            if r.detail.is_empty() {
                String::new()
            } else {
                format!(": {}", r.detail)
            }
        );
        failed += usize::from(!r.passed);
    }
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{failed} of {} checks failed", results.len())))
    }
}
