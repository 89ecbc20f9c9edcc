//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Reference values come from oracles written here, not
//! from the library's own self-checks.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ebmm::budyko::solve_budyko;
use ebmm::inverse::{
    reconstruct_q_direct, reconstruct_q_leastsq, stability_ratio, uniqueness_experiment, LeastSquaresOptions,
    ObservationSet,
};
use ebmm::io::Scenario;
use ebmm::memory::{KernelShape, MemoryKernel};
use ebmm::physics::{CoalbedoKind, CoalbedoSpec, EmissionSpec, Emissivity, InsolationSpec, MemoryResponseSpec};
use ebmm::{presets, simulate, DiffusionOperator, Grid, ModelParams, QProfile, Seasonal, SimulationOptions};

type Check = Result<(bool, String), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn l2(grid_dx: f64, v: impl Iterator<Item = f64>) -> f64 {
    (grid_dx * v.map(|a| a * a).sum::<f64>()).sqrt()
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn with_grid(s: &Scenario, n: usize) -> Scenario {
    let mut c = s.config.clone();
    c.grid.n = n;
    Scenario::from_config(c, &presets::data_dir()).expect("valid scenario")
}

/// Dense matrix of `(rho u_x)_x` straight from the face fluxes.
fn flux_oracle(n: usize, rho0: f64) -> DMatrix<f64> {
    let h = 2.0 / n as f64;
    let rho = |x: f64| rho0 * (1.0 - x * x);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let left = if i == 0 {
            0.0
        } else {
            rho(-1.0 + i as f64 * h) / (h * h)
        };
        let right = if i + 1 == n {
            0.0
        } else {
            rho(-1.0 + (i + 1) as f64 * h) / (h * h)
        };
        m[(i, i)] = -left - right;
        if i > 0 {
            m[(i, i - 1)] = left;
        }
        if i + 1 < n {
            m[(i, i + 1)] = right;
        }
    }
    m
}

fn operator_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20260101);
    let mut notes = Vec::new();
    let mut ok = true;
    for n in [4usize, 8, 16, 64] {
        let grid = Grid::new(n, 1.0).map_err(err)?;
        let op = DiffusionOperator::assemble(&grid);
        // Columns of the operator through unit vectors.
        let mut cols = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let c = op.apply(&e).map_err(err)?;
            for i in 0..n {
                cols[(i, j)] = c[i];
            }
        }
        let symmetric = (0..n).all(|i| (0..n).all(|j| cols[(i, j)].to_bits() == cols[(j, i)].to_bits()));
        let norm = (0..n)
            .map(|i| (0..n).map(|j| cols[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let row_sum = op
            .apply(&vec![1.0; n])
            .map_err(err)?
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let mut max_energy = f64::NEG_INFINITY;
        for _ in 0..100 {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let av = op.apply(&v).map_err(err)?;
            max_energy = max_energy.max(v.iter().zip(&av).map(|(a, b)| a * b).sum());
        }
        let dense_rel = if n <= 8 {
            let m = flux_oracle(n, 1.0);
            (&cols - &m).amax() / m.amax()
        } else {
            0.0
        };
        let pass = symmetric && row_sum <= 1e-12 * norm && max_energy <= 0.0 && dense_rel <= 1e-12;
        ok &= pass;
        notes.push(format!(
            "n={n}: sym={symmetric} rowsum={row_sum:.1e} vAv<={max_energy:.2e} dense={dense_rel:.1e}"
        ));
    }
    Ok((ok, notes.join("; ")))
}

fn sellers_bound() -> Check {
    let s = presets::sellers_linf();
    let c = &s.config;
    if c.grid.n != 64 || c.run.t_end != 5.0 || c.run.target_dt != 1e-3 {
        return Err("preset does not match n=64, T=5, dt=1e-3".into());
    }
    // M = max(sup u0, ((|q| |r| |beta| + |f|) / eps1)^(1/4)) with every factor 1.
    let q_sup = 0.8058017727639 * (1.0 + 0.5 * 0.482);
    let m = ((q_sup * 1.0 * 1.0 + 0.0) / 1.0f64).powf(0.25);
    let opts = SimulationOptions {
        bound_slack: f64::INFINITY,
        ..s.simulation_options()
    };
    let traj = simulate(&s.params, s.u0(), s.t_end(), &opts).map_err(err)?;
    let seen = traj.sup_norm_seen;
    Ok((seen <= 1.05 * m, format!("sup |u| = {seen:.6}, M = {m:.6}")))
}

/// Quintic smoothstep on [-1, 1] written out independently.
fn sellers_coalbedo(u: f64) -> f64 {
    let z = ((u / 2.0 + 1.0) / 2.0).clamp(0.0, 1.0);
    0.4 + 0.4 * (10.0 * z.powi(3) - 15.0 * z.powi(4) + 6.0 * z.powi(5))
}

fn mild_solution() -> Check {
    let n = 6;
    let params = ModelParams::new(
        Grid::new(n, 1.0).map_err(err)?,
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
        MemoryKernel::new(1.0, 0.5, true, KernelShape::CosineTaper { amplitude: 1.0 }).map_err(err)?,
    )
    .map_err(err)?;
    let u0 = |x: f64| 0.5 + 0.3 * x;
    let h = 2.0 / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + (i as f64 + 0.5) * h).collect();
    let q: Vec<f64> = xs.iter().map(|x| 1.0 - 0.482 * 0.5 * (3.0 * x * x - 1.0)).collect();
    // H is frozen for t < 0.5: u0 times the taper integral (1 - 0.5) / 2.
    let forcing: Vec<f64> = xs.iter().map(|&x| 0.5 * (u0(x) * 0.25).tanh()).collect();
    let reaction = |u: &DVector<f64>| {
        DVector::from_fn(n, |i, _| {
            q[i] * sellers_coalbedo(u[i]) - u[i].abs().powi(3) * u[i] + forcing[i]
        })
    };

    // Duhamel reference by Lawson RK4 on the dense exponential.
    let a = flux_oracle(n, 1.0);
    let t_end = 0.1;
    let steps = 4000;
    let dt = t_end / steps as f64;
    let e = (&a * dt).exp();
    let e2 = (&a * (0.5 * dt)).exp();
    let mut y = DVector::from_vec(xs.iter().map(|&x| u0(x)).collect());
    for _ in 0..steps {
        let k1 = reaction(&y);
        let k2 = reaction(&(&e2 * (&y + &k1 * (0.5 * dt))));
        let k3 = reaction(&(&e2 * &y + &k2 * (0.5 * dt)));
        let k4 = reaction(&(&e * &y + &e2 * &k3 * dt));
        y = &e * &y + (&e * k1 + &e2 * (k2 + k3) * 2.0 + k4) * (dt / 6.0);
    }

    let mut errs = Vec::new();
    for (dt, steps) in [(0.02, 5usize), (0.01, 10)] {
        let traj = simulate(&params, |_, x| u0(x), t_end, &SimulationOptions::with_dt(dt)).map_err(err)?;
        if traj.len() != steps + 1 {
            return Err(format!("expected {steps} steps, got {}", traj.len() - 1));
        }
        errs.push(l2(h, traj.last_state().iter().zip(y.iter()).map(|(a, b)| a - b)));
    }
    let ratio = errs[0] / errs[1];
    Ok((
        (1.7..=2.5).contains(&ratio),
        format!("errors {:.3e} / {:.3e}, ratio {ratio:.4}", errs[0], errs[1]),
    ))
}

fn memory_freezing() -> Check {
    let s = presets::inversion();
    if s.params.kernel().delta() != 0.5 || !s.params.kernel().support_flag() {
        return Err("preset kernel must have delta = 0.5 and a dead zone".into());
    }
    let opts = SimulationOptions {
        record_memory: true,
        ..s.simulation_options()
    };
    let other = s.params.with_q(QProfile::Constant { value: 2.0 }).map_err(err)?;
    let (a, b) = rayon::join(
        || simulate(&s.params, s.u0(), 0.4, &opts),
        || simulate(&other, s.u0(), 0.4, &opts),
    );
    let (a, b) = (a.map_err(err)?, b.map_err(err)?);
    let same_len = a.memory_terms.len() == b.memory_terms.len() && a.memory_terms.len() == a.len() - 1;
    let identical = a
        .memory_terms
        .iter()
        .flatten()
        .zip(b.memory_terms.iter().flatten())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    let diverged = a.last_state().iter().zip(b.last_state()).any(|(x, y)| x != y);
    Ok((
        same_len && identical && diverged,
        format!("{} H samples, states diverged: {diverged}", a.memory_terms.len()),
    ))
}

fn budyko_regularization() -> Check {
    let s = presets::budyko_crossing();
    let opts = &s.config.budyko;
    if opts.j_schedule != [4, 8, 16, 32, 64, 128, 256] || opts.value_tol != 1e-4 || s.config.grid.n != 64 {
        return Err("preset does not match the j schedule 4..256, value_tol 1e-4, n = 64".into());
    }
    let sol = solve_budyko(&s.params, s.u0(), s.t_end(), opts).map_err(err)?;
    let gaps: Vec<f64> = sol.gaps.iter().map(|g| g.1).collect();
    let tail = &gaps[gaps.len() - 5..];
    let decreasing = tail.windows(2).all(|w| w[1] < w[0]);

    // Independent gap for the last pair, from two plain runs.
    let sim = SimulationOptions::with_dt(opts.target_dt);
    let run = |j| {
        let p = s
            .params
            .with_coalbedo(s.params.coalbedo().with_kind(CoalbedoKind::BudykoRegularized { j }))?;
        simulate(&p, s.u0(), s.t_end(), &sim)
    };
    let (u128, u256) = rayon::join(|| run(128), || run(256));
    let (u128, u256) = (u128.map_err(err)?, u256.map_err(err)?);
    let dx = s.params.grid().dx();
    let gap = u128
        .states
        .iter()
        .zip(&u256.states)
        .map(|(a, b)| l2(dx, a.iter().zip(b).map(|(x, y)| x - y)))
        .fold(0.0, f64::max);
    let gap_agrees = (gap - gaps[gaps.len() - 1]).abs() <= 1e-12 * gap;

    let violations = sol.inclusion_report.counts.violation;
    Ok((
        decreasing && gap_agrees && violations == 0 && sol.j_final == 256,
        format!(
            "gaps {}; independent last gap {gap:.4e}; violations {violations}",
            gaps.iter().map(|g| format!("{g:.3e}")).collect::<Vec<_>>().join(" > ")
        ),
    ))
}

fn direct_inversion() -> Check {
    let base = presets::inversion();
    let run = |n: usize, dt: f64| -> Result<f64, String> {
        let s = with_grid(&base, n);
        let opts = SimulationOptions {
            target_dt: dt,
            ..s.simulation_options()
        };
        let traj = simulate(&s.params, s.u0(), 0.4, &opts).map_err(err)?;
        let r = reconstruct_q_direct(&traj, &s.params, 0.1).map_err(err)?;
        let truth = s.params.grid().sample(|x| 1.0 - 0.482 * 0.5 * (3.0 * x * x - 1.0));
        Ok(rel_l2(&r.q_hat, &truth))
    };
    let (coarse, fine) = rayon::join(|| run(64, 1e-3), || run(128, 5e-4));
    let (coarse, fine) = (coarse?, fine?);
    Ok((
        coarse <= 5e-3 && coarse / fine >= 1.5,
        format!(
            "rel_l2 {coarse:.3e} at n=64, {fine:.3e} at n=128, improvement {:.3}x",
            coarse / fine
        ),
    ))
}

fn uniqueness() -> Check {
    let s = presets::inversion();
    let q = s.params.insolation().q.to_piecewise().ok_or("closed-form q expected")?;
    let q_tilde = q.add(&s.config.inverse.q_perturbation);
    let opts = s.simulation_options();
    let rep = uniqueness_experiment(&s.params, &q, &q_tilde, s.u0(), 0.0, 0.4, &opts).map_err(err)?;
    let same = uniqueness_experiment(&s.params, &q, &q, s.u0(), 0.0, 0.4, &opts).map_err(err)?;

    // Recompute the discrepancy from two plain runs.
    let pt = s.params.with_q(QProfile::Piecewise(q_tilde)).map_err(err)?;
    let a = simulate(&s.params, s.u0(), 0.4, &opts).map_err(err)?;
    let b = simulate(&pt, s.u0(), 0.4, &opts).map_err(err)?;
    let n = s.params.grid().n();
    let (i, dx) = (n / 2, s.params.grid().dx());
    let manual = a
        .states
        .iter()
        .zip(&b.states)
        .map(|(u, v)| {
            let d = u[i] - v[i];
            let dd = (u[i + 1] - u[i - 1] - v[i + 1] + v[i - 1]) / (2.0 * dx);
            d.abs() + dd.abs()
        })
        .fold(0.0, f64::max);
    let agree = (manual - rep.max_discrepancy).abs() <= 1e-12 * manual;
    Ok((
        rep.max_discrepancy >= 1e-6 && same.max_discrepancy == 0.0 && agree,
        format!(
            "max discrepancy {:.4e} (recomputed {manual:.4e}), identical q {:e}",
            rep.max_discrepancy, same.max_discrepancy
        ),
    ))
}

fn stability_sweep() -> Check {
    let s = presets::inversion();
    let w = s.config.inverse.window;
    if (w.t0, w.t_prime, w.t_end, w.a, w.b) != (0.05, 0.2, 0.4, -0.5, 0.5) {
        return Err("preset window differs from t0=0.05, T'=0.2, T=0.4, (a,b)=(-0.5,0.5)".into());
    }
    let q = s.params.insolation().q.to_piecewise().ok_or("closed-form q expected")?;
    let shape = &s.config.inverse.stability_shape;
    let mut ratios = [1e-3, 1e-2, 1e-1]
        .par_iter()
        .map(|&amp| {
            stability_ratio(
                &s.params,
                QProfile::Piecewise(q.clone()),
                QProfile::Piecewise(q.add(&shape.scaled(amp))),
                s.u0(),
                s.u0(),
                &w,
                &s.simulation_options(),
            )
            .map(|r| r.ratio)
            .map_err(err)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let finite = ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    let listed = ratios.iter().map(|r| format!("{r:.5e}")).collect::<Vec<_>>().join(", ");
    ratios.sort_by(f64::total_cmp);
    let (median, max) = (ratios[1], ratios[2]);
    Ok((finite && max <= 10.0 * median, format!("ratios {listed}")))
}

fn least_squares() -> Check {
    let s = with_grid(&presets::inversion(), 32);
    let w = s.config.inverse.window;
    let opts = LeastSquaresOptions::default();
    if opts.max_iters != 500 {
        return Err("iteration budget must be 500".into());
    }
    let traj = simulate(
        &s.params,
        s.u0(),
        w.t_end,
        &SimulationOptions {
            target_dt: opts.target_dt,
            ..SimulationOptions::default()
        },
    )
    .map_err(err)?;
    let truth = s.params.q_cells().to_vec();
    let solve = |sigma: f64| -> Result<(f64, usize), String> {
        let (loc, snap) = ObservationSet::stability_pair(&traj, &w, sigma, 17).map_err(err)?;
        let r = reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), 0.0, &opts).map_err(err)?;
        Ok((rel_l2(&r.q_hat, &truth), r.iterations))
    };
    let (clean, iters) = solve(0.0)?;
    let sigmas = [1e-4, 1e-3, 1e-2];
    let errs = sigmas
        .par_iter()
        .map(|&sg| solve(sg).map(|e| e.0))
        .collect::<Result<Vec<_>, _>>()?;
    // Least-squares slope of log error against log sigma.
    let xs: Vec<f64> = sigmas.iter().map(|s| s.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    Ok((
        clean <= 1e-3 && iters <= 500 && slope <= 1.2,
        format!(
            "noiseless rel_l2 {clean:.3e} in {iters} iterations; errors {} at sigma 1e-4..1e-2, slope {slope:.3}",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    ))
}

struct Criterion {
    id: u32,
    title: &'static str,
    limit: Duration,
    run: fn() -> Check,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            title: "operator suite",
            limit: Duration::from_secs(1),
            run: operator_suite,
        },
        Criterion {
            id: 2,
            title: "sup-norm bound",
            limit: Duration::from_secs(10),
            run: sellers_bound,
        },
        Criterion {
            id: 3,
            title: "mild-solution oracle",
            limit: Duration::from_secs(1),
            run: mild_solution,
        },
        Criterion {
            id: 4,
            title: "memory freezing",
            limit: Duration::from_secs(60),
            run: memory_freezing,
        },
        Criterion {
            id: 5,
            title: "Budyko regularization",
            limit: Duration::from_secs(60),
            run: budyko_regularization,
        },
        Criterion {
            id: 6,
            title: "direct inversion",
            limit: Duration::from_secs(30),
            run: direct_inversion,
        },
        Criterion {
            id: 7,
            title: "uniqueness contrapositive",
            limit: Duration::from_secs(20),
            run: uniqueness,
        },
        Criterion {
            id: 8,
            title: "stability sweep",
            limit: Duration::from_secs(60),
            run: stability_sweep,
        },
        Criterion {
            id: 9,
            title: "least-squares inversion",
            limit: Duration::from_secs(600),
            run: least_squares,
        },
    ];
    let mut failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let in_time = elapsed <= c.limit;
        let (passed, detail) = match outcome {
            Ok((p, d)) => (p && in_time, d),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!passed);
        println!(
            "{} criterion {} ({}): {} [{:.2?} of {:?}{}]",
            if passed { "PASS" } else { "FAIL" },
            c.id,
            c.title,
            detail,
            elapsed,
            c.limit,
            if in_time { "" } else { ", over time" }
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
