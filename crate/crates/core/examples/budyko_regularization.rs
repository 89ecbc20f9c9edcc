//! Budyko model through the regularization sequence: Cauchy gaps per j and
//! the inclusion check of the limit candidate.

use ebmm::budyko::solve_budyko;
use ebmm::presets;

fn main() -> ebmm::Result<()> {
    let s = presets::budyko_crossing();
    let sol = solve_budyko(&s.params, s.u0(), s.t_end(), &s.config.budyko)?;
    println!("j      gap to previous j");
    for (j, gap) in &sol.gaps {
        println!("{j:<6} {gap:.4e}");
    }
    let c = &sol.inclusion_report.counts;
    println!(
        "j_final {}: {} ice-branch, {} ice-free, {} threshold points, {} violations",
        sol.j_final, c.ai_branch, c.af_branch, c.interval, c.violation
    );
    let u_bar = s.params.coalbedo().u_bar;
    let traj = &sol.trajectory;
    let icy = |k: usize| traj.states[k].iter().filter(|&&u| u < u_bar).count();
    println!("t      ice-covered cells");
    for k in (0..traj.len()).step_by(traj.len() / 10) {
        println!("{:<6.2} {}", traj.times[k], icy(k));
    }
    Ok(())
}
