//! Forward run of the Sellers preset, monitored against the a-priori
//! sup-norm bound.

use ebmm::{presets, simulate, SimulationOptions};

fn main() -> ebmm::Result<()> {
    let s = presets::sellers_linf();
    let m = s.params.linf_bound(0.0)?;
    let opts = SimulationOptions {
        stride: 500,
        ..s.simulation_options()
    };
    let traj = simulate(&s.params, s.u0(), s.t_end(), &opts)?;
    println!("t      min u     max u");
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        println!("{t:<6.2} {lo:<9.5} {hi:.5}");
    }
    println!("sup |u| = {:.6} <= M = {m}", traj.sup_norm_seen);
    Ok(())
}
