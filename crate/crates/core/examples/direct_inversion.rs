//! Generate-then-invert: recover q pointwise from a clean trajectory at
//! t_eval < delta, on two grids.

use std::path::Path;

use ebmm::inverse::{reconstruct_q_direct, rel_l2_error};
use ebmm::io::Scenario;
use ebmm::{presets, simulate};

fn main() -> ebmm::Result<()> {
    let base = presets::inversion();
    for (n, dt) in [(32, 2e-3), (64, 1e-3), (128, 5e-4)] {
        let mut c = base.config.clone();
        c.grid.n = n;
        c.run.target_dt = dt;
        let s = Scenario::from_config(c, Path::new("."))?;
        let traj = simulate(&s.params, s.u0(), s.t_end(), &s.simulation_options())?;
        let r = reconstruct_q_direct(&traj, &s.params, s.config.inverse.t_eval)?;
        println!(
            "n = {n:<4} dt = {dt:<7} rel L2 error {:.3e}  residual {:.2e}",
            rel_l2_error(&r.q_hat, s.params.q_cells()),
            r.residual_norm
        );
    }
    Ok(())
}
