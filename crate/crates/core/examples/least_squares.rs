//! Least-squares reconstruction of q from localized u_t data and one
//! snapshot, with and without noise.

use std::path::Path;

use ebmm::inverse::{reconstruct_q_leastsq, rel_l2_error, LeastSquaresOptions, ObservationSet};
use ebmm::io::Scenario;
use ebmm::{presets, simulate, SimulationOptions};

fn main() -> ebmm::Result<()> {
    let mut c = presets::inversion().config;
    c.grid.n = 16;
    let s = Scenario::from_config(c, Path::new("."))?;
    let w = s.config.inverse.window;
    let traj = simulate(&s.params, s.u0(), w.t_end, &SimulationOptions::with_dt(1e-3))?;
    for sigma in [0.0, 1e-4, 1e-3] {
        let (loc, snap) = ObservationSet::stability_pair(&traj, &w, sigma, 3)?;
        let opts = LeastSquaresOptions {
            max_iters: 200,
            ..LeastSquaresOptions::default()
        };
        match reconstruct_q_leastsq(&loc, &snap, &s.params, s.u0(), 1e-8, &opts) {
            Ok(r) => println!(
                "sigma {sigma:<7} rel L2 error {:.3e} after {} iterations",
                rel_l2_error(&r.q_hat, s.params.q_cells()),
                r.iterations
            ),
            Err(e) => println!("sigma {sigma:<7} {e}"),
        }
    }
    Ok(())
}
