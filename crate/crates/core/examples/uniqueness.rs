//! Two insolation profiles observed at one point: the traces of u and u_x
//! separate as soon as the perturbation reaches x0.

use ebmm::inverse::{uniqueness_experiment, PiecewiseAnalytic};
use ebmm::presets;

fn main() -> ebmm::Result<()> {
    let s = presets::inversion();
    let q = s.params.insolation().q.to_piecewise().expect("closed-form q");
    for (lo, hi) in [(-0.2, 0.2), (0.2, 0.6), (0.6, 0.9)] {
        let q_tilde = q.add(&PiecewiseAnalytic::bump(lo, hi, 0.1)?);
        let r = uniqueness_experiment(&s.params, &q, &q_tilde, s.u0(), 0.0, s.t_end(), &s.simulation_options())?;
        println!(
            "bump on [{lo}, {hi}]: max discrepancy at x0 = {} is {:.3e}",
            r.x0_snapped, r.max_discrepancy
        );
    }
    Ok(())
}
