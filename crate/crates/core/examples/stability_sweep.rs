//! Ratio of the coefficient error to the data norms over a sweep of
//! perturbation amplitudes and shapes.

use ebmm::inverse::{stability_ratio, PiecewiseAnalytic};
use ebmm::{presets, QProfile};

fn main() -> ebmm::Result<()> {
    let s = presets::inversion();
    let q = s.params.insolation().q.to_piecewise().expect("closed-form q");
    let w = s.config.inverse.window;
    for (lo, hi) in [(-0.9, -0.3), (-0.3, 0.3), (0.3, 0.9)] {
        let shape = PiecewiseAnalytic::bump(lo, hi, 1.0)?;
        print!("bump on [{lo:>4}, {hi:>4}]:");
        for amp in [1e-3, 1e-2, 1e-1] {
            let qt = QProfile::Piecewise(q.add(&shape.scaled(amp)));
            let r = stability_ratio(
                &s.params,
                QProfile::Piecewise(q.clone()),
                qt,
                s.u0(),
                s.u0(),
                &w,
                &s.simulation_options(),
            )?;
            print!("  {amp:e} -> {:.4}", r.ratio);
        }
        println!();
    }
    Ok(())
}
