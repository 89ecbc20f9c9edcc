//! Reconstruction of the insolation profile `q` and numerical probes of its
//! identifiability.
//!
//! While `t < delta` and the kernel vanishes on `[-delta, 0]`, the memory
//! term only sees the initial history, so `q` enters the equation as a
//! known-coefficient source. All modes here rely on that window.

mod admissible;
mod direct;
mod experiments;
mod leastsq;
mod observe;

use serde::{Deserialize, Serialize};

use crate::grid::Grid;

pub use admissible::{evaluate_piecewise_analytic, LocalizedBounds, PiecewiseAnalytic};
pub use direct::{reconstruct_q_direct, DIVISION_FLOOR};
pub use experiments::{stability_ratio, uniqueness_experiment, StabilityReport, UniquenessReport};
pub use leastsq::{reconstruct_q_leastsq, LeastSquaresOptions};
pub use observe::{add_noise, ObservationKind, ObservationSet, ObservationWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionResult {
    /// Cell centers.
    pub x: Vec<f64>,
    pub q_hat: Vec<f64>,
    pub q_true: Option<Vec<f64>>,
    pub rel_l2_error: Option<f64>,
    pub residual_norm: f64,
    pub regularization_weight: f64,
    pub iterations: usize,
    /// Objective after each accepted iteration, starting value first.
    pub objective_history: Vec<f64>,
    /// Set when the data window reaches past `delta`.
    pub exploratory: bool,
}

impl ReconstructionResult {
    pub(crate) fn new(grid: &Grid, q_hat: Vec<f64>, residual_norm: f64, regularization_weight: f64) -> Self {
        Self {
            x: grid.centers().to_vec(),
            q_hat,
            q_true: None,
            rel_l2_error: None,
            residual_norm,
            regularization_weight,
            iterations: 0,
            objective_history: Vec::new(),
            exploratory: false,
        }
    }

    /// Attaches the ground truth and the relative `L^2` error against it.
    pub fn with_truth(mut self, q_true: &[f64]) -> crate::Result<Self> {
        if q_true.len() != self.q_hat.len() {
            return Err(crate::error::invalid("truth and estimate sizes disagree"));
        }
        self.rel_l2_error = Some(rel_l2_error(&self.q_hat, q_true));
        self.q_true = Some(q_true.to_vec());
        Ok(self)
    }
}

/// `||a - b|| / ||b||` with uniform cell weights; `||a||` if `b` vanishes.
pub fn rel_l2_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use std::path::Path;

    use crate::io::Scenario;
    use crate::presets;
    use crate::stepper::{simulate, Trajectory};

    /// The inversion preset on an `n`-cell grid.
    pub fn scenario(n: usize) -> Scenario {
        let mut c = presets::inversion().config;
        c.grid.n = n;
        Scenario::from_config(c, Path::new(".")).unwrap()
    }

    pub fn trajectory(s: &Scenario, dt: f64) -> Trajectory {
        let mut opts = s.simulation_options();
        opts.target_dt = dt;
        simulate(&s.params, s.u0(), s.t_end(), &opts).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rel_l2_error_examples() {
        assert_eq!(rel_l2_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(rel_l2_error(&[3.0, 4.0], &[0.0, 0.0]), 5.0);
        assert!((rel_l2_error(&[1.1, 0.0], &[1.0, 0.0]) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn truth_must_match_in_size() {
        let g = Grid::new(4, 1.0).unwrap();
        let r = ReconstructionResult::new(&g, vec![1.0; 4], 0.0, 0.0);
        assert!(r.clone().with_truth(&[1.0; 3]).is_err());
        let r = r.with_truth(&[2.0; 4]).unwrap();
        assert_eq!(r.rel_l2_error, Some(0.5));
    }

    proptest! {
        #[test]
        fn rel_l2_error_is_scale_invariant(
            v in proptest::collection::vec(-10.0f64..10.0, 1..20),
            w in proptest::collection::vec(0.5f64..10.0, 20),
            c in 0.1f64..100.0,
        ) {
            let b = &w[..v.len()];
            let e = rel_l2_error(&v, b);
            let scaled_a: Vec<f64> = v.iter().map(|x| c * x).collect();
            let scaled_b: Vec<f64> = b.iter().map(|x| c * x).collect();
            prop_assert!((rel_l2_error(&scaled_a, &scaled_b) - e).abs() <= 1e-12 * (1.0 + e));
        }
    }
}
