use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{DiffusionOperator, Grid};
use crate::stepper::{time_derivative, Trajectory};

/// Observation windows of the localized-data setup:
/// `0 <= t0 < t_prime < t_end` and `(a, b)` inside `(-1, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub t0: f64,
    pub t_prime: f64,
    pub t_end: f64,
    pub a: f64,
    pub b: f64,
}

impl ObservationWindow {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.t0 && self.t0 < self.t_prime && self.t_prime < self.t_end) {
            return Err(invalid(format!(
                "need 0 <= t0 < t_prime < t_end, got {} {} {}",
                self.t0, self.t_prime, self.t_end
            )));
        }
        if !(-1.0 < self.a && self.a < self.b && self.b < 1.0) {
            return Err(invalid(format!("need -1 < a < b < 1, got ({}, {})", self.a, self.b)));
        }
        Ok(())
    }

    /// Cells whose centers lie in `[a, b]`.
    pub fn cells(&self, grid: &Grid) -> Vec<usize> {
        grid.centers()
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= self.a && x <= self.b)
            .map(|(i, _)| i)
            .collect()
    }

    /// Stored indices with `t0 <= t_k <= t_end`.
    pub fn time_indices(&self, traj: &Trajectory) -> Vec<usize> {
        let tol = 1e-9 * traj.dt;
        traj.times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= self.t0 - tol && t <= self.t_end + tol)
            .map(|(k, _)| k)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationKind {
    /// `u(t, x0)` and `u_x(t, x0)`; `x0` is snapped to the center of `cell`.
    Pointwise { x0: f64, cell: usize },
    /// `u_t` on `[t0, t_end] x [a, b]`.
    Localized { a: f64, b: f64, t0: f64, t_end: f64 },
    /// Full state and its discrete `(rho u_x)_x` at `t_prime`.
    Snapshot { t_prime: f64 },
}

/// Sampled data of one observation mode.
///
/// Pointwise: `values[k] = [u]`, `derivative[k] = [u_x]`.
/// Localized: `values[k][c] = u_t` at `times[k]`, `cells[c]`; `derivative` empty.
/// Snapshot: `values = [u]`, `derivative = [Op u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    pub kind: ObservationKind,
    pub times: Vec<f64>,
    pub cells: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    pub derivative: Vec<Vec<f64>>,
    pub noise_level: f64,
    pub seed: Option<u64>,
}

/// Copy of `traj` with i.i.d. uniform `[-sigma, sigma]` noise on every stored
/// state. The initial history is known data and stays exact.
pub fn add_noise(traj: &Trajectory, sigma: f64, seed: u64) -> Result<Trajectory> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("noise level must be >= 0, got {sigma}")));
    }
    let mut out = traj.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for u in out.states.iter_mut().flatten() {
        *u += rng.random_range(-sigma..=sigma);
    }
    Ok(out)
}

/// Centered `u_x` at `cell`, one-sided in the end cells.
pub(crate) fn gradient_at(grid: &Grid, u: &[f64], cell: usize) -> f64 {
    let n = grid.n();
    let dx = grid.dx();
    if cell == 0 {
        (u[1] - u[0]) / dx
    } else if cell == n - 1 {
        (u[n - 1] - u[n - 2]) / dx
    } else {
        (u[cell + 1] - u[cell - 1]) / (2.0 * dx)
    }
}

impl ObservationSet {
    /// `u` and `u_x` at the cell center nearest to `x0`, for every stored time.
    pub fn pointwise(traj: &Trajectory, x0: f64, noise_level: f64, seed: u64) -> Result<Self> {
        if !(-1.0 < x0 && x0 < 1.0) {
            return Err(invalid(format!("x0 = {x0} must lie in (-1, 1)")));
        }
        let noisy = add_noise(traj, noise_level, seed)?;
        let grid = &traj.grid;
        let cell = grid.nearest_cell(x0);
        Ok(Self {
            kind: ObservationKind::Pointwise {
                x0: grid.centers()[cell],
                cell,
            },
            times: noisy.times.clone(),
            cells: vec![cell],
            values: noisy.states.iter().map(|u| vec![u[cell]]).collect(),
            derivative: noisy.states.iter().map(|u| vec![gradient_at(grid, u, cell)]).collect(),
            noise_level,
            seed: Some(seed),
        })
    }

    /// `u_t` on the window `[t0, t_end] x [a, b]`.
    pub fn localized(traj: &Trajectory, window: &ObservationWindow, noise_level: f64, seed: u64) -> Result<Self> {
        window.validate()?;
        let noisy = add_noise(traj, noise_level, seed)?;
        Self::localized_exact(&noisy, window, noise_level, Some(seed))
    }

    pub(crate) fn localized_exact(
        traj: &Trajectory,
        window: &ObservationWindow,
        noise_level: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        let cells = window.cells(&traj.grid);
        let ks = window.time_indices(traj);
        if cells.is_empty() || ks.is_empty() {
            return Err(invalid("observation window contains no samples"));
        }
        if *traj.times.last().unwrap() < window.t_end - 1e-9 * traj.dt {
            return Err(invalid("trajectory ends before the observation window"));
        }
        let mut values = Vec::with_capacity(ks.len());
        for &k in &ks {
            let ut = time_derivative(traj, k)?;
            values.push(cells.iter().map(|&i| ut[i]).collect());
        }
        Ok(Self {
            kind: ObservationKind::Localized {
                a: window.a,
                b: window.b,
                t0: window.t0,
                t_end: window.t_end,
            },
            times: ks.iter().map(|&k| traj.times[k]).collect(),
            cells,
            values,
            derivative: Vec::new(),
            noise_level,
            seed,
        })
    }

    /// Full state and `Op u` at `t_prime`.
    pub fn snapshot(traj: &Trajectory, t_prime: f64, noise_level: f64, seed: u64) -> Result<Self> {
        let noisy = add_noise(traj, noise_level, seed)?;
        Self::snapshot_exact(&noisy, t_prime, noise_level, Some(seed))
    }

    pub(crate) fn snapshot_exact(traj: &Trajectory, t_prime: f64, noise_level: f64, seed: Option<u64>) -> Result<Self> {
        let k = traj.index_of(t_prime)?;
        let u = traj.states[k].clone();
        let au = DiffusionOperator::assemble(&traj.grid).apply(&u)?;
        Ok(Self {
            kind: ObservationKind::Snapshot { t_prime },
            times: vec![traj.times[k]],
            cells: (0..traj.grid.n()).collect(),
            values: vec![u],
            derivative: vec![au],
            noise_level,
            seed,
        })
    }

    /// Localized and snapshot data drawn from one noisy copy of `traj`.
    pub fn stability_pair(
        traj: &Trajectory,
        window: &ObservationWindow,
        noise_level: f64,
        seed: u64,
    ) -> Result<(Self, Self)> {
        window.validate()?;
        let noisy = add_noise(traj, noise_level, seed)?;
        Ok((
            Self::localized_exact(&noisy, window, noise_level, Some(seed))?,
            Self::snapshot_exact(&noisy, window.t_prime, noise_level, Some(seed))?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{scenario, trajectory};
    use super::*;
    use proptest::prelude::*;

    fn window() -> ObservationWindow {
        ObservationWindow {
            t0: 0.05,
            t_prime: 0.2,
            t_end: 0.4,
            a: -0.5,
            b: 0.5,
        }
    }

    #[test]
    fn window_ordering_is_enforced() {
        assert!(window().validate().is_ok());
        let bad = [
            ObservationWindow { t0: 0.2, ..window() },
            ObservationWindow {
                t_prime: 0.4,
                ..window()
            },
            ObservationWindow { t0: -0.1, ..window() },
            ObservationWindow { a: 0.5, ..window() },
            ObservationWindow { b: 1.0, ..window() },
        ];
        for w in bad {
            assert!(w.validate().is_err(), "{w:?}");
        }
    }

    #[test]
    fn window_cells_and_times() {
        let s = scenario(8);
        let traj = trajectory(&s, 0.01);
        // Centers -0.875, -0.625, ..., 0.875; [-0.5, 0.5] holds the middle four.
        assert_eq!(window().cells(&traj.grid), vec![2, 3, 4, 5]);
        let ks = window().time_indices(&traj);
        assert_eq!(ks.first(), Some(&5));
        assert_eq!(ks.last(), Some(&40));
        assert_eq!(ks.len(), 36);
    }

    #[test]
    fn noise_is_seeded_and_leaves_history_alone() {
        let traj = trajectory(&scenario(8), 0.01);
        let a = add_noise(&traj, 1e-3, 11).unwrap();
        let b = add_noise(&traj, 1e-3, 11).unwrap();
        let c = add_noise(&traj, 1e-3, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
        assert_eq!(a.history_0, traj.history_0);
        assert_eq!(add_noise(&traj, 0.0, 11).unwrap(), traj);
        assert!(add_noise(&traj, -1.0, 0).is_err());
        assert!(add_noise(&traj, f64::NAN, 0).is_err());
    }

    #[test]
    fn pointwise_snaps_and_differences() {
        let traj = trajectory(&scenario(8), 0.01);
        let obs = ObservationSet::pointwise(&traj, 0.3, 0.0, 0).unwrap();
        assert_eq!(obs.kind, ObservationKind::Pointwise { x0: 0.375, cell: 5 });
        let u = &traj.states[3];
        assert_eq!(obs.values[3], vec![u[5]]);
        assert_eq!(obs.derivative[3], vec![(u[6] - u[4]) / 0.5]);
        assert!(ObservationSet::pointwise(&traj, 1.0, 0.0, 0).is_err());
        // End cells use one-sided differences.
        assert_eq!(gradient_at(&traj.grid, u, 0), (u[1] - u[0]) / 0.25);
        assert_eq!(gradient_at(&traj.grid, u, 7), (u[7] - u[6]) / 0.25);
    }

    #[test]
    fn localized_and_snapshot_sample_the_trajectory() {
        let traj = trajectory(&scenario(8), 0.01);
        let loc = ObservationSet::localized(&traj, &window(), 0.0, 0).unwrap();
        let ut = time_derivative(&traj, 10).unwrap();
        assert_eq!(loc.times[5], traj.times[10]);
        assert_eq!(loc.values[5], vec![ut[2], ut[3], ut[4], ut[5]]);
        let snap = ObservationSet::snapshot(&traj, 0.2, 0.0, 0).unwrap();
        assert_eq!(snap.values[0], traj.states[20]);
        let au = DiffusionOperator::assemble(&traj.grid).apply(&traj.states[20]).unwrap();
        assert_eq!(snap.derivative[0], au);
        let short = ObservationWindow { t_end: 0.5, ..window() };
        assert!(ObservationSet::localized(&traj, &short, 0.0, 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn noise_stays_within_its_level(sigma in 0.0f64..1.0, seed in any::<u64>()) {
            let traj = trajectory(&scenario(6), 0.05);
            let noisy = add_noise(&traj, sigma, seed).unwrap();
            for (a, b) in noisy.states.iter().flatten().zip(traj.states.iter().flatten()) {
                prop_assert!((a - b).abs() <= sigma);
            }
        }
    }
}
