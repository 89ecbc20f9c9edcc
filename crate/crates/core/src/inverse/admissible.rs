use serde::{Deserialize, Serialize};

use crate::error::{invalid, validation, Result};

/// Piecewise-polynomial function on `[-1, 1]`:
/// `psi(x) = sum_j chi_[p_j, p_{j+1})(x) phi_j(x)`, the last piece closed at 1.
///
/// Polynomials are analytic, so this is the admissible class for the
/// pointwise-observation experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewiseRaw")]
pub struct PiecewiseAnalytic {
    breakpoints: Vec<f64>,
    /// Ascending-power coefficients of each piece.
    coefficients: Vec<Vec<f64>>,
}

#[derive(Deserialize)]
struct PiecewiseRaw {
    breakpoints: Vec<f64>,
    coefficients: Vec<Vec<f64>>,
}

impl TryFrom<PiecewiseRaw> for PiecewiseAnalytic {
    type Error = crate::Error;

    fn try_from(raw: PiecewiseRaw) -> Result<Self> {
        Self::new(raw.breakpoints, raw.coefficients)
    }
}

impl PiecewiseAnalytic {
    pub fn new(breakpoints: Vec<f64>, coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(validation("piecewise.breakpoints", "need at least two breakpoints"));
        }
        if breakpoints[0] != -1.0 || *breakpoints.last().unwrap() != 1.0 {
            return Err(validation(
                "piecewise.breakpoints",
                "first breakpoint must be -1 and last 1",
            ));
        }
        if !breakpoints.windows(2).all(|w| w[0] < w[1]) {
            return Err(validation("piecewise.breakpoints", "breakpoints must be increasing"));
        }
        if coefficients.len() != breakpoints.len() - 1 {
            return Err(validation("piecewise.coefficients", "need one polynomial per piece"));
        }
        if coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(validation("piecewise.coefficients", "coefficients must be finite"));
        }
        Ok(Self {
            breakpoints,
            coefficients,
        })
    }

    /// Single polynomial on the whole interval.
    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        Self::new(vec![-1.0, 1.0], vec![coefficients]).expect("single piece is valid")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    fn horner(c: &[f64], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    fn piece(&self, x: f64) -> usize {
        let last = self.coefficients.len() - 1;
        // Right-open pieces: the piece index is the number of breakpoints <= x, minus one.
        let k = self.breakpoints.partition_point(|&p| p <= x);
        k.saturating_sub(1).min(last)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&x) {
            return Err(invalid(format!("x = {x} outside [-1, 1]")));
        }
        Ok(self.eval_clamped(x))
    }

    pub(crate) fn eval_clamped(&self, x: f64) -> f64 {
        let x = x.clamp(-1.0, 1.0);
        Self::horner(&self.coefficients[self.piece(x)], x)
    }

    /// Largest jump between adjacent pieces at the interior breakpoints.
    pub fn max_jump(&self) -> f64 {
        (1..self.coefficients.len())
            .map(|j| {
                let p = self.breakpoints[j];
                (Self::horner(&self.coefficients[j - 1], p) - Self::horner(&self.coefficients[j], p)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Continuity at the breakpoints (polynomial pieces are then Lipschitz).
    pub fn is_continuous(&self, tol: f64) -> bool {
        self.max_jump() <= tol
    }

    /// Sup norm estimated on a fine sample.
    pub fn sup_norm(&self) -> f64 {
        (0..=4000)
            .map(|k| self.eval_clamped(-1.0 + k as f64 * 5e-4).abs())
            .fold(0.0, f64::max)
    }

    /// Pointwise sum with another piecewise function; the result uses the
    /// merged breakpoint set.
    pub fn add(&self, other: &Self) -> Self {
        let mut bps: Vec<f64> = self.breakpoints.iter().chain(&other.breakpoints).copied().collect();
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        let coefficients = bps
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                let a = &self.coefficients[self.piece(mid)];
                let b = &other.coefficients[other.piece(mid)];
                let len = a.len().max(b.len());
                (0..len)
                    .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect();
        Self {
            breakpoints: bps,
            coefficients,
        }
    }

    /// Multiplies every piece by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            coefficients: self
                .coefficients
                .iter()
                .map(|p| p.iter().map(|a| a * c).collect())
                .collect(),
        }
    }

    /// C^1 polynomial bump `amplitude (1 - ((x - m) / h)^2)^2` on `[lo, hi]`,
    /// zero elsewhere; `m` and `h` are the midpoint and half-width.
    pub fn bump(lo: f64, hi: f64, amplitude: f64) -> Result<Self> {
        if !(-1.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(invalid(format!("bump support [{lo}, {hi}] must lie in [-1, 1]")));
        }
        let m = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        // (1 - y^2)^2 with y = (x - m) / h, expanded in powers of x.
        let y0 = -m / h;
        let y1 = 1.0 / h;
        // y^2 = a0 + a1 x + a2 x^2
        let (a0, a1, a2) = (y0 * y0, 2.0 * y0 * y1, y1 * y1);
        // 1 - y^2
        let b = [1.0 - a0, -a1, -a2];
        let mut sq = [0.0; 5];
        for i in 0..3 {
            for j in 0..3 {
                sq[i + j] += b[i] * b[j];
            }
        }
        let bump: Vec<f64> = sq.iter().map(|c| amplitude * c).collect();
        let mut bps = vec![-1.0];
        let mut coeffs = Vec::new();
        if lo > -1.0 {
            bps.push(lo);
            coeffs.push(vec![0.0]);
        }
        coeffs.push(bump);
        if hi < 1.0 {
            bps.push(hi);
            coeffs.push(vec![0.0]);
        }
        bps.push(1.0);
        Self::new(bps, coeffs)
    }
}

/// Free-function form of [`PiecewiseAnalytic::eval`].
pub fn evaluate_piecewise_analytic(spec: &PiecewiseAnalytic, x: f64) -> Result<f64> {
    spec.eval(x)
}

/// Bounds defining the localized-observation admissible classes: `||q||_inf <= q_bound`
/// and the initial-history bound `initial_bound`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizedBounds {
    pub q_bound: f64,
    pub initial_bound: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn single_piece() {
        let p = PiecewiseAnalytic::polynomial(vec![1.0, 1.0]);
        assert_eq!(p.eval(0.5).unwrap(), 1.5);
        assert_eq!(p.eval(1.0).unwrap(), 2.0);
        assert!(p.eval(1.5).is_err());
    }

    #[test]
    fn breakpoint_takes_right_piece() {
        let p = PiecewiseAnalytic::new(vec![-1.0, 0.0, 1.0], vec![vec![1.0], vec![2.0]]).unwrap();
        assert_eq!(p.eval(0.0).unwrap(), 2.0);
        assert_eq!(p.eval(-1e-12).unwrap(), 1.0);
        assert_eq!(p.eval(-1.0).unwrap(), 1.0);
        assert_eq!(p.eval(1.0).unwrap(), 2.0);
        assert!(!p.is_continuous(1e-12));
    }

    #[test]
    fn continuous_pieces() {
        // 1 + x on [-1, 0), 1 + 2x on [0, 1]
        let p = PiecewiseAnalytic::new(vec![-1.0, 0.0, 1.0], vec![vec![1.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let left = p.eval(-1e-9).unwrap();
        assert_relative_eq!(left, p.eval(0.0).unwrap(), epsilon = 1e-8);
        assert!(p.is_continuous(1e-14));
    }

    #[test]
    fn invalid_specs() {
        assert!(PiecewiseAnalytic::new(vec![-0.9, 1.0], vec![vec![1.0]]).is_err());
        assert!(PiecewiseAnalytic::new(vec![-1.0, 0.5, 0.2, 1.0], vec![vec![1.0]; 3]).is_err());
        assert!(PiecewiseAnalytic::new(vec![-1.0, 1.0], vec![vec![1.0]; 2]).is_err());
    }

    #[test]
    fn bump_shape() {
        let b = PiecewiseAnalytic::bump(0.2, 0.6, 0.1).unwrap();
        assert!(b.is_continuous(1e-12));
        assert_relative_eq!(b.eval(0.4).unwrap(), 0.1, epsilon = 1e-14);
        assert_eq!(b.eval(0.0).unwrap(), 0.0);
        assert_eq!(b.eval(0.8).unwrap(), 0.0);
        for k in 0..100 {
            let x = 0.2 + 0.004 * k as f64;
            let y: f64 = (x - 0.4) / 0.2;
            assert_relative_eq!(b.eval(x).unwrap(), 0.1 * (1.0 - y * y).powi(2), epsilon = 1e-12);
        }
        let q = PiecewiseAnalytic::polynomial(vec![1.0, 0.0, -0.5]);
        let s = q.add(&b);
        assert_relative_eq!(s.eval(0.4).unwrap(), 1.0 - 0.08 + 0.1, epsilon = 1e-13);
        assert_relative_eq!(s.eval(-0.5).unwrap(), 1.0 - 0.125, epsilon = 1e-13);
        assert!(s.is_continuous(1e-12));
    }
}
