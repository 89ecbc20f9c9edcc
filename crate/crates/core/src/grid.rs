//! Uniform finite-volume mesh on `(-1, 1)` and the degenerate diffusion
//! operator `u -> (rho u_x)_x` with `rho(x) = rho0 (1 - x^2)`.
//!
//! Fluxes live on cell faces. Because `rho` vanishes at both end faces the
//! boundary fluxes are identically zero, so the weighted no-flux condition
//! `rho u_x = 0` holds without ghost cells and the operator conserves the
//! cell sum exactly.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    rho0: f64,
    dx: f64,
    faces: Vec<f64>,
    centers: Vec<f64>,
    rho_at_faces: Vec<f64>,
}

impl Grid {
    /// Builds a grid of `n >= 3` cells with diffusion scale `rho0 > 0`.
    pub fn new(n: usize, rho0: f64) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("grid needs at least 3 cells, got {n}")));
        }
        if !(rho0 > 0.0 && rho0.is_finite()) {
            return Err(invalid(format!("rho0 must be positive, got {rho0}")));
        }
        let dx = 2.0 / n as f64;
        // Faces from an integer index so the end points are exactly -1 and 1.
        let faces: Vec<f64> = (0..=n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
        let centers = faces.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let mut rho_at_faces: Vec<f64> = faces.iter().map(|&x| rho0 * (1.0 - x * x)).collect();
        rho_at_faces[0] = 0.0;
        rho_at_faces[n] = 0.0;
        Ok(Self {
            n,
            rho0,
            dx,
            faces,
            centers,
            rho_at_faces,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn rho_at_faces(&self) -> &[f64] {
        &self.rho_at_faces
    }

    /// Index of the cell center closest to `x`.
    pub fn nearest_cell(&self, x: f64) -> usize {
        let i = ((x + 1.0) / self.dx).floor();
        (i.max(0.0) as usize).min(self.n - 1)
    }

    /// Samples `f` at the cell centers.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.centers.iter().map(|&x| f(x)).collect()
    }

    /// Discrete `L^2(I)` norm, `sqrt(sum dx v_i^2)`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        (self.dx * v.iter().map(|a| a * a).sum::<f64>()).sqrt()
    }

    /// Discrete `L^2` norm restricted to the cells whose centers lie in `[a, b]`.
    pub fn l2_norm_on(&self, v: &[f64], a: f64, b: f64) -> f64 {
        let s: f64 = self
            .centers
            .iter()
            .zip(v)
            .filter(|(&x, _)| x >= a && x <= b)
            .map(|(_, w)| w * w)
            .sum();
        (self.dx * s).sqrt()
    }

    /// `|| sqrt(rho) D_x v ||_{L^2}` with differences taken across interior faces.
    pub fn weighted_gradient_norm(&self, v: &[f64]) -> f64 {
        let s: f64 = (1..self.n)
            .map(|f| {
                let d = (v[f] - v[f - 1]) / self.dx;
                self.rho_at_faces[f] * d * d
            })
            .sum();
        (self.dx * s).sqrt()
    }

    /// Discrete norm of the energy space `V`: `||v|| + ||sqrt(rho) v_x||`.
    ///
    /// Diagnostic only; no bound is asserted on it.
    pub fn v_norm(&self, v: &[f64]) -> f64 {
        self.l2_norm(v) + self.weighted_gradient_norm(v)
    }

    /// Graph norm of the operator domain, `||v|| + ||Op v||`.
    pub fn domain_norm(&self, op: &DiffusionOperator, v: &[f64]) -> Result<f64> {
        let av = op.apply(v)?;
        Ok(self.l2_norm(v) + self.l2_norm(&av))
    }
}

/// Tridiagonal discrete form of `(rho u_x)_x`.
///
/// `sub[i]` couples rows `i + 1` and `i`, `sup[i]` couples rows `i` and
/// `i + 1`; for this operator both equal `rho_{i+1} / dx^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOperator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl DiffusionOperator {
    pub fn assemble(grid: &Grid) -> Self {
        let n = grid.n();
        let h2 = grid.dx() * grid.dx();
        let rho = grid.rho_at_faces();
        let coupling: Vec<f64> = (1..n).map(|f| rho[f] / h2).collect();
        // Diagonal from the same couplings so every row sums to exactly zero.
        let diag = (0..n)
            .map(|i| {
                let left = if i > 0 { coupling[i - 1] } else { 0.0 };
                let right = if i + 1 < n { coupling[i] } else { 0.0 };
                -(left + right)
            })
            .collect();
        Self {
            sub: coupling.clone(),
            diag,
            sup: coupling,
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn sup(&self) -> &[f64] {
        &self.sup
    }

    /// Max-row-sum norm of the operator.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n())
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.sub[i - 1].abs();
                }
                if i + 1 < self.n() {
                    s += self.sup[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if u.len() != n {
            return Err(invalid(format!(
                "state length {} does not match operator size {n}",
                u.len()
            )));
        }
        let mut out = vec![0.0; n];
        self.apply_into(u, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        let n = self.n();
        // Flux form: constants map to exactly zero.
        for i in 0..n {
            let mut acc = 0.0;
            if i > 0 {
                acc -= self.sub[i - 1] * (u[i] - u[i - 1]);
            }
            if i + 1 < n {
                acc += self.sup[i] * (u[i + 1] - u[i]);
            }
            out[i] = acc;
        }
    }

    /// Solves `(Id - dt Op) v = rhs` by the Thomas algorithm.
    ///
    /// The system matrix is a strictly diagonally dominant M-matrix, so no
    /// pivoting is needed and `||v||_inf <= ||rhs||_inf`.
    pub fn solve_implicit(&self, rhs: &[f64], dt: f64) -> Result<Vec<f64>> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        let n = self.n();
        if rhs.len() != n {
            return Err(invalid(format!(
                "rhs length {} does not match operator size {n}",
                rhs.len()
            )));
        }
        let mut v = rhs.to_vec();
        let mut scratch = vec![0.0; n];
        self.solve_implicit_in_place(&mut v, dt, &mut scratch);
        Ok(v)
    }

    pub(crate) fn solve_implicit_in_place(&self, x: &mut [f64], dt: f64, c_prime: &mut [f64]) {
        let n = self.n();
        // Bands of Id - dt*Op.
        let a = |i: usize| -dt * self.sub[i - 1];
        let b = |i: usize| 1.0 - dt * self.diag[i];
        let c = |i: usize| -dt * self.sup[i];

        let mut denom = b(0);
        c_prime[0] = c(0) / denom;
        x[0] /= denom;
        for i in 1..n {
            denom = b(i) - a(i) * c_prime[i - 1];
            if i + 1 < n {
                c_prime[i] = c(i) / denom;
            }
            x[i] = (x[i] - a(i) * x[i - 1]) / denom;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c_prime[i] * x[i + 1];
        }
    }
}

/// Convenience wrapper for [`DiffusionOperator::apply`].
pub fn apply_diffusion(op: &DiffusionOperator, u: &[f64]) -> Result<Vec<f64>> {
    op.apply(u)
}

/// Convenience wrapper for [`DiffusionOperator::solve_implicit`].
pub fn solve_implicit(op: &DiffusionOperator, rhs: &[f64], dt: f64) -> Result<Vec<f64>> {
    op.solve_implicit(rhs, dt)
}
