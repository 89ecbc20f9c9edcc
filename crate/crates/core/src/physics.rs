//! Pointwise model terms: insolation, coalbedo variants, emission, memory
//! response, the assembled right-hand side and the a-priori sup-norm bound.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, validation, Error, Result};
use crate::grid::Grid;
use crate::inverse::PiecewiseAnalytic;
use crate::memory::MemoryKernel;

/// Second Legendre polynomial.
pub fn legendre_p2(x: f64) -> f64 {
    0.5 * (3.0 * x * x - 1.0)
}

/// Insolation profile `q(x)` on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QProfile {
    Constant {
        value: f64,
    },
    /// `scale * (1 - 0.482 P2(x))`.
    LegendreP2 {
        scale: f64,
    },
    Table(QTable),
    Piecewise(PiecewiseAnalytic),
    /// One value per grid cell; `q(x)` is the value of the cell containing `x`.
    Cells {
        values: Vec<f64>,
    },
}

impl QProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            QProfile::Constant { value } => *value,
            QProfile::LegendreP2 { scale } => scale * (1.0 - 0.482 * legendre_p2(x)),
            QProfile::Table(t) => t.eval(x),
            QProfile::Piecewise(p) => p.eval_clamped(x),
            QProfile::Cells { values } => {
                let n = values.len();
                let i = (((x + 1.0) / 2.0 * n as f64).floor().max(0.0) as usize).min(n - 1);
                values[i]
            }
        }
    }

    /// Piecewise-polynomial form of the closed-form profiles; `None` for
    /// tabulated and per-cell data.
    pub fn to_piecewise(&self) -> Option<PiecewiseAnalytic> {
        match self {
            QProfile::Constant { value } => Some(PiecewiseAnalytic::polynomial(vec![*value])),
            // scale (1 - 0.482 (3 x^2 - 1) / 2)
            QProfile::LegendreP2 { scale } => Some(PiecewiseAnalytic::polynomial(vec![
                scale * (1.0 + 0.5 * 0.482),
                0.0,
                -scale * 1.5 * 0.482,
            ])),
            QProfile::Piecewise(p) => Some(p.clone()),
            QProfile::Table(_) | QProfile::Cells { .. } => None,
        }
    }

    /// `||q||_inf` over `[-1, 1]`.
    pub fn bound(&self) -> f64 {
        match self {
            QProfile::Constant { value } => value.abs(),
            // 1 - 0.482 P2 ranges over [0.518, 1.241].
            QProfile::LegendreP2 { scale } => scale.abs() * (1.0 + 0.5 * 0.482),
            QProfile::Table(t) => t.q.iter().fold(0.0, |m, v| m.max(v.abs())),
            QProfile::Piecewise(p) => p.sup_norm(),
            QProfile::Cells { values } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

/// Tabulated `q(x)` with linear interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    x: Vec<f64>,
    q: Vec<f64>,
}

impl QTable {
    pub fn new(x: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if x.len() < 2 || x.len() != q.len() {
            return Err(validation("q_table", "need at least two (x, q) rows"));
        }
        if !x.windows(2).all(|w| w[0] < w[1]) {
            return Err(validation("q_table", "x must be strictly increasing"));
        }
        if x[0] > -1.0 + 1e-12 || x[x.len() - 1] < 1.0 - 1e-12 {
            return Err(validation("q_table", "table must cover [-1, 1]"));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(validation("q_table", "q values must be finite"));
        }
        Ok(Self { x, q })
    }

    /// CSV with header `x,q`.
    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(crate::io::csv_error)?.clone();
        if headers.iter().collect::<Vec<_>>() != ["x", "q"] {
            return Err(Error::Parse {
                line: 1,
                message: "expected header x,q".into(),
            });
        }
        let (mut xs, mut qs) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(crate::io::csv_error)?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse = |i: usize| {
                rec[i].parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })
            };
            xs.push(parse(0)?);
            qs.push(parse(1)?);
        }
        Self::new(xs, qs)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let i = match self.x.binary_search_by(|p| p.total_cmp(&x)) {
            Ok(i) => return self.q[i],
            Err(i) => i.clamp(1, self.x.len() - 1),
        };
        let w = ((x - self.x[i - 1]) / (self.x[i] - self.x[i - 1])).clamp(0.0, 1.0);
        self.q[i - 1] * (1.0 - w) + self.q[i] * w
    }
}

/// Seasonal factor `r(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Seasonal {
    Constant {
        value: f64,
    },
    /// `mean + amplitude cos(2 pi t / period)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        period: f64,
    },
}

impl Seasonal {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Seasonal::Constant { value } => *value,
            Seasonal::Cosine {
                mean,
                amplitude,
                period,
            } => mean + amplitude * (2.0 * std::f64::consts::PI * t / period).cos(),
        }
    }

    pub fn bound(&self) -> f64 {
        match self {
            Seasonal::Constant { value } => value.abs(),
            Seasonal::Cosine { mean, amplitude, .. } => mean.abs() + amplitude.abs(),
        }
    }

    pub fn derivative_bound(&self) -> f64 {
        match self {
            Seasonal::Constant { .. } => 0.0,
            Seasonal::Cosine { amplitude, period, .. } => 2.0 * std::f64::consts::PI * amplitude.abs() / period,
        }
    }

    /// Lower bound of `r` over `t >= 0`.
    pub fn min(&self) -> f64 {
        match self {
            Seasonal::Constant { value } => *value,
            Seasonal::Cosine { mean, amplitude, .. } => mean - amplitude.abs(),
        }
    }
}

/// Incoming flux `Q(t, x) = r(t) q(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsolationSpec {
    pub q: QProfile,
    pub r: Seasonal,
}

impl InsolationSpec {
    pub fn q_bound(&self) -> f64 {
        self.q.bound()
    }

    pub fn r_bound(&self) -> f64 {
        self.r.bound()
    }

    pub fn r_prime_bound(&self) -> f64 {
        self.r.derivative_bound()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoalbedoKind {
    SellersSmooth,
    BudykoGraph,
    BudykoRegularized { j: u32 },
}

/// Coalbedo `beta(u)` between the ice value `a_i` and the ice-free value `a_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoalbedoSpec {
    pub kind: CoalbedoKind,
    pub a_i: f64,
    pub a_f: f64,
    pub u_bar: f64,
    /// Half-width of the smooth Sellers transition.
    pub width: f64,
}

/// Value of the coalbedo; the Budyko graph is set-valued at the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoalbedoValue {
    Point(f64),
    Interval(f64, f64),
}

/// C^2 quintic smoothstep on `[-1, 1]`, 0 below and 1 above.
fn smoothstep5(z: f64) -> f64 {
    let y = ((z + 1.0) * 0.5).clamp(0.0, 1.0);
    y * y * y * (y * (6.0 * y - 15.0) + 10.0)
}

fn smoothstep5_derivative(z: f64) -> f64 {
    let y = (z + 1.0) * 0.5;
    if !(0.0..=1.0).contains(&y) {
        return 0.0;
    }
    // d/dz = (1/2) * 30 y^2 (1 - y)^2
    15.0 * y * y * (1.0 - y) * (1.0 - y)
}

/// C^1 cubic (Hermite) smoothstep on `[-1, 1]`.
fn smoothstep3(z: f64) -> f64 {
    let y = ((z + 1.0) * 0.5).clamp(0.0, 1.0);
    y * y * (3.0 - 2.0 * y)
}

impl CoalbedoSpec {
    pub const DEFAULT_U_BAR: f64 = -10.0;
    pub const DEFAULT_WIDTH: f64 = 10.0;

    pub fn validate(&self) -> Result<()> {
        if !(self.a_i < self.a_f) {
            return Err(validation("coalbedo", "a_i < a_f is required"));
        }
        if !(self.width > 0.0) {
            return Err(validation("coalbedo.width", "width must be positive"));
        }
        if let CoalbedoKind::BudykoRegularized { j } = self.kind {
            if j == 0 {
                return Err(validation("coalbedo.j", "regularization index must be >= 1"));
            }
        }
        Ok(())
    }

    pub fn with_kind(mut self, kind: CoalbedoKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn eval(&self, u: f64) -> CoalbedoValue {
        let span = self.a_f - self.a_i;
        match self.kind {
            CoalbedoKind::SellersSmooth => {
                CoalbedoValue::Point(self.a_i + span * smoothstep5((u - self.u_bar) / self.width))
            }
            CoalbedoKind::BudykoGraph => {
                if u < self.u_bar {
                    CoalbedoValue::Point(self.a_i)
                } else if u > self.u_bar {
                    CoalbedoValue::Point(self.a_f)
                } else {
                    CoalbedoValue::Interval(self.a_i, self.a_f)
                }
            }
            CoalbedoKind::BudykoRegularized { j } => {
                let half = 1.0 / j as f64;
                if u <= self.u_bar - half {
                    CoalbedoValue::Point(self.a_i)
                } else if u >= self.u_bar + half {
                    CoalbedoValue::Point(self.a_f)
                } else {
                    CoalbedoValue::Point(self.a_i + span * smoothstep3((u - self.u_bar) / half))
                }
            }
        }
    }

    /// Single-valued coalbedo; fails for the Budyko graph.
    pub fn beta(&self, u: f64) -> Result<f64> {
        match self.eval(u) {
            CoalbedoValue::Point(v) if self.kind != CoalbedoKind::BudykoGraph => Ok(v),
            _ => Err(invalid("the Budyko graph is set-valued; use the budyko module")),
        }
    }

    /// `d beta / du` for the single-valued kinds.
    pub fn derivative(&self, u: f64) -> f64 {
        let span = self.a_f - self.a_i;
        match self.kind {
            CoalbedoKind::SellersSmooth => span * smoothstep5_derivative((u - self.u_bar) / self.width) / self.width,
            CoalbedoKind::BudykoRegularized { j } => {
                let half = 1.0 / j as f64;
                let z = (u - self.u_bar) / half;
                if z.abs() >= 1.0 {
                    0.0
                } else {
                    let y = (z + 1.0) * 0.5;
                    span * 3.0 * y * (1.0 - y) / half
                }
            }
            CoalbedoKind::BudykoGraph => 0.0,
        }
    }

    /// `||beta||_inf`, taken as `max(|a_i|, |a_f|)`.
    pub fn bound(&self) -> f64 {
        self.a_i.abs().max(self.a_f.abs())
    }
}

/// Free-function form of [`CoalbedoSpec::eval`].
pub fn coalbedo(spec: &CoalbedoSpec, u: f64) -> CoalbedoValue {
    spec.eval(u)
}

/// Emissivity `eps(u)` of the Stefan-Boltzmann law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Emissivity {
    Constant {
        eps1: f64,
    },
    /// `eps1 + (eps2 - eps1) / (1 + exp(-(u - center) / width))`.
    Logistic {
        eps1: f64,
        eps2: f64,
        center: f64,
        width: f64,
    },
}

impl Emissivity {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Emissivity::Constant { eps1 } => eps1,
            Emissivity::Logistic {
                eps1,
                eps2,
                center,
                width,
            } => eps1 + (eps2 - eps1) / (1.0 + (-(u - center) / width).exp()),
        }
    }

    /// Positive lower bound `eps_1`.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            Emissivity::Constant { eps1 } => eps1,
            Emissivity::Logistic { eps1, eps2, .. } => eps1.min(eps2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmissionSpec {
    /// `eps(u) |u|^3 u`.
    Sellers { epsilon: Emissivity },
    /// `a + b u`.
    Budyko { a: f64, b: f64 },
}

impl EmissionSpec {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            EmissionSpec::Sellers { epsilon } => {
                let a = u.abs();
                epsilon.eval(u) * a * a * a * u
            }
            EmissionSpec::Budyko { a, b } => a + b * u,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EmissionSpec::Sellers { epsilon } => {
                if !(epsilon.lower_bound() > 0.0) {
                    return Err(validation(
                        "emission.epsilon",
                        "emissivity must be bounded below by eps1 > 0",
                    ));
                }
                if let Emissivity::Logistic { width, .. } = epsilon {
                    if !(*width > 0.0) {
                        return Err(validation("emission.epsilon.width", "width must be positive"));
                    }
                }
                Ok(())
            }
            EmissionSpec::Budyko { a, b } => {
                if a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(validation("emission", "a and b must be finite"))
                }
            }
        }
    }
}

/// Free-function form of [`EmissionSpec::eval`].
pub fn emitted(spec: &EmissionSpec, u: f64) -> f64 {
    spec.eval(u)
}

/// Memory response `f(h) = f_bound tanh(h / h_scale)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryResponseSpec {
    pub f_bound: f64,
    pub h_scale: f64,
}

impl MemoryResponseSpec {
    pub fn zero() -> Self {
        Self {
            f_bound: 0.0,
            h_scale: 1.0,
        }
    }

    pub fn eval(&self, h: f64) -> f64 {
        if self.f_bound == 0.0 {
            return 0.0;
        }
        self.f_bound * (h / self.h_scale).tanh()
    }

    /// Lipschitz constant of `f`.
    pub fn lipschitz(&self) -> f64 {
        self.f_bound.abs() / self.h_scale
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_scale > 0.0) || !self.f_bound.is_finite() {
            return Err(validation("memory_response", "need finite f_bound and h_scale > 0"));
        }
        Ok(())
    }
}

/// Full parameter set of one model instance.
#[derive(Debug, Clone, Serialize)]
pub struct ModelParams {
    grid: Grid,
    insolation: InsolationSpec,
    coalbedo: CoalbedoSpec,
    emission: EmissionSpec,
    memory_response: MemoryResponseSpec,
    kernel: MemoryKernel,
    #[serde(skip)]
    q_cells: Vec<f64>,
}

impl ModelParams {
    pub fn new(
        grid: Grid,
        insolation: InsolationSpec,
        coalbedo: CoalbedoSpec,
        emission: EmissionSpec,
        memory_response: MemoryResponseSpec,
        kernel: MemoryKernel,
    ) -> Result<Self> {
        coalbedo.validate()?;
        emission.validate()?;
        memory_response.validate()?;
        if let QProfile::Cells { values } = &insolation.q {
            if values.len() != grid.n() {
                return Err(validation("insolation.q", "cell values must match the grid size"));
            }
        }
        if let Seasonal::Cosine { period, .. } = insolation.r {
            if !(period > 0.0) {
                return Err(validation("insolation.r.period", "period must be positive"));
            }
        }
        let q_cells = grid.sample(|x| insolation.q.eval(x));
        Ok(Self {
            grid,
            insolation,
            coalbedo,
            emission,
            memory_response,
            kernel,
            q_cells,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn insolation(&self) -> &InsolationSpec {
        &self.insolation
    }

    pub fn coalbedo(&self) -> &CoalbedoSpec {
        &self.coalbedo
    }

    pub fn emission(&self) -> &EmissionSpec {
        &self.emission
    }

    pub fn memory_response(&self) -> &MemoryResponseSpec {
        &self.memory_response
    }

    pub fn kernel(&self) -> &MemoryKernel {
        &self.kernel
    }

    /// `q` sampled at the cell centers.
    pub fn q_cells(&self) -> &[f64] {
        &self.q_cells
    }

    pub fn with_q(&self, q: QProfile) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            InsolationSpec {
                q,
                r: self.insolation.r.clone(),
            },
            self.coalbedo,
            self.emission,
            self.memory_response,
            self.kernel.clone(),
        )
    }

    pub fn with_coalbedo(&self, coalbedo: CoalbedoSpec) -> Result<Self> {
        let mut p = self.clone();
        coalbedo.validate()?;
        p.coalbedo = coalbedo;
        Ok(p)
    }

    /// SHA-256 of the canonical JSON form of the parameters.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("parameters serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Right-hand side `r q beta(u) - R_e(u) + f(H)` at every cell.
    pub fn rhs(&self, t: f64, u: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; u.len()];
        self.rhs_into(t, u, h, &mut out)?;
        Ok(out)
    }

    pub(crate) fn rhs_into(&self, t: f64, u: &[f64], h: &[f64], out: &mut [f64]) -> Result<()> {
        if self.coalbedo.kind == CoalbedoKind::BudykoGraph {
            return Err(invalid("the Budyko graph is set-valued; use the budyko module"));
        }
        let n = self.grid.n();
        if u.len() != n || h.len() != n || out.len() != n {
            return Err(invalid("state, history and grid sizes disagree"));
        }
        let r = self.insolation.r.eval(t);
        for i in 0..n {
            let beta = match self.coalbedo.eval(u[i]) {
                CoalbedoValue::Point(b) => b,
                CoalbedoValue::Interval(..) => unreachable!(),
            };
            out[i] = r * self.q_cells[i] * beta - self.emission.eval(u[i]) + self.memory_response.eval(h[i]);
        }
        Ok(())
    }

    /// A-priori bound `M = max(u0_sup, ((||q|| ||r|| ||beta|| + ||f||) / eps1)^(1/4))`.
    pub fn linf_bound(&self, u0_sup: f64) -> Result<f64> {
        let eps1 = match self.emission {
            EmissionSpec::Sellers { epsilon } => epsilon.lower_bound(),
            EmissionSpec::Budyko { .. } => {
                return Err(Error::Unsupported(
                    "the sup-norm bound needs the Stefan-Boltzmann emission law".into(),
                ))
            }
        };
        let forcing = self.insolation.q_bound() * self.insolation.r_bound() * self.coalbedo.bound()
            + self.memory_response.f_bound.abs();
        let m1 = (forcing / eps1).powf(0.25);
        Ok(u0_sup.abs().max(m1))
    }
}

/// Free-function form of [`ModelParams::rhs`].
pub fn rhs(t: f64, u: &[f64], h: &[f64], params: &ModelParams) -> Result<Vec<f64>> {
    params.rhs(t, u, h)
}

/// Free-function form of [`ModelParams::linf_bound`].
pub fn linf_bound(params: &ModelParams, u0_sup: f64) -> Result<f64> {
    params.linf_bound(u0_sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::KernelShape;
    use approx::assert_relative_eq;

    fn budyko(kind: CoalbedoKind) -> CoalbedoSpec {
        CoalbedoSpec {
            kind,
            a_i: 0.38,
            a_f: 0.7,
            u_bar: -10.0,
            width: 10.0,
        }
    }

    fn params(q: QProfile, coalbedo: CoalbedoSpec, emission: EmissionSpec, f: MemoryResponseSpec) -> ModelParams {
        ModelParams::new(
            Grid::new(5, 1.0).unwrap(),
            InsolationSpec {
                q,
                r: Seasonal::Constant { value: 1.0 },
            },
            coalbedo,
            emission,
            f,
            MemoryKernel::new(1.0, 0.5, true, KernelShape::Constant { amplitude: 1.0 }).unwrap(),
        )
        .unwrap()
    }

    const GREY: EmissionSpec = EmissionSpec::Sellers {
        epsilon: Emissivity::Constant { eps1: 1.0 },
    };

    #[test]
    fn coalbedo_examples() {
        let g = budyko(CoalbedoKind::BudykoGraph);
        assert_eq!(g.eval(-11.0), CoalbedoValue::Point(0.38));
        assert_eq!(g.eval(-9.0), CoalbedoValue::Point(0.7));
        assert_eq!(g.eval(-10.0), CoalbedoValue::Interval(0.38, 0.7));
        let r = budyko(CoalbedoKind::BudykoRegularized { j: 10 });
        assert_eq!(r.eval(-10.0 + 0.2), CoalbedoValue::Point(0.7));
        assert_eq!(r.eval(-10.0 - 0.1), CoalbedoValue::Point(0.38));
        let s = budyko(CoalbedoKind::SellersSmooth);
        assert_relative_eq!(s.beta(-10.0).unwrap(), 0.5 * (0.38 + 0.7), epsilon = 1e-15);
        assert!(g.beta(-5.0).is_err());
    }

    #[test]
    fn regularized_is_monotone_and_converges() {
        for j in [1, 2, 4, 16, 256] {
            let r = budyko(CoalbedoKind::BudykoRegularized { j });
            let mut prev = f64::NEG_INFINITY;
            for k in 0..=4000 {
                let u = -12.0 + k as f64 * 1e-3;
                let v = r.beta(u).unwrap();
                assert!(v >= prev);
                assert!((0.38..=0.7).contains(&v));
                prev = v;
            }
        }
        let g = budyko(CoalbedoKind::BudykoGraph);
        for u in [-10.3, -10.01, -9.99, -9.5] {
            let j = (2.0 / (u + 10.0f64).abs()).ceil() as u32;
            let r = budyko(CoalbedoKind::BudykoRegularized { j });
            assert_eq!(CoalbedoValue::Point(r.beta(u).unwrap()), g.eval(u));
        }
    }

    #[test]
    fn sellers_derivative_matches_finite_difference() {
        let s = CoalbedoSpec {
            width: 3.0,
            ..budyko(CoalbedoKind::SellersSmooth)
        };
        let h = 1e-5;
        for k in 0..200 {
            let u = -15.0 + k as f64 * 0.05;
            let fd = (s.beta(u + h).unwrap() - s.beta(u - h).unwrap()) / (2.0 * h);
            assert!((fd - s.derivative(u)).abs() < 1e-6, "u = {u}");
        }
        let r = budyko(CoalbedoKind::BudykoRegularized { j: 4 });
        for k in 0..200 {
            let u = -10.6 + k as f64 * 0.006;
            let fd = (r.beta(u + h).unwrap() - r.beta(u - h).unwrap()) / (2.0 * h);
            assert!((fd - r.derivative(u)).abs() < 1e-5, "u = {u}");
        }
    }

    #[test]
    fn emission_examples() {
        assert_eq!(GREY.eval(2.0), 16.0);
        assert_eq!(GREY.eval(-2.0), -16.0);
        assert_eq!(EmissionSpec::Budyko { a: 1.0, b: 2.0 }.eval(3.0), 7.0);
        let logistic = Emissivity::Logistic {
            eps1: 0.5,
            eps2: 0.9,
            center: 0.0,
            width: 1.0,
        };
        assert_eq!(logistic.lower_bound(), 0.5);
        assert!(logistic.eval(-50.0) >= 0.5);
    }

    #[test]
    fn rhs_examples() {
        let zero_f = MemoryResponseSpec::zero();
        let p = params(
            QProfile::Constant { value: 0.0 },
            budyko(CoalbedoKind::SellersSmooth),
            GREY,
            zero_f,
        );
        assert_eq!(p.rhs(0.0, &[1.0; 5], &[0.0; 5]).unwrap(), vec![-1.0; 5]);

        let p = params(
            QProfile::Constant { value: 1.0 },
            budyko(CoalbedoKind::SellersSmooth),
            GREY,
            zero_f,
        );
        let u = 1.5;
        for v in p.rhs(0.3, &[u; 5], &[2.0; 5]).unwrap() {
            assert_relative_eq!(v, 0.7 - u.powi(4), epsilon = 1e-14);
        }

        let p = params(
            QProfile::Constant { value: 1.0 },
            budyko(CoalbedoKind::BudykoGraph),
            GREY,
            zero_f,
        );
        assert!(p.rhs(0.0, &[1.0; 5], &[0.0; 5]).is_err());
    }

    #[test]
    fn rhs_matches_term_by_term_loop() {
        let f = MemoryResponseSpec {
            f_bound: 0.8,
            h_scale: 2.0,
        };
        let spec = CoalbedoSpec {
            u_bar: 0.0,
            width: 1.5,
            ..budyko(CoalbedoKind::SellersSmooth)
        };
        let eps = Emissivity::Logistic {
            eps1: 0.6,
            eps2: 1.1,
            center: 0.2,
            width: 0.7,
        };
        let p = ModelParams::new(
            Grid::new(5, 1.0).unwrap(),
            InsolationSpec {
                q: QProfile::LegendreP2 { scale: 1.3 },
                r: Seasonal::Cosine {
                    mean: 1.0,
                    amplitude: 0.2,
                    period: 1.0,
                },
            },
            spec,
            EmissionSpec::Sellers { epsilon: eps },
            f,
            MemoryKernel::constant(1.0, 0.5, 1.0).unwrap(),
        )
        .unwrap();
        let u = [-1.2, -0.4, 0.1, 0.9, 1.4];
        let h = [0.3, -0.7, 1.9, 0.0, -2.2];
        let t = 0.37;
        let got = p.rhs(t, &u, &h).unwrap();
        let xs = [-0.8, -0.4, 0.0, 0.4, 0.8];
        for i in 0..5 {
            let x: f64 = xs[i];
            let q = 1.3 * (1.0 - 0.482 * (1.5 * x * x - 0.5));
            let r = 1.0 + 0.2 * (2.0 * std::f64::consts::PI * t).cos();
            let z = ((u[i] / 1.5) + 1.0) / 2.0;
            let z = z.clamp(0.0, 1.0);
            let beta = 0.38 + 0.32 * (10.0 * z.powi(3) - 15.0 * z.powi(4) + 6.0 * z.powi(5));
            let e = 0.6 + 0.5 / (1.0 + (-(u[i] - 0.2) / 0.7f64).exp());
            let emitted = e * u[i].abs().powi(3) * u[i];
            let fh = 0.8 * (h[i] / 2.0f64).tanh();
            assert_relative_eq!(
                got[i],
                r * q * beta - emitted + fh,
                max_relative = 1e-13,
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn linf_bound_examples() {
        let one = CoalbedoSpec {
            a_i: 0.5,
            a_f: 1.0,
            ..budyko(CoalbedoKind::SellersSmooth)
        };
        let p = params(QProfile::Constant { value: 1.0 }, one, GREY, MemoryResponseSpec::zero());
        assert_relative_eq!(p.linf_bound(0.0).unwrap(), 1.0);
        let f15 = MemoryResponseSpec {
            f_bound: 15.0,
            h_scale: 1.0,
        };
        let p = params(QProfile::Constant { value: 1.0 }, one, GREY, f15);
        assert_relative_eq!(p.linf_bound(0.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_eq!(p.linf_bound(10.0).unwrap(), 10.0);
        let p = params(
            QProfile::Constant { value: 1.0 },
            one,
            EmissionSpec::Budyko { a: 0.0, b: 1.0 },
            f15,
        );
        assert!(matches!(p.linf_bound(0.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn validation_errors() {
        let mut c = budyko(CoalbedoKind::SellersSmooth);
        c.a_f = c.a_i;
        assert!(c.validate().is_err());
        let bad_eps = EmissionSpec::Sellers {
            epsilon: Emissivity::Constant { eps1: 0.0 },
        };
        assert!(bad_eps.validate().is_err());
    }

    #[test]
    fn legendre_bound_and_table() {
        let q = QProfile::LegendreP2 { scale: 1.0 };
        assert_relative_eq!(q.eval(0.0), 1.241);
        assert_relative_eq!(q.eval(1.0), 0.518);
        assert_relative_eq!(q.bound(), 1.241);
        let t = QTable::from_csv_reader("x,q\n-1,0\n0,2\n1,1\n".as_bytes()).unwrap();
        assert_relative_eq!(t.eval(-0.5), 1.0);
        assert_relative_eq!(t.eval(0.5), 1.5);
        assert!(QTable::from_csv_reader("x,q\n-0.5,0\n1,1\n".as_bytes()).is_err());
    }
}
