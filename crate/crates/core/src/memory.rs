//! Delay history storage and the memory integral
//! `H(t, x) = int_{-tau}^{0} k(s, x) u(t + s, x) ds`.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize, Serializer};

use crate::error::{invalid, validation, Error, Result};
use crate::grid::Grid;

/// Closed-form or tabulated kernel profile.
///
/// Built-in shapes are defined on the support interval `[-tau, -delta]`
/// (or `[-tau, 0]` without the dead zone) through the normalized coordinate
/// `xi = (s + tau) / (support length)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum KernelShape {
    Constant {
        amplitude: f64,
    },
    /// Piecewise-linear hat peaking at the middle of the support.
    Hat {
        amplitude: f64,
    },
    /// `amplitude (1 - cos 2 pi xi) / 2`, C^1 with zero value and slope at both ends.
    CosineTaper {
        amplitude: f64,
    },
    Table(KernelTable),
    #[serde(skip_deserializing)]
    Custom(CustomKernel),
}

/// User-supplied kernel `k(s, x)` with an optional `dk/ds`.
#[derive(Clone)]
pub struct CustomKernel {
    pub label: String,
    pub k: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    pub dk_ds: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
}

impl CustomKernel {
    pub fn new(label: impl Into<String>, k: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            k: Arc::new(k),
            dk_ds: None,
        }
    }

    pub fn with_derivative(mut self, dk_ds: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.dk_ds = Some(Arc::new(dk_ds));
        self
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel").field("label", &self.label).finish()
    }
}

impl Serialize for CustomKernel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = serializer.serialize_struct("CustomKernel", 1)?;
        st.serialize_field("label", &self.label)?;
        st.end()
    }
}

/// Kernel values on a rectangular `(s, x)` lattice, bilinearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    s_nodes: Vec<f64>,
    x_nodes: Vec<f64>,
    /// Row-major, `values[is * x_nodes.len() + ix]`.
    values: Vec<f64>,
}

impl KernelTable {
    pub fn new(s_nodes: Vec<f64>, x_nodes: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let strictly_increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if s_nodes.len() < 2 || x_nodes.len() < 2 {
            return Err(validation("kernel_table", "need at least two s and two x nodes"));
        }
        if !strictly_increasing(&s_nodes) || !strictly_increasing(&x_nodes) {
            return Err(validation("kernel_table", "lattice nodes must be strictly increasing"));
        }
        if values.len() != s_nodes.len() * x_nodes.len() {
            return Err(validation("kernel_table", "value count does not match the lattice"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(validation("kernel_table", "kernel values must be finite"));
        }
        Ok(Self {
            s_nodes,
            x_nodes,
            values,
        })
    }

    /// Reads a CSV with header `s,x,k`. Every `(s, x)` pair of the lattice
    /// must appear exactly once.
    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(crate::io::csv_error)?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        if cols != ["s", "x", "k"] {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header s,x,k, found {}", cols.join(",")),
            });
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(crate::io::csv_error)?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("column {}: {e}", i + 1),
                })
            };
            rows.push((parse(0)?, parse(1)?, parse(2)?));
        }
        let mut s_nodes: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let mut x_nodes: Vec<f64> = rows.iter().map(|r| r.1).collect();
        for v in [&mut s_nodes, &mut x_nodes] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        let nx = x_nodes.len();
        let mut values = vec![f64::NAN; s_nodes.len() * nx];
        for (s, x, k) in rows {
            let is = s_nodes.binary_search_by(|p| p.total_cmp(&s)).unwrap();
            let ix = x_nodes.binary_search_by(|p| p.total_cmp(&x)).unwrap();
            let slot = &mut values[is * nx + ix];
            if !slot.is_nan() {
                return Err(validation(
                    "kernel_table",
                    format!("duplicate lattice point ({s}, {x})"),
                ));
            }
            *slot = k;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(validation("kernel_table", "lattice is incomplete"));
        }
        Self::new(s_nodes, x_nodes, values)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file)
    }

    fn locate(nodes: &[f64], v: f64) -> (usize, f64) {
        let last = nodes.len() - 2;
        let i = match nodes.binary_search_by(|p| p.total_cmp(&v)) {
            Ok(i) => i.min(last),
            Err(i) => i.saturating_sub(1).min(last),
        };
        let w = ((v - nodes[i]) / (nodes[i + 1] - nodes[i])).clamp(0.0, 1.0);
        (i, w)
    }

    fn at(&self, is: usize, ix: usize) -> f64 {
        self.values[is * self.x_nodes.len() + ix]
    }

    pub fn value(&self, s: f64, x: f64) -> f64 {
        let (is, ws) = Self::locate(&self.s_nodes, s);
        let (ix, wx) = Self::locate(&self.x_nodes, x);
        let lo = self.at(is, ix) * (1.0 - wx) + self.at(is, ix + 1) * wx;
        let hi = self.at(is + 1, ix) * (1.0 - wx) + self.at(is + 1, ix + 1) * wx;
        lo * (1.0 - ws) + hi * ws
    }

    /// Slope in `s` of the bilinear interpolant.
    pub fn ds(&self, s: f64, x: f64) -> f64 {
        let (is, _) = Self::locate(&self.s_nodes, s);
        let (ix, wx) = Self::locate(&self.x_nodes, x);
        let lo = self.at(is, ix) * (1.0 - wx) + self.at(is, ix + 1) * wx;
        let hi = self.at(is + 1, ix) * (1.0 - wx) + self.at(is + 1, ix + 1) * wx;
        (hi - lo) / (self.s_nodes[is + 1] - self.s_nodes[is])
    }

    fn covers(&self, tau: f64) -> bool {
        let eps = 1e-12;
        self.s_nodes[0] <= -tau + eps
            && *self.s_nodes.last().unwrap() >= -eps
            && self.x_nodes[0] <= -1.0 + eps
            && *self.x_nodes.last().unwrap() >= 1.0 - eps
    }
}

/// Memory kernel `k(s, x)` on `[-tau, 0] x [-1, 1]`.
#[derive(Debug, Clone, Serialize)]
pub struct MemoryKernel {
    tau: f64,
    delta: f64,
    /// When set, `k(s, .) = 0` for every `s` in `[-delta, 0]`.
    support_flag: bool,
    shape: KernelShape,
}

impl MemoryKernel {
    pub fn new(tau: f64, delta: f64, support_flag: bool, shape: KernelShape) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(validation("kernel.tau", format!("tau must be positive, got {tau}")));
        }
        if !(0.0..tau).contains(&delta) {
            return Err(validation(
                "kernel.delta",
                format!("need 0 <= delta < tau (delta = {delta}, tau = {tau})"),
            ));
        }
        if let KernelShape::Table(table) = &shape {
            if !table.covers(tau) {
                return Err(validation("kernel_table", "lattice must cover [-tau, 0] x [-1, 1]"));
            }
            if support_flag {
                for (is, &s) in table.s_nodes.iter().enumerate() {
                    if s >= -delta - 1e-12 {
                        for ix in 0..table.x_nodes.len() {
                            if table.at(is, ix) != 0.0 {
                                return Err(validation(
                                    "kernel_table",
                                    format!("k must vanish on [-delta, 0], found k({s}, {}) != 0", table.x_nodes[ix]),
                                ));
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            tau,
            delta,
            support_flag,
            shape,
        })
    }

    pub fn constant(tau: f64, delta: f64, amplitude: f64) -> Result<Self> {
        Self::new(tau, delta, delta > 0.0, KernelShape::Constant { amplitude })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn support_flag(&self) -> bool {
        self.support_flag
    }

    pub fn shape(&self) -> &KernelShape {
        &self.shape
    }

    fn support_end(&self) -> f64 {
        if self.support_flag {
            -self.delta
        } else {
            0.0
        }
    }

    /// Kernel profile before the dead-zone mask is applied. At `s = -delta`
    /// this is the limit from inside the support.
    pub fn support_value(&self, s: f64, x: f64) -> f64 {
        let lo = -self.tau;
        let len = self.support_end() - lo;
        let xi = (s - lo) / len;
        match &self.shape {
            KernelShape::Constant { amplitude } => *amplitude,
            KernelShape::Hat { amplitude } => amplitude * (1.0 - (2.0 * xi - 1.0).abs()).max(0.0),
            KernelShape::CosineTaper { amplitude } => amplitude * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * xi).cos()),
            KernelShape::Table(t) => t.value(s, x),
            KernelShape::Custom(c) => (c.k)(s, x),
        }
    }

    /// `dk/ds` on the support.
    pub fn support_ds(&self, s: f64, x: f64) -> f64 {
        let lo = -self.tau;
        let len = self.support_end() - lo;
        let xi = (s - lo) / len;
        match &self.shape {
            KernelShape::Constant { .. } => 0.0,
            KernelShape::Hat { amplitude } => {
                if xi < 0.5 {
                    2.0 * amplitude / len
                } else {
                    -2.0 * amplitude / len
                }
            }
            KernelShape::CosineTaper { amplitude } => {
                let w = 2.0 * std::f64::consts::PI;
                amplitude * 0.5 * w * (w * xi).sin() / len
            }
            KernelShape::Table(t) => t.ds(s, x),
            KernelShape::Custom(c) => match &c.dk_ds {
                Some(d) => d(s, x),
                None => {
                    let h = 1e-6 * self.tau;
                    ((c.k)(s + h, x) - (c.k)(s - h, x)) / (2.0 * h)
                }
            },
        }
    }

    /// `k(s, x)`; exactly zero in the dead zone `[-delta, 0]` when the
    /// support flag is set and outside `[-tau, 0]`.
    pub fn value(&self, s: f64, x: f64) -> f64 {
        if s < -self.tau || s > 0.0 || (self.support_flag && s >= -self.delta) {
            return 0.0;
        }
        self.support_value(s, x)
    }
}

/// Ring buffer of the last `m + 1` states, `m = tau / dt`, spanning
/// `[head_time - tau, head_time]`.
///
/// Times are tracked as integer step indices so repeated pushes do not
/// accumulate rounding in `head_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    dt: f64,
    m: usize,
    head_step: i64,
    slots: VecDeque<Vec<f64>>,
}

/// Returns `round(a / b)` when `a / b` is an integer up to rounding.
pub(crate) fn integer_ratio(a: f64, b: f64) -> Option<usize> {
    let r = a / b;
    let k = r.round();
    if k >= 0.0 && (r - k).abs() <= 1e-9 * k.max(1.0) {
        Some(k as usize)
    } else {
        None
    }
}

impl HistoryBuffer {
    /// Empty buffer; the first pushed state fixes the time origin.
    pub fn empty(dt: f64, tau: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        let m = integer_ratio(tau, dt)
            .filter(|&m| m > 0)
            .ok_or_else(|| invalid(format!("tau / dt must be a positive integer (tau = {tau}, dt = {dt})")))?;
        Ok(Self {
            dt,
            m,
            head_step: 0,
            slots: VecDeque::with_capacity(m + 1),
        })
    }

    /// Fills the buffer with `u0(s, x)` sampled at the slot times
    /// `-tau + j dt` and the cell centers; `head_time = 0`.
    pub fn init(u0: impl Fn(f64, f64) -> f64, grid: &Grid, dt: f64, tau: f64) -> Result<Self> {
        let mut buf = Self::empty(dt, tau)?;
        let m = buf.m as i64;
        for step in -m..=0 {
            let s = step as f64 * dt;
            buf.slots.push_back(grid.sample(|x| u0(s, x)));
        }
        buf.head_step = 0;
        Ok(buf)
    }

    /// Appends the state at `t = head_time + dt`, evicting the oldest slot.
    pub fn push_state(&mut self, u: Vec<f64>, t: f64) -> Result<()> {
        let step = (t / self.dt).round() as i64;
        if !self.slots.is_empty() {
            let expected = self.head_step + 1;
            let t_expected = expected as f64 * self.dt;
            if step != expected || (t - t_expected).abs() > 1e-6 * self.dt {
                return Err(invalid(format!(
                    "non-contiguous push: expected t = {t_expected}, got {t}"
                )));
            }
            if u.len() != self.slots[0].len() {
                return Err(invalid("state length does not match the buffer"));
            }
        }
        if self.slots.len() == self.m + 1 {
            self.slots.pop_front();
        }
        self.slots.push_back(u);
        self.head_step = step;
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn tau(&self) -> f64 {
        self.m as f64 * self.dt
    }

    /// Number of intervals `m = tau / dt`; a full buffer holds `m + 1` slots.
    pub fn intervals(&self) -> usize {
        self.m
    }

    pub fn head_step(&self) -> i64 {
        self.head_step
    }

    pub fn head_time(&self) -> f64 {
        self.head_step as f64 * self.dt
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() == self.m + 1
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Slot `j`, oldest first; in a full buffer slot `j` holds time
    /// `head_time - tau + j dt`.
    pub fn slot(&self, j: usize) -> &[f64] {
        &self.slots[j]
    }

    pub fn slot_mut(&mut self, j: usize) -> &mut Vec<f64> {
        &mut self.slots[j]
    }

    pub fn slot_time(&self, j: usize) -> f64 {
        (self.head_step - (self.slots.len() as i64 - 1) + j as i64) as f64 * self.dt
    }

    pub fn newest(&self) -> &[f64] {
        self.slots.back().expect("history buffer is empty")
    }

    pub fn slots(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.slots.iter()
    }

    pub(crate) fn from_parts(dt: f64, m: usize, head_step: i64, slots: Vec<Vec<f64>>) -> Self {
        Self {
            dt,
            m,
            head_step,
            slots: slots.into(),
        }
    }
}

/// Precomputed trapezoid weights `w_j k(s_j, x_i)` for a kernel, grid and step.
///
/// Slots whose weight is exactly zero in every cell are skipped, which
/// makes the result independent of the dead-zone slots bit for bit.
#[derive(Debug, Clone)]
pub struct HistoryQuadrature {
    m: usize,
    /// `(slot index, weights over cells)`.
    rows: Vec<(usize, Vec<f64>)>,
}

impl HistoryQuadrature {
    pub fn new(kernel: &MemoryKernel, grid: &Grid, dt: f64) -> Result<Self> {
        let m = integer_ratio(kernel.tau(), dt)
            .filter(|&m| m > 0)
            .ok_or_else(|| invalid("tau / dt must be a positive integer"))?;
        let mut rows = Vec::new();
        for j in 0..=m {
            let s = -kernel.tau() + j as f64 * dt;
            let w = if j == 0 || j == m { 0.5 * dt } else { dt };
            let row: Vec<f64> = grid.centers().iter().map(|&x| w * kernel.value(s, x)).collect();
            if row.iter().any(|&v| v != 0.0) {
                rows.push((j, row));
            }
        }
        Ok(Self { m, rows })
    }

    pub fn eval(&self, buf: &HistoryBuffer) -> Result<Vec<f64>> {
        if !buf.is_full() {
            return Err(Error::InvalidState(format!(
                "history buffer holds {} of {} slots",
                buf.len(),
                buf.intervals() + 1
            )));
        }
        if buf.intervals() != self.m {
            return Err(invalid("buffer and quadrature disagree on tau / dt"));
        }
        let n = buf.newest().len();
        let mut h = vec![0.0; n];
        for (j, row) in &self.rows {
            let u = buf.slot(*j);
            for i in 0..n {
                let term = row[i] * u[i];
                if row[i] != 0.0 {
                    h[i] += term;
                }
            }
        }
        Ok(h)
    }
}

/// Trapezoid approximation of `H` at the buffer's head time.
pub fn eval_history(buf: &HistoryBuffer, kernel: &MemoryKernel, grid: &Grid) -> Result<Vec<f64>> {
    HistoryQuadrature::new(kernel, grid, buf.dt())?.eval(buf)
}

/// `H_t` while the memory term is frozen to the initial history
/// (`support_flag` set and `head_time < delta`):
///
/// `H_t = k(-delta^-, x) u(t - delta) - k(-tau, x) u(t - tau) - int_{-tau}^{-delta} k_s(s, x) u(t + s) ds`
///
/// where `k(-delta^-, .)` is the kernel value at the inner edge of the support.
pub fn history_time_derivative(buf: &HistoryBuffer, kernel: &MemoryKernel, grid: &Grid) -> Result<Vec<f64>> {
    if !kernel.support_flag() {
        return Err(Error::InvalidState("kernel has no dead zone".into()));
    }
    if buf.head_time() >= kernel.delta() - 1e-12 * kernel.tau() {
        return Err(Error::InvalidState(format!(
            "head_time {} is not below delta {}",
            buf.head_time(),
            kernel.delta()
        )));
    }
    if !buf.is_full() {
        return Err(Error::InvalidState("history buffer is not full".into()));
    }
    let dt = buf.dt();
    let m_delta = integer_ratio(kernel.delta(), dt).ok_or_else(|| invalid("delta / dt must be an integer"))?;
    let m = buf.intervals();
    let last = m - m_delta;
    let tau = kernel.tau();
    let centers = grid.centers();
    let mut out = Vec::with_capacity(centers.len());
    for (i, &x) in centers.iter().enumerate() {
        let inner = kernel.support_value(-kernel.delta(), x) * buf.slot(last)[i];
        let outer = kernel.support_value(-tau, x) * buf.slot(0)[i];
        let mut integral = 0.0;
        for j in 0..=last {
            let s = -tau + j as f64 * dt;
            let w = if j == 0 || j == last { 0.5 * dt } else { dt };
            integral += w * kernel.support_ds(s, x) * buf.slot(j)[i];
        }
        out.push(inner - outer - integral);
    }
    Ok(out)
}
