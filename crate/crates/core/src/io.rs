//! Scenario files, trajectory files and the small CSV/JSON writers used by
//! the command line.
//!
//! CSV dialect: comma separated, `.` decimal, one header row, LF endings.
//! Floats are written in shortest round-trip form. Every file is written to
//! a temporary sibling first and renamed into place.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::budyko::BudykoOptions;
use crate::error::{validation, Error, Result};
use crate::grid::Grid;
use crate::inverse::{LeastSquaresOptions, ObservationSet, ObservationWindow, PiecewiseAnalytic, ReconstructionResult};
use crate::memory::{KernelShape, KernelTable, MemoryKernel};
use crate::physics::{
    CoalbedoKind, CoalbedoSpec, EmissionSpec, InsolationSpec, MemoryResponseSpec, ModelParams, QProfile, QTable,
    Seasonal,
};
use crate::stepper::{SimulationOptions, TimeScheme, Trajectory};

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Shortest string that parses back to the same `f64`.
fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

// ---------------------------------------------------------------------------
// Scenario configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "one")]
    pub rho0: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QConfig {
    Constant {
        value: f64,
    },
    LegendreP2 {
        scale: f64,
    },
    /// CSV with header `x,q`, relative to the scenario file.
    Table {
        path: PathBuf,
    },
    Piecewise {
        breakpoints: Vec<f64>,
        coefficients: Vec<Vec<f64>>,
    },
    Cells {
        values: Vec<f64>,
    },
}

fn default_r() -> Seasonal {
    Seasonal::Constant { value: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsolationConfig {
    pub q: QConfig,
    #[serde(default = "default_r")]
    pub r: Seasonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoalbedoKindName {
    SellersSmooth,
    BudykoGraph,
    BudykoRegularized,
}

fn default_u_bar() -> f64 {
    CoalbedoSpec::DEFAULT_U_BAR
}

fn default_width() -> f64 {
    CoalbedoSpec::DEFAULT_WIDTH
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoalbedoConfig {
    pub kind: CoalbedoKindName,
    /// Regularization index, `budyko_regularized` only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<u32>,
    pub a_i: f64,
    pub a_f: f64,
    #[serde(default = "default_u_bar")]
    pub u_bar: f64,
    #[serde(default = "default_width")]
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelShapeConfig {
    Constant {
        amplitude: f64,
    },
    Hat {
        amplitude: f64,
    },
    CosineTaper {
        amplitude: f64,
    },
    /// CSV with header `s,x,k`, relative to the scenario file.
    Table {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub tau: f64,
    pub delta: f64,
    /// Defaults to `delta > 0`.
    #[serde(default)]
    pub support_flag: Option<bool>,
    pub shape: KernelShapeConfig,
}

/// Closed-form initial history `u0(s, x)`, `s` in `[-tau, 0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    Constant {
        value: f64,
    },
    /// `sum_k coefficients[k] x^k + time_slope * s`.
    Polynomial {
        coefficients: Vec<f64>,
        #[serde(default)]
        time_slope: f64,
    },
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Constant { value: 0.0 }
    }
}

impl InitialCondition {
    pub fn eval(&self, s: f64, x: f64) -> f64 {
        match self {
            InitialCondition::Constant { value } => *value,
            InitialCondition::Polynomial {
                coefficients,
                time_slope,
            } => coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c) + time_slope * s,
        }
    }
}

fn default_dt() -> f64 {
    1e-3
}

fn default_stride() -> usize {
    1
}

fn default_slack() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub t_end: f64,
    #[serde(default = "default_dt")]
    pub target_dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub scheme: TimeScheme,
    #[serde(default = "default_slack")]
    pub bound_slack: f64,
}

fn default_window() -> ObservationWindow {
    ObservationWindow {
        t0: 0.05,
        t_prime: 0.2,
        t_end: 0.4,
        a: -0.5,
        b: 0.5,
    }
}

fn default_q_perturbation() -> PiecewiseAnalytic {
    PiecewiseAnalytic::bump(0.2, 0.6, 0.1).expect("valid bump")
}

fn default_stability_shape() -> PiecewiseAnalytic {
    PiecewiseAnalytic::bump(0.3, 0.9, 1.0).expect("valid bump")
}

fn default_sweep() -> Vec<f64> {
    vec![1e-3, 1e-2, 1e-1]
}

fn default_noise() -> Vec<f64> {
    vec![0.0]
}

fn default_t_eval() -> f64 {
    0.1
}

/// Settings of the reconstruction experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseConfig {
    #[serde(default = "default_t_eval")]
    pub t_eval: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_window")]
    pub window: ObservationWindow,
    /// `q~ - q` in the uniqueness experiment.
    #[serde(default = "default_q_perturbation")]
    pub q_perturbation: PiecewiseAnalytic,
    /// Unit-amplitude shape scaled by each entry of `stability_sweep`.
    #[serde(default = "default_stability_shape")]
    pub stability_shape: PiecewiseAnalytic,
    #[serde(default = "default_sweep")]
    pub stability_sweep: Vec<f64>,
    #[serde(default = "default_noise")]
    pub noise: Vec<f64>,
    #[serde(default)]
    pub reg_weight: f64,
    #[serde(default)]
    pub leastsq: LeastSquaresOptions,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            t_eval: default_t_eval(),
            x0: 0.0,
            window: default_window(),
            q_perturbation: default_q_perturbation(),
            stability_shape: default_stability_shape(),
            stability_sweep: default_sweep(),
            noise: default_noise(),
            reg_weight: 0.0,
            leastsq: LeastSquaresOptions::default(),
        }
    }
}

fn default_memory_response() -> MemoryResponseSpec {
    MemoryResponseSpec::zero()
}

/// Declarative scenario document; see `schema/scenario.schema.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub grid: GridConfig,
    pub insolation: InsolationConfig,
    pub coalbedo: CoalbedoConfig,
    pub emission: EmissionSpec,
    #[serde(default = "default_memory_response")]
    pub memory_response: MemoryResponseSpec,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub initial: InitialCondition,
    pub run: RunConfig,
    #[serde(default)]
    pub budyko: BudykoOptions,
    #[serde(default)]
    pub inverse: InverseConfig,
}

/// A validated scenario with its model parameters built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub params: ModelParams,
}

impl Scenario {
    /// Builds and validates the model from a configuration; relative table
    /// paths are resolved against `base_dir`.
    pub fn from_config(config: ScenarioConfig, base_dir: &Path) -> Result<Self> {
        let params = build_params(&config, base_dir)?;
        Ok(Self { config, params })
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn u0(&self) -> impl Fn(f64, f64) -> f64 + Sync + Copy + '_ {
        let init = &self.config.initial;
        move |s, x| init.eval(s, x)
    }

    pub fn t_end(&self) -> f64 {
        self.config.run.t_end
    }

    pub fn simulation_options(&self) -> SimulationOptions {
        let r = &self.config.run;
        SimulationOptions {
            target_dt: r.target_dt,
            stride: r.stride,
            bound_slack: r.bound_slack,
            scheme: r.scheme,
            record_memory: false,
        }
    }

    /// The configuration with every default filled in, as pretty JSON.
    pub fn echo(&self) -> String {
        serde_json::to_string_pretty(&self.config).expect("scenario serializes")
    }
}

fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

fn build_params(c: &ScenarioConfig, base_dir: &Path) -> Result<ModelParams> {
    if !(c.run.t_end > 0.0 && c.run.t_end.is_finite()) {
        return Err(validation("run.t_end", "t_end must be positive"));
    }
    if !(c.run.target_dt > 0.0) {
        return Err(validation("run.target_dt", "target_dt must be positive"));
    }
    if c.run.stride == 0 {
        return Err(validation("run.stride", "stride must be >= 1"));
    }
    let grid = Grid::new(c.grid.n, c.grid.rho0).map_err(|e| validation("grid", e.to_string()))?;

    let q = match &c.insolation.q {
        QConfig::Constant { value } => QProfile::Constant { value: *value },
        QConfig::LegendreP2 { scale } => QProfile::LegendreP2 { scale: *scale },
        QConfig::Table { path } => {
            let full = resolve(base_dir, path);
            let table = QTable::from_csv_path(&full)
                .map_err(|e| validation("insolation.q.path", format!("{}: {e}", full.display())))?;
            QProfile::Table(table)
        }
        QConfig::Piecewise {
            breakpoints,
            coefficients,
        } => QProfile::Piecewise(
            PiecewiseAnalytic::new(breakpoints.clone(), coefficients.clone())
                .map_err(|e| validation("insolation.q", e.to_string()))?,
        ),
        QConfig::Cells { values } => QProfile::Cells { values: values.clone() },
    };

    let cb = &c.coalbedo;
    let kind = match (cb.kind, cb.j) {
        (CoalbedoKindName::SellersSmooth, None) => CoalbedoKind::SellersSmooth,
        (CoalbedoKindName::BudykoGraph, None) => CoalbedoKind::BudykoGraph,
        (CoalbedoKindName::BudykoRegularized, Some(j)) => CoalbedoKind::BudykoRegularized { j },
        (CoalbedoKindName::BudykoRegularized, None) => {
            return Err(validation("coalbedo.j", "budyko_regularized needs j"))
        }
        (_, Some(_)) => return Err(validation("coalbedo.j", "j applies to budyko_regularized only")),
    };
    let coalbedo = CoalbedoSpec {
        kind,
        a_i: cb.a_i,
        a_f: cb.a_f,
        u_bar: cb.u_bar,
        width: cb.width,
    };

    let k = &c.kernel;
    if !(k.delta < k.tau) {
        return Err(validation(
            "kernel.delta",
            format!("delta < tau is required (delta = {}, tau = {})", k.delta, k.tau),
        ));
    }
    let shape = match &k.shape {
        KernelShapeConfig::Constant { amplitude } => KernelShape::Constant { amplitude: *amplitude },
        KernelShapeConfig::Hat { amplitude } => KernelShape::Hat { amplitude: *amplitude },
        KernelShapeConfig::CosineTaper { amplitude } => KernelShape::CosineTaper { amplitude: *amplitude },
        KernelShapeConfig::Table { path } => {
            let full = resolve(base_dir, path);
            let table = KernelTable::from_csv_path(&full)
                .map_err(|e| validation("kernel.shape.path", format!("{}: {e}", full.display())))?;
            KernelShape::Table(table)
        }
    };
    let kernel = MemoryKernel::new(k.tau, k.delta, k.support_flag.unwrap_or(k.delta > 0.0), shape)?;

    ModelParams::new(
        grid,
        InsolationSpec {
            q,
            r: c.insolation.r.clone(),
        },
        coalbedo,
        c.emission,
        c.memory_response,
        kernel,
    )
}

/// Parses and validates a scenario document. Schema errors carry the JSON
/// path of the offending field.
pub fn parse_scenario(text: &str, base_dir: &Path) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        validation(
            if path.is_empty() { ".".to_string() } else { path },
            e.into_inner().to_string(),
        )
    })?;
    Scenario::from_config(config, base_dir)
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_scenario(&text, base)
}

// ---------------------------------------------------------------------------
// Atomic writers

/// Writes `bytes` to a temporary file next to `path`, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// One cell of a tidy CSV row.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        if row.len() != header.len() {
            return Err(crate::error::invalid("row length does not match the header"));
        }
        w.write_record(row.iter().map(Cell::render)).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<Cell>>) -> Result<()> {
    write_atomic(path, &csv_bytes(header, rows)?)
}

// ---------------------------------------------------------------------------
// Trajectories

const TRAJECTORY_FORMAT: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectorySidecar {
    format: u32,
    params_digest: String,
    dt: f64,
    stride: usize,
    n: usize,
    rho0: f64,
    sup_norm_seen: f64,
    rows: usize,
    data_sha256: String,
    history_0: Vec<Vec<f64>>,
    final_history: Vec<Vec<f64>>,
    memory_terms: Vec<Vec<f64>>,
}

/// Sidecar path of a trajectory CSV: same stem, `.json` extension.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `t,x,u` rows plus a JSON sidecar holding the metadata, the
/// histories and the SHA-256 of the CSV bytes.
pub fn write_trajectory(traj: &Trajectory, csv_path: &Path) -> Result<()> {
    let centers = traj.grid.centers();
    let rows = traj.times.iter().zip(&traj.states).flat_map(|(&t, u)| {
        centers
            .iter()
            .zip(u)
            .map(move |(&x, &v)| vec![Cell::Num(t), Cell::Num(x), Cell::Num(v)])
    });
    let bytes = csv_bytes(&["t", "x", "u"], rows)?;
    let sidecar = TrajectorySidecar {
        format: TRAJECTORY_FORMAT,
        params_digest: traj.params_digest.clone(),
        dt: traj.dt,
        stride: traj.stride,
        n: traj.grid.n(),
        rho0: traj.grid.rho0(),
        sup_norm_seen: traj.sup_norm_seen,
        rows: traj.states.len() * traj.grid.n(),
        data_sha256: hex::encode(Sha256::digest(&bytes)),
        history_0: traj.history_0.clone(),
        final_history: traj.final_history.clone(),
        memory_terms: traj.memory_terms.clone(),
    };
    write_atomic(csv_path, &bytes)?;
    write_json(&sidecar_path(csv_path), &sidecar)
}

/// Reads a trajectory written by [`write_trajectory`].
///
/// Malformed or short CSV data gives a parse error with the line number; a
/// CSV that parses but does not match the sidecar digest gives an integrity
/// error.
pub fn read_trajectory(csv_path: &Path) -> Result<Trajectory> {
    let side_text = fs::read_to_string(sidecar_path(csv_path))?;
    let side: TrajectorySidecar = serde_json::from_str(&side_text)?;
    if side.format != TRAJECTORY_FORMAT {
        return Err(Error::Integrity(format!("unknown trajectory format {}", side.format)));
    }
    let grid = Grid::new(side.n, side.rho0)?;
    let n = side.n;
    let bytes = fs::read(csv_path)?;

    let mut rdr = csv::ReaderBuilder::new().from_reader(bytes.as_slice());
    let header: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_owned).collect();
    if header != ["t", "x", "u"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header t,x,u, found {}", header.join(",")),
        });
    }
    let mut times = Vec::new();
    let mut states: Vec<Vec<f64>> = Vec::new();
    let mut count = 0usize;
    let mut last_line = 1u64;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        last_line = line;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("missing column {}", i + 1),
                })?
                .parse::<f64>()
                .map_err(|e| Error::Parse {
                    line,
                    message: format!("column {}: {e}", i + 1),
                })
        };
        let (t, x, u) = (field(0)?, field(1)?, field(2)?);
        let (k, i) = (count / n, count % n);
        if x != grid.centers()[i] {
            return Err(Error::Parse {
                line,
                message: format!("expected cell center {} , found {x}", grid.centers()[i]),
            });
        }
        if i == 0 {
            times.push(t);
            states.push(Vec::with_capacity(n));
        } else if t != times[k] {
            return Err(Error::Parse {
                line,
                message: format!("time {t} inside the block of t = {}", times[k]),
            });
        }
        states[k].push(u);
        count += 1;
    }
    if count != side.rows {
        return Err(Error::Parse {
            line: last_line + 1,
            message: format!("file ends after {count} of {} data rows", side.rows),
        });
    }
    if hex::encode(Sha256::digest(&bytes)) != side.data_sha256 {
        return Err(Error::Integrity("CSV data does not match the sidecar digest".into()));
    }
    Ok(Trajectory {
        times,
        states,
        history_0: side.history_0,
        final_history: side.final_history,
        memory_terms: side.memory_terms,
        params_digest: side.params_digest,
        dt: side.dt,
        stride: side.stride,
        grid,
        sup_norm_seen: side.sup_norm_seen,
    })
}

// ---------------------------------------------------------------------------
// Observations and reconstructions

#[derive(Serialize)]
struct ObservationDescriptor<'a> {
    kind: &'a crate::inverse::ObservationKind,
    noise_level: f64,
    seed: Option<u64>,
    samples: usize,
}

/// `t,x,value,derivative` rows plus a JSON descriptor next to them.
pub fn write_observations(obs: &ObservationSet, grid: &Grid, csv_path: &Path) -> Result<()> {
    let centers = grid.centers();
    let mut rows = Vec::new();
    for (k, &t) in obs.times.iter().enumerate() {
        for (c, &cell) in obs.cells.iter().enumerate() {
            let d = obs.derivative.get(k).and_then(|d| d.get(c)).copied();
            rows.push(vec![
                Cell::Num(t),
                Cell::Num(centers[cell]),
                Cell::Num(obs.values[k][c]),
                d.into(),
            ]);
        }
    }
    let n = rows.len();
    write_csv(csv_path, &["t", "x", "value", "derivative"], rows)?;
    write_json(
        &sidecar_path(csv_path),
        &ObservationDescriptor {
            kind: &obs.kind,
            noise_level: obs.noise_level,
            seed: obs.seed,
            samples: n,
        },
    )
}

/// `x,q_true,q_hat` rows plus the metrics as JSON next to them.
pub fn write_reconstruction(result: &ReconstructionResult, csv_path: &Path) -> Result<()> {
    let rows = result.x.iter().enumerate().map(|(i, &x)| {
        vec![
            Cell::Num(x),
            result.q_true.as_ref().map(|q| q[i]).into(),
            Cell::Num(result.q_hat[i]),
        ]
    });
    write_csv(csv_path, &["x", "q_true", "q_hat"], rows)?;
    write_json(&sidecar_path(csv_path), result)
}
