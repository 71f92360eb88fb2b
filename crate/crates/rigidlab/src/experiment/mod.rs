//! Configuration-driven experiment runner: parses JSON configs, executes
//! the named experiment, and writes CSV data plus a JSON summary with
//! per-assertion pass/fail. Outputs are deterministic given (config, seed)
//! and written atomically (temp file + rename).

use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog;
use crate::flow::{integrate_flow_raw, IntegratorConfig};
use crate::gfqi::Gfqi;
use crate::hamlang::{Dims, Expression, Smoothness};
use crate::minmax::{
    build_filtration, compute_persistence, diagram_csv, gamma_distance, gamma_invariant,
    minmax_value, property_checks, ClassChoice,
};
use crate::phase::{
    bracket_from_gradients, poisson_bracket, symplecticity_defect, DiffeoSample, Domain,
    PhasePoint, ScalarField,
};
use crate::rigidity::{limit_rigidity_experiment, RigidityMap};
use crate::weakbracket::{c0_commute_defect, weak_hamiltonian_field, SamplingSchedule};

/// Runner failures, partitioned by exit code: config errors exit 2,
/// assertion failures exit 1, runtime errors exit 3.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn config_err(msg: impl std::fmt::Display) -> RunError {
    RunError::Config(msg.to_string())
}

fn runtime_err(msg: impl std::fmt::Display) -> RunError {
    RunError::Runtime(msg.to_string())
}

/// Seventeen significant digits; the fixed float format of every report.
pub fn fmt17(v: f64) -> String {
    format!("{:.16e}", v)
}

/// One checked assertion in a summary.
#[derive(Debug, Clone, Serialize)]
pub struct AssertionLine {
    pub name: String,
    pub pass: bool,
    /// Measured value, 17 significant digits.
    pub value: String,
    /// Tolerance or bound it was compared against.
    pub bound: String,
}

impl AssertionLine {
    fn le(name: &str, value: f64, bound: f64) -> AssertionLine {
        AssertionLine {
            name: name.to_string(),
            pass: value <= bound,
            value: fmt17(value),
            bound: fmt17(bound),
        }
    }

    fn flag(name: &str, pass: bool) -> AssertionLine {
        AssertionLine {
            name: name.to_string(),
            pass,
            value: if pass { "1".into() } else { "0".into() },
            bound: "1".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub assertions: Vec<AssertionLine>,
    pub outputs: Vec<String>,
    pub pass: bool,
}

/// Report handed back to the CLI; `pass` decides exit code 0 vs 1.
#[derive(Debug)]
pub struct RunReport {
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Atomic write: same-directory temp file, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

/// A Hamiltonian given by catalog name or inline expression.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    /// Degrees of freedom; required with `expression`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Promote a Lipschitz-parsed expression to the C^{1,1} class.
    #[serde(default)]
    pub c11: bool,
}

impl FieldSpec {
    pub fn resolve(&self) -> Result<ScalarField, RunError> {
        let field = match (&self.catalog, &self.expression) {
            (Some(name), None) => {
                let entry = catalog::lookup(name)
                    .ok_or_else(|| config_err(format!("unknown catalog entry `{}`", name)))?;
                entry.scalar_field().map_err(config_err)?
            }
            (None, Some(src)) => {
                let d = self
                    .d
                    .ok_or_else(|| config_err("expression input requires `d`"))?;
                let e = Expression::parse(src, Dims::phase(d)).map_err(config_err)?;
                ScalarField::from_expression(e, Domain::Full { dim: 2 * d }).map_err(config_err)?
            }
            _ => {
                return Err(config_err(
                    "field input needs exactly one of `catalog` or `expression`",
                ))
            }
        };
        Ok(if self.c11 {
            field.with_smoothness(Smoothness::C11)
        } else {
            field
        })
    }
}

/// A generating function: catalog name, inline position-only expression,
/// or path to a sampled-grid header file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GfSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
}

impl GfSpec {
    pub fn resolve(&self) -> Result<Gfqi, RunError> {
        match (&self.catalog, &self.expression, &self.grid) {
            (Some(name), None, None) => {
                let entry = catalog::lookup(name)
                    .ok_or_else(|| config_err(format!("unknown catalog entry `{}`", name)))?;
                entry.gfqi().map_err(config_err)
            }
            (None, Some(src), None) => {
                let d = self
                    .d
                    .ok_or_else(|| config_err("expression input requires `d`"))?;
                let e = Expression::parse(src, Dims::phase(d)).map_err(config_err)?;
                Gfqi::from_base_function(&e).map_err(config_err)
            }
            (None, None, Some(path)) => {
                crate::gfqi::import_grid(Path::new(path)).map_err(runtime_err)
            }
            _ => Err(config_err(
                "generating-function input needs exactly one of `catalog`, `expression`, `grid`",
            )),
        }
    }
}

fn default_box_halfwidth() -> f64 {
    1.0
}

fn default_points() -> usize {
    100
}

fn default_resolution() -> usize {
    64
}

fn default_c_box() -> f64 {
    8.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketConfig {
    pub h: FieldSpec,
    pub k: FieldSpec,
    pub seed: u64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_box_halfwidth")]
    pub box_halfwidth: f64,
    /// Relative tolerance for finite-difference vs exact brackets.
    #[serde(default = "default_fd_tol")]
    pub fd_tolerance: f64,
    pub output: String,
}

fn default_fd_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub h: FieldSpec,
    pub t: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub seed: u64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_box_halfwidth")]
    pub box_halfwidth: f64,
    #[serde(default = "default_drift_tol")]
    pub energy_tolerance: f64,
    #[serde(default = "default_drift_tol")]
    pub symplecticity_tolerance: f64,
    pub output: String,
}

fn default_dt() -> f64 {
    1e-3
}

fn default_drift_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinmaxConfig {
    pub gf: GfSpec,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_c_box")]
    pub c_box: f64,
    pub output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaConfig {
    pub gf1: GfSpec,
    pub gf2: GfSpec,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_c_box")]
    pub c_box: f64,
    pub output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakfieldConfig {
    pub h: FieldSpec,
    pub point: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<SamplingSchedule>,
    pub output: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C0CommuteConfig {
    /// Limit pair; must commute for the evidence flag to hold.
    pub h: FieldSpec,
    pub k: FieldSpec,
    /// Perturbation added as `h + perturbation / n`.
    pub perturbation: FieldSpec,
    #[serde(default = "default_family_count")]
    pub count: usize,
    #[serde(default = "default_grid_res")]
    pub grid_resolution: usize,
    #[serde(default = "default_box_halfwidth")]
    pub box_halfwidth: f64,
    #[serde(default = "default_commute_tol")]
    pub tolerance: f64,
    pub output: String,
}

fn default_family_count() -> usize {
    6
}

fn default_grid_res() -> usize {
    8
}

fn default_commute_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigidityConfig {
    /// Catalog family of exactly symplectic maps (the map's first
    /// position component as an expression; momentum fixed).
    pub family: String,
    #[serde(default = "default_family_count")]
    pub count: usize,
    #[serde(default = "default_grid_res")]
    pub grid_resolution: usize,
    #[serde(default = "default_box_halfwidth")]
    pub box_halfwidth: f64,
    #[serde(default = "default_mollify_h")]
    pub mollify_h: f64,
    pub output: String,
}

fn default_mollify_h() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertySuiteConfig {
    pub gf1: GfSpec,
    pub gf2: GfSpec,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default = "default_c_box")]
    pub c_box: f64,
    pub output: String,
}

#[derive(Debug, Clone)]
pub enum ExperimentConfig {
    Bracket(BracketConfig),
    Flow(FlowConfig),
    Minmax(MinmaxConfig),
    Gamma(GammaConfig),
    Weakfield(WeakfieldConfig),
    C0Commute(C0CommuteConfig),
    Rigidity(RigidityConfig),
    PropertySuite(PropertySuiteConfig),
}

pub const EXPERIMENT_KINDS: [&str; 8] = [
    "bracket",
    "flow",
    "minmax",
    "gamma",
    "weakfield",
    "c0commute",
    "rigidity",
    "property-suite",
];

/// Parse a config document: an `experiment` tag plus kind-specific keys.
/// Unknown keys are config errors naming the key.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Value), RunError> {
    let mut value: Value = serde_json::from_str(text).map_err(config_err)?;
    let echo = value.clone();
    let obj = value
        .as_object_mut()
        .ok_or_else(|| config_err("config must be a JSON object"))?;
    let kind = obj
        .remove("experiment")
        .ok_or_else(|| config_err("missing `experiment` key"))?;
    let kind = kind
        .as_str()
        .ok_or_else(|| config_err("`experiment` must be a string"))?
        .to_string();
    let rest = Value::Object(obj.clone());
    let cfg = match kind.as_str() {
        "bracket" => ExperimentConfig::Bracket(serde_json::from_value(rest).map_err(config_err)?),
        "flow" => ExperimentConfig::Flow(serde_json::from_value(rest).map_err(config_err)?),
        "minmax" => ExperimentConfig::Minmax(serde_json::from_value(rest).map_err(config_err)?),
        "gamma" => ExperimentConfig::Gamma(serde_json::from_value(rest).map_err(config_err)?),
        "weakfield" => {
            ExperimentConfig::Weakfield(serde_json::from_value(rest).map_err(config_err)?)
        }
        "c0commute" => {
            ExperimentConfig::C0Commute(serde_json::from_value(rest).map_err(config_err)?)
        }
        "rigidity" => {
            ExperimentConfig::Rigidity(serde_json::from_value(rest).map_err(config_err)?)
        }
        "property-suite" => {
            ExperimentConfig::PropertySuite(serde_json::from_value(rest).map_err(config_err)?)
        }
        other => {
            return Err(config_err(format!(
                "unknown experiment kind `{}`; expected one of {}",
                other,
                EXPERIMENT_KINDS.join(", ")
            )))
        }
    };
    Ok((cfg, echo))
}

/// Self-describing schema of the config format, printed by the CLI.
pub fn schema_text() -> String {
    serde_json::to_string_pretty(&serde_json::json!({
        "config": {
            "experiment": { "enum": EXPERIMENT_KINDS },
            "output": "directory path for CSV and summary.json (all kinds)",
            "seed": "u64, required whenever points are sampled"
        },
        "field": {
            "catalog": "name of a built-in entry (see `rigidlab catalog`)",
            "expression": "inline source over q1..qd, p1..pd (requires d)",
            "d": "degrees of freedom for inline expressions",
            "c11": "bool: promote a Lipschitz-parsed source to C^{1,1}"
        },
        "generating_function": {
            "catalog": "name of a built-in generating-function entry",
            "expression": "position-only 1-periodic source (requires d)",
            "grid": "path to a sampled-grid header JSON: {n, k, resolutions, cutoff, q_entries, data (dense row-major f64)}"
        },
        "kinds": {
            "bracket": ["h", "k", "seed", "points", "box_halfwidth", "fd_tolerance"],
            "flow": ["h", "t", "dt", "seed", "points", "box_halfwidth", "energy_tolerance", "symplecticity_tolerance"],
            "minmax": ["gf", "resolution", "c_box"],
            "gamma": ["gf1", "gf2", "resolution", "c_box"],
            "weakfield": ["h", "point", "seed", "schedule {r0, shrink, shells, per_shell, seed}"],
            "c0commute": ["h", "k", "perturbation", "count", "grid_resolution", "box_halfwidth", "tolerance"],
            "rigidity": ["family", "count", "grid_resolution", "box_halfwidth", "mollify_h"],
            "property-suite": ["gf1", "gf2", "resolution", "c_box"]
        },
        "exit_codes": { "0": "pass", "1": "assertion failure", "2": "config error", "3": "runtime error" }
    }))
    .expect("schema serializes")
}

fn sample_points(d: usize, count: usize, halfwidth: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..2 * d)
                .map(|_| halfwidth * (2.0 * rng.gen::<f64>() - 1.0))
                .collect()
        })
        .collect()
}

fn grid_points(d: usize, res: usize, halfwidth: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; 2 * d];
    loop {
        out.push(
            idx.iter()
                .map(|i| -halfwidth + 2.0 * halfwidth * *i as f64 / res as f64)
                .collect(),
        );
        let mut a = 0;
        loop {
            if a == 2 * d {
                return out;
            }
            idx[a] += 1;
            if idx[a] <= res {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

fn csv_row(values: &[f64]) -> String {
    values.iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(",")
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &str) -> Outputs {
        Outputs {
            dir: PathBuf::from(dir),
            files: Vec::new(),
        }
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        self.files.push(path);
        Ok(())
    }
}

/// Execute a parsed config; the echo is embedded in the summary.
pub fn run_experiment(cfg: &ExperimentConfig, echo: Value) -> Result<RunReport, RunError> {
    let (kind, seed, output_dir, assertions, mut outputs) = match cfg {
        ExperimentConfig::Bracket(c) => run_bracket(c)?,
        ExperimentConfig::Flow(c) => run_flow(c)?,
        ExperimentConfig::Minmax(c) => run_minmax(c)?,
        ExperimentConfig::Gamma(c) => run_gamma(c)?,
        ExperimentConfig::Weakfield(c) => run_weakfield(c)?,
        ExperimentConfig::C0Commute(c) => run_c0commute(c)?,
        ExperimentConfig::Rigidity(c) => run_rigidity(c)?,
        ExperimentConfig::PropertySuite(c) => run_property_suite(c)?,
    };
    let pass = assertions.iter().all(|a| a.pass);
    let summary = Summary {
        experiment: kind.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config: echo,
        assertions,
        outputs: outputs
            .files
            .iter()
            .map(|p| p.to_string_lossy().into_owned())
            .collect(),
        pass,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(runtime_err)?;
    let path = PathBuf::from(output_dir).join("summary.json");
    write_atomic(&path, json.as_bytes())?;
    outputs.files.push(path);
    Ok(RunReport {
        summary,
        files: outputs.files,
    })
}

type KindResult = Result<(&'static str, Option<u64>, String, Vec<AssertionLine>, Outputs), RunError>;

fn run_bracket(c: &BracketConfig) -> KindResult {
    let h = c.h.resolve()?;
    let k = c.k.resolve()?;
    if h.d() != k.d() {
        return Err(config_err("h and k have different degrees of freedom"));
    }
    let d = h.d();
    let pts = sample_points(d, c.points, c.box_halfwidth, c.seed);
    let mut csv = String::new();
    for i in 0..d {
        csv.push_str(&format!("q{},", i + 1));
    }
    for i in 0..d {
        csv.push_str(&format!("p{},", i + 1));
    }
    csv.push_str("bracket,fd_bracket\n");
    let mut anti = 0.0f64;
    let mut fd_rel = 0.0f64;
    for x in &pts {
        let p = PhasePoint::new(d, x.clone()).map_err(runtime_err)?;
        let b = poisson_bracket(&h, &k, &p).map_err(runtime_err)?;
        let br = poisson_bracket(&k, &h, &p).map_err(runtime_err)?;
        anti = anti.max((b + br).abs());
        let gh = h.fd_gradient(x).map_err(runtime_err)?;
        let gk = k.fd_gradient(x).map_err(runtime_err)?;
        let fd = bracket_from_gradients(d, &gh, &gk);
        fd_rel = fd_rel.max((fd - b).abs() / b.abs().max(1.0));
        let mut row = x.clone();
        row.push(b);
        row.push(fd);
        csv.push_str(&csv_row(&row));
        csv.push('\n');
    }
    let mut outputs = Outputs::new(&c.output);
    outputs.write("bracket.csv", &csv)?;
    let assertions = vec![
        AssertionLine::le("antisymmetry", anti, 1e-12),
        AssertionLine::le("fd_relative_error", fd_rel, c.fd_tolerance),
    ];
    Ok(("bracket", Some(c.seed), c.output.clone(), assertions, outputs))
}

fn run_flow(c: &FlowConfig) -> KindResult {
    let h = c.h.resolve()?;
    let d = h.d();
    let cfg = IntegratorConfig::with_dt(c.dt);
    let pts = sample_points(d, c.points, c.box_halfwidth, c.seed);
    let mut csv = String::new();
    for tag in ["q0_", "p0_"] {
        for i in 0..d {
            csv.push_str(&format!("{}{},", tag, i + 1));
        }
    }
    for tag in ["q1_", "p1_"] {
        for i in 0..d {
            csv.push_str(&format!("{}{},", tag, i + 1));
        }
    }
    csv.push_str("energy_drift\n");
    let mut drift = 0.0f64;
    let mut rows = Vec::with_capacity(pts.len());
    for x in &pts {
        let y = integrate_flow_raw(&h, x, c.t, &cfg).map_err(runtime_err)?;
        let e0 = h.eval(x).map_err(runtime_err)?;
        let e1 = h.eval(&y).map_err(runtime_err)?;
        drift = drift.max((e1 - e0).abs());
        let mut row = x.clone();
        row.extend_from_slice(&y);
        row.push(e1 - e0);
        rows.push(row);
    }
    for row in &rows {
        csv.push_str(&csv_row(row));
        csv.push('\n');
    }
    // symplecticity of the time-t map at a handful of points
    let h2 = h.clone();
    let (t, dt) = (c.t, c.dt);
    let map = DiffeoSample::from_map(d, move |x: &[f64]| {
        integrate_flow_raw(&h2, x, t, &IntegratorConfig::with_dt(dt)).expect("flow map")
    });
    let mut defect = 0.0f64;
    for x in pts.iter().take(5) {
        let p = PhasePoint::new(d, x.clone()).map_err(runtime_err)?;
        defect = defect.max(symplecticity_defect(&map, &p).map_err(runtime_err)?);
    }
    let mut outputs = Outputs::new(&c.output);
    outputs.write("flow.csv", &csv)?;
    let assertions = vec![
        AssertionLine::le("energy_drift", drift, c.energy_tolerance),
        AssertionLine::le("symplecticity_defect", defect, c.symplecticity_tolerance),
    ];
    Ok(("flow", Some(c.seed), c.output.clone(), assertions, outputs))
}

fn run_minmax(c: &MinmaxConfig) -> KindResult {
    let g = c.gf.resolve()?;
    let filtration = build_filtration(&g, c.resolution, c.c_box).map_err(runtime_err)?;
    let diagram = compute_persistence(&filtration);
    let c1 = minmax_value(&g, ClassChoice::Unit, c.resolution, c.c_box).map_err(runtime_err)?;
    let cmu =
        minmax_value(&g, ClassChoice::Fundamental, c.resolution, c.c_box).map_err(runtime_err)?;
    let mut outputs = Outputs::new(&c.output);
    outputs.write("diagram.csv", &diagram_csv(&diagram))?;
    let mut values = String::from("class,value\n");
    values.push_str(&format!("unit,{}\n", fmt17(c1)));
    values.push_str(&format!("fundamental,{}\n", fmt17(cmu)));
    outputs.write("minmax.csv", &values)?;
    let assertions = vec![
        AssertionLine::flag("essential_census", true), // enforced inside minmax_value
        AssertionLine::le("unit_le_fundamental", c1 - cmu, 2.0 * diagram.cell_unit),
    ];
    Ok(("minmax", None, c.output.clone(), assertions, outputs))
}

fn run_gamma(c: &GammaConfig) -> KindResult {
    let g1 = c.gf1.resolve()?;
    let g2 = c.gf2.resolve()?;
    let gamma1 = gamma_invariant(&g1, c.resolution, c.c_box).map_err(runtime_err)?;
    let gamma2 = gamma_invariant(&g2, c.resolution, c.c_box).map_err(runtime_err)?;
    let dist12 = gamma_distance(&g1, &g2, c.resolution, c.c_box).map_err(runtime_err)?;
    let dist21 = gamma_distance(&g2, &g1, c.resolution, c.c_box).map_err(runtime_err)?;
    let mut csv = String::from("quantity,value\n");
    csv.push_str(&format!("gamma_1,{}\n", fmt17(gamma1)));
    csv.push_str(&format!("gamma_2,{}\n", fmt17(gamma2)));
    csv.push_str(&format!("gamma_distance_12,{}\n", fmt17(dist12)));
    csv.push_str(&format!("gamma_distance_21,{}\n", fmt17(dist21)));
    let mut outputs = Outputs::new(&c.output);
    outputs.write("gamma.csv", &csv)?;
    // cell-scale tolerance from a fresh filtration of the difference
    let unit = build_filtration(&g1, c.resolution, c.c_box)
        .map_err(runtime_err)?
        .cell_unit();
    let assertions = vec![
        AssertionLine::le("nonnegative_1", -gamma1, 0.0),
        AssertionLine::le("nonnegative_2", -gamma2, 0.0),
        AssertionLine::le("symmetry", (dist12 - dist21).abs(), 4.0 * unit),
    ];
    Ok(("gamma", None, c.output.clone(), assertions, outputs))
}

fn run_weakfield(c: &WeakfieldConfig) -> KindResult {
    let h = c.h.resolve()?;
    let d = h.d();
    if c.point.len() != 2 * d {
        return Err(config_err(format!(
            "point has {} coordinates, needs {}",
            c.point.len(),
            2 * d
        )));
    }
    let sched = match &c.schedule {
        Some(s) => s.clone(),
        None => SamplingSchedule::default_with_seed(c.seed),
    };
    let p = PhasePoint::new(d, c.point.clone()).map_err(runtime_err)?;
    let cloud = weak_hamiltonian_field(&h, &p, &sched).map_err(runtime_err)?;
    let mut outputs = Outputs::new(&c.output);
    outputs.write("weakfield.csv", &cloud.csv())?;
    let assertions = vec![AssertionLine::flag(
        "nonempty",
        !cloud.points.is_empty(),
    )];
    Ok(("weakfield", Some(c.seed), c.output.clone(), assertions, outputs))
}

fn run_c0commute(c: &C0CommuteConfig) -> KindResult {
    let h = c.h.resolve()?;
    let k = c.k.resolve()?;
    let pert = c.perturbation.resolve()?;
    if h.d() != k.d() || h.d() != pert.d() {
        return Err(config_err("h, k, perturbation dimensions differ"));
    }
    if c.count == 0 {
        return Err(config_err("count must be at least 1"));
    }
    let mut h_seq = Vec::with_capacity(c.count);
    let mut k_seq = Vec::with_capacity(c.count);
    for n in 1..=c.count {
        h_seq.push(h.plus(&pert, 1.0 / n as f64).map_err(runtime_err)?);
        k_seq.push(k.clone());
    }
    let grid = grid_points(h.d(), c.grid_resolution, c.box_halfwidth);
    let report =
        c0_commute_defect(&h_seq, &k_seq, &h, &k, &grid, c.tolerance).map_err(runtime_err)?;
    let mut csv = String::from("n,h_distance,k_distance,bracket_norm\n");
    for row in &report.rows {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.n,
            fmt17(row.h_distance),
            fmt17(row.k_distance),
            fmt17(row.bracket_norm)
        ));
    }
    let mut outputs = Outputs::new(&c.output);
    outputs.write("c0commute.csv", &csv)?;
    let assertions = vec![AssertionLine::flag(
        "commuting_evidence",
        report.commuting_evidence,
    )];
    Ok(("c0commute", None, c.output.clone(), assertions, outputs))
}

fn run_rigidity(c: &RigidityConfig) -> KindResult {
    let entry = catalog::lookup(&c.family)
        .ok_or_else(|| config_err(format!("unknown catalog entry `{}`", c.family)))?;
    if entry.kind != catalog::EntryKind::SymplectomorphismFamily {
        return Err(config_err(format!(
            "catalog entry `{}` is not a symplectomorphism family",
            c.family
        )));
    }
    if c.family != "shear-family" {
        return Err(config_err(
            "only families given by explicit map components are supported here; \
             flow-defined families are exercised by the test suites",
        ));
    }
    let d = entry.d;
    let mut family = Vec::with_capacity(c.count);
    for n in 1..=c.count {
        let src = entry.member_source(n);
        let e = Expression::parse(&src, Dims::phase(d)).map_err(runtime_err)?;
        let q = ScalarField::from_expression(e, Domain::Full { dim: 2 * d })
            .map_err(runtime_err)?;
        let p = ScalarField::from_expression(
            Expression::parse("p1", Dims::phase(d)).map_err(runtime_err)?,
            Domain::Full { dim: 2 * d },
        )
        .map_err(runtime_err)?;
        family.push(RigidityMap::new(d, vec![q, p]).map_err(runtime_err)?);
    }
    let limit = RigidityMap::identity(d);
    let grid = grid_points(d, c.grid_resolution, c.box_halfwidth * 0.9);
    let lo = vec![-c.box_halfwidth; 2 * d];
    let hi = vec![c.box_halfwidth; 2 * d];
    let report = limit_rigidity_experiment(&family, &limit, &grid, (&lo, &hi), c.mollify_h)
        .map_err(runtime_err)?;
    let mut outputs = Outputs::new(&c.output);
    outputs.write("rigidity.csv", &report.csv())?;
    let last = report.rows.last().expect("count >= 1");
    let assertions = vec![
        AssertionLine::le("member_table_deviation", last.max_table_deviation, 1e-8),
        AssertionLine::le("limit_table_deviation", report.limit_row.max_table_deviation, 1e-6),
        AssertionLine::le(
            "limit_c_variance",
            report.limit_row.c_variance,
            1e-10,
        ),
    ];
    Ok(("rigidity", None, c.output.clone(), assertions, outputs))
}

fn run_property_suite(c: &PropertySuiteConfig) -> KindResult {
    let g1 = c.gf1.resolve()?;
    let g2 = c.gf2.resolve()?;
    let lines = property_checks(&g1, &g2, c.resolution, c.c_box).map_err(runtime_err)?;
    let mut csv = String::from("property,lhs,rhs,tolerance,pass\n");
    for l in &lines {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            l.name,
            fmt17(l.lhs),
            fmt17(l.rhs),
            fmt17(l.tol),
            l.pass as u8
        ));
    }
    let mut outputs = Outputs::new(&c.output);
    outputs.write("properties.csv", &csv)?;
    let assertions = lines
        .iter()
        .map(|l| AssertionLine::flag(l.name, l.pass))
        .collect();
    Ok(("property-suite", None, c.output.clone(), assertions, outputs))
}
