//! Run configuration. A TOML document with the sections below; every key
//! has a default, so an empty file (or none) is a valid configuration.
//! Command-line overrides `--set section.key=value` are applied to the
//! parsed document before it is checked; the value is read as a TOML
//! value and falls back to a plain string.
//!
//! ```toml
//! [domain]
//! shape = "interval"        # interval | rect | ball | mask
//! a = 0.0                   # interval
//! b = 1.0
//! lo = [0.0, 0.0]           # rect, mask bounding box
//! hi = [1.0, 1.0]
//! center = [0.0, 0.0]       # ball
//! radius = 0.5
//! dim = 2                   # ball, mask
//! mask = "0.25 - (x-0.5)^2 - (y-0.5)^2"
//! h = 0.015625
//! s = 0.5
//! exterior_factor = 5.0
//!
//! [kernel]
//! family = "power"          # power | variable_power | double_phase | bounded | tabulated
//! p = 2.0                   # power, double_phase
//! q = 3.0                   # double_phase
//! k = 1.0                   # number or expression in x, y, x1, x2, y1, y2, dist
//! k1 = 1.0
//! k2 = 1.0
//! p_expr = "2 + 0.5*x"      # variable_power, with p_range = [lo, hi]
//! shape = "saturating"      # bounded: constant | saturating | expr
//! value = 1.0               # constant shape
//! lo = 0.5                  # saturating shape
//! hi = 2.0
//! expr = "1 + r/(1+r)"      # expr shape, also in r
//! gamma_lo = 0.5
//! gamma_hi = 2.0
//! table = [[0.5, 1.0], [1.0, 1.0]]   # tabulated (r, g) samples
//! g_star = 1.0              # optional override of the growth exponents
//! g_upper = 1.0
//!
//! [problem]
//! f = "0"                   # number or expression in x, y
//! psi = "0.2 - (x-0.5)^2"   # lower obstacle
//! phi = "0.5"               # upper obstacle
//! zeta = "auto"             # auto | expression, lower penalty weight density
//! zeta_upper = "auto"
//! theta = "clamp"           # clamp | smoothstep
//! sets = [{ id = "A", center = [0.5, 0.0], radius = 0.2 }]
//!
//! [solver]
//! tol = 1e-10
//! max_iters = 200000
//! step_rule = "backtracking"  # backtracking | fixed
//! beta = 0.5
//! c = 1e-4
//! step = 1.0                # fixed step length
//! epsilon_schedule = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5]
//!
//! [verify]
//! seed = 0
//! families = ["p1.5", "p2", "p3", "double_phase", "bounded"]
//! tmonotonicity_trials = 200
//! gradient_trials = 20
//! comparison_trials = 12
//! stability_trials = 10
//! lewy_stampacchia_trials = 10
//! lewy_stampacchia_tol = 1e-8
//!
//! [output]
//! dir = "out"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::field::Field;
use crate::grid::{build_grid, Domain, Grid, Shape, DEFAULT_EXTERIOR_FACTOR};
use crate::kernel::{BoundedShape, Coef, KernelSpec, SHAPE_VARS};
use crate::solvers::{SolverConfig, StepRule, Theta};

/// A number or an expression string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Num(f64),
    Expr(String),
}

impl Scalar {
    fn text(&self) -> String {
        match self {
            Scalar::Num(v) => format!("{v:?}"),
            Scalar::Expr(s) => s.clone(),
        }
    }

    fn coef(&self) -> Result<Coef> {
        match self {
            Scalar::Num(v) => Ok(Coef::Const(*v)),
            Scalar::Expr(s) => Coef::expr(s),
        }
    }

    /// Samples the value at the interior nodes of `grid`.
    pub fn field(&self, grid: &Grid) -> Result<Field> {
        match self {
            Scalar::Num(v) => Ok(Field::constant(grid, *v)),
            Scalar::Expr(s) => grid.sample_field(s),
        }
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::Num(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: String,
    pub a: f64,
    pub b: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub center: [f64; 2],
    pub radius: f64,
    pub dim: usize,
    pub mask: Option<String>,
    pub h: f64,
    pub s: f64,
    pub exterior_factor: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            shape: "interval".into(),
            a: 0.0,
            b: 1.0,
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
            center: [0.0, 0.0],
            radius: 0.5,
            dim: 2,
            mask: None,
            h: 1.0 / 64.0,
            s: 0.5,
            exterior_factor: DEFAULT_EXTERIOR_FACTOR,
        }
    }
}

impl DomainConfig {
    pub fn domain(&self) -> Result<Domain> {
        let d = match self.shape.as_str() {
            "interval" => Domain::interval(self.a, self.b, self.h, self.s),
            "rect" => Domain::rect(self.lo, self.hi, self.h, self.s),
            "ball" => Domain::ball(self.center, self.radius, self.dim, self.h, self.s),
            "mask" => {
                let text = self
                    .mask
                    .as_deref()
                    .ok_or_else(|| Error::Config("domain.mask is required for shape = \"mask\"".into()))?;
                Domain {
                    dim: self.dim,
                    shape: Shape::Mask {
                        expr: Expression::parse(text, &["x", "y"])?,
                        lo: self.lo,
                        hi: self.hi,
                    },
                    h: self.h,
                    s: self.s,
                    exterior_factor: DEFAULT_EXTERIOR_FACTOR,
                }
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown domain.shape {other:?} (expected interval, rect, ball or mask)"
                )))
            }
        };
        Ok(d.with_exterior_factor(self.exterior_factor))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub family: String,
    pub p: f64,
    pub q: f64,
    pub k: Scalar,
    pub k1: Scalar,
    pub k2: Scalar,
    pub p_expr: Option<String>,
    pub p_range: Option<[f64; 2]>,
    pub shape: String,
    pub value: Scalar,
    pub lo: Scalar,
    pub hi: Scalar,
    pub expr: Option<String>,
    pub gamma_lo: Option<f64>,
    pub gamma_hi: Option<f64>,
    pub table: Option<Vec<[f64; 2]>>,
    pub g_star: Option<f64>,
    pub g_upper: Option<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: "power".into(),
            p: 2.0,
            q: 3.0,
            k: 1.0.into(),
            k1: 1.0.into(),
            k2: 1.0.into(),
            p_expr: None,
            p_range: None,
            shape: "constant".into(),
            value: 1.0.into(),
            lo: 0.5.into(),
            hi: 2.0.into(),
            expr: None,
            gamma_lo: None,
            gamma_hi: None,
            table: None,
            g_star: None,
            g_upper: None,
        }
    }
}

fn need<T: Copy>(v: Option<T>, key: &str, family: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("kernel.{key} is required for family {family:?}")))
}

impl KernelConfig {
    pub fn kernel(&self) -> Result<KernelSpec> {
        let fam = self.family.as_str();
        let spec = match fam {
            "power" => KernelSpec::power(self.p, self.k.coef()?)?,
            "variable_power" => {
                let text = self
                    .p_expr
                    .as_deref()
                    .ok_or_else(|| Error::Config("kernel.p_expr is required for family \"variable_power\"".into()))?;
                let [lo, hi] = need(self.p_range, "p_range", fam)?;
                KernelSpec::variable_power(Coef::expr(text)?, self.k.coef()?, (lo, hi))?
            }
            "double_phase" => KernelSpec::double_phase(self.p, self.q, self.k1.coef()?, self.k2.coef()?)?,
            "bounded" => {
                let glo = need(self.gamma_lo, "gamma_lo", fam)?;
                let ghi = need(self.gamma_hi, "gamma_hi", fam)?;
                let shape = match self.shape.as_str() {
                    "constant" => BoundedShape::Constant(self.value.coef()?),
                    "saturating" => BoundedShape::Saturating {
                        lo: self.lo.coef()?,
                        hi: self.hi.coef()?,
                    },
                    "expr" => {
                        let text = self
                            .expr
                            .as_deref()
                            .ok_or_else(|| Error::Config("kernel.expr is required for shape \"expr\"".into()))?;
                        BoundedShape::Expr(Expression::parse(text, SHAPE_VARS)?)
                    }
                    other => {
                        return Err(Error::Config(format!(
                            "unknown kernel.shape {other:?} (expected constant, saturating or expr)"
                        )))
                    }
                };
                KernelSpec::bounded(shape, glo, ghi)?
            }
            "tabulated" => {
                let t = self
                    .table
                    .as_ref()
                    .ok_or_else(|| Error::Config("kernel.table is required for family \"tabulated\"".into()))?;
                let samples: Vec<(f64, f64)> = t.iter().map(|&[r, g]| (r, g)).collect();
                KernelSpec::tabulated(&samples)?
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown kernel.family {other:?} (expected power, variable_power, double_phase, bounded or tabulated)"
                )))
            }
        };
        match (self.g_star, self.g_upper) {
            (None, None) => Ok(spec),
            (lo, hi) => {
                let lo = lo.unwrap_or(spec.g_star);
                let hi = hi.unwrap_or(spec.g_upper);
                spec.with_exponents(lo, hi)
            }
        }
    }
}

/// A ball-shaped compact set for the capacity command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetConfig {
    pub id: String,
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub f: Scalar,
    pub psi: Option<Scalar>,
    pub phi: Option<Scalar>,
    pub zeta: String,
    pub zeta_upper: String,
    pub theta: String,
    pub sets: Vec<SetConfig>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            f: 0.0.into(),
            psi: None,
            phi: None,
            zeta: "auto".into(),
            zeta_upper: "auto".into(),
            theta: "clamp".into(),
            sets: Vec::new(),
        }
    }
}

impl ProblemConfig {
    pub fn theta(&self) -> Result<Theta> {
        match self.theta.as_str() {
            "clamp" => Ok(Theta::Clamp),
            "smoothstep" => Ok(Theta::Smoothstep),
            other => Err(Error::Config(format!(
                "unknown problem.theta {other:?} (expected clamp or smoothstep)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol: f64,
    pub max_iters: usize,
    pub step_rule: String,
    pub beta: f64,
    pub c: f64,
    pub step: f64,
    pub epsilon_schedule: Vec<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            tol: d.tol,
            max_iters: d.max_iters,
            step_rule: "backtracking".into(),
            beta: 0.5,
            c: 1e-4,
            step: 1.0,
            epsilon_schedule: d.epsilon_schedule,
        }
    }
}

impl SolverSection {
    pub fn solver(&self) -> Result<SolverConfig> {
        let step_rule = match self.step_rule.as_str() {
            "backtracking" => StepRule::Backtracking { beta: self.beta, c: self.c },
            "fixed" => StepRule::Fixed(self.step),
            other => {
                return Err(Error::Config(format!(
                    "unknown solver.step_rule {other:?} (expected backtracking or fixed)"
                )))
            }
        };
        let cfg = SolverConfig {
            tol: self.tol,
            max_iters: self.max_iters,
            step_rule,
            epsilon_schedule: self.epsilon_schedule.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub seed: u64,
    pub families: Vec<String>,
    pub tmonotonicity_trials: usize,
    pub gradient_trials: usize,
    pub comparison_trials: usize,
    pub stability_trials: usize,
    pub lewy_stampacchia_trials: usize,
    pub lewy_stampacchia_tol: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            seed: 0,
            families: crate::verify::FAMILY_NAMES.iter().map(|s| s.to_string()).collect(),
            tmonotonicity_trials: 200,
            gradient_trials: 20,
            comparison_trials: 12,
            stability_trials: 10,
            lewy_stampacchia_trials: 10,
            lewy_stampacchia_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub domain: DomainConfig,
    pub kernel: KernelConfig,
    pub problem: ProblemConfig,
    pub solver: SolverSection,
    pub verify: VerifySection,
    pub output: OutputSection,
}

/// Parses `key.path=value` and stores it in `doc`.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key {key:?} is malformed")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key {key:?}: {part:?} is not a section")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl Config {
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Config> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("invalid TOML: {e}")))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let cfg: Config = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?,
            None => String::new(),
        };
        Config::from_toml(&text, overrides)
    }

    /// Builds every derived object once so that load-time errors surface
    /// as configuration errors.
    fn check(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        let setup = self.setup().map_err(as_config)?;
        self.kernel.kernel().map_err(as_config)?;
        self.solver.solver()?;
        self.problem.theta()?;
        for z in [&self.problem.zeta, &self.problem.zeta_upper] {
            if z != "auto" {
                setup.grid.sample_field(z).map_err(as_config)?;
            }
        }
        for s in &self.problem.sets {
            if !(s.radius > 0.0) {
                return Err(Error::Config(format!("set {:?} needs a positive radius", s.id)));
            }
        }
        Ok(())
    }

    /// Grid and sampled data fields. Fails when `ψ > φ` somewhere.
    pub fn setup(&self) -> Result<Setup> {
        let grid = build_grid(self.domain.domain()?)?;
        let f = self.problem.f.field(&grid)?;
        let psi = self.problem.psi.as_ref().map(|s| s.field(&grid)).transpose()?;
        let phi = self.problem.phi.as_ref().map(|s| s.field(&grid)).transpose()?;
        if let (Some(a), Some(b)) = (&psi, &phi) {
            if let Some(i) = (0..a.len()).find(|&i| a[i] > b[i]) {
                return Err(Error::Config(format!(
                    "problem.psi exceeds problem.phi at node {i} ({} > {})",
                    a[i], b[i]
                )));
            }
        }
        Ok(Setup { grid, f, psi, phi })
    }

    /// Penalty weight density: `auto`, or an expression sampled on the grid.
    pub fn zeta_field(&self, grid: &Grid, upper: bool) -> Result<Option<Field>> {
        let z = if upper { &self.problem.zeta_upper } else { &self.problem.zeta };
        if z == "auto" {
            Ok(None)
        } else {
            grid.sample_field(z).map(Some)
        }
    }

    /// Source term as written, for summaries.
    pub fn f_text(&self) -> String {
        self.problem.f.text()
    }
}

/// Objects derived from a configuration.
pub struct Setup {
    pub grid: Grid,
    pub f: Field,
    pub psi: Option<Field>,
    pub phi: Option<Field>,
}
