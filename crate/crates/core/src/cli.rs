//! Command-line front end. Every subcommand reads a [`Config`], writes its
//! CSV outputs and a `summary.json` into the output directory, and maps
//! the outcome to an exit status: 0 on success, 1 when a checked property
//! fails, 2 for configuration errors, 3 when a solver does not converge.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::capacity::{capacity_with_potential, l2cs_norm, s_capacity, CompactSet};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::io::{self, CapacityRow, SweepRow, SCHEMA_VERSION};
use crate::kernel::{log_grid, measure_growth, SamplePlan};
use crate::operator::LgOperator;
use crate::solvers::{penalize_sweep, solve_dirichlet, solve_obstacle_projected, zeta_auto, zeta_auto_upper, PenaltySpec};
use crate::verify::{rate_fit, run_suite, SuitePlan};

#[derive(Debug, Parser)]
#[command(name = "fracobs", version, about = "Nonlocal g-Laplacian obstacle problems and capacities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, `section.key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Master seed for randomized checks (overrides `verify.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Solve `L u = f` in the domain, `u = 0` outside.
    Dirichlet,
    /// Solve the one-obstacle (`psi`) or two-obstacle (`psi`, `phi`) problem.
    Obstacle,
    /// Penalized solves along `solver.epsilon_schedule` against the exact obstacle solution.
    PenalizeSweep,
    /// Capacities of the sets in `problem.sets`.
    Capacity,
    /// Discrete `L²_{C_s}` norm of `problem.phi`.
    L2csNorm,
    /// Run the property suite.
    Verify,
    /// Sample the growth conditions of the configured kernel.
    GrowthCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Dirichlet => "dirichlet",
            Command::Obstacle => "obstacle",
            Command::PenalizeSweep => "penalize-sweep",
            Command::Capacity => "capacity",
            Command::L2csNorm => "l2cs-norm",
            Command::Verify => "verify",
            Command::GrowthCheck => "growth-check",
        }
    }
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Property(_) => 1,
        Error::NonConvergence { .. } | Error::Numeric(_) => 3,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                2
            } else {
                0
            }
        }
    }
}

pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("fracobs {}: {e}", cli.command.name());
            exit_code(&e)
        }
    }
}

/// Runs the command; `Ok(false)` means a checked property failed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("verify.seed={seed}"));
    }
    let cfg = Config::load(cli.config.as_deref(), &overrides)?;
    let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    std::fs::create_dir_all(&out)?;
    let go = || dispatch(cli.command, &cfg, &out);
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} threads: {e}")))?
            .install(go),
        None => go(),
    }
}

fn dispatch(cmd: Command, cfg: &Config, out: &Path) -> Result<bool> {
    let (pass, result) = match cmd {
        Command::Dirichlet => dirichlet(cfg, out)?,
        Command::Obstacle => obstacle(cfg, out)?,
        Command::PenalizeSweep => sweep(cfg, out)?,
        Command::Capacity => capacity(cfg, out)?,
        Command::L2csNorm => l2cs(cfg, out)?,
        Command::Verify => verify(cfg)?,
        Command::GrowthCheck => growth(cfg)?,
    };
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": cmd.name(),
        "pass": pass,
        "config": cfg,
        "result": result,
    });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Contract(e.to_string()))?;
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok(pass)
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("reports serialize")
}

fn write_field(grid: &Grid, u: &Field, out: &Path, name: &str) -> Result<()> {
    io::write_field_file(grid, u, &out.join(name))
}

fn require<'a>(f: &'a Option<Field>, key: &str, cmd: &str) -> Result<&'a Field> {
    f.as_ref()
        .ok_or_else(|| Error::Config(format!("{cmd} needs problem.{key}")))
}

fn dirichlet(cfg: &Config, out: &Path) -> Result<(bool, Value)> {
    let setup = cfg.setup()?;
    let kernel = cfg.kernel.kernel()?;
    let op = LgOperator::new(&kernel, &setup.grid);
    let sol = solve_dirichlet(&op, &setup.f, &cfg.solver.solver()?)?;
    io::write_grid(&setup.grid, std::fs::File::create(out.join("grid.csv"))?)?;
    write_field(&setup.grid, &sol.u, out, "u.csv")?;
    Ok((true, to_json(&sol.report)))
}

fn obstacle(cfg: &Config, out: &Path) -> Result<(bool, Value)> {
    let setup = cfg.setup()?;
    let psi = require(&setup.psi, "psi", "obstacle")?;
    let kernel = cfg.kernel.kernel()?;
    let op = LgOperator::new(&kernel, &setup.grid);
    let sol = solve_obstacle_projected(&op, &setup.f, psi, setup.phi.as_ref(), &cfg.solver.solver()?)?;
    io::write_grid(&setup.grid, std::fs::File::create(out.join("grid.csv"))?)?;
    write_field(&setup.grid, &sol.u, out, "u.csv")?;
    write_field(&setup.grid, psi, out, "psi.csv")?;
    if let Some(phi) = &setup.phi {
        write_field(&setup.grid, phi, out, "phi.csv")?;
    }
    Ok((true, to_json(&sol.report)))
}

fn sweep(cfg: &Config, out: &Path) -> Result<(bool, Value)> {
    let setup = cfg.setup()?;
    let grid = &setup.grid;
    let psi = require(&setup.psi, "psi", "penalize-sweep")?;
    let phi = setup.phi.as_ref();
    let kernel = cfg.kernel.kernel()?;
    let op = LgOperator::new(&kernel, grid);
    let solver = cfg.solver.solver()?;
    let theta = cfg.problem.theta()?;
    let reference = solve_obstacle_projected(&op, &setup.f, psi, phi, &solver)?;
    let zeta_lo = match cfg.zeta_field(grid, false)? {
        Some(z) => z,
        None => zeta_auto(&op, &setup.f, psi)?,
    };
    let zeta_hi = match phi {
        Some(phi) => Some(match cfg.zeta_field(grid, true)? {
            Some(z) => z,
            None => zeta_auto_upper(&op, &setup.f, phi)?,
        }),
        None => None,
    };
    let eps0 = solver.epsilon_schedule.first().copied().unwrap_or(1.0);
    let pen_lo = PenaltySpec::new(theta, eps0, zeta_lo)?;
    let pen_hi = zeta_hi.map(|z| PenaltySpec::new(theta, eps0, z)).transpose()?;
    let zeta_mass = grid.cell_volume() * (pen_lo.zeta.sum() + pen_hi.as_ref().map_or(0.0, |p| p.zeta.sum()));
    let runs = penalize_sweep(&op, &setup.f, psi, phi, &pen_lo, pen_hi.as_ref(), &solver)?;
    let u = &reference.u;
    let mut rows = Vec::with_capacity(runs.len());
    for (eps, sol) in &runs {
        let diff = sol.u.sub(u);
        rows.push(SweepRow {
            epsilon: *eps,
            error_linf: diff.norm_inf(),
            energy_gap: op.form_difference(&sol.u, u, &diff)?,
            gap_bound: eps * theta.c_theta() * zeta_mass,
            iterations: sol.report.iterations,
            rate: None,
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.epsilon, r.error_linf)).collect();
    let rate = rate_fit(&points).ok();
    if let Some(last) = rows.last_mut() {
        last.rate = rate;
    }
    io::write_rows(&rows, std::fs::File::create(out.join("sweep.csv"))?)?;
    write_field(grid, u, out, "u_ref.csv")?;
    if let Some((_, last)) = runs.last() {
        write_field(grid, &last.u, out, "u_eps.csv")?;
    }
    let gap_ok = rows.iter().all(|r| r.energy_gap <= r.gap_bound * (1.0 + 1e-9) + 1e-14);
    Ok((
        gap_ok,
        json!({ "rows": rows, "rate": rate, "reference": reference.report, "gap_bound_holds": gap_ok }),
    ))
}

fn capacity(cfg: &Config, out: &Path) -> Result<(bool, Value)> {
    let setup = cfg.setup()?;
    let grid = &setup.grid;
    if cfg.problem.sets.is_empty() {
        return Err(Error::Config("capacity needs at least one entry in problem.sets".into()));
    }
    let kernel = cfg.kernel.kernel()?;
    let op = LgOperator::new(&kernel, grid);
    let solver = cfg.solver.solver()?;
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for s in &cfg.problem.sets {
        if s.id.is_empty() || !s.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(Error::Config(format!("set id {:?} must be alphanumeric, '_' or '-'", s.id)));
        }
        let set = CompactSet::ball(grid, s.center, s.radius)?;
        let (rep, u) = capacity_with_potential(&op, &set, &solver)?;
        let sandwich = match kernel.gamma_bounds() {
            Some((glo, ghi)) => {
                let cs = s_capacity(grid, &set, &solver)?;
                Some((glo * cs, ghi * ghi / glo * cs))
            }
            None => None,
        };
        write_field(grid, &u, out, &format!("potential_{}.csv", s.id))?;
        rows.push(CapacityRow {
            set_id: s.id.clone(),
            capacity: rep.capacity,
            mass: rep.mass,
            max_offsupport_mu: rep.max_offsupport_mu,
            sandwich_lo: sandwich.map(|b| b.0),
            sandwich_hi: sandwich.map(|b| b.1),
        });
        reports.push(json!({ "set_id": s.id, "nodes": set.nodes().len(), "report": rep }));
    }
    io::write_rows(&rows, std::fs::File::create(out.join("capacity.csv"))?)?;
    Ok((true, json!({ "sets": reports })))
}

fn l2cs(cfg: &Config, out: &Path) -> Result<(bool, Value)> {
    let setup = cfg.setup()?;
    let phi = require(&setup.phi, "phi", "l2cs-norm")?;
    let norm = l2cs_norm(&setup.grid, phi, &cfg.solver.solver()?)?;
    write_field(&setup.grid, phi, out, "phi.csv")?;
    Ok((true, json!({ "norm": norm })))
}

fn verify(cfg: &Config) -> Result<(bool, Value)> {
    let grid = crate::grid::build_grid(cfg.domain.domain()?)?;
    let v = &cfg.verify;
    let plan = SuitePlan {
        seed: v.seed,
        tmonotonicity: v.tmonotonicity_trials,
        gradient: v.gradient_trials,
        comparison: v.comparison_trials,
        stability: v.stability_trials,
        lewy_stampacchia: v.lewy_stampacchia_trials,
        lewy_stampacchia_tol: v.lewy_stampacchia_tol,
    };
    let reports = run_suite(&grid, &v.families, &plan, &cfg.solver.solver()?)?;
    for r in &reports {
        eprintln!(
            "{} {} worst {:e} tolerance {:e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.worst_violation,
            r.tolerance
        );
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok((pass, json!({ "properties": reports })))
}

/// Pairs of up to five interior nodes spread over the domain, radii
/// `1e−4 ..= 1e4`.
fn growth_plan(grid: &Grid) -> SamplePlan {
    let n = grid.n_interior();
    let picks: Vec<usize> = (0..5.min(n)).map(|k| k * (n - 1) / 4.max(1)).collect();
    let mut pairs = Vec::new();
    for &a in &picks {
        for &b in &picks {
            if a != b {
                pairs.push((grid.interior[a], grid.interior[b]));
            }
        }
    }
    if pairs.is_empty() {
        pairs.push((grid.interior[0], grid.interior[0]));
    }
    SamplePlan {
        pairs,
        r_grid: log_grid(1e-4, 1e4, 81),
    }
}

fn growth(cfg: &Config) -> Result<(bool, Value)> {
    let grid = crate::grid::build_grid(cfg.domain.domain()?)?;
    let kernel = cfg.kernel.kernel()?;
    let report = measure_growth(&kernel, &growth_plan(&grid))?;
    Ok((report.passed(), to_json(&report)))
}
