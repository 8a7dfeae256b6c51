//! Randomized property checks and the brute-force oracle.
//!
//! Every check draws its data from smooth Gaussian bumps. Trial `t` of a
//! run with master seed `s` uses ChaCha8 stream `t` of seed `s`, so trials
//! are independent, may run in parallel, and reproduce bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::kernel::{BoundedShape, KernelSpec};
use crate::operator::LgOperator;
use crate::solvers::{
    lewy_stampacchia_sides, solve_dirichlet, solve_obstacle_projected, Obstacle, SolverConfig, ACTIVE_FACTOR,
};

/// Outcome of one property over many trials.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub trials: usize,
    /// Trials whose hypothesis did not hold.
    pub skipped: usize,
    pub worst_violation: f64,
    pub tolerance: f64,
    /// Strict checks pass only when `worst_violation < tolerance`.
    pub strict: bool,
    pub pass: bool,
    /// Inputs of the worst trial.
    pub witness: serde_json::Value,
}

impl PropertyReport {
    fn collect(
        name: &str,
        tolerance: f64,
        strict: bool,
        outcomes: Vec<Option<(f64, serde_json::Value)>>,
    ) -> Self {
        let trials = outcomes.len();
        let skipped = outcomes.iter().filter(|o| o.is_none()).count();
        let mut worst = f64::NEG_INFINITY;
        let mut witness = serde_json::Value::Null;
        for (v, w) in outcomes.into_iter().flatten() {
            if v > worst {
                worst = v;
                witness = w;
            }
        }
        let pass = if strict { worst < tolerance } else { worst <= tolerance };
        PropertyReport {
            name: name.to_string(),
            trials,
            skipped,
            worst_violation: worst,
            tolerance,
            strict,
            pass,
            witness,
        }
    }

    /// Appends `/label` to the property name.
    pub fn labeled(mut self, label: &str) -> Self {
        self.name = format!("{}/{label}", self.name);
        self
    }
}

/// Generator for trial `trial` of a run seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Sum of 1 to 3 Gaussian bumps `a·exp(−|x − c|²/(2w²))` with amplitudes
/// in `amplitude`, centres in the bounding box of the interior nodes and
/// widths between 0.1 and 0.4 of its diameter.
pub fn random_bumps(grid: &Grid, rng: &mut impl Rng, amplitude: (f64, f64)) -> Field {
    let d = grid.dim();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in &grid.interior {
        for k in 0..d {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let diam = (0..d).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt().max(grid.h());
    let count = rng.gen_range(1..=3);
    let bumps: Vec<([f64; 2], f64, f64)> = (0..count)
        .map(|_| {
            let mut c = [0.0; 2];
            for k in 0..d {
                c[k] = if hi[k] > lo[k] { rng.gen_range(lo[k]..=hi[k]) } else { lo[k] };
            }
            let w = diam * rng.gen_range(0.1..0.4);
            let a = if amplitude.1 > amplitude.0 {
                rng.gen_range(amplitude.0..amplitude.1)
            } else {
                amplitude.0
            };
            (c, w, a)
        })
        .collect();
    grid.sample_with(|p| {
        Ok(bumps
            .iter()
            .map(|(c, w, a)| a * (-crate::grid::dist(p, *c).powi(2) / (2.0 * w * w)).exp())
            .sum())
    })
    .expect("bump fields are finite")
}

fn run_trials<F>(trials: usize, f: F) -> Result<Vec<Option<(f64, serde_json::Value)>>>
where
    F: Fn(u64) -> Result<Option<(f64, serde_json::Value)>> + Send + Sync,
{
    if trials == 0 {
        return Err(Error::Contract("property checks need at least one trial".into()));
    }
    (0..trials as u64).into_par_iter().map(f).collect()
}

/// `⟨L u − L v, (u − v)⁺⟩ > 0` whenever `(u − v)⁺ ≠ 0`. The reported
/// violation is the negated form value, so a pass means every value was
/// positive. Every tenth trial uses `v = u − c` with a constant `c > 0`.
pub fn check_tmonotonicity(op: &LgOperator, trials: usize, seed: u64) -> Result<PropertyReport> {
    let grid = op.grid();
    let outcomes = run_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let u = random_bumps(grid, &mut rng, (-1.0, 1.0));
        let v = if t % 10 == 0 {
            let c = rng.gen_range(0.01..0.5);
            u.map(|x| x - c)
        } else {
            random_bumps(grid, &mut rng, (-1.0, 1.0))
        };
        let w = u.sub(&v).positive_part();
        if w.values().iter().all(|&x| x == 0.0) {
            return Ok(None);
        }
        let value = op.form_difference(&u, &v, &w)?;
        Ok(Some((-value, json!({ "seed": seed, "trial": t, "form": value }))))
    })?;
    Ok(PropertyReport::collect("t_monotonicity", 0.0, true, outcomes))
}

/// `|R_i − (E(u + ε e_i) − E(u − ε e_i))/(2ε)| ≤ 1e-5·‖R‖∞` at three
/// random nodes per trial, `ε = 1e-6`. Fields are positive bumps lifted
/// by 0.25. For kernels with `g_* < 1` the flux is singular at the
/// origin and `G` is only `C^1` there, so nodes whose value comes within
/// `1e-3` of a neighbour's (zero outside `Ω`) are not sampled; a trial
/// without eligible nodes is skipped.
pub fn check_gradient(op: &LgOperator, trials: usize, seed: u64) -> Result<PropertyReport> {
    let grid = op.grid();
    let eps = 1e-6;
    let singular = op.kernel().g_star < 1.0;
    let outcomes = run_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let u = random_bumps(grid, &mut rng, (0.0, 1.0)).map(|x| x + 0.25);
        let eligible: Vec<usize> = (0..u.len())
            .filter(|&i| !singular || min_gap(grid, &u, i) >= 1e-3)
            .collect();
        if eligible.is_empty() {
            return Ok(None);
        }
        let r = op.apply(&u)?;
        let scale = r.norm_inf();
        let mut worst: (f64, usize) = (0.0, 0);
        for _ in 0..3 {
            let i = eligible[rng.gen_range(0..eligible.len())];
            let mut up = u.clone();
            up[i] += eps;
            let mut dn = u.clone();
            dn[i] -= eps;
            let fd = (op.energy(&up, None)? - op.energy(&dn, None)?) / (2.0 * eps);
            let rel = (fd - r[i]).abs() / scale;
            if rel > worst.0 {
                worst = (rel, i);
            }
        }
        Ok(Some((worst.0, json!({ "seed": seed, "trial": t, "node": worst.1 }))))
    })?;
    Ok(PropertyReport::collect("gradient_consistency", 1e-5, false, outcomes))
}

/// Smallest `|u_i − u_j|` over the pairs of node `i`.
fn min_gap(grid: &Grid, u: &Field, i: usize) -> f64 {
    grid.row(i)
        .iter()
        .map(|&k| {
            let p = &grid.pairs[k as usize];
            let other = if p.i as usize == i { p.j as usize } else { p.i as usize };
            let uo = if other < u.len() { u[other] } else { 0.0 };
            (u[i] - uo).abs()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Which problem a comparison or stability trial solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Variant {
    Dirichlet,
    OneObstacle,
    TwoObstacle,
}

impl Variant {
    fn of_trial(t: u64) -> Variant {
        match t % 3 {
            0 => Variant::Dirichlet,
            1 => Variant::OneObstacle,
            _ => Variant::TwoObstacle,
        }
    }
}

struct Instance {
    f: Field,
    psi: Option<Field>,
    phi: Option<Field>,
}

fn solve_instance(op: &LgOperator, inst: &Instance, cfg: &SolverConfig) -> Result<Field> {
    Ok(match &inst.psi {
        None => solve_dirichlet(op, &inst.f, cfg)?.u,
        Some(psi) => solve_obstacle_projected(op, &inst.f, psi, inst.phi.as_ref(), cfg)?.u,
    })
}

/// Obstacle data: `ψ` a bump shifted down by 0.1, `φ = ψ + 0.05 + |bump|`.
fn random_obstacles(grid: &Grid, rng: &mut impl Rng, variant: Variant) -> (Option<Field>, Option<Field>) {
    if variant == Variant::Dirichlet {
        return (None, None);
    }
    let psi = random_bumps(grid, rng, (0.0, 0.4)).map(|x| x - 0.1);
    let phi = (variant == Variant::TwoObstacle)
        .then(|| psi.add(&random_bumps(grid, rng, (0.0, 0.3))).map(|x| x + 0.05));
    (Some(psi), phi)
}

/// Ordered data `f ≥ f̂`, `ψ ≥ ψ̂`, `φ ≥ φ̂` gives `u ≥ û` within `2·tol`.
/// Trials cycle through Dirichlet, one- and two-obstacle problems; every
/// fifth trial repeats the data (`f̂ = f`) to probe uniqueness.
pub fn check_comparison(op: &LgOperator, trials: usize, seed: u64, cfg: &SolverConfig) -> Result<PropertyReport> {
    let grid = op.grid();
    let outcomes = run_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let variant = Variant::of_trial(t);
        let f_hat = random_bumps(grid, &mut rng, (-1.0, 2.0));
        let (psi_hat, phi_hat) = random_obstacles(grid, &mut rng, variant);
        let same = t % 5 == 4;
        let lift = |rng: &mut ChaCha8Rng, x: &Field, amp: f64| {
            if same {
                x.clone()
            } else {
                x.add(&random_bumps(grid, rng, (0.0, amp)))
            }
        };
        let f = lift(&mut rng, &f_hat, 1.0);
        let psi = psi_hat.as_ref().map(|p| lift(&mut rng, p, 0.2));
        // φ ≥ φ̂ and φ ≥ ψ keep both instances feasible
        let phi = match (&phi_hat, &psi) {
            (Some(p), Some(q)) => Some(lift(&mut rng, p, 0.2).zip_map(q, f64::max)),
            _ => None,
        };
        let top = Instance { f, psi, phi };
        let hat = Instance { f: f_hat, psi: psi_hat, phi: phi_hat };
        let u = solve_instance(op, &top, cfg)?;
        let uh = solve_instance(op, &hat, cfg)?;
        let (gap, node) = (0..u.len())
            .map(|i| (uh[i] - u[i], i))
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
        Ok(Some((gap, json!({ "seed": seed, "trial": t, "variant": variant, "node": node, "same_data": same }))))
    })?;
    Ok(PropertyReport::collect("comparison", 2.0 * cfg.tol, false, outcomes))
}

/// With `f = f̂`: `‖u − û‖∞ ≤ ‖ψ − ψ̂‖∞ ∨ ‖φ − φ̂‖∞` within `2·tol`.
/// Trials alternate between one and two obstacles.
pub fn check_linf_stability(op: &LgOperator, trials: usize, seed: u64, cfg: &SolverConfig) -> Result<PropertyReport> {
    let grid = op.grid();
    let outcomes = run_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let variant = if t % 2 == 0 { Variant::OneObstacle } else { Variant::TwoObstacle };
        let f = random_bumps(grid, &mut rng, (-1.0, 2.0));
        let (psi, phi) = random_obstacles(grid, &mut rng, variant);
        let psi = psi.unwrap();
        let psi_hat = psi.add(&random_bumps(grid, &mut rng, (-0.1, 0.1)));
        let phi_hat = phi.as_ref().map(|p| {
            // keep ψ̂ ≤ φ̂
            p.add(&random_bumps(grid, &mut rng, (-0.1, 0.1))).zip_map(&psi_hat, f64::max)
        });
        let a = Instance { f: f.clone(), psi: Some(psi.clone()), phi: phi.clone() };
        let b = Instance { f, psi: Some(psi_hat.clone()), phi: phi_hat.clone() };
        let u = solve_instance(op, &a, cfg)?;
        let uh = solve_instance(op, &b, cfg)?;
        let lhs = u.sub(&uh).norm_inf();
        let mut rhs = psi.sub(&psi_hat).norm_inf();
        if let (Some(p), Some(q)) = (&phi, &phi_hat) {
            rhs = rhs.max(p.sub(q).norm_inf());
        }
        Ok(Some((lhs - rhs, json!({ "seed": seed, "trial": t, "variant": variant, "lhs": lhs, "rhs": rhs }))))
    })?;
    Ok(PropertyReport::collect("linf_stability", 2.0 * cfg.tol, false, outcomes))
}

/// Nodewise `min(f h^d, L φ) − tol ≤ L u ≤ max(f h^d, L ψ) + tol`.
/// The witness records the excess on each side.
pub fn check_lewy_stampacchia(
    op: &LgOperator,
    u: &Field,
    f: &Field,
    psi: &Field,
    phi: Option<&Field>,
    tolerance: f64,
) -> Result<PropertyReport> {
    let (lo, hi) = lewy_stampacchia_sides(op, u, f, Some(psi), phi)?;
    let outcome = Some((lo.max(hi), json!({ "lower_side": lo, "upper_side": hi })));
    Ok(PropertyReport::collect("lewy_stampacchia", tolerance, false, vec![outcome]))
}

/// Random obstacle instances solved and checked against Lewy–Stampacchia.
pub fn check_lewy_stampacchia_random(
    op: &LgOperator,
    trials: usize,
    seed: u64,
    cfg: &SolverConfig,
    tolerance: f64,
) -> Result<PropertyReport> {
    let grid = op.grid();
    let outcomes = run_trials(trials, |t| {
        let mut rng = trial_rng(seed, t);
        let variant = if t % 2 == 0 { Variant::OneObstacle } else { Variant::TwoObstacle };
        let f = random_bumps(grid, &mut rng, (-1.0, 2.0));
        let (psi, phi) = random_obstacles(grid, &mut rng, variant);
        let psi = psi.unwrap();
        let u = solve_obstacle_projected(op, &f, &psi, phi.as_ref(), cfg)?.u;
        let (lo, hi) = lewy_stampacchia_sides(op, &u, &f, Some(&psi), phi.as_ref())?;
        Ok(Some((lo.max(hi), json!({ "seed": seed, "trial": t, "variant": variant, "lower_side": lo, "upper_side": hi }))))
    })?;
    Ok(PropertyReport::collect("lewy_stampacchia", tolerance, false, outcomes))
}

/// Largest grid handled by [`brute_force_solve`].
pub const BRUTE_FORCE_MAX_NODES: usize = 6;

/// Constrained minimizer of `E(u) − Σ f u h^d` on a tiny grid by cyclic
/// coordinate search. Each coordinate is minimized by a nested grid
/// search (21 points per stage, bracket shrinking tenfold per stage,
/// widened when the best point lands on an open edge) on the partial
/// energy of that node only; no derivatives are used. Sweeps repeat until
/// no coordinate moves by more than `1e-11`.
pub fn brute_force_solve(
    op: &LgOperator,
    f: &Field,
    lower: Option<&Obstacle>,
    upper: Option<&Obstacle>,
) -> Result<Field> {
    let grid = op.grid();
    let n = grid.n_interior();
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::Contract(format!(
            "brute-force oracle handles at most {BRUTE_FORCE_MAX_NODES} nodes (got {n})"
        )));
    }
    f.check_grid(grid)?;
    let hd = grid.cell_volume();
    let lo = |i: usize| lower.and_then(|o| o.get(i));
    let hi = |i: usize| upper.and_then(|o| o.get(i));
    let mut u = Field::zeros(grid);
    for i in 0..n {
        if let Some(l) = lo(i) {
            u[i] = u[i].max(l);
        }
        if let Some(h) = hi(i) {
            u[i] = u[i].min(h);
        }
    }
    let partial = |u: &Field, i: usize, t: f64| -> Result<f64> { Ok(op.node_energy(u, i, t)? - f[i] * t * hd) };
    let mut radius = vec![1.0; n];
    for _sweep in 0..20_000 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let start = u[i];
            let mut center = start;
            let mut r = radius[i];
            let mut stages = 0;
            while stages < 12 {
                let a = lo(i).map_or(center - r, |l| (center - r).max(l));
                let b = hi(i).map_or(center + r, |h| (center + r).min(h));
                let mut best = (f64::INFINITY, center);
                for k in 0..=20 {
                    let t = if b > a { a + (b - a) * k as f64 / 20.0 } else { a };
                    let e = partial(&u, i, t)?;
                    if e < best.0 {
                        best = (e, t);
                    }
                }
                let t = best.1;
                let on_open_left = t == a && lo(i).is_none_or(|l| a > l);
                let on_open_right = t == b && hi(i).is_none_or(|h| b < h);
                center = t;
                if (on_open_left || on_open_right) && b > a {
                    r *= 4.0;
                } else {
                    r /= 10.0;
                    stages += 1;
                }
            }
            u[i] = center;
            let step = (center - start).abs();
            radius[i] = (10.0 * step).clamp(1e-9, 1.0);
            moved = moved.max(step);
        }
        if moved <= 1e-11 {
            return Ok(u);
        }
    }
    Err(Error::NonConvergence { iterations: 20_000, residual: f64::NAN, tolerance: 1e-11 })
}

/// Least-squares slope of `log err` against `log ε`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 4 {
        return Err(Error::Domain(format!("rate fit needs at least 4 points (got {})", points.len())));
    }
    if let Some(&(e, r)) = points.iter().find(|&&(e, r)| !(e > 0.0 && r > 0.0)) {
        return Err(Error::Domain(format!("rate fit needs positive epsilon and error (got {e}, {r})")));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Property tolerance used by the default suite.
pub fn property_tolerance(cfg: &SolverConfig) -> f64 {
    ACTIVE_FACTOR * cfg.tol
}

/// Kernel families of the standard suite.
pub const FAMILY_NAMES: &[&str] = &["p1.5", "p2", "p3", "double_phase", "bounded"];

/// `p1.5`, `p2`, `p3`: power kernels with `K ≡ 1`; `double_phase`:
/// `r^0 + r^1`; `bounded`: saturating `g` between 0.5 and 2.
pub fn standard_family(name: &str) -> Result<KernelSpec> {
    match name {
        "p1.5" => KernelSpec::power(1.5, 1.0),
        "p2" => KernelSpec::power(2.0, 1.0),
        "p3" => KernelSpec::power(3.0, 1.0),
        "double_phase" => KernelSpec::double_phase(2.0, 3.0, 1.0, 1.0),
        "bounded" => KernelSpec::bounded(
            BoundedShape::Saturating {
                lo: 0.5.into(),
                hi: 2.0.into(),
            },
            0.5,
            2.0,
        ),
        other => Err(Error::Config(format!(
            "unknown kernel family {other:?} (expected one of {FAMILY_NAMES:?})"
        ))),
    }
}

/// Trial counts of a suite run.
#[derive(Debug, Clone, Serialize)]
pub struct SuitePlan {
    pub seed: u64,
    pub tmonotonicity: usize,
    pub gradient: usize,
    pub comparison: usize,
    pub stability: usize,
    pub lewy_stampacchia: usize,
    pub lewy_stampacchia_tol: f64,
}

/// Runs every property with a nonzero trial count for each family.
pub fn run_suite(grid: &Grid, families: &[String], plan: &SuitePlan, cfg: &SolverConfig) -> Result<Vec<PropertyReport>> {
    let mut out = Vec::new();
    for name in families {
        let k = standard_family(name)?;
        let op = LgOperator::new(&k, grid);
        if plan.tmonotonicity > 0 {
            out.push(check_tmonotonicity(&op, plan.tmonotonicity, plan.seed)?.labeled(name));
        }
        if plan.gradient > 0 {
            out.push(check_gradient(&op, plan.gradient, plan.seed)?.labeled(name));
        }
        if plan.comparison > 0 {
            out.push(check_comparison(&op, plan.comparison, plan.seed, cfg)?.labeled(name));
        }
        if plan.stability > 0 {
            out.push(check_linf_stability(&op, plan.stability, plan.seed, cfg)?.labeled(name));
        }
        if plan.lewy_stampacchia > 0 {
            let r = check_lewy_stampacchia_random(&op, plan.lewy_stampacchia, plan.seed, cfg, plan.lewy_stampacchia_tol)?;
            out.push(r.labeled(name));
        }
    }
    Ok(out)
}
