//! Dirichlet, one- and two-obstacle solvers.
//!
//! All solvers minimize a strictly convex energy. The constrained problems
//! use a projected Newton method: the Newton system is solved on the free
//! nodes, nodes sitting at an attracting bound take a diagonally scaled
//! gradient step, and the trial point is projected back onto the box and
//! accepted by an Armijo test along the projection arc. When Cholesky
//! fails or the step is rejected down to `1e-20` the iteration falls back
//! to a projected gradient step.
//!
//! Residuals are in the nodal units of [`LgOperator::apply`], i.e. they
//! carry the factor `h^d` of the load term.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{Grid, GridId};
use crate::operator::{Kahan, LgOperator};

/// Nodes within this multiple of `tol` of a bound count as active.
pub const ACTIVE_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StepRule {
    /// Constant step length, no line search.
    Fixed(f64),
    /// Armijo backtracking with contraction `beta` and slope fraction `c`.
    Backtracking { beta: f64, c: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    /// `L∞` bound on the projected residual.
    pub tol: f64,
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Penalty parameters for sweeps, largest first.
    pub epsilon_schedule: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iters: 200_000,
            step_rule: StepRule::Backtracking { beta: 0.5, c: 1e-4 },
            epsilon_schedule: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("solver tol must be > 0 (got {})", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("solver max_iters must be >= 1".into()));
        }
        match self.step_rule {
            StepRule::Fixed(a) if !(a > 0.0) => {
                return Err(Error::Config(format!("fixed step must be > 0 (got {a})")))
            }
            StepRule::Backtracking { beta, c } if !(beta > 0.0 && beta < 1.0 && c > 0.0 && c < 1.0) => {
                return Err(Error::Config(format!(
                    "backtracking needs beta, c in (0, 1) (got beta = {beta}, c = {c})"
                )))
            }
            _ => {}
        }
        if let Some(e) = self.epsilon_schedule.iter().find(|&&e| !(e > 0.0)) {
            return Err(Error::Config(format!("epsilon schedule entries must be > 0 (got {e})")));
        }
        Ok(())
    }
}

/// Approximations `θ` of the Heaviside graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Theta {
    /// `θ(t) = min(1, max(0, t))`.
    Clamp,
    /// `θ(t) = 3t² − 2t³` on `[0, 1]`.
    Smoothstep,
}

impl Theta {
    pub fn eval(self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        match self {
            Theta::Clamp => t,
            Theta::Smoothstep => t * t * (3.0 - 2.0 * t),
        }
    }

    /// `θ′(t)`.
    pub fn slope(self, t: f64) -> f64 {
        if t <= 0.0 || t >= 1.0 {
            return 0.0;
        }
        match self {
            Theta::Clamp => 1.0,
            Theta::Smoothstep => 6.0 * t * (1.0 - t),
        }
    }

    /// `Θ(t) = ∫₀ᵗ θ`.
    pub fn primitive(self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 0.5 + (t - 1.0);
        }
        match self {
            Theta::Clamp => 0.5 * t * t,
            Theta::Smoothstep => t * t * t - 0.5 * t * t * t * t,
        }
    }

    /// `C_θ = sup_{t>0} (1 − θ(t))·t`.
    pub fn c_theta(self) -> f64 {
        match self {
            Theta::Clamp => 0.25,
            Theta::Smoothstep => {
                let t = (1.0 + 33f64.sqrt()) / 16.0;
                (1.0 - Theta::Smoothstep.eval(t)) * t
            }
        }
    }
}

/// Penalty data for one obstacle: `θ`, `ε` and the weight density `ζ ≥ 0`.
#[derive(Debug, Clone)]
pub struct PenaltySpec {
    pub theta: Theta,
    pub epsilon: f64,
    pub zeta: Field,
}

impl PenaltySpec {
    pub fn new(theta: Theta, epsilon: f64, zeta: Field) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("penalty epsilon must be > 0 (got {epsilon})")));
        }
        if let Some(i) = zeta.values().iter().position(|&z| z < 0.0) {
            return Err(Error::Contract(format!("penalty weight zeta is negative at node {i}")));
        }
        Ok(PenaltySpec { theta, epsilon, zeta })
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        PenaltySpec::new(self.theta, epsilon, self.zeta.clone())
    }
}

/// A nodewise bound that may be absent at some nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Obstacle {
    grid: GridId,
    values: Vec<Option<f64>>,
}

impl Obstacle {
    pub fn from_field(f: &Field) -> Self {
        Obstacle {
            grid: f.grid_id(),
            values: f.values().iter().map(|&v| Some(v)).collect(),
        }
    }

    /// `value` on the given interior nodes, unconstrained elsewhere.
    pub fn on_nodes(grid: &Grid, nodes: &[usize], value: f64) -> Result<Self> {
        let mut values = vec![None; grid.n_interior()];
        for &i in nodes {
            if i >= values.len() {
                return Err(Error::Contract(format!("node {i} is not an interior node")));
            }
            values[i] = Some(value);
        }
        Ok(Obstacle { grid: grid.id(), values })
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.values[i]
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    /// The obstacle as a field when it is defined at every node.
    pub fn to_field(&self, grid: &Grid) -> Option<Field> {
        let v: Option<Vec<f64>> = self.values.iter().copied().collect();
        Field::new(grid, v?).ok()
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final projected residual, `L∞`.
    pub residual: f64,
    /// `E(u) − Σ f u h^d`.
    pub energy: f64,
    /// Nodes within `10·tol` of the lower (upper) obstacle.
    pub active_lower: usize,
    pub active_upper: usize,
    /// Largest nodewise excess over the Lewy–Stampacchia bounds, when the
    /// obstacles are full fields.
    pub lewy_stampacchia_violation: Option<f64>,
    /// Nodes where a penalty weight is below `(L ψ/h^d − f)⁺`
    /// (respectively `(f − L φ/h^d)⁺`).
    pub zeta_deficient_nodes: Option<usize>,
    /// Rounding floor of the residual at the returned point. Solves stop
    /// below `max(tol, residual_floor)`; the floor only exceeds `tol` for
    /// singular fluxes.
    pub residual_floor: f64,
    pub gradient_fallbacks: usize,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Field,
    pub report: SolveReport,
}

struct PenaltyTerm<'a> {
    theta: Theta,
    eps: f64,
    zeta_hd: Vec<f64>,
    bound: &'a [f64],
}

/// `J(u) = E(u) − Σ load·u + Σ_i σ_i(u_i)` with separable penalty terms.
struct Objective<'a, 'b> {
    op: &'b LgOperator<'a>,
    load: Vec<f64>,
    lower_pen: Option<PenaltyTerm<'b>>,
    upper_pen: Option<PenaltyTerm<'b>>,
}

impl Objective<'_, '_> {
    fn separable(&self, u: &[f64]) -> (f64, f64) {
        let mut acc = Kahan::default();
        let mut mag = 0.0;
        if let Some(p) = &self.lower_pen {
            for i in 0..u.len() {
                let t = (u[i] - p.bound[i]) / p.eps;
                let v = p.zeta_hd[i] * (p.eps * p.theta.primitive(t) - u[i]);
                acc.add(v);
                mag += v.abs();
            }
        }
        if let Some(p) = &self.upper_pen {
            for i in 0..u.len() {
                let t = (p.bound[i] - u[i]) / p.eps;
                let v = p.zeta_hd[i] * (p.eps * p.theta.primitive(t) + u[i]);
                acc.add(v);
                mag += v.abs();
            }
        }
        (acc.value(), mag)
    }

    /// Value together with a magnitude scale for roundoff judgements.
    fn value(&self, u: &Field) -> Result<(f64, f64)> {
        let e = self.op.energy(u, None)?;
        let mut acc = Kahan::default();
        let mut mag = e.abs();
        for (l, x) in self.load.iter().zip(u.values()) {
            acc.add(l * x);
            mag += (l * x).abs();
        }
        let (sep, sep_mag) = self.separable(u.values());
        Ok((e - acc.value() + sep, mag + sep_mag))
    }

    fn gradient(&self, u: &Field) -> Result<Vec<f64>> {
        let mut g = self.op.apply(u)?.into_values();
        let uv = u.values();
        for i in 0..g.len() {
            g[i] -= self.load[i];
        }
        if let Some(p) = &self.lower_pen {
            for i in 0..g.len() {
                g[i] += p.zeta_hd[i] * (p.theta.eval((uv[i] - p.bound[i]) / p.eps) - 1.0);
            }
        }
        if let Some(p) = &self.upper_pen {
            for i in 0..g.len() {
                g[i] += p.zeta_hd[i] * (1.0 - p.theta.eval((p.bound[i] - uv[i]) / p.eps));
            }
        }
        Ok(g)
    }

    fn hessian(&self, u: &Field) -> Result<DMatrix<f64>> {
        let md = self.op.max_delta(u);
        let floor = if md > 0.0 { 1e-12 * md } else { 1e-8 };
        let mut h = self.op.hessian(u, floor)?;
        let uv = u.values();
        if let Some(p) = &self.lower_pen {
            for i in 0..uv.len() {
                h[(i, i)] += p.zeta_hd[i] * p.theta.slope((uv[i] - p.bound[i]) / p.eps) / p.eps;
            }
        }
        if let Some(p) = &self.upper_pen {
            for i in 0..uv.len() {
                h[(i, i)] += p.zeta_hd[i] * p.theta.slope((p.bound[i] - uv[i]) / p.eps) / p.eps;
            }
        }
        Ok(h)
    }
}

struct Bounds<'b> {
    lower: Option<&'b [Option<f64>]>,
    upper: Option<&'b [Option<f64>]>,
}

impl Bounds<'_> {
    fn lo(&self, i: usize) -> Option<f64> {
        self.lower.and_then(|l| l[i])
    }

    fn hi(&self, i: usize) -> Option<f64> {
        self.upper.and_then(|u| u[i])
    }

    fn project(&self, i: usize, x: f64) -> f64 {
        let mut x = x;
        if let Some(l) = self.lo(i) {
            x = x.max(l);
        }
        if let Some(h) = self.hi(i) {
            x = x.min(h);
        }
        x
    }

    /// Room to move down and up at node `i`, zeroed within `band` of a bound.
    fn room(&self, i: usize, x: f64, band: f64) -> (f64, f64) {
        let down = self.lo(i).map_or(f64::INFINITY, |l| if x - l <= band { 0.0 } else { x - l });
        let up = self.hi(i).map_or(f64::INFINITY, |h| if h - x <= band { 0.0 } else { h - x });
        (down, up)
    }

    fn residual(&self, u: &[f64], g: &[f64], tol: f64) -> f64 {
        let band = ACTIVE_FACTOR * tol;
        (0..u.len())
            .map(|i| {
                let (down, up) = self.room(i, u[i], band);
                g[i].clamp(-up, down).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Euclidean norm of the projected residual, the merit used when energy
    /// differences drop below roundoff.
    fn residual_l2(&self, u: &[f64], g: &[f64], tol: f64) -> f64 {
        let band = ACTIVE_FACTOR * tol;
        (0..u.len())
            .map(|i| {
                let (down, up) = self.room(i, u[i], band);
                g[i].clamp(-up, down).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    fn active_counts(&self, u: &[f64], tol: f64) -> (usize, usize) {
        let band = ACTIVE_FACTOR * tol;
        let lo = (0..u.len()).filter(|&i| self.lo(i).is_some_and(|l| u[i] - l <= band)).count();
        let hi = (0..u.len()).filter(|&i| self.hi(i).is_some_and(|h| h - u[i] <= band)).count();
        (lo, hi)
    }
}

struct Outcome {
    u: Field,
    iterations: usize,
    residual: f64,
    floor: f64,
    fallbacks: usize,
}

fn minimize(obj: &Objective, bx: &Bounds, u0: &Field, cfg: &SolverConfig) -> Result<Outcome> {
    cfg.validate()?;
    let grid = obj.op.grid();
    let n = u0.len();
    let mut u = Field::new(grid, (0..n).map(|i| bx.project(i, u0[i])).collect())?;
    let mut g = obj.gradient(&u)?;
    let mut res = bx.residual(u.values(), &g, cfg.tol);
    let mut fallbacks = 0;
    let mut floor = 0.0;
    for it in 0..cfg.max_iters {
        if res <= cfg.tol {
            return Ok(Outcome { u, iterations: it, residual: res, floor, fallbacks });
        }
        floor = obj.op.apply_noise(&u)?.norm_inf();
        if res <= floor {
            return Ok(Outcome { u, iterations: it, residual: res, floor, fallbacks });
        }
        let h = obj.hessian(&u)?;
        let diag: Vec<f64> = (0..n).map(|i| h[(i, i)].max(f64::MIN_POSITIVE)).collect();
        let uv = u.values();

        // binding set: near a bound with the gradient pushing into it
        let scaled_gap = (0..n)
            .map(|i| (uv[i] - bx.project(i, uv[i] - g[i] / diag[i])).abs())
            .fold(0.0, f64::max);
        let eps_k = scaled_gap.min(1e-3);
        let binding: Vec<bool> = (0..n)
            .map(|i| {
                bx.lo(i).is_some_and(|l| uv[i] - l <= eps_k && g[i] > 0.0)
                    || bx.hi(i).is_some_and(|hh| hh - uv[i] <= eps_k && g[i] < 0.0)
            })
            .collect();
        let free: Vec<usize> = (0..n).filter(|&i| !binding[i]).collect();

        let newton = newton_direction(&h, &g, &free, &binding, &diag);
        let (e0, e_mag) = obj.value(&u)?;
        let mut accepted = None;
        if let Some(d) = newton {
            accepted = line_search(obj, bx, &u, &g, &d, &binding, e0, e_mag, cfg)?;
        }
        if accepted.is_none() {
            fallbacks += 1;
            let d: Vec<f64> = (0..n).map(|i| -g[i] / diag[i]).collect();
            let arc = vec![true; n];
            accepted = line_search(obj, bx, &u, &g, &d, &arc, e0, e_mag, cfg)?;
        }
        match accepted {
            Some((un, gn, rn)) => {
                u = un;
                g = gn;
                res = rn;
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: it + 1,
                    residual: res,
                    tolerance: cfg.tol,
                })
            }
        }
    }
    if res <= cfg.tol {
        return Ok(Outcome { u, iterations: cfg.max_iters, residual: res, floor, fallbacks });
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iters,
        residual: res,
        tolerance: cfg.tol,
    })
}

fn newton_direction(
    h: &DMatrix<f64>,
    g: &[f64],
    free: &[usize],
    binding: &[bool],
    diag: &[f64],
) -> Option<Vec<f64>> {
    let n = g.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        if binding[i] {
            d[i] = -g[i] / diag[i];
        }
    }
    if !free.is_empty() {
        let m = free.len();
        let hf = DMatrix::from_fn(m, m, |a, b| h[(free[a], free[b])]);
        let rhs = DVector::from_fn(m, |a, _| -g[free[a]]);
        let chol = hf.cholesky()?;
        let sol = chol.solve(&rhs);
        for (a, &i) in free.iter().enumerate() {
            d[i] = sol[a];
        }
    }
    d.iter().all(|x| x.is_finite()).then_some(d)
}

#[allow(clippy::too_many_arguments)]
fn line_search(
    obj: &Objective,
    bx: &Bounds,
    u: &Field,
    g: &[f64],
    d: &[f64],
    binding: &[bool],
    e0: f64,
    e_mag: f64,
    cfg: &SolverConfig,
) -> Result<Option<(Field, Vec<f64>, f64)>> {
    let grid = obj.op.grid();
    let n = d.len();
    let uv = u.values();
    let (mut alpha, beta, c, fixed) = match cfg.step_rule {
        StepRule::Fixed(a) => (a, 0.5, 0.0, true),
        StepRule::Backtracking { beta, c } => (1.0, beta, c, false),
    };
    let roundoff = 1e-13 * e_mag.max(f64::MIN_POSITIVE);
    let merit0 = bx.residual_l2(uv, g, cfg.tol);
    while alpha >= 1e-20 {
        let trial: Vec<f64> = (0..n).map(|i| bx.project(i, uv[i] + alpha * d[i])).collect();
        if trial.iter().any(|x| !x.is_finite()) {
            alpha *= beta;
            continue;
        }
        let ut = Field::new(grid, trial)?;
        let et = obj.value(&ut)?.0;
        let mut decrease = 0.0;
        for i in 0..n {
            decrease += if binding[i] {
                g[i] * (uv[i] - ut[i])
            } else {
                -g[i] * alpha * d[i]
            };
        }
        let armijo = e0 - et >= c * decrease && decrease > 0.0;
        if fixed || armijo {
            let gt = obj.gradient(&ut)?;
            let rt = bx.residual(ut.values(), &gt, cfg.tol);
            return Ok(Some((ut, gt, rt)));
        }
        if et <= e0 + roundoff {
            // energy differences are below roundoff: judge by the residual
            let gt = obj.gradient(&ut)?;
            if bx.residual_l2(ut.values(), &gt, cfg.tol) < merit0 {
                let rt = bx.residual(ut.values(), &gt, cfg.tol);
                return Ok(Some((ut, gt, rt)));
            }
        }
        alpha *= beta;
    }
    Ok(None)
}

fn hd_load(op: &LgOperator, f: &Field) -> Result<Vec<f64>> {
    f.check_grid(op.grid())?;
    let hd = op.grid().cell_volume();
    Ok(f.values().iter().map(|v| v * hd).collect())
}

fn finish(op: &LgOperator, f: &Field, bx: &Bounds, out: Outcome, tol: f64) -> Result<Solution> {
    let energy = op.energy(&out.u, Some(f))?;
    let (active_lower, active_upper) = bx.active_counts(out.u.values(), tol);
    Ok(Solution {
        u: out.u,
        report: SolveReport {
            iterations: out.iterations,
            residual: out.residual,
            energy,
            active_lower,
            active_upper,
            lewy_stampacchia_violation: None,
            zeta_deficient_nodes: None,
            residual_floor: out.floor,
            gradient_fallbacks: out.fallbacks,
        },
    })
}

/// Unique minimizer of `E(u) − Σ f u h^d`, i.e. `L u = f·h^d` nodewise.
pub fn solve_dirichlet(op: &LgOperator, f: &Field, cfg: &SolverConfig) -> Result<Solution> {
    let obj = Objective { op, load: hd_load(op, f)?, lower_pen: None, upper_pen: None };
    let bx = Bounds { lower: None, upper: None };
    let out = minimize(&obj, &bx, &Field::zeros(op.grid()), cfg)?;
    finish(op, f, &bx, out, cfg.tol)
}

/// Minimizer over `{ψ ≤ u ≤ φ}` with optional, possibly partial bounds.
pub fn solve_constrained(
    op: &LgOperator,
    f: &Field,
    lower: Option<&Obstacle>,
    upper: Option<&Obstacle>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    let grid = op.grid();
    for o in lower.iter().chain(upper.iter()) {
        if o.grid != grid.id() {
            return Err(Error::Contract("obstacle belongs to a different grid".into()));
        }
    }
    if let (Some(l), Some(h)) = (lower, upper) {
        for i in 0..grid.n_interior() {
            if let (Some(a), Some(b)) = (l.get(i), h.get(i)) {
                if a > b {
                    return Err(Error::Contract(format!(
                        "infeasible obstacles: psi = {a} > phi = {b} at node {i}"
                    )));
                }
            }
        }
    }
    let obj = Objective { op, load: hd_load(op, f)?, lower_pen: None, upper_pen: None };
    let bx = Bounds {
        lower: lower.map(|o| o.values()),
        upper: upper.map(|o| o.values()),
    };
    let out = minimize(&obj, &bx, &Field::zeros(grid), cfg)?;
    let mut sol = finish(op, f, &bx, out, cfg.tol)?;
    let psi = lower.map(|o| o.to_field(grid));
    let phi = upper.map(|o| o.to_field(grid));
    if psi.as_ref().is_none_or(Option::is_some) && phi.as_ref().is_none_or(Option::is_some) {
        sol.report.lewy_stampacchia_violation = Some(lewy_stampacchia_excess(
            op,
            &sol.u,
            f,
            psi.flatten().as_ref(),
            phi.flatten().as_ref(),
        )?);
    }
    Ok(sol)
}

/// Projected-descent reference solver for `ψ ≤ u (≤ φ)`.
pub fn solve_obstacle_projected(
    op: &LgOperator,
    f: &Field,
    psi: &Field,
    phi: Option<&Field>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    let lo = Obstacle::from_field(psi);
    let hi = phi.map(Obstacle::from_field);
    solve_constrained(op, f, Some(&lo), hi.as_ref(), cfg)
}

/// Largest excess of `L u` over the Lewy–Stampacchia bounds
/// `min(f h^d, L φ) ≤ L u ≤ max(f h^d, L ψ)`, per node, never negative.
pub fn lewy_stampacchia_excess(
    op: &LgOperator,
    u: &Field,
    f: &Field,
    psi: Option<&Field>,
    phi: Option<&Field>,
) -> Result<f64> {
    let (lo, hi) = lewy_stampacchia_sides(op, u, f, psi, phi)?;
    Ok(lo.max(hi))
}

/// Worst excess below the lower and above the upper Lewy–Stampacchia bound.
pub fn lewy_stampacchia_sides(
    op: &LgOperator,
    u: &Field,
    f: &Field,
    psi: Option<&Field>,
    phi: Option<&Field>,
) -> Result<(f64, f64)> {
    let r = op.apply(u)?;
    let fh = hd_load(op, f)?;
    let lpsi = psi.map(|p| op.apply(p)).transpose()?;
    let lphi = phi.map(|p| op.apply(p)).transpose()?;
    let mut lo_ex: f64 = 0.0;
    let mut hi_ex: f64 = 0.0;
    for i in 0..r.len() {
        let upper = lpsi.as_ref().map_or(fh[i], |l| fh[i].max(l[i]));
        let lower = lphi.as_ref().map_or(fh[i], |l| fh[i].min(l[i]));
        lo_ex = lo_ex.max(lower - r[i]);
        hi_ex = hi_ex.max(r[i] - upper);
    }
    Ok((lo_ex, hi_ex))
}

/// `ζ = (L ψ/h^d − f)⁺`, the smallest weight keeping `u_ε ≥ ψ`.
pub fn zeta_auto(op: &LgOperator, f: &Field, psi: &Field) -> Result<Field> {
    let hd = op.grid().cell_volume();
    let l = op.apply(psi)?;
    f.check_same(&l)?;
    Ok(l.zip_map(f, |a, b| (a / hd - b).max(0.0)))
}

/// `ζ_φ = (f − L φ/h^d)⁺` for an upper obstacle.
pub fn zeta_auto_upper(op: &LgOperator, f: &Field, phi: &Field) -> Result<Field> {
    let hd = op.grid().cell_volume();
    let l = op.apply(phi)?;
    f.check_same(&l)?;
    Ok(l.zip_map(f, |a, b| (b - a / hd).max(0.0)))
}

fn deficient(zeta: &Field, needed: &Field) -> usize {
    let scale = needed.norm_inf().max(1.0);
    zeta.values()
        .iter()
        .zip(needed.values())
        .filter(|(z, n)| **z < **n - 1e-12 * scale)
        .count()
}

/// Penalized one-obstacle problem
/// `L u + ζ θ_ε(u − ψ) h^d = (f + ζ) h^d`.
pub fn solve_obstacle_penalized(
    op: &LgOperator,
    f: &Field,
    psi: &Field,
    pen: &PenaltySpec,
    cfg: &SolverConfig,
) -> Result<Solution> {
    solve_two_obstacle_penalized(op, f, psi, None, pen, None, cfg)
}

/// Penalized two-obstacle problem
/// `L u + ζ_ψ θ_ε(u − ψ) h^d − ζ_φ θ_ε(φ − u) h^d = (f + ζ_ψ − ζ_φ) h^d`.
/// Without `φ` this is exactly the one-obstacle problem.
pub fn solve_two_obstacle_penalized(
    op: &LgOperator,
    f: &Field,
    psi: &Field,
    phi: Option<&Field>,
    pen_lo: &PenaltySpec,
    pen_hi: Option<&PenaltySpec>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    solve_penalized_from(op, f, psi, phi, pen_lo, pen_hi, &Field::zeros(op.grid()), cfg)
}

/// As [`solve_two_obstacle_penalized`], starting from `u0`.
#[allow(clippy::too_many_arguments)]
pub fn solve_penalized_from(
    op: &LgOperator,
    f: &Field,
    psi: &Field,
    phi: Option<&Field>,
    pen_lo: &PenaltySpec,
    pen_hi: Option<&PenaltySpec>,
    u0: &Field,
    cfg: &SolverConfig,
) -> Result<Solution> {
    let grid = op.grid();
    for x in [f, psi, &pen_lo.zeta, u0] {
        x.check_grid(grid)?;
    }
    let hd = grid.cell_volume();
    let upper = match (phi, pen_hi) {
        (Some(phi), Some(pen)) => {
            phi.check_grid(grid)?;
            pen.zeta.check_grid(grid)?;
            if let Some(i) = (0..psi.len()).find(|&i| psi[i] > phi[i]) {
                return Err(Error::Contract(format!(
                    "infeasible obstacles: psi = {} > phi = {} at node {i}",
                    psi[i], phi[i]
                )));
            }
            Some((phi, pen))
        }
        (None, None) => None,
        _ => {
            return Err(Error::Contract(
                "an upper obstacle needs its own penalty and vice versa".into(),
            ))
        }
    };
    let obj = Objective {
        op,
        load: hd_load(op, f)?,
        lower_pen: Some(PenaltyTerm {
            theta: pen_lo.theta,
            eps: pen_lo.epsilon,
            zeta_hd: pen_lo.zeta.values().iter().map(|z| z * hd).collect(),
            bound: psi.values(),
        }),
        upper_pen: upper.map(|(phi, pen)| PenaltyTerm {
            theta: pen.theta,
            eps: pen.epsilon,
            zeta_hd: pen.zeta.values().iter().map(|z| z * hd).collect(),
            bound: phi.values(),
        }),
    };
    let bx = Bounds { lower: None, upper: None };
    let out = minimize(&obj, &bx, u0, cfg)?;
    let mut sol = finish(op, f, &bx, out, cfg.tol)?;
    let mut short = deficient(&pen_lo.zeta, &zeta_auto(op, f, psi)?);
    if let Some((phi, pen)) = upper {
        short += deficient(&pen.zeta, &zeta_auto_upper(op, f, phi)?);
    }
    sol.report.zeta_deficient_nodes = Some(short);
    sol.report.lewy_stampacchia_violation =
        Some(lewy_stampacchia_excess(op, &sol.u, f, Some(psi), phi)?);
    Ok(sol)
}

/// Penalized solves along `cfg.epsilon_schedule`, each warm-started from
/// the previous one.
pub fn penalize_sweep(
    op: &LgOperator,
    f: &Field,
    psi: &Field,
    phi: Option<&Field>,
    pen_lo: &PenaltySpec,
    pen_hi: Option<&PenaltySpec>,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, Solution)>> {
    let mut out = Vec::with_capacity(cfg.epsilon_schedule.len());
    let mut u0 = Field::zeros(op.grid());
    for &eps in &cfg.epsilon_schedule {
        let lo = pen_lo.with_epsilon(eps)?;
        let hi = pen_hi.map(|p| p.with_epsilon(eps)).transpose()?;
        let sol = solve_penalized_from(op, f, psi, phi, &lo, hi.as_ref(), &u0, cfg)?;
        u0 = sol.u.clone();
        out.push((eps, sol));
    }
    Ok(out)
}

/// Vanishing level `d` of the Stampacchia lemma:
/// `d^γ = M·Ψ(0)^(δ−1)·2^(δγ/(δ−1))`.
pub fn stampacchia_level(m: f64, gamma: f64, delta: f64, psi0: f64) -> Result<f64> {
    if !(delta > 1.0) {
        return Err(Error::Domain(format!("stampacchia_level needs delta > 1 (got {delta})")));
    }
    if !(m > 0.0 && gamma > 0.0 && psi0 >= 0.0) {
        return Err(Error::Domain(format!(
            "stampacchia_level needs M > 0, gamma > 0, psi0 >= 0 (got {m}, {gamma}, {psi0})"
        )));
    }
    if psi0 == 0.0 {
        return Ok(0.0);
    }
    let dg = m * psi0.powf(delta - 1.0) * 2f64.powf(delta * gamma / (delta - 1.0));
    Ok(dg.powf(1.0 / gamma))
}

/// A-priori level bound measured from the level sets of a solution.
#[derive(Debug, Clone, Serialize)]
pub struct LevelBound {
    pub m: f64,
    pub gamma: f64,
    pub delta: f64,
    pub psi0: f64,
    /// Level `d` returned by [`stampacchia_level`].
    pub level: f64,
    pub max_u: f64,
}

/// Fits the smallest `M` with `Ψ(k) ≤ M Ψ(j)^δ/(k − j)^γ` over 65 sampled
/// levels of `Ψ(k) = h^d·#{u > k}` and reports the resulting level.
pub fn measured_level_bound(grid: &Grid, u: &Field, gamma: f64, delta: f64) -> Result<LevelBound> {
    u.check_grid(grid)?;
    let hd = grid.cell_volume();
    let top = u.max().max(0.0);
    let levels: Vec<f64> = (0..=64).map(|j| top * j as f64 / 64.0).collect();
    let psi: Vec<f64> = levels
        .iter()
        .map(|&k| hd * u.values().iter().filter(|&&v| v > k).count() as f64)
        .collect();
    let mut m: f64 = f64::MIN_POSITIVE;
    for a in 0..levels.len() {
        for b in a + 1..levels.len() {
            if psi[b] > 0.0 {
                m = m.max(psi[b] * (levels[b] - levels[a]).powf(gamma) / psi[a].powf(delta));
            }
        }
    }
    let level = stampacchia_level(m, gamma, delta, psi[0])?;
    Ok(LevelBound { m, gamma, delta, psi0: psi[0], level, max_u: top })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};
    use crate::kernel::KernelSpec;

    #[test]
    fn theta_constants() {
        assert_eq!(Theta::Clamp.c_theta(), 0.25);
        let c = Theta::Smoothstep.c_theta();
        let brute = (1..100_000)
            .map(|k| {
                let t = k as f64 / 100_000.0;
                (1.0 - Theta::Smoothstep.eval(t)) * t
            })
            .fold(0.0, f64::max);
        assert!((c - brute).abs() < 1e-9);
        for th in [Theta::Clamp, Theta::Smoothstep] {
            for t in [-1.0, 0.0, 0.3, 0.7, 1.0, 2.5] {
                let fd = (th.primitive(t + 1e-6) - th.primitive(t - 1e-6)) / 2e-6;
                assert!((fd - th.eval(t)).abs() < 1e-6, "{th:?} {t}");
            }
        }
    }

    #[test]
    fn stampacchia_examples() {
        assert_eq!(stampacchia_level(1.0, 1.0, 2.0, 1.0).unwrap(), 4.0);
        assert_eq!(stampacchia_level(1.0, 1.0, 2.0, 0.0).unwrap(), 0.0);
        assert!(matches!(stampacchia_level(1.0, 1.0, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dirichlet_zero_forcing() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.1, 0.5).with_exterior_factor(1.0)).unwrap();
        let k = KernelSpec::power(3.0, 1.0).unwrap();
        let op = LgOperator::new(&k, &g);
        let sol = solve_dirichlet(&op, &Field::zeros(&g), &SolverConfig::default()).unwrap();
        assert_eq!(sol.u, Field::zeros(&g));
        assert_eq!(sol.report.iterations, 0);
    }

    #[test]
    fn singleton_box() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.1, 0.5).with_exterior_factor(1.0)).unwrap();
        let k = KernelSpec::power(1.5, 1.0).unwrap();
        let op = LgOperator::new(&k, &g);
        let psi = g.sample_field("sin(3*x)").unwrap();
        let f = g.sample_field("1").unwrap();
        let sol = solve_obstacle_projected(&op, &f, &psi, Some(&psi), &SolverConfig::default()).unwrap();
        assert_eq!(sol.u, psi);
        let bad = psi.scale(0.5);
        assert!(matches!(
            solve_obstacle_projected(&op, &f, &psi, Some(&bad), &SolverConfig::default()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn negative_zeta_rejected() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.1, 0.5).with_exterior_factor(1.0)).unwrap();
        let z = Field::constant(&g, -1.0);
        assert!(matches!(PenaltySpec::new(Theta::Clamp, 0.1, z), Err(Error::Contract(_))));
    }
}
