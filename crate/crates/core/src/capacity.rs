//! Nonlocal capacities and the capacity-based obstacle estimates.
//!
//! The capacitary potential of a node set `E` minimizes the operator
//! energy over `{u ≥ 1 on E}` with no constraint elsewhere. Its operator
//! value is the capacity measure, a nonnegative measure carried by `E`
//! whose total mass is the capacity `⟨L u_E, u_E⟩`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::Grid;
use crate::kernel::KernelSpec;
use crate::operator::{seminorm, LgOperator};
use crate::solvers::{solve_constrained, solve_obstacle_projected, Obstacle, Solution, SolverConfig, ACTIVE_FACTOR};

/// Relative support threshold of a capacity measure.
pub const SUPPORT_REL_TOL: f64 = 1e-7;

/// A nonempty set of interior nodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CompactSet {
    nodes: Vec<usize>,
}

impl CompactSet {
    pub fn new(grid: &Grid, nodes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut nodes: Vec<usize> = nodes.into_iter().collect();
        nodes.sort_unstable();
        nodes.dedup();
        if nodes.is_empty() {
            return Err(Error::Contract("compact set must be nonempty".into()));
        }
        if let Some(&i) = nodes.iter().find(|&&i| i >= grid.n_interior()) {
            return Err(Error::Contract(format!("node {i} is not an interior node")));
        }
        Ok(CompactSet { nodes })
    }

    /// All interior nodes.
    pub fn all(grid: &Grid) -> Self {
        CompactSet { nodes: (0..grid.n_interior()).collect() }
    }

    /// Interior nodes in the closed ball `|x − center| ≤ radius`.
    pub fn ball(grid: &Grid, center: [f64; 2], radius: f64) -> Result<Self> {
        let nodes = (0..grid.n_interior())
            .filter(|&i| crate::grid::dist(grid.interior[i], center) <= radius * (1.0 + 1e-12));
        CompactSet::new(grid, nodes)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn contains(&self, i: usize) -> bool {
        self.nodes.binary_search(&i).is_ok()
    }

    pub fn is_subset(&self, other: &CompactSet) -> bool {
        self.nodes.iter().all(|&i| other.contains(i))
    }

    pub fn union(&self, other: &CompactSet) -> CompactSet {
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(&other.nodes);
        nodes.sort_unstable();
        nodes.dedup();
        CompactSet { nodes }
    }
}

/// Nodal masses `μ_i` with the nodes above the support threshold.
#[derive(Debug, Clone, Serialize)]
pub struct DiscreteMeasure {
    pub masses: Vec<f64>,
    pub support_tol: f64,
    pub support: Vec<usize>,
}

impl DiscreteMeasure {
    /// `μ = L u` without any checks.
    pub fn of(op: &LgOperator, u: &Field) -> Result<Self> {
        let masses = op.apply(u)?.into_values();
        let scale = masses.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let support_tol = SUPPORT_REL_TOL * scale;
        let support = (0..masses.len()).filter(|&i| masses[i] > support_tol).collect();
        Ok(DiscreteMeasure { masses, support_tol, support })
    }

    pub fn total(&self) -> f64 {
        let mut acc = crate::operator::Kahan::default();
        for &m in &self.masses {
            acc.add(m);
        }
        acc.value()
    }

    pub fn max(&self) -> f64 {
        self.masses.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.masses.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `|μ_i|` off `set`, with its node.
    pub fn max_off(&self, set: &CompactSet) -> (f64, Option<usize>) {
        (0..self.masses.len())
            .filter(|&i| !set.contains(i))
            .map(|i| (self.masses[i].abs(), Some(i)))
            .fold((0.0, None), |a, b| if b.0 > a.0 { b } else { a })
    }
}

/// Minimizer of the operator energy over `{u ≥ 1 on E}`.
pub fn capacitary_potential(op: &LgOperator, set: &CompactSet, cfg: &SolverConfig) -> Result<Solution> {
    let grid = op.grid();
    let lower = Obstacle::on_nodes(grid, set.nodes(), 1.0)?;
    solve_constrained(op, &Field::zeros(grid), Some(&lower), None, cfg)
}

/// `μ = L u_E`, checked to be nonnegative and carried by `E` at the
/// support tolerance.
pub fn capacity_measure(op: &LgOperator, u: &Field, set: &CompactSet) -> Result<DiscreteMeasure> {
    let mu = DiscreteMeasure::of(op, u)?;
    let (off, node) = mu.max_off(set);
    if off > mu.support_tol {
        return Err(Error::Property(format!(
            "capacity measure has mass {off:e} off the set at node {} (support tolerance {:e})",
            node.unwrap_or(0),
            mu.support_tol
        )));
    }
    if let Some(i) = (0..mu.masses.len()).find(|&i| mu.masses[i] < -mu.support_tol) {
        return Err(Error::Property(format!(
            "capacity measure is negative at node {i}: {:e}",
            mu.masses[i]
        )));
    }
    Ok(mu)
}

#[derive(Debug, Clone, Serialize)]
pub struct CapacityReport {
    /// `⟨L u_E, u_E⟩`.
    pub capacity: f64,
    /// `Σ μ_i`.
    pub mass: f64,
    pub max_offsupport_mu: f64,
    pub min_mu: f64,
    pub max_mu: f64,
    /// Largest deviation of the potential from `[0, 1]`.
    pub potential_excess: f64,
    /// Largest `|u − 1|` on `E`.
    pub set_deviation: f64,
    pub iterations: usize,
}

/// Capacity of `E` together with the potential and measure diagnostics.
pub fn capacity_with_potential(
    op: &LgOperator,
    set: &CompactSet,
    cfg: &SolverConfig,
) -> Result<(CapacityReport, Field)> {
    let sol = capacitary_potential(op, set, cfg)?;
    let u = sol.u;
    let mu = DiscreteMeasure::of(op, &u)?;
    let capacity = op.pairing(&u, &u)?;
    let potential_excess = u
        .values()
        .iter()
        .map(|&v| (-v).max(v - 1.0).max(0.0))
        .fold(0.0, f64::max);
    let set_deviation = set.nodes().iter().map(|&i| (u[i] - 1.0).abs()).fold(0.0, f64::max);
    let report = CapacityReport {
        capacity,
        mass: mu.total(),
        max_offsupport_mu: mu.max_off(set).0,
        min_mu: mu.min(),
        max_mu: mu.max(),
        potential_excess,
        set_deviation,
        iterations: sol.report.iterations,
    };
    Ok((report, u))
}

/// `C^g_s(E) = ⟨L u_E, u_E⟩`.
pub fn capacity(op: &LgOperator, set: &CompactSet, cfg: &SolverConfig) -> Result<f64> {
    Ok(capacity_with_potential(op, set, cfg)?.0.capacity)
}

/// Capacity for the fractional Laplacian `g ≡ 1`.
pub fn s_capacity(grid: &Grid, set: &CompactSet, cfg: &SolverConfig) -> Result<f64> {
    let k = KernelSpec::laplacian();
    capacity(&LgOperator::new(&k, grid), set, cfg)
}

fn gamma_bounds(op: &LgOperator) -> Result<(f64, f64)> {
    op.kernel()
        .gamma_bounds()
        .ok_or_else(|| Error::Domain("operation needs a bounded kernel with known gamma bounds".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub c_s: f64,
    pub c_g: f64,
    /// `γ_*·C_s`.
    pub lower: f64,
    /// `(γ^*²/γ_*)·C_s`.
    pub upper: f64,
    /// Relative excess beyond either bound, `≤ 0` when both hold.
    pub violation: f64,
    pub pass: bool,
}

/// Relative slack of the sandwich check.
pub const SANDWICH_REL_TOL: f64 = 1e-6;

/// `γ_*·C_s(E) ≤ C^g_s(E) ≤ (γ^*²/γ_*)·C_s(E)` for a bounded kernel.
pub fn capacity_sandwich(op: &LgOperator, set: &CompactSet, cfg: &SolverConfig) -> Result<SandwichReport> {
    let (glo, ghi) = gamma_bounds(op)?;
    let c_g = capacity(op, set, cfg)?;
    let c_s = s_capacity(op.grid(), set, cfg)?;
    let lower = glo * c_s;
    let upper = ghi * ghi / glo * c_s;
    let violation = ((lower - c_g) / lower).max((c_g - upper) / upper);
    Ok(SandwichReport {
        c_s,
        c_g,
        lower,
        upper,
        violation,
        pass: violation <= SANDWICH_REL_TOL,
    })
}

/// Discrete `L²_{C_s}` norm: the `H^s` norm of the smallest `g ≡ 1`
/// majorant of `|φ|`.
pub fn l2cs_norm(grid: &Grid, phi: &Field, cfg: &SolverConfig) -> Result<f64> {
    let k = KernelSpec::laplacian();
    let op = LgOperator::new(&k, grid);
    let sol = solve_obstacle_projected(&op, &Field::zeros(grid), &phi.abs(), None, cfg)?;
    seminorm(grid, &sol.u, 2.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct Clause {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs − rhs`; the clause holds when this is at most `tolerance`.
    pub violation: f64,
    pub tolerance: f64,
    pub worst_node: Option<usize>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub clauses: Vec<Clause>,
}

impl EstimateReport {
    pub fn passed(&self) -> bool {
        self.clauses.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<&Clause> {
        self.clauses.iter().find(|c| !c.pass)
    }
}

fn clause(name: &'static str, lhs: f64, rhs: f64, tolerance: f64, worst_node: Option<usize>) -> Clause {
    let violation = lhs - rhs;
    Clause { name, lhs, rhs, violation, tolerance, worst_node, pass: violation <= tolerance }
}

/// Checks the capacity estimates for the zero-forcing obstacle problem
/// with obstacle `ψ` (and, for clause (d), a second obstacle `ψ̂`):
///
/// - (a) `u ≥ 0`;
/// - (b) `‖u‖ ≤ (γ^*/γ_*)·‖ψ⁺‖_{L²_{C_s}}`;
/// - (c) `μ = L u ≥ 0`, carried by the coincidence set `{|u − ψ| ≤ 10·tol}`;
/// - (d) `‖u − û‖ ≤ (γ^*/γ_*)·(‖ψ‖ + ‖ψ̂‖)^{1/2}·‖ψ − ψ̂‖^{1/2}` with
///   `L²_{C_s}` norms on the right.
///
/// Norms on the left are discrete `H^s` seminorms; each clause carries the
/// property tolerance `10·tol`.
pub fn check_obstacle_capacity_estimates(
    op: &LgOperator,
    psi: &Field,
    psi_hat: Option<&Field>,
    cfg: &SolverConfig,
) -> Result<EstimateReport> {
    let (glo, ghi) = gamma_bounds(op)?;
    let grid = op.grid();
    let ptol = ACTIVE_FACTOR * cfg.tol;
    let zero = Field::zeros(grid);
    let u = solve_obstacle_projected(op, &zero, psi, None, cfg)?.u;
    let mut clauses = Vec::new();

    let (umin, imin) = argmin(u.values());
    clauses.push(clause("(a) u >= 0", -umin, 0.0, ptol, imin));

    let norm_u = seminorm(grid, &u, 2.0)?;
    let rhs_b = ghi / glo * l2cs_norm(grid, &psi.positive_part(), cfg)?;
    clauses.push(clause("(b) |u| <= (g^*/g_*) |psi+|_L2Cs", norm_u, rhs_b, ptol, None));

    let mu = op.apply(&u)?;
    let (mu_min, i_neg) = argmin(mu.values());
    clauses.push(clause("(c) mu >= 0", -mu_min, 0.0, ptol, i_neg));
    let (off, i_off) = (0..u.len())
        .filter(|&i| (u[i] - psi[i]).abs() > ptol)
        .map(|i| (mu[i].abs(), Some(i)))
        .fold((0.0, None), |a, b| if b.0 > a.0 { b } else { a });
    clauses.push(clause("(c) supp mu in {u = psi}", off, 0.0, ptol, i_off));

    if let Some(psi_hat) = psi_hat {
        let u_hat = solve_obstacle_projected(op, &zero, psi_hat, None, cfg)?.u;
        let lhs = seminorm(grid, &u.sub(&u_hat), 2.0)?;
        let n_psi = l2cs_norm(grid, psi, cfg)?;
        let n_hat = l2cs_norm(grid, psi_hat, cfg)?;
        let n_diff = l2cs_norm(grid, &psi.sub(psi_hat), cfg)?;
        let rhs = ghi / glo * (n_psi + n_hat).sqrt() * n_diff.sqrt();
        clauses.push(clause("(d) |u - u^| <= k |psi - psi^|^(1/2)", lhs, rhs, ptol, None));
    }
    Ok(EstimateReport { clauses })
}

fn argmin(v: &[f64]) -> (f64, Option<usize>) {
    v.iter()
        .enumerate()
        .map(|(i, &x)| (x, Some(i)))
        .fold((f64::INFINITY, None), |a, b| if b.0 < a.0 { b } else { a })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};

    #[test]
    fn full_set_potential_is_one() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.1, 0.5).with_exterior_factor(1.0)).unwrap();
        let k = KernelSpec::power(2.0, 1.0).unwrap();
        let op = LgOperator::new(&k, &g);
        let e = CompactSet::all(&g);
        let (rep, u) = capacity_with_potential(&op, &e, &SolverConfig::default()).unwrap();
        assert_eq!(u, Field::constant(&g, 1.0));
        let direct = op.pairing(&u, &u).unwrap();
        assert_eq!(rep.capacity, direct);
        assert!((rep.mass - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn empty_set_rejected() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.1, 0.5)).unwrap();
        assert!(CompactSet::new(&g, []).is_err());
        assert!(CompactSet::new(&g, [1000]).is_err());
    }

    #[test]
    fn non_solution_measure_detected() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.1, 0.5).with_exterior_factor(1.0)).unwrap();
        let k = KernelSpec::laplacian();
        let op = LgOperator::new(&k, &g);
        let e = CompactSet::new(&g, [4]).unwrap();
        let mut u = Field::zeros(&g);
        u[4] = 1.0;
        assert!(matches!(capacity_measure(&op, &u, &e), Err(Error::Property(_))));
    }

    #[test]
    fn zero_obstacle_norm() {
        let g = build_grid(Domain::interval(0.0, 1.0, 0.1, 0.5).with_exterior_factor(1.0)).unwrap();
        assert_eq!(l2cs_norm(&g, &Field::zeros(&g), &SolverConfig::default()).unwrap(), 0.0);
    }
}
