//! The discrete `L²_{C_s}` norm of a few functions, and the capacity
//! estimates for obstacle solutions built from them.

use fracobs::capacity::{check_obstacle_capacity_estimates, l2cs_norm};
use fracobs::solvers::SolverConfig;
use fracobs::{build_grid, BoundedShape, Domain, KernelSpec, LgOperator};

fn main() -> fracobs::Result<()> {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 64.0, 0.5))?;
    let cfg = SolverConfig::default();
    for expr in ["0.5", "sin(6*x)", "exp(-50*(x-0.3)^2)", "max(0, 0.2 - abs(x - 0.7))"] {
        let phi = grid.sample_field(expr)?;
        println!("|{expr}|_C = {:.6}", l2cs_norm(&grid, &phi, &cfg)?);
    }

    let kernel = KernelSpec::bounded(BoundedShape::Constant(1.5.into()), 1.5, 1.5)?;
    let op = LgOperator::new(&kernel, &grid);
    let psi = grid.sample_field("0.3 - 2*(x - 0.5)^2")?;
    let psi_hat = grid.sample_field("0.2 - 2*(x - 0.4)^2")?;
    let report = check_obstacle_capacity_estimates(&op, &psi, Some(&psi_hat), &cfg)?;
    for c in &report.clauses {
        println!("clause {}: lhs {:.6e} rhs {:.6e} {}", c.name, c.lhs, c.rhs, if c.pass { "ok" } else { "FAIL" });
    }
    Ok(())
}
