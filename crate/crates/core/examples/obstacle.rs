//! One- and two-obstacle problems on the unit disc. A negative source
//! pulls the solution down onto a cap-shaped lower obstacle; adding a flat
//! upper obstacle clips it from above. Both solutions satisfy the
//! Lewy–Stampacchia bounds.

use fracobs::solvers::{solve_obstacle_projected, SolverConfig};
use fracobs::verify::check_lewy_stampacchia;
use fracobs::{build_grid, Domain, KernelSpec, LgOperator};

fn main() -> fracobs::Result<()> {
    let grid = build_grid(Domain::ball([0.0, 0.0], 0.5, 2, 1.0 / 16.0, 0.5).with_exterior_factor(1.0))?;
    println!("{} interior nodes, {} pairs", grid.n_interior(), grid.pairs.len());
    let kernel = KernelSpec::double_phase(2.0, 3.0, 1.0, 1.0)?;
    let op = LgOperator::new(&kernel, &grid);
    let cfg = SolverConfig::default();

    let f = grid.sample_field("-1 + 30*x")?;
    let psi = grid.sample_field("0.04 - 0.5*(x^2 + y^2)")?;
    let phi = grid.sample_field("0.05")?;

    let one = solve_obstacle_projected(&op, &f, &psi, None, &cfg)?;
    let two = solve_obstacle_projected(&op, &f, &psi, Some(&phi), &cfg)?;
    for (name, sol, upper) in [("one obstacle", &one, None), ("two obstacles", &two, Some(&phi))] {
        let ls = check_lewy_stampacchia(&op, &sol.u, &f, &psi, upper, 1e-8)?;
        println!(
            "{name}: {} iterations, contact {} below / {} above, max u {:.5}, Lewy-Stampacchia excess {:.2e} ({})",
            sol.report.iterations,
            sol.report.active_lower,
            sol.report.active_upper,
            sol.u.max(),
            ls.worst_violation,
            if ls.pass { "ok" } else { "FAIL" }
        );
    }
    Ok(())
}
