//! Dirichlet problem for the fractional p-Laplacian on (0, 1) with a
//! constant source, for several p. Prints the solver report and the
//! maximum of the solution, and writes the fields as CSV.

use fracobs::io::write_field_file;
use fracobs::solvers::{solve_dirichlet, SolverConfig};
use fracobs::{build_grid, Domain, Field, KernelSpec, LgOperator};

fn main() -> fracobs::Result<()> {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 64.0, 0.5))?;
    let f = Field::constant(&grid, 1.0);
    let cfg = SolverConfig::default();
    let dir = std::env::temp_dir().join("fracobs-dirichlet");
    std::fs::create_dir_all(&dir)?;
    for p in [1.5, 2.0, 3.0] {
        let kernel = KernelSpec::power(p, 1.0)?;
        let op = LgOperator::new(&kernel, &grid);
        let sol = solve_dirichlet(&op, &f, &cfg)?;
        println!(
            "p = {p}: max u = {:.6}, iterations {}, residual {:.2e}, energy {:.6e}",
            sol.u.max(),
            sol.report.iterations,
            sol.report.residual,
            sol.report.energy
        );
        write_field_file(&grid, &sol.u, &dir.join(format!("u_p{p}.csv")))?;
    }
    println!("fields written to {}", dir.display());
    Ok(())
}
