//! Runs the property suite on the interval grid with reduced trial
//! counts. Pass a seed as the first argument to change the random data.

use fracobs::solvers::SolverConfig;
use fracobs::verify::{run_suite, SuitePlan, FAMILY_NAMES};
use fracobs::{build_grid, Domain};

fn main() -> fracobs::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 64.0, 0.5))?;
    let plan = SuitePlan {
        seed,
        tmonotonicity: 100,
        gradient: 10,
        comparison: 6,
        stability: 4,
        lewy_stampacchia: 4,
        lewy_stampacchia_tol: 1e-8,
    };
    let families: Vec<String> = FAMILY_NAMES.iter().map(|s| s.to_string()).collect();
    let reports = run_suite(&grid, &families, &plan, &SolverConfig::default())?;
    for r in &reports {
        println!(
            "{} {:<32} worst {:>11.3e}  tolerance {:.0e}  skipped {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.worst_violation,
            r.tolerance,
            r.skipped
        );
    }
    Ok(())
}
