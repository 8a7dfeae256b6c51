//! Nonlocal capacities of nested intervals. For a bounded kernel the
//! capacity is squeezed between multiples of the fractional-Laplacian
//! capacity; for the constant kernel `g ≡ 1` both coincide.

use fracobs::capacity::{capacity_sandwich, capacity_with_potential, CompactSet};
use fracobs::solvers::SolverConfig;
use fracobs::{build_grid, BoundedShape, Domain, KernelSpec, LgOperator};

fn main() -> fracobs::Result<()> {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 64.0, 0.5))?;
    let cfg = SolverConfig::default();
    let kernel = KernelSpec::bounded(
        BoundedShape::Saturating {
            lo: 0.5.into(),
            hi: 2.0.into(),
        },
        0.5,
        2.0,
    )?;
    let op = LgOperator::new(&kernel, &grid);
    println!("{:>6} {:>6} {:>12} {:>12} {:>12} {:>12} {:>10}", "radius", "nodes", "C_s", "C^g_s", "lower", "upper", "off-E mu");
    for radius in [0.05, 0.1, 0.2, 0.3, 0.45] {
        let set = CompactSet::ball(&grid, [0.5, 0.0], radius)?;
        let (rep, _u) = capacity_with_potential(&op, &set, &cfg)?;
        let sw = capacity_sandwich(&op, &set, &cfg)?;
        println!(
            "{radius:>6} {:>6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>10.1e}",
            set.nodes().len(),
            sw.c_s,
            rep.capacity,
            sw.lower,
            sw.upper,
            rep.max_offsupport_mu
        );
    }

    let one = KernelSpec::constant(1.0)?;
    let op1 = LgOperator::new(&one, &grid);
    let set = CompactSet::ball(&grid, [0.3, 0.0], 0.1)?;
    let sw = capacity_sandwich(&op1, &set, &cfg)?;
    println!("g = 1: C^g_s = {:.12}, C_s = {:.12}", sw.c_g, sw.c_s);
    Ok(())
}
