mod common;

use common::{laplacian_matrix, random_field};
use fracobs::capacity::{
    capacity, capacity_measure, capacity_sandwich, capacity_with_potential, capacitary_potential,
    check_obstacle_capacity_estimates, l2cs_norm, s_capacity, CompactSet,
};
use fracobs::solvers::{Obstacle, SolverConfig};
use fracobs::verify::{brute_force_solve, standard_family};
use fracobs::{build_grid, BoundedShape, Domain, Field, Grid, KernelSpec, LgOperator};
use nalgebra::{DMatrix, DVector};

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn line(h: f64) -> Grid {
    build_grid(Domain::interval(0.0, 1.0, h, 0.5)).unwrap()
}

/// Capacitary potential of the `g ≡ 1` operator from the KKT system: on
/// the complement `F` of `E`, `A_FF u_F = −A_FE 1`.
fn linear_potential(grid: &Grid, set: &CompactSet) -> (DVector<f64>, f64) {
    let a = laplacian_matrix(grid);
    let n = grid.n_interior();
    let free: Vec<usize> = (0..n).filter(|&i| !set.contains(i)).collect();
    let mut aff = DMatrix::zeros(free.len(), free.len());
    let mut rhs = DVector::zeros(free.len());
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            aff[(r, c)] = a[(i, j)];
        }
        rhs[r] = -set.nodes().iter().map(|&j| a[(i, j)]).sum::<f64>();
    }
    let uf = aff.lu().solve(&rhs).unwrap();
    let mut u = DVector::from_element(n, 1.0);
    for (r, &i) in free.iter().enumerate() {
        u[i] = uf[r];
    }
    let cap = u.dot(&(&a * &u));
    (u, cap)
}

#[test]
fn central_node_potential_matches_linear_kkt() {
    let grid = line(0.1);
    let set = CompactSet::new(&grid, [grid.nearest_interior([0.5, 0.0])]).unwrap();
    let k = KernelSpec::laplacian();
    let op = LgOperator::new(&k, &grid);
    let (rep, u) = capacity_with_potential(&op, &set, &cfg()).unwrap();
    let (exact, cap) = linear_potential(&grid, &set);
    assert!(exact.iter().all(|&v| (0.0..=1.0).contains(&v)));
    for i in 0..grid.n_interior() {
        assert!((u[i] - exact[i]).abs() <= 1e-6, "node {i}");
    }
    assert!((rep.capacity - cap).abs() <= 1e-9 * cap);
    // symmetric domain and set: reflected potential
    let n = grid.n_interior();
    for i in 0..n {
        assert!((u[i] - u[n - 1 - i]).abs() <= 1e-9);
    }
}

#[test]
fn four_node_capacity_matches_brute_force() {
    let grid = line(0.2);
    assert_eq!(grid.n_interior(), 4);
    let set = CompactSet::new(&grid, [1]).unwrap();
    for name in ["p2", "p3", "bounded"] {
        let k = standard_family(name).unwrap();
        let op = LgOperator::new(&k, &grid);
        let lo = Obstacle::on_nodes(&grid, &[1], 1.0).unwrap();
        let b = brute_force_solve(&op, &Field::zeros(&grid), Some(&lo), None).unwrap();
        let c = capacity(&op, &set, &cfg()).unwrap();
        let cb = op.pairing(&b, &b).unwrap();
        assert!((c - cb).abs() <= 1e-6 * c, "{name}: {c} vs {cb}");
    }
}

#[test]
fn full_set_capacity_is_energy_of_one() {
    let grid = line(1.0 / 32.0);
    let k = KernelSpec::power(3.0, 1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let set = CompactSet::all(&grid);
    let (rep, u) = capacity_with_potential(&op, &set, &cfg()).unwrap();
    assert_eq!(u, Field::constant(&grid, 1.0));
    let one = Field::constant(&grid, 1.0);
    assert!((rep.capacity - op.pairing(&one, &one).unwrap()).abs() <= 1e-12 * rep.capacity);
    assert!((rep.mass - rep.capacity).abs() <= 1e-9 * rep.capacity);
}

#[test]
fn potential_and_measure_properties() {
    let grid = build_grid(Domain::ball([0.0, 0.0], 0.5, 2, 1.0 / 16.0, 0.5).with_exterior_factor(1.0)).unwrap();
    let set = CompactSet::ball(&grid, [0.1, -0.05], 0.15).unwrap();
    for name in ["p1.5", "p2", "double_phase"] {
        let k = standard_family(name).unwrap();
        let op = LgOperator::new(&k, &grid);
        let (rep, u) = capacity_with_potential(&op, &set, &cfg()).unwrap();
        assert!(rep.set_deviation <= 1e-8);
        assert!(rep.potential_excess <= 1e-8);
        assert!(rep.min_mu >= -1e-8);
        assert!(rep.max_offsupport_mu <= 1e-6 * rep.max_mu);
        assert!((rep.capacity - rep.mass).abs() <= 1e-6 * rep.capacity, "{name}: {rep:?}");
        capacity_measure(&op, &u, &set).unwrap();
    }
}

#[test]
fn capacity_is_monotone_and_subadditive() {
    let grid = line(1.0 / 32.0);
    let k = KernelSpec::laplacian();
    let op = LgOperator::new(&k, &grid);
    let a = CompactSet::ball(&grid, [0.25, 0.0], 0.06).unwrap();
    let b = CompactSet::ball(&grid, [0.7, 0.0], 0.1).unwrap();
    let ab = a.union(&b);
    let ca = capacity(&op, &a, &cfg()).unwrap();
    let cb = capacity(&op, &b, &cfg()).unwrap();
    let cab = capacity(&op, &ab, &cfg()).unwrap();
    assert!(ca <= cab && cb <= cab);
    assert!(cab <= ca + cb + 1e-9);
}

#[test]
fn sandwich_on_random_sets() {
    let grid = line(1.0 / 32.0);
    let k = KernelSpec::bounded(BoundedShape::Expr(fracobs::expr::Expression::parse(
        "0.5 + (1 + 0.5*sin(3*x + 2*y))*r^2/(1 + r^2)",
        fracobs::kernel::SHAPE_VARS,
    ).unwrap()), 0.5, 2.0)
    .unwrap();
    let op = LgOperator::new(&k, &grid);
    for seed in 0..5u64 {
        let c = 0.2 + 0.6 * (seed as f64 / 5.0);
        let set = CompactSet::ball(&grid, [c, 0.0], 0.05 + 0.02 * seed as f64).unwrap();
        let rep = capacity_sandwich(&op, &set, &cfg()).unwrap();
        assert!(rep.pass, "{rep:?}");
    }
}

#[test]
fn unit_kernel_capacity_equals_s_capacity() {
    let grid = line(1.0 / 32.0);
    let k = KernelSpec::constant(1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let set = CompactSet::ball(&grid, [0.4, 0.0], 0.1).unwrap();
    let rep = capacity_sandwich(&op, &set, &cfg()).unwrap();
    assert!((rep.c_g - rep.c_s).abs() <= 1e-9 * rep.c_s);
    assert!((s_capacity(&grid, &set, &cfg()).unwrap() - rep.c_s).abs() <= 1e-12 * rep.c_s);
}

#[test]
fn non_bounded_kernel_has_no_sandwich() {
    let grid = line(0.1);
    let k = KernelSpec::power(3.0, 1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let set = CompactSet::new(&grid, [4]).unwrap();
    assert!(capacity_sandwich(&op, &set, &cfg()).is_err());
}

#[test]
fn l2cs_norm_is_monotone() {
    let grid = line(1.0 / 32.0);
    assert_eq!(l2cs_norm(&grid, &Field::zeros(&grid), &cfg()).unwrap(), 0.0);
    for seed in 0..5 {
        let a = random_field(&grid, seed, -1.0, 1.0);
        let b = a.map(|v| v.abs() + 0.1);
        let na = l2cs_norm(&grid, &a, &cfg()).unwrap();
        let nb = l2cs_norm(&grid, &b, &cfg()).unwrap();
        assert!(na <= nb + 1e-9);
    }
}

#[test]
fn estimates_trivial_cases() {
    let grid = line(1.0 / 32.0);
    let k = KernelSpec::constant(1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let neg = grid.sample_field("-0.1 - x").unwrap();
    let rep = check_obstacle_capacity_estimates(&op, &neg, None, &cfg()).unwrap();
    assert!(rep.passed());

    let psi = grid.sample_field("0.2 - (x - 0.5)^2").unwrap();
    let rep = check_obstacle_capacity_estimates(&op, &psi, Some(&psi), &cfg()).unwrap();
    assert!(rep.passed());
    let d = rep.clauses.iter().find(|c| c.name.starts_with("(d)")).unwrap();
    assert_eq!(d.lhs, 0.0);
    assert_eq!(d.rhs, 0.0);
}

#[test]
fn potential_is_one_on_the_set() {
    let grid = line(1.0 / 16.0);
    let k = KernelSpec::laplacian();
    let op = LgOperator::new(&k, &grid);
    let set = CompactSet::new(&grid, [3, 4]).unwrap();
    let sol = capacitary_potential(&op, &set, &cfg()).unwrap();
    assert_eq!(sol.u[3], 1.0);
    assert_eq!(sol.u[4], 1.0);
}
