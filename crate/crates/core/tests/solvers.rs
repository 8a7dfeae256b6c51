mod common;

use common::{laplacian_matrix, max_abs_diff, to_vec};
use fracobs::solvers::{
    measured_level_bound, penalize_sweep, solve_constrained, solve_dirichlet, solve_obstacle_penalized,
    solve_obstacle_projected, solve_two_obstacle_penalized, stampacchia_level, zeta_auto, zeta_auto_upper, Obstacle,
    PenaltySpec, SolverConfig, Theta,
};
use fracobs::verify::{brute_force_solve, standard_family, FAMILY_NAMES};
use fracobs::{build_grid, Domain, Error, Field, Grid, KernelSpec, LgOperator};

fn tiny(nodes: usize) -> Grid {
    let h = 1.0 / (nodes + 1) as f64;
    let g = build_grid(Domain::interval(0.0, 1.0, h, 0.5)).unwrap();
    assert_eq!(g.n_interior(), nodes);
    g
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

#[test]
fn three_node_laplacian_matches_linear_system() {
    let grid = tiny(3);
    let k = KernelSpec::laplacian();
    let op = LgOperator::new(&k, &grid);
    let f = grid.sample_field("1 + 2*x").unwrap();
    let a = laplacian_matrix(&grid);
    let rhs = to_vec(&f) * grid.cell_volume();
    let exact = a.lu().solve(&rhs).unwrap();
    let u = solve_dirichlet(&op, &f, &cfg()).unwrap().u;
    for i in 0..3 {
        assert!((u[i] - exact[i]).abs() <= 1e-9, "node {i}: {} vs {}", u[i], exact[i]);
    }
    let b = brute_force_solve(&op, &f, None, None).unwrap();
    assert!(max_abs_diff(&b, &u) <= 1e-5);
}

#[test]
fn dirichlet_matches_brute_force_for_every_family() {
    for n in [3, 4, 6] {
        let grid = tiny(n);
        let f = grid.sample_field("3*sin(5*x) + 1").unwrap();
        for name in FAMILY_NAMES {
            let k = standard_family(name).unwrap();
            let op = LgOperator::new(&k, &grid);
            let u = solve_dirichlet(&op, &f, &cfg()).unwrap().u;
            let b = brute_force_solve(&op, &f, None, None).unwrap();
            assert!(max_abs_diff(&u, &b) <= 1e-5, "{name}, {n} nodes: {}", max_abs_diff(&u, &b));
        }
    }
}

#[test]
fn obstacle_matches_brute_force() {
    let grid = tiny(4);
    let f = Field::zeros(&grid);
    let psi = grid.sample_field("0.3 - 3*(x - 0.45)^2").unwrap();
    let phi = grid.sample_field("0.25").unwrap();
    for name in FAMILY_NAMES {
        let k = standard_family(name).unwrap();
        let op = LgOperator::new(&k, &grid);
        let lo = Obstacle::from_field(&psi);
        let hi = Obstacle::from_field(&phi);
        let u = solve_obstacle_projected(&op, &f, &psi, None, &cfg()).unwrap().u;
        let b = brute_force_solve(&op, &f, Some(&lo), None).unwrap();
        assert!(max_abs_diff(&u, &b) <= 1e-5, "{name}");
        assert!(u.min() >= 0.0);
        // coincidence where ψ peaks
        let peak = (0..4).max_by(|&a, &b| psi[a].total_cmp(&psi[b])).unwrap();
        assert_eq!(u[peak], psi[peak]);

        let u2 = solve_obstacle_projected(&op, &f, &psi.zip_map(&phi, f64::min), Some(&phi), &cfg()).unwrap().u;
        let lo2 = Obstacle::from_field(&psi.zip_map(&phi, f64::min));
        let b2 = brute_force_solve(&op, &f, Some(&lo2), Some(&hi)).unwrap();
        assert!(max_abs_diff(&u2, &b2) <= 1e-5, "{name} two obstacles");
    }
}

#[test]
fn nonnegative_forcing_gives_nonnegative_solution() {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 32.0, 0.3)).unwrap();
    let f = grid.sample_field("max(0, 0.2 - abs(x - 0.3))").unwrap();
    for name in FAMILY_NAMES {
        let k = standard_family(name).unwrap();
        let op = LgOperator::new(&k, &grid);
        let u = solve_dirichlet(&op, &f, &cfg()).unwrap().u;
        assert!(u.min() >= 0.0, "{name}");
    }
}

#[test]
fn inactive_obstacle_returns_dirichlet_solution() {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 32.0, 0.5)).unwrap();
    let f = Field::constant(&grid, 1.0);
    let k = KernelSpec::power(3.0, 1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let d = solve_dirichlet(&op, &f, &cfg()).unwrap();
    let psi = d.u.map(|v| v - 0.05);
    let o = solve_obstacle_projected(&op, &f, &psi, None, &cfg()).unwrap();
    assert_eq!(o.report.active_lower, 0);
    assert!(max_abs_diff(&o.u, &d.u) <= 1e-9);
}

#[test]
fn coinciding_obstacles_pin_the_solution() {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 32.0, 0.5)).unwrap();
    let f = grid.sample_field("5*cos(7*x)").unwrap();
    let psi = grid.sample_field("0.1*sin(3*x)").unwrap();
    let k = KernelSpec::power(1.5, 1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let u = solve_obstacle_projected(&op, &f, &psi, Some(&psi), &cfg()).unwrap().u;
    assert_eq!(u, psi);

    let pen = PenaltySpec::new(Theta::Clamp, 1.0, zeta_auto(&op, &f, &psi).unwrap()).unwrap();
    let pen_hi = PenaltySpec::new(Theta::Clamp, 1.0, zeta_auto_upper(&op, &f, &psi).unwrap()).unwrap();
    let c = SolverConfig { epsilon_schedule: vec![1e-2, 1e-3, 1e-4, 1e-5], ..cfg() };
    let runs = penalize_sweep(&op, &f, &psi, Some(&psi), &pen, Some(&pen_hi), &c).unwrap();
    let errs: Vec<f64> = runs.iter().map(|(_, s)| max_abs_diff(&s.u, &psi)).collect();
    // with the Lewy–Stampacchia weights u_ε is squeezed onto ψ = φ for every ε
    assert!(errs.iter().all(|&e| e < 1e-12), "{errs:?}");
}

#[test]
fn infeasible_obstacles_are_rejected() {
    let grid = tiny(3);
    let k = KernelSpec::laplacian();
    let op = LgOperator::new(&k, &grid);
    let f = Field::zeros(&grid);
    let psi = Field::constant(&grid, 1.0);
    let phi = Field::constant(&grid, 0.5);
    assert!(matches!(
        solve_obstacle_projected(&op, &f, &psi, Some(&phi), &cfg()),
        Err(Error::Contract(_))
    ));
}

#[test]
fn budget_exhaustion_reports_last_residual() {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 32.0, 0.5)).unwrap();
    let k = KernelSpec::power(3.0, 1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let c = SolverConfig { max_iters: 1, ..cfg() };
    match solve_dirichlet(&op, &Field::constant(&grid, 1.0), &c) {
        Err(Error::NonConvergence { iterations, residual, .. }) => {
            assert_eq!(iterations, 1);
            assert!(residual > 0.0 && residual.is_finite());
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn partial_obstacles_constrain_only_their_nodes() {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 16.0, 0.5)).unwrap();
    let k = KernelSpec::laplacian();
    let op = LgOperator::new(&k, &grid);
    let f = Field::constant(&grid, -1.0);
    let lo = Obstacle::on_nodes(&grid, &[7], 0.05).unwrap();
    let sol = solve_constrained(&op, &f, Some(&lo), None, &cfg()).unwrap();
    assert!((sol.u[7] - 0.05).abs() < 1e-14);
    assert!(sol.report.lewy_stampacchia_violation.is_none());
    let r = op.apply(&sol.u).unwrap();
    let hd = grid.cell_volume();
    for i in (0..15).filter(|&i| i != 7) {
        assert!((r[i] + hd).abs() <= 1e-9);
    }
    assert!(r[7] + hd >= -1e-12);
}

#[test]
fn penalized_two_obstacle_matches_projected() {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 32.0, 0.5)).unwrap();
    let f = grid.sample_field("8*sin(9*x)").unwrap();
    let psi = grid.sample_field("0.02 - (x - 0.3)^2").unwrap();
    let phi = grid.sample_field("0.03 + 0.2*(x - 0.7)^2").unwrap();
    for name in FAMILY_NAMES {
        let k = standard_family(name).unwrap();
        let op = LgOperator::new(&k, &grid);
        let exact = solve_obstacle_projected(&op, &f, &psi, Some(&phi), &cfg()).unwrap().u;
        let lo = PenaltySpec::new(Theta::Clamp, 1e-4, zeta_auto(&op, &f, &psi).unwrap()).unwrap();
        let hi = PenaltySpec::new(Theta::Clamp, 1e-4, zeta_auto_upper(&op, &f, &phi).unwrap()).unwrap();
        let sol = solve_two_obstacle_penalized(&op, &f, &psi, Some(&phi), &lo, Some(&hi), &cfg()).unwrap();
        assert!(max_abs_diff(&sol.u, &exact) <= 1e-4, "{name}: {}", max_abs_diff(&sol.u, &exact));
        assert_eq!(sol.report.zeta_deficient_nodes, Some(0));
        // the Lewy–Stampacchia weights keep u_ε inside [ψ, φ]
        for i in 0..grid.n_interior() {
            assert!(sol.u[i] >= psi[i] - 1e-9 && sol.u[i] <= phi[i] + 1e-9);
        }
    }
}

#[test]
fn one_obstacle_penalization_is_the_two_obstacle_form_without_phi() {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 32.0, 0.5)).unwrap();
    let k = KernelSpec::power(3.0, 1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let f = Field::constant(&grid, -1.0);
    let psi = grid.sample_field("0.1 - 4*(x-0.5)^2").unwrap();
    let pen = PenaltySpec::new(Theta::Smoothstep, 1e-3, zeta_auto(&op, &f, &psi).unwrap()).unwrap();
    let a = solve_obstacle_penalized(&op, &f, &psi, &pen, &cfg()).unwrap();
    let b = solve_two_obstacle_penalized(&op, &f, &psi, None, &pen, None, &cfg()).unwrap();
    assert_eq!(a.u, b.u);
}

#[test]
fn stampacchia_synthetic_decay() {
    // Ψ(k) = (1 − k)³₊ satisfies Ψ(k) ≤ M Ψ(j)^δ / (k − j)^γ for 0 ≤ j < k
    // with M = 1/64, γ = 3, δ = 4/3
    let psi = |k: f64| (1.0 - k).max(0.0).powi(3);
    let (m, gamma, delta) = (1.0 / 64.0, 3.0, 4.0 / 3.0);
    for a in 0..200 {
        for b in a + 1..=400 {
            let (j, k) = (a as f64 / 200.0, b as f64 / 200.0);
            let rhs = m * psi(j).powf(delta) / (k - j).powf(gamma);
            assert!(psi(k) <= rhs * (1.0 + 1e-12), "j = {j}, k = {k}");
        }
    }
    let d = stampacchia_level(m, gamma, delta, psi(0.0)).unwrap();
    assert!((d - 4.0).abs() < 1e-12);
    assert_eq!(psi(d), 0.0);
}

#[test]
fn measured_level_bounds_the_solution() {
    let grid = build_grid(Domain::interval(0.0, 1.0, 1.0 / 64.0, 0.5)).unwrap();
    let k = KernelSpec::power(2.0, 1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let f = grid.sample_field("exp(-30*(x-0.4)^2)").unwrap();
    let u = solve_dirichlet(&op, &f, &cfg()).unwrap().u;
    let b = measured_level_bound(&grid, &u, 1.0, 2.0).unwrap();
    assert!(b.level >= b.max_u, "{b:?}");
}
