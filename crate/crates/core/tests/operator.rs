mod common;

use common::{oracle_pairs, random_field};
use fracobs::operator::seminorm;
use fracobs::verify::standard_family;
use fracobs::{build_grid, Domain, Field, Grid, KernelSpec, LgOperator};
use proptest::prelude::*;

fn line(h: f64) -> Grid {
    build_grid(Domain::interval(0.0, 1.0, h, 0.5)).unwrap()
}

fn disc() -> Grid {
    build_grid(Domain::ball([0.0, 0.0], 0.5, 2, 0.125, 0.4).with_exterior_factor(1.0)).unwrap()
}

fn families() -> Vec<KernelSpec> {
    fracobs::verify::FAMILY_NAMES
        .iter()
        .map(|n| standard_family(n).unwrap())
        .collect()
}

/// `⟨L u, v⟩` as a double sum over ordered node pairs with at least one
/// interior node, using only the kernel's flux.
fn double_sum_pairing(k: &KernelSpec, grid: &Grid, u: &Field, v: &Field) -> f64 {
    let s = grid.s();
    let mut total = 0.0;
    for p in oracle_pairs(grid) {
        let uj = p.j.map_or(0.0, |j| u[j]);
        let vj = p.j.map_or(0.0, |j| v[j]);
        let du = (u[p.i] - uj) / p.r.powf(s);
        let dv = (v[p.i] - vj) / p.r.powf(s);
        let flux = k.eval_gbar(p.xi, p.xj, du.abs()).unwrap() * du.signum();
        // (x, y) and (y, x) both appear in the double integral
        total += 2.0 * flux * dv * p.w;
    }
    total
}

#[test]
fn pairing_matches_independent_double_sum() {
    for grid in [line(1.0 / 16.0), disc()] {
        for (t, k) in families().iter().enumerate() {
            let op = LgOperator::new(k, &grid);
            let u = random_field(&grid, 10 + t as u64, -1.0, 1.0);
            let v = random_field(&grid, 20 + t as u64, -1.0, 1.0);
            let a = op.pairing(&u, &v).unwrap();
            let b = double_sum_pairing(k, &grid, &u, &v);
            assert!((a - b).abs() <= 1e-11 * b.abs().max(1e-300), "{a} vs {b}");
        }
    }
}

#[test]
fn duality_identity() {
    for grid in [line(1.0 / 64.0), disc()] {
        for (t, k) in families().iter().enumerate() {
            let op = LgOperator::new(k, &grid);
            let u = random_field(&grid, 30 + t as u64, -1.0, 1.0);
            let v = random_field(&grid, 40 + t as u64, -1.0, 1.0);
            let r = op.apply(&u).unwrap();
            let lhs = r.dot(&v);
            let rhs = op.pairing(&u, &v).unwrap();
            let scale = r.values().iter().zip(v.values()).map(|(a, b)| (a * b).abs()).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-12 * scale, "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn laplacian_pairing_is_symmetric_bilinear() {
    let grid = line(1.0 / 32.0);
    let k = KernelSpec::laplacian();
    let op = LgOperator::new(&k, &grid);
    let u = random_field(&grid, 1, -1.0, 1.0);
    let v = random_field(&grid, 2, -1.0, 1.0);
    let a = op.pairing(&u, &v).unwrap();
    let b = op.pairing(&v, &u).unwrap();
    assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
    let c = op.pairing(&u.scale(3.0), &v).unwrap();
    assert!((c - 3.0 * a).abs() <= 1e-12 * c.abs().max(1.0));
}

#[test]
fn energy_of_zero_and_constant_shift() {
    let grid = line(1.0 / 16.0);
    for k in families() {
        let op = LgOperator::new(&k, &grid);
        assert_eq!(op.energy(&Field::zeros(&grid), None).unwrap(), 0.0);
        let f = Field::constant(&grid, 2.0);
        let u = random_field(&grid, 3, 0.0, 1.0);
        let e0 = op.energy(&u, None).unwrap();
        let e1 = op.energy(&u, Some(&f)).unwrap();
        let load = 2.0 * u.sum() * grid.cell_volume();
        assert!((e0 - e1 - load).abs() <= 1e-13 * e0.abs().max(load));
    }
}

#[test]
fn saturating_kernel_between_laplacian_multiples() {
    // 0.5 ≤ g ≤ 2 and g nondecreasing, so (ḡ(a) − ḡ(b))(a − b) ≥ 0.5 (a − b)²
    let grid = line(1.0 / 32.0);
    let k = standard_family("bounded").unwrap();
    let op = LgOperator::new(&k, &grid);
    let lap = KernelSpec::laplacian();
    let op1 = LgOperator::new(&lap, &grid);
    for seed in 0..10 {
        let u = random_field(&grid, 100 + seed, -3.0, 3.0);
        let v = random_field(&grid, 200 + seed, -3.0, 3.0);
        let w = u.sub(&v);
        let a = op.pairing(&u, &u).unwrap();
        let b = op1.pairing(&u, &u).unwrap();
        assert!(0.5 * b <= a * (1.0 + 1e-12) && a <= 2.0 * b * (1.0 + 1e-12));
        let m = op.form_difference(&u, &v, &w).unwrap();
        assert!(m >= 0.5 * op1.pairing(&w, &w).unwrap() * (1.0 - 1e-12));
    }
}

fn field_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn duality_holds_for_arbitrary_fields(u in field_strategy(15), v in field_strategy(15), fam in 0usize..5) {
        let grid = line(1.0 / 16.0);
        let k = families().swap_remove(fam);
        let op = LgOperator::new(&k, &grid);
        let u = Field::new(&grid, u).unwrap();
        let v = Field::new(&grid, v).unwrap();
        let r = op.apply(&u).unwrap();
        let scale = r.values().iter().zip(v.values()).map(|(a, b)| (a * b).abs()).sum::<f64>();
        prop_assert!((r.dot(&v) - op.pairing(&u, &v).unwrap()).abs() <= 1e-12 * scale.max(1e-300));
    }

    #[test]
    fn energy_is_midpoint_convex(u in field_strategy(15), v in field_strategy(15), fam in 0usize..5) {
        let grid = line(1.0 / 16.0);
        let k = families().swap_remove(fam);
        let op = LgOperator::new(&k, &grid);
        let u = Field::new(&grid, u).unwrap();
        let v = Field::new(&grid, v).unwrap();
        let mid = u.add(&v).scale(0.5);
        let lhs = op.energy(&mid, None).unwrap();
        let rhs = 0.5 * (op.energy(&u, None).unwrap() + op.energy(&v, None).unwrap());
        prop_assert!(lhs <= rhs + 1e-12 * rhs.abs());
        if u != v {
            prop_assert!(lhs < rhs);
        }
    }

    #[test]
    fn power_operator_is_p_coercive(u in field_strategy(15), v in field_strategy(15), p in 2.0f64..4.0) {
        // (|a|^{p−2}a − |b|^{p−2}b)(a − b) ≥ 2^{2−p}|a − b|^p for p ≥ 2
        let grid = line(1.0 / 16.0);
        let k = KernelSpec::power(p, 1.0).unwrap();
        let op = LgOperator::new(&k, &grid);
        let u = Field::new(&grid, u).unwrap();
        let v = Field::new(&grid, v).unwrap();
        let w = u.sub(&v);
        let lhs = op.form_difference(&u, &v, &w).unwrap();
        let rhs = 2f64.powf(2.0 - p) * seminorm(&grid, &w, p).unwrap().powf(p);
        prop_assert!(lhs >= rhs * (1.0 - 1e-10));
    }

    #[test]
    fn t_monotone_on_positive_part(u in field_strategy(15), v in field_strategy(15), fam in 0usize..5) {
        let grid = line(1.0 / 16.0);
        let k = families().swap_remove(fam);
        let op = LgOperator::new(&k, &grid);
        let u = Field::new(&grid, u).unwrap();
        let v = Field::new(&grid, v).unwrap();
        let w = u.sub(&v).positive_part();
        let val = op.form_difference(&u, &v, &w).unwrap();
        if w.norm_inf() > 0.0 {
            prop_assert!(val > 0.0);
        } else {
            prop_assert_eq!(val, 0.0);
        }
    }
}

#[test]
fn constant_shift_is_strictly_t_monotone() {
    let grid = line(1.0 / 32.0);
    let k = KernelSpec::power(3.0, 1.0).unwrap();
    let op = LgOperator::new(&k, &grid);
    let v = random_field(&grid, 5, -1.0, 1.0);
    let u = v.map(|x| x + 0.3);
    let w = u.sub(&v).positive_part();
    assert!(op.form_difference(&u, &v, &w).unwrap() > 0.0);
}
