use fracobs::{build_grid, Domain, Grid};

/// `Σ_{j: r_ij ≤ R} w_ij / h^d` at the interior node nearest the centre.
fn weight_sum(grid: &Grid, radius: f64) -> f64 {
    let i = grid.nearest_interior([0.5, 0.0]);
    let hd = grid.cell_volume();
    grid.row(i)
        .iter()
        .map(|&k| &grid.pairs[k as usize])
        .filter(|p| p.r <= radius * (1.0 + 1e-12))
        .map(|p| p.w / hd)
        .sum()
}

fn fine_line() -> Grid {
    build_grid(Domain::interval(0.0, 1.0, 1.0 / 256.0, 0.5)).unwrap()
}

#[test]
fn weight_sums_follow_logarithmic_growth() {
    let grid = fine_line();
    let h = grid.h();
    for ratio in [400.0, 1000.0] {
        let sum = weight_sum(&grid, ratio * h);
        let exact = 2.0 * f64::ln(ratio);
        assert!((sum - exact).abs() <= 0.1 * exact, "R/h = {ratio}: {sum} vs {exact}");
    }
}

#[test]
fn weight_sums_are_harmonic_numbers() {
    // in one dimension Σ w/h = 2 Σ_{k ≤ N} 1/k exactly
    let grid = fine_line();
    let n = 50;
    let sum = weight_sum(&grid, n as f64 * grid.h());
    let harmonic: f64 = (1..=n).map(|k| 1.0 / k as f64).sum();
    assert!((sum - 2.0 * harmonic).abs() < 1e-12);
}

#[test]
fn cell_corrected_integral_at_small_ratio() {
    // the plain lattice sum exceeds 2·log(R/h) by about 2·γ_Euler, which is
    // more than 10% at R/h = 50; integrating over the lattice cells instead,
    // from h/2 to R + h/2, absorbs the offset
    let grid = fine_line();
    let h = grid.h();
    let ratio = 50.0;
    let sum = weight_sum(&grid, ratio * h);
    let plain = 2.0 * f64::ln(ratio);
    assert!((sum - plain) / plain > 0.1);
    let cells = 2.0 * f64::ln((ratio * h + h / 2.0) / (h / 2.0));
    assert!((sum - cells).abs() <= 0.1 * cells, "{sum} vs {cells}");
}

#[test]
fn weights_are_symmetric_lattice_weights() {
    let grid = build_grid(Domain::ball([0.0, 0.0], 0.5, 2, 0.125, 0.3)).unwrap();
    let h4 = grid.h().powi(4);
    for p in &grid.pairs {
        let a = grid.node(p.i as usize);
        let b = grid.node(p.j as usize);
        let r = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        assert!((p.r - r).abs() <= 1e-14 * r);
        assert!((p.w - h4 / (r * r)).abs() <= 1e-14 * p.w);
    }
}
