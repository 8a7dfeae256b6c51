#![allow(dead_code)]

use fracobs::kernel::Point;
use fracobs::{Field, Grid};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unordered node pairs enumerated from the node lists alone: interior
/// pairs `i < j` and every interior × exterior pair, with the lattice
/// weight `h^(2d)/r^d`.
pub struct OraclePair {
    pub i: usize,
    /// `None` for an exterior node.
    pub j: Option<usize>,
    pub xi: Point,
    pub xj: Point,
    pub r: f64,
    pub w: f64,
}

pub fn oracle_pairs(grid: &Grid) -> Vec<OraclePair> {
    let d = grid.dim() as i32;
    let h = grid.h();
    let dist = |a: Point, b: Point| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let mut out = Vec::new();
    for (i, &xi) in grid.interior.iter().enumerate() {
        for (j, &xj) in grid.interior.iter().enumerate().skip(i + 1) {
            let r = dist(xi, xj);
            out.push(OraclePair { i, j: Some(j), xi, xj, r, w: h.powi(2 * d) / r.powi(d) });
        }
        for &xj in &grid.exterior {
            let r = dist(xi, xj);
            out.push(OraclePair { i, j: None, xi, xj, r, w: h.powi(2 * d) / r.powi(d) });
        }
    }
    out
}

/// Matrix of the `g ≡ 1` operator: `⟨L u, v⟩ = vᵀ A u`.
pub fn laplacian_matrix(grid: &Grid) -> DMatrix<f64> {
    let n = grid.n_interior();
    let s = grid.s();
    let mut a = DMatrix::zeros(n, n);
    for p in oracle_pairs(grid) {
        let c = 2.0 * p.w / p.r.powf(2.0 * s);
        a[(p.i, p.i)] += c;
        if let Some(j) = p.j {
            a[(j, j)] += c;
            a[(p.i, j)] -= c;
            a[(j, p.i)] -= c;
        }
    }
    a
}

pub fn to_vec(u: &Field) -> DVector<f64> {
    DVector::from_column_slice(u.values())
}

pub fn random_field(grid: &Grid, seed: u64, lo: f64, hi: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = (0..grid.n_interior()).map(|_| rng.gen_range(lo..hi)).collect();
    Field::new(grid, v).unwrap()
}

pub fn max_abs_diff(a: &Field, b: &Field) -> f64 {
    a.sub(b).norm_inf()
}
