//! The discrete fractional g-Laplacian.
//!
//! With `δ_ij = (u_i − u_j) / r_ij^s` (exterior values are zero) and the
//! flux `ḡ(r) = g(r)·r`, the discrete duality pairing is
//!
//! ```text
//! ⟨L u, v⟩ = 2 Σ_{pairs} ḡ(|δu_ij|)·sgn(δu_ij)·δv_ij·w_ij
//! ```
//!
//! where the factor 2 accounts for storing unordered pairs only.
//! Exterior × exterior pairs contribute nothing under the zero extension
//! and are not stored. The energy is `2 Σ G(|δu|) w − Σ f u h^d` and the
//! nodal residual returned by [`LgOperator::apply`] is its gradient
//! without the source term.
//!
//! Reductions run over fixed chunks in a fixed order, so results are
//! bit-identical for any thread count.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::{Grid, Pair};
use crate::kernel::{KernelSpec, PairKernel};

const CHUNK: usize = 4096;

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// `(u_i − u_j) / r_ij^s` for global node indices; nodes outside `Ω` carry
/// the value zero.
pub fn delta_s(grid: &Grid, u: &Field, i: usize, j: usize) -> Result<f64> {
    u.check_grid(grid)?;
    if i == j {
        return Err(Error::Domain("delta_s needs two distinct nodes".into()));
    }
    let n_all = grid.n_interior() + grid.n_exterior();
    if i >= n_all || j >= n_all {
        return Err(Error::Domain(format!("node index out of range (have {n_all} nodes)")));
    }
    let val = |k: usize| if k < grid.n_interior() { u[k] } else { 0.0 };
    let r = crate::grid::dist(grid.node(i), grid.node(j));
    Ok((val(i) - val(j)) / r.powf(grid.s()))
}

/// `T_k(u) = −k ∨ (k ∧ u)` nodewise.
pub fn truncate_t(u: &Field, k: f64) -> Result<Field> {
    check_level(k)?;
    Ok(u.map(|v| v.clamp(-k, k)))
}

/// `P_k(u) = u − T_k(u)` nodewise.
pub fn remainder_p(u: &Field, k: f64) -> Result<Field> {
    check_level(k)?;
    Ok(u.map(|v| v - v.clamp(-k, k)))
}

fn check_level(k: f64) -> Result<()> {
    if k >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("truncation level must be >= 0 (got {k})")))
    }
}

/// The operator `L_g^s` assembled on a grid, with kernel coefficients
/// cached per pair.
pub struct LgOperator<'a> {
    kernel: &'a KernelSpec,
    grid: &'a Grid,
    pair_kernels: Vec<PairKernel>,
}

impl<'a> LgOperator<'a> {
    pub fn new(kernel: &'a KernelSpec, grid: &'a Grid) -> Self {
        let pair_kernels = grid
            .pairs
            .par_iter()
            .map(|p| kernel.at(grid.node(p.i as usize), grid.node(p.j as usize)))
            .collect();
        LgOperator {
            kernel,
            grid,
            pair_kernels,
        }
    }

    pub fn kernel(&self) -> &'a KernelSpec {
        self.kernel
    }

    pub fn grid(&self) -> &'a Grid {
        self.grid
    }

    #[inline]
    fn value(&self, u: &[f64], j: u32) -> f64 {
        let j = j as usize;
        if j < u.len() {
            u[j]
        } else {
            0.0
        }
    }

    #[inline]
    fn delta(&self, u: &[f64], p: &Pair) -> f64 {
        (u[p.i as usize] - self.value(u, p.j)) * p.r_neg_s
    }

    /// Signed flux `ḡ(|δ|)·sgn(δ)` of pair `k`.
    #[inline]
    fn flux(&self, k: usize, delta: f64) -> Result<f64> {
        let m = self.pair_kernels[k].gbar(self.kernel, delta.abs())?;
        Ok(if delta < 0.0 { -m } else { m })
    }

    fn check(&self, u: &Field) -> Result<()> {
        u.check_grid(self.grid)
    }

    /// Deterministic chunked reduction over all pairs.
    fn reduce_pairs<F>(&self, term: F) -> Result<f64>
    where
        F: Fn(usize, &Pair) -> Result<f64> + Sync,
    {
        let pairs = &self.grid.pairs;
        let partials = pairs
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut acc = Kahan::default();
                for (off, p) in chunk.iter().enumerate() {
                    acc.add(term(c * CHUNK + off, p)?);
                }
                Ok(acc.value())
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut total = Kahan::default();
        for v in partials {
            total.add(v);
        }
        Ok(total.value())
    }

    /// Discrete duality `⟨L u, v⟩`.
    pub fn pairing(&self, u: &Field, v: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        let (u, v) = (u.values(), v.values());
        let s = self.reduce_pairs(|k, p| {
            let du = self.delta(u, p);
            let dv = self.delta(v, p);
            Ok(self.flux(k, du)? * dv * p.w)
        })?;
        Ok(2.0 * s)
    }

    /// `⟨L u − L v, w⟩`, accumulated pairwise so that cancellation between
    /// the two operator values happens inside each summand.
    pub fn form_difference(&self, u: &Field, v: &Field, w: &Field) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        self.check(w)?;
        let (u, v, w) = (u.values(), v.values(), w.values());
        let s = self.reduce_pairs(|k, p| {
            let dw = self.delta(w, p);
            if dw == 0.0 {
                return Ok(0.0);
            }
            let fu = self.flux(k, self.delta(u, p))?;
            let fv = self.flux(k, self.delta(v, p))?;
            Ok((fu - fv) * dw * p.w)
        })?;
        Ok(2.0 * s)
    }

    /// Nodal residual `R_i = ∂/∂u_i` of the operator energy, so that
    /// `Σ_i R_i v_i = ⟨L u, v⟩`.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let uv = u.values();
        let n = uv.len();
        let values = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = Kahan::default();
                for &k in self.grid.row(i) {
                    let k = k as usize;
                    let p = &self.grid.pairs[k];
                    let f = self.flux(k, self.delta(uv, p))? * p.r_neg_s * p.w;
                    acc.add(if p.i as usize == i { f } else { -f });
                }
                Ok(2.0 * acc.value())
            })
            .collect::<Result<Vec<f64>>>()?;
        Field::new(self.grid, values)
    }

    /// `2 Σ G(|δu|) w − Σ f u h^d`.
    pub fn energy(&self, u: &Field, f: Option<&Field>) -> Result<f64> {
        self.check(u)?;
        let uv = u.values();
        let modular = self.reduce_pairs(|k, p| {
            Ok(self.pair_kernels[k].big_g(self.kernel, self.delta(uv, p).abs())? * p.w)
        })?;
        let mut e = 2.0 * modular;
        if let Some(f) = f {
            self.check(f)?;
            let hd = self.grid.cell_volume();
            let mut acc = Kahan::default();
            for (fi, ui) in f.values().iter().zip(uv) {
                acc.add(fi * ui);
            }
            e -= acc.value() * hd;
        }
        Ok(e)
    }

    /// The part of the operator energy that depends on `u_i`, evaluated
    /// with `u_i` replaced by `t`: `2 Σ_{pairs ∋ i} G(|δu|) w`.
    pub fn node_energy(&self, u: &Field, i: usize, t: f64) -> Result<f64> {
        self.check(u)?;
        let uv = u.values();
        let mut acc = Kahan::default();
        for &k in self.grid.row(i) {
            let k = k as usize;
            let p = &self.grid.pairs[k];
            let a = if p.i as usize == i { t } else { uv[p.i as usize] };
            let b = if p.j as usize == i { t } else { self.value(uv, p.j) };
            let d = ((a - b) * p.r_neg_s).abs();
            acc.add(self.pair_kernels[k].big_g(self.kernel, d)? * p.w);
        }
        Ok(2.0 * acc.value())
    }

    /// Dense Hessian of the operator energy. `ḡ′` is evaluated at
    /// `max(|δ|, delta_floor)` so that singular kernels stay finite and
    /// degenerate kernels stay positive.
    pub fn hessian(&self, u: &Field, delta_floor: f64) -> Result<DMatrix<f64>> {
        self.check(u)?;
        let uv = u.values();
        let n = uv.len();
        let coeffs = self
            .grid
            .pairs
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let d = self.delta(uv, p).abs().max(delta_floor);
                let gp = self.pair_kernels[k].gbar_prime(self.kernel, d)?;
                Ok(2.0 * gp * p.r_neg_s * p.r_neg_s * p.w)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (p, c) in self.grid.pairs.iter().zip(coeffs) {
            let i = p.i as usize;
            let j = p.j as usize;
            h[(i, i)] += c;
            if j < n {
                h[(j, j)] += c;
                h[(i, j)] -= c;
                h[(j, i)] -= c;
            }
        }
        Ok(h)
    }

    /// Nodewise bound on the rounding error of [`LgOperator::apply`] caused
    /// by perturbing each value by a few ulps. Singular fluxes (`p < 2`)
    /// make this floor visible near pairs with `u_i ≈ u_j`.
    pub fn apply_noise(&self, u: &Field) -> Result<Field> {
        self.check(u)?;
        let uv = u.values();
        let n = uv.len();
        let values = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for &k in self.grid.row(i) {
                    let k = k as usize;
                    let p = &self.grid.pairs[k];
                    let scale = uv[p.i as usize].abs().max(self.value(uv, p.j).abs());
                    let eta = 4.0 * f64::EPSILON * scale * p.r_neg_s;
                    let d = self.delta(uv, p).abs();
                    let pk = &self.pair_kernels[k];
                    let lo = pk.gbar(self.kernel, (d - eta).max(0.0))?;
                    let hi = pk.gbar(self.kernel, d + eta)?;
                    acc += (hi - lo) * p.r_neg_s * p.w;
                }
                Ok(2.0 * acc)
            })
            .collect::<Result<Vec<f64>>>()?;
        Field::new(self.grid, values)
    }

    /// Largest `|δu|` over all pairs.
    pub fn max_delta(&self, u: &Field) -> f64 {
        let uv = u.values();
        self.grid
            .pairs
            .par_iter()
            .map(|p| self.delta(uv, p).abs())
            .reduce(|| 0.0, f64::max)
    }

    /// Discrete `W^{s,p}` seminorm `(2 Σ |δu|^p w)^(1/p)`.
    pub fn seminorm(&self, u: &Field, p: f64) -> Result<f64> {
        seminorm(self.grid, u, p)
    }
}

/// Discrete `W^{s,p}` seminorm `(2 Σ |δu|^p w)^(1/p)`; `p = 2` is the
/// `H^s` norm.
pub fn seminorm(grid: &Grid, u: &Field, p: f64) -> Result<f64> {
    u.check_grid(grid)?;
    let uv = u.values();
    let n = uv.len();
    let partials: Vec<f64> = grid
        .pairs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Kahan::default();
            for q in chunk {
                let uj = if (q.j as usize) < n { uv[q.j as usize] } else { 0.0 };
                let d = ((uv[q.i as usize] - uj) * q.r_neg_s).abs();
                acc.add(if p == 2.0 { d * d } else { d.powf(p) } * q.w);
            }
            acc.value()
        })
        .collect();
    let mut total = Kahan::default();
    for v in partials {
        total.add(v);
    }
    Ok((2.0 * total.value()).powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Domain};

    fn grid() -> Grid {
        build_grid(Domain::interval(0.0, 1.0, 0.1, 0.5).with_exterior_factor(1.0)).unwrap()
    }

    #[test]
    fn delta_examples() {
        let g = build_grid(Domain::interval(0.0, 5.0, 0.5, 0.5).with_exterior_factor(1.0)).unwrap();
        let u = g.sample_with(|p| Ok(if (p[0] - 0.5).abs() < 1e-12 { 1.0 } else { 0.0 })).unwrap();
        let i = g.nearest_interior([0.5, 0.0]);
        let j1 = g.nearest_interior([1.5, 0.0]);
        let j4 = g.nearest_interior([4.5, 0.0]);
        assert_eq!(delta_s(&g, &u, i, j1).unwrap(), 1.0);
        assert_eq!(delta_s(&g, &u, i, j4).unwrap(), 0.5);
        assert_eq!(delta_s(&g, &u, j1, j4).unwrap(), 0.0);
        assert!(matches!(delta_s(&g, &u, i, i), Err(Error::Domain(_))));
    }

    #[test]
    fn truncation_examples() {
        let g = grid();
        let mut u = Field::zeros(&g);
        u[0] = 3.0;
        u[1] = -5.0;
        let t = truncate_t(&u, 2.0).unwrap();
        let p = remainder_p(&u, 2.0).unwrap();
        assert_eq!((t[0], p[0]), (2.0, 1.0));
        assert_eq!((t[1], p[1]), (-2.0, -3.0));
        assert!(truncate_t(&u, -1.0).is_err());
        assert_eq!(t.add(&p), u);
    }

    #[test]
    fn zero_field() {
        let g = grid();
        let k = KernelSpec::power(1.5, 1.0).unwrap();
        let op = LgOperator::new(&k, &g);
        let z = Field::zeros(&g);
        let v = g.sample_field("x*(1-x)").unwrap();
        assert_eq!(op.pairing(&z, &v).unwrap(), 0.0);
        assert_eq!(op.apply(&z).unwrap(), z);
        assert_eq!(op.energy(&z, None).unwrap(), 0.0);
    }

    #[test]
    fn grid_mismatch_is_contract_error() {
        let g1 = grid();
        let g2 = grid();
        let k = KernelSpec::laplacian();
        let op = LgOperator::new(&k, &g1);
        let u = Field::zeros(&g2);
        assert!(matches!(op.apply(&u), Err(Error::Contract(_))));
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let g = grid();
        let k = KernelSpec::double_phase(2.0, 3.0, 1.0, 0.5).unwrap();
        let op = LgOperator::new(&k, &g);
        let u = g.sample_field("sin(3*x) + x^2").unwrap();
        let h = op.hessian(&u, 0.0).unwrap();
        let eps = 1e-6;
        for i in [0, 4, 8] {
            let mut up = u.clone();
            up[i] += eps;
            let mut dn = u.clone();
            dn[i] -= eps;
            let (ru, rd) = (op.apply(&up).unwrap(), op.apply(&dn).unwrap());
            for j in 0..u.len() {
                let fd = (ru[j] - rd[j]) / (2.0 * eps);
                assert!((fd - h[(j, i)]).abs() <= 1e-6 * h[(i, i)].abs(), "{i},{j}");
            }
        }
    }
}
