//! The nonlinearity `g(x, y, r)` of the nonlocal operator, its flux
//! `ḡ(r) = g(r)·r`, the primitive `G`, the convex conjugate `G*`, and the
//! sampled verification of the structural growth conditions.
//!
//! Kernel evaluation is split in two stages: [`KernelSpec::at`] resolves all
//! spatial dependence for a node pair into a [`PairKernel`], which then
//! evaluates the radial functions cheaply. Operators cache one
//! `PairKernel` per stored pair.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::quad;

/// A point of the lattice. One-dimensional grids leave the second
/// coordinate at zero.
pub type Point = [f64; 2];

/// Variable names available to kernel coefficient expressions. `x` and `y`
/// alias the first coordinates of the two points.
pub const COEF_VARS: &[&str] = &["x", "y", "x1", "x2", "y1", "y2", "dist"];
/// Variable names available to bounded-kernel shape expressions.
pub const SHAPE_VARS: &[&str] = &["x", "y", "x1", "x2", "y1", "y2", "dist", "r"];

/// Relative tolerance of the adaptive quadrature behind `G`.
pub const QUAD_REL_TOL: f64 = 1e-10;

fn coef_args(x: Point, y: Point) -> [f64; 7] {
    let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
    [x[0], y[0], x[0], x[1], y[0], y[1], dist]
}

/// A spatial coefficient such as `K(x, y)` or `p(x, y)`.
#[derive(Clone)]
pub enum Coef {
    Const(f64),
    Expr(Expression),
    Func(Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>),
}

impl Coef {
    pub fn expr(text: &str) -> Result<Self> {
        let e = Expression::parse(text, COEF_VARS)?;
        if e.is_constant() {
            Ok(Coef::Const(e.eval(&[0.0; 7])))
        } else {
            Ok(Coef::Expr(e))
        }
    }

    pub fn eval(&self, x: Point, y: Point) -> f64 {
        match self {
            Coef::Const(c) => *c,
            Coef::Expr(e) => e.eval(&coef_args(x, y)),
            Coef::Func(f) => f(x, y),
        }
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Coef::Const(c) => Some(*c),
            _ => None,
        }
    }
}

impl fmt::Debug for Coef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coef::Const(c) => write!(f, "{c}"),
            Coef::Expr(e) => write!(f, "{:?}", e.source()),
            Coef::Func(_) => write!(f, "<fn>"),
        }
    }
}

impl From<f64> for Coef {
    fn from(c: f64) -> Self {
        Coef::Const(c)
    }
}

/// Shape of a bounded kernel `γ_lo ≤ g ≤ γ_hi`.
#[derive(Clone)]
pub enum BoundedShape {
    /// `g(x, y, r) = c(x, y)`.
    Constant(Coef),
    /// `g = lo + (hi − lo)·r²/(1 + r²)`, rising from `lo` at `r = 0` to `hi` at infinity.
    Saturating { lo: Coef, hi: Coef },
    /// Arbitrary expression in `x, y, ..., r`; `G` by quadrature.
    Expr(Expression),
    /// Arbitrary closure; `G` by quadrature.
    Func(Arc<dyn Fn(Point, Point, f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for BoundedShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundedShape::Constant(c) => write!(f, "Constant({c:?})"),
            BoundedShape::Saturating { lo, hi } => write!(f, "Saturating({lo:?}, {hi:?})"),
            BoundedShape::Expr(e) => write!(f, "Expr({:?})", e.source()),
            BoundedShape::Func(_) => write!(f, "Func(<fn>)"),
        }
    }
}

/// Samples `(r_k, g_k)`; the flux `ḡ = r·g` is interpolated piecewise
/// linearly through `(0, 0)` and the samples.
#[derive(Debug, Clone)]
pub struct Table {
    r: Vec<f64>,
    gbar: Vec<f64>,
    /// `G` at each knot, accumulated exactly.
    big_g: Vec<f64>,
}

impl Table {
    pub fn new(samples: &[(f64, f64)]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("tabulated kernel needs at least one sample".into()));
        }
        let mut r = vec![0.0];
        let mut gbar = vec![0.0];
        for &(rk, gk) in samples {
            if !(rk > *r.last().unwrap()) || !(gk > 0.0) || !rk.is_finite() || !gk.is_finite() {
                return Err(Error::Config(format!(
                    "tabulated kernel samples must have strictly increasing r > 0 and g > 0 (at r = {rk})"
                )));
            }
            let gb = rk * gk;
            if !(gb > *gbar.last().unwrap()) {
                return Err(Error::Config(format!(
                    "tabulated kernel: r·g must be strictly increasing (fails at r = {rk})"
                )));
            }
            r.push(rk);
            gbar.push(gb);
        }
        let mut big_g = vec![0.0];
        for k in 1..r.len() {
            let seg = 0.5 * (gbar[k] + gbar[k - 1]) * (r[k] - r[k - 1]);
            big_g.push(big_g[k - 1] + seg);
        }
        Ok(Table { r, gbar, big_g })
    }

    pub fn r_max(&self) -> f64 {
        *self.r.last().unwrap()
    }

    fn segment(&self, r: f64) -> Result<usize> {
        if r > self.r_max() {
            return Err(Error::Extrapolation { r, max: self.r_max() });
        }
        // index k with r[k] <= r < r[k+1] (last segment closed on the right)
        let k = self.r.partition_point(|&t| t <= r);
        Ok(k.saturating_sub(1).min(self.r.len() - 2))
    }

    fn gbar(&self, r: f64) -> Result<f64> {
        let k = self.segment(r)?;
        let t = (r - self.r[k]) / (self.r[k + 1] - self.r[k]);
        Ok(self.gbar[k] + t * (self.gbar[k + 1] - self.gbar[k]))
    }

    fn slope(&self, r: f64) -> Result<f64> {
        let k = self.segment(r)?;
        Ok((self.gbar[k + 1] - self.gbar[k]) / (self.r[k + 1] - self.r[k]))
    }

    fn big_g(&self, r: f64) -> Result<f64> {
        let k = self.segment(r)?;
        let gb = self.gbar(r)?;
        Ok(self.big_g[k] + 0.5 * (self.gbar[k] + gb) * (r - self.r[k]))
    }
}

/// Kernel family tag together with its parameters.
#[derive(Debug, Clone)]
pub enum Family {
    /// `g = K(x, y)·r^(p−2)`.
    Power { p: f64, k: Coef },
    /// `g = K(x, y)·r^(p(x, y)−2)`.
    VariablePower { p: Coef, k: Coef },
    /// `g = K1·r^(p−2) + K2·r^(q−2)`.
    DoublePhase { p: f64, q: f64, k1: Coef, k2: Coef },
    /// Strictly positive bounded `g` with `γ_lo ≤ g ≤ γ_hi`.
    Bounded {
        shape: BoundedShape,
        gamma_lo: f64,
        gamma_hi: f64,
    },
    Tabulated(Arc<Table>),
}

/// The nonlinearity with its declared growth exponents and kernel bounds.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub family: Family,
    /// Lower growth exponent `g_*`.
    pub g_star: f64,
    /// Upper growth exponent `g^*`.
    pub g_upper: f64,
    /// Bounds `(k_*, k^*)` of the multiplier, when known.
    pub k_bounds: Option<(f64, f64)>,
    pub symmetric_required: bool,
}

fn const_bounds(coefs: &[&Coef]) -> Option<(f64, f64)> {
    let vals: Option<Vec<f64>> = coefs.iter().map(|c| c.as_const()).collect();
    let vals = vals?;
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

impl KernelSpec {
    fn validated(self) -> Result<Self> {
        if !(self.g_star > 0.0 && self.g_star <= self.g_upper && self.g_upper.is_finite()) {
            return Err(Error::Config(format!(
                "growth exponents must satisfy 0 < g_* <= g^* (got {} and {})",
                self.g_star, self.g_upper
            )));
        }
        if let Some((lo, hi)) = self.k_bounds {
            if !(lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!(
                    "kernel bounds must satisfy 0 < k_* <= k^* (got {lo}, {hi})"
                )));
            }
        }
        Ok(self)
    }

    /// Fractional p-Laplacian kernel `K·r^(p−2)`, `1 < p < ∞`.
    pub fn power(p: f64, k: impl Into<Coef>) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::Config(format!("power kernel needs p > 1 (got {p})")));
        }
        let k = k.into();
        let k_bounds = const_bounds(&[&k]);
        KernelSpec {
            family: Family::Power { p, k },
            g_star: p - 1.0,
            g_upper: p - 1.0,
            k_bounds,
            symmetric_required: true,
        }
        .validated()
    }

    /// The fractional Laplacian kernel `g ≡ 1`.
    pub fn laplacian() -> Self {
        KernelSpec::power(2.0, 1.0).expect("p = 2 is valid")
    }

    /// Variable exponent `p(x, y)` with known range `[p_lo, p_hi]`.
    pub fn variable_power(p: Coef, k: impl Into<Coef>, p_range: (f64, f64)) -> Result<Self> {
        let (p_lo, p_hi) = p_range;
        if !(p_lo > 1.0 && p_lo <= p_hi) {
            return Err(Error::Config(format!(
                "variable power kernel needs 1 < p_lo <= p_hi (got {p_lo}, {p_hi})"
            )));
        }
        let k = k.into();
        let k_bounds = const_bounds(&[&k]);
        KernelSpec {
            family: Family::VariablePower { p, k },
            g_star: p_lo - 1.0,
            g_upper: p_hi - 1.0,
            k_bounds,
            symmetric_required: true,
        }
        .validated()
    }

    /// Double phase kernel `K1·r^(p−2) + K2·r^(q−2)` with `1 < p ≤ q`.
    pub fn double_phase(p: f64, q: f64, k1: impl Into<Coef>, k2: impl Into<Coef>) -> Result<Self> {
        if !(p > 1.0 && p <= q && q.is_finite()) {
            return Err(Error::Config(format!(
                "double phase kernel needs 1 < p <= q (got {p}, {q})"
            )));
        }
        let (k1, k2) = (k1.into(), k2.into());
        let k_bounds = const_bounds(&[&k1, &k2]);
        KernelSpec {
            family: Family::DoublePhase { p, q, k1, k2 },
            g_star: p - 1.0,
            g_upper: q - 1.0,
            k_bounds,
            symmetric_required: true,
        }
        .validated()
    }

    /// Bounded kernel. Growth exponents are estimated by sampling the
    /// shape; override them with [`KernelSpec::with_exponents`] for
    /// strongly anisotropic shapes.
    pub fn bounded(shape: BoundedShape, gamma_lo: f64, gamma_hi: f64) -> Result<Self> {
        if !(gamma_lo > 0.0 && gamma_lo <= gamma_hi && gamma_hi.is_finite()) {
            return Err(Error::Config(format!(
                "bounded kernel needs 0 < gamma_lo <= gamma_hi (got {gamma_lo}, {gamma_hi})"
            )));
        }
        let mut spec = KernelSpec {
            family: Family::Bounded {
                shape,
                gamma_lo,
                gamma_hi,
            },
            g_star: 1.0,
            g_upper: 1.0,
            k_bounds: None,
            symmetric_required: true,
        };
        if !matches!(
            &spec.family,
            Family::Bounded {
                shape: BoundedShape::Constant(_),
                ..
            }
        ) {
            let (lo, hi) = spec.estimate_exponents(&SamplePlan::default_1d())?;
            spec.g_star = lo;
            spec.g_upper = hi;
        }
        spec.validated()
    }

    /// Constant kernel `g ≡ c`, a bounded kernel with `γ_* = γ^* = c`.
    pub fn constant(c: f64) -> Result<Self> {
        KernelSpec::bounded(BoundedShape::Constant(Coef::Const(c)), c, c)
    }

    pub fn tabulated(samples: &[(f64, f64)]) -> Result<Self> {
        let table = Arc::new(Table::new(samples)?);
        let r_max = table.r_max();
        let mut spec = KernelSpec {
            family: Family::Tabulated(table),
            g_star: 1.0,
            g_upper: 1.0,
            k_bounds: None,
            symmetric_required: true,
        };
        let plan = SamplePlan {
            pairs: vec![([0.0, 0.0], [1.0, 0.0])],
            r_grid: log_grid(r_max * 1e-6, r_max * (1.0 - 1e-6), 400),
        };
        let (lo, hi) = spec.estimate_exponents(&plan)?;
        spec.g_star = lo;
        spec.g_upper = hi;
        spec.validated()
    }

    pub fn with_exponents(mut self, g_star: f64, g_upper: f64) -> Result<Self> {
        self.g_star = g_star;
        self.g_upper = g_upper;
        self.validated()
    }

    pub fn with_k_bounds(mut self, k_lo: f64, k_hi: f64) -> Result<Self> {
        self.k_bounds = Some((k_lo, k_hi));
        self.validated()
    }

    /// `(γ_*, γ^*)` for the bounded family.
    pub fn gamma_bounds(&self) -> Option<(f64, f64)> {
        match &self.family {
            Family::Bounded {
                gamma_lo, gamma_hi, ..
            } => Some((*gamma_lo, *gamma_hi)),
            _ => None,
        }
    }

    /// Constant exponent `p` for the power family.
    pub fn power_exponent(&self) -> Option<f64> {
        match &self.family {
            Family::Power { p, .. } => Some(*p),
            _ => None,
        }
    }

    /// Resolves the spatial dependence at the pair `(x, y)`.
    pub fn at(&self, x: Point, y: Point) -> PairKernel {
        match &self.family {
            Family::Power { p, k } => PairKernel::power(k.eval(x, y), *p),
            Family::VariablePower { p, k } => PairKernel::power(k.eval(x, y), p.eval(x, y)),
            Family::DoublePhase { p, q, k1, k2 } => PairKernel::DoublePhase {
                k1: k1.eval(x, y),
                p: *p,
                k2: k2.eval(x, y),
                q: *q,
            },
            Family::Bounded { shape, .. } => match shape {
                BoundedShape::Constant(c) => PairKernel::Constant(c.eval(x, y)),
                BoundedShape::Saturating { lo, hi } => PairKernel::Saturating {
                    lo: lo.eval(x, y),
                    hi: hi.eval(x, y),
                },
                BoundedShape::Expr(_) | BoundedShape::Func(_) => PairKernel::General { x, y },
            },
            Family::Tabulated(_) => PairKernel::Tabulated,
        }
    }

    fn general_g(&self, x: Point, y: Point, r: f64) -> f64 {
        match &self.family {
            Family::Bounded {
                shape: BoundedShape::Expr(e),
                ..
            } => {
                let a = coef_args(x, y);
                e.eval(&[a[0], a[1], a[2], a[3], a[4], a[5], a[6], r])
            }
            Family::Bounded {
                shape: BoundedShape::Func(f),
                ..
            } => f(x, y, r),
            _ => unreachable!("general pair kernel only arises from bounded expression shapes"),
        }
    }

    fn table(&self) -> &Table {
        match &self.family {
            Family::Tabulated(t) => t,
            _ => unreachable!("tabulated pair kernel only arises from tabulated family"),
        }
    }

    /// `g(x, y, r)`.
    pub fn eval_g(&self, x: Point, y: Point, r: f64) -> Result<f64> {
        check_r(r)?;
        self.at(x, y).g(self, r)
    }

    /// `ḡ(x, y, r) = g(x, y, r)·r`.
    pub fn eval_gbar(&self, x: Point, y: Point, r: f64) -> Result<f64> {
        check_r(r)?;
        self.at(x, y).gbar(self, r)
    }

    /// `G(x, y, r) = ∫₀ʳ ḡ(x, y, ρ) dρ`.
    pub fn eval_big_g(&self, x: Point, y: Point, r: f64) -> Result<f64> {
        check_r(r)?;
        self.at(x, y).big_g(self, r)
    }

    /// `G*(x, y, r) = sup_{ρ>0} (rρ − G(x, y, ρ))`.
    pub fn eval_conjugate(&self, x: Point, y: Point, r: f64) -> Result<f64> {
        check_r(r)?;
        self.at(x, y).conjugate(self, r)
    }

    /// Measures the range of `r·g′/g + 1` over a sample plan.
    pub fn estimate_exponents(&self, plan: &SamplePlan) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &(x, y) in &plan.pairs {
            let pk = self.at(x, y);
            for &r in &plan.r_grid {
                let e = pk.growth_exponent(self, r)?;
                lo = lo.min(e);
                hi = hi.max(e);
            }
        }
        Ok((lo, hi))
    }
}

fn check_r(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("kernel argument r must be finite and >= 0 (got {r})")))
    }
}

/// Kernel with the spatial dependence resolved at one node pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairKernel {
    /// `k·r^(p−2)`; `p == 2` and `p == 3` take fast paths.
    Power { k: f64, p: f64 },
    DoublePhase { k1: f64, p: f64, k2: f64, q: f64 },
    Constant(f64),
    Saturating { lo: f64, hi: f64 },
    General { x: Point, y: Point },
    Tabulated,
}

#[inline]
fn pow_fast(r: f64, e: f64) -> f64 {
    if e == 1.0 {
        r
    } else if e == 2.0 {
        r * r
    } else if e == 0.0 {
        1.0
    } else {
        r.powf(e)
    }
}

impl PairKernel {
    fn power(k: f64, p: f64) -> Self {
        PairKernel::Power { k, p }
    }

    /// `g(r)`; `+∞` at `r = 0` for singular power kernels.
    pub fn g(&self, spec: &KernelSpec, r: f64) -> Result<f64> {
        Ok(match *self {
            PairKernel::Power { k, p } => k * pow_fast(r, p - 2.0),
            PairKernel::DoublePhase { k1, p, k2, q } => {
                k1 * pow_fast(r, p - 2.0) + k2 * pow_fast(r, q - 2.0)
            }
            PairKernel::Constant(c) => c,
            PairKernel::Saturating { lo, hi } => {
                let t = r * r / (1.0 + r * r);
                lo + (hi - lo) * t
            }
            PairKernel::General { x, y } => spec.general_g(x, y, r),
            PairKernel::Tabulated => {
                let t = spec.table();
                if r == 0.0 {
                    t.slope(0.0)?
                } else {
                    t.gbar(r)? / r
                }
            }
        })
    }

    /// Flux `ḡ(r) = g(r)·r`, continuous with `ḡ(0) = 0`.
    #[inline]
    pub fn gbar(&self, spec: &KernelSpec, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(match *self {
            PairKernel::Power { k, p } => k * pow_fast(r, p - 1.0),
            PairKernel::DoublePhase { k1, p, k2, q } => {
                k1 * pow_fast(r, p - 1.0) + k2 * pow_fast(r, q - 1.0)
            }
            PairKernel::Constant(c) => c * r,
            PairKernel::Tabulated => spec.table().gbar(r)?,
            _ => self.g(spec, r)? * r,
        })
    }

    /// `ḡ′(r)`, analytic where available and centred differences otherwise.
    /// Infinite at `r = 0` for singular power kernels.
    pub fn gbar_prime(&self, spec: &KernelSpec, r: f64) -> Result<f64> {
        Ok(match *self {
            PairKernel::Power { k, p } => k * (p - 1.0) * pow_fast(r, p - 2.0),
            PairKernel::DoublePhase { k1, p, k2, q } => {
                k1 * (p - 1.0) * pow_fast(r, p - 2.0) + k2 * (q - 1.0) * pow_fast(r, q - 2.0)
            }
            PairKernel::Constant(c) => c,
            PairKernel::Saturating { lo, hi } => {
                let s = 1.0 + r * r;
                let g = lo + (hi - lo) * r * r / s;
                g + (hi - lo) * 2.0 * r * r / (s * s)
            }
            PairKernel::Tabulated => spec.table().slope(r)?,
            PairKernel::General { .. } => {
                let step = (r * 1e-5).max(1e-8);
                let lo = (r - step).max(0.0);
                (self.gbar(spec, r + step)? - self.gbar(spec, lo)?) / (r + step - lo)
            }
        })
    }

    /// `G(r)`.
    pub fn big_g(&self, spec: &KernelSpec, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        Ok(match *self {
            PairKernel::Power { k, p } => k * pow_fast(r, p) / p,
            PairKernel::DoublePhase { k1, p, k2, q } => {
                k1 * pow_fast(r, p) / p + k2 * pow_fast(r, q) / q
            }
            PairKernel::Constant(c) => 0.5 * c * r * r,
            PairKernel::Saturating { lo, hi } => {
                let r2 = r * r;
                0.5 * lo * r2 + 0.5 * (hi - lo) * (r2 - r2.ln_1p())
            }
            PairKernel::Tabulated => spec.table().big_g(r)?,
            PairKernel::General { .. } => {
                let failure = std::cell::RefCell::new(None);
                let v = quad::integrate(
                    |rho| match self.gbar(spec, rho) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            f64::NAN
                        }
                    },
                    0.0,
                    r,
                    QUAD_REL_TOL,
                );
                if let Some(e) = failure.into_inner() {
                    return Err(e);
                }
                v?
            }
        })
    }

    /// `G*(r)`: closed form for power kernels, ternary search on the
    /// concave map `ρ ↦ rρ − G(ρ)` otherwise.
    pub fn conjugate(&self, spec: &KernelSpec, r: f64) -> Result<f64> {
        if r == 0.0 {
            return Ok(0.0);
        }
        match *self {
            PairKernel::Power { k, p } => {
                let pc = p / (p - 1.0);
                Ok(k.powf(1.0 - pc) * r.powf(pc) / pc)
            }
            PairKernel::Constant(c) => Ok(0.5 * r * r / c),
            _ => self.conjugate_search(spec, r),
        }
    }

    fn conjugate_search(&self, spec: &KernelSpec, r: f64) -> Result<f64> {
        let objective = |rho: f64| -> Result<f64> { Ok(r * rho - self.big_g(spec, rho)?) };
        let mut hi = 1.0;
        let mut grow = 0;
        while self.gbar(spec, hi)? < r {
            hi *= 2.0;
            grow += 1;
            if grow > 2000 {
                return Err(Error::Numeric(format!(
                    "conjugate: slope never turned negative for r = {r}"
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..400 {
            if hi - lo <= 1e-10 * hi.max(1e-300) * 1e-3 {
                break;
            }
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if objective(m1)? < objective(m2)? {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        objective(0.5 * (lo + hi)).map(|v| v.max(0.0))
    }

    /// `r·g′(r)/g(r) + 1` by centred differences with step `r·1e−5`.
    /// Tabulated kernels use the exact piecewise value `r·ḡ′/ḡ`.
    pub fn growth_exponent(&self, spec: &KernelSpec, r: f64) -> Result<f64> {
        if let PairKernel::Tabulated = self {
            let t = spec.table();
            return Ok(r * t.slope(r)? / t.gbar(r)?);
        }
        let step = r * 1e-5;
        let gp = (self.g(spec, r + step)? - self.g(spec, r - step)?) / (2.0 * step);
        Ok(r * gp / self.g(spec, r)? + 1.0)
    }
}

/// Points and radii at which structural conditions are sampled.
#[derive(Debug, Clone)]
pub struct SamplePlan {
    pub pairs: Vec<(Point, Point)>,
    pub r_grid: Vec<f64>,
}

/// `n` logarithmically spaced points in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl SamplePlan {
    /// Pairs from `{0, 0.25, ..., 1}²` (1-d points) and radii `1e−4 ..= 1e4`,
    /// 10 points per decade.
    pub fn default_1d() -> Self {
        let pts: Vec<f64> = (0..5).map(|i| 0.25 * i as f64).collect();
        let mut pairs = Vec::new();
        for &a in &pts {
            for &b in &pts {
                if a != b {
                    pairs.push(([a, 0.0], [b, 0.0]));
                }
            }
        }
        SamplePlan {
            pairs,
            r_grid: log_grid(1e-4, 1e4, 81),
        }
    }

    fn check(&self) -> Result<()> {
        if self.pairs.is_empty() || self.r_grid.len() < 2 {
            return Err(Error::Domain("sample plan needs pairs and at least two radii".into()));
        }
        let mut sorted = self.r_grid.clone();
        if sorted.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::Domain("sample radii must be strictly positive".into()));
        }
        sorted.sort_by(f64::total_cmp);
        let decades = (sorted[sorted.len() - 1] / sorted[0]).log10();
        if (sorted.len() as f64) < 3.0 * decades {
            return Err(Error::Domain(format!(
                "sample radii too sparse: {} points over {decades:.1} decades (need 3 per decade)",
                sorted.len()
            )));
        }
        Ok(())
    }
}

/// One sampled evaluation that violated (or came closest to violating) a condition.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct GrowthSample {
    pub condition: &'static str,
    pub x: Point,
    pub y: Point,
    pub r: f64,
    pub value: f64,
    pub violation: f64,
}

/// Outcome of [`verify_growth`].
#[derive(Debug, Clone, serde::Serialize)]
pub struct GrowthReport {
    /// Range of `r·g′/g + 1`.
    pub exponent_range: (f64, f64),
    /// Range of `r·ḡ/G`.
    pub ratio_range: (f64, f64),
    /// Declared `[g_*, g^*]`.
    pub declared: (f64, f64),
    pub samples: usize,
    pub violations: Vec<GrowthSample>,
    /// Limitations of the sampled check that the caller should know about.
    pub caveats: Vec<String>,
}

impl GrowthReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn worst(&self) -> Option<&GrowthSample> {
        self.violations
            .iter()
            .max_by(|a, b| a.violation.total_cmp(&b.violation))
    }
}

/// Tolerance on the sampled growth exponents.
pub const GROWTH_TOL: f64 = 1e-3;

/// Samples every structural condition on `g`. Returns the full report;
/// callers that need a hard failure use [`verify_growth`].
pub fn measure_growth(spec: &KernelSpec, plan: &SamplePlan) -> Result<GrowthReport> {
    plan.check()?;
    let (gs, gu) = (spec.g_star, spec.g_upper);
    let mut report = GrowthReport {
        exponent_range: (f64::INFINITY, f64::NEG_INFINITY),
        ratio_range: (f64::INFINITY, f64::NEG_INFINITY),
        declared: (gs, gu),
        samples: 0,
        violations: Vec::new(),
        caveats: Vec::new(),
    };
    if matches!(spec.family, Family::Tabulated(_)) {
        report.caveats.push(
            "tabulated kernel: the limits r·g → 0 (r → 0) and r·g → ∞ (r → ∞) cannot be verified from finite data; only the sampled range is checked".into(),
        );
    }
    let mut radii = plan.r_grid.clone();
    radii.sort_by(f64::total_cmp);
    let push = |report: &mut GrowthReport, condition, x, y, r, value, violation: f64| {
        if violation > 0.0 {
            report.violations.push(GrowthSample {
                condition,
                x,
                y,
                r,
                value,
                violation,
            });
        }
    };
    for &(x, y) in &plan.pairs {
        let pk = spec.at(x, y);
        let mut big_g = Vec::with_capacity(radii.len());
        let mut prev_flux = 0.0;
        for &r in &radii {
            report.samples += 1;
            let g = pk.g(spec, r)?;
            let e = pk.growth_exponent(spec, r)?;
            report.exponent_range.0 = report.exponent_range.0.min(e);
            report.exponent_range.1 = report.exponent_range.1.max(e);
            push(&mut report, "growth exponent r·g'/g + 1 in [g_*, g^*]", x, y, r, e,
                (gs - e).max(e - gu) - GROWTH_TOL);

            let gbar = pk.gbar(spec, r)?;
            let cap_g = pk.big_g(spec, r)?;
            big_g.push(cap_g);
            let ratio = r * gbar / cap_g;
            report.ratio_range.0 = report.ratio_range.0.min(ratio);
            report.ratio_range.1 = report.ratio_range.1.max(ratio);
            push(&mut report, "ratio r·ḡ/G in [1+g_*, 1+g^*]", x, y, r, ratio,
                (1.0 + gs - ratio).max(ratio - 1.0 - gu) - GROWTH_TOL);

            push(&mut report, "r·g strictly increasing", x, y, r, gbar,
                if gbar > prev_flux { -1.0 } else { prev_flux - gbar + f64::MIN_POSITIVE });
            prev_flux = gbar;

            let in_range = match &spec.family {
                Family::Tabulated(t) => 2.0 * r <= t.r_max(),
                _ => true,
            };
            if in_range {
                let delta2 = pk.big_g(spec, 2.0 * r)?;
                let bound = 2f64.powf(1.0 + gu) * cap_g;
                push(&mut report, "Δ₂: G(2r) <= 2^(1+g^*)·G(r)", x, y, r, delta2,
                    (delta2 - bound) / bound - GROWTH_TOL);
            }

            if let Some((glo, ghi)) = spec.gamma_bounds() {
                push(&mut report, "bounded family: γ_lo <= g <= γ_hi", x, y, r, g,
                    (glo - g).max(g - ghi) - 1e-12 * ghi);
            }
            if spec.symmetric_required {
                let gs_yx = spec.at(y, x).g(spec, r)?;
                push(&mut report, "symmetry g(x,y,r) = g(y,x,r)", x, y, r, gs_yx,
                    (gs_yx - g).abs() - 0.0);
            }
        }
        if let Some((klo, khi)) = spec.k_bounds {
            let kv = match &spec.family {
                Family::Power { k, .. } | Family::VariablePower { k, .. } => vec![k.eval(x, y)],
                Family::DoublePhase { k1, k2, .. } => vec![k1.eval(x, y), k2.eval(x, y)],
                _ => vec![],
            };
            for k in kv {
                push(&mut report, "kernel bounds k_* <= K <= k^*", x, y, 0.0, k,
                    (klo - k).max(k - khi) - 1e-12 * khi);
            }
        }
        // power envelope between every pair r0 < r of the grid, in log form
        for i in 0..radii.len() {
            for j in i + 1..radii.len() {
                let lr = (radii[j] / radii[i]).ln();
                let lg = (big_g[j] / big_g[i]).ln();
                let slack = GROWTH_TOL * lr + 1e-9;
                let v = ((1.0 + gs) * lr - lg).max(lg - (1.0 + gu) * lr) - slack;
                push(&mut report, "power envelope (r/r0)^(1+g_*) <= G(r)/G(r0) <= (r/r0)^(1+g^*)",
                    x, y, radii[j], lg / lr, v);
            }
        }
    }
    report.violations.sort_by(|a, b| b.violation.total_cmp(&a.violation));
    report.violations.truncate(32);
    Ok(report)
}

/// Samples the growth conditions and fails with the worst violating sample.
pub fn verify_growth(spec: &KernelSpec, plan: &SamplePlan) -> Result<GrowthReport> {
    let report = measure_growth(spec, plan)?;
    match report.worst() {
        None => Ok(report),
        Some(w) => Err(Error::Property(format!(
            "{} violated at x = {:?}, y = {:?}, r = {:e}: value {} (excess {:e})",
            w.condition, w.x, w.y, w.r, w.value, w.violation
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const O: Point = [0.0, 0.0];
    const P: Point = [0.3, 0.0];

    #[test]
    fn eval_g_examples() {
        let k2 = KernelSpec::power(2.0, 1.0).unwrap();
        assert_eq!(k2.eval_g(O, P, 3.7).unwrap(), 1.0);
        let k3 = KernelSpec::power(3.0, 1.0).unwrap();
        assert_eq!(k3.eval_g(O, P, 2.0).unwrap(), 2.0);
        let dp = KernelSpec::double_phase(2.0, 3.0, 1.0, 1.0).unwrap();
        assert_eq!(dp.eval_g(O, P, 2.0).unwrap(), 3.0);
        assert!(matches!(k2.eval_g(O, P, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn tabulated_extrapolation_is_an_error() {
        let t = KernelSpec::tabulated(&[(1.0, 1.0), (2.0, 1.5)]).unwrap();
        assert!(t.eval_g(O, P, 1.5).is_ok());
        assert!(matches!(t.eval_g(O, P, 2.5), Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn primitive_examples() {
        let k2 = KernelSpec::power(2.0, 1.0).unwrap();
        assert_eq!(k2.eval_big_g(O, P, 2.0).unwrap(), 2.0);
        for spec in [
            k2.clone(),
            KernelSpec::double_phase(2.0, 3.0, 1.0, 1.0).unwrap(),
            KernelSpec::constant(0.7).unwrap(),
        ] {
            assert_eq!(spec.eval_big_g(O, P, 0.0).unwrap(), 0.0);
            assert_eq!(spec.eval_conjugate(O, P, 0.0).unwrap(), 0.0);
        }
        let dp = KernelSpec::double_phase(2.0, 3.0, 1.0, 1.0).unwrap();
        assert!((dp.eval_big_g(O, P, 1.0).unwrap() - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn primitive_quadrature_matches_closed_form() {
        // the same double-phase flux written as a bounded-family expression is
        // integrated numerically; compare to the closed form term sum
        let e = Expression::parse("1 + r", SHAPE_VARS).unwrap();
        let spec = KernelSpec::bounded(BoundedShape::Expr(e), 1.0, 1e9).unwrap();
        let v = spec.eval_big_g(O, P, 1.0).unwrap();
        assert!((v - 5.0 / 6.0).abs() < 1e-12, "{v}");
        let sat = KernelSpec::bounded(
            BoundedShape::Saturating { lo: 0.5.into(), hi: 2.0.into() },
            0.5,
            2.0,
        )
        .unwrap();
        let pk = sat.at(O, P);
        for r in [0.01, 0.5, 3.0, 40.0] {
            let closed = pk.big_g(&sat, r).unwrap();
            let numeric = quad::integrate(|t| pk.gbar(&sat, t).unwrap(), 0.0, r, 1e-12).unwrap();
            assert!((closed - numeric).abs() <= 1e-10 * closed, "r={r}");
        }
    }

    #[test]
    fn conjugate_examples() {
        let k2 = KernelSpec::power(2.0, 1.0).unwrap();
        assert_eq!(k2.eval_conjugate(O, P, 2.0).unwrap(), 2.0);
        let k3 = KernelSpec::power(3.0, 1.0).unwrap();
        let closed = k3.eval_conjugate(O, P, 1.0).unwrap();
        assert!((closed - 2.0 / 3.0).abs() < 1e-14);
        // ternary search oracle on the same power kernel
        let searched = k3.at(O, P).conjugate_search(&k3, 1.0).unwrap();
        assert!((searched - closed).abs() < 1e-10, "{searched} vs {closed}");
    }

    #[test]
    fn growth_examples() {
        let plan = SamplePlan::default_1d();
        let k3 = KernelSpec::power(3.0, 1.0).unwrap();
        let rep = verify_growth(&k3, &plan).unwrap();
        assert!((rep.exponent_range.0 - 2.0).abs() < 1e-3);
        assert!((rep.exponent_range.1 - 2.0).abs() < 1e-3);

        let one = KernelSpec::constant(1.0).unwrap();
        let rep = verify_growth(&one, &plan).unwrap();
        assert!((rep.ratio_range.0 - 2.0).abs() < 1e-12 && (rep.ratio_range.1 - 2.0).abs() < 1e-12);

        let dp = KernelSpec::double_phase(2.0, 3.0, 1.0, 1.0).unwrap();
        let rep = verify_growth(&dp, &plan).unwrap();
        assert!(rep.ratio_range.0 >= 2.0 - 1e-9 && rep.ratio_range.1 <= 3.0 + 1e-9);
    }

    #[test]
    fn growth_failure_names_worst_sample() {
        let plan = SamplePlan::default_1d();
        let wrong = KernelSpec::power(3.0, 1.0).unwrap().with_exponents(1.0, 1.5).unwrap();
        let err = verify_growth(&wrong, &plan).unwrap_err().to_string();
        assert!(err.contains("violated"), "{err}");
        let asym = KernelSpec::power(2.0, Coef::expr("1 + x").unwrap()).unwrap();
        let rep = measure_growth(&asym, &plan).unwrap();
        assert!(rep.violations.iter().any(|v| v.condition.starts_with("symmetry")));
    }

    #[test]
    fn sparse_radii_rejected() {
        let plan = SamplePlan { pairs: vec![(O, P)], r_grid: vec![1e-3, 1e3] };
        assert!(matches!(
            verify_growth(&KernelSpec::laplacian(), &plan),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tabulated_caveat_recorded() {
        let t = KernelSpec::tabulated(&[(0.5, 1.0), (1.0, 1.2), (2.0, 1.5), (4.0, 1.9)]).unwrap();
        let plan = SamplePlan { pairs: vec![(O, P)], r_grid: log_grid(0.01, 3.9, 40) };
        let rep = measure_growth(&t, &plan).unwrap();
        assert_eq!(rep.caveats.len(), 1);
    }
}
