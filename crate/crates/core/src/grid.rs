//! Uniform lattice discretization of a bounded domain together with an
//! exterior collar on which all fields vanish, and the table of node pairs
//! carrying the quadrature weights `w_ij = h^(2d) / r_ij^d` of the singular
//! measure `dx dy / |x − y|^d`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::expr::Expression;
use crate::field::Field;
use crate::kernel::Point;

/// Geometric shape of the open domain `Ω`.
#[derive(Debug, Clone)]
pub enum Shape {
    /// `(a, b)` in one dimension.
    Interval { a: f64, b: f64 },
    /// `(lo₀, hi₀) × (lo₁, hi₁)`.
    Rect { lo: Point, hi: Point },
    /// Open ball; the lattice is anchored at the centre.
    Ball { center: Point, radius: f64 },
    /// `{ expr > 0 }` inside the bounding box `[lo, hi]`.
    Mask {
        expr: Expression,
        lo: Point,
        hi: Point,
    },
}

/// A domain with its discretization parameters.
#[derive(Debug, Clone)]
pub struct Domain {
    pub dim: usize,
    pub shape: Shape,
    /// Mesh size.
    pub h: f64,
    /// Fractional order, `0 < s < 1`.
    pub s: f64,
    /// Collar extent as a multiple of `diam(Ω)`.
    pub exterior_factor: f64,
}

pub const DEFAULT_EXTERIOR_FACTOR: f64 = 5.0;

impl Domain {
    pub fn interval(a: f64, b: f64, h: f64, s: f64) -> Self {
        Domain {
            dim: 1,
            shape: Shape::Interval { a, b },
            h,
            s,
            exterior_factor: DEFAULT_EXTERIOR_FACTOR,
        }
    }

    pub fn ball(center: Point, radius: f64, dim: usize, h: f64, s: f64) -> Self {
        Domain {
            dim,
            shape: Shape::Ball { center, radius },
            h,
            s,
            exterior_factor: DEFAULT_EXTERIOR_FACTOR,
        }
    }

    pub fn rect(lo: Point, hi: Point, h: f64, s: f64) -> Self {
        Domain {
            dim: 2,
            shape: Shape::Rect { lo, hi },
            h,
            s,
            exterior_factor: DEFAULT_EXTERIOR_FACTOR,
        }
    }

    pub fn with_exterior_factor(mut self, factor: f64) -> Self {
        self.exterior_factor = factor;
        self
    }

    /// Bounding box of `Ω`.
    fn bbox(&self) -> (Point, Point) {
        match &self.shape {
            Shape::Interval { a, b } => ([*a, 0.0], [*b, 0.0]),
            Shape::Rect { lo, hi } | Shape::Mask { lo, hi, .. } => (*lo, *hi),
            Shape::Ball { center, radius } => {
                let mut lo = *center;
                let mut hi = *center;
                for k in 0..self.dim {
                    lo[k] -= radius;
                    hi[k] += radius;
                }
                (lo, hi)
            }
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.shape {
            Shape::Ball { radius, .. } => 2.0 * radius,
            _ => {
                let (lo, hi) = self.bbox();
                (0..self.dim).map(|k| (hi[k] - lo[k]).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::Config(format!("dimension must be 1 or 2 (got {})", self.dim)));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("fractional order s must lie in (0, 1) (got {})", self.s)));
        }
        if !(self.exterior_factor >= 1.0) {
            return Err(Error::Config(format!(
                "exterior factor must be >= 1 (got {})",
                self.exterior_factor
            )));
        }
        match &self.shape {
            Shape::Interval { a, b } => {
                if self.dim != 1 || !(a < b) {
                    return Err(Error::Config("interval needs dim = 1 and a < b".into()));
                }
            }
            Shape::Rect { lo, hi } => {
                if self.dim != 2 || !(lo[0] < hi[0] && lo[1] < hi[1]) {
                    return Err(Error::Config("box needs dim = 2 and lo < hi".into()));
                }
            }
            Shape::Ball { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config("ball radius must be positive".into()));
                }
            }
            Shape::Mask { expr, lo, hi } => {
                if !(0..self.dim).all(|k| lo[k] < hi[k]) {
                    return Err(Error::Config("mask bounding box needs lo < hi".into()));
                }
                if self.dim == 1 && expr.references("y") {
                    return Err(Error::Config("one-dimensional mask may not reference y".into()));
                }
            }
        }
        let diam = self.diameter();
        if !(self.h > 0.0 && self.h <= diam / 4.0) {
            return Err(Error::Config(format!(
                "mesh size h = {} must satisfy 0 < h <= diam/4 = {}",
                self.h,
                diam / 4.0
            )));
        }
        Ok(())
    }

    /// Open-domain membership; points on `∂Ω` are outside.
    fn contains(&self, p: Point) -> bool {
        let eps = 1e-9 * self.h;
        match &self.shape {
            Shape::Interval { a, b } => p[0] > a + eps && p[0] < b - eps,
            Shape::Rect { lo, hi } => {
                (0..2).all(|k| p[k] > lo[k] + eps && p[k] < hi[k] - eps)
            }
            Shape::Ball { center, radius } => dist(p, *center) < radius - eps,
            Shape::Mask { expr, lo, hi } => {
                (0..self.dim).all(|k| p[k] > lo[k] + eps && p[k] < hi[k] - eps)
                    && expr.eval(&[p[0], p[1]]) > 0.0
            }
        }
    }

    /// Distance from `p` to `Ω` (to its bounding box for masks).
    fn distance_to(&self, p: Point) -> f64 {
        match &self.shape {
            Shape::Ball { center, radius } => (dist(p, *center) - radius).max(0.0),
            _ => {
                let (lo, hi) = self.bbox();
                (0..self.dim)
                    .map(|k| (lo[k] - p[k]).max(p[k] - hi[k]).max(0.0).powi(2))
                    .sum::<f64>()
                    .sqrt()
            }
        }
    }

    fn anchor(&self) -> Point {
        match &self.shape {
            Shape::Ball { center, .. } => *center,
            _ => self.bbox().0,
        }
    }
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Opaque identity of a built grid, carried by every [`Field`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId(u64);

static NEXT_GRID_ID: AtomicU64 = AtomicU64::new(1);

/// Second endpoint of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Other {
    Interior(usize),
    Exterior(usize),
}

/// An unordered node pair with `i` interior and `j` either a later interior
/// node or an exterior node.
#[derive(Debug, Clone, Copy)]
pub struct Pair {
    pub i: u32,
    /// Global node index: `< n_interior` is interior, otherwise exterior.
    pub j: u32,
    /// Distance `r_ij > 0`.
    pub r: f64,
    /// `r_ij^(−s)`.
    pub r_neg_s: f64,
    /// Quadrature weight `h^(2d) / r_ij^d`.
    pub w: f64,
}

/// Lattice nodes of `Ω` and its collar plus the pair table.
#[derive(Debug)]
pub struct Grid {
    id: GridId,
    pub domain: Domain,
    /// Interior node coordinates.
    pub interior: Vec<Point>,
    /// Exterior (collar) node coordinates.
    pub exterior: Vec<Point>,
    /// Integer lattice index of each node, interior first.
    pub lattice: Vec<[i64; 2]>,
    pub pairs: Vec<Pair>,
    row_start: Vec<usize>,
    row_pairs: Vec<u32>,
}

impl Grid {
    pub fn id(&self) -> GridId {
        self.id
    }

    pub fn dim(&self) -> usize {
        self.domain.dim
    }

    pub fn h(&self) -> f64 {
        self.domain.h
    }

    pub fn s(&self) -> f64 {
        self.domain.s
    }

    /// `h^d`, the volume element attached to each node.
    pub fn cell_volume(&self) -> f64 {
        self.domain.h.powi(self.domain.dim as i32)
    }

    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_exterior(&self) -> usize {
        self.exterior.len()
    }

    /// Coordinates of a global node index.
    pub fn node(&self, global: usize) -> Point {
        let n = self.interior.len();
        if global < n {
            self.interior[global]
        } else {
            self.exterior[global - n]
        }
    }

    pub fn other(&self, pair: &Pair) -> Other {
        let n = self.interior.len();
        let j = pair.j as usize;
        if j < n {
            Other::Interior(j)
        } else {
            Other::Exterior(j - n)
        }
    }

    /// Indices into [`Grid::pairs`] of all pairs touching interior node `i`.
    pub fn row(&self, i: usize) -> &[u32] {
        &self.row_pairs[self.row_start[i]..self.row_start[i + 1]]
    }

    /// Interior node nearest to `p`.
    pub fn nearest_interior(&self, p: Point) -> usize {
        (0..self.interior.len())
            .min_by(|&a, &b| dist(self.interior[a], p).total_cmp(&dist(self.interior[b], p)))
            .expect("grid has interior nodes")
    }

    /// Evaluates `expr` (in `x`, and `y` for `d = 2`) at the interior nodes.
    pub fn sample_field(&self, expr: &str) -> Result<Field> {
        let e = Expression::parse(expr, &["x", "y"])?;
        if self.dim() == 1 && e.references("y") {
            return Err(Error::Expression {
                offset: e.source().find('y').unwrap_or(0),
                message: "variable 'y' is not available on one-dimensional grids".into(),
            });
        }
        self.sample_with(|p| e.try_eval(&[p[0], p[1]]))
    }

    /// Evaluates a closure at the interior nodes.
    pub fn sample_with(&self, mut f: impl FnMut(Point) -> Result<f64>) -> Result<Field> {
        let values = self.interior.iter().map(|&p| f(p)).collect::<Result<Vec<_>>>()?;
        Field::new(self, values)
    }
}

/// Builds the lattice, classifies nodes and assembles the pair table.
pub fn build_grid(domain: Domain) -> Result<Grid> {
    domain.validate()?;
    let d = domain.dim;
    let h = domain.h;
    let (lo, hi) = domain.bbox();
    let reach = domain.exterior_factor * domain.diameter();
    let anchor = domain.anchor();
    let mut k_lo = [0i64; 2];
    let mut k_hi = [0i64; 2];
    for k in 0..d {
        k_lo[k] = ((lo[k] - reach - anchor[k]) / h).floor() as i64;
        k_hi[k] = ((hi[k] + reach - anchor[k]) / h).ceil() as i64;
    }
    let mut interior = Vec::new();
    let mut exterior = Vec::new();
    let mut lat_int = Vec::new();
    let mut lat_ext = Vec::new();
    for b in k_lo[1]..=k_hi[1] {
        for a in k_lo[0]..=k_hi[0] {
            let p = [anchor[0] + a as f64 * h, anchor[1] + b as f64 * h];
            if domain.contains(p) {
                interior.push(p);
                lat_int.push([a, b]);
            } else if domain.distance_to(p) <= reach * (1.0 + 1e-12) {
                exterior.push(p);
                lat_ext.push([a, b]);
            }
        }
    }
    if interior.is_empty() {
        return Err(Error::Config("domain contains no interior lattice nodes".into()));
    }
    let n = interior.len();
    let s = domain.s;
    let h2d = h.powi(2 * d as i32);
    let make_pair = |i: usize, j: usize, pj: Point| {
        let r = dist(interior[i], pj);
        Pair {
            i: i as u32,
            j: j as u32,
            r,
            r_neg_s: r.powf(-s),
            w: h2d / r.powi(d as i32),
        }
    };
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2 + n * exterior.len());
    for i in 0..n {
        for j in i + 1..n {
            pairs.push(make_pair(i, j, interior[j]));
        }
        for (e, &pe) in exterior.iter().enumerate() {
            pairs.push(make_pair(i, n + e, pe));
        }
    }
    let mut counts = vec![0usize; n];
    for p in &pairs {
        counts[p.i as usize] += 1;
        if (p.j as usize) < n {
            counts[p.j as usize] += 1;
        }
    }
    let mut row_start = vec![0usize; n + 1];
    for i in 0..n {
        row_start[i + 1] = row_start[i] + counts[i];
    }
    let mut fill = row_start.clone();
    let mut row_pairs = vec![0u32; row_start[n]];
    for (k, p) in pairs.iter().enumerate() {
        row_pairs[fill[p.i as usize]] = k as u32;
        fill[p.i as usize] += 1;
        if (p.j as usize) < n {
            row_pairs[fill[p.j as usize]] = k as u32;
            fill[p.j as usize] += 1;
        }
    }
    let mut lattice = lat_int;
    lattice.extend(lat_ext);
    Ok(Grid {
        id: GridId(NEXT_GRID_ID.fetch_add(1, Ordering::Relaxed)),
        domain,
        interior,
        exterior,
        lattice,
        pairs,
        row_start,
        row_pairs,
    })
}
