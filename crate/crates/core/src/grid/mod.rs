//! Uniform Cartesian grids, scalar fields and data pairs.
//!
//! Values are stored row-major over `(i, j, k)` with `k` varying fastest.
//! Every other module samples, differentiates and integrates through the
//! types defined here.

mod norms;
pub mod stencil;
pub mod wvf;

pub use norms::{
    check_compatibility, discrete_hk_norm, discrete_hk_norm_masked, energy_norm_hd, hd_components,
    CompatibilityReport, HdComponents,
};
pub use stencil::{gradient, hessian, laplacian};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

pub fn norm3(p: Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

pub(crate) fn dot3(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Japanese bracket `sqrt(1 + |x|^2)`.
pub fn bracket(p: Point) -> f64 {
    (1.0 + dot3(p, p)).sqrt()
}

/// Minimum number of points per axis; the one-sided boundary stencils need six.
pub const MIN_POINTS_PER_AXIS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub origin: Point,
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Point, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {spacing}")));
        }
        if origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        if dims.iter().any(|&n| n < MIN_POINTS_PER_AXIS) {
            return Err(Error::InvalidGrid(format!(
                "dims {dims:?}: need at least {MIN_POINTS_PER_AXIS} points per axis"
            )));
        }
        Ok(Self { origin, spacing, dims })
    }

    /// Cube centred at the origin with lattice points at integer multiples of
    /// `spacing`, covering at least `[-half_width, half_width]^3`.
    pub fn centered(half_width: f64, spacing: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!("half width must be positive, got {half_width}")));
        }
        let n = (half_width / spacing - 1e-9).ceil().max(1.0) as usize;
        let o = -(n as f64) * spacing;
        Self::new([o, o, o], spacing, [2 * n + 1; 3])
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn strides(&self) -> [usize; 3] {
        [self.dims[1] * self.dims[2], self.dims[2], 1]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Point {
        let h = self.spacing;
        [
            self.origin[0] + i as f64 * h,
            self.origin[1] + j as f64 * h,
            self.origin[2] + k as f64 * h,
        ]
    }

    #[inline]
    pub fn point_of(&self, idx: usize) -> Point {
        let [i, j, k] = self.coords(idx);
        self.point(i, j, k)
    }

    pub fn upper(&self) -> Point {
        let h = self.spacing;
        [
            self.origin[0] + (self.dims[0] - 1) as f64 * h,
            self.origin[1] + (self.dims[1] - 1) as f64 * h,
            self.origin[2] + (self.dims[2] - 1) as f64 * h,
        ]
    }

    /// Largest `r` with `[-r, r]^3` inside the box (negative if the origin is outside).
    pub fn half_width(&self) -> f64 {
        let up = self.upper();
        (0..3)
            .map(|a| (-self.origin[a]).min(up[a]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(3)
    }

    /// Inclusive index ranges covering the ball `B_radius(center)` clipped to the grid.
    pub fn index_box(&self, center: Point, radius: f64) -> [(usize, usize); 3] {
        let mut out = [(0, 0); 3];
        for (a, slot) in out.iter_mut().enumerate() {
            let lo = ((center[a] - radius - self.origin[a]) / self.spacing).floor();
            let hi = ((center[a] + radius - self.origin[a]) / self.spacing).ceil();
            let n = self.dims[a] as f64 - 1.0;
            *slot = (lo.clamp(0.0, n) as usize, hi.clamp(0.0, n) as usize);
        }
        out
    }

    /// Same lattice (spacing and origin offset a multiple of the spacing).
    pub fn is_sublattice_compatible(&self, other: &GridSpec) -> bool {
        if (self.spacing - other.spacing).abs() > 1e-12 * self.spacing {
            return false;
        }
        (0..3).all(|a| {
            let shift = (self.origin[a] - other.origin[a]) / self.spacing;
            (shift - shift.round()).abs() < 1e-6
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite value at index {idx}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { values: vec![0.0; grid.len()], grid }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(Point) -> f64 + Sync) -> Self {
        use rayon::prelude::*;
        let values = (0..grid.len())
            .into_par_iter()
            .map(|idx| f(grid.point_of(idx)))
            .collect();
        Self { grid, values }
    }

    /// Applies `passes` sweeps of the `(1, 2, 1) / 4` filter along every axis.
    /// Each sweep adds `h^2 / 2` to the variance per axis and annihilates the
    /// `kh = pi` mode; samples on the outermost layers are left unchanged.
    pub fn binomial_smooth(&mut self, passes: usize) {
        use rayon::prelude::*;
        let grid = self.grid;
        let strides = grid.strides();
        for _ in 0..passes {
            for axis in 0..3 {
                let (n, st) = (grid.dims[axis], strides[axis]);
                let old = self.values.clone();
                self.values.par_iter_mut().enumerate().for_each(|(idx, v)| {
                    let m = grid.coords(idx)[axis];
                    if m > 0 && m + 1 < n {
                        *v = 0.25 * (old[idx - st] + old[idx + st]) + 0.5 * old[idx];
                    }
                });
            }
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|value|` at points with `|x - center| > radius`, with the worst point.
    pub fn max_abs_outside(&self, center: Point, radius: f64) -> (f64, Point) {
        let mut best = (0.0, center);
        for (idx, v) in self.values.iter().enumerate() {
            if v.abs() <= best.0 {
                continue;
            }
            let p = self.grid.point_of(idx);
            let d = norm3([p[0] - center[0], p[1] - center[1], p[2] - center[2]]);
            if d > radius {
                best = (v.abs(), p);
            }
        }
        best
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, other.grid)));
        }
        Ok(())
    }

    /// `self + c * other`
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        })
    }

    /// Copy onto another grid of the same lattice; points without a source
    /// value become zero. Fails if a value above `tol * max|self|` would be dropped.
    pub fn embed_into(&self, target: GridSpec, tol: f64) -> Result<Self> {
        if !self.grid.is_sublattice_compatible(&target) {
            return Err(Error::GridMismatch("grids are not on a common lattice".into()));
        }
        let h = self.grid.spacing;
        let shift: [i64; 3] =
            std::array::from_fn(|a| ((self.grid.origin[a] - target.origin[a]) / h).round() as i64);
        let limit = tol * self.max_abs();
        let mut out = ScalarField::zeros(target);
        for (idx, &v) in self.values.iter().enumerate() {
            let c = self.grid.coords(idx);
            let t: [i64; 3] = std::array::from_fn(|a| c[a] as i64 + shift[a]);
            let inside = (0..3).all(|a| t[a] >= 0 && (t[a] as usize) < target.dims[a]);
            if inside {
                let ti = target.index(t[0] as usize, t[1] as usize, t[2] as usize);
                out.values[ti] = v;
            } else if v.abs() > limit {
                return Err(Error::DomainMargin {
                    what: "embedding would drop nonzero data".into(),
                    required: self.grid.half_width(),
                    available: target.half_width(),
                });
            }
        }
        Ok(out)
    }
}

/// Cauchy data `(f0, f1)` sampled on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPair {
    pub f0: ScalarField,
    pub f1: ScalarField,
}

impl DataPair {
    pub fn new(f0: ScalarField, f1: ScalarField) -> Result<Self> {
        if f0.grid != f1.grid {
            return Err(Error::GridMismatch("f0 and f1 live on different grids".into()));
        }
        Ok(Self { f0, f1 })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            f0: ScalarField::zeros(grid),
            f1: ScalarField::zeros(grid),
        }
    }

    pub fn from_fns(
        grid: GridSpec,
        f0: impl Fn(Point) -> f64 + Sync,
        f1: impl Fn(Point) -> f64 + Sync,
    ) -> Self {
        Self {
            f0: ScalarField::from_fn(grid, f0),
            f1: ScalarField::from_fn(grid, f1),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.f0.grid
    }

    pub fn max_abs(&self) -> f64 {
        self.f0.max_abs().max(self.f1.max_abs())
    }

    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        Ok(Self {
            f0: self.f0.axpy(c, &other.f0)?,
            f1: self.f1.axpy(c, &other.f1)?,
        })
    }

    pub fn embed_into(&self, target: GridSpec, tol: f64) -> Result<Self> {
        Ok(Self {
            f0: self.f0.embed_into(target, tol)?,
            f1: self.f1.embed_into(target, tol)?,
        })
    }

    /// Radius (about the origin) beyond which both components stay below `tol * max`.
    pub fn support_radius(&self, tol: f64) -> f64 {
        let limit = tol * self.max_abs();
        let grid = self.grid();
        let mut r: f64 = 0.0;
        for idx in 0..grid.len() {
            if self.f0.values[idx].abs() > limit || self.f1.values[idx].abs() > limit {
                r = r.max(norm3(grid.point_of(idx)));
            }
        }
        r
    }
}

/// Number of binomial sweeps whose combined variance per axis is `sigma^2`.
pub fn smoothing_passes(sigma: f64, h: f64) -> usize {
    (2.0 * sigma * sigma / (h * h)).round() as usize
}

/// Spherical obstacle contained in the unit ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Point,
    pub radius: f64,
}

impl Obstacle {
    pub fn new(center: Point, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidObstacle(format!("radius must be positive, got {radius}")));
        }
        let reach = norm3(center) + radius;
        if !(reach < 1.0) {
            return Err(Error::InvalidObstacle(format!(
                "|center| + radius = {reach:.6} must be < 1"
            )));
        }
        Ok(Self { center, radius })
    }

    pub fn signed_distance(&self, p: Point) -> f64 {
        norm3([p[0] - self.center[0], p[1] - self.center[1], p[2] - self.center[2]]) - self.radius
    }

    pub fn contains(&self, p: Point) -> bool {
        self.signed_distance(p) <= 0.0
    }

    /// Radius of the smallest origin-centred ball containing the obstacle.
    pub fn enclosing_radius(&self) -> f64 {
        norm3(self.center) + self.radius
    }

    /// Staircase mask: `true` at grid points inside or on the sphere.
    pub fn mask(&self, grid: &GridSpec) -> Vec<bool> {
        (0..grid.len()).map(|idx| self.contains(grid.point_of(idx))).collect()
    }

    pub fn masked_indices(&self, grid: &GridSpec) -> Vec<usize> {
        let [(i0, i1), (j0, j1), (k0, k1)] = grid.index_box(self.center, self.radius + grid.spacing);
        let mut out = Vec::new();
        for i in i0..=i1 {
            for j in j0..=j1 {
                for k in k0..=k1 {
                    if self.contains(grid.point(i, j, k)) {
                        out.push(grid.index(i, j, k));
                    }
                }
            }
        }
        out
    }
}
