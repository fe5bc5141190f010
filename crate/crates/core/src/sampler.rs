//! Point samplers returning derivative jets.
//!
//! Analytic radial profiles supply exact derivatives; grid samplers
//! interpolate stencil-derived derivative fields with tricubic Lagrange
//! weights.

use crate::error::{Error, Result};
use crate::grid::{dot3, norm3, stencil, GridSpec, Point, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value,
    Gradient,
    Hessian,
}

/// Value, gradient and Hessian (`xx, yy, zz, xy, xz, yz`) at a point.
/// Entries above the requested order are zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 3],
    pub hess: [f64; 6],
}

impl Jet {
    pub fn laplacian(&self) -> f64 {
        self.hess[0] + self.hess[1] + self.hess[2]
    }

    /// `d . grad`
    pub fn directional(&self, d: Point) -> f64 {
        dot3(d, self.grad)
    }

    /// `H d`
    pub fn hess_apply(&self, d: Point) -> Point {
        let h = &self.hess;
        [
            h[0] * d[0] + h[3] * d[1] + h[4] * d[2],
            h[3] * d[0] + h[1] * d[1] + h[5] * d[2],
            h[4] * d[0] + h[5] * d[1] + h[2] * d[2],
        ]
    }

    /// `d^T H d`
    pub fn second_directional(&self, d: Point) -> f64 {
        dot3(d, self.hess_apply(d))
    }
}

pub trait Sampler: Sync {
    fn jet(&self, p: Point, order: JetOrder) -> Result<Jet>;

    fn value(&self, p: Point) -> Result<f64> {
        Ok(self.jet(p, JetOrder::Value)?.value)
    }

    /// A ball `(center, radius)` outside which the sampler is identically zero.
    fn support(&self) -> Option<(Point, f64)> {
        None
    }
}

/// The zero function.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl Sampler for Zero {
    fn jet(&self, _: Point, _: JetOrder) -> Result<Jet> {
        Ok(Jet::default())
    }

    fn support(&self) -> Option<(Point, f64)> {
        Some(([0.0; 3], 0.0))
    }
}

/// Value-only sampler from a closure; derivative requests fail.
pub struct ValueFn<F>(pub F);

impl<F: Fn(Point) -> f64 + Sync> Sampler for ValueFn<F> {
    fn jet(&self, p: Point, order: JetOrder) -> Result<Jet> {
        if order > JetOrder::Value {
            return Err(Error::UnsupportedOrder { order: order as usize, max: 0 });
        }
        Ok(Jet { value: (self.0)(p), ..Jet::default() })
    }
}

/// Sampler from a closure that returns full jets.
pub struct JetFn<F>(pub F);

impl<F: Fn(Point) -> Jet + Sync> Sampler for JetFn<F> {
    fn jet(&self, p: Point, _: JetOrder) -> Result<Jet> {
        Ok((self.0)(p))
    }
}

/// Named radial profiles about a centre. All have unit peak height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    Zero,
    /// `exp(-r^2 / sigma^2)`
    Gaussian { sigma: f64, center: Point },
    /// `exp(-(r - r0)^2 / sigma^2)`
    GaussianRing { r0: f64, sigma: f64, center: Point },
    /// `exp(1 - 1 / (1 - xi^2))` with `xi = (r - r0) / width`, zero for `|xi| >= 1`.
    Bump { r0: f64, width: f64, center: Point },
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            Profile::Zero => Ok(()),
            Profile::Gaussian { sigma, .. } if !(sigma > 0.0) => bad(format!("gaussian sigma {sigma} must be positive")),
            Profile::GaussianRing { sigma, r0, .. } if !(sigma > 0.0 && r0 >= 0.0) => {
                bad(format!("gaussian_ring needs sigma > 0 and r0 >= 0, got sigma {sigma}, r0 {r0}"))
            }
            Profile::Bump { width, r0, .. } if !(width > 0.0 && r0 >= 0.0) => {
                bad(format!("bump needs width > 0 and r0 >= 0, got width {width}, r0 {r0}"))
            }
            _ => Ok(()),
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Profile::Zero => [0.0; 3],
            Profile::Gaussian { center, .. }
            | Profile::GaussianRing { center, .. }
            | Profile::Bump { center, .. } => center,
        }
    }

    /// `(p, p', p'')` of the radial profile.
    pub fn radial(&self, r: f64) -> (f64, f64, f64) {
        match *self {
            Profile::Zero => (0.0, 0.0, 0.0),
            Profile::Gaussian { sigma, .. } => {
                let s2 = sigma * sigma;
                let p = (-r * r / s2).exp();
                (p, -2.0 * r / s2 * p, (4.0 * r * r / (s2 * s2) - 2.0 / s2) * p)
            }
            Profile::GaussianRing { r0, sigma, .. } => {
                let s2 = sigma * sigma;
                let d = r - r0;
                let p = (-d * d / s2).exp();
                (p, -2.0 * d / s2 * p, (4.0 * d * d / (s2 * s2) - 2.0 / s2) * p)
            }
            Profile::Bump { r0, width, .. } => {
                let xi = (r - r0) / width;
                if xi.abs() >= 1.0 {
                    return (0.0, 0.0, 0.0);
                }
                let q = 1.0 - xi * xi;
                let p = (1.0 - 1.0 / q).exp();
                let d1 = -2.0 * xi / (q * q);
                let d2 = 4.0 * xi * xi / q.powi(4) - 2.0 / (q * q) - 8.0 * xi * xi / q.powi(3);
                (p, p * d1 / width, p * d2 / (width * width))
            }
        }
    }

    /// Radius (about the centre) beyond which the profile is below `tol`
    /// (exactly zero for the bump).
    pub fn extent(&self, tol: f64) -> f64 {
        let l = (1.0 / tol).ln().max(0.0).sqrt();
        match *self {
            Profile::Zero => 0.0,
            Profile::Gaussian { sigma, .. } => sigma * l,
            Profile::GaussianRing { r0, sigma, .. } => r0 + sigma * l,
            Profile::Bump { r0, width, .. } => r0 + width,
        }
    }
}

/// `amplitude * profile`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analytic {
    pub profile: Profile,
    pub amplitude: f64,
}

impl Analytic {
    pub fn new(profile: Profile, amplitude: f64) -> Self {
        Self { profile, amplitude }
    }

    pub fn unit(profile: Profile) -> Self {
        Self::new(profile, 1.0)
    }
}

impl Sampler for Analytic {
    fn jet(&self, p: Point, order: JetOrder) -> Result<Jet> {
        let c = self.profile.center();
        let x = [p[0] - c[0], p[1] - c[1], p[2] - c[2]];
        let r = norm3(x);
        let (f, d1, d2) = self.profile.radial(r);
        let a = self.amplitude;
        let mut jet = Jet { value: a * f, ..Jet::default() };
        if order == JetOrder::Value {
            return Ok(jet);
        }
        // p'/r: continuous limit p''(0) at the centre
        let (n, over_r) = if r > 1e-12 { ([x[0] / r, x[1] / r, x[2] / r], d1 / r) } else { ([0.0; 3], d2) };
        jet.grad = [a * d1 * n[0], a * d1 * n[1], a * d1 * n[2]];
        if order == JetOrder::Hessian {
            let radial = d2 - over_r;
            let pairs = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];
            for (slot, (i, j)) in jet.hess.iter_mut().zip(pairs) {
                let delta = if i == j { over_r } else { 0.0 };
                *slot = a * (radial * n[i] * n[j] + delta);
            }
        }
        Ok(jet)
    }

    fn support(&self) -> Option<(Point, f64)> {
        match self.profile {
            Profile::Zero => Some(([0.0; 3], 0.0)),
            Profile::Bump { .. } => Some((self.profile.center(), self.profile.extent(0.0))),
            _ => None,
        }
    }
}

/// Tricubic Lagrange interpolation of a field and its stencil derivatives.
#[derive(Debug, Clone)]
pub struct GridSampler {
    grid: GridSpec,
    /// value, then gradient (3), then Hessian (6), as far as `order`.
    fields: Vec<ScalarField>,
    order: JetOrder,
    zero_outside: bool,
    support: Option<(Point, f64)>,
}

fn lagrange_weights(f: f64) -> [f64; 4] {
    [
        -f * (f - 1.0) * (f - 2.0) / 6.0,
        (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0,
        -(f + 1.0) * f * (f - 2.0) / 2.0,
        (f + 1.0) * f * (f - 1.0) / 6.0,
    ]
}

impl GridSampler {
    pub fn new(field: &ScalarField, order: JetOrder) -> Self {
        let mut fields = vec![field.clone()];
        if order >= JetOrder::Gradient {
            fields.extend(stencil::gradient(field));
        }
        if order == JetOrder::Hessian {
            fields.extend(stencil::hessian(field));
        }
        Self { grid: field.grid, fields, order, zero_outside: false, support: None }
    }

    /// Treats the field as zero outside its box. Fails unless the field is
    /// below `tol * max|field|` on the outer four layers of the box.
    pub fn zero_extended(field: &ScalarField, order: JetOrder, tol: f64) -> Result<Self> {
        let g = field.grid;
        let limit = tol * field.max_abs();
        for (idx, v) in field.values.iter().enumerate() {
            let c = g.coords(idx);
            let edge = (0..3).any(|a| c[a] < 4 || c[a] + 4 >= g.dims[a]);
            if edge && v.abs() > limit {
                return Err(Error::Support {
                    what: "field to be zero-extended".into(),
                    radius: g.half_width() - 4.0 * g.spacing,
                    value: v.abs(),
                    tolerance: limit,
                    at: g.point_of(idx),
                });
            }
        }
        let mut s = Self::new(field, order);
        s.zero_outside = true;
        let mut r: f64 = 0.0;
        for (idx, v) in field.values.iter().enumerate() {
            if *v != 0.0 {
                r = r.max(norm3(g.point_of(idx)));
            }
        }
        // interpolation reaches two cells past the last nonzero sample
        s.support = Some(([0.0; 3], r + 2.0 * 3f64.sqrt() * g.spacing));
        Ok(s)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
}

impl Sampler for GridSampler {
    fn jet(&self, p: Point, order: JetOrder) -> Result<Jet> {
        if order > self.order {
            return Err(Error::UnsupportedOrder { order: order as usize, max: self.order as usize });
        }
        let g = &self.grid;
        let mut base = [0i64; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            let u = (p[a] - g.origin[a]) / g.spacing;
            let n = g.dims[a] as f64;
            if !self.zero_outside && !(u >= 2.0 - 1e-9 && u <= n - 3.0 + 1e-9) {
                return Err(Error::OutOfDomain { point: p });
            }
            if !u.is_finite() {
                return Err(Error::OutOfDomain { point: p });
            }
            let i = u.floor().min(n - 3.0).max(1.0);
            let i = if self.zero_outside { u.floor() } else { i };
            base[a] = i as i64 - 1;
            w[a] = lagrange_weights(u - i);
        }
        let count = match order {
            JetOrder::Value => 1,
            JetOrder::Gradient => 4,
            JetOrder::Hessian => 10,
        };
        let mut acc = [0.0; 10];
        let dims = g.dims.map(|d| d as i64);
        for (di, wi) in w[0].iter().enumerate() {
            let i = base[0] + di as i64;
            if i < 0 || i >= dims[0] {
                continue;
            }
            for (dj, wj) in w[1].iter().enumerate() {
                let j = base[1] + dj as i64;
                if j < 0 || j >= dims[1] {
                    continue;
                }
                let wij = wi * wj;
                for (dk, wk) in w[2].iter().enumerate() {
                    let k = base[2] + dk as i64;
                    if k < 0 || k >= dims[2] {
                        continue;
                    }
                    let idx = g.index(i as usize, j as usize, k as usize);
                    let wt = wij * wk;
                    for (slot, f) in acc.iter_mut().zip(&self.fields).take(count) {
                        *slot += wt * f.values[idx];
                    }
                }
            }
        }
        let mut jet = Jet { value: acc[0], ..Jet::default() };
        if count >= 4 {
            jet.grad = [acc[1], acc[2], acc[3]];
        }
        if count == 10 {
            jet.hess.copy_from_slice(&acc[4..10]);
        }
        Ok(jet)
    }

    fn support(&self) -> Option<(Point, f64)> {
        self.support
    }
}
