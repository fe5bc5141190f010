//! Free-space propagator in three dimensions via spherical means.
//!
//! With `Q[phi](t, x)` the mean of `phi` over the sphere of radius `|t|`
//! about `x`, the solution of the Cauchy problem is
//! `u = d/dt (t Q[f0]) + t Q[f1]`, valid for all real `t`.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{norm3, DataPair, GridSpec, Point, ScalarField};
use crate::quadrature::{localized_rule, SphereQuadrature};
use crate::sampler::{GridSampler, JetOrder, Sampler};

/// `(1 / 4 pi) sum_i w_i phi(x + t theta_i)`
pub fn spherical_mean(phi: &dyn Sampler, t: f64, x: Point, quad: &SphereQuadrature) -> Result<f64> {
    let mut acc = 0.0;
    for (th, w) in quad.nodes.iter().zip(&quad.weights) {
        let y = [x[0] + t * th[0], x[1] + t * th[1], x[2] + t * th[2]];
        acc += w * phi.value(y)?;
    }
    Ok(acc / (4.0 * PI))
}

/// `(u, d_t u, grad u)` at one space-time point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WaveValue {
    pub u: f64,
    pub ut: f64,
    pub grad: [f64; 3],
}

fn misses_support(s: &dyn Sampler, t: f64, x: Point) -> bool {
    match s.support() {
        Some((c, a)) => {
            let d = norm3([x[0] - c[0], x[1] - c[1], x[2] - c[2]]);
            (d - t.abs()).abs() > a
        }
        None => false,
    }
}

fn kirchhoff_impl(
    f0: &dyn Sampler,
    f1: &dyn Sampler,
    t: f64,
    x: Point,
    quad: &SphereQuadrature,
    with_grad: bool,
) -> Result<WaveValue> {
    if misses_support(f0, t, x) && misses_support(f1, t, x) {
        return Ok(WaveValue::default());
    }
    let (mut q0, mut a, mut lap, mut q1, mut b) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut g0, mut hth, mut g1) = ([0.0; 3], [0.0; 3], [0.0; 3]);
    for (th, w) in quad.nodes.iter().zip(&quad.weights) {
        let y = [x[0] + t * th[0], x[1] + t * th[1], x[2] + t * th[2]];
        let j0 = f0.jet(y, JetOrder::Hessian)?;
        let j1 = f1.jet(y, JetOrder::Gradient)?;
        q0 += w * j0.value;
        a += w * j0.directional(*th);
        lap += w * j0.laplacian();
        q1 += w * j1.value;
        b += w * j1.directional(*th);
        if with_grad {
            let h = j0.hess_apply(*th);
            for c in 0..3 {
                g0[c] += w * j0.grad[c];
                hth[c] += w * h[c];
                g1[c] += w * j1.grad[c];
            }
        }
    }
    let s = 1.0 / (4.0 * PI);
    Ok(WaveValue {
        u: s * (q0 + t * a + t * q1),
        ut: s * (t * lap + q1 + t * b),
        grad: std::array::from_fn(|c| s * (g0[c] + t * hth[c] + t * g1[c])),
    })
}

/// `(u, d_t u)` of the free solution with data `(f0, f1)` at `(t, x)`.
/// `f0` must provide Hessians and `f1` gradients.
pub fn kirchhoff_eval(
    f0: &dyn Sampler,
    f1: &dyn Sampler,
    t: f64,
    x: Point,
    quad: &SphereQuadrature,
) -> Result<(f64, f64)> {
    let v = kirchhoff_impl(f0, f1, t, x, quad, false)?;
    Ok((v.u, v.ut))
}

/// As [`kirchhoff_eval`], also returning `grad u`.
pub fn kirchhoff_eval_full(
    f0: &dyn Sampler,
    f1: &dyn Sampler,
    t: f64,
    x: Point,
    quad: &SphereQuadrature,
) -> Result<WaveValue> {
    kirchhoff_impl(f0, f1, t, x, quad, true)
}

/// Kirchhoff evaluation for data effectively supported in `B_radius(center)`,
/// integrating only over the part of the sphere that meets the ball. Suited
/// to large `|t|` where the integrand is sharply peaked.
pub fn kirchhoff_eval_localized(
    f0: &dyn Sampler,
    f1: &dyn Sampler,
    t: f64,
    x: Point,
    support: (Point, f64),
    nodes: (usize, usize),
) -> Result<WaveValue> {
    let quad = localized_rule(x, t, support.0, support.1, nodes.0, nodes.1)?;
    kirchhoff_impl(f0, f1, t, x, &quad, true)
}

/// Half-width a grid of data needs so that every sphere of radius `|t|`
/// about a point of `out` stays two cells inside it.
fn required_data_reach(out: &GridSpec, t: f64, h: f64) -> f64 {
    let up = out.upper();
    (0..3)
        .map(|a| out.origin[a].abs().max(up[a].abs()))
        .fold(0.0, f64::max)
        + t.abs()
        + 2.0 * h
}

fn evolve_with(sampler0: &GridSampler, sampler1: &GridSampler, t: f64, out: GridSpec, quad: &SphereQuadrature) -> Result<DataPair> {
    let vals: Vec<(f64, f64)> = (0..out.len())
        .into_par_iter()
        .map(|idx| kirchhoff_eval(sampler0, sampler1, t, out.point_of(idx), quad))
        .collect::<Result<_>>()?;
    let (u, ut): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
    Ok(DataPair { f0: ScalarField { grid: out, values: u }, f1: ScalarField { grid: out, values: ut } })
}

/// `U_0(t)` applied to grid data, evaluated on the points of `out`.
/// Requires the data box to contain every sphere of radius `|t|` about an
/// output point with a two-cell margin.
pub fn free_evolve_grid(data: &DataPair, t: f64, out: GridSpec, quad: &SphereQuadrature) -> Result<DataPair> {
    let g = data.grid();
    let required = required_data_reach(&out, t, g.spacing);
    let available = (0..3)
        .map(|a| (-g.origin[a]).min(g.upper()[a]))
        .fold(f64::INFINITY, f64::min);
    if available + 1e-9 < required {
        return Err(Error::DomainMargin {
            what: format!("free evolution by t = {t}"),
            required,
            available,
        });
    }
    let s0 = GridSampler::new(&data.f0, JetOrder::Hessian);
    let s1 = GridSampler::new(&data.f1, JetOrder::Gradient);
    evolve_with(&s0, &s1, t, out, quad)
}

/// As [`free_evolve_grid`] for data that vanish (below `tol * max`) near the
/// box faces; samples outside the box are taken as zero.
pub fn free_evolve_grid_compact(
    data: &DataPair,
    t: f64,
    out: GridSpec,
    quad: &SphereQuadrature,
    tol: f64,
) -> Result<DataPair> {
    let s0 = GridSampler::zero_extended(&data.f0, JetOrder::Hessian, tol)?;
    let s1 = GridSampler::zero_extended(&data.f1, JetOrder::Gradient, tol)?;
    evolve_with(&s0, &s1, t, out, quad)
}

/// `u(t, r)` for data `(0, exp(-r^2))`.
pub fn radial_gaussian_oracle(t: f64, r: f64) -> f64 {
    if r < 1e-6 {
        // limit r -> 0 of the difference quotient
        return t * (-t * t).exp() * (1.0 + (2.0 * t * t - 3.0) * r * r / 3.0);
    }
    ((-(r - t).powi(2)).exp() - (-(r + t).powi(2)).exp()) / (4.0 * r)
}
