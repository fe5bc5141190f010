//! Fourth-order finite-difference stencils.
//!
//! Central five-point stencils in the interior; one-sided fourth-order
//! stencils in the two-point band next to each face.

use rayon::prelude::*;

use super::{GridSpec, ScalarField};

const D1_CENTRAL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];
const D1_EDGE0: [f64; 5] = [-25.0, 48.0, -36.0, 16.0, -3.0];
const D1_EDGE1: [f64; 5] = [-3.0, -10.0, 18.0, -6.0, 1.0];

const D2_CENTRAL: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
const D2_EDGE0: [f64; 6] = [45.0, -154.0, 214.0, -156.0, 61.0, -10.0];
const D2_EDGE1: [f64; 6] = [10.0, -15.0, -4.0, 14.0, -6.0, 1.0];

/// Derivative of order 1 or 2 along one axis at position `m` of a line of
/// `n` samples, without the `1/h^order` factor. `fetch(q)` returns sample `q`.
#[inline]
pub(crate) fn line_derivative(order: usize, m: usize, n: usize, fetch: impl Fn(usize) -> f64) -> f64 {
    let (central, edge0, edge1): (&[f64], &[f64], &[f64]) = match order {
        1 => (&D1_CENTRAL, &D1_EDGE0, &D1_EDGE1),
        2 => (&D2_CENTRAL, &D2_EDGE0, &D2_EDGE1),
        _ => unreachable!("only first and second derivatives have stencils"),
    };
    let acc = if m >= 2 && m + 2 < n {
        central.iter().enumerate().map(|(q, w)| w * fetch(m + q - 2)).sum::<f64>()
    } else if m < 2 {
        let w = if m == 0 { edge0 } else { edge1 };
        w.iter().enumerate().map(|(q, w)| w * fetch(q)).sum::<f64>()
    } else {
        let mirrored = n - 1 - m;
        let w = if mirrored == 0 { edge0 } else { edge1 };
        let sign = if order == 1 { -1.0 } else { 1.0 };
        sign * w.iter().enumerate().map(|(q, w)| w * fetch(n - 1 - q)).sum::<f64>()
    };
    acc / 12.0
}

/// Partial derivative of order 1 or 2 along `axis`.
pub fn derivative(field: &ScalarField, axis: usize, order: usize) -> ScalarField {
    let grid = field.grid;
    let n = grid.dims[axis];
    let stride = grid.strides()[axis];
    let scale = grid.spacing.powi(order as i32).recip();
    let v = &field.values;
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let m = grid.coords(idx)[axis];
            let base = idx - m * stride;
            scale * line_derivative(order, m, n, |q| v[base + q * stride])
        })
        .collect();
    ScalarField { grid, values }
}

pub fn gradient(field: &ScalarField) -> [ScalarField; 3] {
    [derivative(field, 0, 1), derivative(field, 1, 1), derivative(field, 2, 1)]
}

pub fn laplacian(field: &ScalarField) -> ScalarField {
    let grid = field.grid;
    let v = &field.values;
    let inv_h2 = grid.spacing.powi(2).recip();
    let strides = grid.strides();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let c = grid.coords(idx);
            let mut acc = 0.0;
            for a in 0..3 {
                let base = idx - c[a] * strides[a];
                acc += line_derivative(2, c[a], grid.dims[a], |q| v[base + q * strides[a]]);
            }
            inv_h2 * acc
        })
        .collect();
    ScalarField { grid, values }
}

/// Directional derivative `eta . grad f`.
pub fn directional(field: &ScalarField, eta: [f64; 3]) -> ScalarField {
    let grid = field.grid;
    let v = &field.values;
    let inv_h = grid.spacing.recip();
    let strides = grid.strides();
    let values = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let c = grid.coords(idx);
            let mut acc = 0.0;
            for a in 0..3 {
                if eta[a] != 0.0 {
                    let base = idx - c[a] * strides[a];
                    acc += eta[a] * line_derivative(1, c[a], grid.dims[a], |q| v[base + q * strides[a]]);
                }
            }
            inv_h * acc
        })
        .collect();
    ScalarField { grid, values }
}

/// Second derivatives in the order `xx, yy, zz, xy, xz, yz`.
pub fn hessian(field: &ScalarField) -> [ScalarField; 6] {
    let [dx, dy, _] = gradient(field);
    [
        derivative(field, 0, 2),
        derivative(field, 1, 2),
        derivative(field, 2, 2),
        derivative(&dx, 1, 1),
        derivative(&dx, 2, 1),
        derivative(&dy, 2, 1),
    ]
}

/// Gradient at a single grid point.
pub fn gradient_at(field: &ScalarField, c: [usize; 3]) -> [f64; 3] {
    let grid: &GridSpec = &field.grid;
    let strides = grid.strides();
    let idx = grid.index(c[0], c[1], c[2]);
    let v = &field.values;
    std::array::from_fn(|a| {
        let base = idx - c[a] * strides[a];
        line_derivative(1, c[a], grid.dims[a], |q| v[base + q * strides[a]]) / grid.spacing
    })
}
