//! Discrete energy and Sobolev norms (midpoint cell sums) and boundary
//! compatibility residuals.

use super::stencil::{derivative, gradient, laplacian};
use super::{DataPair, Obstacle, Point, ScalarField};
use crate::error::{Error, Result};

/// The two pieces of the energy norm, `||grad f0||` and `||f1||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdComponents {
    pub grad_f0: f64,
    pub f1: f64,
}

impl HdComponents {
    /// `||grad f0|| + ||f1||`
    pub fn sum(&self) -> f64 {
        self.grad_f0 + self.f1
    }

    /// `(||grad f0||^2 + ||f1||^2)^(1/2)`, the norm the free flow preserves.
    pub fn energy(&self) -> f64 {
        self.grad_f0.hypot(self.f1)
    }
}

fn masked_sq_sum(fields: &[&ScalarField], mask: &(impl Fn(Point) -> bool + ?Sized)) -> f64 {
    let grid = fields[0].grid;
    let mut acc = 0.0;
    for idx in 0..grid.len() {
        if mask(grid.point_of(idx)) {
            acc += fields.iter().map(|f| f.values[idx] * f.values[idx]).sum::<f64>();
        }
    }
    acc * grid.cell_volume()
}

pub fn hd_components(data: &DataPair, region: impl Fn(Point) -> bool) -> HdComponents {
    let g = gradient(&data.f0);
    HdComponents {
        grad_f0: masked_sq_sum(&[&g[0], &g[1], &g[2]], &region).sqrt(),
        f1: masked_sq_sum(&[&data.f1], &region).sqrt(),
    }
}

/// `||grad f0||_{L2} + ||f1||_{L2}` over the grid points selected by `region`.
/// An empty region gives 0.
pub fn energy_norm_hd(data: &DataPair, region: impl Fn(Point) -> bool) -> f64 {
    hd_components(data, region).sum()
}

/// All derivative fields of exact order `m` (0..=3), each with its
/// multiplicity in the full derivative tensor.
fn derivative_tensor(f: &ScalarField, m: usize) -> Vec<(ScalarField, f64)> {
    match m {
        0 => vec![(f.clone(), 1.0)],
        1 => gradient(f).into_iter().map(|g| (g, 1.0)).collect(),
        2 | 3 => {
            let mut second = Vec::new();
            for a in 0..3 {
                for b in a..3 {
                    let field = if a == b {
                        derivative(f, a, 2)
                    } else {
                        derivative(&derivative(f, a, 1), b, 1)
                    };
                    second.push(((a, b), field));
                }
            }
            if m == 2 {
                return second
                    .into_iter()
                    .map(|((a, b), fld)| (fld, if a == b { 1.0 } else { 2.0 }))
                    .collect();
            }
            let mut third = Vec::new();
            for ((a, b), fld) in &second {
                for c in *b..3 {
                    let idx = [*a, *b, c];
                    let distinct = {
                        let mut s = idx.to_vec();
                        s.dedup();
                        s.len()
                    };
                    let mult = match distinct {
                        1 => 1.0,
                        2 => 3.0,
                        _ => 6.0,
                    };
                    third.push((derivative(fld, c, 1), mult));
                }
            }
            third
        }
        _ => unreachable!(),
    }
}

fn sobolev_norm(f: &ScalarField, order: usize, region: &dyn Fn(Point) -> bool) -> f64 {
    (0..=order)
        .map(|m| {
            let terms = derivative_tensor(f, m);
            let grid = f.grid;
            let mut acc = 0.0;
            for idx in 0..grid.len() {
                if region(grid.point_of(idx)) {
                    acc += terms.iter().map(|(t, w)| w * t.values[idx] * t.values[idx]).sum::<f64>();
                }
            }
            (acc * grid.cell_volume()).sqrt()
        })
        .sum()
}

/// `||f0||_{H^{k+1}} + ||f1||_{H^k}`, each `H^m` norm being the sum of the
/// L2 norms of the full derivative tensors of order `0..=m`.
pub fn discrete_hk_norm(data: &DataPair, k: usize) -> Result<f64> {
    discrete_hk_norm_masked(data, k, |_| true)
}

pub fn discrete_hk_norm_masked(data: &DataPair, k: usize, region: impl Fn(Point) -> bool) -> Result<f64> {
    if k > 2 {
        return Err(Error::UnsupportedOrder { order: k, max: 2 });
    }
    Ok(sobolev_norm(&data.f0, k + 1, &region) + sobolev_norm(&data.f1, k, &region))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityReport {
    /// `max |f_j|` over the boundary band, for `j = 0..=m`.
    pub residuals: Vec<f64>,
    pub band_points: usize,
}

impl CompatibilityReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.max_residual() <= threshold
    }
}

/// Samples `f_0 = f0`, `f_1 = f1`, `f_j = lap f_{j-2}` on the staircase
/// boundary band `|signed distance| <= h`.
pub fn check_compatibility(data: &DataPair, obstacle: &Obstacle, m: usize) -> Result<CompatibilityReport> {
    if m > 4 {
        return Err(Error::UnsupportedOrder { order: m, max: 4 });
    }
    let grid = *data.grid();
    let h = grid.spacing;
    let band: Vec<usize> = {
        let [(i0, i1), (j0, j1), (k0, k1)] = grid.index_box(obstacle.center, obstacle.radius + 2.0 * h);
        let mut v = Vec::new();
        for i in i0..=i1 {
            for j in j0..=j1 {
                for k in k0..=k1 {
                    if obstacle.signed_distance(grid.point(i, j, k)).abs() <= h {
                        v.push(grid.index(i, j, k));
                    }
                }
            }
        }
        v
    };
    let mut levels: Vec<ScalarField> = vec![data.f0.clone(), data.f1.clone()];
    for j in 2..=m {
        let next = laplacian(&levels[j - 2]);
        levels.push(next);
    }
    let residuals = levels
        .iter()
        .take(m + 1)
        .map(|f| band.iter().map(|&i| f.values[i].abs()).fold(0.0, f64::max))
        .collect();
    Ok(CompatibilityReport { residuals, band_points: band.len() })
}
