//! Plane Radon transforms and the radiation field of free waves.
//!
//! For `n = 3` the radiation field of data `(f0, f1)` is
//! `F(s, eta) = (1 / 4 pi) (-d_s R[f0] + R[f1])`; the `s`-derivatives are
//! moved onto the data through `d_s R[phi] = R[eta . grad phi]`, so no
//! differencing in `s` is ever needed.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{dot3, norm3, stencil, DataPair, Point, ScalarField};
use crate::quadrature::{gauss_legendre, orthonormal_frame};
use crate::sampler::{JetOrder, Sampler};

/// Tensor Gauss-Legendre rule on `[-L, L]^2` in the plane coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneQuadrature {
    pub half_width: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PlaneQuadrature {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) || n == 0 {
            return Err(Error::InvalidParameter(format!(
                "plane quadrature needs L > 0 and n > 0, got L = {half_width}, n = {n}"
            )));
        }
        let (x, w) = gauss_legendre(n);
        Ok(Self {
            half_width,
            nodes: x.iter().map(|x| x * half_width).collect(),
            weights: w.iter().map(|w| w * half_width).collect(),
        })
    }

    /// Cutoff for data supported in `B_radius`: `L = radius + 1`.
    pub fn for_support(radius: f64, n: usize) -> Result<Self> {
        Self::new(radius + 1.0, n)
    }

    /// Cutoff for Gaussian-like data of width `scale`: the tail beyond `L - 1`
    /// is below `tol`.
    pub fn for_decay(scale: f64, tol: f64, n: usize) -> Result<Self> {
        Self::new(scale * (1.0 / tol).ln().sqrt() + 1.0, n)
    }
}

fn plane_sum(s: f64, eta: Point, quad: &PlaneQuadrature, mut f: impl FnMut(Point, f64) -> Result<()>) -> Result<()> {
    let [e1, e2] = orthonormal_frame(eta)?;
    for (p, wp) in quad.nodes.iter().zip(&quad.weights) {
        for (q, wq) in quad.nodes.iter().zip(&quad.weights) {
            let y = std::array::from_fn(|a| s * eta[a] + p * e1[a] + q * e2[a]);
            f(y, wp * wq)?;
        }
    }
    Ok(())
}

/// `int_{y . eta = s} phi(y) dS_y`
pub fn radon(phi: &dyn Sampler, s: f64, eta: Point, quad: &PlaneQuadrature) -> Result<f64> {
    let mut acc = 0.0;
    plane_sum(s, eta, quad, |y, w| {
        acc += w * phi.value(y)?;
        Ok(())
    })?;
    Ok(acc)
}

/// `d_s R[phi](s, eta) = R[eta . grad phi](s, eta)`
pub fn radon_s_derivative(phi: &dyn Sampler, s: f64, eta: Point, quad: &PlaneQuadrature) -> Result<f64> {
    let mut acc = 0.0;
    plane_sum(s, eta, quad, |y, w| {
        acc += w * phi.jet(y, JetOrder::Gradient)?.directional(eta);
        Ok(())
    })?;
    Ok(acc)
}

/// `(F, d_s F)` at `(s, eta)` for data `(f0, f1)`; `f0` needs Hessians and `f1` gradients.
pub fn radiation_field_eval(
    f0: &dyn Sampler,
    f1: &dyn Sampler,
    s: f64,
    eta: Point,
    quad: &PlaneQuadrature,
) -> Result<(f64, f64)> {
    let (mut r0d, mut r0dd, mut r1, mut r1d) = (0.0, 0.0, 0.0, 0.0);
    plane_sum(s, eta, quad, |y, w| {
        let j0 = f0.jet(y, JetOrder::Hessian)?;
        let j1 = f1.jet(y, JetOrder::Gradient)?;
        r0d += w * j0.directional(eta);
        r0dd += w * j0.second_directional(eta);
        r1 += w * j1.value;
        r1d += w * j1.directional(eta);
        Ok(())
    })?;
    let c = 1.0 / (4.0 * PI);
    Ok((c * (r1 - r0d), c * (r1d - r0dd)))
}

/// Coefficient and `s`-derivative counts of the radiation field in odd
/// dimension `n`: `F = c * sum_j (-d_s)^{k_j} R[f_j]` with
/// `c = 1 / (2 (2 pi)^((n-1)/2))` and `k_j = (n-1)/2 - j`.
pub fn radiation_formula(n: usize) -> Result<(f64, [usize; 2])> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidParameter(format!("radiation formula needs odd n >= 3, got {n}")));
    }
    let m = (n - 1) / 2;
    Ok((1.0 / (2.0 * (2.0 * PI).powi(m as i32)), [m, m - 1]))
}

/// Tabulated radiation field `F(s_i, eta_j)` and `d_s F`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationField {
    pub s_grid: Vec<f64>,
    pub directions: Vec<Point>,
    pub labels: Vec<String>,
    /// Row-major over `(s_i, eta_j)`.
    pub values: Vec<f64>,
    pub dvalues: Vec<f64>,
}

impl RadiationField {
    pub fn new(s_grid: Vec<f64>, directions: Vec<Point>, values: Vec<f64>, dvalues: Vec<f64>) -> Result<Self> {
        if s_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("s grid must be strictly increasing".into()));
        }
        let n = s_grid.len() * directions.len();
        if values.len() != n || dvalues.len() != n {
            return Err(Error::InvalidParameter(format!("expected {n} values per table")));
        }
        if values.iter().chain(&dvalues).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("radiation field values must be finite".into()));
        }
        let labels = (0..directions.len()).map(|j| format!("d{j}")).collect();
        Ok(Self { s_grid, directions, labels, values, dvalues })
    }

    pub fn get(&self, i: usize, j: usize) -> (f64, f64) {
        let k = i * self.directions.len() + j;
        (self.values[k], self.dvalues[k])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Largest `|F|` over `s` in `range` and all directions.
    pub fn max_abs_where(&self, keep: impl Fn(f64) -> bool) -> f64 {
        let nd = self.directions.len();
        let mut m: f64 = 0.0;
        for (i, &s) in self.s_grid.iter().enumerate() {
            if keep(s) {
                for j in 0..nd {
                    m = m.max(self.values[i * nd + j].abs());
                }
            }
        }
        m
    }

    /// Linear interpolation in `s`, nearest tabulated direction.
    pub fn interpolate(&self, s: f64, eta: Point) -> Result<(f64, f64)> {
        let g = &self.s_grid;
        if g.is_empty() || s < g[0] - 1e-12 || s > g[g.len() - 1] + 1e-12 {
            return Err(Error::InvalidParameter(format!("s = {s} outside the tabulated range")));
        }
        let j = self
            .directions
            .iter()
            .enumerate()
            .max_by(|a, b| dot3(*a.1, eta).partial_cmp(&dot3(*b.1, eta)).expect("finite"))
            .map(|(j, _)| j)
            .ok_or_else(|| Error::InvalidParameter("no directions tabulated".into()))?;
        if g.len() == 1 {
            return Ok(self.get(0, j));
        }
        let i = g.partition_point(|&x| x <= s).clamp(1, g.len() - 1) - 1;
        let w = ((s - g[i]) / (g[i + 1] - g[i])).clamp(0.0, 1.0);
        let (a, da) = self.get(i, j);
        let (b, db) = self.get(i + 1, j);
        Ok((a + w * (b - a), da + w * (db - da)))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,eta_x,eta_y,eta_z,F,dF")?;
        for (i, s) in self.s_grid.iter().enumerate() {
            for (j, d) in self.directions.iter().enumerate() {
                let (f, df) = self.get(i, j);
                writeln!(w, "{s:e},{:e},{:e},{:e},{f:e},{df:e}", d[0], d[1], d[2])?;
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<[f64; 6]> = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 {
                if line.trim() != "s,eta_x,eta_y,eta_z,F,dF" {
                    return Err(Error::Format(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            let row: [f64; 6] = v
                .try_into()
                .map_err(|_| Error::Format(format!("line {}: expected 6 columns", n + 1)))?;
            rows.push(row);
        }
        let mut s_grid: Vec<f64> = Vec::new();
        let mut directions: Vec<Point> = Vec::new();
        for r in &rows {
            if s_grid.last() != Some(&r[0]) {
                s_grid.push(r[0]);
            }
            if s_grid.len() == 1 {
                directions.push([r[1], r[2], r[3]]);
            }
        }
        if rows.len() != s_grid.len() * directions.len() {
            return Err(Error::Format("rows do not form a full (s, direction) table".into()));
        }
        let values = rows.iter().map(|r| r[4]).collect();
        let dvalues = rows.iter().map(|r| r[5]).collect();
        Self::new(s_grid, directions, values, dvalues)
    }
}

/// Tabulates [`radiation_field_eval`] over `s_grid x directions`.
pub fn radiation_field_profile(
    f0: &dyn Sampler,
    f1: &dyn Sampler,
    directions: &[Point],
    s_grid: &[f64],
    quad: &PlaneQuadrature,
) -> Result<RadiationField> {
    let nd = directions.len();
    let pairs: Vec<(f64, f64)> = (0..s_grid.len() * nd)
        .into_par_iter()
        .map(|k| radiation_field_eval(f0, f1, s_grid[k / nd], directions[k % nd], quad))
        .collect::<Result<_>>()?;
    let (values, dvalues) = pairs.into_iter().unzip();
    RadiationField::new(s_grid.to_vec(), directions.to_vec(), values, dvalues)
}

/// The 26 face, edge and corner directions of the cube as primitive integer
/// normals.
pub fn cube_normals() -> Vec<[i32; 3]> {
    let mut out = Vec::with_capacity(26);
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                if (i, j, k) != (0, 0, 0) {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

pub fn unit_normal(n: [i32; 3]) -> Point {
    let l = ((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]) as f64).sqrt();
    [n[0] as f64 / l, n[1] as f64 / l, n[2] as f64 / l]
}

/// Radon transforms of grid fields over the lattice planes `n . x = const`
/// for a primitive integer normal `n`: the plane integral is the lattice sum
/// times the area `h^2 |n|` per lattice point. Returns the plane offsets `s`
/// (increasing, spacing `h / |n|`) and one transform per input field.
pub fn lattice_radon(fields: &[&ScalarField], normal: [i32; 3]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let grid = fields
        .first()
        .ok_or_else(|| Error::InvalidParameter("no fields given".into()))?
        .grid;
    if fields.iter().any(|f| f.grid != grid) {
        return Err(Error::GridMismatch("lattice Radon fields on different grids".into()));
    }
    if normal == [0, 0, 0] {
        return Err(Error::InvalidDirection { norm: 0.0 });
    }
    let len = norm3(normal.map(f64::from));
    let h = grid.spacing;
    let dims = grid.dims.map(|d| d as i64);
    let n = normal.map(i64::from);
    let lo: i64 = (0..3).map(|a| (n[a] * (dims[a] - 1)).min(0)).sum();
    let hi: i64 = (0..3).map(|a| (n[a] * (dims[a] - 1)).max(0)).sum();
    let bins = (hi - lo + 1) as usize;
    let mut sums = vec![vec![0.0; bins]; fields.len()];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            let base = grid.index(i as usize, j as usize, 0);
            let m0 = n[0] * i + n[1] * j - lo;
            for k in 0..dims[2] {
                let b = (m0 + n[2] * k) as usize;
                for (acc, f) in sums.iter_mut().zip(fields) {
                    acc[b] += f.values[base + k as usize];
                }
            }
        }
    }
    let offset = dot3(normal.map(f64::from), grid.origin);
    let area = h * h * len;
    let s = (0..bins).map(|b| (offset + h * (b as i64 + lo) as f64) / len).collect();
    for acc in &mut sums {
        acc.iter_mut().for_each(|v| *v *= area);
    }
    Ok((s, sums))
}

/// Radiation field of grid data along the lattice direction `normal`, with
/// derivatives from fourth-order stencils. Returns `(s, F, d_s F)`.
pub fn lattice_radiation_field(data: &DataPair, normal: [i32; 3]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut out = lattice_radiation_fields(data, &[normal])?;
    Ok(out.remove(0))
}

/// [`lattice_radiation_field`] for several normals. `(eta . grad)^2 f0` is
/// the directional stencil applied twice, so only three scratch fields are
/// alive at a time.
pub fn lattice_radiation_fields(
    data: &DataPair,
    normals: &[[i32; 3]],
) -> Result<Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>> {
    let c = 1.0 / (4.0 * PI);
    normals
        .iter()
        .map(|&normal| {
            if normal == [0, 0, 0] {
                return Err(Error::InvalidDirection { norm: 0.0 });
            }
            let eta = unit_normal(normal);
            let d0 = stencil::directional(&data.f0, eta);
            let dd0 = stencil::directional(&d0, eta);
            let d1 = stencil::directional(&data.f1, eta);
            let (s, r) = lattice_radon(&[&d0, &data.f1, &dd0, &d1], normal)?;
            let f = r[1].iter().zip(&r[0]).map(|(a, b)| c * (a - b)).collect();
            let df = r[3].iter().zip(&r[2]).map(|(a, b)| c * (a - b)).collect();
            Ok((s, f, df))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::sampler::{Analytic, Profile, ValueFn, Zero};

    fn gauss() -> Analytic {
        Analytic::unit(Profile::Gaussian { sigma: 1.0, center: [0.0; 3] })
    }

    fn quad() -> PlaneQuadrature {
        PlaneQuadrature::for_decay(1.0, 1e-16, 48).unwrap()
    }

    #[test]
    fn gaussian_plane_integral() {
        let q = quad();
        let eta = [0.0, 0.6, 0.8];
        assert!((radon(&gauss(), 0.0, eta, &q).unwrap() - PI).abs() < 1e-12);
        for s in [1.0, 2.0] {
            let got = radon(&gauss(), s, eta, &q).unwrap();
            let exact = PI * (-s * s).exp();
            assert!((got - exact).abs() / exact < 1e-10);
        }
        assert!(matches!(radon(&gauss(), 0.0, [1.0, 1.0, 0.0], &q), Err(Error::InvalidDirection { .. })));
    }

    #[test]
    fn compact_support_and_rotational_symmetry() {
        let bump = Analytic::unit(Profile::Bump { r0: 0.0, width: 1.0, center: [0.0; 3] });
        let q = PlaneQuadrature::for_support(1.0, 40).unwrap();
        assert_eq!(radon(&bump, 1.2, [1.0, 0.0, 0.0], &q).unwrap(), 0.0);
        let a = radon(&gauss(), 0.7, [1.0, 0.0, 0.0], &quad()).unwrap();
        let b = radon(&gauss(), 0.7, unit_normal([1, -1, 1]), &quad()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn s_derivative_examples() {
        let q = quad();
        let eta = unit_normal([1, 2, 2]);
        let d = radon_s_derivative(&gauss(), 1.0, eta, &q).unwrap();
        assert!((d + 2.0 * PI / std::f64::consts::E).abs() < 1e-10);
        assert!(radon_s_derivative(&gauss(), 0.0, eta, &q).unwrap().abs() < 1e-14);
        let e = 1e-3;
        let fd = (radon(&gauss(), 0.4 + e, eta, &q).unwrap() - radon(&gauss(), 0.4 - e, eta, &q).unwrap()) / (2.0 * e);
        assert!((fd - radon_s_derivative(&gauss(), 0.4, eta, &q).unwrap()).abs() < 1e-5);
    }

    #[test]
    fn radiation_field_of_gaussians() {
        let q = quad();
        let eta = [1.0, 0.0, 0.0];
        let (f, df) = radiation_field_eval(&Zero, &gauss(), 0.0, eta, &q).unwrap();
        assert!((f - 0.25).abs() < 1e-12 && df.abs() < 1e-12);
        for s in [-0.5, 0.3, 1.1] {
            let (f, _) = radiation_field_eval(&gauss(), &Zero, s, eta, &q).unwrap();
            assert!((f - 0.5 * s * (-s * s).exp()).abs() < 1e-12);
        }
        assert_eq!(radiation_field_eval(&Zero, &Zero, 0.2, eta, &q).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn odd_dimension_formula() {
        let (c, k) = radiation_formula(3).unwrap();
        assert!((c - 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert_eq!(k, [1, 0]);
        assert_eq!(radiation_formula(5).unwrap().1, [2, 1]);
        assert!(radiation_formula(4).is_err());
    }

    #[test]
    fn profile_matches_pointwise_and_csv_roundtrip() {
        let q = quad();
        let dirs = [[1.0, 0.0, 0.0], unit_normal([1, 1, 0])];
        let s: Vec<f64> = (0..5).map(|i| -1.0 + 0.5 * i as f64).collect();
        let prof = radiation_field_profile(&Zero, &gauss(), &dirs, &s, &q).unwrap();
        assert_eq!(prof.get(2, 1), radiation_field_eval(&Zero, &gauss(), s[2], dirs[1], &q).unwrap());
        for i in 0..s.len() {
            assert!((prof.get(i, 0).0 - 0.25 * (-s[i] * s[i]).exp()).abs() < 1e-6);
            assert!((prof.get(i, 0).0 - prof.get(i, 1).0).abs() < 1e-8);
        }
        let mut buf = Vec::new();
        prof.write_csv(&mut buf).unwrap();
        let back = RadiationField::read_csv(&buf[..]).unwrap();
        assert_eq!(back.s_grid, prof.s_grid);
        assert_eq!(back.values, prof.values);
        assert_eq!(back.directions, prof.directions);
        let (f, _) = prof.interpolate(-0.25, [0.9, 0.1, 0.0]).unwrap();
        assert!((f - 0.5 * (prof.get(1, 0).0 + prof.get(2, 0).0)).abs() < 1e-15);
        assert!(prof.interpolate(2.0, dirs[0]).is_err());
    }

    #[test]
    fn exponential_weight_transfers_to_radon_decay() {
        let mu = 2.0;
        let phi = ValueFn(move |y: Point| (-2.0 * mu * (1.0 + dot3(y, y)).sqrt()).exp());
        let q = PlaneQuadrature::new(14.0, 160).unwrap();
        let pts: Vec<(f64, f64)> = (0..=15)
            .map(|i| {
                let s = 5.0 + i as f64;
                (s, radon(&phi, s, [0.0, 0.0, 1.0], &q).unwrap().ln())
            })
            .collect();
        let n = pts.len() as f64;
        let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let rate = -sxy / sxx;
        assert!(rate >= 1.9 * mu, "fitted exponent {rate}");
    }

    #[test]
    fn lattice_radon_matches_tensor_rule() {
        let g = GridSpec::centered(6.0, 0.1).unwrap();
        let data = DataPair::from_fns(g, |p| gauss().value(p).unwrap(), |p| 0.5 * gauss().value(p).unwrap());
        for normal in [[1, 0, 0], [1, -1, 0], [1, 1, 1]] {
            let (s, f, df) = lattice_radiation_field(&data, normal).unwrap();
            let eta = unit_normal(normal);
            let half = Analytic::new(Profile::Gaussian { sigma: 1.0, center: [0.0; 3] }, 0.5);
            for (i, &si) in s.iter().enumerate() {
                if si.abs() > 2.5 {
                    continue;
                }
                let (fe, dfe) = radiation_field_eval(&gauss(), &half, si, eta, &quad()).unwrap();
                assert!((f[i] - fe).abs() < 5e-5, "{normal:?} s={si}: {} vs {fe}", f[i]);
                assert!((df[i] - dfe).abs() < 5e-4, "{normal:?} s={si}: {} vs {dfe}", df[i]);
            }
        }
    }
}
