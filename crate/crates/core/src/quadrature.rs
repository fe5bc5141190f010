//! One-dimensional Gauss-Legendre and Fejér rules and product quadratures on
//! the unit sphere.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{dot3, norm3, Point};

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton iteration on the
/// three-term recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p0 = 1.0;
                p1 = z;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Fejér's second rule on `[-1, 1]` (interior Chebyshev extrema), exact for
/// polynomials of degree `n - 1`.
pub fn fejer2(n: usize) -> (Vec<f64>, Vec<f64>) {
    let m = (n + 1) as f64;
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for k in 1..=n {
        let th = k as f64 * PI / m;
        let s: f64 = (1..=n.div_ceil(2))
            .map(|j| ((2 * j - 1) as f64 * th).sin() / (2 * j - 1) as f64)
            .sum();
        x.push(-th.cos());
        w.push(4.0 * th.sin() / m * s);
    }
    (x, w)
}

/// Orthonormal pair spanning the plane orthogonal to the unit vector `eta`,
/// by Gram-Schmidt against the coordinate axis least aligned with `eta`.
pub fn orthonormal_frame(eta: Point) -> Result<[Point; 2]> {
    let n = norm3(eta);
    if !((n - 1.0).abs() <= 1e-12) {
        return Err(Error::InvalidDirection { norm: n });
    }
    let axis = (0..3)
        .min_by(|&a, &b| eta[a].abs().partial_cmp(&eta[b].abs()).expect("finite direction"))
        .expect("three axes");
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let d = dot3(e, eta);
    let mut e1 = [e[0] - d * eta[0], e[1] - d * eta[1], e[2] - d * eta[2]];
    let l = norm3(e1);
    e1 = [e1[0] / l, e1[1] / l, e1[2] / l];
    let e2 = [
        eta[1] * e1[2] - eta[2] * e1[1],
        eta[2] * e1[0] - eta[0] * e1[2],
        eta[0] * e1[1] - eta[1] * e1[0],
    ];
    Ok([e1, e2])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SphereRuleKind {
    GaussProduct,
    FejerProduct,
    /// Product rule over a polar cap; not a full-sphere rule.
    Cap,
}

/// Nodes on the unit sphere with positive weights (summing to `4 pi` for
/// full-sphere rules).
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Spherical harmonics up to this degree are integrated exactly (0 for caps).
    pub degree: usize,
    pub kind: SphereRuleKind,
}

impl SphereQuadrature {
    fn product(z: &[f64], wz: &[f64], n_az: usize, frame: [Point; 3]) -> (Vec<Point>, Vec<f64>) {
        let [e1, e2, axis] = frame;
        let dphi = 2.0 * PI / n_az as f64;
        let mut nodes = Vec::with_capacity(z.len() * n_az);
        let mut weights = Vec::with_capacity(z.len() * n_az);
        for (&zi, &wi) in z.iter().zip(wz) {
            let s = (1.0 - zi * zi).max(0.0).sqrt();
            for k in 0..n_az {
                let phi = (k as f64 + 0.5) * dphi;
                let (c1, c2) = (s * phi.cos(), s * phi.sin());
                nodes.push(std::array::from_fn(|a| c1 * e1[a] + c2 * e2[a] + zi * axis[a]));
                weights.push(wi * dphi);
            }
        }
        (nodes, weights)
    }

    fn frame_for(axis: Point) -> Result<[Point; 3]> {
        let [e1, e2] = orthonormal_frame(axis)?;
        Ok([e1, e2, axis])
    }

    /// Gauss-Legendre in `cos(theta)` times a uniform azimuth rule, exact to `degree`.
    pub fn gauss_product(degree: usize) -> Self {
        Self::gauss_product_oriented(degree, [0.0, 0.0, 1.0]).expect("z axis is a unit vector")
    }

    /// As [`SphereQuadrature::gauss_product`] with the polar axis along `axis`.
    pub fn gauss_product_oriented(degree: usize, axis: Point) -> Result<Self> {
        let (z, wz) = gauss_legendre(degree.div_ceil(2).max(1) + usize::from(degree % 2 == 0));
        let (nodes, weights) = Self::product(&z, &wz, degree + 1, Self::frame_for(axis)?);
        Ok(Self { nodes, weights, degree, kind: SphereRuleKind::GaussProduct })
    }

    /// Fejér-2 in `cos(theta)` times uniform azimuth; an independent rule of the same degree.
    pub fn fejer_product(degree: usize) -> Self {
        let (z, wz) = fejer2(degree + 1);
        let frame = Self::frame_for([0.0, 0.0, 1.0]).expect("unit axis");
        let (nodes, weights) = Self::product(&z, &wz, degree + 1, frame);
        Self { nodes, weights, degree, kind: SphereRuleKind::FejerProduct }
    }

    /// Product rule on the cap `{theta : theta . axis >= cos_min}`.
    pub fn cap(axis: Point, cos_min: f64, n_polar: usize, n_az: usize) -> Result<Self> {
        let cos_min = cos_min.clamp(-1.0, 1.0);
        let (z, wz) = gauss_legendre(n_polar);
        let half = 0.5 * (1.0 - cos_min);
        let z: Vec<f64> = z.iter().map(|t| cos_min + half * (t + 1.0)).collect();
        let wz: Vec<f64> = wz.iter().map(|w| w * half).collect();
        let (nodes, weights) = Self::product(&z, &wz, n_az, Self::frame_for(axis)?);
        Ok(Self { nodes, weights, degree: 0, kind: SphereRuleKind::Cap })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Rule for integrating over the sphere `|y - x| = |t|` a function supported
/// in the ball `B_radius(center)`: a cap rule covering the intersection, an
/// empty rule if the sphere misses the ball, and a full rule (`degree`) if the
/// ball swallows the whole sphere.
pub fn localized_rule(
    x: Point,
    t: f64,
    center: Point,
    radius: f64,
    n_polar: usize,
    n_az: usize,
) -> Result<SphereQuadrature> {
    let rho = t.abs();
    let v = [center[0] - x[0], center[1] - x[1], center[2] - x[2]];
    let d = norm3(v);
    if rho == 0.0 || d < 1e-12 {
        return Ok(SphereQuadrature::gauss_product(2 * n_polar - 1));
    }
    let cos_min = (rho * rho + d * d - radius * radius) / (2.0 * rho * d);
    if cos_min >= 1.0 {
        return Ok(SphereQuadrature { nodes: vec![], weights: vec![], degree: 0, kind: SphereRuleKind::Cap });
    }
    if cos_min <= -1.0 {
        return Ok(SphereQuadrature::gauss_product(2 * n_polar - 1));
    }
    // nodes sit at x + t theta; for t < 0 the cap points away from the ball
    let s = t.signum();
    SphereQuadrature::cap([s * v[0] / d, s * v[1] / d, s * v[2] / d], cos_min, n_polar, n_az)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for deg in 0..16 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((got - exact).abs() < 1e-14, "degree {deg}");
        }
        let (x1, w1) = gauss_legendre(1);
        assert_eq!((x1[0], w1[0]), (0.0, 2.0));
    }

    #[test]
    fn fejer_integrates_polynomials() {
        let n = 12;
        let (x, w) = fejer2(n);
        for deg in 0..n as i32 {
            let got: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((got - exact).abs() < 1e-13, "degree {deg}");
        }
    }

    fn monomial_sphere_integral(a: i32, b: i32, c: i32) -> f64 {
        // 2 Gamma(A) Gamma(B) Gamma(C) / Gamma(A+B+C) with A = (a+1)/2 etc.
        if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
            return 0.0;
        }
        fn gamma_half(k: i32) -> f64 {
            // Gamma(k/2) for positive integer k
            if k == 1 {
                PI.sqrt()
            } else if k == 2 {
                1.0
            } else {
                (k as f64 / 2.0 - 1.0) * gamma_half(k - 2)
            }
        }
        2.0 * gamma_half(a + 1) * gamma_half(b + 1) * gamma_half(c + 1) / gamma_half(a + b + c + 3)
    }

    #[test]
    fn sphere_rules_exact_to_degree() {
        for rule in [
            SphereQuadrature::gauss_product(23),
            SphereQuadrature::fejer_product(23),
            SphereQuadrature::gauss_product_oriented(23, [0.6, 0.0, 0.8]).unwrap(),
        ] {
            assert!((rule.area() - 4.0 * PI).abs() < 1e-12);
            assert!(rule.nodes.iter().all(|n| (norm3(*n) - 1.0).abs() < 1e-14));
            for (a, b, c) in [(0, 0, 0), (2, 0, 0), (4, 6, 2), (10, 8, 4), (3, 1, 0), (22, 0, 0), (7, 9, 6)] {
                let got: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[0].powi(a) * p[1].powi(b) * p[2].powi(c))
                    .sum();
                let exact = monomial_sphere_integral(a, b, c);
                assert!((got - exact).abs() < 1e-12, "{:?} x^{a} y^{b} z^{c}: {got} vs {exact}", rule.kind);
            }
        }
    }

    #[test]
    fn frame_is_orthonormal() {
        for eta in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [1.0 / 3f64.sqrt(); 3]] {
            let [e1, e2] = orthonormal_frame(eta).unwrap();
            assert!(dot3(e1, e2).abs() < 1e-14 && dot3(e1, eta).abs() < 1e-14 && dot3(e2, eta).abs() < 1e-14);
            assert!((norm3(e1) - 1.0).abs() < 1e-14 && (norm3(e2) - 1.0).abs() < 1e-14);
        }
        assert!(matches!(orthonormal_frame([1.0, 1.0, 0.0]), Err(Error::InvalidDirection { .. })));
    }

    #[test]
    fn cap_area_and_localized_cases() {
        let cap = SphereQuadrature::cap([0.0, 0.0, 1.0], 0.5, 10, 16).unwrap();
        assert!((cap.area() - PI).abs() < 1e-12);
        let miss = localized_rule([5.0, 0.0, 0.0], 1.0, [0.0; 3], 1.0, 8, 8).unwrap();
        assert!(miss.is_empty());
        let full = localized_rule([0.1, 0.0, 0.0], 0.5, [0.0; 3], 2.0, 8, 8).unwrap();
        assert!((full.area() - 4.0 * PI).abs() < 1e-12);
        let part = localized_rule([3.0, 0.0, 0.0], 3.0, [0.0; 3], 1.0, 8, 8).unwrap();
        assert!(part.nodes.iter().all(|n| n[0] < 0.0));
        let back = localized_rule([3.0, 0.0, 0.0], -3.0, [0.0; 3], 1.0, 8, 8).unwrap();
        assert!(back.nodes.iter().all(|n| n[0] > 0.0));
    }
}
