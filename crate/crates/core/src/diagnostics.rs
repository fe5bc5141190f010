//! Rate fits, support audits and radiation-field asymptotics.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::free::WaveValue;
use crate::grid::{norm3, DataPair, Point};
use crate::radon::RadiationField;

/// Fits with a lower `r^2` do not support a rate claim.
pub const R2_GATE: f64 = 0.95;
pub const MIN_FIT_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayModel {
    /// `e(t) ~ C exp(-rate t)`
    Exponential,
    /// `e(t) ~ C t^(-rate)`
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    pub rate: f64,
    /// Intercept of the fitted line in log space.
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

impl DecayFit {
    /// The rate, if the fit clears [`R2_GATE`].
    pub fn rate_claim(&self) -> Option<f64> {
        (self.r_squared >= R2_GATE).then_some(self.rate)
    }

    pub fn describe(&self) -> String {
        match self.rate_claim() {
            Some(rate) => format!("rate {rate:.4} (r^2 {:.4})", self.r_squared),
            None => format!("no rate extracted (r^2 {:.4})", self.r_squared),
        }
    }
}

/// Least-squares line `y = slope x + intercept` with its `r^2`. A constant
/// `y` is fitted exactly and reported with `r^2 = 1`.
fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let r2 = if syy <= 1e-300 { 1.0 } else { (1.0 - ss_res / syy).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

fn fit(samples: &[(f64, f64)], window: (f64, f64), model: DecayModel) -> Result<DecayFit> {
    if !(window.0 < window.1) {
        return Err(Error::InvalidSample(format!("empty window [{}, {}]", window.0, window.1)));
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for &(t, e) in samples.iter().filter(|(t, _)| *t >= window.0 && *t <= window.1) {
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::InvalidSample(format!("value {e} at t = {t} is not positive")));
        }
        match model {
            DecayModel::Exponential => x.push(t),
            DecayModel::Power if t > 0.0 => x.push(t.ln()),
            DecayModel::Power => return Err(Error::InvalidSample(format!("power fit needs t > 0, got {t}"))),
        }
        y.push(e.ln());
    }
    if x.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidSample(format!(
            "{} samples in [{}, {}], need at least {MIN_FIT_POINTS}",
            x.len(),
            window.0,
            window.1
        )));
    }
    let (slope, intercept, r_squared) = line_fit(&x, &y);
    Ok(DecayFit { model, rate: -slope, intercept, r_squared, window, n_points: x.len() })
}

/// Least squares on `(t, ln e)` over the samples with `t` in `window`.
pub fn fit_exponential_decay(samples: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    fit(samples, window, DecayModel::Exponential)
}

/// Least squares on `(ln t, ln e)` over the samples with `t` in `window`.
pub fn fit_power_decay(samples: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    fit(samples, window, DecayModel::Power)
}

/// Start of every fit window: local-energy constants dominate before it.
pub fn t_burn(a: f64, obstacle_diameter: f64) -> f64 {
    a + 2.0 * obstacle_diameter
}

/// Largest `|u|` or `|u_t|` of a free snapshot at time `t` outside the shell
/// `||x| - |t|| <= a + 3h`, relative to `data_max`.
pub fn huygens_audit(a: f64, t: f64, snapshot: &DataPair, data_max: f64) -> f64 {
    let grid = snapshot.grid();
    let band = a + 3.0 * grid.spacing;
    let mut worst: f64 = 0.0;
    for idx in 0..grid.len() {
        if (norm3(grid.point_of(idx)) - t.abs()).abs() > band {
            worst = worst.max(snapshot.f0.values[idx].abs()).max(snapshot.f1.values[idx].abs());
        }
    }
    if data_max > 0.0 {
        worst / data_max
    } else {
        worst
    }
}

/// A point `x = (t + s) eta` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub t: f64,
    pub s: f64,
    pub eta: Point,
}

impl Ray {
    pub fn r(&self) -> f64 {
        self.t + self.s
    }

    pub fn point(&self) -> Point {
        let r = self.r();
        [r * self.eta[0], r * self.eta[1], r * self.eta[2]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayResidual {
    pub ray: Ray,
    /// `|u - F / r|`
    pub u: f64,
    /// `|u_t + d_s F / r|`
    pub ut: f64,
    /// `max_j |d_j u - eta_j d_s F / r|`
    pub grad: f64,
}

/// Residuals of `u(t, r eta) ~ F(r - t, eta) / r` and of its first
/// derivatives along each ray. Rays must satisfy `r >= t/2 >= 1`.
pub fn radiation_asymptotics_error(
    u_source: impl Fn(f64, Point) -> Result<WaveValue>,
    field: &RadiationField,
    rays: &[Ray],
) -> Result<Vec<RayResidual>> {
    rays.iter()
        .map(|ray| {
            let r = ray.r();
            if !(ray.t >= 2.0 && r >= 0.5 * ray.t) {
                return Err(Error::Hypothesis { t: ray.t, r });
            }
            let v = u_source(ray.t, ray.point())?;
            let (f, df) = field.interpolate(ray.s, ray.eta)?;
            let grad = (0..3).map(|j| (v.grad[j] - ray.eta[j] * df / r).abs()).fold(0.0, f64::max);
            Ok(RayResidual { ray: *ray, u: (v.u - f / r).abs(), ut: (v.ut + df / r).abs(), grad })
        })
        .collect()
}

/// First-order members of the commuting family: `d_t u`, `d_j u` and the
/// rotations `O_ij u = x_i d_j u - x_j d_i u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFirstOrder {
    pub dt: f64,
    pub dx: [f64; 3],
    /// `O_12, O_13, O_23`
    pub rotations: [f64; 3],
}

pub fn gamma_first_order(
    fields: impl Fn(f64, Point) -> Result<WaveValue>,
    t: f64,
    x: Point,
) -> Result<GammaFirstOrder> {
    let v = fields(t, x)?;
    let g = v.grad;
    let o = |i: usize, j: usize| x[i] * g[j] - x[j] * g[i];
    Ok(GammaFirstOrder { dt: v.ut, dx: g, rotations: [o(0, 1), o(0, 2), o(1, 2)] })
}

/// `max |F|` over `s >= a`, relative to `max |F|`.
pub fn radiation_support_audit(field: &RadiationField, a: f64) -> Result<f64> {
    let top = field.s_grid.last().copied().unwrap_or(f64::NEG_INFINITY);
    if top < a {
        return Err(Error::InvalidParameter(format!("radiation field ends at s = {top}, below a = {a}")));
    }
    let all = field.max_abs();
    if all == 0.0 {
        return Ok(0.0);
    }
    Ok(field.max_abs_where(|s| s >= a) / all)
}

/// `max |F|` over `s <= -a`, relative to `max |F|`.
pub fn radiation_lower_audit(field: &RadiationField, a: f64) -> f64 {
    let all = field.max_abs();
    if all == 0.0 {
        return 0.0;
    }
    field.max_abs_where(|s| s <= -a) / all
}

pub const REPORT_HEADER: &str = "check,window_or_region,value,threshold,pass";

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub check: String,
    pub window_or_region: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl ReportRow {
    pub fn new(check: impl Into<String>, region: impl Into<String>, value: f64, threshold: f64, pass: bool) -> Self {
        Self { check: check.into(), window_or_region: region.into(), value, threshold, pass }
    }

    /// Passes when `value <= threshold`.
    pub fn at_most(check: impl Into<String>, region: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(check, region, value, threshold, value <= threshold)
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(check: impl Into<String>, region: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(check, region, value, threshold, value >= threshold)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn write_report<W: Write>(rows: &[ReportRow], mut w: W) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{:e},{:e},{}",
            csv_field(&r.check),
            csv_field(&r.window_or_region),
            r.value,
            r.threshold,
            r.pass
        )?;
    }
    Ok(())
}

fn split_csv(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

pub fn read_report<R: BufRead>(r: R) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != REPORT_HEADER {
                return Err(Error::Format(format!("unexpected report header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols = split_csv(&line);
        if cols.len() != 5 {
            return Err(Error::Format(format!("report line {}: expected 5 columns", n + 1)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("report line {}: {e}", n + 1)));
        let pass = match cols[4].as_str() {
            "true" => true,
            "false" => false,
            other => return Err(Error::Format(format!("report line {}: pass flag {other:?}", n + 1))),
        };
        rows.push(ReportRow {
            check: cols[0].clone(),
            window_or_region: cols[1].clone(),
            value: num(&cols[2])?,
            threshold: num(&cols[3])?,
            pass,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free::kirchhoff_eval_full;
    use crate::grid::GridSpec;
    use crate::quadrature::SphereQuadrature;
    use crate::sampler::{Analytic, Profile, Zero};

    fn samples(f: impl Fn(f64) -> f64, t0: f64, t1: f64, n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).map(|t| (t, f(t))).collect()
    }

    #[test]
    fn exponential_fit_examples() {
        let fit = fit_exponential_decay(&samples(|t| (-2.0 * t).exp(), 0.0, 5.0, 21), (0.0, 5.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_points, 21);
        let flat = fit_exponential_decay(&samples(|_| 5.0, 0.0, 5.0, 11), (0.0, 5.0)).unwrap();
        assert!(flat.rate.abs() < 1e-12);
        let wobbly =
            fit_exponential_decay(&samples(|t| (-t).exp() * (1.0 + 0.01 * t.sin()), 0.0, 10.0, 101), (0.0, 10.0))
                .unwrap();
        assert!((wobbly.rate - 1.0).abs() <= 0.02);
    }

    #[test]
    fn power_fit_examples() {
        let fit = fit_power_decay(&samples(|t| t.powi(-2), 1.0, 10.0, 20), (1.0, 10.0)).unwrap();
        assert!((fit.rate - 2.0).abs() < 1e-12);
        let skewed = fit_power_decay(&samples(|t| 3.0 * t.powi(-2) * (1.0 + 1.0 / t), 8.0, 64.0, 30), (8.0, 64.0)).unwrap();
        assert!((skewed.rate - 2.0).abs() <= 0.1);
        let flat = fit_power_decay(&samples(|_| 1.0, 1.0, 4.0, 6), (1.0, 4.0)).unwrap();
        assert!(flat.rate.abs() < 1e-12);
    }

    #[test]
    fn fits_reject_bad_samples() {
        let mut s = samples(|t| (-t).exp(), 0.0, 1.0, 6);
        s[2].1 = 0.0;
        assert!(matches!(fit_exponential_decay(&s, (0.0, 1.0)), Err(Error::InvalidSample(_))));
        let few = samples(|t| (-t).exp(), 0.0, 1.0, 4);
        assert!(matches!(fit_exponential_decay(&few, (0.0, 1.0)), Err(Error::InvalidSample(_))));
        let zero_t = samples(|t| 1.0 + t, 0.0, 1.0, 6);
        assert!(fit_power_decay(&zero_t, (0.0, 1.0)).is_err());
    }

    #[test]
    fn rate_claims_are_gated() {
        let noisy: Vec<(f64, f64)> =
            (0..20).map(|i| (i as f64, if i % 2 == 0 { 1.0 } else { 0.1 } * (-0.01 * i as f64).exp())).collect();
        let fit = fit_exponential_decay(&noisy, (0.0, 19.0)).unwrap();
        assert!(fit.rate_claim().is_none());
        assert!(fit.describe().starts_with("no rate extracted"));
        assert_eq!(t_burn(2.0, 1.0), 4.0);
    }

    #[test]
    fn huygens_audit_of_zero_snapshot() {
        let grid = GridSpec::centered(2.0, 0.1).unwrap();
        assert_eq!(huygens_audit(1.0, 0.0, &DataPair::zeros(grid), 1.0), 0.0);
        let data = DataPair::from_fns(grid, |p| if norm3(p) < 1.0 { 1.0 - norm3(p) } else { 0.0 }, |_| 0.0);
        assert_eq!(huygens_audit(1.0, 0.0, &data, 1.0), 0.0);
        assert!(huygens_audit(0.5, 0.0, &data, 1.0) > 0.0);
    }

    fn table(values: impl Fn(f64) -> (f64, f64)) -> RadiationField {
        let s_grid: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.1).collect();
        let directions = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut v = Vec::new();
        let mut dv = Vec::new();
        for &s in &s_grid {
            for _ in 0..3 {
                let (a, b) = values(s);
                v.push(a);
                dv.push(b);
            }
        }
        RadiationField::new(s_grid, directions, v, dv).unwrap()
    }

    #[test]
    fn exact_profiles_have_zero_residual() {
        // piecewise-linear profile, so linear interpolation is exact
        let prof = |s: f64| (1.0 - s.abs()).max(0.0);
        let slope = |s: f64| if s.abs() < 1.0 { -s.signum() } else { 0.0 };
        let field = table(|s| (prof(s), slope(s)));
        let source = |t: f64, x: Point| -> Result<WaveValue> {
            let r = norm3(x);
            let s = r - t;
            let w = [x[0] / r, x[1] / r, x[2] / r];
            Ok(WaveValue { u: prof(s) / r, ut: -slope(s) / r, grad: w.map(|c| c * slope(s) / r) })
        };
        let rays: Vec<Ray> = [0.35, -0.5, 0.0]
            .iter()
            .map(|&s| Ray { t: 4.0, s, eta: [0.0, 1.0, 0.0] })
            .collect();
        for res in radiation_asymptotics_error(source, &field, &rays).unwrap() {
            assert!(res.u < 1e-15 && res.ut < 1e-15 && res.grad < 1e-15);
        }
        let zero = table(|_| (0.0, 0.0));
        let res = radiation_asymptotics_error(|_, _| Ok(WaveValue::default()), &zero, &rays).unwrap();
        assert!(res.iter().all(|r| r.u == 0.0 && r.ut == 0.0 && r.grad == 0.0));
    }

    #[test]
    fn rays_outside_the_validity_region_are_rejected() {
        let zero = table(|_| (0.0, 0.0));
        let bad = [Ray { t: 1.0, s: 0.0, eta: [1.0, 0.0, 0.0] }];
        let err = radiation_asymptotics_error(|_, _| Ok(WaveValue::default()), &zero, &bad);
        assert!(matches!(err, Err(Error::Hypothesis { .. })));
        let inside_cone = [Ray { t: 8.0, s: -5.0, eta: [1.0, 0.0, 0.0] }];
        assert!(radiation_asymptotics_error(|_, _| Ok(WaveValue::default()), &zero, &inside_cone).is_err());
    }

    #[test]
    fn rotations_of_simple_fields() {
        let linear = |_: f64, _: Point| Ok(WaveValue { u: 0.0, ut: 0.0, grad: [1.0, 0.0, 0.0] });
        let g = gamma_first_order(linear, 0.0, [0.3, -0.7, 2.0]).unwrap();
        assert!((g.rotations[0] - 0.7).abs() < 1e-15);
        let radial = |_: f64, x: Point| Ok(WaveValue { u: 0.0, ut: 0.0, grad: x.map(|c| -2.0 * c) });
        let g = gamma_first_order(radial, 0.0, [0.3, -0.7, 2.0]).unwrap();
        assert!(g.rotations.iter().all(|o| o.abs() < 1e-15));
    }

    #[test]
    fn rotations_of_a_kirchhoff_gaussian_vanish() {
        let f1 = Analytic::unit(Profile::Gaussian { sigma: 1.0, center: [0.0; 3] });
        let quad = SphereQuadrature::gauss_product(31);
        for x in [[0.4, 1.1, -0.3], [2.0, 0.5, 0.5]] {
            let eval = |t: f64, x: Point| kirchhoff_eval_full(&Zero, &f1, t, x, &quad);
            let g = gamma_first_order(eval, 2.0, x).unwrap();
            assert!(g.rotations.iter().all(|o| o.abs() < 1e-4), "{:?}", g.rotations);
        }
    }

    #[test]
    fn leibniz_rule_for_rotations() {
        let u = |x: Point| (x[0] * x[1]).sin() + x[2];
        let du = |x: Point| [x[1] * (x[0] * x[1]).cos(), x[0] * (x[0] * x[1]).cos(), 1.0];
        fn v(x: Point) -> f64 {
            (-(x[0] * x[0] + 2.0 * x[2] * x[2])).exp()
        }
        fn dv(x: Point) -> Point {
            [-2.0 * x[0] * v(x), 0.0, -4.0 * x[2] * v(x)]
        }
        let x = [0.7, -0.2, 0.4];
        let single = |f: fn(Point) -> f64, df: fn(Point) -> Point| {
            gamma_first_order(move |_, p| Ok(WaveValue { u: f(p), ut: 0.0, grad: df(p) }), 0.0, x).unwrap()
        };
        let gu = single(u, du);
        let gv = single(v, dv);
        let gp = gamma_first_order(
            |_, p| {
                let (a, b) = (du(p), dv(p));
                Ok(WaveValue { u: u(p) * v(p), ut: 0.0, grad: std::array::from_fn(|k| a[k] * v(p) + u(p) * b[k]) })
            },
            0.0,
            x,
        )
        .unwrap();
        for k in 0..3 {
            let rhs = u(x) * gv.rotations[k] + v(x) * gu.rotations[k];
            assert!((gp.rotations[k] - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn support_audit() {
        let zero = table(|_| (0.0, 0.0));
        assert_eq!(radiation_support_audit(&zero, 2.0).unwrap(), 0.0);
        let bump = table(|s| ((1.0 - s * s).max(0.0), 0.0));
        assert_eq!(radiation_support_audit(&bump, 1.0).unwrap(), 0.0);
        assert_eq!(radiation_lower_audit(&bump, 1.0), 0.0);
        assert!(radiation_support_audit(&bump, 0.5).unwrap() > 0.5);
        assert!(radiation_support_audit(&bump, 10.0).is_err());
    }

    #[test]
    fn report_round_trip() {
        let rows = vec![
            ReportRow::at_most("huygens", "t=2, outside shell", 3.2e-8, 1e-6),
            ReportRow::at_least("led fit r2", "Omega_2, [4,12]", 0.93, 0.95),
        ];
        assert!(rows[0].pass && !rows[1].pass);
        let mut buf = Vec::new();
        write_report(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("check,window_or_region,value,threshold,pass\n"));
        assert_eq!(read_report(&buf[..]).unwrap(), rows);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn exponential_rate_ignores_scale_and_shift(
                rate in 0.05f64..3.0, c in 1e-3f64..1e3, shift in -5.0f64..5.0, wobble in 0.0f64..0.2,
            ) {
                let base = samples(|t| (-rate * t).exp() * (1.0 + wobble * (3.0 * t).sin().abs()), 0.0, 6.0, 25);
                let moved: Vec<_> = base.iter().map(|&(t, e)| (t + shift, c * e)).collect();
                let a = fit_exponential_decay(&base, (0.0, 6.0)).unwrap();
                let b = fit_exponential_decay(&moved, (shift - 1e-9, 6.0 + shift + 1e-9)).unwrap();
                prop_assert!((a.rate - b.rate).abs() < 1e-9);
                prop_assert!((a.r_squared - b.r_squared).abs() < 1e-9);
            }

            #[test]
            fn power_rate_ignores_value_and_time_scale(
                p in 0.1f64..4.0, c in 1e-3f64..1e3, lambda in 0.2f64..5.0,
            ) {
                let base = samples(|t| t.powf(-p) * (1.0 + 0.5 / t), 2.0, 20.0, 20);
                let scaled: Vec<_> = base.iter().map(|&(t, e)| (lambda * t, c * e)).collect();
                let a = fit_power_decay(&base, (2.0, 20.0)).unwrap();
                let b = fit_power_decay(&scaled, (2.0 * lambda * (1.0 - 1e-12), 20.0 * lambda * (1.0 + 1e-12))).unwrap();
                prop_assert!((a.rate - b.rate).abs() < 1e-9);
            }
        }
    }
}
