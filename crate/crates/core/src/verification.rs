//! The acceptance battery: eleven numbered criteria, each reported as rows of
//! `check,window_or_region,value,threshold,pass`.

use std::f64::consts::{PI, SQRT_2};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diagnostics::{
    fit_exponential_decay, fit_power_decay, huygens_audit, radiation_asymptotics_error, radiation_lower_audit,
    radiation_support_audit, DecayFit, Ray, ReportRow,
};
use crate::error::{Error, Result};
use crate::free::{kirchhoff_eval, kirchhoff_eval_full, kirchhoff_eval_localized, radial_gaussian_oracle};
use crate::grid::{norm3, smoothing_passes, DataPair, GridSpec, Obstacle, Point};
use crate::quadrature::SphereQuadrature;
use crate::radon::{cube_normals, radiation_field_eval, radon, radon_s_derivative, unit_normal, PlaneQuadrature, RadiationField};
use crate::sampler::{Analytic, JetOrder, Profile, Sampler, ValueFn, Zero};
use crate::scattering::{
    construct_scattering_data, weighted_sup_norm, ErrorSample, PeriodMode, ScatteringConfig, TraceSpec,
};
use crate::solver::{commensurate_dt, evolve, required_half_width, EvolveOptions, WaveState};

pub const CRITERIA: [(usize, &str); 11] = [
    (1, "kirchhoff correctness"),
    (2, "huygens principle"),
    (3, "free energy conservation"),
    (4, "radon identities"),
    (5, "exterior solver convergence"),
    (6, "local energy decay"),
    (7, "scattering contraction"),
    (8, "convergence to free flow"),
    (9, "radiation asymptotics"),
    (10, "radiation field support"),
    (11, "scattering data decay"),
];

/// Scale knobs of the battery. [`BatteryConfig::desk`] is the reference scale.
#[derive(Debug, Clone, PartialEq)]
pub struct BatteryConfig {
    /// Sphere rule degree for Kirchhoff evaluations (at least 23).
    pub sphere_degree: usize,
    /// Output spacing of the Huygens slabs.
    pub huygens_h: f64,
    /// Output spacing of the lattice on which the free energy is summed.
    pub energy_h: f64,
    /// Plane nodes per axis for Radon quadrature.
    pub plane_nodes: usize,
    /// Coarse and fine spacings of the convergence study.
    pub convergence_h: (f64, f64),
    /// Leapfrog steps of the discrete-energy drift run.
    pub drift_steps: usize,
    pub led_h: f64,
    /// Polar and azimuthal nodes of the localized Kirchhoff rule.
    pub cap_nodes: (usize, usize),
    pub scattering_h: f64,
    /// Repeat the scattering construction at `h / sqrt 2`.
    pub refine: bool,
    /// Overrides `dt / h` for every leapfrog run.
    pub courant: Option<f64>,
}

impl BatteryConfig {
    pub fn desk() -> Self {
        Self {
            sphere_degree: 31,
            huygens_h: 0.1,
            energy_h: 0.25,
            plane_nodes: 48,
            convergence_h: (0.1, 0.05),
            drift_steps: 1000,
            led_h: 0.1,
            cap_nodes: (48, 48),
            scattering_h: 0.1,
            refine: true,
            courant: None,
        }
    }

    /// Coarse settings that exercise every code path in seconds. Most
    /// criteria are not expected to pass at this scale.
    pub fn smoke() -> Self {
        Self {
            sphere_degree: 23,
            huygens_h: 0.25,
            energy_h: 0.5,
            plane_nodes: 48,
            convergence_h: (0.2, 0.1),
            drift_steps: 50,
            led_h: 0.25,
            cap_nodes: (16, 16),
            scattering_h: 0.25,
            refine: false,
            courant: None,
        }
    }

    fn dt(&self, h: f64, unit: f64) -> f64 {
        match self.courant {
            Some(c) => c * h,
            None => commensurate_dt(h, unit),
        }
    }
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionOutcome {
    pub id: usize,
    pub title: &'static str,
    pub rows: Vec<ReportRow>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    /// One line: id, title, verdict and the failing (or all) checks.
    pub fn summary(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let detail = match &self.error {
            Some(e) => format!("error: {e}"),
            None => self
                .rows
                .iter()
                .map(|r| format!("{} [{}] = {:.4e} (limit {:.3e}{})", r.check, r.window_or_region, r.value, r.threshold, if r.pass { "" } else { ", failed" }))
                .collect::<Vec<_>>()
                .join("; "),
        };
        format!("criterion {:2} {:<28} {verdict} ({:.1} s) {detail}", self.id, self.title, self.seconds)
    }

    /// Report rows, with an error row standing in for a run that aborted.
    pub fn report_rows(&self) -> Vec<ReportRow> {
        let mut rows: Vec<ReportRow> = self
            .rows
            .iter()
            .map(|r| ReportRow { check: format!("c{}.{}", self.id, r.check), ..r.clone() })
            .collect();
        if let Some(e) = &self.error {
            rows.push(ReportRow::new(format!("c{}.run", self.id), format!("error: {e}"), f64::NAN, f64::NAN, false));
        }
        rows
    }
}

/// Runs the selected criteria in order, calling `on_done` after each.
pub fn run_battery(cfg: &BatteryConfig, ids: &[usize], mut on_done: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    let mut scatter: Option<std::result::Result<ScatterSummary, String>> = None;
    let mut out = Vec::new();
    for &(id, title) in CRITERIA.iter().filter(|(id, _)| ids.contains(id)) {
        let start = Instant::now();
        let result = match id {
            1 => criterion_kirchhoff(cfg),
            2 => criterion_huygens(cfg),
            3 => criterion_free_energy(cfg),
            4 => criterion_radon(cfg),
            5 => criterion_convergence(cfg),
            6 => criterion_local_energy_decay(cfg),
            9 => criterion_asymptotics(cfg),
            _ => {
                let summary = scatter
                    .get_or_insert_with(|| scatter_summary(cfg, cfg.scattering_h, true).map_err(|e| e.to_string()));
                match summary {
                    Ok(s) => match id {
                        7 => Ok(criterion_contraction(s)),
                        8 => criterion_free_flow(s),
                        10 => criterion_radiation_support(s),
                        _ => criterion_data_decay(cfg, s),
                    },
                    Err(e) => Err(Error::InvalidParameter(format!("scattering run failed: {e}"))),
                }
            }
        };
        let (rows, error) = match result {
            Ok(rows) => (rows, None),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        let outcome = CriterionOutcome { id, title, rows, error, seconds: start.elapsed().as_secs_f64() };
        on_done(&outcome);
        out.push(outcome);
    }
    out
}

fn gaussian(sigma: f64, center: Point) -> Analytic {
    Analytic::unit(Profile::Gaussian { sigma, center })
}

fn check_degree(degree: usize) -> Result<()> {
    if degree < 23 {
        return Err(Error::InvalidParameter(format!("sphere degree {degree} is below 23")));
    }
    Ok(())
}

fn directions() -> [Point; 3] {
    let d = 1.0 / 3f64.sqrt();
    [[1.0, 0.0, 0.0], [d, d, d], [0.36, -0.48, 0.8]]
}

/// Kirchhoff evaluation of `(0, exp(-|y|^2))` against the radial oracle.
pub fn criterion_kirchhoff(cfg: &BatteryConfig) -> Result<Vec<ReportRow>> {
    check_degree(cfg.sphere_degree)?;
    let quad = SphereQuadrature::gauss_product(cfg.sphere_degree);
    let f1 = gaussian(1.0, [0.0; 3]);
    [1.0, 2.0, 3.0]
        .iter()
        .map(|&t| {
            let mut worst: f64 = 0.0;
            for w in directions() {
                for i in 0..=24 {
                    let r = 0.25 * i as f64;
                    let (u, _) = kirchhoff_eval(&Zero, &f1, t, w.map(|c| c * r), &quad)?;
                    worst = worst.max((u - radial_gaussian_oracle(t, r)).abs());
                }
            }
            Ok(ReportRow::at_most("max |u - oracle|", format!("t={t}, |x|<=6"), worst, 1e-4))
        })
        .collect()
}

fn slab(half_width: f64, h: f64, z0: f64) -> Result<GridSpec> {
    let n = (half_width / h).ceil() as usize;
    GridSpec::new([-(n as f64) * h, -(n as f64) * h, z0], h, [2 * n + 1, 2 * n + 1, 8])
}

/// Kirchhoff snapshots of bump data in `B_1`, audited outside the shell.
pub fn criterion_huygens(cfg: &BatteryConfig) -> Result<Vec<ReportRow>> {
    check_degree(cfg.sphere_degree)?;
    let quad = SphereQuadrature::gauss_product(cfg.sphere_degree);
    let f0 = Analytic::unit(Profile::Bump { r0: 0.0, width: 1.0, center: [0.0; 3] });
    let f1 = Analytic::new(Profile::Bump { r0: 0.3, width: 0.7, center: [0.0; 3] }, 0.5);
    let data_max = 1.0;
    let h = cfg.huygens_h;
    [2.0, 4.0]
        .iter()
        .map(|&t| {
            let mut worst: f64 = 0.0;
            for z0 in [-2.0 * h, 0.7] {
                let grid = slab(t + 2.0, h, z0)?;
                let vals: Vec<(f64, f64)> = (0..grid.len())
                    .into_par_iter()
                    .map(|idx| kirchhoff_eval(&f0, &f1, t, grid.point_of(idx), &quad))
                    .collect::<Result<_>>()?;
                let (u, ut): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
                let snap = DataPair::new(
                    crate::grid::ScalarField::new(grid, u)?,
                    crate::grid::ScalarField::new(grid, ut)?,
                )?;
                worst = worst.max(huygens_audit(1.0, t, &snap, data_max));
            }
            Ok(ReportRow::at_most("residual / max|data|", format!("t={t}, ||x|-t| > 1+3h"), worst, 1e-6))
        })
        .collect()
}

/// Energy norm of Kirchhoff output on a lattice, from exact point values.
fn kirchhoff_energy(f0: &Analytic, f1: &Analytic, t: f64, grid: &GridSpec, quad: &SphereQuadrature) -> Result<f64> {
    let sum: f64 = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let v = kirchhoff_eval_full(f0, f1, t, grid.point_of(idx), quad)?;
            Ok(v.ut * v.ut + v.grad.iter().map(|g| g * g).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    Ok((sum * grid.cell_volume()).sqrt())
}

pub fn criterion_free_energy(cfg: &BatteryConfig) -> Result<Vec<ReportRow>> {
    check_degree(cfg.sphere_degree)?;
    let quad = SphereQuadrature::gauss_product(cfg.sphere_degree);
    let f0 = gaussian(0.8, [0.25, 0.0, 0.0]);
    let f1 = gaussian(1.0, [0.0, 0.2, 0.0]);
    let grid = GridSpec::centered(7.5, cfg.energy_h)?;
    let e0 = kirchhoff_energy(&f0, &f1, 0.0, &grid, &quad)?;
    let mut drift: f64 = 0.0;
    for t in [1.0, 2.0, 3.0] {
        drift = drift.max((kirchhoff_energy(&f0, &f1, t, &grid, &quad)? / e0 - 1.0).abs());
    }
    Ok(vec![ReportRow::at_most("relative H_D norm drift", "t in [0,3]", drift, 5e-3)])
}

fn fd_s_derivative(phi: &dyn Sampler, s: f64, eta: Point, quad: &PlaneQuadrature) -> Result<f64> {
    let d = 1e-2;
    let r = |k: f64| radon(phi, s + k * d, eta, quad);
    Ok((8.0 * (r(1.0)? - r(-1.0)?) - (r(2.0)? - r(-2.0)?)) / (12.0 * d))
}

fn random_unit(rng: &mut ChaCha8Rng) -> Point {
    loop {
        let p: Point = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = norm3(p);
        if n > 0.1 && n <= 1.0 {
            return p.map(|c| c / n);
        }
    }
}

pub fn criterion_radon(cfg: &BatteryConfig) -> Result<Vec<ReportRow>> {
    let quad = PlaneQuadrature::for_decay(1.0, 1e-16, cfg.plane_nodes)?;
    let centred = gaussian(1.0, [0.0; 3]);
    let mut rows = Vec::new();
    for s in [0.0f64, 1.0, 2.0] {
        let exact = PI * (-s * s).exp();
        let got = radon(&centred, s, [0.0, 0.6, 0.8], &quad)?;
        rows.push(ReportRow::at_most("relative error vs pi exp(-s^2)", format!("s={s}"), (got - exact).abs() / exact, 1e-6));
    }
    let phi = gaussian(1.0, [0.3, -0.2, 0.1]);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5ca7);
    let (mut deri01, mut deri03): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let s = rng.gen_range(-2.0..2.0);
        let eta = random_unit(&mut rng);
        let i = rng.gen_range(0..3usize);
        let ds = fd_s_derivative(&phi, s, eta, &quad)?;
        deri01 = deri01.max((ds - radon_s_derivative(&phi, s, eta, &quad)?).abs());
        let partial = ValueFn(|p: Point| phi.jet(p, JetOrder::Gradient).map(|j| j.grad[i]).unwrap_or(f64::NAN));
        deri03 = deri03.max((radon(&partial, s, eta, &quad)? - eta[i] * ds).abs());
    }
    rows.push(ReportRow::at_most("|d_s R[phi] - R[D_eta phi]|", "20 random (s, eta)", deri01, 1e-5));
    rows.push(ReportRow::at_most("|R[d_i phi] - eta_i d_s R[phi]|", "20 random (s, eta, i)", deri03, 1e-5));
    Ok(rows)
}

/// Max error against the radial oracle over `B_3` at `t = 2`.
fn fdtd_oracle_error(cfg: &BatteryConfig, h: f64) -> Result<f64> {
    let b = 3.0;
    let t = 2.0;
    let opts = EvolveOptions { observe_radius: Some(b), ..EvolveOptions::default() };
    let a = gaussian(1.0, [0.0; 3]).profile.extent(opts.support_tol);
    let grid = GridSpec::centered(required_half_width(a, t, h, Some(b)) + h, h)?;
    let f1 = gaussian(1.0, [0.0; 3]);
    let data = DataPair::from_fns(grid, |_| 0.0, |p| f1.value(p).unwrap_or(0.0));
    let dt = match cfg.courant {
        Some(c) => c * h,
        None => 0.4 * h,
    };
    let ev = evolve(&data, None, t, dt, &[t], &opts)?;
    let (_, snap) = ev.snapshots.first().ok_or_else(|| Error::InvalidParameter("missing snapshot".into()))?;
    let g = snap.grid();
    Ok((0..g.len())
        .filter(|&i| norm3(g.point_of(i)) <= b)
        .map(|i| (snap.f0.values[i] - radial_gaussian_oracle(t, norm3(g.point_of(i)))).abs())
        .fold(0.0, f64::max))
}

fn ring(r0: f64, sigma: f64) -> impl Fn(Point) -> f64 + Sync {
    move |p| (-(norm3(p) - r0).powi(2) / (sigma * sigma)).exp()
}

/// Obstacle and data of the local-energy runs.
pub fn led_setup() -> (Obstacle, f64, f64) {
    (Obstacle::new([0.2, 0.0, 0.0], 0.5).expect("valid obstacle"), 1.4, 0.14)
}

pub fn criterion_convergence(cfg: &BatteryConfig) -> Result<Vec<ReportRow>> {
    let (h1, h2) = cfg.convergence_h;
    let e1 = fdtd_oracle_error(cfg, h1)?;
    let e2 = fdtd_oracle_error(cfg, h2)?;
    let order = (e1 / e2).ln() / (h1 / h2).ln();
    let mut rows = vec![ReportRow::at_least("observed order", format!("h={h1} vs h={h2}, t=2, B_3"), order, 1.9)];

    let (obstacle, r0, sigma) = led_setup();
    let grid = GridSpec::centered(3.0, h1)?;
    let data = DataPair::from_fns(grid, ring(r0, sigma), |_| 0.0);
    let mut state = WaveState::init(&data, Some(&obstacle), cfg.dt(h1, 1.0))?;
    let e0 = state.discrete_energy();
    let mut drift: f64 = 0.0;
    for n in 1..=cfg.drift_steps {
        state.step()?;
        if n % 10 == 0 || n == cfg.drift_steps {
            drift = drift.max((state.discrete_energy() / e0 - 1.0).abs());
        }
    }
    state.check_finite()?;
    rows.push(ReportRow::at_most(
        "relative discrete energy drift",
        format!("{} steps with obstacle", cfg.drift_steps),
        drift,
        1e-4,
    ));
    Ok(rows)
}

/// Local energy in `Omega_2` sampled every quarter time unit up to `t = 12`.
pub fn led_samples(cfg: &BatteryConfig) -> Result<Vec<(f64, f64)>> {
    let h = cfg.led_h;
    let (obstacle, r0, sigma) = led_setup();
    let t_final = 12.0;
    let opts = EvolveOptions { local_radius: 2.0, trace_every: 0, observe_radius: Some(2.0), support_tol: 1e-12 };
    let a = r0 + sigma * (1e12f64).ln().sqrt();
    let grid = GridSpec::centered(required_half_width(a, t_final, h, Some(2.0)) + 0.5, h)?;
    let data = DataPair::from_fns(grid, ring(r0, sigma), |_| 0.0);
    let dt = cfg.dt(h, 0.25);
    let every = ((0.25 / dt).round() as usize).max(1);
    let ev = evolve(&data, Some(&obstacle), t_final, dt, &[], &EvolveOptions { trace_every: every, ..opts })?;
    Ok(ev.trace.local_samples())
}

pub fn criterion_local_energy_decay(cfg: &BatteryConfig) -> Result<Vec<ReportRow>> {
    let samples = led_samples(cfg)?;
    let fit = fit_exponential_decay(&samples, (4.0, 12.0))?;
    Ok(vec![
        ReportRow::new("sigma_fit", "Omega_2, t in [4,12]", fit.rate, 0.0, fit.rate > 0.0),
        ReportRow::at_least("r^2", "Omega_2, t in [4,12]", fit.r_squared, 0.95),
    ])
}

/// Off-centre Cauchy data of the asymptotics check.
fn asymptotic_data() -> (Analytic, Analytic, Point) {
    let c = [0.6, -0.4, 0.3];
    (Analytic::new(Profile::Gaussian { sigma: 0.8, center: c }, 0.5), gaussian(1.0, c), c)
}

/// Radiation field of the asymptotics data on `s in [-1.5, 1.5]` along the 26 cube directions.
pub fn asymptotic_radiation_field(cfg: &BatteryConfig) -> Result<RadiationField> {
    let (f0, f1, _) = asymptotic_data();
    let quad = PlaneQuadrature::for_decay(1.0, 1e-16, cfg.plane_nodes)?;
    let s_grid: Vec<f64> = (-30..=30).map(|i| i as f64 * 0.05).collect();
    let dirs: Vec<Point> = cube_normals().into_iter().map(unit_normal).collect();
    let pairs: Vec<(f64, f64)> = s_grid
        .par_iter()
        .flat_map_iter(|&s| dirs.iter().map(move |&eta| (s, eta)).collect::<Vec<_>>())
        .map(|(s, eta)| radiation_field_eval(&f0, &f1, s, eta, &quad))
        .collect::<Result<_>>()?;
    let (values, dvalues) = pairs.into_iter().unzip();
    RadiationField::new(s_grid, dirs, values, dvalues)
}

pub const ASYMPTOTIC_TIMES: [f64; 7] = [4.0, 5.656854249492381, 8.0, 11.313708498984761, 16.0, 22.627416997969522, 32.0];

/// `(t, max |u - F/r|, max |u_t + F'/r|, max |d_j u - w_j F'/r|)` over `s in {-1, 0, 1}` and 26 directions.
pub fn asymptotic_residuals(cfg: &BatteryConfig) -> Result<Vec<(f64, f64, f64, f64)>> {
    let field = asymptotic_radiation_field(cfg)?;
    let (f0, f1, c) = asymptotic_data();
    let source = |t: f64, x: Point| kirchhoff_eval_localized(&f0, &f1, t, x, (c, 6.5), cfg.cap_nodes);
    ASYMPTOTIC_TIMES
        .iter()
        .map(|&t| {
            let rays: Vec<Ray> = field
                .directions
                .iter()
                .flat_map(|&eta| [-1.0, 0.0, 1.0].map(|s| Ray { t, s, eta }))
                .collect();
            let res = radiation_asymptotics_error(source, &field, &rays)?;
            let max = |f: fn(&crate::diagnostics::RayResidual) -> f64| res.iter().map(f).fold(0.0, f64::max);
            Ok((t, max(|r| r.u), max(|r| r.ut), max(|r| r.grad)))
        })
        .collect()
}

pub fn criterion_asymptotics(cfg: &BatteryConfig) -> Result<Vec<ReportRow>> {
    let res = asymptotic_residuals(cfg)?;
    let window = (4.0, 32.0);
    let mut rows = Vec::new();
    for (name, pick) in [
        ("u - F/r", 1usize),
        ("d_t u + d_s F/r", 2),
        ("d_j u - w_j d_s F/r", 3),
    ] {
        let samples: Vec<(f64, f64)> = res.iter().map(|r| (r.0, [r.1, r.2, r.3][pick - 1])).collect();
        let fit = fit_power_decay(&samples, window)?;
        rows.push(ReportRow::at_most(
            format!("|slope + 2| of {name}"),
            format!("t in [4,32], slope {:.3}, r^2 {:.3}", -fit.rate, fit.r_squared),
            (fit.rate - 2.0).abs(),
            0.4,
        ));
    }
    Ok(rows)
}

/// Data of the scattering criteria on the lattice of spacing `h`: a smooth
/// bump beside the obstacle, low-pass filtered to a fixed physical width.
pub fn scattering_setup(h: f64) -> Result<(DataPair, Obstacle)> {
    let obstacle = Obstacle::new([0.5, 0.0, 0.0], 0.4)?;
    let bump = Analytic::unit(Profile::Bump { r0: 0.0, width: 0.45, center: [-0.95, 0.0, 0.0] });
    let grid = GridSpec::centered(2.0 + 6.0 * h, h)?;
    let mut data = DataPair::from_fns(grid, |p| bump.value(p).unwrap_or(0.0), |_| 0.0);
    data.f0.binomial_smooth(smoothing_passes(0.02f64.sqrt(), h));
    Ok((data, obstacle))
}

/// Everything the scattering criteria need from one construction run.
#[derive(Debug, Clone)]
pub struct ScatterSummary {
    pub h: f64,
    pub period: f64,
    pub ratios: Vec<f64>,
    pub increments: Vec<f64>,
    pub initial_norm: f64,
    pub error_trace: Vec<ErrorSample>,
    pub fit: Option<std::result::Result<DecayFit, String>>,
    /// `max |F| over s >= 2` and `s <= -2`, relative to `max |F|`.
    pub radiation: Option<(f64, f64)>,
    /// `(mu, weighted sup norm of f_+)`.
    pub weighted_sup: Option<(f64, f64)>,
}

pub const SCATTERING_J: usize = 4;
pub const TRACE_RADIUS: f64 = 3.0;

/// One scattering construction. With `full`, also traces the error over
/// `[T, 3T]`, fits it and computes the radiation field of `f_+`.
pub fn scatter_summary(cfg: &BatteryConfig, h: f64, full: bool) -> Result<ScatterSummary> {
    let (data, obstacle) = scattering_setup(h)?;
    let mut sc = ScatteringConfig::new(h);
    sc.dt = cfg.dt(h, 1.0);
    if full {
        // the automatic period is a* + 2 = 5 for this data
        sc.trace = Some(TraceSpec { t_min: 5.0, t_max: 15.0, step: 0.25, radius: TRACE_RADIUS, mu: None });
    }
    let result = construct_scattering_data(&data, &obstacle, PeriodMode::Auto, SCATTERING_J, &sc)?;
    let mut summary = ScatterSummary {
        h,
        period: result.period,
        ratios: result.ratios(),
        increments: result.increments(),
        initial_norm: result.initial_norm,
        error_trace: result.error_trace.clone(),
        fit: None,
        radiation: None,
        weighted_sup: None,
    };
    if full {
        let t = result.period;
        let samples: Vec<(f64, f64)> = result.error_trace.iter().map(|e| (e.t, e.error)).collect();
        summary.fit = Some(fit_exponential_decay(&samples, (t - 1e-9, 3.0 * t + 1e-9)).map_err(|e| e.to_string()));
        let field = result.radiation_field(&cube_normals())?;
        summary.radiation = Some((radiation_support_audit(&field, 2.0)?, radiation_lower_audit(&field, 2.0)));
        if let Some(Ok(fit)) = &summary.fit {
            let mu = 0.5 * fit.rate;
            summary.weighted_sup = Some((mu, weighted_sup_norm(&result.f_plus, mu, 0)?));
        }
    }
    Ok(summary)
}

pub fn criterion_contraction(s: &ScatterSummary) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (j, rho) in s.ratios.iter().take(3).enumerate() {
        rows.push(ReportRow::at_most(format!("rho_{j}"), format!("auto T = {}", s.period), *rho, 0.5));
    }
    for j in 1..s.increments.len().min(4) {
        let q = s.increments[j] / s.increments[j - 1];
        rows.push(ReportRow::at_most(
            format!("|increment ratio_{j} - rho_{}|", j - 1),
            format!("ratio {q:.4e} vs rho {:.4e}", s.ratios[j - 1]),
            (q - s.ratios[j - 1]).abs(),
            0.15,
        ));
    }
    rows
}

pub fn criterion_free_flow(s: &ScatterSummary) -> Result<Vec<ReportRow>> {
    let fit = match &s.fit {
        Some(Ok(fit)) => *fit,
        Some(Err(e)) => return Err(Error::InvalidSample(e.clone())),
        None => return Err(Error::InvalidParameter("the run carried no error trace".into())),
    };
    let window = format!("Omega_3, t in [{}, {}]", fit.window.0.round(), fit.window.1.round());
    let terminal = s
        .error_trace
        .iter()
        .filter(|e| e.t <= fit.window.1)
        .last()
        .map(|e| e.error / s.initial_norm)
        .unwrap_or(f64::NAN);
    Ok(vec![
        ReportRow::new("mu_fit", window.clone(), fit.rate, 0.0, fit.rate > 0.0),
        ReportRow::at_least("r^2", window.clone(), fit.r_squared, 0.9),
        ReportRow::at_most("terminal error / initial norm", window, terminal, 0.05),
    ])
}

pub fn criterion_radiation_support(s: &ScatterSummary) -> Result<Vec<ReportRow>> {
    let (upper, lower) = s.radiation.ok_or_else(|| Error::InvalidParameter("radiation field not computed".into()))?;
    Ok(vec![
        ReportRow::at_most("max|F| over s>=2 / max|F|", "26 lattice directions", upper, 1e-3),
        ReportRow::new("max|F| over s<=-2 / max|F|", "not asserted", lower, f64::INFINITY, true),
    ])
}

pub fn criterion_data_decay(cfg: &BatteryConfig, s: &ScatterSummary) -> Result<Vec<ReportRow>> {
    let (mu, coarse) = s
        .weighted_sup
        .ok_or_else(|| Error::InvalidParameter("no decay rate from the error fit".into()))?;
    let mut rows = vec![ReportRow::new("weighted sup norm", format!("h={}, mu={mu:.4}", s.h), coarse, f64::INFINITY, coarse.is_finite())];
    if cfg.refine {
        let h = s.h / SQRT_2;
        let (data, obstacle) = scattering_setup(h)?;
        let mut sc = ScatteringConfig::new(h);
        sc.dt = cfg.dt(h, 1.0);
        let fine = weighted_sup_norm(
            &construct_scattering_data(&data, &obstacle, PeriodMode::Auto, SCATTERING_J, &sc)?.f_plus,
            mu,
            0,
        )?;
        rows.push(ReportRow::at_most(
            "relative change",
            format!("h={} vs h={h:.4}, mu={mu:.4}", s.h),
            (fine - coarse).abs() / coarse,
            0.1,
        ));
    }
    Ok(rows)
}
