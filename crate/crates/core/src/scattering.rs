//! Scattering data by iterated decomposition of the exterior flow.
//!
//! Each round runs the exterior flow for a period `T`, extends the state at
//! `T - 2` across the obstacle, evolves that extension freely for the
//! remaining two units (`g_{j+1}`) and keeps the remainder `f_{j+1}`, which
//! lives near the obstacle. The scattering data is then
//! `f_+ = sum_j U_0(-jT) g_j`.
//!
//! Every flow here is a leapfrog flow on one lattice with one time step, and
//! states move between flows as pairs of time levels. That keeps the
//! splitting `U(T) f_j = g_{j+1} + f_{j+1}` and the time reversal behind
//! `U_0(-jT)` exact up to round-off, so the support checks see only genuine
//! scattering and not mismatched discretisations.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{bracket, hd_components, norm3, stencil, DataPair, GridSpec, Obstacle, ScalarField};
use crate::radon::{lattice_radiation_fields, unit_normal, RadiationField};
use crate::solver::{commensurate_dt, WaveState};

/// `f_j` (for `j >= 1`) is supported in this ball.
pub const LOCAL_RADIUS: f64 = 3.0;
/// Target contraction ratio for the automatic choice of `T`.
pub const CONTRACTION_TARGET: f64 = 0.5;
/// Duration of the free part of each round.
const FREE_SPAN: f64 = 2.0;
/// Support balls are checked with this many cells of slack: lattice
/// dispersion carries precursors a few cells ahead of the light cone.
pub const SUPPORT_BAND_CELLS: f64 = 6.0;

/// Two consecutive leapfrog time levels `(u(t - dt), u(t))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPair {
    pub prev: ScalarField,
    pub curr: ScalarField,
}

impl LevelPair {
    pub fn of(state: &WaveState) -> Self {
        Self { prev: state.u_prev.clone(), curr: state.u_curr.clone() }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self { prev: ScalarField::zeros(grid), curr: ScalarField::zeros(grid) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.curr.grid
    }

    pub fn max_abs(&self) -> f64 {
        self.prev.max_abs().max(self.curr.max_abs())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(Self { prev: self.prev.axpy(-1.0, &other.prev)?, curr: self.curr.axpy(-1.0, &other.curr)? })
    }

    /// Moves the levels onto `target`; values dropped on the way must stay
    /// below `tol * max`.
    pub fn embed_into(&self, target: GridSpec, tol: f64) -> Result<Self> {
        Ok(Self { prev: self.prev.embed_into(target, tol)?, curr: self.curr.embed_into(target, tol)? })
    }

    pub fn state(&self, dt: f64, obstacle: Option<&Obstacle>) -> Result<WaveState> {
        WaveState::from_levels(self.prev.clone(), self.curr.clone(), 0.0, dt, obstacle)
    }

    /// `(u, d_t u)` at the later level, with the time derivative centred.
    pub fn data_pair(&self, dt: f64, obstacle: Option<&Obstacle>) -> Result<DataPair> {
        Ok(self.state(dt, obstacle)?.data_pair())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodMode {
    Fixed(f64),
    /// Start at `a* + 2` and double until the first contraction ratio is at
    /// most [`CONTRACTION_TARGET`].
    Auto,
}

/// Window of the error trace `||U(t) f - U_0(t) f_+||` over `Omega_radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
    pub radius: f64,
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatteringConfig {
    pub h: f64,
    /// Must divide one time unit.
    pub dt: f64,
    /// Extra box half-width beyond the light-cone requirement.
    pub margin: f64,
    /// Relative support tolerance, against the largest value involved.
    pub support_tol: f64,
    /// `f_+` is returned on the ball of this radius.
    pub observe_radius: f64,
    /// Upper bound for the automatic period.
    pub max_period: f64,
    pub trace: Option<TraceSpec>,
}

impl ScatteringConfig {
    pub fn new(h: f64) -> Self {
        Self {
            h,
            dt: commensurate_dt(h, 1.0),
            margin: 1.0,
            support_tol: 1e-6,
            observe_radius: 4.0,
            max_period: 40.0,
            trace: None,
        }
    }
}

fn steps_for(t: f64, dt: f64) -> Result<usize> {
    let n = (t / dt).round();
    if (n * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InvalidParameter(format!("time {t} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

fn step_within(state: &mut WaveState, reach: f64) -> Result<()> {
    let region = state.grid.index_box([0.0; 3], reach);
    state.step_region(region)
}

/// Mollifier weights on the 3x3x3 neighbourhood (radius `2h`, smooth bump).
fn mollifier() -> Vec<([i64; 3], f64)> {
    let mut out = Vec::with_capacity(27);
    for i in -1..=1i64 {
        for j in -1..=1i64 {
            for k in -1..=1i64 {
                let rho2 = (i * i + j * j + k * k) as f64 / 4.0;
                out.push(([i, j, k], (1.0 - 1.0 / (1.0 - rho2)).exp()));
            }
        }
    }
    out
}

fn extend_field(field: &ScalarField, obstacle: &Obstacle) -> Result<ScalarField> {
    let grid = field.grid;
    let h = grid.spacing;
    let mask = obstacle.mask(&grid);
    let limit = 1e-8 * field.max_abs();
    let mut trace: f64 = 0.0;
    let mut out = field.clone();
    for (idx, &m) in mask.iter().enumerate() {
        if m {
            if obstacle.signed_distance(grid.point_of(idx)) >= -2.0 * h {
                trace = trace.max(field.values[idx].abs());
            }
            out.values[idx] = 0.0;
        }
    }
    if trace > limit {
        return Err(Error::ExtensionTrace { trace, tolerance: limit });
    }
    let kernel = mollifier();
    let dims = grid.dims.map(|d| d as i64);
    let smoothed: Vec<(usize, f64)> = mask
        .par_iter()
        .enumerate()
        .filter(|(idx, &m)| m && obstacle.signed_distance(grid.point_of(*idx)) >= -3.0 * h)
        .map(|(idx, _)| {
            let c = grid.coords(idx).map(|v| v as i64);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (d, w) in &kernel {
                let q: [i64; 3] = std::array::from_fn(|a| c[a] + d[a]);
                if (0..3).all(|a| q[a] >= 0 && q[a] < dims[a]) {
                    acc += w * out.values[grid.index(q[0] as usize, q[1] as usize, q[2] as usize)];
                    wsum += w;
                }
            }
            (idx, acc / wsum)
        })
        .collect();
    for (idx, v) in smoothed {
        out.values[idx] = v;
    }
    Ok(out)
}

/// Extension of exterior data across the obstacle: zero inside, then one
/// mollifier pass on the interior points within `3h` of the boundary.
/// Exterior values are copied unchanged.
pub fn extend(data: &DataPair, obstacle: &Obstacle) -> Result<DataPair> {
    DataPair::new(extend_field(&data.f0, obstacle)?, extend_field(&data.f1, obstacle)?)
}

pub fn extend_levels(levels: &LevelPair, obstacle: &Obstacle) -> Result<LevelPair> {
    Ok(LevelPair { prev: extend_field(&levels.prev, obstacle)?, curr: extend_field(&levels.curr, obstacle)? })
}

fn check_support(levels: &LevelPair, radius: f64, tolerance: f64, what: &str) -> Result<()> {
    let (a, pa) = levels.prev.max_abs_outside([0.0; 3], radius);
    let (b, pb) = levels.curr.max_abs_outside([0.0; 3], radius);
    let (value, at) = if a > b { (a, pa) } else { (b, pb) };
    if value > tolerance {
        return Err(Error::Support { what: what.into(), radius, value, tolerance, at });
    }
    Ok(())
}

/// One round of the decomposition.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Free outgoing part at time `T`, on the round's box.
    pub g: LevelPair,
    /// Remainder at time `T`, cut to the ball `B_{3 + 8h}`.
    pub f_next: LevelPair,
    /// `U(T) f_j` on the round's box.
    pub evolved: LevelPair,
}

/// Splits `U(period) f` into a free part and a remainder near the obstacle.
/// `support` bounds the support of `f`; the free part must stay in
/// `B_{period + max(support, a_star)}`. Support tolerances are relative to
/// `scale` or to the largest value of this round, whichever is larger.
pub fn decompose_once(
    f: &LevelPair,
    support: f64,
    a_star: f64,
    obstacle: &Obstacle,
    period: f64,
    scale: f64,
    cfg: &ScatteringConfig,
) -> Result<Decomposition> {
    let (h, dt) = (cfg.h, cfg.dt);
    let n_total = steps_for(period, dt)?;
    let n_free = steps_for(FREE_SPAN, dt)?;
    if n_total <= n_free {
        return Err(Error::InvalidParameter(format!("period {period} must exceed {FREE_SPAN}")));
    }
    let grid = GridSpec::centered(support.max(a_star) + period + cfg.margin, h)?;
    let mut ext = f.embed_into(grid, 0.0)?.state(dt, Some(obstacle))?;
    let reach = |n: usize| support + n as f64 * dt + 1.0;
    for n in 0..n_total - n_free {
        step_within(&mut ext, reach(n))?;
    }
    let psi = extend_levels(&LevelPair::of(&ext), obstacle)?;
    let mut free = psi.state(dt, None)?;
    for n in n_total - n_free..n_total {
        step_within(&mut ext, reach(n))?;
        step_within(&mut free, reach(n))?;
    }
    ext.check_finite()?;
    free.check_finite()?;
    let evolved = LevelPair::of(&ext);
    let g = LevelPair::of(&free);
    let f_next = evolved.sub(&g)?;
    let tolerance = cfg.support_tol * evolved.max_abs().max(g.max_abs()).max(scale);
    let band = SUPPORT_BAND_CELLS * h;
    check_support(&f_next, LOCAL_RADIUS + band, tolerance, "remainder f_{j+1}")?;
    check_support(&g, period + support.max(a_star) + band, tolerance, "free part g_{j+1}")?;
    let local = GridSpec::centered(LOCAL_RADIUS + band + 2.0 * h, h)?;
    let f_next = f_next.embed_into(local, f64::INFINITY)?;
    Ok(Decomposition { g, f_next, evolved })
}

/// Energy norm `(||grad f0||^2 + ||f1||^2)^(1/2)` over the exterior.
pub fn exterior_norm(data: &DataPair, obstacle: Option<&Obstacle>) -> f64 {
    match obstacle {
        Some(ob) => hd_components(data, |p| !ob.contains(p)).energy(),
        None => hd_components(data, |_| true).energy(),
    }
}

#[derive(Debug, Clone)]
pub struct ScatteringIterate {
    pub index: usize,
    /// Free data at time `jT` (as levels on its round's box).
    pub g: LevelPair,
    /// Remainder supported near the obstacle.
    pub f: LevelPair,
    pub hd_norm_g: f64,
    pub hd_norm_f: f64,
}

impl ScatteringIterate {
    pub fn g_data(&self, dt: f64) -> Result<DataPair> {
        self.g.data_pair(dt, None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub error: f64,
    /// With the weight `exp(mu <x>)`, when `mu` was given.
    pub weighted_error: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScatteringResult {
    /// The truncated sum `sum_{j <= J} U_0(-jT) g_j` on `B_b`.
    pub f_plus: DataPair,
    pub iterates: Vec<ScatteringIterate>,
    pub period: f64,
    pub j_count: usize,
    pub dt: f64,
    /// Support radius of the input data.
    pub a: f64,
    pub a_star: f64,
    pub initial_norm: f64,
    pub error_trace: Vec<ErrorSample>,
    /// Periods tried by the automatic mode with their first ratio.
    pub period_history: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

impl ScatteringResult {
    /// `rho_j = ||f_{j+1}|| / ||f_j||`, `j = 0..J-1`.
    pub fn ratios(&self) -> Vec<f64> {
        let mut prev = self.initial_norm;
        self.iterates
            .iter()
            .map(|it| {
                let r = it.hd_norm_f / prev;
                prev = it.hd_norm_f;
                r
            })
            .collect()
    }

    /// `||f_+^{(j)} - f_+^{(j-1)}||`; equal to `||g_j||` since the free flow is unitary.
    pub fn increments(&self) -> Vec<f64> {
        self.iterates.iter().map(|it| it.hd_norm_g).collect()
    }

    pub fn is_contracting(&self) -> bool {
        self.ratios().iter().all(|&r| r < 1.0)
    }

    /// Radiation field of `f_+` along lattice directions, assembled from the
    /// free parts by `F[U_0(-jT) g](s) = F[g](s + jT)`.
    pub fn radiation_field(&self, normals: &[[i32; 3]]) -> Result<RadiationField> {
        let first = self.iterates.first().ok_or_else(|| Error::InvalidParameter("no iterates".into()))?;
        let spacing = first.g.grid().spacing;
        // common s grid: multiples of h / 6, a refinement of every lattice plane spacing used
        let ds = spacing / 6.0;
        let s_max = self.period + self.a_star;
        let n = (s_max / ds).ceil() as i64;
        let s_grid: Vec<f64> = (-n..=n).map(|i| i as f64 * ds - self.period).collect();
        let mut values = vec![0.0; s_grid.len() * normals.len()];
        let mut dvalues = vec![0.0; s_grid.len() * normals.len()];
        for (j, it) in self.iterates.iter().enumerate() {
            let shift = (j + 1) as f64 * self.period;
            for (jn, (s, f, df)) in lattice_radiation_fields(&it.g_data(self.dt)?, normals)?.into_iter().enumerate() {
                for (i, &si) in s_grid.iter().enumerate() {
                    let k = i * normals.len() + jn;
                    values[k] += interpolate_cubic(&s, &f, si + shift);
                    dvalues[k] += interpolate_cubic(&s, &df, si + shift);
                }
            }
        }
        let directions = normals.iter().map(|&n| unit_normal(n)).collect();
        RadiationField::new(s_grid, directions, values, dvalues)
    }

    pub fn write_manifest<W: Write>(&self, mut w: W, paths: &[(String, String)]) -> Result<()> {
        writeln!(w, "T = {}", self.period)?;
        writeln!(w, "J = {}", self.j_count)?;
        writeln!(w, "dt = {}", self.dt)?;
        writeln!(w, "a = {}", self.a)?;
        writeln!(w, "a_star = {}", self.a_star)?;
        writeln!(w, "norm.f0 = {:e}", self.initial_norm)?;
        for (it, rho) in self.iterates.iter().zip(self.ratios()) {
            writeln!(w, "iterate.{}.norm_g = {:e}", it.index, it.hd_norm_g)?;
            writeln!(w, "iterate.{}.norm_f = {:e}", it.index, it.hd_norm_f)?;
            writeln!(w, "iterate.{}.rho = {:e}", it.index, rho)?;
        }
        for (i, (t, rho)) in self.period_history.iter().enumerate() {
            writeln!(w, "period_trial.{i} = {t} {rho:e}")?;
        }
        for (key, path) in paths {
            writeln!(w, "file.{key} = {path}")?;
        }
        for (i, msg) in self.warnings.iter().enumerate() {
            writeln!(w, "warning.{i} = {msg}")?;
        }
        Ok(())
    }
}

/// Four-point Lagrange interpolation on a uniform increasing grid; zero outside.
fn interpolate_cubic(s: &[f64], v: &[f64], x: f64) -> f64 {
    if s.len() < 4 || x < s[0] || x > s[s.len() - 1] {
        return 0.0;
    }
    let ds = s[1] - s[0];
    let pos = (x - s[0]) / ds;
    let i = (pos.floor() as usize).clamp(1, s.len() - 3) - 1;
    let mut acc = 0.0;
    for a in 0..4 {
        let mut w = 1.0;
        for b in 0..4 {
            if a != b {
                w *= (pos - (i + b) as f64) / (a as f64 - b as f64);
            }
        }
        acc += w * v[i + a];
    }
    acc
}

pub fn write_error_trace<W: Write>(trace: &[ErrorSample], mut w: W) -> Result<()> {
    writeln!(w, "t,error,weighted_error")?;
    for e in trace {
        match e.weighted_error {
            Some(we) => writeln!(w, "{:e},{:e},{:e}", e.t, e.error, we)?,
            None => writeln!(w, "{:e},{:e},", e.t, e.error)?,
        }
    }
    Ok(())
}

pub fn read_error_trace<R: BufRead>(r: R) -> Result<Vec<ErrorSample>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if n == 0 {
            if line.trim() != "t,error,weighted_error" {
                return Err(Error::Format(format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Format(format!("line {}: expected 3 columns", n + 1)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(format!("line {}: {e}", n + 1)));
        out.push(ErrorSample {
            t: num(cols[0])?,
            error: num(cols[1])?,
            weighted_error: if cols[2].is_empty() { None } else { Some(num(cols[2])?) },
        });
    }
    Ok(out)
}

/// Builds `f_+` from `f` by `J` rounds of [`decompose_once`].
pub fn construct_scattering_data(
    f: &DataPair,
    obstacle: &Obstacle,
    period: PeriodMode,
    j_count: usize,
    cfg: &ScatteringConfig,
) -> Result<ScatteringResult> {
    if j_count == 0 {
        return Err(Error::InvalidParameter("J must be at least 1".into()));
    }
    let h = cfg.h;
    let grid = *f.grid();
    if (grid.spacing - h).abs() > 1e-12 * h || !grid.is_sublattice_compatible(&GridSpec::centered(1.0, h)?) {
        return Err(Error::GridMismatch("data must live on the centred lattice of spacing h".into()));
    }
    steps_for(1.0, cfg.dt)?;
    let a = f.support_radius(cfg.support_tol).max(obstacle.enclosing_radius());
    let a_star = a.max(LOCAL_RADIUS);
    let mut t = match period {
        PeriodMode::Fixed(t) => {
            if t < a_star + FREE_SPAN - 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "period T = {t} is below a* + 2 = {} (a* = max(a, 3))",
                    a_star + FREE_SPAN
                )));
            }
            t
        }
        PeriodMode::Auto => a_star + FREE_SPAN,
    };
    let f0 = LevelPair::of(&WaveState::init(f, Some(obstacle), cfg.dt)?);
    let initial_norm = exterior_norm(&f0.data_pair(cfg.dt, Some(obstacle))?, Some(obstacle));
    let mut history = Vec::new();
    let mut warnings = Vec::new();
    let iterates = 'period: loop {
        let mut iterates: Vec<ScatteringIterate> = Vec::with_capacity(j_count);
        let mut fj = f0.clone();
        let mut support = a;
        let mut scale = 0.0f64;
        for j in 1..=j_count {
            let dec = decompose_once(&fj, support, a_star, obstacle, t, scale, cfg)?;
            scale = scale.max(dec.evolved.max_abs());
            let hd_norm_g = exterior_norm(&dec.g.data_pair(cfg.dt, None)?, None);
            let hd_norm_f = exterior_norm(&dec.f_next.data_pair(cfg.dt, Some(obstacle))?, Some(obstacle));
            let g_grid = GridSpec::centered(t + a_star + (2.0 * SUPPORT_BAND_CELLS + 2.0) * h, h)?;
            let g = dec.g.embed_into(g_grid, f64::INFINITY)?;
            iterates.push(ScatteringIterate { index: j, g, f: dec.f_next.clone(), hd_norm_g, hd_norm_f });
            if j == 1 {
                let rho = hd_norm_f / initial_norm;
                history.push((t, rho));
                if period == PeriodMode::Auto && rho > CONTRACTION_TARGET {
                    if 2.0 * t > cfg.max_period {
                        warnings.push(format!(
                            "non-contracting: rho = {rho:.3} at T = {t}; doubling would exceed the period cap {}",
                            cfg.max_period
                        ));
                    } else {
                        t *= 2.0;
                        continue 'period;
                    }
                }
            }
            fj = dec.f_next;
            support = LOCAL_RADIUS + SUPPORT_BAND_CELLS * h;
        }
        break iterates;
    };
    let mut result = ScatteringResult {
        f_plus: DataPair::zeros(GridSpec::centered(cfg.observe_radius, h)?),
        iterates,
        period: t,
        j_count,
        dt: cfg.dt,
        a,
        a_star,
        initial_norm,
        error_trace: Vec::new(),
        period_history: history,
        warnings,
    };
    for (j, rho) in result.ratios().into_iter().enumerate() {
        if rho >= 1.0 {
            result.warnings.push(format!("non-contracting: rho_{j} = {rho:.3} at T = {t}; use a larger T"));
        }
    }
    result.f_plus = backward_sum(&result, cfg)?;
    if let Some(spec) = &cfg.trace {
        result.error_trace = error_trace(&f0, obstacle, &result, spec, cfg)?;
    }
    Ok(result)
}

/// `sum_j U_0(-jT) g_j` on `B_b` by a Horner sweep backwards in time.
fn backward_sum(result: &ScatteringResult, cfg: &ScatteringConfig) -> Result<DataPair> {
    let (h, dt) = (cfg.h, cfg.dt);
    let n = steps_for(result.period, dt)?;
    let j_count = result.iterates.len();
    let g_support = result.period + result.a_star + (2.0 * SUPPORT_BAND_CELLS + 2.0) * h;
    let b = cfg.observe_radius;
    let span = j_count as f64 * result.period;
    let grid = GridSpec::centered((0.5 * (b + span + g_support)).max(g_support) + cfg.margin, h)?;
    let mut state = LevelPair::zeros(grid).state(dt, None)?.reversed();
    // The reversed state at backward step m holds (u(m + 1), u(m)); g_j
    // enters at m = jN - 1 with its two levels swapped.
    let mut reach = 0.0f64;
    for m in (0..j_count * n).rev() {
        for it in &result.iterates {
            if it.index * n - 1 == m {
                state.add_levels(&it.g.curr, &it.g.prev, 1.0)?;
                reach = reach.max(g_support + 1.0);
            }
        }
        step_within(&mut state, reach)?;
        reach += dt;
    }
    state.check_finite()?;
    let forward = LevelPair { prev: state.u_curr, curr: state.u_prev };
    forward.state(dt, None)?.window(b)
}

fn window_error(diff: &DataPair, radius: f64, obstacle: &Obstacle, mu: Option<f64>) -> (f64, Option<f64>) {
    let grid = *diff.grid();
    let g = stencil::gradient(&diff.f0);
    let (mut plain, mut weighted) = (0.0, 0.0);
    for idx in 0..grid.len() {
        let p = grid.point_of(idx);
        if norm3(p) >= radius || obstacle.contains(p) {
            continue;
        }
        let e = g[0].values[idx].powi(2) + g[1].values[idx].powi(2) + g[2].values[idx].powi(2)
            + diff.f1.values[idx].powi(2);
        plain += e;
        if let Some(mu) = mu {
            weighted += (2.0 * mu * bracket(p)).exp() * e;
        }
    }
    let v = grid.cell_volume();
    ((plain * v).sqrt(), mu.map(|_| (weighted * v).sqrt()))
}

/// `||U(t) f - U_0(t) f_+||` on `Omega_b` for `t` in the trace window, with
/// `U_0(t) f_+` split into the forward sum over `jT <= t` and the backward
/// sum over `jT > t`, each run on a box that keeps `B_b` reflection-free.
fn error_trace(
    f0: &LevelPair,
    obstacle: &Obstacle,
    result: &ScatteringResult,
    spec: &TraceSpec,
    cfg: &ScatteringConfig,
) -> Result<Vec<ErrorSample>> {
    let (h, dt) = (cfg.h, cfg.dt);
    if !(spec.t_max > spec.t_min && spec.step > 0.0 && spec.t_min >= 0.0) {
        return Err(Error::InvalidParameter("empty error-trace window".into()));
    }
    let n = steps_for(result.period, dt)?;
    let count = ((spec.t_max - spec.t_min) / spec.step + 1e-9).floor() as usize + 1;
    let samples: Vec<usize> =
        (0..count).map(|i| ((spec.t_min + i as f64 * spec.step) / dt).round() as usize).collect();
    let (n_min, n_max) = (samples[0], samples[count - 1]);
    let b = spec.radius;
    let w = b + 3.0 * h;
    let g_support = result.period + result.a_star + (2.0 * SUPPORT_BAND_CELLS + 2.0) * h;
    let half = |a: f64, span: f64| GridSpec::centered(0.5 * (span + a + w) + cfg.margin, h);
    let j_count = result.iterates.len();

    // backward part: R(t) = sum_{jN > n} U_0(t - jT) g_j
    let mut backward: Vec<Option<DataPair>> = vec![None; count];
    let n_top = j_count * n;
    if n_top > n_min + 1 {
        let span = (n_top - n_min) as f64 * dt;
        let mut state = LevelPair::zeros(half(g_support, span)?).state(dt, None)?.reversed();
        let mut reach = 0.0f64;
        for m in (n_min..n_top).rev() {
            for it in &result.iterates {
                if it.index * n - 1 == m {
                    state.add_levels(&it.g.curr, &it.g.prev, 1.0)?;
                    reach = reach.max(g_support + 1.0);
                }
            }
            for (i, &s) in samples.iter().enumerate() {
                if s == m {
                    let mut win = state.window(w)?;
                    win.f1 = win.f1.scaled(-1.0);
                    backward[i] = Some(win);
                }
            }
            if m > n_min {
                step_within(&mut state, reach)?;
                reach += dt;
            }
        }
        state.check_finite()?;
    }

    // exterior flow and forward part A(t) = sum_{jN <= n} U_0(t - jT) g_j
    let t_end = n_max as f64 * dt;
    let mut ext = f0.embed_into(half(result.a, t_end)?, 0.0)?.state(dt, Some(obstacle))?;
    let span_a = t_end - result.period;
    let mut fwd = if span_a >= 0.0 {
        Some(LevelPair::zeros(half(g_support, span_a)?).state(dt, None)?)
    } else {
        None
    };
    let mut reach_fwd = 0.0f64;
    let mut out = Vec::with_capacity(count);
    for step in 0..=n_max {
        if let Some(state) = fwd.as_mut() {
            for it in &result.iterates {
                if it.index * n == step {
                    state.add_levels(&it.g.prev, &it.g.curr, 1.0)?;
                    reach_fwd = reach_fwd.max(g_support + 1.0);
                }
            }
        }
        for (i, &s) in samples.iter().enumerate() {
            if s != step {
                continue;
            }
            let mut diff = ext.window(w)?;
            if let (Some(state), true) = (fwd.as_ref(), step >= n) {
                diff = diff.axpy(-1.0, &state.window(w)?)?;
            }
            if let Some(r) = &backward[i] {
                diff = diff.axpy(-1.0, r)?;
            }
            let (error, weighted_error) = window_error(&diff, b, obstacle, spec.mu);
            out.push(ErrorSample { t: s as f64 * dt, error, weighted_error });
        }
        if step < n_max {
            step_within(&mut ext, result.a + step as f64 * dt + 1.0)?;
            if let Some(state) = fwd.as_mut() {
                if step >= n {
                    step_within(state, reach_fwd)?;
                    reach_fwd += dt;
                }
            }
        }
    }
    ext.check_finite()?;
    Ok(out)
}

/// `||U(t) f - U_0(t) f_+||` on `Omega_b` (and its `exp(mu <x>)`-weighted
/// variant) for grid data `f_+`, both flows run by leapfrog.
pub fn scattering_error(
    f: &DataPair,
    f_plus: &DataPair,
    obstacle: &Obstacle,
    t: f64,
    b: f64,
    mu: Option<f64>,
    cfg: &ScatteringConfig,
) -> Result<(f64, Option<f64>)> {
    let h = cfg.h;
    let n = steps_for(t, cfg.dt)?;
    let w = b + 3.0 * h;
    let run = |data: &DataPair, ob: Option<&Obstacle>| -> Result<DataPair> {
        let a = data.support_radius(1e-14);
        let hw = 0.5 * (t + a + w) + cfg.margin;
        let grid = GridSpec::centered(hw.max(w + cfg.margin), h)?;
        let mut state = WaveState::init(&data.embed_into(grid, 1e-14)?, ob, cfg.dt)?;
        for k in 0..n {
            step_within(&mut state, a + k as f64 * cfg.dt + 1.0)?;
        }
        state.check_finite()?;
        state.window(w)
    };
    let diff = run(f, Some(obstacle))?.axpy(-1.0, &run(f_plus, None)?)?;
    Ok(window_error(&diff, b, obstacle, mu))
}

/// `max_x exp(2 mu <x>) * max(|f0|, |grad f0|, |f1|)`, plus `|D^2 f0|` and
/// `|grad f1|` when `k = 1`.
pub fn weighted_sup_norm(data: &DataPair, mu: f64, k: usize) -> Result<f64> {
    if k > 1 {
        return Err(Error::UnsupportedOrder { order: k, max: 1 });
    }
    let mut fields: Vec<ScalarField> = vec![data.f0.clone(), data.f1.clone()];
    fields.extend(stencil::gradient(&data.f0));
    if k == 1 {
        fields.extend(stencil::hessian(&data.f0));
        fields.extend(stencil::gradient(&data.f1));
    }
    let grid = *data.grid();
    Ok((0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let weight = (2.0 * mu * bracket(grid.point_of(idx))).exp();
            fields.iter().map(|f| f.values[idx].abs()).fold(0.0, f64::max) * weight
        })
        .reduce(|| 0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::hd_components;

    fn obstacle() -> Obstacle {
        Obstacle::new([0.2, 0.0, 0.0], 0.5).unwrap()
    }

    /// Exterior data vanishing linearly at the surface and exactly inside.
    fn exterior_ring(grid: GridSpec, ob: &Obstacle) -> DataPair {
        let ob = *ob;
        DataPair::from_fns(
            grid,
            move |p| {
                let d = ob.signed_distance(p);
                if d <= 0.0 {
                    0.0
                } else {
                    d * (-(norm3(p) - 1.2f64).powi(2) / 0.09).exp()
                }
            },
            |_| 0.0,
        )
    }

    #[test]
    fn extension_of_zero_is_zero() {
        let grid = GridSpec::centered(1.5, 0.1).unwrap();
        let ext = extend(&DataPair::zeros(grid), &obstacle()).unwrap();
        assert_eq!(ext.max_abs(), 0.0);
    }

    #[test]
    fn extension_leaves_data_away_from_obstacle_alone() {
        let grid = GridSpec::centered(2.0, 0.1).unwrap();
        let data = DataPair::from_fns(grid, |p| (-((p[0] + 1.3).powi(2) + p[1] * p[1] + p[2] * p[2]) / 0.01).exp(), |_| 0.0);
        let ext = extend(&data, &obstacle()).unwrap();
        let diff = ext.axpy(-1.0, &data).unwrap().max_abs();
        assert!(diff <= 1e-12, "{diff}");
    }

    #[test]
    fn extension_is_bounded_in_h1() {
        let ob = obstacle();
        let grid = GridSpec::centered(2.0, 0.05).unwrap();
        let data = exterior_ring(grid, &ob);
        let ext = extend(&data, &ob).unwrap();
        let h1 = |d: &DataPair| {
            let c = hd_components(d, |_| true);
            let l2: f64 = d.f0.values.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume();
            (c.grad_f0 * c.grad_f0 + l2).sqrt()
        };
        let ratio = h1(&ext) / h1(&data);
        assert!(ratio <= 1.1, "{ratio}");
    }

    #[test]
    fn extension_rejects_a_boundary_trace() {
        let grid = GridSpec::centered(1.5, 0.1).unwrap();
        let data = DataPair::from_fns(grid, |_| 1.0, |_| 0.0);
        assert!(matches!(extend(&data, &obstacle()), Err(Error::ExtensionTrace { .. })));
    }

    fn small_obstacle() -> Obstacle {
        Obstacle::new([0.1, 0.0, 0.0], 0.4).unwrap()
    }

    fn coarse() -> ScatteringConfig {
        ScatteringConfig::new(0.2)
    }

    fn ring_data(h: f64) -> DataPair {
        let grid = GridSpec::centered(2.0 + 4.0 * h, h).unwrap();
        DataPair::from_fns(grid, |p| (-(norm3(p) - 1.45f64).powi(2) / 0.02).exp() * (norm3(p) < 2.0) as u8 as f64, |_| 0.0)
    }

    #[test]
    fn decomposition_of_zero_is_zero() {
        let cfg = coarse();
        let f = LevelPair::zeros(GridSpec::centered(2.4, cfg.h).unwrap());
        let d = decompose_once(&f, 2.0, 3.0, &obstacle(), 5.0, 0.0, &cfg).unwrap();
        assert_eq!(d.g.max_abs(), 0.0);
        assert_eq!(d.f_next.max_abs(), 0.0);
    }

    #[test]
    fn decomposition_reconstructs_the_exterior_flow() {
        let cfg = coarse();
        let ob = small_obstacle();
        let f = LevelPair::of(&WaveState::init(&ring_data(cfg.h), Some(&ob), cfg.dt).unwrap());
        let d = decompose_once(&f, 2.0, 3.0, &ob, 5.0, 0.0, &cfg).unwrap();
        let back = d.f_next.embed_into(*d.g.grid(), 0.0).unwrap();
        let sum_prev = d.g.prev.axpy(1.0, &back.prev).unwrap();
        let sum_curr = d.g.curr.axpy(1.0, &back.curr).unwrap();
        let scale = d.evolved.max_abs();
        let err = sum_prev.axpy(-1.0, &d.evolved.prev).unwrap().max_abs().max(
            sum_curr.axpy(-1.0, &d.evolved.curr).unwrap().max_abs(),
        );
        assert!(err <= 1e-6 * scale, "{err} vs {scale}");
        let norm_f = exterior_norm(&d.f_next.data_pair(cfg.dt, Some(&ob)).unwrap(), Some(&ob));
        let norm_0 = exterior_norm(&f.data_pair(cfg.dt, Some(&ob)).unwrap(), Some(&ob));
        assert!(norm_f < norm_0);
    }

    #[test]
    fn period_below_minimum_is_rejected() {
        let cfg = coarse();
        let err = construct_scattering_data(&ring_data(cfg.h), &small_obstacle(), PeriodMode::Fixed(4.0), 1, &cfg);
        assert!(matches!(err, Err(Error::InvalidParameter(m)) if m.contains("a* + 2")));
        assert!(construct_scattering_data(&ring_data(cfg.h), &small_obstacle(), PeriodMode::Auto, 0, &cfg).is_err());
    }

    #[test]
    fn single_round_result() {
        let cfg = coarse();
        let ob = small_obstacle();
        let r = construct_scattering_data(&ring_data(cfg.h), &ob, PeriodMode::Auto, 1, &cfg).unwrap();
        assert_eq!(r.iterates.len(), 1);
        assert_eq!(r.period, 5.0);
        assert!(r.is_contracting());
        assert!(r.ratios()[0] <= CONTRACTION_TARGET);
        // the free flow is unitary; the window B_4 only loses scattered tails
        let fp = exterior_norm(&r.f_plus, None);
        let g1 = r.iterates[0].hd_norm_g;
        assert!(fp <= 1.001 * g1 && fp >= 0.9 * g1, "{fp} vs {g1}");
        let mut buf = Vec::new();
        r.write_manifest(&mut buf, &[("f_plus".into(), "f_plus.wvf".into())]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("J = 1"));
        assert!(text.contains("iterate.1.rho"));
        assert!(!text.contains("iterate.2."));
    }

    #[test]
    fn error_against_zero_scattering_data_is_the_local_energy() {
        let cfg = coarse();
        let ob = small_obstacle();
        let f = ring_data(cfg.h);
        let zero = DataPair::zeros(GridSpec::centered(1.0, cfg.h).unwrap());
        let (err, weighted) = scattering_error(&f, &zero, &ob, 1.0, 3.0, Some(0.5), &cfg).unwrap();
        let mut s = WaveState::init(&f.embed_into(GridSpec::centered(6.0, cfg.h).unwrap(), 0.0).unwrap(), Some(&ob), cfg.dt)
            .unwrap();
        for _ in 0..steps_for(1.0, cfg.dt).unwrap() {
            s.step().unwrap();
        }
        let direct = hd_components(&s.window(3.0 + 3.0 * cfg.h).unwrap(), |p| norm3(p) < 3.0 && !ob.contains(p)).energy();
        assert!((err - direct).abs() <= 1e-9 * direct, "{err} vs {direct}");
        assert!(weighted.unwrap() > err);
    }

    #[test]
    fn error_trace_csv_round_trip() {
        let trace = vec![
            ErrorSample { t: 5.0, error: 0.25, weighted_error: None },
            ErrorSample { t: 5.5, error: 1.5e-3, weighted_error: Some(2.0e-3) },
        ];
        let mut buf = Vec::new();
        write_error_trace(&trace, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("t,error,weighted_error\n"));
        assert_eq!(read_error_trace(&buf[..]).unwrap(), trace);
        assert!(read_error_trace(&b"t,e\n1,2\n"[..]).is_err());
    }

    #[test]
    fn weighted_sup_norm_examples() {
        let grid = GridSpec::centered(3.0, 0.1).unwrap();
        assert_eq!(weighted_sup_norm(&DataPair::zeros(grid), 0.25, 1).unwrap(), 0.0);
        let data = DataPair::from_fns(grid, |p| (-norm3(p).powi(2)).exp(), |p| 0.5 * (-norm3(p).powi(2)).exp());
        let got = weighted_sup_norm(&data, 0.25, 0).unwrap();
        // dense evaluation of the analytic stack along the radius
        let oracle = (0..=30000)
            .map(|i| {
                let r = i as f64 * 1e-4;
                let e = (-r * r).exp();
                (0.5 * (1.0 + r * r).sqrt()).exp() * e.max(2.0 * r * e)
            })
            .fold(0.0, f64::max);
        assert!((got - oracle).abs() <= 2e-3 * oracle, "{got} vs {oracle}");
        let larger = weighted_sup_norm(&data, 0.5, 0).unwrap();
        assert!(larger > got);
        assert!(weighted_sup_norm(&data, 0.25, 1).unwrap() >= got);
        assert!(matches!(weighted_sup_norm(&data, 0.25, 2), Err(Error::UnsupportedOrder { .. })));
    }

    #[test]
    fn cubic_interpolation_is_exact_for_cubics() {
        let s: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let v: Vec<f64> = s.iter().map(|x| x * x * x - 2.0 * x).collect();
        for x in [0.3, 4.1, 9.2] {
            assert!((interpolate_cubic(&s, &v, x) - (x * x * x - 2.0 * x)).abs() < 1e-9);
        }
        assert_eq!(interpolate_cubic(&s, &v, 10.0), 0.0);
    }
}
