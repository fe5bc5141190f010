//! Subcommand implementations. Each returns the report rows and the files it wrote.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use scatterwave::diagnostics::{huygens_audit, radiation_lower_audit, radiation_support_audit, write_report, ReportRow};
use scatterwave::free::kirchhoff_eval;
use scatterwave::grid::wvf::{read_field, write_field};
use scatterwave::grid::{norm3, smoothing_passes, DataPair, GridSpec, Obstacle, ScalarField};
use scatterwave::quadrature::SphereQuadrature;
use scatterwave::radon::{cube_normals, radiation_field_profile, radon, unit_normal, PlaneQuadrature};
use scatterwave::sampler::{Analytic, GridSampler, JetOrder, Sampler};
use scatterwave::scattering::{
    construct_scattering_data, write_error_trace, PeriodMode, ScatteringConfig, TraceSpec, LOCAL_RADIUS,
};
use scatterwave::solver::{commensurate_dt, evolve, required_half_width, EvolveOptions};
use scatterwave::verification::{run_battery, BatteryConfig};

use crate::config::{ComponentSpec, DataSource, ExperimentConfig, PeriodSetting, VerifyScale};
use crate::CliError;

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub rows: Vec<ReportRow>,
    pub outputs: Vec<PathBuf>,
    /// A check failed (as opposed to the run aborting).
    pub failed: bool,
}

impl RunOutcome {
    fn finish(mut self) -> Self {
        self.failed |= self.rows.iter().any(|r| !r.pass);
        self
    }
}

/// Creates the output directory or fails naming it.
pub fn prepare_output(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("output.dir: cannot create {}: {e}", dir.display())))
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<PathBuf>) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    outputs.push(path);
    Ok(BufWriter::new(file))
}

fn write_pair(dir: &Path, stem: &str, data: &DataPair, t: f64, outputs: &mut Vec<PathBuf>) -> Result<(), CliError> {
    write_field(create(dir, &format!("{stem}_u.wvf"), outputs)?, &data.f0, t)?;
    write_field(create(dir, &format!("{stem}_ut.wvf"), outputs)?, &data.f1, t)?;
    Ok(())
}

fn write_rows(dir: &Path, name: &str, rows: &[ReportRow], outputs: &mut Vec<PathBuf>) -> Result<(), CliError> {
    write_report(rows, create(dir, name, outputs)?)?;
    Ok(())
}

fn component_extent(c: &ComponentSpec) -> f64 {
    match &c.source {
        DataSource::Analytic(p) if !c.is_zero() => norm3(p.center()) + p.extent(1e-12) + 4.0 * c.smoothing,
        _ => 0.0,
    }
}

/// Radius of a ball holding the data, from the profiles (or the file lattice).
pub fn data_extent(cfg: &ExperimentConfig) -> Result<f64, CliError> {
    let mut a = component_extent(&cfg.f0).max(component_extent(&cfg.f1));
    for c in [&cfg.f0, &cfg.f1] {
        if let DataSource::File(p) = &c.source {
            a = a.max(load(p)?.0.grid.half_width());
        }
    }
    Ok(a)
}

fn load(path: &Path) -> Result<(ScalarField, f64), CliError> {
    let file = File::open(path).map_err(|e| CliError::Config(format!("data file {}: {e}", path.display())))?;
    Ok(read_field(BufReader::new(file))?)
}

fn analytic(c: &ComponentSpec) -> Option<Analytic> {
    match &c.source {
        DataSource::Analytic(p) if c.smoothing == 0.0 => Some(Analytic::new(*p, c.amplitude)),
        _ => None,
    }
}

fn sample(c: &ComponentSpec, grid: GridSpec) -> Result<ScalarField, CliError> {
    let mut field = match &c.source {
        DataSource::Analytic(p) => {
            let s = Analytic::new(*p, c.amplitude);
            ScalarField::from_fn(grid, |x| s.value(x).unwrap_or(0.0))
        }
        DataSource::File(path) => {
            let (f, _) = load(path)?;
            if f.grid != grid {
                return Err(CliError::Config(format!(
                    "data file {}: lattice {:?} does not match the data lattice {:?}",
                    path.display(),
                    f.grid,
                    grid
                )));
            }
            f.scaled(c.amplitude)
        }
    };
    if c.smoothing > 0.0 {
        field.binomial_smooth(smoothing_passes(c.smoothing, grid.spacing));
    }
    Ok(field)
}

/// The data lattice: a file's lattice if one is given, else centred with the
/// requested half-width.
fn data_grid(cfg: &ExperimentConfig, half_width: f64) -> Result<GridSpec, CliError> {
    for c in [&cfg.f0, &cfg.f1] {
        if let DataSource::File(p) = &c.source {
            let g = load(p)?.0.grid;
            if (g.spacing - cfg.h).abs() > 1e-12 * cfg.h {
                return Err(CliError::Config(format!("grid.h: {} differs from the spacing of {}", cfg.h, p.display())));
            }
            return Ok(g);
        }
    }
    Ok(GridSpec::centered(half_width, cfg.h)?)
}

pub fn build_data(cfg: &ExperimentConfig, half_width: f64) -> Result<DataPair, CliError> {
    let grid = data_grid(cfg, half_width)?;
    Ok(DataPair::new(sample(&cfg.f0, grid)?, sample(&cfg.f1, grid)?)?)
}

fn obstacle(cfg: &ExperimentConfig) -> Result<Obstacle, CliError> {
    let (c, r) = cfg.obstacle.ok_or_else(|| CliError::Config("obstacle.radius: this command needs an obstacle".into()))?;
    Ok(Obstacle::new(c, r)?)
}

fn dt(cfg: &ExperimentConfig) -> f64 {
    cfg.courant.map_or_else(|| commensurate_dt(cfg.h, 1.0), |c| c * cfg.h)
}

/// Kirchhoff snapshots on the output lattice with a Huygens audit per time.
pub fn free_evolve(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let dir = &cfg.output_dir;
    prepare_output(dir)?;
    let a = data_extent(cfg)?;
    let quad = SphereQuadrature::gauss_product(cfg.sphere_degree);
    let out_grid = GridSpec::centered(cfg.half_width.unwrap_or(a + cfg.t_final + 2.0 * cfg.h), cfg.h)?;
    let exact = analytic(&cfg.f0).zip(analytic(&cfg.f1));
    let data = build_data(cfg, a + 4.0 * cfg.h)?;
    let grid_samplers = match exact {
        Some(_) => None,
        None => Some((
            GridSampler::zero_extended(&data.f0, JetOrder::Hessian, 1e-8)?,
            GridSampler::zero_extended(&data.f1, JetOrder::Gradient, 1e-8)?,
        )),
    };
    let (s0, s1): (&dyn Sampler, &dyn Sampler) = match (&exact, &grid_samplers) {
        (Some((f0, f1)), _) => (f0, f1),
        (None, Some((g0, g1))) => (g0, g1),
        (None, None) => unreachable!("one sampler pair is always built"),
    };
    let data_max = data.max_abs();
    let mut run = RunOutcome::default();
    for (i, t) in cfg.snapshot_times().into_iter().enumerate() {
        let vals: Vec<(f64, f64)> = (0..out_grid.len())
            .into_par_iter()
            .map(|idx| kirchhoff_eval(s0, s1, t, out_grid.point_of(idx), &quad))
            .collect::<scatterwave::Result<_>>()?;
        let (u, ut): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
        let snap = DataPair::new(ScalarField::new(out_grid, u)?, ScalarField::new(out_grid, ut)?)?;
        write_pair(dir, &format!("free_{i}"), &snap, t, &mut run.outputs)?;
        let residual = if data_max > 0.0 { huygens_audit(a, t, &snap, data_max) } else { 0.0 };
        run.rows.push(ReportRow::at_most("huygens", format!("t={t}, ||x|-t| > a+3h, a={a:.3}"), residual, 1e-6));
    }
    write_rows(dir, "audit.csv", &run.rows, &mut run.outputs)?;
    Ok(run.finish())
}

/// Leapfrog evolution outside the obstacle with snapshots and an energy trace.
pub fn exterior_evolve(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let dir = &cfg.output_dir;
    prepare_output(dir)?;
    let ob = obstacle(cfg)?;
    let a = data_extent(cfg)?.max(ob.enclosing_radius());
    let half = cfg.half_width.unwrap_or(required_half_width(a, cfg.t_final, cfg.h, None) + cfg.h);
    let data = build_data(cfg, half)?;
    let dt = dt(cfg);
    let every = ((0.1 / dt).round() as usize).max(1);
    let opts = EvolveOptions { local_radius: cfg.local_radius, trace_every: every, observe_radius: None, support_tol: 1e-12 };
    let ev = evolve(&data, Some(&ob), cfg.t_final, dt, &cfg.snapshot_times(), &opts)?;
    let mut run = RunOutcome::default();
    for (i, (t, snap)) in ev.snapshots.iter().enumerate() {
        write_pair(dir, &format!("exterior_{i}"), snap, *t, &mut run.outputs)?;
    }
    ev.trace.write_csv(create(dir, "energy.csv", &mut run.outputs)?)?;
    run.rows.push(ReportRow::at_most("total energy drift", format!("t in [0,{}]", cfg.t_final), ev.trace.total_drift(), 1e-4));
    write_rows(dir, "audit.csv", &run.rows, &mut run.outputs)?;
    Ok(run.finish())
}

fn samplers(cfg: &ExperimentConfig, a: f64) -> Result<(Box<dyn Sampler>, Box<dyn Sampler>), CliError> {
    if let Some((f0, f1)) = analytic(&cfg.f0).zip(analytic(&cfg.f1)) {
        return Ok((Box::new(f0), Box::new(f1)));
    }
    let data = build_data(cfg, a + 4.0 * cfg.h)?;
    Ok((
        Box::new(GridSampler::zero_extended(&data.f0, JetOrder::Hessian, 1e-8)?),
        Box::new(GridSampler::zero_extended(&data.f1, JetOrder::Gradient, 1e-8)?),
    ))
}

fn s_grid(cfg: &ExperimentConfig) -> Vec<f64> {
    let n = ((cfg.s_range.1 - cfg.s_range.0) / cfg.ds).round() as usize;
    (0..=n).map(|i| cfg.s_range.0 + i as f64 * cfg.ds).collect()
}

/// Radon transforms of both data components along the 26 cube directions.
pub fn radon_table(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let dir = &cfg.output_dir;
    prepare_output(dir)?;
    let a = data_extent(cfg)?;
    let quad = PlaneQuadrature::new(cfg.cutoff.unwrap_or(a + 1.0), cfg.plane_nodes)?;
    let (f0, f1) = samplers(cfg, a)?;
    let dirs: Vec<_> = cube_normals().into_iter().map(unit_normal).collect();
    let s = s_grid(cfg);
    let rows: Vec<(f64, f64)> = (0..s.len() * dirs.len())
        .into_par_iter()
        .map(|k| {
            let (si, eta) = (s[k / dirs.len()], dirs[k % dirs.len()]);
            Ok((radon(f0.as_ref(), si, eta, &quad)?, radon(f1.as_ref(), si, eta, &quad)?))
        })
        .collect::<scatterwave::Result<_>>()?;
    let mut run = RunOutcome::default();
    let mut w = create(dir, "radon.csv", &mut run.outputs)?;
    use std::io::Write;
    writeln!(w, "s,eta_x,eta_y,eta_z,R_f0,R_f1").map_err(|e| CliError::Io(e.to_string()))?;
    for (k, (r0, r1)) in rows.iter().enumerate() {
        let (si, eta) = (s[k / dirs.len()], dirs[k % dirs.len()]);
        writeln!(w, "{si:e},{:e},{:e},{:e},{r0:e},{r1:e}", eta[0], eta[1], eta[2]).map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(run.finish())
}

/// Radiation field of the free data with support audits on both sides.
pub fn radiation(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let dir = &cfg.output_dir;
    prepare_output(dir)?;
    let a = data_extent(cfg)?;
    let quad = PlaneQuadrature::new(cfg.cutoff.unwrap_or(a + 1.0), cfg.plane_nodes)?;
    let (f0, f1) = samplers(cfg, a)?;
    let dirs: Vec<_> = cube_normals().into_iter().map(unit_normal).collect();
    let field = radiation_field_profile(f0.as_ref(), f1.as_ref(), &dirs, &s_grid(cfg), &quad)?;
    let mut run = RunOutcome::default();
    field.write_csv(create(dir, "radiation.csv", &mut run.outputs)?)?;
    if field.s_grid.last().is_some_and(|&s| s >= a) {
        run.rows.push(ReportRow::at_most("max|F| over s>=a / max|F|", format!("a={a:.3}"), radiation_support_audit(&field, a)?, 1e-3));
    }
    if field.s_grid.first().is_some_and(|&s| s <= -a) {
        run.rows.push(ReportRow::at_most("max|F| over s<=-a / max|F|", format!("a={a:.3}"), radiation_lower_audit(&field, a), 1e-3));
    }
    write_rows(dir, "audit.csv", &run.rows, &mut run.outputs)?;
    Ok(run.finish())
}

/// Scattering-data construction: manifest, snapshots and optional error trace.
pub fn scatter(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let dir = &cfg.output_dir;
    prepare_output(dir)?;
    let ob = obstacle(cfg)?;
    let a = data_extent(cfg)?.max(ob.enclosing_radius());
    let data = build_data(cfg, a + 6.0 * cfg.h)?;
    let mut sc = ScatteringConfig::new(cfg.h);
    sc.dt = dt(cfg);
    sc.observe_radius = cfg.observe_radius;
    let mode = match cfg.period {
        PeriodSetting::Auto => PeriodMode::Auto,
        PeriodSetting::Fixed(t) => PeriodMode::Fixed(t),
    };
    if cfg.trace {
        let t = match cfg.period {
            PeriodSetting::Fixed(t) => t,
            PeriodSetting::Auto => data.support_radius(sc.support_tol).max(ob.enclosing_radius()).max(LOCAL_RADIUS) + 2.0,
        };
        sc.trace = Some(TraceSpec { t_min: t, t_max: 3.0 * t, step: 0.25, radius: 3.0, mu: None });
    }
    let result = construct_scattering_data(&data, &ob, mode, cfg.j_count, &sc)?;
    let mut run = RunOutcome::default();
    let mut files = Vec::new();
    let mut pair = |stem: String, d: DataPair, run: &mut RunOutcome| -> Result<(), CliError> {
        write_field(create(dir, &format!("{stem}_f0.wvf"), &mut run.outputs)?, &d.f0, 0.0)?;
        write_field(create(dir, &format!("{stem}_f1.wvf"), &mut run.outputs)?, &d.f1, 0.0)?;
        files.push((stem.clone(), format!("{stem}_f0.wvf {stem}_f1.wvf")));
        Ok(())
    };
    pair("f_plus".into(), result.f_plus.clone(), &mut run)?;
    for it in &result.iterates {
        pair(format!("g_{}", it.index), it.g_data(result.dt)?, &mut run)?;
        pair(format!("f_{}", it.index), it.f.data_pair(result.dt, Some(&ob))?, &mut run)?;
    }
    if !result.error_trace.is_empty() {
        write_error_trace(&result.error_trace, create(dir, "error_trace.csv", &mut run.outputs)?)?;
        files.push(("error_trace".into(), "error_trace.csv".into()));
    }
    result.write_manifest(create(dir, "manifest.txt", &mut run.outputs)?, &files)?;
    for (j, rho) in result.ratios().iter().enumerate() {
        run.rows.push(ReportRow::at_most(format!("rho_{j}"), format!("T = {}", result.period), *rho, 1.0));
    }
    if let PeriodSetting::Auto = cfg.period {
        if let Some(rho) = result.ratios().first() {
            run.rows.push(ReportRow::at_most("rho(T)", format!("auto T = {}", result.period), *rho, 0.5));
        }
    }
    write_rows(dir, "audit.csv", &run.rows, &mut run.outputs)?;
    Ok(run.finish())
}

pub fn battery_config(cfg: &ExperimentConfig) -> BatteryConfig {
    let mut b = match cfg.verify_scale {
        VerifyScale::Desk => BatteryConfig::desk(),
        VerifyScale::Smoke => BatteryConfig::smoke(),
    };
    b.courant = cfg.courant;
    b
}

/// The acceptance battery; the report is written even when criteria fail.
pub fn verify(cfg: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let dir = &cfg.output_dir;
    prepare_output(dir)?;
    let outcomes = run_battery(&battery_config(cfg), &cfg.verify_criteria, |o| println!("{}", o.summary()));
    let mut run = RunOutcome::default();
    run.rows = outcomes.iter().flat_map(|o| o.report_rows()).collect();
    run.failed = outcomes.iter().any(|o| !o.passed());
    write_rows(dir, "verify.csv", &run.rows, &mut run.outputs)?;
    Ok(run.finish())
}
