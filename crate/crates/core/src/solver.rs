//! Leapfrog finite-difference solver for the wave equation outside a
//! spherical Dirichlet obstacle.
//!
//! Space: fourth-order central Laplacian. The two outermost layers of the box
//! are held at zero and never updated, so the discrete operator is symmetric
//! and leapfrog conserves [`WaveState::discrete_energy`] exactly up to
//! round-off. Boxes are sized so that nothing reaches the outer layers within
//! the simulated window (see [`required_half_width`]).

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{
    check_compatibility, norm3, stencil::gradient_at, DataPair, GridSpec, Obstacle, Point, ScalarField,
};

/// Largest stable `dt / h` for leapfrog with the fourth-order 3D Laplacian
/// (spectral radius `16 / h^2`).
pub const STABLE_COURANT: f64 = 0.5;
pub const CFL_SAFETY: f64 = 0.95;

pub fn max_dt(h: f64) -> f64 {
    CFL_SAFETY * STABLE_COURANT * h
}

/// Largest admissible step that divides `unit` exactly.
pub fn commensurate_dt(h: f64, unit: f64) -> f64 {
    unit / (unit / max_dt(h)).ceil()
}

/// Box half-width needed to evolve data supported in `B_a` to `t_final`.
/// With `observe = Some(b)`, only `B_b` must stay free of outer-boundary
/// reflections, which needs `(t_final + a + b) / 2`; otherwise the whole
/// support `B_{a + t_final}` must stay inside.
pub fn required_half_width(a: f64, t_final: f64, h: f64, observe: Option<f64>) -> f64 {
    let core = match observe {
        Some(b) => (0.5 * (t_final + a + b)).max(b).max(a),
        None => a + t_final,
    };
    core + 3.0 * h
}

#[derive(Debug, Clone)]
pub struct WaveState {
    pub grid: GridSpec,
    pub u_prev: ScalarField,
    pub u_curr: ScalarField,
    pub t: f64,
    pub dt: f64,
    pub obstacle: Option<Obstacle>,
    pub mask: Vec<bool>,
    masked: Vec<usize>,
    pub steps: usize,
}

fn check_dt(dt: f64, h: f64) -> Result<()> {
    let bound = max_dt(h);
    if !(dt > 0.0 && dt <= bound * (1.0 + 1e-12)) {
        return Err(Error::Stability { dt, bound, h });
    }
    Ok(())
}

/// Applies the interior fourth-order Laplacian (times `h^2 * 12`) over a box of
/// indices; `f(idx, lap)` receives each result.
#[inline]
fn lap12(u: &[f64], idx: usize, sx: usize, sy: usize) -> f64 {
    -(u[idx - 2 * sx] + u[idx + 2 * sx] + u[idx - 2 * sy] + u[idx + 2 * sy] + u[idx - 2] + u[idx + 2])
        + 16.0 * (u[idx - sx] + u[idx + sx] + u[idx - sy] + u[idx + sy] + u[idx - 1] + u[idx + 1])
        - 90.0 * u[idx]
}

impl WaveState {
    /// Taylor start: `u^0 = f0`, `u^{-1} = f0 - dt f1 + dt^2/2 L f0`, masked.
    pub fn init(data: &DataPair, obstacle: Option<&Obstacle>, dt: f64) -> Result<Self> {
        let grid = *data.grid();
        check_dt(dt, grid.spacing)?;
        if let Some(ob) = obstacle {
            let report = check_compatibility(data, ob, 0)?;
            let threshold = 1e-8 * data.max_abs();
            if report.residuals[0] > threshold {
                return Err(Error::IncompatibleData { residual: report.residuals[0], threshold });
            }
        }
        let mask = match obstacle {
            Some(ob) => ob.mask(&grid),
            None => vec![false; grid.len()],
        };
        let masked = (0..grid.len()).filter(|&i| mask[i]).collect();
        let mut state = Self {
            grid,
            u_prev: ScalarField::zeros(grid),
            u_curr: data.f0.clone(),
            t: 0.0,
            dt,
            obstacle: obstacle.copied(),
            mask,
            masked,
            steps: 0,
        };
        state.clear_constrained_curr();
        let lap = state.apply_laplacian(&state.u_curr.values);
        let c = 0.5 * dt * dt;
        state.u_prev.values = state
            .u_curr
            .values
            .iter()
            .zip(&data.f1.values)
            .zip(&lap)
            .map(|((u, v), l)| u - dt * v + c * l)
            .collect();
        state.clear_constrained_prev();
        Ok(state)
    }

    /// A state from two explicit time levels (`u(t - dt)`, `u(t)`).
    pub fn from_levels(
        u_prev: ScalarField,
        u_curr: ScalarField,
        t: f64,
        dt: f64,
        obstacle: Option<&Obstacle>,
    ) -> Result<Self> {
        if u_prev.grid != u_curr.grid {
            return Err(Error::GridMismatch("time levels on different grids".into()));
        }
        let grid = u_curr.grid;
        check_dt(dt, grid.spacing)?;
        let mask = match obstacle {
            Some(ob) => ob.mask(&grid),
            None => vec![false; grid.len()],
        };
        let masked = (0..grid.len()).filter(|&i| mask[i]).collect();
        let mut s = Self { grid, u_prev, u_curr, t, dt, obstacle: obstacle.copied(), mask, masked, steps: 0 };
        s.clear_constrained_curr();
        s.clear_constrained_prev();
        Ok(s)
    }

    /// Same time levels evolved by a different flow (e.g. obstacle removed).
    pub fn with_obstacle(&self, obstacle: Option<&Obstacle>) -> Result<Self> {
        Self::from_levels(self.u_prev.clone(), self.u_curr.clone(), self.t, self.dt, obstacle)
    }

    fn in_band(&self, c: [usize; 3]) -> bool {
        (0..3).any(|a| c[a] < 2 || c[a] + 2 >= self.grid.dims[a])
    }

    fn clear_constrained(values: &mut [f64], grid: &GridSpec, masked: &[usize]) {
        for &i in masked {
            values[i] = 0.0;
        }
        let [nx, ny, nz] = grid.dims;
        for i in 0..nx {
            for j in 0..ny {
                let base = grid.index(i, j, 0);
                if i < 2 || i + 2 >= nx || j < 2 || j + 2 >= ny {
                    values[base..base + nz].fill(0.0);
                } else {
                    values[base] = 0.0;
                    values[base + 1] = 0.0;
                    values[base + nz - 2] = 0.0;
                    values[base + nz - 1] = 0.0;
                }
            }
        }
    }

    fn clear_constrained_curr(&mut self) {
        Self::clear_constrained(&mut self.u_curr.values, &self.grid, &self.masked);
    }

    fn clear_constrained_prev(&mut self) {
        Self::clear_constrained(&mut self.u_prev.values, &self.grid, &self.masked);
    }

    /// Solver Laplacian: interior stencil, zero on masked points and the outer band.
    pub fn apply_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let grid = self.grid;
        let [sx, sy, _] = grid.strides();
        let scale = 1.0 / (12.0 * grid.spacing * grid.spacing);
        let mut out: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let c = grid.coords(idx);
                if self.in_band(c) {
                    0.0
                } else {
                    scale * lap12(u, idx, sx, sy)
                }
            })
            .collect();
        for &i in &self.masked {
            out[i] = 0.0;
        }
        out
    }

    pub fn step(&mut self) -> Result<()> {
        let [nx, ny, nz] = self.grid.dims;
        self.step_region([(2, nx - 3), (2, ny - 3), (2, nz - 3)])
    }

    /// Steps only the points of an inclusive index box (clipped to the
    /// interior). Points outside keep stale values; use only when they cannot
    /// influence the region of interest within the remaining time.
    pub fn step_region(&mut self, region: [(usize, usize); 3]) -> Result<()> {
        let grid = self.grid;
        let [nx, ny, nz] = grid.dims;
        let [sx, sy, _] = grid.strides();
        let clip = |(lo, hi): (usize, usize), n: usize| (lo.max(2), hi.min(n - 3));
        let (i0, i1) = clip(region[0], nx);
        let (j0, j1) = clip(region[1], ny);
        let (k0, k1) = clip(region[2], nz);
        let c = self.dt * self.dt / (12.0 * grid.spacing * grid.spacing);
        let u = &self.u_curr.values;
        if i0 <= i1 && j0 <= j1 && k0 <= k1 {
            self.u_prev
                .values
                .par_chunks_mut(sx)
                .enumerate()
                .filter(|(i, _)| *i >= i0 && *i <= i1)
                .for_each(|(i, plane)| {
                    for j in j0..=j1 {
                        let row = j * sy;
                        let out = &mut plane[row + k0..=row + k1];
                        let base = i * sx + row;
                        for (off, o) in out.iter_mut().enumerate() {
                            let idx = base + k0 + off;
                            *o = 2.0 * u[idx] - *o + c * lap12(u, idx, sx, sy);
                        }
                    }
                });
        }
        for &i in &self.masked {
            self.u_prev.values[i] = 0.0;
        }
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
        self.t += self.dt;
        self.steps += 1;
        if self.steps % 16 == 0 {
            self.check_finite()?;
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.u_curr.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: self.steps });
        }
        Ok(())
    }

    /// Reverses the direction of time: the pair `(u^{n+1}, u^n)` stepped
    /// forward produces `u^{n-1}`, `u^{n-2}`, ... exactly.
    pub fn reversed(mut self) -> Self {
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
        self.t = -self.t;
        self
    }

    /// The next time level (without advancing).
    pub fn peek_next(&self) -> Vec<f64> {
        let lap = self.apply_laplacian(&self.u_curr.values);
        let dt2 = self.dt * self.dt;
        let mut next: Vec<f64> = self
            .u_curr
            .values
            .iter()
            .zip(&self.u_prev.values)
            .zip(&lap)
            .map(|((u, p), l)| 2.0 * u - p + dt2 * l)
            .collect();
        Self::clear_constrained(&mut next, &self.grid, &self.masked);
        next
    }

    /// `(u(t), d_t u(t))` with the centred difference `(u^{n+1} - u^{n-1}) / 2dt`.
    pub fn data_pair(&self) -> DataPair {
        let next = self.peek_next();
        let inv = 0.5 / self.dt;
        let ut = next.iter().zip(&self.u_prev.values).map(|(a, b)| inv * (a - b)).collect();
        DataPair {
            f0: self.u_curr.clone(),
            f1: ScalarField { grid: self.grid, values: ut },
        }
    }

    /// `(u, d_t u)` restricted to the centred sub-grid of half-width
    /// `half_width`, computed only there.
    pub fn window(&self, half_width: f64) -> Result<DataPair> {
        let grid = self.grid;
        let sub = GridSpec::centered(half_width, grid.spacing)?;
        let shift = self.sub_grid_shift(&sub)?;
        let [sx, sy, _] = grid.strides();
        let c = self.dt * self.dt / (12.0 * grid.spacing * grid.spacing);
        let inv = 0.5 / self.dt;
        let (u, p) = (&self.u_curr.values, &self.u_prev.values);
        let pairs: Vec<(f64, f64)> = (0..sub.len())
            .into_par_iter()
            .map(|s| {
                let cs = sub.coords(s);
                let cc = [cs[0] + shift[0], cs[1] + shift[1], cs[2] + shift[2]];
                let idx = grid.index(cc[0], cc[1], cc[2]);
                let next = if self.in_band(cc) || self.mask[idx] {
                    0.0
                } else {
                    2.0 * u[idx] - p[idx] + c * lap12(u, idx, sx, sy)
                };
                (u[idx], inv * (next - p[idx]))
            })
            .collect();
        let (f0, f1): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        DataPair::new(ScalarField::new(sub, f0)?, ScalarField::new(sub, f1)?)
    }

    fn sub_grid_shift(&self, sub: &GridSpec) -> Result<[usize; 3]> {
        let grid = self.grid;
        let margin = Error::DomainMargin {
            what: "sub-grid window".into(),
            required: sub.half_width(),
            available: grid.half_width(),
        };
        if !grid.is_sublattice_compatible(sub) {
            return Err(Error::GridMismatch("window grid is not on the solver lattice".into()));
        }
        let mut shift = [0; 3];
        for a in 0..3 {
            let s = ((sub.origin[a] - grid.origin[a]) / grid.spacing).round() as i64;
            if s < 0 || s as usize + sub.dims[a] > grid.dims[a] {
                return Err(margin);
            }
            shift[a] = s as usize;
        }
        Ok(shift)
    }

    /// Adds `c * (prev, curr)` of another state's time levels given on a
    /// sub-lattice of this grid; constrained points stay zero.
    pub fn add_levels(&mut self, prev: &ScalarField, curr: &ScalarField, c: f64) -> Result<()> {
        if prev.grid != curr.grid {
            return Err(Error::GridMismatch("time levels on different grids".into()));
        }
        let shift = self.sub_grid_shift(&prev.grid)?;
        let sub = prev.grid;
        for s in 0..sub.len() {
            let cs = sub.coords(s);
            let idx = self.grid.index(cs[0] + shift[0], cs[1] + shift[1], cs[2] + shift[2]);
            self.u_prev.values[idx] += c * prev.values[s];
            self.u_curr.values[idx] += c * curr.values[s];
        }
        self.clear_constrained_curr();
        self.clear_constrained_prev();
        Ok(())
    }

    /// Leapfrog energy `||(u^n - u^{n-1})/dt||^2 + <u^n, -L u^{n-1}>` (cell sums);
    /// invariant under [`WaveState::step`].
    pub fn discrete_energy(&self) -> f64 {
        let lap = self.apply_laplacian(&self.u_prev.values);
        let inv = 1.0 / self.dt;
        let acc: f64 = self
            .u_curr
            .values
            .iter()
            .zip(&self.u_prev.values)
            .zip(&lap)
            .map(|((u, p), l)| {
                let d = (u - p) * inv;
                d * d - u * l
            })
            .sum();
        acc * self.grid.cell_volume()
    }

    /// `int_{|x| < radius, unmasked} |d_t u|^2 + |grad u|^2` at the current time.
    pub fn local_energy(&self, radius: f64) -> f64 {
        let grid = self.grid;
        let [(i0, i1), (j0, j1), (k0, k1)] = grid.index_box([0.0; 3], radius);
        let [sx, sy, _] = grid.strides();
        let c = self.dt * self.dt / (12.0 * grid.spacing * grid.spacing);
        let inv = 0.5 / self.dt;
        let u = &self.u_curr.values;
        let p = &self.u_prev.values;
        let acc: f64 = (i0..=i1)
            .into_par_iter()
            .map(|i| {
                let mut acc = 0.0;
                for j in j0..=j1 {
                    for k in k0..=k1 {
                        let x = grid.point(i, j, k);
                        if norm3(x) >= radius {
                            continue;
                        }
                        let idx = grid.index(i, j, k);
                        if self.mask[idx] {
                            continue;
                        }
                        let cc = [i, j, k];
                        let next = if self.in_band(cc) {
                            0.0
                        } else {
                            2.0 * u[idx] - p[idx] + c * lap12(u, idx, sx, sy)
                        };
                        let ut = inv * (next - p[idx]);
                        let g = gradient_at(&self.u_curr, cc);
                        acc += ut * ut + g[0] * g[0] + g[1] * g[1] + g[2] * g[2];
                    }
                }
                acc
            })
            .collect::<Vec<f64>>()
            .iter()
            .sum();
        acc * grid.cell_volume()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub local_energies: Vec<f64>,
    pub total_energies: Vec<f64>,
}

impl EnergyTrace {
    pub fn push(&mut self, t: f64, local: f64, total: f64) {
        self.times.push(t);
        self.local_energies.push(local);
        self.total_energies.push(total);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn local_samples(&self) -> Vec<(f64, f64)> {
        self.times.iter().copied().zip(self.local_energies.iter().copied()).collect()
    }

    /// `max |E - E_0| / E_0` of the total energy.
    pub fn total_drift(&self) -> f64 {
        match self.total_energies.first() {
            Some(&e0) if e0 > 0.0 => {
                self.total_energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0
            }
            _ => 0.0,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,local_energy_R,total_energy")?;
        for i in 0..self.len() {
            writeln!(w, "{:e},{:e},{:e}", self.times[i], self.local_energies[i], self.total_energies[i])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut out = Self::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if n == 0 {
                if line.trim() != "t,local_energy_R,total_energy" {
                    return Err(Error::Format(format!("unexpected header {line:?}")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?;
            if v.len() != 3 {
                return Err(Error::Format(format!("line {}: expected 3 columns", n + 1)));
            }
            out.push(v[0], v[1], v[2]);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    /// Radius of the local-energy ball recorded in the trace.
    pub local_radius: f64,
    /// Record the trace every this many steps (0 disables the trace).
    pub trace_every: usize,
    /// Only `B_b` must be reflection-free; `None` requires the whole support.
    pub observe_radius: Option<f64>,
    /// Relative threshold defining the data support radius.
    pub support_tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { local_radius: 2.0, trace_every: 0, observe_radius: None, support_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: WaveState,
    pub snapshots: Vec<(f64, DataPair)>,
    pub trace: EnergyTrace,
}

/// Evolves `data` to `t_final`, collecting `(u, d_t u)` snapshots at the steps
/// nearest to the requested times.
pub fn evolve(
    data: &DataPair,
    obstacle: Option<&Obstacle>,
    t_final: f64,
    dt: f64,
    snapshot_times: &[f64],
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let grid = *data.grid();
    let a = data.support_radius(opts.support_tol);
    let required = required_half_width(a, t_final, grid.spacing, opts.observe_radius);
    if grid.half_width() + 1e-9 < required {
        return Err(Error::DomainMargin {
            what: format!("evolution to t = {t_final} of data supported in B_{a:.3}"),
            required,
            available: grid.half_width(),
        });
    }
    let mut state = WaveState::init(data, obstacle, dt)?;
    let n_final = (t_final / dt).round() as usize;
    let mut wanted: Vec<(usize, f64)> =
        snapshot_times.iter().map(|&t| ((t / dt).round() as usize, t)).collect();
    wanted.sort_by_key(|w| w.0);
    let mut snapshots = Vec::new();
    let mut trace = EnergyTrace::default();
    let mut next_snap = 0;
    for n in 0..=n_final {
        while next_snap < wanted.len() && wanted[next_snap].0 == n {
            snapshots.push((state.t, state.data_pair()));
            next_snap += 1;
        }
        if opts.trace_every > 0 && (n % opts.trace_every == 0 || n == n_final) {
            trace.push(state.t, state.local_energy(opts.local_radius), state.discrete_energy());
        }
        if n < n_final {
            state.step()?;
        }
    }
    state.check_finite()?;
    Ok(Evolution { state, snapshots, trace })
}

/// Convenience: radius of a point from the origin.
pub fn radius_of(p: Point) -> f64 {
    norm3(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{energy_norm_hd, hd_components};

    fn ring(r0: f64, w: f64) -> impl Fn(Point) -> f64 + Sync {
        move |p| {
            let x = (norm3(p) - r0) / w;
            if x.abs() >= 1.0 {
                0.0
            } else {
                (1.0 - 1.0 / (1.0 - x * x)).exp()
            }
        }
    }

    #[test]
    fn stability_bound_enforced() {
        let g = GridSpec::centered(1.0, 0.1).unwrap();
        let d = DataPair::zeros(g);
        assert!(matches!(WaveState::init(&d, None, 0.1), Err(Error::Stability { .. })));
        assert!(WaveState::init(&d, None, max_dt(0.1)).is_ok());
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = GridSpec::centered(1.0, 0.1).unwrap();
        let ob = Obstacle::new([0.0; 3], 0.3).unwrap();
        let mut s = WaveState::init(&DataPair::zeros(g), Some(&ob), 0.04).unwrap();
        for _ in 0..5 {
            s.step().unwrap();
        }
        assert_eq!(s.u_curr.max_abs(), 0.0);
        assert_eq!(s.local_energy(10.0), 0.0);
    }

    #[test]
    fn even_start_formula() {
        let g = GridSpec::centered(1.5, 0.1).unwrap();
        let d = DataPair::from_fns(g, ring(0.8, 0.4), |_| 0.0);
        let dt = 0.04;
        let s = WaveState::init(&d, None, dt).unwrap();
        let lap = s.apply_laplacian(&s.u_curr.values);
        for i in 0..g.len() {
            let expect = s.u_curr.values[i] + 0.5 * dt * dt * lap[i];
            assert!((s.u_prev.values[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn incompatible_data_rejected() {
        let g = GridSpec::centered(1.5, 0.1).unwrap();
        let ob = Obstacle::new([0.0; 3], 0.5).unwrap();
        let d = DataPair::from_fns(g, |p| (-norm3(p).powi(2)).exp(), |_| 0.0);
        assert!(matches!(WaveState::init(&d, Some(&ob), 0.04), Err(Error::IncompatibleData { .. })));
    }

    #[test]
    fn masked_points_stay_zero_and_energy_is_conserved() {
        let g = GridSpec::centered(2.0, 0.1).unwrap();
        let ob = Obstacle::new([0.1, 0.0, 0.0], 0.4).unwrap();
        let d = DataPair::from_fns(g, ring(1.2, 0.4), |_| 0.0);
        let mut s = WaveState::init(&d, Some(&ob), max_dt(0.1)).unwrap();
        let e0 = s.discrete_energy();
        let mut drift: f64 = 0.0;
        for _ in 0..300 {
            s.step().unwrap();
            assert!(s.masked.iter().all(|&i| s.u_curr.values[i] == 0.0));
            drift = drift.max((s.discrete_energy() - e0).abs() / e0);
        }
        assert!(drift < 1e-10, "drift {drift}");
    }

    #[test]
    fn leapfrog_is_exactly_reversible() {
        let g = GridSpec::centered(1.5, 0.1).unwrap();
        let ob = Obstacle::new([0.0; 3], 0.3).unwrap();
        let d = DataPair::from_fns(g, ring(0.9, 0.3), |p| 0.5 * ring(0.9, 0.3)(p));
        let s0 = WaveState::init(&d, Some(&ob), 0.04).unwrap();
        let mut s = s0.clone();
        for _ in 0..20 {
            s.step().unwrap();
        }
        let mut back = s.reversed();
        for _ in 0..20 {
            back.step().unwrap();
        }
        let back = back.reversed();
        for i in 0..g.len() {
            assert!((back.u_curr.values[i] - s0.u_curr.values[i]).abs() < 1e-12);
            assert!((back.u_prev.values[i] - s0.u_prev.values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn full_box_local_energy_matches_norm_components() {
        let g = GridSpec::centered(1.5, 0.1).unwrap();
        let d = DataPair::from_fns(g, ring(0.8, 0.4), |p| ring(0.8, 0.4)(p) * p[0]);
        let mut s = WaveState::init(&d, None, 0.04).unwrap();
        s.step().unwrap();
        let pair = s.data_pair();
        let c = hd_components(&pair, |_| true);
        let e = s.local_energy(100.0);
        assert!((e - (c.grad_f0.powi(2) + c.f1.powi(2))).abs() <= 1e-10 * e);
        assert!(energy_norm_hd(&pair, |_| true) > 0.0);
    }

    #[test]
    fn margin_error_reports_requirement() {
        let g = GridSpec::centered(2.0, 0.1).unwrap();
        let d = DataPair::from_fns(g, ring(1.0, 0.5), |_| 0.0);
        match evolve(&d, None, 3.0, 0.04, &[], &EvolveOptions::default()) {
            Err(Error::DomainMargin { required, .. }) => assert!(required > 4.4),
            other => panic!("expected margin error, got {other:?}"),
        }
    }

    #[test]
    fn trace_csv_roundtrip() {
        let mut tr = EnergyTrace::default();
        tr.push(0.0, 1.0, 2.0);
        tr.push(0.5, 0.25, 2.0000001);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,local_energy_R,total_energy\n"));
        let back = EnergyTrace::read_csv(&buf[..]).unwrap();
        assert_eq!(back, tr);
    }
}
