//! Flat `key = value` experiment configuration with dotted sections.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use scatterwave::grid::{norm3, Point};
use scatterwave::sampler::Profile;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Analytic(Profile),
    /// A `WVF1` snapshot; its lattice becomes the data lattice.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSpec {
    pub source: DataSource,
    pub amplitude: f64,
    /// Per-axis standard deviation of the binomial low-pass filter (0 = off).
    pub smoothing: f64,
}

impl ComponentSpec {
    pub fn zero() -> Self {
        Self { source: DataSource::Analytic(Profile::Zero), amplitude: 1.0, smoothing: 0.0 }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.source, DataSource::Analytic(Profile::Zero)) || self.amplitude == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodSetting {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifyScale {
    Desk,
    Smoke,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub obstacle: Option<(Point, f64)>,
    pub f0: ComponentSpec,
    pub f1: ComponentSpec,
    pub h: f64,
    /// `None` sizes the box from the data support and the final time.
    pub half_width: Option<f64>,
    /// `dt / h`; `None` picks the largest stable step dividing one time unit.
    pub courant: Option<f64>,
    pub t_final: f64,
    /// Empty means `[t_final]`.
    pub snapshots: Vec<f64>,
    pub period: PeriodSetting,
    pub j_count: usize,
    pub observe_radius: f64,
    pub trace: bool,
    pub sphere_degree: usize,
    pub plane_nodes: usize,
    /// Plane cutoff `L`; `None` uses the data support plus one.
    pub cutoff: Option<f64>,
    pub local_radius: f64,
    pub s_range: (f64, f64),
    pub ds: f64,
    pub output_dir: PathBuf,
    pub verify_scale: VerifyScale,
    pub verify_criteria: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            obstacle: Some(([0.5, 0.0, 0.0], 0.4)),
            f0: ComponentSpec {
                source: DataSource::Analytic(Profile::Bump { r0: 0.0, width: 0.45, center: [-0.95, 0.0, 0.0] }),
                amplitude: 1.0,
                smoothing: 0.02f64.sqrt(),
            },
            f1: ComponentSpec::zero(),
            h: 0.1,
            half_width: None,
            courant: None,
            t_final: 2.0,
            snapshots: Vec::new(),
            period: PeriodSetting::Auto,
            j_count: 4,
            observe_radius: 4.0,
            trace: false,
            sphere_degree: 31,
            plane_nodes: 48,
            cutoff: None,
            local_radius: 2.0,
            s_range: (-4.0, 4.0),
            ds: 0.05,
            output_dir: PathBuf::from("out"),
            verify_scale: VerifyScale::Desk,
            verify_criteria: (1..=11).collect(),
        }
    }
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, CliError> {
    let x: f64 = v.trim().parse().map_err(|_| invalid(key, format!("expected a number, got {v:?}")))?;
    if !x.is_finite() {
        return Err(invalid(key, "must be finite"));
    }
    Ok(x)
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_f64(key, p)).collect()
}

fn parse_point(key: &str, v: &str) -> Result<Point, CliError> {
    let xs = parse_list(key, v)?;
    <[f64; 3]>::try_from(xs).map_err(|_| invalid(key, "expected three comma-separated numbers"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize, CliError> {
    v.trim().parse().map_err(|_| invalid(key, format!("expected a non-negative integer, got {v:?}")))
}

fn parse_auto(key: &str, v: &str) -> Result<Option<f64>, CliError> {
    if v.trim() == "auto" {
        Ok(None)
    } else {
        parse_f64(key, v).map(Some)
    }
}

fn fmt_point(p: Point) -> String {
    format!("{}, {}, {}", p[0], p[1], p[2])
}

fn fmt_auto(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn parse_component(prefix: &str, kv: &mut BTreeMap<String, String>) -> Result<ComponentSpec, CliError> {
    let mut take = |name: &str| kv.remove(&format!("{prefix}.{name}"));
    let key = |name: &str| format!("{prefix}.{name}");
    let kind = take("profile").unwrap_or_else(|| "zero".into());
    let center = match take("center") {
        Some(v) => parse_point(&key("center"), &v)?,
        None => [0.0; 3],
    };
    let mut num = |name: &str| -> Result<f64, CliError> {
        let v = take(name).ok_or_else(|| invalid(&key(name), format!("required by profile {kind}")))?;
        parse_f64(&key(name), &v)
    };
    let source = match kind.trim() {
        "zero" => DataSource::Analytic(Profile::Zero),
        "gaussian" => DataSource::Analytic(Profile::Gaussian { sigma: num("sigma")?, center }),
        "gaussian_ring" => DataSource::Analytic(Profile::GaussianRing { r0: num("r0")?, sigma: num("sigma")?, center }),
        "bump" => DataSource::Analytic(Profile::Bump { r0: num("r0")?, width: num("width")?, center }),
        "file" => DataSource::File(PathBuf::from(
            take("path").ok_or_else(|| invalid(&key("path"), "required by profile file"))?.trim(),
        )),
        other => {
            return Err(invalid(
                &key("profile"),
                format!("unknown profile {other:?} (zero, gaussian, gaussian_ring, bump, file)"),
            ))
        }
    };
    let amplitude = match take("amplitude") {
        Some(v) => parse_f64(&key("amplitude"), &v)?,
        None => 1.0,
    };
    let smoothing = match take("smoothing") {
        Some(v) => parse_f64(&key("smoothing"), &v)?,
        None => 0.0,
    };
    Ok(ComponentSpec { source, amplitude, smoothing })
}

fn write_component(out: &mut String, prefix: &str, c: &ComponentSpec) {
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{prefix}.{k} = {v}");
    };
    match &c.source {
        DataSource::Analytic(Profile::Zero) => line("profile", "zero".into()),
        DataSource::Analytic(Profile::Gaussian { sigma, center }) => {
            line("profile", "gaussian".into());
            line("sigma", sigma.to_string());
            line("center", fmt_point(*center));
        }
        DataSource::Analytic(Profile::GaussianRing { r0, sigma, center }) => {
            line("profile", "gaussian_ring".into());
            line("r0", r0.to_string());
            line("sigma", sigma.to_string());
            line("center", fmt_point(*center));
        }
        DataSource::Analytic(Profile::Bump { r0, width, center }) => {
            line("profile", "bump".into());
            line("r0", r0.to_string());
            line("width", width.to_string());
            line("center", fmt_point(*center));
        }
        DataSource::File(p) => {
            line("profile", "file".into());
            line("path", p.display().to_string());
        }
    }
    line("amplitude", c.amplitude.to_string());
    line("smoothing", c.smoothing.to_string());
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Keys absent from the
    /// text keep their defaults, unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut kv = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let k = k.trim().to_string();
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key {k}", n + 1)));
            }
        }
        let mut c = Self::default();
        if kv.contains_key("data.f0.profile") {
            c.f0 = parse_component("data.f0", &mut kv)?;
        }
        if kv.contains_key("data.f1.profile") {
            c.f1 = parse_component("data.f1", &mut kv)?;
        }
        match kv.remove("obstacle.radius").as_deref().map(str::trim) {
            Some("none") => {
                c.obstacle = None;
                kv.remove("obstacle.center");
            }
            Some(v) => {
                let center = match kv.remove("obstacle.center") {
                    Some(p) => parse_point("obstacle.center", &p)?,
                    None => [0.0; 3],
                };
                c.obstacle = Some((center, parse_f64("obstacle.radius", v)?));
            }
            None => {
                if let Some(p) = kv.remove("obstacle.center") {
                    let r = c.obstacle.map_or(0.4, |o| o.1);
                    c.obstacle = Some((parse_point("obstacle.center", &p)?, r));
                }
            }
        }
        for (key, value) in std::mem::take(&mut kv) {
            let v = value.as_str();
            match key.as_str() {
                "grid.h" => c.h = parse_f64(&key, v)?,
                "grid.half_width" => c.half_width = parse_auto(&key, v)?,
                "grid.courant" => c.courant = parse_auto(&key, v)?,
                "times.t_final" => c.t_final = parse_f64(&key, v)?,
                "times.snapshots" => c.snapshots = parse_list(&key, v)?,
                "scattering.period" => {
                    c.period = match parse_auto(&key, v)? {
                        None => PeriodSetting::Auto,
                        Some(t) => PeriodSetting::Fixed(t),
                    }
                }
                "scattering.j" => c.j_count = parse_usize(&key, v)?,
                "scattering.observe_radius" => c.observe_radius = parse_f64(&key, v)?,
                "scattering.trace" => {
                    c.trace = v.parse().map_err(|_| invalid(&key, format!("expected true or false, got {v:?}")))?
                }
                "quadrature.sphere_degree" => c.sphere_degree = parse_usize(&key, v)?,
                "quadrature.plane_nodes" => c.plane_nodes = parse_usize(&key, v)?,
                "quadrature.cutoff" => c.cutoff = parse_auto(&key, v)?,
                "diagnostics.local_radius" => c.local_radius = parse_f64(&key, v)?,
                "radiation.s_min" => c.s_range.0 = parse_f64(&key, v)?,
                "radiation.s_max" => c.s_range.1 = parse_f64(&key, v)?,
                "radiation.ds" => c.ds = parse_f64(&key, v)?,
                "output.dir" => c.output_dir = PathBuf::from(v),
                "verify.scale" => {
                    c.verify_scale = match v {
                        "desk" => VerifyScale::Desk,
                        "smoke" => VerifyScale::Smoke,
                        _ => return Err(invalid(&key, format!("expected desk or smoke, got {v:?}"))),
                    }
                }
                "verify.criteria" => {
                    c.verify_criteria = v.split(',').map(|p| parse_usize(&key, p)).collect::<Result<_, _>>()?
                }
                _ => return Err(CliError::Config(format!("unknown key {key}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match self.obstacle {
            Some((center, radius)) => {
                line("obstacle.center", fmt_point(center));
                line("obstacle.radius", radius.to_string());
            }
            None => line("obstacle.radius", "none".into()),
        }
        line("grid.h", self.h.to_string());
        line("grid.half_width", fmt_auto(self.half_width));
        line("grid.courant", fmt_auto(self.courant));
        line("times.t_final", self.t_final.to_string());
        line("times.snapshots", self.snapshots.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(", "));
        line(
            "scattering.period",
            match self.period {
                PeriodSetting::Auto => "auto".into(),
                PeriodSetting::Fixed(t) => t.to_string(),
            },
        );
        line("scattering.j", self.j_count.to_string());
        line("scattering.observe_radius", self.observe_radius.to_string());
        line("scattering.trace", self.trace.to_string());
        line("quadrature.sphere_degree", self.sphere_degree.to_string());
        line("quadrature.plane_nodes", self.plane_nodes.to_string());
        line("quadrature.cutoff", fmt_auto(self.cutoff));
        line("diagnostics.local_radius", self.local_radius.to_string());
        line("radiation.s_min", self.s_range.0.to_string());
        line("radiation.s_max", self.s_range.1.to_string());
        line("radiation.ds", self.ds.to_string());
        line("output.dir", self.output_dir.display().to_string());
        line(
            "verify.scale",
            match self.verify_scale {
                VerifyScale::Desk => "desk".into(),
                VerifyScale::Smoke => "smoke".into(),
            },
        );
        line(
            "verify.criteria",
            self.verify_criteria.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "),
        );
        write_component(&mut out, "data.f0", &self.f0);
        write_component(&mut out, "data.f1", &self.f1);
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some((center, radius)) = self.obstacle {
            if !(radius > 0.0) {
                return Err(invalid("obstacle.radius", "must be positive"));
            }
            if !(radius + norm3(center) < 1.0) {
                return Err(invalid("obstacle.radius", "radius + |center| must be below 1"));
            }
        }
        if !(self.h > 0.0) {
            return Err(invalid("grid.h", "must be positive"));
        }
        if let Some(w) = self.half_width {
            if !(w > 4.0 * self.h) {
                return Err(invalid("grid.half_width", "must exceed four cells"));
            }
        }
        if let Some(c) = self.courant {
            if !(c > 0.0) {
                return Err(invalid("grid.courant", "must be positive"));
            }
        }
        if !(self.t_final >= 0.0) {
            return Err(invalid("times.t_final", "must be non-negative"));
        }
        if self.snapshots.iter().any(|&t| !(0.0..=self.t_final).contains(&t)) {
            return Err(invalid("times.snapshots", "times must lie in [0, t_final]"));
        }
        if let PeriodSetting::Fixed(t) = self.period {
            if !(t > 0.0) {
                return Err(invalid("scattering.period", "must be positive or auto"));
            }
        }
        if self.j_count == 0 {
            return Err(invalid("scattering.j", "must be at least 1"));
        }
        if !(self.observe_radius > 0.0) {
            return Err(invalid("scattering.observe_radius", "must be positive"));
        }
        if self.sphere_degree == 0 {
            return Err(invalid("quadrature.sphere_degree", "must be positive"));
        }
        if self.plane_nodes == 0 {
            return Err(invalid("quadrature.plane_nodes", "must be positive"));
        }
        if let Some(l) = self.cutoff {
            if !(l > 0.0) {
                return Err(invalid("quadrature.cutoff", "must be positive"));
            }
        }
        if !(self.local_radius > 0.0) {
            return Err(invalid("diagnostics.local_radius", "must be positive"));
        }
        if !(self.s_range.0 < self.s_range.1) {
            return Err(invalid("radiation.s_max", "must exceed radiation.s_min"));
        }
        if !(self.ds > 0.0) {
            return Err(invalid("radiation.ds", "must be positive"));
        }
        if let Some(bad) = self.verify_criteria.iter().find(|&&c| !(1..=11).contains(&c)) {
            return Err(invalid("verify.criteria", format!("no criterion {bad}")));
        }
        for (key, c) in [("data.f0", &self.f0), ("data.f1", &self.f1)] {
            if let DataSource::Analytic(p) = &c.source {
                p.validate().map_err(|e| invalid(key, e))?;
            }
            if !(c.smoothing >= 0.0) {
                return Err(invalid(&format!("{key}.smoothing"), "must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        if self.snapshots.is_empty() {
            vec![self.t_final]
        } else {
            self.snapshots.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn parses_sections_and_comments() {
        let text = "# free run\nobstacle.radius = none\ngrid.h = 0.2  # coarse\ntimes.t_final = 3\n\
                    times.snapshots = 1, 2.5\ndata.f1.profile = gaussian\ndata.f1.sigma = 0.5\n\
                    data.f0.profile = zero\nscattering.period = 6\n";
        let c = ExperimentConfig::parse(text).unwrap();
        assert_eq!(c.obstacle, None);
        assert_eq!(c.h, 0.2);
        assert_eq!(c.snapshots, vec![1.0, 2.5]);
        assert_eq!(c.period, PeriodSetting::Fixed(6.0));
        assert_eq!(c.f1.source, DataSource::Analytic(Profile::Gaussian { sigma: 0.5, center: [0.0; 3] }));
        assert!(c.f0.is_zero());
        assert_eq!(ExperimentConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn field_level_errors() {
        let err = |t: &str| ExperimentConfig::parse(t).unwrap_err().to_string();
        assert!(err("grid.h = -1").contains("grid.h"));
        assert!(err("grid.h = abc").contains("grid.h"));
        assert!(err("obstacle.center = 0.8, 0, 0\nobstacle.radius = 0.5").contains("obstacle.radius"));
        assert!(err("data.f0.profile = bump\ndata.f0.r0 = 0").contains("data.f0.width"));
        assert!(err("data.f0.profile = cube").contains("unknown profile"));
        assert!(err("colour = red").contains("unknown key colour"));
        assert!(err("grid.h = 0.1\ngrid.h = 0.2").contains("duplicate"));
        assert!(err("no equals sign").contains("line 1"));
        assert!(err("verify.criteria = 1, 12").contains("no criterion 12"));
        assert!(err("times.t_final = 1\ntimes.snapshots = 2").contains("times.snapshots"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn profile() -> impl Strategy<Value = Profile> {
            let c = proptest::array::uniform3(-2.0f64..2.0);
            prop_oneof![
                Just(Profile::Zero),
                (0.01f64..3.0, c.clone()).prop_map(|(sigma, center)| Profile::Gaussian { sigma, center }),
                (0.0f64..3.0, 0.01f64..1.0, c.clone())
                    .prop_map(|(r0, sigma, center)| Profile::GaussianRing { r0, sigma, center }),
                (0.0f64..3.0, 0.01f64..1.0, c).prop_map(|(r0, width, center)| Profile::Bump { r0, width, center }),
            ]
        }

        proptest! {
            #[test]
            fn parse_serialize_parse_is_identity(
                p0 in profile(), p1 in profile(), h in 0.01f64..0.5, t in 0.0f64..20.0,
                radius in 0.05f64..0.45, cx in -0.5f64..0.5, fixed in proptest::option::of(2.0f64..30.0),
                j in 1usize..8, trace: bool, smooth in 0.0f64..0.3,
            ) {
                let c = ExperimentConfig {
                    obstacle: Some(([cx, 0.1, 0.0], radius)),
                    f0: ComponentSpec { source: DataSource::Analytic(p0), amplitude: 1.5, smoothing: smooth },
                    f1: ComponentSpec { source: DataSource::Analytic(p1), amplitude: -0.25, smoothing: 0.0 },
                    h,
                    t_final: t,
                    snapshots: vec![t / 3.0, t],
                    period: fixed.map_or(PeriodSetting::Auto, PeriodSetting::Fixed),
                    j_count: j,
                    trace,
                    ..ExperimentConfig::default()
                };
                let once = ExperimentConfig::parse(&c.serialize()).unwrap();
                prop_assert_eq!(&once, &c);
                prop_assert_eq!(once.serialize(), c.serialize());
            }
        }
    }
}
