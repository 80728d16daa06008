//! Command-line flags, `key = value` config files and metric shorthands.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tubelab_core::metric::{Metric, ModelSpace};

#[derive(Parser, Debug)]
#[command(
    name = "tubelab",
    version,
    about = "Geodesic, Jacobi-frame and geodesic-counting experiments on analytic Riemannian charts"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Wronskian and determinant identities along one geodesic.
    Identities(Flags),
    /// Exponential-map Jacobian, with closed forms on constant curvature.
    Jacobian(Flags),
    /// Conjugate points, poles of the inverse Riccati matrix and their residues.
    Conjugate(Flags),
    /// Jacobi curvature recovered from the Schwarzian of the Riccati matrix.
    Schwarzian(Flags),
    /// Pointwise sinh comparison bound for a tube radius R.
    Bounds(Flags),
    /// Geodesic counts between random point pairs.
    Count(Flags),
    /// Monte Carlo count integral against the Jacobian quadrature.
    Area(Flags),
    /// Loop-space Betti sums against geodesic counts at length Ck.
    Gromov(Flags),
    /// Loop-space Betti sums against the tube-radius bound.
    Theorem(Flags),
    /// The Betti bound over a list of constants C.
    Sweep(Flags),
}

impl Command {
    pub fn split(self) -> (Experiment, Flags) {
        match self {
            Command::Identities(f) => (Experiment::Identities, f),
            Command::Jacobian(f) => (Experiment::Jacobian, f),
            Command::Conjugate(f) => (Experiment::Conjugate, f),
            Command::Schwarzian(f) => (Experiment::Schwarzian, f),
            Command::Bounds(f) => (Experiment::Bounds, f),
            Command::Count(f) => (Experiment::Count, f),
            Command::Area(f) => (Experiment::Area, f),
            Command::Gromov(f) => (Experiment::Gromov, f),
            Command::Theorem(f) => (Experiment::Theorem, f),
            Command::Sweep(f) => (Experiment::Sweep, f),
        }
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// Config file with [metric], [run] and [tolerances] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Metric shorthand (sphere:1, hyperbolic, spaceform:K[:n], euclidean:n, perturbed:eps[:r]) or a metric file.
    #[arg(long)]
    pub metric: Option<String>,
    /// Loop-space model: S2, S3, ...
    #[arg(long)]
    pub space: Option<String>,
    /// Tube radius (`inf` allowed).
    #[arg(long = "R")]
    pub radius: Option<f64>,
    /// Constant C; a comma-separated list for `sweep`.
    #[arg(long = "C")]
    pub c: Option<String>,
    #[arg(long)]
    pub kmax: Option<usize>,
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long = "sigma-step")]
    pub sigma_step: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "tol-ode")]
    pub tol_ode: Option<f64>,
    #[arg(long = "tol-id")]
    pub tol_id: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Start point, comma-separated chart coordinates.
    #[arg(long)]
    pub point: Option<String>,
    /// Start direction (or target point for `gromov`), comma-separated.
    #[arg(long)]
    pub direction: Option<String>,
    /// Rays in the counting table.
    #[arg(long)]
    pub directions: Option<usize>,
    /// Use the closed-form sphere enumeration in `gromov`.
    #[arg(long)]
    pub oracle: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Identities,
    Jacobian,
    Conjugate,
    Schwarzian,
    Bounds,
    Count,
    Area,
    Gromov,
    Theorem,
    Sweep,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Identities => "identities",
            Experiment::Jacobian => "jacobian",
            Experiment::Conjugate => "conjugate",
            Experiment::Schwarzian => "schwarzian",
            Experiment::Bounds => "bounds",
            Experiment::Count => "count",
            Experiment::Area => "area",
            Experiment::Gromov => "gromov",
            Experiment::Theorem => "theorem",
            Experiment::Sweep => "sweep",
        }
    }

    fn default_length(self) -> f64 {
        match self {
            Experiment::Schwarzian => 3.0,
            Experiment::Bounds => 5.0,
            Experiment::Count => 6.0 * PI,
            Experiment::Area => 2.0 * PI,
            _ => 10.0,
        }
    }

    fn default_sigma_step(self) -> f64 {
        match self {
            Experiment::Schwarzian => 0.25,
            _ => 0.05,
        }
    }

    fn default_samples(self) -> usize {
        match self {
            Experiment::Area => 100_000,
            _ => 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    pub ode: f64,
    pub identity: f64,
    pub determinant: f64,
    pub oracle: f64,
    pub conjugate: f64,
    pub schwarzian: f64,
    pub residue: f64,
    pub bound: f64,
    pub area: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ode: 1e-10,
            identity: 1e-7,
            determinant: 1e-5,
            oracle: 1e-7,
            conjugate: 1e-6,
            schwarzian: 1e-4,
            residue: 1e-6,
            bound: 1e-7,
            area: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub metric: Option<String>,
    pub space: Option<String>,
    pub radius: Option<f64>,
    pub c: Vec<f64>,
    pub k_max: usize,
    pub length: f64,
    pub sigma_step: f64,
    pub samples: usize,
    pub seed: u64,
    pub point: Option<Vec<f64>>,
    pub direction: Option<Vec<f64>>,
    pub directions: Option<usize>,
    pub oracle: bool,
    pub out: PathBuf,
    pub tol: Tolerances,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

fn parse_f64(s: &str, what: &str) -> Result<f64, ConfigError> {
    let t = s.trim();
    let v = match t {
        "pi" => PI,
        "2pi" | "2*pi" => 2.0 * PI,
        _ => t
            .parse::<f64>()
            .map_err(|_| bad(format!("{what}: expected a number, got '{t}'")))?,
    };
    if v.is_nan() {
        return Err(bad(format!("{what}: NaN is not allowed")));
    }
    Ok(v)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, ConfigError> {
    s.split(',').map(|t| parse_f64(t, what)).collect()
}

fn parse_int<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, ConfigError> {
    s.trim().parse::<T>().map_err(|_| {
        bad(format!(
            "{what}: expected a non-negative integer, got '{}'",
            s.trim()
        ))
    })
}

fn parse_bool(s: &str, what: &str) -> Result<bool, ConfigError> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        t => Err(bad(format!("{what}: expected true or false, got '{t}'"))),
    }
}

impl RunConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        RunConfig {
            experiment,
            metric: None,
            space: None,
            radius: None,
            c: Vec::new(),
            k_max: 10,
            length: experiment.default_length(),
            sigma_step: experiment.default_sigma_step(),
            samples: experiment.default_samples(),
            seed: 1,
            point: None,
            direction: None,
            directions: None,
            oracle: false,
            out: PathBuf::from("tubelab-out"),
            tol: Tolerances::default(),
        }
    }

    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let what = format!("[{section}] {key}");
        let w = what.as_str();
        match (section, key) {
            ("metric", "source") => self.metric = Some(value.trim().to_string()),
            ("metric", "space") => self.space = Some(value.trim().to_string()),
            ("run", "length") => self.length = parse_f64(value, w)?,
            ("run", "sigma_step") => self.sigma_step = parse_f64(value, w)?,
            ("run", "R") => self.radius = Some(parse_f64(value, w)?),
            ("run", "C") => self.c = parse_list(value, w)?,
            ("run", "kmax") => self.k_max = parse_int(value, w)?,
            ("run", "samples") => self.samples = parse_int(value, w)?,
            ("run", "seed") => self.seed = parse_int(value, w)?,
            ("run", "out") => self.out = PathBuf::from(value.trim()),
            ("run", "point") => self.point = Some(parse_list(value, w)?),
            ("run", "direction") => self.direction = Some(parse_list(value, w)?),
            ("run", "directions") => self.directions = Some(parse_int(value, w)?),
            ("run", "oracle") => self.oracle = parse_bool(value, w)?,
            ("tolerances", "ode") => self.tol.ode = parse_f64(value, w)?,
            ("tolerances", "identity") => self.tol.identity = parse_f64(value, w)?,
            ("tolerances", "determinant") => self.tol.determinant = parse_f64(value, w)?,
            ("tolerances", "oracle") => self.tol.oracle = parse_f64(value, w)?,
            ("tolerances", "conjugate") => self.tol.conjugate = parse_f64(value, w)?,
            ("tolerances", "schwarzian") => self.tol.schwarzian = parse_f64(value, w)?,
            ("tolerances", "residue") => self.tol.residue = parse_f64(value, w)?,
            ("tolerances", "bound") => self.tol.bound = parse_f64(value, w)?,
            ("tolerances", "area") => self.tol.area = parse_f64(value, w)?,
            _ => return Err(bad(format!("unknown key '{key}' in section [{section}]"))),
        }
        Ok(())
    }

    /// Applies a config file; later lines override earlier ones.
    pub fn apply_file_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| bad(format!("{origin}:{}: {msg}", i + 1));
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| at("unterminated section header".into()))?
                    .trim();
                if !matches!(name, "metric" | "run" | "tolerances") {
                    return Err(at(format!("unknown section [{name}]")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at("expected 'key = value'".into()))?;
            let sec = section
                .as_deref()
                .ok_or_else(|| at("key outside any section".into()))?;
            self.set(sec, key.trim(), value).map_err(|e| at(e.0))?;
        }
        Ok(())
    }

    pub fn apply_flags(&mut self, f: &Flags) -> Result<(), ConfigError> {
        if let Some(path) = &f.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| bad(format!("cannot read config {}: {e}", path.display())))?;
            self.apply_file_text(&text, &path.display().to_string())?;
        }
        if let Some(v) = &f.metric {
            self.metric = Some(v.clone());
        }
        if let Some(v) = &f.space {
            self.space = Some(v.clone());
        }
        if let Some(v) = f.radius {
            self.radius = Some(v);
        }
        if let Some(v) = &f.c {
            self.c = parse_list(v, "--C")?;
        }
        if let Some(v) = f.kmax {
            self.k_max = v;
        }
        if let Some(v) = f.length {
            self.length = v;
        }
        if let Some(v) = f.sigma_step {
            self.sigma_step = v;
        }
        if let Some(v) = f.samples {
            self.samples = v;
        }
        if let Some(v) = f.seed {
            self.seed = v;
        }
        if let Some(v) = f.tol_ode {
            self.tol.ode = v;
        }
        if let Some(v) = f.tol_id {
            self.tol.identity = v;
        }
        if let Some(v) = &f.out {
            self.out = v.clone();
        }
        if let Some(v) = &f.point {
            self.point = Some(parse_list(v, "--point")?);
        }
        if let Some(v) = &f.direction {
            self.direction = Some(parse_list(v, "--direction")?);
        }
        if let Some(v) = f.directions {
            self.directions = Some(v);
        }
        if f.oracle {
            self.oracle = true;
        }
        Ok(())
    }

    pub fn from_flags(experiment: Experiment, f: &Flags) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::defaults(experiment);
        cfg.apply_flags(f)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite_pos = |v: f64| v > 0.0 && v.is_finite();
        if !(finite_pos(self.length) && self.length <= 1e4) {
            return Err(bad(format!(
                "length must lie in (0, 1e4], got {}",
                self.length
            )));
        }
        if !(finite_pos(self.sigma_step) && self.sigma_step <= self.length) {
            return Err(bad(format!(
                "sigma step must lie in (0, length], got {}",
                self.sigma_step
            )));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) {
                return Err(bad(format!("R must be positive (inf allowed), got {r}")));
            }
        }
        if let Some(c) = self.c.iter().find(|c| !finite_pos(**c)) {
            return Err(bad(format!("C must be positive and finite, got {c}")));
        }
        if !(1..=100_000).contains(&self.k_max) {
            return Err(bad(format!(
                "kmax must lie in [1, 100000], got {}",
                self.k_max
            )));
        }
        if !(1..=10_000_000).contains(&self.samples) {
            return Err(bad(format!(
                "samples must lie in [1, 1e7], got {}",
                self.samples
            )));
        }
        if self.experiment == Experiment::Area && self.samples < 10_000 {
            return Err(bad(format!(
                "the area experiment needs at least 1e4 samples, got {}",
                self.samples
            )));
        }
        if let Some(d) = self.directions {
            if !(8..=1_000_000).contains(&d) {
                return Err(bad(format!("directions must lie in [8, 1e6], got {d}")));
            }
        }
        let t = &self.tol;
        for (name, v) in [
            ("ode", t.ode),
            ("identity", t.identity),
            ("determinant", t.determinant),
            ("oracle", t.oracle),
            ("conjugate", t.conjugate),
            ("schwarzian", t.schwarzian),
            ("residue", t.residue),
            ("bound", t.bound),
            ("area", t.area),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(bad(format!("tolerance {name} must lie in (0, 1), got {v}")));
            }
        }
        if t.ode < 1e-15 {
            return Err(bad(format!(
                "ode tolerance below 1e-15 is not attainable, got {}",
                t.ode
            )));
        }
        Ok(())
    }
}

/// A metric together with the model it came from, when there is one.
#[derive(Debug, Clone)]
pub struct ResolvedMetric {
    pub model: Option<ModelSpace>,
    pub metric: Metric,
    pub label: String,
}

fn shorthand(spec: &str) -> Result<Option<ModelSpace>, ConfigError> {
    let mut parts = spec.split(':');
    let head = parts.next().unwrap_or("");
    let args: Vec<&str> = parts.collect();
    let num = |i: usize, what: &str| -> Result<Option<f64>, ConfigError> {
        args.get(i).map(|s| parse_f64(s, what)).transpose()
    };
    let dim = |i: usize| -> Result<Option<usize>, ConfigError> {
        args.get(i).map(|s| parse_int(s, "dimension")).transpose()
    };
    let check_len = |max: usize| {
        if args.len() > max {
            Err(bad(format!("too many fields in metric shorthand '{spec}'")))
        } else {
            Ok(())
        }
    };
    let model = match head {
        "sphere" => {
            check_len(2)?;
            ModelSpace::RoundSphere {
                radius: num(0, "sphere radius")?.unwrap_or(1.0),
                dim: dim(1)?.unwrap_or(2),
            }
        }
        "hyperbolic" => {
            check_len(1)?;
            ModelSpace::SpaceForm {
                curvature: -1.0,
                dim: dim(0)?.unwrap_or(2),
            }
        }
        "spaceform" => {
            check_len(2)?;
            let k = num(0, "curvature")?
                .ok_or_else(|| bad("spaceform needs a curvature, e.g. spaceform:-1"))?;
            ModelSpace::SpaceForm {
                curvature: k,
                dim: dim(1)?.unwrap_or(2),
            }
        }
        "euclidean" => {
            check_len(1)?;
            ModelSpace::Euclidean {
                dim: dim(0)?.unwrap_or(2),
            }
        }
        "perturbed" => {
            check_len(2)?;
            let eps = num(0, "perturbation amplitude")?.unwrap_or(0.1);
            ModelSpace::perturbed_sphere(num(1, "sphere radius")?.unwrap_or(1.0), eps)
        }
        _ => return Ok(None),
    };
    model
        .validate()
        .map_err(|e| bad(format!("metric '{spec}': {e}")))?;
    Ok(Some(model))
}

/// `S2`, `S3`, ... as unit round spheres.
pub fn parse_space(spec: &str) -> Result<ModelSpace, ConfigError> {
    let n = spec
        .strip_prefix('S')
        .or_else(|| spec.strip_prefix('s'))
        .and_then(|d| d.parse::<usize>().ok())
        .ok_or_else(|| bad(format!("unknown space '{spec}' (expected S2, S3, ...)")))?;
    let model = ModelSpace::RoundSphere {
        radius: 1.0,
        dim: n,
    };
    model
        .validate()
        .map_err(|e| bad(format!("space '{spec}': {e}")))?;
    Ok(model)
}

pub fn resolve_metric(spec: &str) -> Result<ResolvedMetric, ConfigError> {
    if let Some(model) = shorthand(spec)? {
        let metric = model
            .metric()
            .map_err(|e| bad(format!("metric '{spec}': {e}")))?;
        return Ok(ResolvedMetric {
            label: model.label(),
            model: Some(model),
            metric,
        });
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(bad(format!(
            "'{spec}' is neither a metric shorthand nor a readable metric file"
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read metric file {spec}: {e}")))?;
    let metric = Metric::from_source(&text).map_err(|e| bad(format!("{spec}: {e}")))?;
    Ok(ResolvedMetric {
        model: None,
        metric,
        label: format!("file {spec}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_sections_and_overrides() {
        let mut cfg = RunConfig::defaults(Experiment::Theorem);
        let text = "# suggested constant for the unit sphere\n[metric]\nspace = S2\n[run]\nC = 4\nkmax = 12\nR = inf\n[tolerances]\node = 1e-11\n";
        cfg.apply_file_text(text, "t.conf").unwrap();
        assert_eq!(cfg.c, [4.0]);
        assert_eq!(cfg.k_max, 12);
        assert!(cfg.radius.unwrap().is_infinite());
        assert_eq!(cfg.tol.ode, 1e-11);
        let flags = Flags {
            kmax: Some(3),
            ..Default::default()
        };
        cfg.apply_flags(&flags).unwrap();
        assert_eq!(cfg.k_max, 3);
        cfg.validate().unwrap();
    }

    #[test]
    fn config_rejections() {
        let mut cfg = RunConfig::defaults(Experiment::Count);
        let e = cfg
            .apply_file_text("[run]\nlenght = 3\n", "x.conf")
            .unwrap_err();
        assert!(e.0.contains("x.conf:2") && e.0.contains("lenght"), "{e}");
        assert!(cfg.apply_file_text("[output]\n", "x.conf").is_err());
        assert!(cfg.apply_file_text("length = 3\n", "x.conf").is_err());
        assert!(cfg.apply_file_text("[run]\nlength 3\n", "x.conf").is_err());
        let mut cfg = RunConfig::defaults(Experiment::Count);
        cfg.length = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::defaults(Experiment::Area);
        cfg.samples = 100;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn shorthands() {
        let r = resolve_metric("sphere:2").unwrap();
        assert_eq!(
            r.model,
            Some(ModelSpace::RoundSphere {
                radius: 2.0,
                dim: 2
            })
        );
        let r = resolve_metric("spaceform:-1:3").unwrap();
        assert_eq!(
            r.model,
            Some(ModelSpace::SpaceForm {
                curvature: -1.0,
                dim: 3
            })
        );
        assert!(resolve_metric("hyperbolic").is_ok());
        assert!(resolve_metric("perturbed:0.1").is_ok());
        assert!(resolve_metric("sphere:-1").is_err());
        assert!(resolve_metric("no/such/file").is_err());
        assert_eq!(
            parse_space("S3").unwrap(),
            ModelSpace::RoundSphere {
                radius: 1.0,
                dim: 3
            }
        );
        assert!(parse_space("T2").is_err());
    }
}
