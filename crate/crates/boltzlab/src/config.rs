//! Experiment configuration: a single TOML document with the sections
//! [kernel], [grid], [kgrid], [schedule], [run] and [outputs].
//!
//! Parsing collects every problem (unknown keys with a nearest-match hint, type
//! errors, violated conditions) before failing, each anchored to a line.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::collision::{CollisionModel, DEFAULT_N_PHI, DEFAULT_N_THETA};
use crate::envelope::radial_rule;
use crate::error::{Error, Result};
use crate::grid::{VelocityGrid, WeightSpec};
use crate::schedule::{InterpolationSchedule, SoftOverrides};
use crate::spectral::{Integrator, KGrid};
use crate::sphere::KernelSpec;
use crate::trajectory::{InitialData, KProfile, SimConfig, VProfile};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub spec: KernelSpec,
    pub n_theta: usize,
    pub n_phi: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub extent: f64,
    pub points_per_axis: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum KGridConfig {
    /// Radial rule on [0, kmax] with geometric Gauss-Legendre panels.
    Radial { kmax: f64, levels: usize, order: usize },
    /// Lattice {-half..half}^3 with spacing dk.
    Lattice { half: i32, dk: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub p: f64,
    pub eps: f64,
    pub soft: SoftOverrides,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub amplitude: f64,
    pub initial: InitialData,
    /// Time step and length of the radial envelope.
    pub envelope_dt: f64,
    pub fit_window: (f64, f64),
    pub trilinear_samples: usize,
    pub interpolation_samples: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    /// Root directory; runs go to <dir>/<config hash>.
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    pub kgrid: KGridConfig,
    pub schedule: ScheduleConfig,
    pub run: RunConfig,
    pub outputs: OutputConfig,
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("kernel", &["gamma", "s", "theta_min", "b0", "n_theta", "n_phi"]),
    ("grid", &["extent", "points_per_axis"]),
    ("kgrid", &["mode", "kmax", "levels", "order", "half", "dk"]),
    ("schedule", &["p", "eps", "r", "j", "ell", "q", "r2", "eps1"]),
    (
        "run",
        &[
            "integrator",
            "dt",
            "t_end",
            "stride",
            "nonlinear",
            "amplitude",
            "rk4_safety",
            "pair_cutoff",
            "positivity_samples",
            "initial",
            "chi",
            "width",
            "power",
            "cutoff",
            "profile",
            "seed",
            "envelope_dt",
            "fit_window",
            "trilinear_samples",
            "interpolation_samples",
        ],
    ),
    ("outputs", &["dir", "formats"]),
];

/// Line numbers of section headers and keys, found by a light scan of the text.
struct LineIndex {
    sections: BTreeMap<String, usize>,
    keys: BTreeMap<(String, String), usize>,
}

impl LineIndex {
    fn new(text: &str) -> Self {
        let mut sections = BTreeMap::new();
        let mut keys = BTreeMap::new();
        let mut cur = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.starts_with('[') {
                cur = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
                sections.entry(cur.clone()).or_insert(i + 1);
            } else if let Some((k, _)) = line.split_once('=') {
                let k = k.trim().trim_matches('"').to_string();
                if !k.starts_with('#') {
                    keys.entry((cur.clone(), k)).or_insert(i + 1);
                }
            }
        }
        Self { sections, keys }
    }

    fn at(&self, section: &str, key: Option<&str>) -> String {
        let line = match key {
            Some(k) => self.keys.get(&(section.to_string(), k.to_string())).copied(),
            None => None,
        }
        .or_else(|| self.sections.get(section).copied());
        match line {
            Some(l) => format!("line {l}"),
            None => format!("[{section}]"),
        }
    }
}

fn nearest<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<&'a str> {
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, c)| *d <= 2.max(c.len() / 3))
        .min()
        .map(|(_, c)| c)
}

/// Reads typed values from one section, recording problems instead of failing.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a toml::Table>,
    lines: &'a LineIndex,
    errs: &'a mut Vec<String>,
}

impl Section<'_> {
    fn err(&mut self, key: &str, msg: String) {
        let at = self.lines.at(self.name, Some(key));
        self.errs.push(format!("{at}: [{}] {key}: {msg}", self.name));
    }

    fn raw(&self, key: &str) -> Option<&Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn has(&self, key: &str) -> bool {
        self.raw(key).is_some()
    }

    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        self.f64_opt(key).unwrap_or(default)
    }

    fn f64_opt(&mut self, key: &str) -> Option<f64> {
        match self.raw(key) {
            None => None,
            Some(Value::Float(x)) => Some(*x),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(Value::String(s)) if s == "inf" || s == "infinity" => Some(f64::INFINITY),
            Some(v) => {
                let msg = format!("expected a number, found {}", v.type_str());
                self.err(key, msg);
                None
            }
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> usize {
        match self.raw(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(v) => {
                let msg = format!("expected a nonnegative integer, found {v}");
                self.err(key, msg);
                default
            }
        }
    }

    fn bool_or(&mut self, key: &str, default: bool) -> bool {
        match self.raw(key) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(v) => {
                let msg = format!("expected true or false, found {v}");
                self.err(key, msg);
                default
            }
        }
    }

    fn choice(&mut self, key: &str, options: &[&str], default: &str) -> String {
        match self.raw(key) {
            None => default.to_string(),
            Some(Value::String(s)) if options.contains(&s.as_str()) => s.clone(),
            Some(v) => {
                let shown = v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
                let hint = v
                    .as_str()
                    .and_then(|s| nearest(s, options.iter().copied()))
                    .map(|h| format!("; did you mean \"{h}\"?"))
                    .unwrap_or_default();
                self.err(key, format!("\"{shown}\" is not one of {options:?}{hint}"));
                default.to_string()
            }
        }
    }

    fn string_or(&mut self, key: &str, default: &str) -> String {
        match self.raw(key) {
            None => default.to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(v) => {
                let msg = format!("expected a string, found {}", v.type_str());
                self.err(key, msg);
                default.to_string()
            }
        }
    }

    fn require_positive(&mut self, key: &str, x: f64) {
        if !(x > 0.0) {
            self.err(key, format!("must be positive, got {x}"));
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates; all violations are reported together.
    pub fn parse(text: &str) -> Result<Self> {
        let root: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            let at = e
                .span()
                .map(|s| format!("line {}: ", text[..s.start].matches('\n').count() + 1))
                .unwrap_or_default();
            Error::Config(format!("{at}{}", e.message()))
        })?;
        let lines = LineIndex::new(text);
        let mut errs = Vec::new();

        for (key, value) in &root {
            match SCHEMA.iter().find(|(s, _)| s == key) {
                None => {
                    let hint = nearest(key, SCHEMA.iter().map(|s| s.0))
                        .map(|h| format!("; did you mean [{h}]?"))
                        .unwrap_or_default();
                    let at = lines.sections.get(key).map(|l| format!("line {l}")).unwrap_or_else(|| "top level".into());
                    errs.push(format!("{at}: unknown section [{key}]{hint}"));
                }
                Some((sec, known)) => match value.as_table() {
                    None => errs.push(format!("{}: [{sec}] must be a table", lines.at(sec, None))),
                    Some(t) => {
                        for k in t.keys() {
                            if !known.contains(&k.as_str()) {
                                let hint = nearest(k, known.iter().copied())
                                    .map(|h| format!("; did you mean `{h}`?"))
                                    .unwrap_or_default();
                                errs.push(format!("{}: unknown key `{k}` in [{sec}]{hint}", lines.at(sec, Some(k))));
                            }
                        }
                    }
                },
            }
        }
        let tab = |name: &str| root.get(name).and_then(Value::as_table);

        // [kernel]
        let mut s = Section { name: "kernel", table: tab("kernel"), lines: &lines, errs: &mut errs };
        let hard = KernelSpec::hard();
        let spec = KernelSpec {
            gamma: s.f64_or("gamma", hard.gamma),
            s: s.f64_or("s", hard.s),
            theta_min: s.f64_or("theta_min", hard.theta_min),
            b0: s.f64_or("b0", hard.b0),
        };
        if let Err(e) = spec.validate() {
            let msg = e.to_string().trim_start_matches("invalid input: ").to_string();
            s.err("gamma", msg);
        }
        let kernel = KernelConfig {
            spec,
            n_theta: s.usize_or("n_theta", DEFAULT_N_THETA),
            n_phi: s.usize_or("n_phi", DEFAULT_N_PHI),
        };
        if kernel.n_theta == 0 || kernel.n_phi == 0 {
            s.err("n_theta", "angular rule sizes must be positive".into());
        }

        // [grid]
        let mut s = Section { name: "grid", table: tab("grid"), lines: &lines, errs: &mut errs };
        let grid = GridConfig { extent: s.f64_or("extent", 6.0), points_per_axis: s.usize_or("points_per_axis", 12) };
        s.require_positive("extent", grid.extent);
        if grid.points_per_axis < 4 {
            s.err("points_per_axis", format!("must be at least 4, got {}", grid.points_per_axis));
        }

        // [kgrid]
        let mut s = Section { name: "kgrid", table: tab("kgrid"), lines: &lines, errs: &mut errs };
        let mode = s.choice("mode", &["radial", "lattice"], "radial");
        let kgrid = if mode == "radial" {
            for k in ["half", "dk"] {
                if s.has(k) {
                    s.err(k, "only used with mode = \"lattice\"".into());
                }
            }
            let c = KGridConfig::Radial {
                kmax: s.f64_or("kmax", 3.0),
                levels: s.usize_or("levels", 12),
                order: s.usize_or("order", 8),
            };
            if let KGridConfig::Radial { kmax, levels, order } = c {
                s.require_positive("kmax", kmax);
                if levels == 0 || order == 0 {
                    s.err("levels", "levels and order must be positive".into());
                }
            }
            c
        } else {
            for k in ["kmax", "levels", "order"] {
                if s.has(k) {
                    s.err(k, "only used with mode = \"radial\"".into());
                }
            }
            let half = s.usize_or("half", 2) as i32;
            let dk = s.f64_or("dk", 0.5);
            s.require_positive("dk", dk);
            if half == 0 {
                s.err("half", "lattice needs half >= 1".into());
            }
            KGridConfig::Lattice { half, dk }
        };

        // [schedule]
        let mut s = Section { name: "schedule", table: tab("schedule"), lines: &lines, errs: &mut errs };
        let p = s.f64_or("p", f64::INFINITY);
        let eps = s.f64_or("eps", 0.1);
        let soft = SoftOverrides {
            r: s.f64_opt("r"),
            j: s.f64_opt("j"),
            ell: s.f64_opt("ell"),
            q: s.f64_opt("q"),
            r2: s.f64_opt("r2"),
            eps1: s.f64_opt("eps1"),
        };
        match InterpolationSchedule::new(p, eps) {
            Err(e) => s.err("p", config_msg(e)),
            Ok(sched) => {
                if spec.gamma2s() < 0.0 {
                    if let Err(e) = sched.with_soft(-spec.gamma2s(), &soft) {
                        let key = ["ell", "j", "r", "r2", "q"].into_iter().find(|k| s.has(k)).unwrap_or("p");
                        s.err(key, config_msg(e));
                    }
                } else if soft != SoftOverrides::default() {
                    let key = ["r", "j", "ell", "q", "r2", "eps1"].into_iter().find(|k| s.has(k)).unwrap();
                    s.err(key, "soft-potential indices given for a hard kernel (gamma + 2s >= 0)".into());
                }
            }
        }
        let schedule = ScheduleConfig { p, eps, soft };

        // [run]
        let mut s = Section { name: "run", table: tab("run"), lines: &lines, errs: &mut errs };
        let integrator = match s.choice("integrator", &["rk4", "crank-nicolson"], "rk4").as_str() {
            "rk4" => Integrator::Rk4,
            _ => Integrator::CrankNicolson,
        };
        let dt = s.f64_opt("dt");
        if let Some(d) = dt {
            s.require_positive("dt", d);
        }
        let defaults = SimConfig::default();
        let sim = SimConfig {
            integrator,
            dt,
            t_end: s.f64_or("t_end", 1.0),
            stride: s.usize_or("stride", 1),
            nonlinear: s.bool_or("nonlinear", false),
            rk4_safety: s.f64_or("rk4_safety", defaults.rk4_safety),
            pair_cutoff: s.f64_or("pair_cutoff", defaults.pair_cutoff),
            positivity_samples: s.usize_or("positivity_samples", 0),
        };
        s.require_positive("t_end", sim.t_end);
        if sim.stride == 0 {
            s.err("stride", "must be at least 1".into());
        }
        if !(sim.rk4_safety > 0.0 && sim.rk4_safety <= 1.0) {
            s.err("rk4_safety", format!("must lie in (0, 1], got {}", sim.rk4_safety));
        }
        if !(sim.pair_cutoff >= 0.0) {
            s.err("pair_cutoff", "must be nonnegative".into());
        }
        let amplitude = s.f64_or("amplitude", 1.0);
        s.require_positive("amplitude", amplitude);
        let chi = match s.choice("chi", &["gaussian", "power-bump"], "gaussian").as_str() {
            "gaussian" => {
                let width = s.f64_or("width", 0.6);
                s.require_positive("width", width);
                KProfile::Gaussian { width }
            }
            _ => KProfile::PowerBump { a: s.f64_or("power", 1.5), cutoff: s.f64_or("cutoff", 1.0) },
        };
        let seed = s.usize_or("seed", 7) as u64;
        let initial = match s.choice("initial", &["separable", "random-phase"], "separable").as_str() {
            "separable" => {
                let g = match s.choice("profile", &["standard", "micro"], "standard").as_str() {
                    "standard" => VProfile::Standard,
                    _ => VProfile::Micro,
                };
                InitialData::Separable { chi, g }
            }
            _ => InitialData::RandomPhase { chi, seed },
        };
        if matches!(kgrid, KGridConfig::Radial { .. }) {
            if sim.nonlinear {
                s.err("nonlinear", "the nonlinear term needs mode = \"lattice\" in [kgrid]".into());
            }
            if matches!(initial, InitialData::RandomPhase { .. }) {
                s.err("initial", "random-phase data need mode = \"lattice\" in [kgrid]".into());
            }
        }
        let envelope_dt = s.f64_or("envelope_dt", 0.5);
        s.require_positive("envelope_dt", envelope_dt);
        let fit_window = match s.raw("fit_window") {
            None => (0.25 * sim.t_end, sim.t_end),
            Some(Value::Array(a)) if a.len() == 2 => {
                let x: Vec<Option<f64>> =
                    a.iter().map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64))).collect();
                match (x[0], x[1]) {
                    (Some(a), Some(b)) if a >= 0.0 && b > a => (a, b),
                    _ => {
                        s.err("fit_window", "expected [t0, t1] with 0 <= t0 < t1".into());
                        (0.0, 1.0)
                    }
                }
            }
            Some(_) => {
                s.err("fit_window", "expected a two-element array [t0, t1]".into());
                (0.0, 1.0)
            }
        };
        if fit_window.1 > sim.t_end * (1.0 + 1e-12) {
            s.err("fit_window", format!("window end {} exceeds t_end = {}", fit_window.1, sim.t_end));
        }
        let run = RunConfig {
            sim,
            amplitude,
            initial,
            envelope_dt,
            fit_window,
            trilinear_samples: s.usize_or("trilinear_samples", 32),
            interpolation_samples: s.usize_or("interpolation_samples", 10_000),
            seed,
        };

        // [outputs]
        let mut s = Section { name: "outputs", table: tab("outputs"), lines: &lines, errs: &mut errs };
        let dir = PathBuf::from(s.string_or("dir", "runs"));
        let mut formats = Vec::new();
        match s.raw("formats").cloned() {
            None => formats = vec![OutputFormat::Json, OutputFormat::Csv],
            Some(Value::Array(a)) => {
                for v in &a {
                    match v.as_str() {
                        Some("json") => formats.push(OutputFormat::Json),
                        Some("csv") => formats.push(OutputFormat::Csv),
                        Some("binary") => formats.push(OutputFormat::Binary),
                        _ => {
                            let hint = v
                                .as_str()
                                .and_then(|x| nearest(x, ["json", "csv", "binary"]))
                                .map(|h| format!("; did you mean \"{h}\"?"))
                                .unwrap_or_default();
                            s.err("formats", format!("unknown format {v}{hint}"));
                        }
                    }
                }
            }
            Some(_) => s.err("formats", "expected an array of \"json\", \"csv\", \"binary\"".into()),
        }
        formats.sort();
        formats.dedup();
        let outputs = OutputConfig { dir, formats };

        if !errs.is_empty() {
            return Err(Error::Config(errs.join("\n")));
        }
        Ok(Self { kernel, grid, kgrid, schedule, run, outputs })
    }

    /// Hex SHA-256 of the canonical JSON form; the output directory is named by it.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.canonical()).expect("config serializes"));
        hex::encode(h.finalize())
    }

    /// Short hash used for directory names.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    /// The config without the output location, which does not affect results.
    fn canonical(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("outputs");
        }
        v
    }

    pub fn velocity_grid(&self) -> Result<VelocityGrid> {
        VelocityGrid::new(self.grid.extent, self.grid.points_per_axis)
    }

    pub fn model(&self) -> Result<CollisionModel> {
        CollisionModel::new(self.velocity_grid()?, self.kernel.spec, self.kernel.n_theta, self.kernel.n_phi)
    }

    pub fn k_grid(&self) -> Result<KGrid> {
        match self.kgrid {
            KGridConfig::Radial { kmax, levels, order } => Ok(KGrid::radial(&radial_rule(kmax, levels, order))),
            KGridConfig::Lattice { half, dk } => KGrid::lattice(half, dk),
        }
    }

    pub fn is_soft(&self) -> bool {
        self.kernel.spec.gamma2s() < 0.0
    }

    pub fn interpolation_schedule(&self) -> Result<InterpolationSchedule> {
        let s = InterpolationSchedule::new(self.schedule.p, self.schedule.eps)?;
        if self.is_soft() {
            s.with_soft(-self.kernel.spec.gamma2s(), &self.schedule.soft)
        } else {
            Ok(s)
        }
    }

    /// Velocity weight of the soft-potential functionals (unit for hard kernels).
    pub fn weight(&self) -> Result<Option<WeightSpec>> {
        let s = self.interpolation_schedule()?;
        Ok(match s.soft {
            Some(soft) => Some(WeightSpec::new(soft.ell, soft.q, soft.gamma2s)?),
            None => None,
        })
    }
}

fn config_msg(e: Error) -> String {
    match e {
        Error::Config(m) => m.replace('\n', "; "),
        other => other.to_string(),
    }
}

/// A documented example configuration (hard kernel, radial linear decay run).
pub const EXAMPLE: &str = r#"# boltzlab experiment
[kernel]
gamma = 1.0        # kinetic exponent, in (-3, 1]
s = 0.5            # angular singularity, in (0, 1)
theta_min = 0.2    # angular cutoff
b0 = 1.0
n_theta = 6
n_phi = 12

[grid]
extent = 6.0       # velocity box [-V, V]^3
points_per_axis = 12

[kgrid]
mode = "radial"    # "radial" (linear decay) or "lattice" (nonlinear runs)
kmax = 3.0
levels = 12
order = 8

[schedule]
p = "inf"          # k-integrability index, p > 3/2
eps = 0.1

[run]
integrator = "rk4"
t_end = 100.0
amplitude = 1.0
initial = "separable"
chi = "gaussian"
width = 0.6
profile = "standard"
envelope_dt = 0.5
fit_window = [25.0, 100.0]

[outputs]
dir = "runs"
formats = ["json", "csv"]
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn err(text: &str) -> String {
        ExperimentConfig::parse(text).unwrap_err().to_string()
    }

    #[test]
    fn example_parses() {
        let c = ExperimentConfig::parse(EXAMPLE).unwrap();
        let s = c.interpolation_schedule().unwrap();
        assert!((s.sigma - 2.8).abs() < 1e-14);
        assert_eq!(c.run.fit_window, (25.0, 100.0));
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn empty_document_takes_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c.kernel.spec, KernelSpec::hard());
        assert!(c.schedule.p.is_infinite());
    }

    #[test]
    fn small_p_is_rejected() {
        let e = err("[schedule]\np = 1.2\n");
        assert!(e.contains("line 2") && e.contains("p > 3/2"), "{e}");
    }

    #[test]
    fn all_errors_are_reported_with_hints() {
        let e = err("[kernel]\ngama = 1.0\n[grid]\npoints_per_axis = 2\n[outputs]\nformats = [\"jsn\"]\n");
        assert!(e.contains("line 2: unknown key `gama` in [kernel]; did you mean `gamma`?"), "{e}");
        assert!(e.contains("line 4") && e.contains("at least 4"), "{e}");
        assert!(e.contains("did you mean \"json\""), "{e}");
        assert_eq!(e.lines().count(), 4, "{e}");
    }

    #[test]
    fn unknown_section() {
        let e = err("[kernl]\ngamma = 1.0\n");
        assert!(e.contains("unknown section [kernl]; did you mean [kernel]?"), "{e}");
    }

    #[test]
    fn soft_index_condition_is_enforced() {
        let e = err("[kernel]\ngamma = -2.0\ns = 0.5\n[schedule]\np = 2.0\nell = 0.5\nq = 0.0\n");
        assert!(e.contains("q = 0 requires ell"), "{e}");
        assert!(e.contains("line 6"), "{e}");
        let ok = ExperimentConfig::parse("[kernel]\ngamma = -2.0\ns = 0.5\n[schedule]\np = 2.0\n").unwrap();
        assert!(ok.is_soft() && ok.weight().unwrap().is_some());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = ExperimentConfig::parse("[outputs]\ndir = \"a\"\n").unwrap();
        let b = ExperimentConfig::parse("[outputs]\ndir = \"b\"\n").unwrap();
        let c = ExperimentConfig::parse("[grid]\npoints_per_axis = 10\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn nonlinear_needs_lattice() {
        let e = err("[run]\nnonlinear = true\n");
        assert!(e.contains("lattice"), "{e}");
    }
}
