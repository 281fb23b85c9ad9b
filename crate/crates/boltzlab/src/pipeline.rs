//! Stage orchestration: assemble -> simulate -> measure -> verify -> fit-decay.
//!
//! Each stage reads its inputs from the run directory, so stages can be run in
//! separate invocations. Reports are deterministic for a fixed thread count;
//! timings and memory go only into the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coercivity::{coercivity_spectrum, weighted_coercivity};
use crate::collision::{Assembled, AssemblyMode, CollisionModel};
use crate::config::{ExperimentConfig, KGridConfig, OutputFormat};
use crate::envelope::{radial_decay_envelope, radial_exact_states, radial_rule, RadialEnvelope};
use crate::error::{Error, Result};
use crate::grid::{VelocityGrid, WeightSpec};
use crate::io;
use crate::norms::{fit_decay_rate, functional_suite, l1k_decay_integral, n_functional, NormContext};
use crate::operator::{cache_dir, cache_key, OperatorKind, OperatorMatrix};
use crate::par;
use crate::spectral::{GammaHat, GammaHatOptions, KGrid};
use crate::trajectory::{l1k_l2v, simulate, InitialData, Trajectory};
use crate::verify::{
    check_gamma_hat_bound, check_interpolation, check_trilinear, check_weighted_gamma, energy_ledger, macro_residual,
    SoftLedger,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Assemble,
    Simulate,
    Measure,
    Verify,
    FitDecay,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Assemble, Stage::Simulate, Stage::Measure, Stage::Verify, Stage::FitDecay];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Assemble => "assemble",
            Stage::Simulate => "simulate",
            Stage::Measure => "measure",
            Stage::Verify => "verify",
            Stage::FitDecay => "fit-decay",
        }
    }

    pub fn parse(s: &str) -> Result<Stage> {
        Stage::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown stage `{s}`")))
    }

    pub fn deps(&self) -> &'static [Stage] {
        match self {
            Stage::Assemble => &[],
            Stage::Simulate => &[Stage::Assemble],
            Stage::Measure => &[Stage::Simulate, Stage::Assemble],
            Stage::Verify => &[Stage::Assemble, Stage::Simulate],
            Stage::FitDecay => &[Stage::Measure],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageStatus {
    Ok,
    /// Ran, but a verification check failed.
    CheckFailed,
    Failed,
    /// Not run because a stage it depends on failed.
    Skipped,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub wall_seconds: f64,
    /// Process peak resident set after the stage, when the platform reports it.
    pub peak_rss_kb: Option<u64>,
    pub notes: Vec<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub threads: usize,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn status(&self, s: Stage) -> Option<&StageStatus> {
        self.stages.iter().find(|r| r.stage == s).map(|r| &r.status)
    }
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOptions {
    /// Overrides `[outputs] dir`.
    pub out: Option<PathBuf>,
    /// Operator cache; defaults to $BOLTZLAB_CACHE, else `<run>/operators`.
    pub cache: Option<PathBuf>,
}

/// Outcome of [`run_pipeline`]: the manifest plus the first error, if any.
pub struct PipelineOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub error: Option<Error>,
    /// Some verification check failed.
    pub check_failed: bool,
}

pub fn run_dir(cfg: &ExperimentConfig, opts: &PipelineOptions) -> PathBuf {
    opts.out.clone().unwrap_or_else(|| cfg.outputs.dir.clone()).join(cfg.short_hash())
}

fn peak_rss_kb() -> Option<u64> {
    let s = fs::read_to_string("/proc/self/status").ok()?;
    let line = s.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// Runs the requested stages in dependency order and writes the manifest.
pub fn run_pipeline(cfg: &ExperimentConfig, stages: &[Stage], opts: &PipelineOptions) -> Result<PipelineOutcome> {
    let dir = run_dir(cfg, opts);
    fs::create_dir_all(&dir)?;
    io::write_json(&dir.join("config.json"), cfg)?;
    let mut manifest = match io::read_json::<RunManifest>(&dir.join("manifest.json")) {
        Ok(m) if m.config_hash == cfg.hash() => m,
        _ => RunManifest {
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").into(),
            threads: par::threads(),
            stages: Vec::new(),
            files: Vec::new(),
        },
    };
    manifest.threads = par::threads();
    let mut todo: Vec<Stage> = stages.to_vec();
    todo.sort();
    todo.dedup();
    let cache = cache_dir(opts.cache.as_deref()).unwrap_or_else(|| dir.join("operators"));
    let mut ctx = StageContext { cfg, dir: dir.clone(), cache, external: BTreeMap::new() };
    let mut error = None;
    let mut check_failed = false;
    let mut bad: Vec<Stage> = Vec::new();
    for st in todo {
        let t0 = Instant::now();
        let rec = if let Some(d) = st.deps().iter().find(|d| bad.contains(d)) {
            bad.push(st);
            StageRecord {
                stage: st,
                status: StageStatus::Skipped,
                wall_seconds: 0.0,
                peak_rss_kb: None,
                notes: vec![],
                error: Some(format!("skipped: stage `{}` failed", d.name())),
            }
        } else {
            log::info!("stage {}", st.name());
            let r = ctx.run(st);
            let wall = t0.elapsed().as_secs_f64();
            match r {
                Ok(out) => {
                    check_failed |= !out.passed;
                    StageRecord {
                        stage: st,
                        status: if out.passed { StageStatus::Ok } else { StageStatus::CheckFailed },
                        wall_seconds: wall,
                        peak_rss_kb: peak_rss_kb(),
                        notes: out.notes,
                        error: None,
                    }
                }
                Err(e) => {
                    bad.push(st);
                    let msg = e.to_string();
                    if error.is_none() {
                        error = Some(e);
                    }
                    StageRecord {
                        stage: st,
                        status: StageStatus::Failed,
                        wall_seconds: wall,
                        peak_rss_kb: peak_rss_kb(),
                        notes: vec![],
                        error: Some(msg),
                    }
                }
            }
        };
        manifest.stages.retain(|r| r.stage != st);
        manifest.stages.push(rec);
    }
    manifest.stages.sort_by_key(|r| r.stage);
    manifest.files = inventory(&dir, &ctx.external)?;
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(PipelineOutcome { run_dir: dir, manifest, error, check_failed })
}

fn inventory(dir: &Path, external: &BTreeMap<String, PathBuf>) -> Result<Vec<FileRecord>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d)? {
            let p = e?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                let rel = p.strip_prefix(dir).unwrap_or(&p).to_string_lossy().replace('\\', "/");
                out.push(FileRecord { path: rel, bytes: fs::metadata(&p)?.len(), sha256: io::sha256_file(&p)? });
            }
        }
    }
    for p in external.values() {
        if !p.starts_with(dir) && p.exists() {
            out.push(FileRecord {
                path: p.to_string_lossy().into_owned(),
                bytes: fs::metadata(p)?.len(),
                sha256: io::sha256_file(p)?,
            });
        }
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

struct StageOutput {
    notes: Vec<String>,
    passed: bool,
}

impl StageOutput {
    fn ok(notes: Vec<String>) -> Self {
        Self { notes, passed: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct AssembleReport {
    points_per_axis: usize,
    operators: BTreeMap<String, String>,
    symmetry_defect: f64,
    split_defect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrajectoryInfo {
    dt: f64,
    stride: usize,
    snapshots: usize,
    nonlinear: bool,
    min_positivity: Option<f64>,
}

struct StageContext<'a> {
    cfg: &'a ExperimentConfig,
    dir: PathBuf,
    cache: PathBuf,
    external: BTreeMap<String, PathBuf>,
}

const OPERATOR_TAGS: [&str; 4] = ["l", "l1", "l2", "dgram"];

impl StageContext<'_> {
    fn run(&mut self, s: Stage) -> Result<StageOutput> {
        match s {
            Stage::Assemble => self.assemble(),
            Stage::Simulate => self.simulate(),
            Stage::Measure => self.measure(),
            Stage::Verify => self.verify(),
            Stage::FitDecay => self.fit_decay(),
        }
    }

    fn wants(&self, f: OutputFormat) -> bool {
        self.cfg.outputs.formats.contains(&f)
    }

    fn need(&self, file: &str, producer: Stage) -> Result<PathBuf> {
        let p = self.dir.join(file);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::Missing(format!(
                "{} not found in {}: run the `{}` stage first",
                file,
                self.dir.display(),
                producer.name()
            )))
        }
    }

    fn operator_paths(&self, model: &CollisionModel) -> Vec<PathBuf> {
        let prov = model.provenance();
        OPERATOR_TAGS.iter().map(|t| self.cache.join(format!("{}-{t}.bin", cache_key(&prov, t)))).collect()
    }

    fn assemble(&mut self) -> Result<StageOutput> {
        let model = self.cfg.model()?;
        let paths = self.operator_paths(&model);
        let cached_report = self.cache.join(format!("{}-assemble.json", cache_key(&model.provenance(), "l")));
        let mut notes = Vec::new();
        let cached = paths.iter().all(|p| OperatorMatrix::load(p).is_ok());
        let rep = match io::read_json::<AssembleReport>(&cached_report) {
            Ok(rep) if cached => {
                notes.push(format!("cache hit: {} operators reused from {}", paths.len(), self.cache.display()));
                rep
            }
            _ => {
                let ops = model.assemble(AssemblyMode::Symmetric)?;
                for (m, p) in [&ops.l, &ops.l1, &ops.l2, &ops.dgram].into_iter().zip(&paths) {
                    let mut m = m.clone();
                    m.provenance = Some(model.provenance());
                    m.save(p)?;
                }
                let rep = AssembleReport {
                    points_per_axis: model.grid().points_per_axis(),
                    operators: OPERATOR_TAGS
                        .iter()
                        .zip(&paths)
                        .map(|(t, p)| (t.to_string(), p.file_name().unwrap().to_string_lossy().into_owned()))
                        .collect(),
                    symmetry_defect: ops.symmetry_defect,
                    split_defect: ops.split_defect,
                };
                io::write_json(&cached_report, &rep)?;
                notes.push(format!("assembled {} collisions", model.collision_count()));
                rep
            }
        };
        io::write_json(&self.dir.join("assemble.json"), &rep)?;
        for (t, p) in OPERATOR_TAGS.iter().zip(paths) {
            self.external.insert(t.to_string(), p);
        }
        Ok(StageOutput::ok(notes))
    }

    fn load_ops(&mut self) -> Result<(CollisionModel, Assembled)> {
        let rep: AssembleReport = io::read_json(&self.need("assemble.json", Stage::Assemble)?)?;
        let model = self.cfg.model()?;
        let paths = self.operator_paths(&model);
        let mut ms = Vec::new();
        for p in &paths {
            if !p.exists() {
                return Err(Error::Missing(format!(
                    "operator {} not found: run the `assemble` stage first",
                    p.display()
                )));
            }
            ms.push(OperatorMatrix::load(p)?);
        }
        for (t, p) in OPERATOR_TAGS.iter().zip(paths) {
            self.external.insert(t.to_string(), p);
        }
        let dgram = ms.pop().unwrap();
        let l2 = ms.pop().unwrap();
        let l1 = ms.pop().unwrap();
        let l = ms.pop().unwrap();
        if l.kind != OperatorKind::L || dgram.kind != OperatorKind::DGram {
            return Err(Error::Format("cached operators have unexpected kinds".into()));
        }
        Ok((
            model,
            Assembled { l, l1, l2, dgram, symmetry_defect: rep.symmetry_defect, split_defect: rep.split_defect },
        ))
    }

    fn separable_profile(&self, grid: &VelocityGrid) -> Result<Vec<f64>> {
        let InitialData::Separable { g, .. } = &self.cfg.run.initial else {
            return Err(Error::invalid("radial runs need separable initial data"));
        };
        Ok(g.field(grid)?.into_iter().map(|x| x * self.cfg.run.amplitude).collect())
    }

    fn radial(&self) -> bool {
        matches!(self.cfg.kgrid, KGridConfig::Radial { .. })
    }

    fn simulate(&mut self) -> Result<StageOutput> {
        let (model, ops) = self.load_ops()?;
        let grid = model.grid().clone();
        let run = &self.cfg.run;
        if let KGridConfig::Radial { kmax, levels, order } = self.cfg.kgrid {
            let g0 = self.separable_profile(&grid)?;
            let steps = (run.sim.t_end / run.envelope_dt).round().max(1.0) as usize;
            let rule = radial_rule(kmax, levels, order);
            let env = radial_decay_envelope(&grid, &ops.l, &g0, &rule, run.envelope_dt, steps)?;
            io::write_json(&self.dir.join("envelope.json"), &env)?;
            if self.wants(OutputFormat::Csv) {
                let mut rows = Vec::new();
                for (i, &k) in env.radii.iter().enumerate() {
                    for (j, &t) in env.times.iter().enumerate() {
                        rows.push(vec![k, env.weights[i], t, env.norms[i][j]]);
                    }
                }
                io::write_csv(&self.dir.join("envelope.csv"), &["k", "weight", "t", "norm_l2v"], &rows)?;
            }
            return Ok(StageOutput::ok(vec![format!("{} radii x {} times", env.radii.len(), env.times.len())]));
        }
        let kg = self.cfg.k_grid()?;
        let init = run.initial.build(&grid, &kg, run.amplitude)?;
        let tr = simulate(Some(&model), &grid, &ops.l, &kg, init, &run.sim)?;
        io::write_fields(&self.dir.join("trajectory.bin"), &grid, &tr.states)?;
        if !tr.sources.is_empty() {
            io::write_fields(&self.dir.join("sources.bin"), &grid, &tr.sources)?;
        }
        let info = TrajectoryInfo {
            dt: tr.dt,
            stride: tr.stride,
            snapshots: tr.len(),
            nonlinear: run.sim.nonlinear,
            min_positivity: tr.min_positivity(),
        };
        io::write_json(&self.dir.join("trajectory.json"), &info)?;
        if self.wants(OutputFormat::Csv) && !tr.positivity.is_empty() {
            let rows: Vec<Vec<f64>> = tr.positivity.iter().map(|p| vec![p.t, p.min_f, p.samples as f64]).collect();
            io::write_csv(&self.dir.join("positivity.csv"), &["t", "min_f", "samples"], &rows)?;
        }
        Ok(StageOutput::ok(vec![format!("{} snapshots, dt = {}", tr.len(), tr.dt)]))
    }

    fn load_trajectory(&self, grid: &VelocityGrid, kg: &KGrid) -> Result<Trajectory> {
        let info: TrajectoryInfo = io::read_json(&self.need("trajectory.json", Stage::Simulate)?)?;
        let states = io::read_fields(&self.need("trajectory.bin", Stage::Simulate)?)?.states;
        let sources = if info.nonlinear {
            io::read_fields(&self.need("sources.bin", Stage::Simulate)?)?.states
        } else {
            Vec::new()
        };
        Trajectory::from_states(grid, kg, info.dt, info.stride, states, sources)
    }

    fn chi(&self) -> crate::trajectory::KProfile {
        match &self.cfg.run.initial {
            InitialData::Separable { chi, .. } | InitialData::RandomPhase { chi, .. } => *chi,
        }
    }

    fn measure(&mut self) -> Result<StageOutput> {
        if self.radial() {
            let env: RadialEnvelope = io::read_json(&self.need("envelope.json", Stage::Simulate)?)?;
            let chi = self.chi();
            let series = l1k_decay_integral(&env, &|k| chi.eval(k), 1e-3)?;
            let rows: Vec<Vec<f64>> = series.iter().map(|(t, v)| vec![*t, *v]).collect();
            io::write_csv(&self.dir.join("decay.csv"), &["t", "l1k_l2v"], &rows)?;
            return Ok(StageOutput::ok(vec![format!("{} decay samples", rows.len())]));
        }
        let (model, ops) = self.load_ops()?;
        let grid = model.grid().clone();
        let kg = self.cfg.k_grid()?;
        let tr = self.load_trajectory(&grid, &kg)?;
        let sched = self.cfg.interpolation_schedule()?;
        let ctx = NormContext::new(&grid, Some(&ops.dgram), sched.sigma)?;
        let rep = functional_suite(&tr, &ctx, &sched, self.cfg.weight()?)?;
        io::write_json(&self.dir.join("functionals.json"), &rep)?;
        let proj = &ctx.proj;
        let rows: Vec<Vec<f64>> = tr
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let macro_l1: f64 = (0..kg.len()).map(|k| kg.weights[k] * tr.macros[i][k].abs()).sum();
                let micro_l1: f64 =
                    (0..kg.len()).map(|k| kg.weights[k] * grid.norm(&proj.micro(&grid, s.mode(k)))).sum();
                vec![s.t, l1k_l2v(s, &grid, &kg), macro_l1, micro_l1]
            })
            .collect();
        io::write_csv(&self.dir.join("decay.csv"), &["t", "l1k_l2v", "macro_l1k", "micro_l1k_l2v"], &rows)?;
        Ok(StageOutput::ok(vec![format!("N(T) = {:.6e}", n_functional(&tr, &ctx)?)]))
    }

    fn verify(&mut self) -> Result<StageOutput> {
        let (model, ops) = self.load_ops()?;
        let grid = model.grid().clone();
        let sched = self.cfg.interpolation_schedule()?;
        let run = &self.cfg.run;
        let mut report = serde_json::Map::new();
        let mut passed = true;
        let mut notes = Vec::new();
        let put = |r: &mut serde_json::Map<String, serde_json::Value>, k: &str, v: serde_json::Value| {
            r.insert(k.into(), v);
        };

        let coer = coercivity_spectrum(&grid, &ops)?;
        if !(coer.delta0 > 0.0) {
            passed = false;
            notes.push(format!("coercivity failed: delta0 = {}", coer.delta0));
        }
        put(&mut report, "coercivity", serde_json::to_value(&coer)?);

        let fit = check_trilinear(&model, &ops.dgram, run.trilinear_samples.max(1), 0, run.seed)?;
        put(
            &mut report,
            "trilinear",
            serde_json::json!({ "constant": fit.constant, "samples": fit.samples }),
        );

        let interp = check_interpolation(&sched, &[0.1, 0.01], run.interpolation_samples.max(1), run.seed)?;
        if !interp.passed() {
            passed = false;
            notes.push("interpolation split violated".into());
        }
        put(&mut report, "interpolation", serde_json::to_value(&interp)?);

        let weight: Option<WeightSpec> = self.cfg.weight()?;
        if let Some(w) = weight {
            let wg = check_weighted_gamma(&model, &ops.dgram, &w, run.trilinear_samples.max(1), run.seed)?;
            put(&mut report, "weighted_gamma", serde_json::to_value(&wg)?);
            let wc = weighted_coercivity(&grid, &ops, w, 0.5 * grid.extent())?;
            put(&mut report, "weighted_coercivity", serde_json::to_value(&wc)?);
        }

        if self.radial() {
            // exact linear solution at a few |k|, sampled after the stiff transient
            let kg = KGrid::radial(&[(0.25, 1.0), (0.5, 1.0), (1.0, 1.0)]);
            let states = radial_exact_states(&grid, &ops.l, &self.separable_profile(&grid)?, &kg, 0.02, 100)?;
            let states: Vec<_> = states.into_iter().filter(|s| s.t >= 1.0 - 1e-9).collect();
            let tr = Trajectory::from_states(&grid, &kg, 0.02, 1, states, Vec::new())?;
            put(&mut report, "macro_residual", serde_json::to_value(macro_residual(&tr, &grid, &ops.l)?)?);
        } else {
            let kg = self.cfg.k_grid()?;
            let tr = self.load_trajectory(&grid, &kg)?;
            let gh = GammaHat::new(&model, &kg, GammaHatOptions::default())?;
            let s0 = &tr.states[0];
            let gb = check_gamma_hat_bound(&gh, &kg, &grid, &ops.dgram, (s0, s0, s0), 1.01 * fit.constant)?;
            if !gb.passed() {
                passed = false;
                notes.push(format!("convolution bound: {} violations", gb.violations));
            }
            put(&mut report, "gamma_hat_bound", serde_json::to_value(&gb)?);
            match macro_residual(&tr, &grid, &ops.l) {
                Ok(m) => put(&mut report, "macro_residual", serde_json::to_value(&m)?),
                Err(e) => notes.push(format!("macro residual not evaluated: {e}")),
            }
            let ctx = NormContext::new(&grid, Some(&ops.dgram), sched.sigma)?;
            let soft = match (weight, sched.soft.as_ref()) {
                (Some(w), Some(s)) => Some(SoftLedger { weight: w, j: s.j }),
                _ => None,
            };
            let ledger = energy_ledger(&tr, &ctx, &sched, soft)?;
            if self.wants(OutputFormat::Csv) {
                let mut rows = Vec::new();
                let ids: Vec<String> = ledger.iter().map(|e| e.id.clone()).collect();
                for e in &ledger {
                    let rhs: f64 = e.rhs.values().sum();
                    rows.push(vec![e.lhs, rhs, e.c_star]);
                }
                write_labelled_csv(&self.dir.join("ledger.csv"), &["id", "lhs", "rhs", "c_star"], &ids, &rows)?;
            }
            put(&mut report, "ledger", serde_json::to_value(&ledger)?);
        }
        put(&mut report, "passed", serde_json::Value::Bool(passed));
        io::write_json(&self.dir.join("verify.json"), &report)?;
        Ok(StageOutput { notes, passed })
    }

    fn fit_decay(&mut self) -> Result<StageOutput> {
        let (header, rows) = io::read_csv(&self.need("decay.csv", Stage::Measure)?)?;
        if header.get(1).map(String::as_str) != Some("l1k_l2v") {
            return Err(Error::Format("decay.csv has an unexpected layout".into()));
        }
        let series: Vec<(f64, f64)> = rows.iter().map(|r| (r[0], r[1])).collect();
        let fit = fit_decay_rate(&series, self.cfg.run.fit_window)?;
        let p = self.cfg.schedule.p;
        let lp = self.chi().lp_limit();
        let pe = if lp.is_finite() { lp.min(p) } else { p };
        let expected = -1.5 * (1.0 - if pe.is_infinite() { 0.0 } else { 1.0 / pe });
        io::write_json(
            &self.dir.join("fit.json"),
            &serde_json::json!({
                "slope": fit.slope,
                "width": fit.width,
                "samples": fit.samples,
                "window": [self.cfg.run.fit_window.0, self.cfg.run.fit_window.1],
                "p": if pe.is_finite() { serde_json::json!(pe) } else { serde_json::json!("inf") },
                "expected_slope": expected,
            }),
        )?;
        Ok(StageOutput::ok(vec![format!("slope {:.4} +- {:.4} (expected {expected:.4})", fit.slope, fit.width)]))
    }
}

fn write_labelled_csv(path: &Path, header: &[&str], labels: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (l, r) in labels.iter().zip(rows) {
        let mut rec = vec![l.clone()];
        rec.extend(r.iter().map(|x| format!("{x:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(dir: &Path, extra: &str) -> ExperimentConfig {
        let text = format!(
            "[kernel]\nn_theta = 2\nn_phi = 4\n[grid]\npoints_per_axis = 6\n[kgrid]\nkmax = 6.0\nlevels = 4\norder = 4\n\
             [run]\nt_end = 4.0\nenvelope_dt = 0.5\nfit_window = [1.0, 4.0]\ntrilinear_samples = 2\ninterpolation_samples = 200\n\
             {extra}\n[outputs]\ndir = \"{}\"\n",
            dir.display()
        );
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn radial_pipeline_end_to_end_and_cache() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(tmp.path(), "");
        let opts = PipelineOptions::default();
        let out = run_pipeline(&cfg, &Stage::ALL, &opts).unwrap();
        assert!(out.error.is_none(), "{:?}", out.error);
        for f in ["envelope.csv", "decay.csv", "fit.json", "verify.json", "manifest.json"] {
            assert!(out.run_dir.join(f).exists(), "{f}");
        }
        let files: Vec<&str> = out.manifest.files.iter().map(|f| f.path.as_str()).collect();
        assert!(files.contains(&"decay.csv") && files.iter().any(|f| f.ends_with("-dgram.bin")));
        let decay = io::sha256_file(&out.run_dir.join("decay.csv")).unwrap();

        let again = run_pipeline(&cfg, &[Stage::Assemble], &opts).unwrap();
        let rec = again.manifest.stages.iter().find(|r| r.stage == Stage::Assemble).unwrap();
        assert!(rec.notes[0].starts_with("cache hit"), "{:?}", rec.notes);
        run_pipeline(&cfg, &[Stage::Simulate, Stage::Measure], &opts).unwrap();
        assert_eq!(io::sha256_file(&out.run_dir.join("decay.csv")).unwrap(), decay);
    }

    #[test]
    fn missing_input_names_producer() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(tmp.path(), "");
        let out = run_pipeline(&cfg, &[Stage::Verify], &PipelineOptions::default()).unwrap();
        let e = out.error.unwrap().to_string();
        assert!(e.contains("`assemble` stage"), "{e}");
        assert_eq!(out.manifest.status(Stage::Verify), Some(&StageStatus::Failed));
    }

    #[test]
    fn failure_skips_dependents() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = small(tmp.path(), "");
        let out = run_pipeline(&cfg, &[Stage::Measure, Stage::FitDecay], &PipelineOptions::default()).unwrap();
        assert_eq!(out.manifest.status(Stage::Measure), Some(&StageStatus::Failed));
        assert_eq!(out.manifest.status(Stage::FitDecay), Some(&StageStatus::Skipped));
    }
}
