//! Acceptance suite: one PASS/FAIL line per check.
//!
//! Run with `cargo test -p boltzlab --test acceptance`; extra arguments select
//! checks by name substring, e.g. `-- decay coercivity`. Assembled operators are
//! kept in $BOLTZLAB_CACHE when it is set.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use boltzlab::coercivity::{coercivity_spectrum, CoercivityReport};
use boltzlab::collision::{Assembled, AssemblyMode, CollisionModel};
use boltzlab::envelope::{radial_decay_envelope, radial_exact_states, radial_rule, RadialEnvelope};
use boltzlab::grid::{maxwellian_field, norm2, VelocityGrid};
use boltzlab::norms::{fit_decay_rate, functional_suite, l1k_decay_integral, n_functional, NormContext};
use boltzlab::operator::{cache_dir, cache_key, OperatorMatrix};
use boltzlab::schedule::{InterpolationSchedule, SoftOverrides};
use boltzlab::spectral::{GammaHat, GammaHatOptions, Integrator, KGrid};
use boltzlab::sphere::KernelSpec;
use boltzlab::trajectory::{simulate, InitialData, KProfile, SimConfig, Trajectory, VProfile};
use boltzlab::verify::{
    check_gamma_hat_bound, check_interpolation, check_trilinear, energy_ledger, macro_residual, random_smooth_field,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXTENT: f64 = 6.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Hard-potential operators, memoised per (N_v, angular rule) and cached on disk when asked.
#[derive(Default)]
struct Operators {
    memo: BTreeMap<(usize, usize, usize), (CollisionModel, Assembled)>,
}

impl Operators {
    fn get(&mut self, n: usize, n_theta: usize, n_phi: usize) -> &(CollisionModel, Assembled) {
        self.memo.entry((n, n_theta, n_phi)).or_insert_with(|| {
            let grid = VelocityGrid::new(EXTENT, n).unwrap();
            let model = CollisionModel::new(grid, KernelSpec::hard(), n_theta, n_phi).unwrap();
            let ops = load_or_assemble(&model);
            (model, ops)
        })
    }
}

fn load_or_assemble(model: &CollisionModel) -> Assembled {
    let prov = model.provenance();
    let dir = cache_dir(None);
    let paths: Option<Vec<_>> = dir.as_ref().map(|d| {
        ["l", "l1", "l2", "dgram"].iter().map(|t| d.join(format!("{}-{t}.bin", cache_key(&prov, t)))).collect()
    });
    if let Some(p) = &paths {
        if let Ok(ms) = p.iter().map(|x| OperatorMatrix::load(x)).collect::<Result<Vec<_>, _>>() {
            let mut it = ms.into_iter();
            let (l, l1, l2, dgram) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
            return Assembled { l, l1, l2, dgram, symmetry_defect: 0.0, split_defect: 0.0 };
        }
    }
    let ops = model.assemble(AssemblyMode::Symmetric).unwrap();
    if let Some(p) = &paths {
        for (m, x) in [&ops.l, &ops.l1, &ops.l2, &ops.dgram].into_iter().zip(p) {
            let mut m = m.clone();
            m.provenance = Some(prov.clone());
            m.save(x).unwrap();
        }
    }
    ops
}

// Resolution of the linear checks and of the nonlinear lattice run.
const LINEAR_RULE: (usize, usize) = (6, 12);
const LATTICE_N: usize = 8;
const LATTICE_RULE: (usize, usize) = (2, 4);

fn decay_exponent(ops: &mut Operators) -> Outcome {
    let (model, a) = ops.get(12, LINEAR_RULE.0, LINEAR_RULE.1);
    let grid = model.grid();
    let g0 = VProfile::Standard.field(grid).unwrap();
    let env: RadialEnvelope = radial_decay_envelope(grid, &a.l, &g0, &radial_rule(3.0, 12, 8), 0.5, 200).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    // chi = |k|^{-a} on |k| <= 3: a = 0 realises p = inf; a = 1.49 is in L^p only for p < 3/1.49
    for (label, p, chi) in [
        ("p=inf", f64::INFINITY, KProfile::PowerBump { a: 0.0, cutoff: 3.0 }),
        ("p=2", 2.0, KProfile::PowerBump { a: 1.49, cutoff: 3.0 }),
    ] {
        let series = l1k_decay_integral(&env, &|k| chi.eval(k), 1e-2).unwrap();
        let fit = fit_decay_rate(&series, (25.0, 100.0)).unwrap();
        let expected = -1.5 * (1.0 - 1.0 / p);
        let ok = (fit.slope - expected).abs() <= 0.15;
        pass &= ok;
        parts.push(format!("{label}: slope {:.3} (expected {expected:.3} +- 0.15)", fit.slope));
    }
    outcome(pass, parts.join("; "))
}

fn coercivity(ops: &mut Operators) -> Outcome {
    let mut reports: Vec<(usize, CoercivityReport)> = Vec::new();
    for n in [10, 12, 14] {
        let (model, a) = ops.get(n, LINEAR_RULE.0, LINEAR_RULE.1);
        reports.push((n, coercivity_spectrum(model.grid(), a).unwrap()));
    }
    let d: Vec<f64> = reports.iter().map(|r| r.1.delta0).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let spread = d.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max);
    let res: Vec<f64> = reports.iter().map(|r| r.1.kernel_residual).collect();
    let floor = 1e-10;
    let pass = d.iter().all(|&x| x > 0.0)
        && spread <= 0.2
        && res[1] <= 5e-3
        && res[2] <= res[1].max(floor)
        && res[1] <= res[0].max(floor);
    outcome(
        pass,
        format!(
            "delta0 {:.4}/{:.4}/{:.4} at N_v 10/12/14 (spread {:.1}% <= 20%); kernel residual {:.1e}/{:.1e}/{:.1e}",
            d[0],
            d[1],
            d[2],
            100.0 * spread,
            res[0],
            res[1],
            res[2]
        ),
    )
}

fn conservation(ops: &mut Operators) -> Outcome {
    // refinement floor for quantities that vanish up to roundoff
    let floor = 1e-10;
    let mut eq = Vec::new();
    let mut cons = Vec::new();
    for n in [12, 14] {
        let (model, _) = ops.get(n, LINEAR_RULE.0, LINEAR_RULE.1);
        let g = model.grid();
        let mu = maxwellian_field(g);
        let q = model.q_collision_direct(&mu, &mu);
        eq.push(g.norm_real(&q) / g.norm_real(&mu));
        let pert = random_smooth_field(g, &mut ChaCha8Rng::seed_from_u64(3));
        let scale = 0.2 / pert.iter().zip(g.sqrt_mu()).map(|(p, s)| (p / s).abs()).fold(0.0, f64::max);
        let f: Vec<f64> = mu.iter().zip(g.sqrt_mu()).zip(&pert).map(|((m, s), p)| m + scale * s * p).collect();
        let q = model.q_collision_direct(&f, &f);
        let ff = g.norm_real(&f).powi(2);
        let worst = [g.field(|_| 1.0), g.field(|v| v[0]), g.field(|v| v[1]), g.field(|v| v[2]), g.field(norm2)]
            .iter()
            .map(|phi| (q.iter().zip(phi).map(|(a, b)| a * b).sum::<f64>() * g.weight()).abs() / ff)
            .fold(0.0, f64::max);
        cons.push(worst);
    }
    let pass = eq[0] <= 5e-3 && cons[0] <= 1e-3 && eq[1] <= eq[0].max(floor) && cons[1] <= cons[0].max(floor);
    outcome(
        pass,
        format!(
            "||Q(mu,mu)||/||mu|| {:.1e} -> {:.1e}; max |(Q(F,F),phi)|/||F||^2 {:.1e} -> {:.1e} (N_v 12 -> 14)",
            eq[0], eq[1], cons[0], cons[1]
        ),
    )
}

fn macro_system(ops: &mut Operators) -> Outcome {
    let (model, a) = ops.get(12, LINEAR_RULE.0, LINEAR_RULE.1);
    let grid = model.grid();
    let g0 = VProfile::Standard.field(grid).unwrap();
    let kg = KGrid::radial(&[(0.25, 1.0), (0.5, 1.0), (1.0, 1.0)]);
    let mut runs = Vec::new();
    for (dt, steps) in [(0.04, 75), (0.02, 150)] {
        let states = radial_exact_states(grid, &a.l, &g0, &kg, dt, steps).unwrap();
        // skip the stiff transient, where centred differences do not resolve the fast micro modes
        let states: Vec<_> = states.into_iter().filter(|s| s.t >= 1.0 - 1e-9).collect();
        let tr = Trajectory::from_states(grid, &kg, dt, 1, states, Vec::new()).unwrap();
        runs.push(macro_residual(&tr, grid, &a.l).unwrap());
    }
    let (coarse, fine) = (&runs[0], &runs[1]);
    let mut pass = true;
    let mut parts = Vec::new();
    for (c, f) in coarse.equations.iter().zip(&fine.equations) {
        let ratio = c.rms / f.rms;
        // at or below 1e-3 of term scale, or shrinking like dt^2
        let ok = f.rms <= 1e-3 * f.scale || ratio >= 3.0;
        pass &= ok;
        parts.push(format!("{} {:.1e} (x{:.1})", f.name, f.rms / f.scale, ratio));
    }
    let transport = coarse.equations[0].rms / fine.equations[0].rms;
    pass &= transport >= 3.0;
    outcome(pass, format!("relative rms at dt 0.02 and halving gain: {}", parts.join(", ")))
}

fn lattice_model(ops: &mut Operators) -> &(CollisionModel, Assembled) {
    ops.get(LATTICE_N, LATTICE_RULE.0, LATTICE_RULE.1)
}

fn lattice_init(grid: &VelocityGrid, kg: &KGrid, amplitude: f64) -> boltzlab::spectral::SpectralState {
    InitialData::RandomPhase { chi: KProfile::Gaussian { width: 0.6 }, seed: 7 }.build(grid, kg, amplitude).unwrap()
}

fn inequality_suites(ops: &mut Operators) -> Outcome {
    let (model, a) = lattice_model(ops);
    let grid = model.grid();
    let fit = check_trilinear(model, &a.dgram, 32, 0, 1).unwrap();
    let kg = KGrid::lattice(2, 0.5).unwrap();
    let s = lattice_init(grid, &kg, 1e-2);
    let gh = GammaHat::new(model, &kg, GammaHatOptions { pair_cutoff: 0.0 }).unwrap();
    let bound = check_gamma_hat_bound(&gh, &kg, grid, &a.dgram, (&s, &s, &s), 1.01 * fit.constant).unwrap();
    let mut pass = bound.passed();
    let mut parts = vec![format!(
        "convolution bound at C = 1.01 x {:.4}: {} violations / {}",
        fit.constant, bound.violations, bound.samples
    )];
    let mut schedules = Vec::new();
    for p in [2.0, f64::INFINITY] {
        schedules.push((format!("hard p={p}"), InterpolationSchedule::new(p, 0.1).unwrap()));
    }
    for p in [2.0, 4.0] {
        let s = InterpolationSchedule::new(p, 0.1).unwrap().with_soft(1.0, &SoftOverrides::default()).unwrap();
        schedules.push((format!("soft p={p}"), s));
    }
    for (label, s) in &schedules {
        let chk = check_interpolation(s, &[0.1, 0.01], 10_000, 5).unwrap();
        let violations: usize = chk.reports.iter().map(|r| r.violations).sum();
        let samples: usize = chk.reports.iter().map(|r| r.samples).sum();
        // the two pointwise checks share one set of draws
        let pointwise: usize = chk.reports.iter().filter(|r| r.name.starts_with("pointwise")).map(|r| r.samples).sum();
        let min_split = chk.reports.iter().filter(|r| !r.name.starts_with("pointwise")).map(|r| r.samples).min();
        let enough = min_split.unwrap_or(0) >= 10_000 && (s.soft.is_none() || pointwise >= 10_000);
        let worst_identity = chk.identities.values().copied().fold(0.0, f64::max);
        pass &= chk.passed() && enough;
        parts.push(format!(
            "{label}: {violations} violations / {samples}, {} identities (max defect {worst_identity:.0e})",
            chk.identities.len()
        ));
    }
    outcome(pass, parts.join("; "))
}

const LEDGER_IDS: [&str; 4] = ["micro_apriori_l1k", "micro_apriori_lpk", "hard_weighted_lhs", "hard_lp_lhs"];

struct NonlinearRuns {
    /// (amplitude, T) -> ledger C* by id
    c_star: Vec<((f64, f64), BTreeMap<String, f64>)>,
    /// (amplitude, T, N(T))
    n_values: Vec<(f64, f64, f64)>,
    min_f: f64,
}

fn nonlinear_runs(ops: &mut Operators) -> NonlinearRuns {
    let (model, a) = lattice_model(ops);
    let grid = model.grid();
    let kg = KGrid::lattice(2, 0.5).unwrap();
    // p = 2 keeps the time weight (1+t)^sigma moderate on a 5^3 lattice
    let sched = InterpolationSchedule::new(2.0, 0.1).unwrap();
    let ctx = NormContext::new(grid, Some(&a.dgram), sched.sigma).unwrap();
    let cfg = SimConfig {
        integrator: Integrator::CrankNicolson,
        dt: Some(1.0),
        t_end: 20.0,
        stride: 1,
        nonlinear: true,
        pair_cutoff: 1e-10,
        positivity_samples: 64,
        ..Default::default()
    };
    let mut out = NonlinearRuns { c_star: Vec::new(), n_values: Vec::new(), min_f: f64::INFINITY };
    for amp in [1e-2, 5e-3] {
        let tr = simulate(Some(model), grid, &a.l, &kg, lattice_init(grid, &kg, amp), &cfg).unwrap();
        out.min_f = out.min_f.min(tr.min_positivity().unwrap());
        for t in [5.0, 10.0, 20.0] {
            let part = tr.truncated(t);
            let led = energy_ledger(&part, &ctx, &sched, None).unwrap();
            let m = led.into_iter().filter(|e| !e.degenerate).map(|e| (e.id, e.c_star)).collect();
            out.c_star.push(((amp, t), m));
            out.n_values.push((amp, t, n_functional(&part, &ctx).unwrap()));
        }
    }
    out
}

fn ledger_stability(runs: &NonlinearRuns) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for id in LEDGER_IDS {
        let vals: Vec<f64> = runs.c_star.iter().filter_map(|(_, m)| m.get(id).copied()).collect();
        if vals.len() != runs.c_star.len() {
            pass = false;
            parts.push(format!("{id}: missing"));
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let spread = vals.iter().map(|x| (x / mean - 1.0).abs()).fold(0.0, f64::max);
        let ok = mean.is_finite() && mean > 0.0 && spread <= 0.3;
        pass &= ok;
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(0.0, f64::max);
        parts.push(format!("{id} {lo:.2}..{hi:.2} ({:.0}%)", 100.0 * spread));
    }
    // N(T) per unit amplitude across T and amplitude
    let scaled: Vec<f64> = runs.n_values.iter().map(|(a, _, n)| n / a).collect();
    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().copied().fold(0.0, f64::max);
    let n_ok = lo > 0.0 && hi.is_finite() && hi / lo <= 1.3;
    pass &= n_ok;
    parts.push(format!("N(T)/amplitude {lo:.3}..{hi:.3}"));
    outcome(pass, format!("C* across T in {{5,10,20}} x amplitude {{1e-2,5e-3}}: {}", parts.join(", ")))
}

fn positivity(runs: &NonlinearRuns) -> Outcome {
    outcome(runs.min_f >= -1e-6, format!("min F = mu + sqrt(mu) f over sampled (x, v, t): {:.3e}", runs.min_f))
}

fn linear_homogeneity(ops: &mut Operators) -> Outcome {
    let (model, a) = lattice_model(ops);
    let grid = model.grid();
    let kg = KGrid::lattice(1, 0.5).unwrap();
    let sched = InterpolationSchedule::new(2.0, 0.1).unwrap();
    let ctx = NormContext::new(grid, Some(&a.dgram), sched.sigma).unwrap();
    let cfg = SimConfig { integrator: Integrator::CrankNicolson, dt: Some(0.5), t_end: 10.0, ..Default::default() };
    let run = |amp: f64| {
        let tr = simulate(None, grid, &a.l, &kg, lattice_init(grid, &kg, amp), &cfg).unwrap();
        let led = energy_ledger(&tr, &ctx, &sched, None).unwrap();
        let suite = functional_suite(&tr, &ctx, &sched, None).unwrap();
        (led, suite)
    };
    let (l1, s1) = run(1.0);
    let (l2, s2) = run(0.5);
    let mut worst_norm = 0.0f64;
    let mut worst_c = 0.0f64;
    for (x, y) in l1.iter().zip(&l2) {
        worst_norm = worst_norm.max((y.lhs / x.lhs - 0.5).abs() / 0.5);
        if !x.degenerate {
            worst_c = worst_c.max((y.c_star / x.c_star - 1.0).abs());
        }
    }
    for (name, v) in &s1.values {
        if *v > 0.0 {
            worst_norm = worst_norm.max((s2.values[name] / v - 0.5).abs() / 0.5);
        }
    }
    outcome(
        worst_norm <= 1e-6 && worst_c <= 1e-6,
        format!("{} ledger rows: max rel. deviation of halved norms {worst_norm:.1e}, of C* {worst_c:.1e}", l1.len()),
    )
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));
    let mut ops = Operators::default();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, ops: &mut Operators, f: &dyn Fn(&mut Operators) -> Outcome| {
        if !wanted(name) {
            return;
        }
        let t0 = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(|| f(ops)))
            .unwrap_or_else(|e| outcome(false, format!("panicked: {}", panic_message(&e))));
        println!("[{}] {name}: {} ({:.0}s)", if o.pass { "PASS" } else { "FAIL" }, o.detail, t0.elapsed().as_secs_f64());
        results.push((name, o));
    };
    run("decay_exponent", &mut ops, &decay_exponent);
    run("coercivity", &mut ops, &coercivity);
    run("conservation_equilibrium", &mut ops, &conservation);
    run("macro_system", &mut ops, &macro_system);
    run("inequality_suites", &mut ops, &inequality_suites);
    if wanted("ledger_stability") || wanted("positivity") {
        let t0 = Instant::now();
        match catch_unwind(AssertUnwindSafe(|| nonlinear_runs(&mut ops))) {
            Ok(r) => {
                let secs = t0.elapsed().as_secs_f64();
                run("ledger_stability", &mut ops, &|_| ledger_stability(&r));
                run("positivity", &mut ops, &|_| positivity(&r));
                println!("       (nonlinear runs: {secs:.0}s)");
            }
            Err(e) => {
                let msg = panic_message(&e);
                run("ledger_stability", &mut ops, &|_| outcome(false, format!("nonlinear run panicked: {msg}")));
                run("positivity", &mut ops, &|_| outcome(false, format!("nonlinear run panicked: {msg}")));
            }
        }
    }
    run("linear_homogeneity", &mut ops, &linear_homogeneity);
    let failed = results.iter().filter(|r| !r.1.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn panic_message(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
}
