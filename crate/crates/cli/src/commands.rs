use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;

use rqnls_core::diagnostics::{csv_float, scattering_cauchy_defect, write_csv, DiagnosticsConfig, DiagnosticsRecord, Recorder};
use rqnls_core::dynamics::{
    apply_symmetry, approximation_experiment, evolve, free_evolve, ApproxConfig, CylinderField, CylinderIntegrator,
    CylinderRecord, EvolveOptions, Integrator, Outcome, SimState, SymmetryElement, Trajectory,
};
use rqnls_core::nonlinearity::{Nonlinearity, NonlinearityMethod};
use rqnls_core::random::{normalized, random_field, RandomFieldSpec};
use rqnls_core::resonance::enumerate_resonances;
use rqnls_core::verify::{mutation_harness, run_suite, suite, SuiteLevel, Status};
use rqnls_core::{Dim, Error, Grid1D, ModeIndex, ModeLayout, NormSpec, SpectralField};

use crate::checkpoint::{load_checkpoint, Snapshot};
use crate::config::{parse_config, InitialKind, MethodChoice, RunConfig, System};
use crate::output::{cylinder_csv, Metadata, OutputDir, ABORT_CHECKPOINT, CYLINDER_COLUMNS, FINAL_CHECKPOINT};
use crate::{ApproxArgs, BenchArgs, Failure, Format, ResonancesArgs, ScatterArgs, SimulateArgs, SystemArg, VerifyArgs};

fn core(e: Error) -> Failure {
    match e {
        Error::NonFinite { .. } => Failure::Abort(e.to_string()),
        _ => Failure::Usage(e.to_string()),
    }
}

fn load(path: &Path) -> Result<(RunConfig, String), Failure> {
    let cfg = parse_config(path)?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok((cfg, text))
}

fn out_dir(flag: Option<&PathBuf>, cfg: &RunConfig) -> Result<OutputDir, Failure> {
    match flag.or(cfg.output.as_ref()) {
        Some(p) => OutputDir::create(p),
        None => Err(Failure::Usage("no output directory: pass --out or set `output`".into())),
    }
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn method(cfg: &RunConfig) -> NonlinearityMethod {
    match cfg.method {
        MethodChoice::Direct => NonlinearityMethod::DirectEnumeration,
        MethodChoice::Fft => NonlinearityMethod::FftLift,
        MethodChoice::Auto => NonlinearityMethod::auto(cfg.dim(), cfg.cutoff),
    }
}

fn method_name(m: NonlinearityMethod) -> &'static str {
    match m {
        NonlinearityMethod::DirectEnumeration => "direct",
        NonlinearityMethod::FftLift => "fft",
    }
}

fn steps(t: f64, dt: f64) -> i64 {
    (t / dt).round() as i64
}

/// Mode-resolved initial data on `[-L, L)`: the configured profile on the
/// box `L / lambda`, moved by the configured symmetry, then normalized.
pub fn initial_modes(cfg: &RunConfig, base: &Path) -> Result<SpectralField, Failure> {
    let dim = cfg.dim();
    let grid0 = Grid1D::new(cfg.half_width / cfg.symmetry.lambda, cfg.nx).map_err(core)?;
    let s = &cfg.initial;
    let u = match s.kind {
        InitialKind::Random => {
            let spec = RandomFieldSpec {
                amplitude: 1.0,
                width: s.width,
                center_spread: s.center_spread,
                max_wavenumber: s.max_wavenumber,
            };
            random_field(&grid0, dim, cfg.cutoff, &spec, cfg.seed).map_err(core)?
        }
        InitialKind::Gaussian | InitialKind::PlaneWave => {
            SpectralField::from_fn(&grid0, dim, cfg.cutoff, |j, x| s.profile(j, x)).map_err(core)?
        }
        InitialKind::File => {
            let rel = s.path.as_ref().expect("validated");
            let path = base.join(rel);
            let snap = load_checkpoint(&path)
                .map_err(|e| Failure::Usage(format!("initial.path {}: {e}", path.display())))?;
            let Snapshot::Resonant(st) = snap else {
                return Err(Failure::Usage("initial.path: expected a resonant checkpoint".into()));
            };
            if st.field.dim() != dim || st.field.cutoff() != cfg.cutoff || st.field.nx() != cfg.nx {
                return Err(Failure::Usage(format!(
                    "initial.path: checkpoint has dim {}, J = {}, Nx = {}",
                    st.field.dim().rank(),
                    st.field.cutoff(),
                    st.field.nx()
                )));
            }
            let layout = ModeLayout::new(dim, cfg.cutoff).map_err(core)?;
            SpectralField::from_values(&grid0, layout, st.field.into_values()).map_err(core)?
        }
    };
    let g = cfg.symmetry_element();
    let u = if g == SymmetryElement::IDENTITY {
        u
    } else {
        apply_symmetry(&u, &g).map_err(core)?
    };
    Ok(match s.norm {
        Some(n) => normalized(&u, NormSpec::l2(1.0), n),
        None => u,
    })
}

/// The state a fresh run of `cfg` starts from.
pub fn initial_snapshot(cfg: &RunConfig, base: &Path) -> Result<Snapshot, Failure> {
    let u = initial_modes(cfg, base)?;
    Ok(match cfg.system {
        System::Cylinder => Snapshot::Cylinder {
            field: CylinderField::from_modes(&u, cfg.ny.expect("validated")).map_err(core)?,
            cutoff: cfg.cutoff,
            step: 0,
            dt: cfg.dt,
        },
        _ => Snapshot::Resonant(SimState::new(u, cfg.dt).map_err(core)?),
    })
}

fn resume_snapshot(cfg: &RunConfig, path: &Path) -> Result<Snapshot, Failure> {
    let snap = load_checkpoint(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let h = snap.header();
    let mut bad = Vec::new();
    if h.system != cfg.system {
        bad.push(format!("system {} (config {})", h.system.name(), cfg.system.name()));
    }
    if h.cutoff != cfg.cutoff {
        bad.push(format!("J = {} (config {})", h.cutoff, cfg.cutoff));
    }
    if h.nx != cfg.nx || h.ny != cfg.ny {
        bad.push(format!("Nx = {}, Ny = {:?} (config {}, {:?})", h.nx, h.ny, cfg.nx, cfg.ny));
    }
    if h.half_width.to_bits() != cfg.half_width.to_bits() {
        bad.push(format!("L = {} (config {})", h.half_width, cfg.half_width));
    }
    if h.dt.to_bits() != cfg.dt.to_bits() {
        bad.push(format!("dt = {} (config {})", h.dt, cfg.dt));
    }
    if h.step > steps(cfg.duration, cfg.dt) {
        bad.push(format!("t = {} lies beyond T = {}", h.t, cfg.duration));
    }
    if !bad.is_empty() {
        return Err(Failure::Usage(format!(
            "checkpoint {} does not match the configuration: {}",
            path.display(),
            bad.join("; ")
        )));
    }
    Ok(snap)
}

pub struct ResonantRun {
    pub trajectory: Trajectory,
    pub method: NonlinearityMethod,
    pub beta: f64,
}

/// Integrates `state` up to the configured `T`, recording at the cadence.
pub fn run_resonant(cfg: &RunConfig, state: SimState, observe: impl FnMut(&SimState)) -> Result<ResonantRun, Failure> {
    let m = method(cfg);
    let integ = Integrator::new(&state.field, cfg.dt, m).map_err(core)?;
    let beta = cfg.beta();
    let mut rec = Recorder::new(
        DiagnosticsConfig {
            beta,
            brackets: cfg.diagnostics.brackets,
        },
        &state.field,
    )
    .map_err(core)?;
    let remaining = steps(cfg.duration, cfg.dt) - state.step;
    let opts = EvolveOptions {
        duration: remaining as f64 * cfg.dt,
        cadence: cfg.cadence(),
        contamination_threshold: cfg.diagnostics.contamination_threshold,
        abort_on_contamination: cfg.diagnostics.abort_on_contamination,
    };
    let trajectory = evolve(state, &integ, &opts, &mut rec, observe).map_err(core)?;
    Ok(ResonantRun {
        trajectory,
        method: m,
        beta,
    })
}

fn outcome_text(o: &Outcome) -> Option<String> {
    match o {
        Outcome::Completed => None,
        Outcome::NonFinite(e) => Some(format!("run aborted: {e}")),
        Outcome::Contaminated { step, fraction } => Some(format!(
            "run aborted at step {step}: mass fraction {fraction:.3e} near the box edge"
        )),
    }
}

/// Writes diagnostics, metadata and the last state; an aborted run leaves
/// `abort.ckpt` and fails with its path.
fn finish(
    out: &OutputDir,
    mut meta: Metadata,
    csv: &str,
    snap: &Snapshot,
    aborted: Option<String>,
) -> Result<(), Failure> {
    out.write("diagnostics.csv", csv)?;
    let name = if aborted.is_some() { ABORT_CHECKPOINT } else { FINAL_CHECKPOINT };
    meta.checkpoint = name.into();
    if let Some(why) = &aborted {
        meta.outcome = why.clone();
    }
    let ckpt = out.checkpoint(name, snap)?;
    out.metadata(&meta)?;
    match aborted {
        None => Ok(()),
        Some(why) => {
            println!("abort record: {}", ckpt.display());
            Err(Failure::Abort(format!("{why}; abort record written to {}", ckpt.display())))
        }
    }
}

fn finish_resonant(out: &OutputDir, mut meta: Metadata, run: ResonantRun) -> Result<(), Failure> {
    let t = run.trajectory;
    meta.method = method_name(run.method).into();
    meta.beta = run.beta;
    meta.warnings = t.warnings.clone();
    meta.columns = DiagnosticsRecord::COLUMNS.iter().map(|s| s.to_string()).collect();
    let aborted = outcome_text(&t.outcome);
    finish(out, meta, &write_csv(&t.records), &Snapshot::Resonant(t.final_state), aborted)
}

fn run_cylinder(cfg: &RunConfig, out: &OutputDir, mut meta: Metadata, field: CylinderField, step0: i64) -> Result<(), Failure> {
    let integ = CylinderIntegrator::new(&field, cfg.dt).map_err(core)?;
    let remaining = steps(cfg.duration, cfg.dt) - step0;
    let every = steps(cfg.cadence(), cfg.dt).max(1);
    let mut u = field;
    let mut step = step0;
    let mut records = vec![CylinderRecord::of(&u, step, step as f64 * cfg.dt)];
    let mut aborted = None;
    for k in 1..=remaining {
        let mut next = u.clone();
        if let Err(e) = integ.step(&mut next, step + 1) {
            aborted = Some(format!("run aborted: {e}"));
            break;
        }
        u = next;
        step += 1;
        if k % every == 0 || k == remaining {
            records.push(CylinderRecord::of(&u, step, step as f64 * cfg.dt));
        }
    }
    meta.method = "strang-exact-substeps".into();
    meta.columns = CYLINDER_COLUMNS.iter().map(|s| s.to_string()).collect();
    let snap = Snapshot::Cylinder {
        field: u,
        cutoff: cfg.cutoff,
        step,
        dt: cfg.dt,
    };
    finish(out, meta, &cylinder_csv(&records), &snap, aborted)
}

pub(crate) fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let (cfg, text) = load(&a.config)?;
    if let Some(s) = a.system {
        let want = match s {
            SystemArg::Resonant1d => System::Resonant1d,
            SystemArg::Resonant2d => System::Resonant2d,
            SystemArg::Cylinder => System::Cylinder,
        };
        if want != cfg.system {
            return Err(Failure::Usage(format!(
                "--system {} disagrees with system = {} in {}",
                want.name(),
                cfg.system.name(),
                a.config.display()
            )));
        }
    }
    let snap = match &a.resume {
        Some(p) => resume_snapshot(&cfg, p)?,
        None => initial_snapshot(&cfg, &base_dir(&a.config))?,
    };
    let out = out_dir(a.out.as_ref(), &cfg)?;
    out.write("config.toml", &text)?;
    let mut meta = Metadata::new("simulate", cfg.system.name(), &text, cfg.seed);
    meta.resumed_from = a.resume.as_ref().map(|p| p.display().to_string());
    match snap {
        Snapshot::Resonant(state) => {
            let run = run_resonant(&cfg, state, |_| {})?;
            finish_resonant(&out, meta, run)
        }
        Snapshot::Cylinder { field, step, .. } => run_cylinder(&cfg, &out, meta, field, step),
    }
}

pub(crate) fn scatter(a: &ScatterArgs) -> Result<(), Failure> {
    let (cfg, text) = load(&a.config)?;
    if cfg.system == System::Cylinder {
        return Err(Failure::Usage("experiment scatter needs a resonant system".into()));
    }
    let cadence = cfg.cadence();
    let marks: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|d| cfg.duration / d).collect();
    if cfg.duration <= 0.0 || marks.iter().any(|m| {
        let r = m / cadence;
        (r - r.round()).abs() > 1e-9 * r.max(1.0)
    }) {
        return Err(Failure::Usage(format!(
            "cadence: {cadence} must divide T / 8 = {}",
            marks[0]
        )));
    }
    let Snapshot::Resonant(state) = initial_snapshot(&cfg, &base_dir(&a.config))? else {
        unreachable!("resonant system")
    };
    let out = out_dir(a.out.as_ref(), &cfg)?;
    out.write("config.toml", &text)?;
    let half = 0.5 * cfg.dt;
    let mut snaps: Vec<(f64, SpectralField)> = Vec::new();
    let run = run_resonant(&cfg, state, |s| {
        let t = s.time();
        if marks.iter().any(|m| (m - t).abs() < half) {
            snaps.push((t, s.field.clone()));
        }
    })?;
    let records = &run.trajectory.records;
    let total = records.last().map(|r| r.l6_hbeta.powi(6)).unwrap_or(0.0);
    let mut table = String::from("t,cauchy_defect,l6_hbeta,tail_share\n");
    for (k, (t, u)) in snaps.iter().enumerate() {
        let defect = match k {
            0 => String::new(),
            _ => {
                let (t0, u0) = &snaps[k - 1];
                csv_float(scattering_cauchy_defect(u0, *t0, u, *t).map_err(core)?)
            }
        };
        let l6 = records
            .iter()
            .find(|r| (r.t - t).abs() < half)
            .map(|r| r.l6_hbeta)
            .unwrap_or(f64::NAN);
        let share = if total > 0.0 { (total - l6.powi(6)) / total } else { 0.0 };
        table.push_str(&format!("{},{defect},{},{}\n", csv_float(*t), csv_float(l6), csv_float(share)));
    }
    out.write("scatter.csv", &table)?;
    let meta = Metadata::new("experiment scatter", cfg.system.name(), &text, cfg.seed)
        .with("marks", marks.clone())
        .with("table", "scatter.csv");
    finish_resonant(&out, meta, run)
}

pub(crate) fn approx(a: &ApproxArgs) -> Result<(), Failure> {
    let (cfg, text) = load(&a.config)?;
    if cfg.system != System::Cylinder {
        return Err(Failure::Usage("experiment approx needs system = cylinder (Ny sets the y-grid)".into()));
    }
    if !matches!(cfg.initial.kind, InitialKind::Gaussian | InitialKind::PlaneWave) {
        return Err(Failure::Usage(
            "initial.kind: experiment approx needs a closed-form profile (gaussian or plane-wave)".into(),
        ));
    }
    let lambdas = a.lambda.clone().unwrap_or_else(|| cfg.symmetry.lambdas.clone());
    let bad: Vec<String> = lambdas
        .iter()
        .filter_map(|&l| SymmetryElement::check_scale(l).err().map(|e| format!("--lambda: {e}")))
        .collect();
    if lambdas.is_empty() || !bad.is_empty() {
        return Err(Failure::Usage(if bad.is_empty() { "--lambda: empty list".into() } else { bad.join("; ") }));
    }
    let acfg = ApproxConfig {
        lambdas: lambdas.clone(),
        theta: cfg.symmetry.theta,
        xi0: cfg.symmetry.xi0,
        t_n: cfg.symmetry.t_n,
        x_n: cfg.symmetry.x0,
        half_width: cfg.half_width,
        nx: cfg.nx,
        ny: cfg.ny.expect("validated"),
        cutoff: cfg.cutoff,
        dt_profile: cfg.dt,
        window: cfg.duration,
        sample_every: steps(cfg.cadence(), cfg.dt).max(1) as usize,
    };
    let phi = |j: ModeIndex, x: f64| -> Complex64 { cfg.initial.profile(j, x) };
    let report = approximation_experiment(&phi, &acfg).map_err(core)?;
    let out = out_dir(a.out.as_ref(), &cfg)?;
    out.write("config.toml", &text)?;
    out.write("approx.csv", &report.csv())?;

    let widest = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let grid = Grid1D::new(cfg.half_width / widest, cfg.nx).map_err(core)?;
    let profile = SpectralField::from_fn(&grid, Dim::One, cfg.cutoff, phi).map_err(core)?;
    let v0 = free_evolve(&profile, cfg.symmetry.t_n);
    let run = run_resonant(&cfg, SimState::new(v0, cfg.dt).map_err(core)?, |_| {})?;
    let errs: Vec<f64> = report.rows.iter().map(|r| r.sup_error).collect();
    let meta = Metadata::new("experiment approx", "resonant1d", &text, cfg.seed)
        .with("table", "approx.csv")
        .with("lambdas", lambdas)
        .with("sup_errors", errs.clone())
        .with("monotone", errs.windows(2).all(|e| e[1] < e[0]))
        .with("t_n_surrogate", report.t_n_surrogate.clone())
        .with("cylinder_dt", "dt * lambda^2")
        .with("profile_half_width", grid.half_width());
    finish_resonant(&out, meta, run)
}

pub(crate) fn verify(a: &VerifyArgs) -> Result<(), Failure> {
    let level: SuiteLevel = a.suite.parse().map_err(core)?;
    let specs = suite(level);
    let report = run_suite(&specs, a.seed).map_err(core)?;
    for r in &report.reports {
        let tag = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Reported => "INFO",
        };
        println!("{tag} {:<26} {}", r.name, r.detail);
    }
    let mut problems: Vec<String> = report.failures().iter().map(|n| format!("check {n} failed")).collect();
    let mut json = serde_json::to_value(&report).expect("report serializes");
    json["suite"] = a.suite.clone().into();
    if a.mutations {
        let muts = mutation_harness(&specs, a.seed).map_err(core)?;
        for m in &muts {
            if m.detected() {
                println!("CAUGHT {:?} by {}", m.mutation, m.failed.join(", "));
            } else {
                println!("MISSED {:?}", m.mutation);
                problems.push(format!("mutation {:?} went undetected", m.mutation));
            }
        }
        json["mutations"] = serde_json::to_value(&muts).expect("mutations serialize");
    }
    if let Some(p) = &a.report {
        let text = serde_json::to_string_pretty(&json).expect("report serializes") + "\n";
        std::fs::write(p, text).map_err(|e| Failure::Abort(format!("cannot write {}: {e}", p.display())))?;
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Checks(problems.join("; ")))
    }
}

pub(crate) fn resonances(a: &ResonancesArgs) -> Result<(), Failure> {
    let dim = if a.dim == "2" { Dim::Two } else { Dim::One };
    if a.j.len() != dim.rank() {
        return Err(Failure::Usage(format!("--j needs {} coordinate(s) for dim {}", dim.rank(), dim.rank())));
    }
    let j = ModeIndex::from_coords(&a.j).map_err(core)?;
    let tuples = enumerate_resonances(dim, j, a.cutoff).map_err(core)?;
    let coords = |m: &ModeIndex| m.0[..dim.rank()].to_vec();
    let mut text = String::new();
    match a.format {
        Format::Csv => {
            let names: Vec<String> = (1..=5)
                .flat_map(|k| match dim {
                    Dim::One => vec![format!("j{k}")],
                    Dim::Two => vec![format!("j{k}x"), format!("j{k}y")],
                })
                .collect();
            text.push_str(&names.join(","));
            text.push('\n');
            for t in &tuples {
                let row: Vec<String> = t.0.iter().flat_map(coords).map(|c| c.to_string()).collect();
                text.push_str(&row.join(","));
                text.push('\n');
            }
        }
        Format::Json => {
            for t in &tuples {
                let row = match dim {
                    Dim::One => serde_json::to_string(&t.0.iter().map(|m| m.0[0]).collect::<Vec<_>>()),
                    Dim::Two => serde_json::to_string(&t.0.iter().map(coords).collect::<Vec<_>>()),
                }
                .expect("tuple serializes");
                text.push_str(&row);
                text.push('\n');
            }
        }
    }
    emit(&text)
}

fn emit(text: &str) -> Result<(), Failure> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        Err(e) => Err(Failure::Abort(format!("cannot write output: {e}"))),
    }
}

fn time_eval(nl: &Nonlinearity, u: &SpectralField, reps: usize) -> Result<f64, Error> {
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        std::hint::black_box(nl.eval(u)?);
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub(crate) fn bench(a: &BenchArgs) -> Result<(), Failure> {
    let dim = if a.dim == 2 { Dim::Two } else { Dim::One };
    let grid = Grid1D::new(20.0, a.nx).map_err(core)?;
    let mut text = String::from("J,t_direct,t_fft,crossover\n");
    for &j in &a.cutoffs {
        let u = random_field(&grid, dim, j, &RandomFieldSpec::default(), a.seed).map_err(core)?;
        let time = |m: NonlinearityMethod| {
            Nonlinearity::new(dim, j, m).and_then(|nl| time_eval(&nl, &u, a.reps)).ok()
        };
        let direct = time(NonlinearityMethod::DirectEnumeration);
        let fft = time(NonlinearityMethod::FftLift);
        let cell = |t: Option<f64>| t.map(|v| format!("{v:.6e}")).unwrap_or_default();
        let crossover = matches!((direct, fft), (Some(d), Some(f)) if f < d);
        text.push_str(&format!("{j},{},{},{crossover}\n", cell(direct), cell(fft)));
    }
    match &a.out {
        Some(p) => std::fs::write(p, &text).map_err(|e| Failure::Abort(format!("cannot write {}: {e}", p.display()))),
        None => emit(&text),
    }
}
