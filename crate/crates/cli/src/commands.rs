use std::fmt::Write as _;
use std::io::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use secest::gains::{assemble_gains, design_all, DesignOptions, GainOutcome, GainSet};
use secest::io::{self, GainsFile, LoadedSystem};
use secest::sim::{self, InitCoordinates, SimConfig, SimulationTrace};
use secest::threat::{AttackScenario, AttackSignal};
use secest::Tolerances;

use crate::{DesignArgs, Preset, ReportArgs, SimulateArgs};

pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

const INPUT: u8 = 2;
const INFEASIBLE: u8 = 3;
const RUNTIME: u8 = 4;

fn fail(code: u8, error: impl Into<anyhow::Error>) -> CliError {
    CliError { code, error: error.into() }
}

fn lib(e: secest::Error) -> CliError {
    let code = match e {
        secest::Error::Infeasible { .. } => INFEASIBLE,
        secest::Error::Diverged { .. } => RUNTIME,
        _ => INPUT,
    };
    fail(code, anyhow!("[{}] {e}", e.kind()))
}

fn tolerances() -> CliResult<Tolerances> {
    let base = Tolerances::default();
    match std::env::var("SECEST_TOL") {
        Ok(s) => match s.trim().parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(base.with_zero(v)),
            _ => Err(fail(INPUT, anyhow!("SECEST_TOL must be a positive number, got {s:?}"))),
        },
        Err(_) => Ok(base),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display())).map_err(|e| fail(INPUT, e))
}

fn write(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(|e| fail(RUNTIME, e))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display())).map_err(|e| fail(RUNTIME, e))
}

/// Prints to stdout; a closed pipe is not an error.
fn print(text: &str) -> CliResult<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}").and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(fail(RUNTIME, anyhow!("cannot write to stdout: {e}"))),
        _ => Ok(()),
    }
}

fn emit(output: Option<&Path>, text: &str) -> CliResult<()> {
    match output {
        Some(p) => write(p, text.as_bytes()),
        None => print(text),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn load(path: &Path, tol: Tolerances) -> CliResult<LoadedSystem> {
    let text = read(path)?;
    io::load_system(&text, tol).map_err(|e| {
        let code = lib(e.clone()).code;
        fail(code, anyhow!("{}: [{}] {e}", path.display(), e.kind()))
    })
}

pub fn analyze(system: &Path, output: Option<&Path>) -> CliResult<()> {
    let sys = load(system, tolerances()?)?;
    emit(output, &to_json(&io::analyze(&sys.model)))
}

fn infeasible_listing(sys: &LoadedSystem, outcomes: &[GainOutcome]) -> Option<String> {
    let mut msg = String::new();
    for (dec, o) in sys.model.decompositions.iter().zip(outcomes) {
        if let GainOutcome::Infeasible { sigma_star, bound } = o {
            let _ = writeln!(msg, "  sensor {}: n_i = {}, sigma* = {sigma_star:.6} >= 1/(2 sqrt(n_i) + 1) = {bound:.6}", dec.sensor, dec.dim());
        }
    }
    (!msg.is_empty()).then_some(msg)
}

fn design_gains(sys: &LoadedSystem, gamma: Option<f64>, allow_infeasible: bool, seed: u64) -> CliResult<GainSet> {
    let opts = DesignOptions { seed, ..DesignOptions::default() };
    let outcomes = design_all(&sys.model, &opts);
    if !allow_infeasible {
        if let Some(list) = infeasible_listing(sys, &outcomes) {
            return Err(fail(INFEASIBLE, anyhow!("[Infeasible] gain design has no solution for:\n{}", list.trim_end())));
        }
    }
    if allow_infeasible && gamma.is_none() {
        return Err(fail(INPUT, anyhow!("--allow-infeasible requires --gamma")));
    }
    assemble_gains(&sys.model, &outcomes, gamma, allow_infeasible).map_err(lib)
}

pub fn design(args: DesignArgs) -> CliResult<()> {
    let sys = load(&args.system, tolerances()?)?;
    let gains = design_gains(&sys, args.gamma, args.allow_infeasible, args.seed)?;
    emit(args.output.as_deref(), &to_json(&GainsFile::from_gain_set(&gains)))
}

struct RunPlan {
    sys: LoadedSystem,
    gains: GainSet,
    scenario: AttackScenario,
    config: SimConfig,
}

fn plan(args: &SimulateArgs, tol: Tolerances) -> CliResult<RunPlan> {
    if args.repeats == 0 {
        return Err(fail(INPUT, anyhow!("--repeats must be at least 1")));
    }
    if let Some(g) = args.gamma {
        if !(g > 0.0 && g.is_finite()) {
            return Err(fail(INPUT, anyhow!("--gamma must be positive")));
        }
    }
    let (sys, gains, scenario, horizon, init_error) = match args.preset {
        Some(preset) => {
            let gamma = args.gamma.unwrap_or(0.5);
            let signal = match preset {
                Preset::Ieee14Random => AttackSignal::RandomUniform { lo: -10.0, hi: 10.0 },
                Preset::Ieee14Slope => AttackSignal::Slope { rate: 0.2 },
            };
            let exp = sim::ieee14_experiment(signal, gamma, 0, args.seed, tol).map_err(lib)?;
            let sys = LoadedSystem {
                model: exp.system.model,
                modal_mode: secest::model::ModalMode::Diagonalize,
                input: exp.config.input,
                x0: None,
            };
            let gains = match &args.gains {
                Some(path) => load_gains(path, &sys)?,
                None => exp.gains,
            };
            (sys, gains, exp.scenario, args.horizon.unwrap_or(2000), args.init_error.unwrap_or(gamma))
        }
        None => {
            let path = args.system.as_ref().ok_or_else(|| fail(INPUT, anyhow!("--system or --preset is required")))?;
            let sys = load(path, tol)?;
            let gains = match &args.gains {
                Some(path) => load_gains(path, &sys)?,
                None => design_gains(&sys, args.gamma, args.allow_infeasible, args.seed)?,
            };
            let scenario = match &args.scenario {
                Some(path) => io::parse_scenario(&read(path)?).map_err(|e| fail(INPUT, anyhow!("{}: [{}] {e}", path.display(), e.kind())))?,
                None => AttackScenario::none(),
            };
            (sys, gains, scenario, args.horizon.unwrap_or(1000), args.init_error.unwrap_or(0.0))
        }
    };
    if !(init_error >= 0.0 && init_error.is_finite()) {
        return Err(fail(INPUT, anyhow!("--init-error must be nonnegative")));
    }
    scenario.validate(sys.model.m()).map_err(lib)?;
    let mut config = SimConfig::new(sys.model.n(), horizon, args.seed);
    if let Some(x0) = &sys.x0 {
        config.x0 = x0.clone();
    }
    config.input = sys.input.clone();
    config.init_perturbation = init_error;
    if args.init_original {
        config.init_coordinates = InitCoordinates::Original;
    }
    config.luenberger = !args.no_luenberger;
    Ok(RunPlan { sys, gains, scenario, config })
}

fn load_gains(path: &Path, sys: &LoadedSystem) -> CliResult<GainSet> {
    let text = read(path)?;
    let wrap = |e: secest::Error| fail(INPUT, anyhow!("{}: [{}] {e}", path.display(), e.kind()));
    io::parse_gains(&text).map_err(wrap)?.into_gain_set(&sys.model).map_err(wrap)
}

fn trace_bytes(trace: &SimulationTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    sim::write_trace_csv(trace, &mut buf).expect("writing to memory succeeds");
    buf
}

pub fn simulate(args: SimulateArgs) -> CliResult<()> {
    let tol = tolerances()?;
    let plan = plan(&args, tol)?;
    let names = |r: u32| -> (PathBuf, PathBuf) {
        if args.repeats == 1 {
            (args.out.join("trace.csv"), args.out.join("metrics.json"))
        } else {
            (args.out.join(format!("trace_{r}.csv")), args.out.join(format!("metrics_{r}.json")))
        }
    };

    let runs: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..args.repeats)
            .map(|r| {
                let plan = &plan;
                s.spawn(move || {
                    let mut config = plan.config.clone();
                    config.seed = plan.config.seed.wrapping_add(r as u64);
                    let mut scenario = plan.scenario.clone();
                    scenario.seed = scenario.seed.wrapping_add(r as u64);
                    sim::run(&plan.sys.model, &plan.gains, &scenario, &config)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    let mut traces = Vec::with_capacity(runs.len());
    for run in runs {
        traces.push(run.map_err(lib)?);
    }
    let mut aborted = None;
    let mut summary = Vec::new();
    for (r, trace) in traces.iter().enumerate() {
        let (trace_path, metrics_path) = names(r as u32);
        let metrics = sim::metrics(trace);
        write(&trace_path, &trace_bytes(trace))?;
        write(&metrics_path, to_json(&metrics).as_bytes())?;
        summary.push(serde_json::json!({
            "seed": args.seed.wrapping_add(r as u64),
            "trace": trace_path,
            "max_err_secure": metrics.max_err_secure,
            "max_err_luenberger": metrics.max_err_luenberger,
            "luenberger_diverged_at": metrics.luenberger_diverged_at,
            "benign_false_triggers": metrics.benign_false_triggers,
        }));
        if let (None, Some(e)) = (&aborted, &trace.abort) {
            aborted = Some(e.clone());
        }
    }
    print(&to_json(&summary))?;
    match aborted {
        Some(e) => Err(fail(RUNTIME, anyhow!("[{}] {e}; partial trace written", e.kind()))),
        None => Ok(()),
    }
}

fn series(rows: impl Iterator<Item = (u64, f64)>) -> Vec<u8> {
    let mut s = String::from("k,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s.into_bytes()
}

pub fn report(args: ReportArgs) -> CliResult<()> {
    let text = read(&args.trace)?;
    let trace = sim::parse_trace_csv(&text).map_err(|e| fail(INPUT, anyhow!("{}: [{}] {e}", args.trace.display(), e.kind())))?;
    if trace.rows.is_empty() {
        return Err(fail(INPUT, anyhow!("{}: trace has no rows", args.trace.display())));
    }
    if args.bus == 0 || args.bus > sim::BUSES || trace.n != 2 * sim::BUSES {
        return Err(fail(INPUT, anyhow!("--bus needs a 14-bus trace (n = 28) and a bus in 1..=14; trace has n = {}", trace.n)));
    }
    let sensor = args.sensor.unwrap_or(sim::SENSORS_PER_BUS * (args.bus - 1));
    if sensor >= trace.m {
        return Err(fail(INPUT, anyhow!("sensor {sensor} out of range (m = {})", trace.m)));
    }
    let threshold = match (&args.threshold, &args.metrics) {
        (Some(t), _) => Some(*t),
        (None, Some(path)) => {
            let metrics: serde_json::Value = serde_json::from_str(&read(path)?).map_err(|e| fail(INPUT, anyhow!("{}: {e}", path.display())))?;
            let t = metrics.get("thresholds").and_then(|t| t.get(sensor)).and_then(|t| t.as_f64());
            Some(t.ok_or_else(|| fail(INPUT, anyhow!("{}: no threshold for sensor {sensor}", path.display())))?)
        }
        (None, None) => None,
    };

    let (theta, omega) = (2 * (args.bus - 1), 2 * (args.bus - 1) + 1);
    let b = args.bus;
    let rows = &trace.rows;
    let files: Vec<(String, Vec<u8>)> = vec![
        (format!("bus{b}_theta_true.csv"), series(rows.iter().map(|r| (r.k, r.x_true[theta])))),
        (format!("bus{b}_theta_est.csv"), series(rows.iter().map(|r| (r.k, r.x_hat_secure[theta])))),
        (format!("bus{b}_omega_true.csv"), series(rows.iter().map(|r| (r.k, r.x_true[omega])))),
        (format!("bus{b}_omega_est.csv"), series(rows.iter().map(|r| (r.k, r.x_hat_secure[omega])))),
        (format!("sensor{sensor}_residue_before.csv"), series(rows.iter().map(|r| (r.k, r.residues[sensor])))),
        (format!("sensor{sensor}_residue_after.csv"), series(rows.iter().map(|r| (r.k, r.residues_after[sensor])))),
    ];
    let mut written = Vec::new();
    for (name, bytes) in &files {
        let path = args.out.join(name);
        write(&path, bytes)?;
        written.push(path);
    }
    let resets = rows.iter().filter(|r| r.triggers[sensor]).count();
    print(&to_json(&serde_json::json!({ "files": written, "threshold": threshold, "sensor": sensor, "resets": resets })))
}
