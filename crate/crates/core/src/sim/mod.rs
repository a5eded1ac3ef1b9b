//! Closed-loop simulation of the plant, attacker, secure estimator and the
//! Luenberger baseline.

mod ieee14;
mod trace;

pub use ieee14::{build_ieee14, discretize, ieee14_matrices, Ieee14Matrices, Ieee14Params, Ieee14System, Line, BUSES, SENSORS_PER_BUS};
pub use trace::{parse_trace_csv, write_trace_csv};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::LuenbergerObserver;
use crate::config::Tolerances;
use crate::gains::{assemble_gains, design_all, DesignOptions, GainSet};
use crate::linalg::{to_complex_vec, CVector, C64};
use crate::model::{NoiseBounds, SystemModel};
use crate::threat::{self, AttackScenario, AttackSignal};

/// Entrywise uniform draw on `[-bound, bound]`, rescaled onto the 2-norm ball
/// of radius `bound` when it falls outside.
pub fn sample_bounded<R: Rng + ?Sized>(rng: &mut R, dim: usize, bound: f64) -> DVector<f64> {
    if bound == 0.0 {
        return DVector::zeros(dim);
    }
    let mut v = DVector::from_fn(dim, |_, _| rng.random_range(-bound..=bound));
    let norm = v.norm();
    if norm > bound {
        v *= bound / norm;
    }
    v
}

/// Process and measurement noise for step `k` of a run seeded with `seed`.
pub fn sample_noise(bounds: NoiseBounds, n: usize, m: usize, seed: u64, k: u64) -> (DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    let w = sample_bounded(&mut rng, n, bounds.process);
    let v = sample_bounded(&mut rng, m, bounds.measurement);
    (w, v)
}

/// `A x + B u + w`.
pub fn plant_step(a: &DMatrix<f64>, x: &DVector<f64>, w: &DVector<f64>, input: Option<(&DMatrix<f64>, &DVector<f64>)>) -> DVector<f64> {
    let mut next = a * x + w;
    if let Some((b, u)) = input {
        next += b * u;
    }
    next
}

/// `C x + D u + v`, then the attack for step `k`.
pub fn measure(
    c: &DMatrix<f64>,
    x: &DVector<f64>,
    v: &DVector<f64>,
    input: Option<(&DMatrix<f64>, &DVector<f64>)>,
    scenario: &AttackScenario,
    k: u64,
) -> Result<(DVector<f64>, threat::AttackSample)> {
    let mut y = c * x + v;
    if let Some((d, u)) = input {
        y += d * u;
    }
    let sample = threat::apply(scenario, k, &mut y)?;
    Ok((y, sample))
}

/// Coordinates in which the default initial estimation error is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitCoordinates {
    /// Each real and imaginary part of the modal error is uniform on the bound;
    /// conjugate modes get conjugate errors so the estimate stays real.
    #[default]
    Modal,
    /// Each entry of the error in the original coordinates is uniform on the bound.
    Original,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub horizon: u64,
    pub seed: u64,
    pub x0: DVector<f64>,
    /// Initial estimate; defaults to `x0` plus a uniform perturbation.
    pub x_hat0: Option<DVector<f64>>,
    /// Entrywise bound of the default initial perturbation.
    pub init_perturbation: f64,
    pub init_coordinates: InitCoordinates,
    /// Constant known input.
    pub input: Option<DVector<f64>>,
    pub luenberger: bool,
}

impl SimConfig {
    pub fn new(n: usize, horizon: u64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            x0: DVector::zeros(n),
            x_hat0: None,
            init_perturbation: 0.0,
            init_coordinates: InitCoordinates::default(),
            input: None,
            luenberger: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: u64,
    pub x_true: DVector<f64>,
    pub x_hat_secure: DVector<f64>,
    pub x_hat_luen: Option<DVector<f64>>,
    pub err_inf_secure: f64,
    pub err_inf_luen: Option<f64>,
    /// Residue of each local observer before the detector acted.
    pub residues: Vec<f64>,
    pub residues_after: Vec<f64>,
    pub triggers: Vec<bool>,
    /// Attack on the measurement consumed to produce this row's estimates.
    pub support: Vec<usize>,
    pub attack_values: Vec<f64>,
    /// `||eta_i - H_i T x||_2` per sensor; empty when parsed from CSV.
    pub local_errors: Vec<f64>,
    /// Largest modal-coordinate error modulus; NaN when parsed from CSV.
    pub err_modal_secure: f64,
}

/// Row `k` holds `x(k)` and the estimates computed from `y(k-1)`; row 0 is the initialization.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub n: usize,
    pub m: usize,
    pub gamma: Option<f64>,
    pub thresholds: Option<Vec<f64>>,
    pub rows: Vec<TraceRow>,
    /// Runtime failure that ended the run early.
    pub abort: Option<Error>,
    /// Step at which the Luenberger baseline became non-finite; it is not
    /// stepped afterwards and its columns stay empty.
    pub luenberger_diverged_at: Option<u64>,
}

fn real_matrix(m: &crate::linalg::CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}

fn inf_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

/// Initial estimation error, drawn from a dedicated stream so it does not shift the noise.
pub fn initial_error(model: &SystemModel, bound: f64, coordinates: InitCoordinates, seed: u64) -> DVector<f64> {
    let n = model.n();
    if bound == 0.0 {
        return DVector::zeros(n);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    match coordinates {
        InitCoordinates::Original => DVector::from_fn(n, |_, _| rng.random_range(-bound..=bound)),
        InitCoordinates::Modal => {
            let mut d = CVector::zeros(n);
            for j in 0..n {
                let partner = model.modal.pairing.as_ref().map_or(j, |p| p.state_partner(j));
                if partner == j {
                    d[j] = C64::new(rng.random_range(-bound..=bound), 0.0);
                } else if j < partner {
                    d[j] = C64::new(rng.random_range(-bound..=bound), rng.random_range(-bound..=bound));
                    d[partner] = d[j].conj();
                }
            }
            model.modal.to_real_state(&d).map(|z| z.re)
        }
    }
}

/// Runs the closed loop for `config.horizon` steps. Invalid inputs are errors;
/// a failure mid-run returns the partial trace with `abort` set.
pub fn run(model: &SystemModel, gains: &GainSet, scenario: &AttackScenario, config: &SimConfig) -> Result<SimulationTrace> {
    if !model.raw.is_real() {
        return Err(Error::InvalidParameter("simulation requires a real-valued system".into()));
    }
    let (n, m) = (model.n(), model.m());
    if config.x0.len() != n {
        return Err(Error::DimensionMismatch(format!("x0 has {} entries, n = {n}", config.x0.len())));
    }
    scenario.validate(m)?;
    let a = real_matrix(model.raw.a());
    let c = real_matrix(model.raw.c());
    let known = model.raw.known_input().map(|ki| (real_matrix(&ki.b), real_matrix(&ki.d)));
    let u = match (&known, &config.input) {
        (Some((b, _)), Some(u)) if u.len() == b.ncols() => Some(u.clone()),
        (Some((b, _)), Some(u)) => {
            return Err(Error::DimensionMismatch(format!("input has {} entries, B has {} columns", u.len(), b.ncols())))
        }
        (Some((b, _)), None) => Some(DVector::zeros(b.ncols())),
        (None, Some(_)) => return Err(Error::InvalidParameter("input given for a system without an input channel".into())),
        (None, None) => None,
    };
    let u_c = u.as_ref().map(to_complex_vec);
    let plant_input = known.as_ref().zip(u.as_ref()).map(|((b, _), u)| (b, u));
    let sensor_input = known.as_ref().zip(u.as_ref()).map(|((_, d), u)| (d, u));

    let x_hat0 = match &config.x_hat0 {
        Some(x) if x.len() == n => x.clone(),
        Some(x) => return Err(Error::DimensionMismatch(format!("x_hat0 has {} entries, n = {n}", x.len()))),
        None => &config.x0 + initial_error(model, config.init_perturbation, config.init_coordinates, config.seed),
    };
    let mut bank = crate::estimator::init_bank(model, gains, &to_complex_vec(&x_hat0))?;
    let mut luen = if config.luenberger { Some(LuenbergerObserver::new(model, gains, &x_hat0)?) } else { None };

    let mut x = config.x0.clone();
    let modal_error = |x_hat_modal: &CVector, x: &DVector<f64>| -> f64 {
        let z = model.modal.to_modal_state(&to_complex_vec(x));
        (x_hat_modal - z).iter().map(|e| e.norm()).fold(0.0, f64::max)
    };
    let x_hat0_modal = model.modal.to_modal_state(&to_complex_vec(&x_hat0));
    let mut rows = Vec::with_capacity(config.horizon as usize + 1);
    rows.push(TraceRow {
        k: 0,
        x_true: x.clone(),
        x_hat_secure: x_hat0.clone(),
        x_hat_luen: luen.as_ref().map(|_| x_hat0.clone()),
        err_inf_secure: inf_dist(&x_hat0, &x),
        err_inf_luen: luen.as_ref().map(|_| inf_dist(&x_hat0, &x)),
        residues: vec![0.0; m],
        residues_after: vec![0.0; m],
        triggers: vec![false; m],
        support: Vec::new(),
        attack_values: Vec::new(),
        local_errors: bank.local_errors(&to_complex_vec(&x)),
        err_modal_secure: modal_error(&x_hat0_modal, &x),
    });

    let mut abort = None;
    let mut luenberger_diverged_at = None;
    for k in 1..=config.horizon {
        let (w, v) = sample_noise(model.raw.noise(), n, m, config.seed, k - 1);
        let (y, attack) = measure(&c, &x, &v, sensor_input, scenario, k - 1)?;
        x = plant_step(&a, &x, &w, plant_input);
        let y_c = to_complex_vec(&y);
        let est = match bank.secure_step(&y_c, u_c.as_ref()) {
            Ok(e) => e.clone(),
            Err(e) => {
                abort = Some(e);
                break;
            }
        };
        let mut x_hat_luen = luen.as_mut().map(|l| {
            l.step(&y_c, u_c.as_ref());
            l.x_hat_real()
        });
        if x_hat_luen.as_ref().is_some_and(|xl| xl.iter().any(|v| !v.is_finite())) {
            luen = None;
            x_hat_luen = None;
            luenberger_diverged_at = Some(k);
        }
        let row = TraceRow {
            k,
            err_inf_secure: inf_dist(&est.x_hat_real, &x),
            err_inf_luen: x_hat_luen.as_ref().map(|xl| inf_dist(xl, &x)),
            x_hat_luen,
            residues: bank.states.iter().map(|s| s.last_residue_norm).collect(),
            residues_after: bank.states.iter().map(|s| s.residue_after).collect(),
            triggers: bank.triggers().collect(),
            support: attack.support,
            attack_values: attack.values,
            local_errors: bank.local_errors(&to_complex_vec(&x)),
            err_modal_secure: modal_error(&est.x_hat_modal, &x),
            x_hat_secure: est.x_hat_real,
            x_true: x.clone(),
        };
        let finite = row.x_true.iter().chain(row.x_hat_secure.iter()).all(|v| v.is_finite());
        rows.push(row);
        if !finite {
            abort = Some(Error::Diverged { k, reason: "non-finite state or estimate".into() });
            break;
        }
    }
    Ok(SimulationTrace {
        n,
        m,
        gamma: Some(gains.gamma()),
        thresholds: Some(gains.detector.thresholds.clone()),
        rows,
        abort,
        luenberger_diverged_at,
    })
}

/// The 14-bus benchmark under the switching attack, ready to [`run`].
#[derive(Debug, Clone)]
pub struct Ieee14Experiment {
    pub system: Ieee14System,
    pub gains: GainSet,
    pub scenario: AttackScenario,
    pub config: SimConfig,
}

/// Builds the benchmark with the bundled parameters. No sensor admits a gain
/// meeting the spectral bound, so every sensor uses the fallback gain and the
/// detector runs with the given `gamma`. The initial estimate is within `gamma`
/// of the true initial state in modal coordinates.
pub fn ieee14_experiment(signal: AttackSignal, gamma: f64, horizon: u64, seed: u64, tol: Tolerances) -> Result<Ieee14Experiment> {
    let scenario = AttackScenario::ieee14_switching(signal, seed);
    let system = build_ieee14(&Ieee14Params::default(), scenario.p, tol)?;
    let opts = DesignOptions { seed, ..DesignOptions::default() };
    let outcomes = design_all(&system.model, &opts);
    let gains = assemble_gains(&system.model, &outcomes, Some(gamma), true)?;
    let mut config = SimConfig::new(system.model.n(), horizon, seed);
    config.input = Some(system.matrices.input.clone());
    config.init_perturbation = gamma;
    Ok(Ieee14Experiment { system, gains, scenario, config })
}

impl Ieee14Experiment {
    pub fn run(&self) -> Result<SimulationTrace> {
        run(&self.system.model, &self.gains, &self.scenario, &self.config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResetEvent {
    pub k: u64,
    pub sensor: usize,
    pub residue_before: f64,
    pub residue_after: f64,
    pub attacked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub steps: u64,
    pub max_err_secure: f64,
    pub mean_err_secure: f64,
    pub max_err_luenberger: Option<f64>,
    pub mean_err_luenberger: Option<f64>,
    /// Set when the baseline blew up; its max and mean cover the steps before.
    pub luenberger_diverged_at: Option<u64>,
    /// Per-sensor triggers while the sensor was not under attack.
    pub triggers_benign: Vec<usize>,
    pub triggers_attacked: Vec<usize>,
    pub benign_false_triggers: usize,
    pub max_support: usize,
    pub gamma: Option<f64>,
    pub thresholds: Option<Vec<f64>>,
    pub resets: Vec<ResetEvent>,
    pub aborted: Option<String>,
}

pub fn metrics(trace: &SimulationTrace) -> MetricsReport {
    let rows = &trace.rows;
    let count = rows.len().max(1) as f64;
    let max_err_secure = rows.iter().map(|r| r.err_inf_secure).fold(0.0, f64::max);
    let mean_err_secure = rows.iter().map(|r| r.err_inf_secure).sum::<f64>() / count;
    let luen: Vec<f64> = rows.iter().filter_map(|r| r.err_inf_luen).collect();
    let has_luen = !luen.is_empty();
    let mut triggers_benign = vec![0; trace.m];
    let mut triggers_attacked = vec![0; trace.m];
    let mut resets = Vec::new();
    for r in rows {
        for (i, &t) in r.triggers.iter().enumerate() {
            if !t {
                continue;
            }
            let attacked = r.support.binary_search(&i).is_ok();
            if attacked {
                triggers_attacked[i] += 1;
            } else {
                triggers_benign[i] += 1;
            }
            resets.push(ResetEvent {
                k: r.k,
                sensor: i,
                residue_before: r.residues[i],
                residue_after: r.residues_after[i],
                attacked,
            });
        }
    }
    MetricsReport {
        steps: rows.last().map_or(0, |r| r.k),
        max_err_secure,
        mean_err_secure,
        max_err_luenberger: has_luen.then(|| luen.iter().copied().fold(0.0, f64::max)),
        mean_err_luenberger: has_luen.then(|| luen.iter().sum::<f64>() / luen.len() as f64),
        luenberger_diverged_at: trace.luenberger_diverged_at,
        benign_false_triggers: triggers_benign.iter().sum(),
        triggers_benign,
        triggers_attacked,
        max_support: rows.iter().map(|r| r.support.len()).max().unwrap_or(0),
        gamma: trace.gamma,
        thresholds: trace.thresholds.clone(),
        resets,
        aborted: trace.abort.as_ref().map(|e| e.to_string()),
    }
}
