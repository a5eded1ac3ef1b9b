//! Bank of local observers with median fusion and residue-based resets.
//!
//! Each step runs in this order: every local observer predicts from its last
//! post-reset state and the previous measurement, the predictions are fused,
//! and each observer whose residue against the fused estimate exceeds its
//! threshold is reset onto the fused estimate.

mod fusion;
mod luenberger;

pub use fusion::{fuse, objective, ModalFusion};
pub use luenberger::{luenberger_step, LuenbergerObserver};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gains::{closed_loop, GainSet};
use crate::linalg::{self, CMatrix, CVector};
use crate::model::SystemModel;
use crate::subspace::CoverageIndex;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalObserverState {
    /// Prediction before the detector ran.
    pub eta: CVector,
    /// State after the detector (equal to `eta` unless reset).
    pub eta_plus: CVector,
    pub last_residue_norm: f64,
    pub residue_after: f64,
    pub triggered: bool,
}

/// Static data of one local observer.
#[derive(Debug, Clone)]
pub struct LocalObserver {
    pub sensor: usize,
    pub observed: Vec<usize>,
    pub gain: CVector,
    pub threshold: f64,
    closed_loop: CMatrix,
    /// `H_i T B_u`, present when the system has a known input.
    input_map: Option<CMatrix>,
    /// Row `i` of `D_u`.
    feedthrough: Option<CMatrix>,
}

impl LocalObserver {
    pub fn dim(&self) -> usize {
        self.observed.len()
    }
}

/// `eta(k+1) = (A~ - L C~) eta+(k) + L y_i(k)`, plus the known-input terms.
pub fn observer_step(obs: &LocalObserver, eta_plus: &CVector, y_i: linalg::C64, u: Option<&CVector>) -> Result<CVector> {
    if !(y_i.re.is_finite() && y_i.im.is_finite()) {
        return Err(Error::NonFiniteInput(format!("measurement of sensor {}", obs.sensor)));
    }
    let mut y = y_i;
    let mut next = &obs.closed_loop * eta_plus;
    if let Some(u) = u {
        if let Some(d) = &obs.feedthrough {
            y -= (d * u)[0];
        }
        if let Some(b) = &obs.input_map {
            next += b * u;
        }
    }
    next.axpy(y, &obs.gain, linalg::ONE);
    Ok(next)
}

/// Compares `eta` with the fused estimate restricted to the observed states and
/// resets when the residue exceeds `threshold` (strictly).
pub fn detect_and_reset(eta: CVector, observed: &[usize], x_hat_modal: &CVector, threshold: f64) -> LocalObserverState {
    let projected = CVector::from_iterator(observed.len(), observed.iter().map(|&j| x_hat_modal[j]));
    let residue = (&eta - &projected).norm();
    let triggered = residue > threshold;
    let (eta_plus, residue_after) = if triggered { (projected, 0.0) } else { (eta.clone(), residue) };
    LocalObserverState { eta, eta_plus, last_residue_norm: residue, residue_after, triggered }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedEstimate {
    pub x_hat_modal: CVector,
    /// Estimate in the original coordinates, real part.
    pub x_hat_real: DVector<f64>,
    /// Largest imaginary magnitude discarded when mapping back.
    pub imag_residue: f64,
    pub objective_value: f64,
}

#[derive(Debug, Clone)]
pub struct EstimatorBank {
    pub observers: Vec<LocalObserver>,
    pub states: Vec<LocalObserverState>,
    coverage: CoverageIndex,
    t: CMatrix,
    t_inv: CMatrix,
    gamma: f64,
    last: Option<FusedEstimate>,
}

/// Builds the bank and initializes every local state to `H_i T x_hat0`.
pub fn init_bank(model: &SystemModel, gains: &GainSet, x_hat0: &CVector) -> Result<EstimatorBank> {
    if x_hat0.len() != model.n() {
        return Err(Error::DimensionMismatch(format!("initial estimate has {} entries, n = {}", x_hat0.len(), model.n())));
    }
    EstimatorBank::from_modal(model, gains, &model.modal.to_modal_state(x_hat0))
}

impl EstimatorBank {
    pub fn from_modal(model: &SystemModel, gains: &GainSet, x_hat0_modal: &CVector) -> Result<Self> {
        if gains.sensors.len() != model.m() {
            return Err(Error::DimensionMismatch(format!("{} gains for {} sensors", gains.sensors.len(), model.m())));
        }
        if x_hat0_modal.len() != model.n() {
            return Err(Error::DimensionMismatch(format!("initial estimate has {} entries", x_hat0_modal.len())));
        }
        let mut observers = Vec::with_capacity(model.m());
        let mut states = Vec::with_capacity(model.m());
        for (i, (dec, sg)) in model.decompositions.iter().zip(&gains.sensors).enumerate() {
            if sg.gain.len() != dec.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "gain of sensor {i} has {} entries, observed subspace has {}",
                    sg.gain.len(),
                    dec.dim()
                )));
            }
            let input = model.modal.input.as_ref();
            observers.push(LocalObserver {
                sensor: i,
                observed: dec.observed.clone(),
                gain: sg.gain.clone(),
                threshold: gains.detector.thresholds[i],
                closed_loop: closed_loop(&dec.a_tilde, &dec.c_tilde, &sg.gain),
                input_map: input.map(|u| &dec.selector * &u.b),
                feedthrough: input.map(|u| u.d.rows(i, 1).into_owned()),
            });
            let eta = CVector::from_iterator(dec.dim(), dec.observed.iter().map(|&j| x_hat0_modal[j]));
            states.push(LocalObserverState {
                eta: eta.clone(),
                eta_plus: eta,
                last_residue_norm: 0.0,
                residue_after: 0.0,
                triggered: false,
            });
        }
        Ok(Self {
            observers,
            states,
            coverage: model.coverage.clone(),
            t: model.modal.t.clone(),
            t_inv: model.modal.t_inv.clone(),
            gamma: gains.gamma(),
            last: None,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn last_estimate(&self) -> Option<&FusedEstimate> {
        self.last.as_ref()
    }

    /// Runs one predict, fuse, detect cycle with the measurement `y` and known
    /// input `u` of the previous step.
    pub fn secure_step(&mut self, y: &CVector, u: Option<&CVector>) -> Result<&FusedEstimate> {
        if y.len() != self.observers.len() {
            return Err(Error::DimensionMismatch(format!("measurement has {} entries, m = {}", y.len(), self.observers.len())));
        }
        let mut etas = Vec::with_capacity(self.observers.len());
        for (obs, state) in self.observers.iter().zip(&self.states) {
            if obs.dim() == 0 {
                etas.push(CVector::zeros(0));
                continue;
            }
            etas.push(observer_step(obs, &state.eta_plus, y[obs.sensor], u)?);
        }
        let fused = fuse(&etas, &self.coverage)?;
        for ((obs, state), eta) in self.observers.iter().zip(self.states.iter_mut()).zip(etas) {
            *state = detect_and_reset(eta, &obs.observed, &fused.x_hat, obs.threshold);
        }
        let back = &self.t_inv * &fused.x_hat;
        let estimate = FusedEstimate {
            x_hat_real: back.map(|z| z.re),
            imag_residue: linalg::max_imag(&back),
            x_hat_modal: fused.x_hat,
            objective_value: fused.objective,
        };
        Ok(self.last.insert(estimate))
    }

    /// `||eta_i - H_i T x||_2` per sensor for the true state `x` in original
    /// coordinates, using the pre-reset local states.
    pub fn local_errors(&self, x_true: &CVector) -> Vec<f64> {
        let z = &self.t * x_true;
        self.observers
            .iter()
            .zip(&self.states)
            .map(|(obs, s)| obs.observed.iter().enumerate().map(|(p, &j)| (s.eta[p] - z[j]).norm_sqr()).sum::<f64>().sqrt())
            .collect()
    }

    pub fn triggers(&self) -> impl Iterator<Item = bool> + '_ {
        self.states.iter().map(|s| s.triggered)
    }
}
