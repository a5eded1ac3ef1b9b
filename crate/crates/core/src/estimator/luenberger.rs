//! Full-order baseline observer `x(k+1) = A x + sum_i H_i' L_i (y_i - C_i x)`,
//! run in modal coordinates. It has no protection against corrupted sensors.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gains::GainSet;
use crate::linalg::{CMatrix, CVector};
use crate::model::SystemModel;

#[derive(Debug, Clone)]
pub struct LuenbergerObserver {
    a: CMatrix,
    c: CMatrix,
    /// `sum_i H_i' L_i e_i'`, n x m.
    gain: CMatrix,
    input_b: Option<CMatrix>,
    input_d: Option<CMatrix>,
    t_inv: CMatrix,
    x_hat: CVector,
}

impl LuenbergerObserver {
    pub fn new(model: &SystemModel, gains: &GainSet, x_hat0: &DVector<f64>) -> Result<Self> {
        let (n, m) = (model.n(), model.m());
        if x_hat0.len() != n {
            return Err(Error::DimensionMismatch(format!("initial estimate has {} entries, n = {n}", x_hat0.len())));
        }
        let mut gain = CMatrix::zeros(n, m);
        for (dec, sg) in model.decompositions.iter().zip(&gains.sensors) {
            for (pos, &j) in dec.observed.iter().enumerate() {
                gain[(j, dec.sensor)] = sg.gain[pos];
            }
        }
        let x0 = model.modal.to_modal_state(&crate::linalg::to_complex_vec(x_hat0));
        Ok(Self {
            a: model.modal.a.clone(),
            c: model.modal.c.clone(),
            gain,
            input_b: model.modal.input.as_ref().map(|u| u.b.clone()),
            input_d: model.modal.input.as_ref().map(|u| u.d.clone()),
            t_inv: model.modal.t_inv.clone(),
            x_hat: x0,
        })
    }

    pub fn x_hat_modal(&self) -> &CVector {
        &self.x_hat
    }

    pub fn x_hat_real(&self) -> DVector<f64> {
        (&self.t_inv * &self.x_hat).map(|z| z.re)
    }

    /// Advances with the measurement and known input of the previous step.
    pub fn step(&mut self, y: &CVector, u: Option<&CVector>) -> &CVector {
        let mut innovation = y - &self.c * &self.x_hat;
        let mut next = &self.a * &self.x_hat;
        if let (Some(u), Some(b), Some(d)) = (u, &self.input_b, &self.input_d) {
            innovation -= d * u;
            next += b * u;
        }
        next += &self.gain * innovation;
        self.x_hat = next;
        &self.x_hat
    }
}

/// One baseline update from `x_hat` (modal coordinates).
pub fn luenberger_step(observer: &mut LuenbergerObserver, y: &CVector, u: Option<&CVector>) -> CVector {
    observer.step(y, u).clone()
}
