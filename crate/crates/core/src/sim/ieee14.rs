//! Linearized swing dynamics of the IEEE 14-bus grid.
//!
//! Each bus `i` contributes `theta_i' = omega_i` and
//! `m_i omega_i' = P_i - D_i omega_i - sum_j t_ij (theta_i - theta_j)`.
//! States are interleaved (`x[2i] = theta_i`, `x[2i+1] = omega_i`) and each bus
//! carries four sensors: electrical power `D_i omega_i` (plus `P_i` on load
//! buses), angle, and two frequency sensors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::to_complex;
use crate::model::{ModalMode, NoiseBounds, RawSystem, SystemModel};

pub const BUSES: usize = 14;
pub const SENSORS_PER_BUS: usize = crate::threat::IEEE14_SENSORS_PER_BUS;

const DEFAULT_PARAMS: &str = include_str!("../../data/ieee14.json");

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series reactance in p.u.; the coupling is its inverse.
    pub reactance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ieee14Params {
    pub sample_time: f64,
    /// 1-based.
    pub generator_buses: Vec<usize>,
    pub inertia: Vec<f64>,
    pub damping: Vec<f64>,
    /// Constant known power injection per bus.
    pub injection: Vec<f64>,
    pub lines: Vec<Line>,
    pub noise: NoiseBounds,
    /// Pin bus 1's angle to zero, removing its state.
    #[serde(default)]
    pub grounded: bool,
}

impl Default for Ieee14Params {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_PARAMS).expect("bundled parameter file parses")
    }
}

impl Ieee14Params {
    pub fn from_json(text: &str) -> Result<Self> {
        let params: Self = serde_json::from_str(text)?;
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let per_bus = [("inertia", &self.inertia), ("damping", &self.damping), ("injection", &self.injection)];
        for (name, v) in per_bus {
            if v.len() != BUSES {
                return Err(Error::DimensionMismatch(format!("{name} has {} entries, expected {BUSES}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteInput(name.into()));
            }
        }
        if self.inertia.iter().any(|&m| m <= 0.0) {
            return Err(Error::InvalidParameter("inertia must be positive".into()));
        }
        if self.damping.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidParameter("damping must be nonnegative".into()));
        }
        if let Some(&b) = self.generator_buses.iter().find(|&&b| b == 0 || b > BUSES) {
            return Err(Error::InvalidParameter(format!("generator bus {b} out of range")));
        }
        for l in &self.lines {
            if l.from == 0 || l.to == 0 || l.from > BUSES || l.to > BUSES || l.from == l.to {
                return Err(Error::InvalidParameter(format!("line {}-{} is invalid", l.from, l.to)));
            }
            if !(l.reactance > 0.0 && l.reactance.is_finite()) {
                return Err(Error::InvalidParameter(format!("line {}-{} needs a positive reactance", l.from, l.to)));
            }
        }
        if !(self.sample_time > 0.0 && self.sample_time.is_finite()) {
            return Err(Error::InvalidParameter("sample_time must be positive".into()));
        }
        Ok(())
    }

    pub fn is_generator(&self, bus: usize) -> bool {
        self.generator_buses.contains(&(bus + 1))
    }

    /// Symmetric coupling matrix `t_ij = 1 / x_ij`, zero off the line list.
    pub fn susceptance(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(BUSES, BUSES);
        for l in &self.lines {
            let (i, j) = (l.from - 1, l.to - 1);
            t[(i, j)] += 1.0 / l.reactance;
            t[(j, i)] += 1.0 / l.reactance;
        }
        t
    }
}

/// Real-valued matrices of the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct Ieee14Matrices {
    pub a_continuous: DMatrix<f64>,
    pub b_continuous: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub input: DVector<f64>,
}

/// Continuous model, its exact zero-order-hold discretization, and the sensor suite.
pub fn ieee14_matrices(params: &Ieee14Params) -> Result<Ieee14Matrices> {
    params.validate()?;
    let n = 2 * BUSES;
    let t = params.susceptance();
    let mut ac = DMatrix::zeros(n, n);
    let mut bc = DMatrix::zeros(n, BUSES);
    for i in 0..BUSES {
        let m = params.inertia[i];
        ac[(2 * i, 2 * i + 1)] = 1.0;
        ac[(2 * i + 1, 2 * i + 1)] = -params.damping[i] / m;
        for j in 0..BUSES {
            if t[(i, j)] != 0.0 {
                ac[(2 * i + 1, 2 * i)] -= t[(i, j)] / m;
                ac[(2 * i + 1, 2 * j)] += t[(i, j)] / m;
            }
        }
        bc[(2 * i + 1, i)] = 1.0 / m;
    }

    let mut c = DMatrix::zeros(SENSORS_PER_BUS * BUSES, n);
    let mut d = DMatrix::zeros(SENSORS_PER_BUS * BUSES, BUSES);
    for i in 0..BUSES {
        let r = SENSORS_PER_BUS * i;
        c[(r, 2 * i + 1)] = params.damping[i];
        if !params.is_generator(i) {
            d[(r, i)] = 1.0;
        }
        c[(r + 1, 2 * i)] = 1.0;
        c[(r + 2, 2 * i + 1)] = 1.0;
        c[(r + 3, 2 * i + 1)] = 1.0;
    }

    if params.grounded {
        ac = ac.remove_row(0).remove_column(0);
        bc = bc.remove_row(0);
        c = c.remove_column(0);
    }
    let (a, b) = discretize(&ac, &bc, params.sample_time);
    Ok(Ieee14Matrices {
        a_continuous: ac,
        b_continuous: bc,
        a,
        b,
        c,
        d,
        input: DVector::from_column_slice(&params.injection),
    })
}

/// `exp([A B; 0 0] Ts)` split into the discrete state and input matrices.
pub fn discretize(ac: &DMatrix<f64>, bc: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, q) = (ac.nrows(), bc.ncols());
    let mut aug = DMatrix::zeros(n + q, n + q);
    aug.view_mut((0, 0), (n, n)).copy_from(&(ac * ts));
    aug.view_mut((0, n), (n, q)).copy_from(&(bc * ts));
    let e = aug.exp();
    (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, q)).into_owned())
}

#[derive(Debug, Clone)]
pub struct Ieee14System {
    pub model: SystemModel,
    pub matrices: Ieee14Matrices,
    pub params: Ieee14Params,
}

impl Ieee14System {
    /// State index of bus `bus` (0-based) angle, if it is a state.
    pub fn theta_index(&self, bus: usize) -> Option<usize> {
        match (self.params.grounded, bus) {
            (true, 0) => None,
            (true, b) => Some(2 * b - 1),
            (false, b) => Some(2 * b),
        }
    }

    pub fn omega_index(&self, bus: usize) -> usize {
        if self.params.grounded {
            2 * bus
        } else {
            2 * bus + 1
        }
    }
}

/// Builds the benchmark as a [`SystemModel`] with attack budget `p`.
pub fn build_ieee14(params: &Ieee14Params, p: usize, tol: Tolerances) -> Result<Ieee14System> {
    let mats = ieee14_matrices(params)?;
    let raw = RawSystem::new(to_complex(&mats.a), to_complex(&mats.c), params.noise, params.sample_time)?
        .with_known_input(to_complex(&mats.b), to_complex(&mats.d))?;
    let model = SystemModel::new(raw, ModalMode::Diagonalize, p, tol)?;
    Ok(Ieee14System { model, matrices: mats, params: params.clone() })
}
