//! JSON file formats for systems, scenarios and gains, plus the analysis report.
//!
//! Matrix entries are either plain numbers or `[re, im]` pairs. Parsers return
//! errors with the line and column reported by the JSON reader.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::gains::{gains_from_vectors, GainSet};
use crate::linalg::{CMatrix, CVector, C64};
use crate::model::{fmt_complex, ModalMode, NoiseBounds, RawSystem, SystemModel};
use crate::sim::{build_ieee14, Ieee14Params};
use crate::subspace::{verify_decomposition, CheckReport};
use crate::threat::{AttackScenario, AttackSignal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Complex([f64; 2]),
}

impl Entry {
    fn value(self) -> C64 {
        match self {
            Entry::Real(r) => C64::new(r, 0.0),
            Entry::Complex([re, im]) => C64::new(re, im),
        }
    }

    fn from_value(z: C64) -> Self {
        if z.im == 0.0 {
            Entry::Real(z.re)
        } else {
            Entry::Complex([z.re, z.im])
        }
    }
}

fn matrix(rows: &[Vec<Entry>], name: &str) -> Result<CMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(Error::DimensionMismatch(format!("{name}: row {i} has {} entries, row 0 has {c}", rows[i].len())));
    }
    Ok(CMatrix::from_fn(r, c, |i, j| rows[i][j].value()))
}

fn vector(entries: &[Entry]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|e| e.value()))
}

fn entries(v: &CVector) -> Vec<Entry> {
    v.iter().map(|&z| Entry::from_value(z)).collect()
}

fn default_ts() -> f64 {
    1.0
}

fn default_mode() -> ModalMode {
    ModalMode::Diagonalize
}

/// Raw contents of a system file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    #[serde(rename = "A", default)]
    pub a: Option<Vec<Vec<Entry>>>,
    #[serde(rename = "C", default)]
    pub c: Option<Vec<Vec<Entry>>>,
    #[serde(rename = "B_w", default)]
    pub b_w: Option<f64>,
    #[serde(rename = "B_v", default)]
    pub b_v: Option<f64>,
    #[serde(rename = "Ts", default = "default_ts")]
    pub ts: f64,
    #[serde(default)]
    pub p: usize,
    #[serde(default = "default_mode")]
    pub modal_mode: ModalMode,
    #[serde(rename = "B_u", default)]
    pub b_u: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D_u", default)]
    pub d_u: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    /// Named benchmark, currently only `ieee14`; replaces `A`, `C` and the noise bounds.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub params: Option<Ieee14Params>,
}

pub fn parse_system_file(text: &str) -> Result<SystemFile> {
    Ok(serde_json::from_str(text)?)
}

/// A model plus the run inputs stored alongside it.
#[derive(Debug, Clone)]
pub struct LoadedSystem {
    pub model: SystemModel,
    pub modal_mode: ModalMode,
    pub input: Option<DVector<f64>>,
    pub x0: Option<DVector<f64>>,
}

fn real_rows(rows: &[Vec<f64>], name: &str) -> Result<CMatrix> {
    let as_entries: Vec<Vec<Entry>> = rows.iter().map(|r| r.iter().map(|&v| Entry::Real(v)).collect()).collect();
    matrix(&as_entries, name)
}

pub fn build_system(file: SystemFile, tol: Tolerances) -> Result<LoadedSystem> {
    if let Some(name) = &file.preset {
        if name != "ieee14" {
            return Err(Error::InvalidParameter(format!("unknown system preset {name:?}")));
        }
        if file.a.is_some() || file.c.is_some() {
            return Err(Error::InvalidParameter("a preset system cannot also give A or C".into()));
        }
        let params = file.params.clone().unwrap_or_default();
        let sys = build_ieee14(&params, file.p, tol)?;
        return Ok(LoadedSystem {
            model: sys.model,
            modal_mode: ModalMode::Diagonalize,
            input: Some(sys.matrices.input),
            x0: file.x0.map(DVector::from_vec),
        });
    }
    let (Some(a), Some(c)) = (&file.a, &file.c) else {
        return Err(Error::Parse("system file needs \"A\" and \"C\" (or a \"preset\")".into()));
    };
    let noise = NoiseBounds {
        process: file.b_w.ok_or_else(|| Error::Parse("missing field \"B_w\"".into()))?,
        measurement: file.b_v.ok_or_else(|| Error::Parse("missing field \"B_v\"".into()))?,
    };
    let mut raw = RawSystem::new(matrix(a, "A")?, matrix(c, "C")?, noise, file.ts)?;
    match (&file.b_u, &file.d_u) {
        (Some(b), d) => {
            let b = real_rows(b, "B_u")?;
            let d = match d {
                Some(d) => real_rows(d, "D_u")?,
                None => CMatrix::zeros(raw.m(), b.ncols()),
            };
            raw = raw.with_known_input(b, d)?;
        }
        (None, Some(_)) => return Err(Error::InvalidParameter("\"D_u\" requires \"B_u\"".into())),
        (None, None) => {}
    }
    let input = file.u.map(DVector::from_vec);
    if let (Some(u), Some(ki)) = (&input, raw.known_input()) {
        if u.len() != ki.b.ncols() {
            return Err(Error::DimensionMismatch(format!("u has {} entries, B_u has {} columns", u.len(), ki.b.ncols())));
        }
    }
    let x0 = file.x0.map(DVector::from_vec);
    if let Some(x) = &x0 {
        if x.len() != raw.n() {
            return Err(Error::DimensionMismatch(format!("x0 has {} entries, n = {}", x.len(), raw.n())));
        }
    }
    let model = SystemModel::new(raw, file.modal_mode, file.p, tol)?;
    Ok(LoadedSystem { model, modal_mode: file.modal_mode, input, x0 })
}

pub fn load_system(text: &str, tol: Tolerances) -> Result<LoadedSystem> {
    build_system(parse_system_file(text)?, tol)
}

/// Accepts `{"attack": {...}}` where the inner object is either a full
/// scenario or `{"preset": name, "signal": ..., "seed": ...}`.
pub fn parse_scenario(text: &str) -> Result<AttackScenario> {
    let root: Value = serde_json::from_str(text)?;
    let attack = root.get("attack").ok_or_else(|| Error::Parse("scenario file needs an \"attack\" object".into()))?;
    if let Some(name) = attack.get("preset") {
        let name = name.as_str().ok_or_else(|| Error::Parse("\"preset\" must be a string".into()))?;
        let signal: AttackSignal = match attack.get("signal") {
            Some(s) => serde_json::from_value(s.clone())?,
            None => AttackSignal::default(),
        };
        let seed = match attack.get("seed") {
            Some(s) => s.as_u64().ok_or_else(|| Error::Parse("\"seed\" must be a nonnegative integer".into()))?,
            None => 0,
        };
        return AttackScenario::preset(name, signal, seed).ok_or_else(|| Error::Parse(format!("unknown attack preset {name:?}")));
    }
    Ok(serde_json::from_value(attack.clone())?)
}

pub fn scenario_to_json(scenario: &AttackScenario) -> String {
    serde_json::to_string_pretty(&serde_json::json!({ "attack": scenario })).expect("scenario serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub sensor: usize,
    #[serde(rename = "L")]
    pub gain: Vec<Entry>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub cost: Option<f64>,
    #[serde(default)]
    pub feasible: Option<bool>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub eq15: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainsFile {
    pub gamma: f64,
    #[serde(default)]
    pub gamma_overridden: bool,
    pub sensors: Vec<GainEntry>,
}

impl GainsFile {
    pub fn from_gain_set(set: &GainSet) -> Self {
        let sensors = set
            .sensors
            .iter()
            .enumerate()
            .map(|(i, s)| GainEntry {
                sensor: s.sensor,
                gain: entries(&s.gain),
                sigma: Some(s.sigma),
                cost: s.cost,
                feasible: Some(s.feasible),
                threshold: set.detector.thresholds.get(i).copied(),
                eq15: set.detector.eq15.get(i).copied(),
            })
            .collect();
        Self { gamma: set.gamma(), gamma_overridden: set.gamma_overridden, sensors }
    }

    /// Rebuilds the gain set for `model`; derived quantities are recomputed.
    pub fn into_gain_set(self, model: &SystemModel) -> Result<GainSet> {
        let mut vecs = vec![None; model.m()];
        for e in self.sensors {
            let slot = vecs
                .get_mut(e.sensor)
                .ok_or_else(|| Error::DimensionMismatch(format!("gain for sensor {} but m = {}", e.sensor, model.m())))?;
            if slot.is_some() {
                return Err(Error::Parse(format!("duplicate gain for sensor {}", e.sensor)));
            }
            *slot = Some(vector(&e.gain));
        }
        let vecs = vecs
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Parse(format!("no gain for sensor {i}"))))
            .collect::<Result<Vec<_>>>()?;
        if vecs.iter().flat_map(|v| v.iter()).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFiniteInput("gain entries".into()));
        }
        let mut set = gains_from_vectors(model, vecs, self.gamma)?;
        set.gamma_overridden = self.gamma_overridden;
        Ok(set)
    }
}

pub fn parse_gains(text: &str) -> Result<GainsFile> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensorSummary {
    pub sensor: usize,
    pub observed: Vec<usize>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub s_max: usize,
    /// `s_max >= 2p`.
    pub supports_budget: bool,
    pub sensors: Vec<SensorSummary>,
    pub coverage_counts: Vec<usize>,
    pub eigenvalues: Vec<String>,
    pub condition_number: f64,
    pub similarity_residual: f64,
    pub verification: Vec<CheckReport>,
    pub decomposition_ok: bool,
}

pub fn analyze(model: &SystemModel) -> AnalysisReport {
    let verification: Vec<CheckReport> =
        model.decompositions.iter().map(|d| verify_decomposition(d, &model.modal, &model.tolerances)).collect();
    AnalysisReport {
        n: model.n(),
        m: model.m(),
        p: model.p,
        s_max: model.s_max(),
        supports_budget: model.supports_budget(),
        sensors: model
            .decompositions
            .iter()
            .map(|d| SensorSummary { sensor: d.sensor, observed: d.observed.clone(), dim: d.dim() })
            .collect(),
        coverage_counts: model.coverage.counts(),
        eigenvalues: model.modal.blocks.iter().map(|b| fmt_complex(b.eigenvalue)).collect(),
        condition_number: model.modal.condition_number,
        similarity_residual: model.modal.similarity_residual,
        decomposition_ok: verification.iter().all(CheckReport::passed),
        verification,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
        "A": [[0.5, 0, 0], [0, 0.3, 0], [0, 0, 0.2]],
        "C": [[1, 0, 0], [0, 1, 1], [1, 1, 0]],
        "B_w": 0.001, "B_v": 0.01, "modal_mode": "already_jordan"
    }"#;

    #[test]
    fn loads_diagonal_example() {
        let sys = load_system(EXAMPLE, Tolerances::default()).unwrap();
        let report = analyze(&sys.model);
        assert_eq!(report.n, 3);
        assert_eq!(report.sensors[1].observed, vec![1, 2]);
        assert!(report.decomposition_ok);
    }

    #[test]
    fn complex_entries() {
        let text = r#"{"A": [[[0.5, 0.1], 0], [0, [0.5, -0.1]]], "C": [[1, 1]], "B_w": 0, "B_v": 0}"#;
        let f = parse_system_file(text).unwrap();
        let a = matrix(f.a.as_ref().unwrap(), "A").unwrap();
        assert_eq!(a[(1, 1)], C64::new(0.5, -0.1));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_system_file("{\n  \"A\": [[1, 2],\n  oops\n}").unwrap_err();
        let Error::Parse(msg) = err else { panic!() };
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let text = r#"{"A": [[1, 0], [0]], "C": [[1, 1]], "B_w": 0, "B_v": 0}"#;
        assert!(matches!(load_system(text, Tolerances::default()), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn scenario_preset_and_explicit() {
        let sc = parse_scenario(r#"{"attack": {"preset": "ieee14-switching", "signal": {"type": "slope", "rate": 0.2}, "seed": 4}}"#).unwrap();
        assert_eq!(sc.p, 6);
        let text = scenario_to_json(&sc);
        assert_eq!(parse_scenario(&text).unwrap(), sc);
        assert!(parse_scenario(r#"{"attack": {"kind": "none", "p": 0}}"#).is_ok());
        assert!(parse_scenario(r#"{"attack": {"preset": "nope"}}"#).is_err());
    }

    #[test]
    fn gains_round_trip() {
        let sys = load_system(EXAMPLE, Tolerances::default()).unwrap();
        let vecs: Vec<CVector> = sys.model.decompositions.iter().map(|d| CVector::from_element(d.dim(), C64::new(0.1, 0.0))).collect();
        let set = gains_from_vectors(&sys.model, vecs, 0.5).unwrap();
        let text = serde_json::to_string(&GainsFile::from_gain_set(&set)).unwrap();
        let back = parse_gains(&text).unwrap().into_gain_set(&sys.model).unwrap();
        assert_eq!(back, set);
    }
}
