//! Observer gain design and detector parameter selection.
//!
//! For a reduced pair `(Ã, C̃)` the detector parameter must satisfy
//!
//! ```text
//! sigma_max(Ã - L C̃) <= (gamma - B_w - ||L|| B_v) / ((2 sqrt(n_i) + 1) gamma)
//! ```
//!
//! which is equivalent to `gamma >= cost(L)` with
//! `cost(L) = (B_w + ||L|| B_v) / (1 - (2 sqrt(n_i) + 1) sigma_max(Ã - L C̃))`.
//! Gains are found by a derivative-free search in two stages: an outer grid
//! over the spectral-norm level and an inner minimum-norm search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64, ZERO};
use crate::model::{NoiseBounds, SystemModel};
use crate::subspace::SensorDecomposition;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    pub starts: usize,
    pub evals_per_start: usize,
    pub alpha_grid: usize,
    pub seed: u64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { starts: 8, evals_per_start: 2000, alpha_grid: 50, seed: 0 }
    }
}

/// `1 / (2 sqrt(n_i) + 1)`, the strict upper limit on `sigma_max(Ã - L C̃)`.
pub fn spectral_bound(dim: usize) -> f64 {
    1.0 / (2.0 * (dim as f64).sqrt() + 1.0)
}

/// `(sqrt(n_i) + 1) gamma`.
pub fn detector_threshold(dim: usize, gamma: f64) -> f64 {
    ((dim as f64).sqrt() + 1.0) * gamma
}

/// Real parametrization of a gain vector. Real plants get conjugate-symmetric
/// gains so that local estimates stay conjugate-symmetric.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainLayout {
    dim: usize,
    slots: Vec<Slot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Real(usize),
    Complex(usize),
    /// `L[a] = re + i im`, `L[b] = re - i im`.
    Pair(usize, usize),
}

impl GainLayout {
    pub fn full(dim: usize) -> Self {
        Self { dim, slots: (0..dim).map(Slot::Complex).collect() }
    }

    /// `partner[r]` is the local position conjugate to `r`.
    pub fn conjugate_symmetric(partner: &[usize]) -> Self {
        let mut slots = Vec::new();
        for (r, &p) in partner.iter().enumerate() {
            match p.cmp(&r) {
                std::cmp::Ordering::Equal => slots.push(Slot::Real(r)),
                std::cmp::Ordering::Greater => slots.push(Slot::Pair(r, p)),
                std::cmp::Ordering::Less => {}
            }
        }
        Self { dim: partner.len(), slots }
    }

    pub fn for_sensor(dec: &SensorDecomposition, model: &SystemModel) -> Self {
        let Some(pairing) = model.modal.pairing.as_ref().filter(|_| model.raw.is_real()) else {
            return Self::full(dec.dim());
        };
        let partner: Option<Vec<usize>> = dec
            .observed
            .iter()
            .map(|&j| dec.position(pairing.state_partner(j)))
            .collect();
        match partner {
            Some(p) => Self::conjugate_symmetric(&p),
            None => Self::full(dec.dim()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> usize {
        self.slots.iter().map(|s| if matches!(s, Slot::Real(_)) { 1 } else { 2 }).sum()
    }

    pub fn unpack(&self, theta: &[f64]) -> CVector {
        let mut l = CVector::from_element(self.dim, ZERO);
        let mut k = 0;
        for slot in &self.slots {
            match *slot {
                Slot::Real(r) => {
                    l[r] = C64::new(theta[k], 0.0);
                    k += 1;
                }
                Slot::Complex(r) => {
                    l[r] = C64::new(theta[k], theta[k + 1]);
                    k += 2;
                }
                Slot::Pair(a, b) => {
                    l[a] = C64::new(theta[k], theta[k + 1]);
                    l[b] = C64::new(theta[k], -theta[k + 1]);
                    k += 2;
                }
            }
        }
        l
    }

    /// Projects a gain onto this layout (exact for gains that already respect it).
    pub fn pack(&self, l: &CVector) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.params());
        for slot in &self.slots {
            match *slot {
                Slot::Real(r) => theta.push(l[r].re),
                Slot::Complex(r) => theta.extend([l[r].re, l[r].im]),
                Slot::Pair(a, b) => {
                    theta.push(0.5 * (l[a].re + l[b].re));
                    theta.push(0.5 * (l[a].im - l[b].im));
                }
            }
        }
        theta
    }
}

pub fn closed_loop(a_tilde: &CMatrix, c_tilde: &CMatrix, gain: &CVector) -> CMatrix {
    a_tilde - gain * c_tilde
}

pub fn closed_loop_sigma(a_tilde: &CMatrix, c_tilde: &CMatrix, gain: &CVector) -> f64 {
    linalg::sigma_max(&closed_loop(a_tilde, c_tilde, gain))
}

/// `(Ã C̃^H)(C̃ C̃^H)^{-1}`; zero when `C̃ = 0`.
pub fn least_squares_gain(a_tilde: &CMatrix, c_tilde: &CMatrix) -> CVector {
    let energy = c_tilde.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if energy == 0.0 {
        return CVector::from_element(a_tilde.nrows(), ZERO);
    }
    let col = a_tilde * c_tilde.adjoint();
    col.column(0).into_owned() / C64::new(energy, 0.0)
}

/// Lower bound on `sigma_max(Ã - L C̃)` valid for every `L`: the gain cannot
/// act on directions annihilated by `C̃`, so the bound is `||Ã (I - P)||`
/// with `P` the orthogonal projector onto `C̃^H`. The least-squares gain attains it.
pub fn spectral_lower_bound(a_tilde: &CMatrix, c_tilde: &CMatrix) -> f64 {
    let n = a_tilde.nrows();
    let energy = c_tilde.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if energy == 0.0 {
        return linalg::sigma_max(a_tilde);
    }
    let ch = c_tilde.adjoint();
    let proj = &ch * c_tilde / C64::new(energy, 0.0);
    linalg::sigma_max(&(a_tilde * (CMatrix::identity(n, n) - proj)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralGain {
    pub gain: CVector,
    pub sigma: f64,
    pub lower_bound: f64,
}

/// Approximate minimizer of `sigma_max(Ã - L C̃)` by multi-start coordinate search.
pub fn spectral_search(
    a_tilde: &CMatrix,
    c_tilde: &CMatrix,
    layout: &GainLayout,
    opts: &DesignOptions,
    rng: &mut ChaCha8Rng,
) -> SpectralGain {
    let lower_bound = spectral_lower_bound(a_tilde, c_tilde);
    let ls = layout.pack(&least_squares_gain(a_tilde, c_tilde));
    let scale = ls.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let objective = |theta: &[f64]| closed_loop_sigma(a_tilde, c_tilde, &layout.unpack(theta));

    let mut starts = vec![ls.clone(), vec![0.0; layout.params()]];
    while starts.len() < opts.starts.max(2) {
        let s: Vec<f64> = ls.iter().map(|&x| x + scale * rng.random_range(-1.0..1.0)).collect();
        starts.push(s);
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let (theta, value) = pattern_search(&objective, start, 0.5 * scale, opts.evals_per_start);
        if best.as_ref().is_none_or(|(_, v)| value < *v) {
            best = Some((theta, value));
        }
    }
    let (theta, sigma) = best.expect("at least one start");
    SpectralGain { gain: layout.unpack(&theta), sigma, lower_bound }
}

/// Minimum spectral-norm gain with the feasibility verdict
/// `sigma* < 1 / (2 sqrt(n_i) + 1)`.
pub fn min_spectral_gain(
    a_tilde: &CMatrix,
    c_tilde: &CMatrix,
    layout: &GainLayout,
    opts: &DesignOptions,
    rng: &mut ChaCha8Rng,
) -> Result<SpectralGain> {
    let bound = spectral_bound(a_tilde.nrows());
    let lower_bound = spectral_lower_bound(a_tilde, c_tilde);
    if lower_bound >= bound {
        // No gain can beat the bound; skip the search.
        return Err(Error::Infeasible { sigma_star: lower_bound, bound });
    }
    let found = spectral_search(a_tilde, c_tilde, layout, opts, rng);
    if found.sigma >= bound {
        return Err(Error::Infeasible { sigma_star: found.sigma, bound });
    }
    Ok(found)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainDesign {
    pub gain: CVector,
    pub sigma: f64,
    pub cost: f64,
    /// Squared spectral-norm level of the selected grid point.
    pub alpha: f64,
    /// `||L||^2`.
    pub beta: f64,
    pub sigma_star: f64,
}

/// `(B_w + ||L|| B_v) / (1 - (2 sqrt(n_i) + 1) sigma)`; infinite outside the feasible region.
pub fn design_cost(dim: usize, sigma: f64, gain_norm: f64, noise: NoiseBounds) -> f64 {
    let denom = 1.0 - (2.0 * (dim as f64).sqrt() + 1.0) * sigma;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    (noise.process + gain_norm * noise.measurement) / denom
}

/// Two-stage gain design: grid over the spectral level, minimum-norm gain at each level.
pub fn design_gain(
    a_tilde: &CMatrix,
    c_tilde: &CMatrix,
    noise: NoiseBounds,
    layout: &GainLayout,
    opts: &DesignOptions,
    rng: &mut ChaCha8Rng,
) -> Result<GainDesign> {
    let dim = a_tilde.nrows();
    let bound = spectral_bound(dim);
    let spectral = min_spectral_gain(a_tilde, c_tilde, layout, opts, rng)?;
    let sigma_star = spectral.sigma;
    let seed = layout.pack(&spectral.gain);
    let seed_norm = spectral.gain.norm();

    let sigma_of = |theta: &[f64]| closed_loop_sigma(a_tilde, c_tilde, &layout.unpack(theta));
    let norm = |theta: &[f64]| layout.unpack(theta).norm();
    let mut best = GainDesign {
        gain: spectral.gain.clone(),
        sigma: sigma_star,
        cost: design_cost(dim, sigma_star, seed_norm, noise),
        alpha: sigma_star * sigma_star,
        beta: seed_norm * seed_norm,
        sigma_star,
    };

    let levels = (0..=opts.alpha_grid)
        .map(|k| sigma_star + (bound - sigma_star) * k as f64 / (opts.alpha_grid + 1) as f64);
    let mut previous = seed.clone();
    for level in levels {
        let start = shrink_toward_zero(&seed, level, &sigma_of);
        let start = if norm(&previous) < norm(&start) && sigma_of(&previous) <= level {
            previous.clone()
        } else {
            start
        };
        let penalty = 1e3 * (1.0 + seed_norm) / (bound - sigma_star).max(1e-6);
        let objective = |theta: &[f64]| norm(theta) + penalty * (sigma_of(theta) - level).max(0.0);
        let step = 0.25 * seed.iter().fold(1e-3_f64, |m, x| m.max(x.abs()));
        let (theta, _) = pattern_search(&objective, start, step, opts.evals_per_start);

        let gain = layout.unpack(&theta);
        let sigma = closed_loop_sigma(a_tilde, c_tilde, &gain);
        let gnorm = gain.norm();
        let cost = design_cost(dim, sigma, gnorm, noise);
        if cost < best.cost {
            best = GainDesign {
                gain,
                sigma,
                cost,
                alpha: level * level,
                beta: gnorm * gnorm,
                sigma_star,
            };
        }
        previous = theta;
    }
    Ok(best)
}

/// Smallest `t` in [0, 1] with `sigma(t * theta) <= level`, by bisection
/// (sigma is convex along the ray and `sigma(theta) <= level`).
fn shrink_toward_zero(theta: &[f64], level: f64, sigma_of: &impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let scaled = |t: f64| theta.iter().map(|x| x * t).collect::<Vec<_>>();
    if sigma_of(&scaled(0.0)) <= level {
        return scaled(0.0);
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if sigma_of(&scaled(mid)) <= level {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    scaled(hi)
}

/// Coordinate search with halving step. Returns the best point and value.
fn pattern_search(f: &impl Fn(&[f64]) -> f64, start: Vec<f64>, step0: f64, budget: usize) -> (Vec<f64>, f64) {
    let mut x = start;
    let mut fx = f(&x);
    let mut evals = 1;
    let mut step = step0;
    let min_step = 1e-12 * step0.max(1.0);
    while evals < budget && step > min_step {
        let mut improved = false;
        for k in 0..x.len() {
            for dir in [1.0, -1.0] {
                if evals >= budget {
                    break;
                }
                let old = x[k];
                x[k] = old + dir * step;
                let fy = f(&x);
                evals += 1;
                if fy < fx {
                    fx = fy;
                    improved = true;
                    break;
                }
                x[k] = old;
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

/// Lemma-style certificate: `sigma_max(Ã - L C̃) <= (gamma - B_w - ||L|| B_v) / ((2 sqrt(n_i) + 1) gamma)`
/// together with the side condition `gamma >= B_w + ||L|| B_v`.
pub fn verify_inequality(
    gain: &CVector,
    gamma: f64,
    a_tilde: &CMatrix,
    c_tilde: &CMatrix,
    noise: NoiseBounds,
) -> bool {
    let side = noise.process + gain.norm() * noise.measurement;
    if !(gamma > 0.0) || gamma < side {
        return false;
    }
    let dim = a_tilde.nrows();
    let rhs = (gamma - side) / ((2.0 * (dim as f64).sqrt() + 1.0) * gamma);
    let sigma = closed_loop_sigma(a_tilde, c_tilde, gain);
    // absorbs rounding when gamma equals the design cost exactly
    sigma <= rhs + 1e-12 * (1.0 + sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub gamma: f64,
    /// `(sqrt(n_i) + 1) gamma` per sensor.
    pub thresholds: Vec<f64>,
    /// Gain/threshold inequality verdict per sensor (true for sensors without an observer).
    pub eq15: Vec<bool>,
}

/// Per-sensor result of the design pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum GainOutcome {
    Designed(GainDesign),
    Infeasible { sigma_star: f64, bound: f64 },
    /// The sensor observes no modal state.
    Unobserving,
}

pub fn sensor_rng(seed: u64, sensor: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sensor as u64);
    rng
}

pub fn design_all(model: &SystemModel, opts: &DesignOptions) -> Vec<GainOutcome> {
    let noise = model.raw.noise();
    model
        .decompositions
        .iter()
        .map(|dec| {
            if dec.dim() == 0 {
                return GainOutcome::Unobserving;
            }
            let layout = GainLayout::for_sensor(dec, model);
            let mut rng = sensor_rng(opts.seed, dec.sensor);
            match design_gain(&dec.a_tilde, &dec.c_tilde, noise, &layout, opts, &mut rng) {
                Ok(d) => GainOutcome::Designed(d),
                Err(Error::Infeasible { sigma_star, bound }) => GainOutcome::Infeasible { sigma_star, bound },
                Err(e) => unreachable!("design_gain only fails with Infeasible: {e}"),
            }
        })
        .collect()
}

/// Gain used when no feasible design exists: the least-squares gain scaled by
/// `1 / m_active` so that the summed corrections of the baseline observer stay contractive.
pub fn fallback_gain(a_tilde: &CMatrix, c_tilde: &CMatrix, active_sensors: usize) -> CVector {
    least_squares_gain(a_tilde, c_tilde) / C64::new(active_sensors.max(1) as f64, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorGain {
    pub sensor: usize,
    pub gain: CVector,
    pub sigma: f64,
    pub cost: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainSet {
    pub sensors: Vec<SensorGain>,
    pub detector: DetectorConfig,
    /// True when gamma came from an explicit override instead of the design costs.
    pub gamma_overridden: bool,
}

impl GainSet {
    pub fn gamma(&self) -> f64 {
        self.detector.gamma
    }

    pub fn infeasible(&self) -> impl Iterator<Item = &SensorGain> {
        self.sensors.iter().filter(|s| !s.feasible)
    }
}

/// Maximum design cost over all sensors, thresholds, and a re-check of the inequality.
pub fn compute_gamma(model: &SystemModel, designs: &[Option<&GainDesign>]) -> Result<DetectorConfig> {
    let gamma = designs.iter().flatten().map(|d| d.cost).fold(0.0, f64::max);
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("no positive finite design cost (gamma = {gamma})")));
    }
    let noise = model.raw.noise();
    let mut eq15 = Vec::with_capacity(designs.len());
    for (dec, design) in model.decompositions.iter().zip(designs) {
        let ok = match design {
            Some(d) => verify_inequality(&d.gain, gamma, &dec.a_tilde, &dec.c_tilde, noise),
            None => true,
        };
        if !ok {
            return Err(Error::InequalityViolated { sensor: dec.sensor, gamma });
        }
        eq15.push(ok);
    }
    let thresholds = model.decompositions.iter().map(|d| detector_threshold(d.dim(), gamma)).collect();
    Ok(DetectorConfig { gamma, thresholds, eq15 })
}

/// Turns design outcomes into a gain set. Infeasible sensors are an error
/// unless `allow_fallback` is set, in which case they receive [`fallback_gain`]
/// and `gamma_override` becomes mandatory.
pub fn assemble_gains(
    model: &SystemModel,
    outcomes: &[GainOutcome],
    gamma_override: Option<f64>,
    allow_fallback: bool,
) -> Result<GainSet> {
    let active = model.decompositions.iter().filter(|d| d.dim() > 0).count();
    let mut sensors = Vec::with_capacity(outcomes.len());
    for (dec, outcome) in model.decompositions.iter().zip(outcomes) {
        let entry = match outcome {
            GainOutcome::Designed(d) => SensorGain {
                sensor: dec.sensor,
                gain: d.gain.clone(),
                sigma: d.sigma,
                cost: Some(d.cost),
                feasible: true,
            },
            GainOutcome::Unobserving => SensorGain {
                sensor: dec.sensor,
                gain: CVector::zeros(0),
                sigma: 0.0,
                cost: None,
                feasible: true,
            },
            GainOutcome::Infeasible { sigma_star, bound } => {
                if !allow_fallback {
                    return Err(Error::Infeasible { sigma_star: *sigma_star, bound: *bound });
                }
                let gain = fallback_gain(&dec.a_tilde, &dec.c_tilde, active);
                let sigma = closed_loop_sigma(&dec.a_tilde, &dec.c_tilde, &gain);
                SensorGain { sensor: dec.sensor, gain, sigma, cost: None, feasible: false }
            }
        };
        sensors.push(entry);
    }

    let detector = match gamma_override {
        Some(gamma) => override_detector(model, &sensors, gamma)?,
        None => {
            if sensors.iter().any(|s| !s.feasible) {
                return Err(Error::InvalidParameter(
                    "infeasible sensors use fallback gains; an explicit gamma is required".into(),
                ));
            }
            let designs: Vec<Option<&GainDesign>> = outcomes
                .iter()
                .map(|o| match o {
                    GainOutcome::Designed(d) => Some(d),
                    _ => None,
                })
                .collect();
            compute_gamma(model, &designs)?
        }
    };
    Ok(GainSet { sensors, detector, gamma_overridden: gamma_override.is_some() })
}

/// Detector configuration for an externally chosen gamma; the inequality is
/// evaluated and recorded, never enforced.
pub fn override_detector(model: &SystemModel, sensors: &[SensorGain], gamma: f64) -> Result<DetectorConfig> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    let noise = model.raw.noise();
    let eq15 = model
        .decompositions
        .iter()
        .zip(sensors)
        .map(|(dec, s)| dec.dim() == 0 || verify_inequality(&s.gain, gamma, &dec.a_tilde, &dec.c_tilde, noise))
        .collect();
    let thresholds = model.decompositions.iter().map(|d| detector_threshold(d.dim(), gamma)).collect();
    Ok(DetectorConfig { gamma, thresholds, eq15 })
}

/// Builds a gain set from explicitly supplied gains (e.g. a gains file).
pub fn gains_from_vectors(model: &SystemModel, gains: Vec<CVector>, gamma: f64) -> Result<GainSet> {
    if gains.len() != model.m() {
        return Err(Error::DimensionMismatch(format!("{} gains for {} sensors", gains.len(), model.m())));
    }
    let noise = model.raw.noise();
    let mut sensors = Vec::with_capacity(gains.len());
    for (dec, gain) in model.decompositions.iter().zip(gains) {
        if gain.len() != dec.dim() {
            return Err(Error::DimensionMismatch(format!(
                "sensor {}: gain has {} entries, local dimension is {}",
                dec.sensor,
                gain.len(),
                dec.dim()
            )));
        }
        let sigma = if dec.dim() == 0 { 0.0 } else { closed_loop_sigma(&dec.a_tilde, &dec.c_tilde, &gain) };
        let cost = design_cost(dec.dim(), sigma, gain.norm(), noise);
        let feasible = sigma < spectral_bound(dec.dim());
        sensors.push(SensorGain {
            sensor: dec.sensor,
            gain,
            sigma,
            cost: (dec.dim() > 0 && cost.is_finite()).then_some(cost),
            feasible,
        });
    }
    let detector = override_detector(model, &sensors, gamma)?;
    Ok(GainSet { sensors, detector, gamma_overridden: true })
}

#[cfg(test)]
pub(crate) fn real_vector(values: &[f64]) -> CVector {
    linalg::to_complex_vec(&nalgebra::DVector::from_column_slice(values))
}
