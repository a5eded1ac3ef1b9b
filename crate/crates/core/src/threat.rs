//! Time-varying sparse sensor attacks.
//!
//! Everything here is a pure function of `(scenario, k)`: random draws come
//! from a generator keyed by the scenario seed and positioned by `k`, so a
//! step can be regenerated without replaying earlier ones.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the attacked sensor set evolves with `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SupportSchedule {
    None,
    FixedSet { sensors: Vec<usize> },
    /// Support at step `k` is `phases[k % phases.len()]`.
    SwitchingSchedule { phases: Vec<Vec<usize>> },
    /// Explicit support per step; steps past the end are unattacked.
    CustomSchedule { steps: Vec<Vec<usize>> },
    /// A fresh uniformly random subset of `size` sensors at every step.
    RandomSupport { size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttackSignal {
    RandomUniform { lo: f64, hi: f64 },
    Slope { rate: f64 },
    Constant { value: f64 },
}

impl Default for AttackSignal {
    fn default() -> Self {
        AttackSignal::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackScenario {
    #[serde(flatten)]
    pub schedule: SupportSchedule,
    pub p: usize,
    #[serde(default)]
    pub signal: AttackSignal,
    #[serde(default)]
    pub seed: u64,
}

/// Buses of the 14-bus switching rule for `k % 3 == 0, 1, 2` (1-based).
const IEEE14_PHASES: [&[usize]; 3] = [&[9, 10, 11, 12, 13, 14], &[1, 2, 3, 4], &[5, 6, 7, 8]];

/// Sensors per bus in the 14-bus benchmark; the electrical-power sensor comes first.
pub const IEEE14_SENSORS_PER_BUS: usize = 4;

impl AttackScenario {
    pub fn none() -> Self {
        Self { schedule: SupportSchedule::None, p: 0, signal: AttackSignal::default(), seed: 0 }
    }

    /// Switching attack on the electrical-power sensor of the 14-bus benchmark:
    /// buses 1-4 when `k % 3 == 1`, 5-8 when `k % 3 == 2`, 9-14 when `k % 3 == 0`.
    /// The implied budget is the largest phase, 6.
    pub fn ieee14_switching(signal: AttackSignal, seed: u64) -> Self {
        let phases: Vec<Vec<usize>> = IEEE14_PHASES
            .iter()
            .map(|buses| buses.iter().map(|b| IEEE14_SENSORS_PER_BUS * (b - 1)).collect())
            .collect();
        let p = phases.iter().map(Vec::len).max().unwrap_or(0);
        Self { schedule: SupportSchedule::SwitchingSchedule { phases }, p, signal, seed }
    }

    /// Looks up a named scenario.
    pub fn preset(name: &str, signal: AttackSignal, seed: u64) -> Option<Self> {
        match name {
            "ieee14-switching" => Some(Self::ieee14_switching(signal, seed)),
            _ => None,
        }
    }

    /// Checks the scenario against a sensor count: every listed support fits
    /// the budget and names existing sensors, and the signal is well formed.
    pub fn validate(&self, m: usize) -> Result<()> {
        let check = |k: u64, set: &[usize]| -> Result<()> {
            if set.len() > self.p {
                return Err(Error::SparsityViolated { k, size: set.len(), p: self.p });
            }
            if let Some(&bad) = set.iter().find(|&&i| i >= m) {
                return Err(Error::InvalidParameter(format!("attacked sensor {bad} out of range (m = {m})")));
            }
            let mut sorted = set.to_vec();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(format!("duplicate sensor in attack support at k = {k}")));
            }
            Ok(())
        };
        match &self.schedule {
            SupportSchedule::None => {}
            SupportSchedule::FixedSet { sensors } => check(0, sensors)?,
            SupportSchedule::SwitchingSchedule { phases } => {
                if phases.is_empty() {
                    return Err(Error::InvalidParameter("switching schedule has no phases".into()));
                }
                for (k, set) in phases.iter().enumerate() {
                    check(k as u64, set)?;
                }
            }
            SupportSchedule::CustomSchedule { steps } => {
                for (k, set) in steps.iter().enumerate() {
                    check(k as u64, set)?;
                }
            }
            SupportSchedule::RandomSupport { size } => {
                if *size > self.p {
                    return Err(Error::SparsityViolated { k: 0, size: *size, p: self.p });
                }
                if *size > m {
                    return Err(Error::InvalidParameter(format!("random support of {size} sensors exceeds m = {m}")));
                }
            }
        }
        match self.signal {
            AttackSignal::RandomUniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Err(Error::InvalidParameter(format!("uniform attack range [{lo}, {hi}] is invalid")))
            }
            AttackSignal::Slope { rate } if !rate.is_finite() => Err(Error::NonFiniteInput("slope rate".into())),
            AttackSignal::Constant { value } if !value.is_finite() => Err(Error::NonFiniteInput("constant attack".into())),
            _ => Ok(()),
        }
    }
}

fn keyed_rng(seed: u64, lane: u64, k: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&lane.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(k);
    rng
}

/// Lane reserved for support sampling; signal lanes are sensor indices.
const SUPPORT_LANE: u64 = u64::MAX;

/// Sorted set of attacked sensors at step `k` for a system with `m` sensors.
pub fn support_at(scenario: &AttackScenario, k: u64, m: usize) -> Result<Vec<usize>> {
    let mut set = match &scenario.schedule {
        SupportSchedule::None => Vec::new(),
        SupportSchedule::FixedSet { sensors } => sensors.clone(),
        SupportSchedule::SwitchingSchedule { phases } => {
            if phases.is_empty() {
                Vec::new()
            } else {
                phases[(k % phases.len() as u64) as usize].clone()
            }
        }
        SupportSchedule::CustomSchedule { steps } => usize::try_from(k).ok().and_then(|k| steps.get(k)).cloned().unwrap_or_default(),
        SupportSchedule::RandomSupport { size } => {
            let mut rng = keyed_rng(scenario.seed, SUPPORT_LANE, k);
            rand::seq::index::sample(&mut rng, m, (*size).min(m)).into_vec()
        }
    };
    set.sort_unstable();
    if set.len() > scenario.p {
        return Err(Error::SparsityViolated { k, size: set.len(), p: scenario.p });
    }
    Ok(set)
}

/// Attack value on `sensor` at step `k`.
pub fn signal_at(scenario: &AttackScenario, k: u64, sensor: usize) -> f64 {
    match scenario.signal {
        AttackSignal::RandomUniform { lo, hi } => {
            if lo == hi {
                return lo;
            }
            keyed_rng(scenario.seed, sensor as u64, k).random_range(lo..=hi)
        }
        AttackSignal::Slope { rate } => k as f64 * rate,
        AttackSignal::Constant { value } => value,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSample {
    pub support: Vec<usize>,
    /// Values added to the supported entries, aligned with `support`.
    pub values: Vec<f64>,
}

/// Adds the attack for step `k` to the clean measurement in place.
pub fn apply(scenario: &AttackScenario, k: u64, y: &mut DVector<f64>) -> Result<AttackSample> {
    let support = support_at(scenario, k, y.len())?;
    if let Some(&bad) = support.iter().find(|&&i| i >= y.len()) {
        return Err(Error::InvalidParameter(format!("attacked sensor {bad} out of range (m = {})", y.len())));
    }
    let values: Vec<f64> = support.iter().map(|&i| signal_at(scenario, k, i)).collect();
    for (&i, &a) in support.iter().zip(&values) {
        y[i] += a;
    }
    Ok(AttackSample { support, values })
}
