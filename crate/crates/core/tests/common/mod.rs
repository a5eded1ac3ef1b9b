//! Random system generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use secest::linalg::{CMatrix, CVector, C64};
use secest::model::{ModalMode, NoiseBounds, RawSystem, SystemModel};
use secest::Tolerances;

pub const NOISE: NoiseBounds = NoiseBounds { process: 1e-3, measurement: 1e-2 };

/// A system given directly in Jordan form, with its block layout `(start, len)`.
pub struct JordanSystem {
    pub a: CMatrix,
    pub c: CMatrix,
    pub blocks: Vec<(usize, usize)>,
}

fn random_eigenvalue(rng: &mut ChaCha8Rng, taken: &[C64]) -> C64 {
    loop {
        let r = rng.random_range(0.1..1.2);
        let z = if rng.random_bool(0.5) {
            C64::new(if rng.random_bool(0.5) { r } else { -r }, 0.0)
        } else {
            C64::from_polar(r, rng.random_range(0.2..3.0))
        };
        if taken.iter().all(|t| (t - z).norm() > 0.05 && (t.conj() - z).norm() > 0.05) {
            return z;
        }
    }
}

/// Jordan matrix with blocks of size 1 or 2 and distinct eigenvalues; complex
/// eigenvalues usually come with their conjugate block. Entries of `C` are zero
/// with probability `zero_prob`.
pub fn random_jordan(rng: &mut ChaCha8Rng, n: usize, m: usize, zero_prob: f64) -> JordanSystem {
    let mut blocks = Vec::new();
    let mut lambdas: Vec<C64> = Vec::new();
    let mut diag = Vec::new();
    while diag.len() < n {
        let room = n - diag.len();
        let len = if room >= 2 && rng.random_bool(0.3) { 2 } else { 1 };
        let lambda = random_eigenvalue(rng, &lambdas);
        lambdas.push(lambda);
        blocks.push((diag.len(), len));
        diag.extend(std::iter::repeat_n(lambda, len));
        let room = n - diag.len();
        if lambda.im != 0.0 && room >= len && rng.random_bool(0.8) {
            lambdas.push(lambda.conj());
            blocks.push((diag.len(), len));
            diag.extend(std::iter::repeat_n(lambda.conj(), len));
        }
    }
    let mut a = CMatrix::zeros(n, n);
    for &(start, len) in &blocks {
        for t in 0..len {
            a[(start + t, start + t)] = diag[start];
            if t + 1 < len {
                a[(start + t, start + t + 1)] = C64::new(1.0, 0.0);
            }
        }
    }
    let c = CMatrix::from_fn(m, n, |_, _| {
        if rng.random_bool(zero_prob) {
            C64::new(0.0, 0.0)
        } else {
            C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        }
    });
    JordanSystem { a, c, blocks }
}

/// Dense real system `A = S diag(eig) S^-1`, `C = F S^-1`.
pub struct DiagonalizableSystem {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub eig: Vec<f64>,
    /// Output map in eigen-coordinates; its zeros are the modes a sensor misses.
    pub f: DMatrix<f64>,
}

/// Dense real `A` with a known, well separated real spectrum and sparse real `C`.
pub fn random_real_diagonalizable(rng: &mut ChaCha8Rng, n: usize, m: usize, zero_prob: f64) -> DiagonalizableSystem {
    let mut eig: Vec<f64> = Vec::new();
    while eig.len() < n {
        let z = rng.random_range(-1.1..1.1);
        if eig.iter().all(|e| (e - z).abs() > 0.08) {
            eig.push(z);
        }
    }
    let s = loop {
        let s = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { rng.random_range(-0.5..0.5) });
        if s.clone().svd(false, false).singular_values.min() > 0.2 {
            break s;
        }
    };
    let s_inv = s.clone().try_inverse().unwrap();
    let a = &s * DMatrix::from_diagonal(&DVector::from_column_slice(&eig)) * &s_inv;
    let f = DMatrix::from_fn(m, n, |_, _| if rng.random_bool(zero_prob) { 0.0 } else { rng.random_range(-2.0..2.0) });
    let c = &f * s_inv;
    DiagonalizableSystem { a, c, eig, f }
}

/// Eigenvalues of the modes seen by `sensor`, from the zero pattern of `F`.
pub fn observed_eigenvalues(sys: &DiagonalizableSystem, sensor: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..sys.eig.len()).filter(|&j| sys.f[(sensor, j)] != 0.0).map(|j| sys.eig[j]).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Modal states seen by one output row of a Jordan system: within each block,
/// every state at or after the first nonzero entry.
pub fn structural_observed(sys: &JordanSystem, sensor: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for &(start, len) in &sys.blocks {
        if let Some(first) = (0..len).find(|&t| sys.c[(sensor, start + t)].norm() > 0.0) {
            out.extend(start + first..start + len);
        }
    }
    out
}

fn numerical_rank(m: &CMatrix) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-9 * top.max(1.0)).count()
}

/// Exhaustive sparse-observability index: the largest `s` such that removing
/// any `s` sensors leaves `[C_K; C_K A; ...]` with full column rank.
pub fn brute_force_s_max(a: &CMatrix, c: &CMatrix) -> Option<usize> {
    let (n, m) = (a.nrows(), c.nrows());
    let observable = |keep: &[usize]| {
        if keep.is_empty() {
            return false;
        }
        let mut stacked = CMatrix::zeros(keep.len() * n, n);
        let mut block = CMatrix::from_fn(keep.len(), n, |r, j| c[(keep[r], j)]);
        for k in 0..n {
            stacked.view_mut((k * keep.len(), 0), (keep.len(), n)).copy_from(&block);
            block = &block * a;
        }
        numerical_rank(&stacked) == n
    };
    let mut best = None;
    for s in 0..m {
        let all = (0u32..1 << m).filter(|mask| mask.count_ones() as usize == s).all(|mask| {
            let keep: Vec<usize> = (0..m).filter(|i| mask & (1 << i) == 0).collect();
            observable(&keep)
        });
        if !all {
            break;
        }
        best = Some(s);
    }
    best
}

/// Minimum of `sum |c - x|` over `x`, found by evaluating every breakpoint.
pub fn breakpoint_min(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&x| values.iter().map(|c| (c - x).abs()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// `sum_i ||Re(eta_i - H_i x)||_1 + ||Im(eta_i - H_i x)||_1`, written out directly.
pub fn l1_objective(etas: &[CVector], sets: &[Vec<usize>], x: &CVector) -> f64 {
    let mut total = 0.0;
    for (eta, q) in etas.iter().zip(sets) {
        for (pos, &j) in q.iter().enumerate() {
            let r = eta[pos] - x[j];
            total += r.re.abs() + r.im.abs();
        }
    }
    total
}

/// Random observed-index sets over `n` states with every state covered at least `min_cover` times.
pub fn random_sets(rng: &mut ChaCha8Rng, n: usize, m: usize, min_cover: usize) -> Vec<Vec<usize>> {
    let mut sets: Vec<Vec<usize>> = (0..m).map(|_| (0..n).filter(|_| rng.random_bool(0.5)).collect()).collect();
    for j in 0..n {
        let mut have: Vec<usize> = (0..m).filter(|&i| sets[i].contains(&j)).collect();
        let mut missing: Vec<usize> = (0..m).filter(|i| !have.contains(i)).collect();
        missing.shuffle(rng);
        while have.len() < min_cover {
            let i = missing.pop().expect("m >= min_cover");
            sets[i].push(j);
            sets[i].sort_unstable();
            have.push(i);
        }
    }
    sets
}

pub fn random_complex(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
    C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

/// Per-coordinate breakpoint enumeration; valid because the objective separates.
pub fn oracle_objective(etas: &[CVector], sets: &[Vec<usize>], n: usize) -> f64 {
    let mut total = 0.0;
    for j in 0..n {
        let mut re = Vec::new();
        let mut im = Vec::new();
        for (eta, q) in etas.iter().zip(sets) {
            if let Some(pos) = q.iter().position(|&s| s == j) {
                re.push(eta[pos].re);
                im.push(eta[pos].im);
            }
        }
        total += breakpoint_min(&re) + breakpoint_min(&im);
    }
    total
}

/// Four decoupled real modes observed by nine sensors, every mode by at least
/// five of them: sensor 0 sees mode 0, 1-3 see modes 0-1, 4 sees modes 0, 2, 3
/// and 5-8 see modes 1-3.
pub fn nine_sensor_system(p: usize) -> SystemModel {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.9, 0.15, -0.12, 0.1]));
    let rows: [[f64; 4]; 9] = [
        [1.0, 0.0, 0.0, 0.0],
        [1.0, 0.1, 0.0, 0.0],
        [1.0, 0.05, 0.0, 0.0],
        [1.2, 0.08, 0.0, 0.0],
        [1.0, 0.0, 0.1, 0.1],
        [0.0, 1.0, 1.0, 1.0],
        [0.0, 0.5, 1.0, 0.8],
        [0.0, 1.0, 0.6, 1.2],
        [0.0, 0.7, 0.9, 1.0],
    ];
    let c = DMatrix::from_fn(9, 4, |i, j| rows[i][j]);
    real_model(&a, &c, p, ModalMode::AlreadyJordan)
}

pub fn real_model(a: &DMatrix<f64>, c: &DMatrix<f64>, p: usize, mode: ModalMode) -> SystemModel {
    let raw = RawSystem::new(a.map(|v| C64::new(v, 0.0)), c.map(|v| C64::new(v, 0.0)), NOISE, 1.0).unwrap();
    SystemModel::new(raw, mode, p, Tolerances::default()).unwrap()
}
