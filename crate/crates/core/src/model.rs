//! Plant representation: raw system matrices, validation, and the modal
//! (Jordan canonical form) coordinates in which estimation runs.

use std::cmp::Ordering;
use std::fmt;

use nalgebra::linalg::Schur;
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64, ONE, ZERO};
use crate::subspace::{self, CoverageIndex, SensorDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBounds {
    /// 2-norm bound on the process noise w(k).
    pub process: f64,
    /// 2-norm bound on the measurement noise v(k).
    pub measurement: f64,
}

/// Known input channel: `x(k+1) = A x + B u + w`, `y = C x + D u + v + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownInput {
    pub b: CMatrix,
    pub d: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSystem {
    a: CMatrix,
    c: CMatrix,
    noise: NoiseBounds,
    sample_time: f64,
    input: Option<KnownInput>,
}

impl RawSystem {
    pub fn new(a: CMatrix, c: CMatrix, noise: NoiseBounds, sample_time: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if c.nrows() == 0 || c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C must be m x {n} with m >= 1, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        if !(noise.process >= 0.0 && noise.measurement >= 0.0)
            || !noise.process.is_finite()
            || !noise.measurement.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "noise bounds must be finite and nonnegative, got B_w = {}, B_v = {}",
                noise.process, noise.measurement
            )));
        }
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample time must be positive, got {sample_time}"
            )));
        }
        if a.iter().chain(c.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteInput("system matrices contain NaN or Inf".into()));
        }
        Ok(Self { a, c, noise, sample_time, input: None })
    }

    pub fn with_known_input(mut self, b: CMatrix, d: CMatrix) -> Result<Self> {
        if b.nrows() != self.n() || d.nrows() != self.m() || b.ncols() != d.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "known input needs B: {}xq and D: {}xq, got {}x{} and {}x{}",
                self.n(),
                self.m(),
                b.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        self.input = Some(KnownInput { b, d });
        Ok(self)
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn c(&self) -> &CMatrix {
        &self.c
    }

    pub fn noise(&self) -> NoiseBounds {
        self.noise
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    pub fn known_input(&self) -> Option<&KnownInput> {
        self.input.as_ref()
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    /// True when every matrix entry is real.
    pub fn is_real(&self) -> bool {
        linalg::is_real(&self.a)
            && linalg::is_real(&self.c)
            && self
                .input
                .as_ref()
                .is_none_or(|u| linalg::is_real(&u.b) && linalg::is_real(&u.d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenInfo {
    pub re: f64,
    pub im: f64,
    pub algebraic: usize,
    pub geometric: usize,
}

impl EigenInfo {
    pub fn value(&self) -> C64 {
        C64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n: usize,
    pub m: usize,
    pub observability_rank: usize,
    pub observable: bool,
    pub eigenvalues: Vec<EigenInfo>,
    /// Every eigenvalue has geometric multiplicity 1.
    pub geometric_simple: bool,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.observable && self.geometric_simple
    }
}

/// Observability verdict and eigenstructure of a raw system.
pub fn validate_raw(raw: &RawSystem, tol: &Tolerances) -> ValidationReport {
    let n = raw.n();
    let mut stacked = CMatrix::zeros(raw.m() * n, n);
    let mut block = raw.c.clone();
    for k in 0..n {
        stacked.rows_mut(k * raw.m(), raw.m()).copy_from(&block);
        block = &block * &raw.a;
    }
    let observability_rank = linalg::numerical_rank(&stacked, tol.zero);

    let eigenvalues = eigen_clusters(&raw.a, tol)
        .into_iter()
        .map(|(value, algebraic)| {
            let shifted = &raw.a - CMatrix::identity(n, n) * value;
            let rank = linalg::numerical_rank(&shifted, tol.zero);
            EigenInfo { re: value.re, im: value.im, algebraic, geometric: n - rank }
        })
        .collect::<Vec<_>>();
    let geometric_simple = eigenvalues.iter().all(|e| e.geometric == 1);

    ValidationReport {
        n,
        m: raw.m(),
        observability_rank,
        observable: observability_rank == n,
        eigenvalues,
        geometric_simple,
    }
}

fn is_upper_triangular(a: &CMatrix, tol: &Tolerances) -> bool {
    let cut = tol.zero_for(linalg::norm_inf(a));
    (0..a.nrows()).all(|i| (0..i).all(|j| a[(i, j)].norm() < cut))
}

/// Eigenvalues of `a`. Triangular input is read off the diagonal so that
/// exact Jordan structure is not perturbed by an iterative solver.
pub(crate) fn eigenvalues(a: &CMatrix, tol: &Tolerances) -> Vec<C64> {
    if is_upper_triangular(a, tol) {
        return a.diagonal().iter().copied().collect();
    }
    if linalg::is_real(a) {
        let re = a.map(|z| z.re);
        return re.complex_eigenvalues().iter().copied().collect();
    }
    let schur = Schur::new(a.clone());
    let (_, t) = schur.unpack();
    t.diagonal().iter().copied().collect()
}

/// Groups numerically coincident eigenvalues; returns (representative, algebraic multiplicity).
fn eigen_clusters(a: &CMatrix, tol: &Tolerances) -> Vec<(C64, usize)> {
    let mut out: Vec<(C64, usize)> = Vec::new();
    for lambda in eigenvalues(a, tol) {
        let hit = out
            .iter_mut()
            .find(|(mu, _)| (*mu - lambda).norm() < tol.eigen_cluster * lambda.norm().max(1.0));
        match hit {
            Some((_, count)) => *count += 1,
            None => out.push((lambda, 1)),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalMode {
    AlreadyJordan,
    Diagonalize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JordanBlock {
    pub eigenvalue: C64,
    pub start: usize,
    pub len: usize,
}

impl JordanBlock {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Conjugate partner of every Jordan block; real blocks map to themselves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairMap {
    partner: Vec<usize>,
    state_partner: Vec<usize>,
}

impl PairMap {
    pub fn partner(&self, block: usize) -> usize {
        self.partner[block]
    }

    pub fn blocks(&self) -> &[usize] {
        &self.partner
    }

    /// Conjugate partner of a single modal state index.
    pub fn state_partner(&self, j: usize) -> usize {
        self.state_partner[j]
    }

    pub fn states(&self) -> &[usize] {
        &self.state_partner
    }

    pub fn is_involution(&self) -> bool {
        self.partner.iter().enumerate().all(|(b, &p)| self.partner[p] == b)
    }
}

/// Pairs each block whose eigenvalue is non-real with its conjugate block of equal size.
pub fn pair_blocks(blocks: &[JordanBlock], tol: &Tolerances) -> Result<PairMap> {
    let mut partner = vec![usize::MAX; blocks.len()];
    for (b, blk) in blocks.iter().enumerate() {
        let scale = tol.eigen_cluster * blk.eigenvalue.norm().max(1.0);
        if blk.eigenvalue.im.abs() < scale {
            partner[b] = b;
            continue;
        }
        let target = blk.eigenvalue.conj();
        let found = blocks.iter().enumerate().find(|(o, other)| {
            *o != b && other.len == blk.len && (other.eigenvalue - target).norm() < scale
        });
        match found {
            Some((o, _)) => partner[b] = o,
            None => {
                return Err(Error::UnpairedComplexBlock {
                    block: b,
                    eigenvalue: fmt_complex(blk.eigenvalue),
                })
            }
        }
    }
    let n: usize = blocks.iter().map(|b| b.len).sum();
    let mut state_partner = vec![0; n];
    for (b, blk) in blocks.iter().enumerate() {
        let other = &blocks[partner[b]];
        for t in 0..blk.len {
            state_partner[blk.start + t] = other.start + t;
        }
    }
    Ok(PairMap { partner, state_partner })
}

pub fn conjugate_pairing(modal: &ModalSystem, tol: &Tolerances) -> Result<PairMap> {
    pair_blocks(&modal.blocks, tol)
}

#[derive(Debug, Clone)]
pub struct ModalSystem {
    pub a: CMatrix,
    pub c: CMatrix,
    /// `x_modal = t * x_real`.
    pub t: CMatrix,
    pub t_inv: CMatrix,
    /// Known-input matrices in modal coordinates (`t * B`, `D`).
    pub input: Option<KnownInput>,
    pub blocks: Vec<JordanBlock>,
    /// Present whenever the eigenvalues occur in conjugate pairs; required for real plants.
    pub pairing: Option<PairMap>,
    pub condition_number: f64,
    /// `max |t A t^-1 - A_modal|`, a health indicator of the transform.
    pub similarity_residual: f64,
}

impl ModalSystem {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.c.nrows()
    }

    pub fn to_modal_state(&self, x_real: &CVector) -> CVector {
        &self.t * x_real
    }

    pub fn to_real_state(&self, x_modal: &CVector) -> CVector {
        &self.t_inv * x_modal
    }

    /// Checks the Jordan structural predicate on `a`: zero outside the block
    /// bidiagonal and superdiagonal entries in {0, 1}.
    pub fn is_jordan_structured(&self) -> bool {
        let n = self.n();
        let mut in_block_super = vec![false; n.saturating_sub(1)];
        for blk in &self.blocks {
            for j in blk.start..blk.start + blk.len - 1 {
                in_block_super[j] = true;
            }
        }
        for i in 0..n {
            for j in 0..n {
                let z = self.a[(i, j)];
                let ok = if i == j {
                    true
                } else if j == i + 1 {
                    if in_block_super[i] {
                        z == ONE
                    } else {
                        z == ZERO
                    }
                } else {
                    z == ZERO
                };
                if !ok {
                    return false;
                }
            }
        }
        true
    }
}

/// Transforms a validated raw system into modal coordinates.
pub fn to_modal(raw: &RawSystem, mode: ModalMode, tol: &Tolerances) -> Result<ModalSystem> {
    let (a_modal, blocks, t, t_inv, condition_number) = match mode {
        ModalMode::AlreadyJordan => {
            let (a_modal, blocks) = jordan_structure(&raw.a, tol)?;
            let n = raw.n();
            (a_modal, blocks, CMatrix::identity(n, n), CMatrix::identity(n, n), 1.0)
        }
        ModalMode::Diagonalize => diagonalize(raw, tol)?,
    };

    let pairing = match pair_blocks(&blocks, tol) {
        Ok(p) => Some(p),
        Err(e) if raw.is_real() => return Err(e),
        Err(_) => None,
    };

    let c = &raw.c * &t_inv;
    let input = raw.input.as_ref().map(|u| KnownInput { b: &t * &u.b, d: u.d.clone() });
    let similarity_residual = (&t * &raw.a * &t_inv - &a_modal)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);

    Ok(ModalSystem {
        a: a_modal,
        c,
        t,
        t_inv,
        input,
        blocks,
        pairing,
        condition_number,
        similarity_residual,
    })
}

fn jordan_structure(a: &CMatrix, tol: &Tolerances) -> Result<(CMatrix, Vec<JordanBlock>)> {
    let n = a.nrows();
    let cut = tol.zero_for(linalg::norm_inf(a));
    for i in 0..n {
        for j in 0..n {
            if j != i && j != i + 1 && a[(i, j)].norm() >= cut {
                return Err(Error::NotJordanForm(format!(
                    "entry ({i},{j}) = {} lies outside the bidiagonal",
                    fmt_complex(a[(i, j)])
                )));
            }
        }
    }
    let mut blocks: Vec<JordanBlock> = Vec::new();
    let mut start = 0;
    for j in 0..n {
        let closes = if j + 1 == n {
            true
        } else {
            let s = a[(j, j + 1)];
            if (s - ONE).norm() < cut {
                if (a[(j + 1, j + 1)] - a[(j, j)]).norm() >= cut {
                    return Err(Error::NotJordanForm(format!(
                        "superdiagonal 1 at ({j},{}) joins different eigenvalues",
                        j + 1
                    )));
                }
                false
            } else if s.norm() < cut {
                true
            } else {
                return Err(Error::NotJordanForm(format!(
                    "superdiagonal entry ({j},{}) = {} is neither 0 nor 1",
                    j + 1,
                    fmt_complex(s)
                )));
            }
        };
        if closes {
            blocks.push(JordanBlock { eigenvalue: a[(start, start)], start, len: j + 1 - start });
            start = j + 1;
        }
    }
    for (x, bx) in blocks.iter().enumerate() {
        for by in &blocks[x + 1..] {
            if (bx.eigenvalue - by.eigenvalue).norm() < tol.eigen_cluster * bx.eigenvalue.norm().max(1.0)
            {
                return Err(Error::NotJordanForm(format!(
                    "eigenvalue {} appears in more than one block (geometric multiplicity > 1)",
                    fmt_complex(bx.eigenvalue)
                )));
            }
        }
    }

    let mut a_modal = CMatrix::zeros(n, n);
    for blk in &blocks {
        for j in blk.range() {
            a_modal[(j, j)] = blk.eigenvalue;
            if j + 1 < blk.start + blk.len {
                a_modal[(j, j + 1)] = ONE;
            }
        }
    }
    Ok((a_modal, blocks))
}

type Diagonalization = (CMatrix, Vec<JordanBlock>, CMatrix, CMatrix, f64);

enum EigenGroup {
    Single(C64),
    /// Upper-half-plane member of a conjugate pair.
    Pair(C64),
}

impl EigenGroup {
    fn modulus(&self) -> f64 {
        match self {
            EigenGroup::Single(z) | EigenGroup::Pair(z) => z.norm(),
        }
    }

    fn abs_phase(&self) -> f64 {
        match self {
            EigenGroup::Single(z) | EigenGroup::Pair(z) => z.im.atan2(z.re).abs(),
        }
    }

    fn phase(&self) -> f64 {
        match self {
            EigenGroup::Single(z) => z.im.atan2(z.re),
            EigenGroup::Pair(z) => -z.im.atan2(z.re),
        }
    }
}

fn diagonalize(raw: &RawSystem, tol: &Tolerances) -> Result<Diagonalization> {
    let n = raw.n();
    let lambdas = eigenvalues(&raw.a, tol);
    for (x, lx) in lambdas.iter().enumerate() {
        for ly in &lambdas[x + 1..] {
            if (lx - ly).norm() < tol.eigen_cluster * lx.norm().max(1.0) {
                return Err(Error::DefectiveMatrix { eigenvalue: fmt_complex(*lx) });
            }
        }
    }

    let real_plant = linalg::is_real(&raw.a);
    let mut groups: Vec<EigenGroup> = Vec::new();
    for &lambda in &lambdas {
        let near_real = lambda.im.abs() < tol.eigen_cluster * lambda.norm().max(1.0);
        if !real_plant {
            groups.push(EigenGroup::Single(lambda));
        } else if near_real {
            groups.push(EigenGroup::Single(C64::new(lambda.re, 0.0)));
        } else if lambda.im > 0.0 {
            groups.push(EigenGroup::Pair(lambda));
        }
    }
    // Descending modulus, then ascending |phase| (keeps conjugates adjacent), then phase.
    groups.sort_by(|g, h| {
        h.modulus()
            .total_cmp(&g.modulus())
            .then(g.abs_phase().total_cmp(&h.abs_phase()))
            .then(g.phase().total_cmp(&h.phase()))
    });

    let mut values: Vec<C64> = Vec::with_capacity(n);
    let mut vectors: Vec<CVector> = Vec::with_capacity(n);
    for g in &groups {
        match *g {
            EigenGroup::Single(lambda) => {
                let mut v = eigenvector(&raw.a, lambda);
                if real_plant {
                    v.iter_mut().for_each(|z| z.im = 0.0);
                    let norm = v.norm();
                    v /= C64::new(norm, 0.0);
                }
                values.push(lambda);
                vectors.push(v);
            }
            EigenGroup::Pair(lambda) => {
                let v = eigenvector(&raw.a, lambda);
                values.push(lambda.conj());
                vectors.push(v.map(|z| z.conj()));
                values.push(lambda);
                vectors.push(v);
            }
        }
    }
    if values.len() != n {
        return Err(Error::DefectiveMatrix {
            eigenvalue: "conjugate pairing of computed eigenvalues failed".into(),
        });
    }

    let v = CMatrix::from_columns(&vectors);
    let condition = linalg::condition_number(&v);
    if !(condition <= tol.condition_limit) {
        return Err(Error::IllConditioned { condition, limit: tol.condition_limit });
    }
    let t = v
        .clone()
        .try_inverse()
        .ok_or(Error::IllConditioned { condition, limit: tol.condition_limit })?;

    let a_modal = CMatrix::from_diagonal(&CVector::from_vec(values.clone()));
    let blocks = values
        .iter()
        .enumerate()
        .map(|(j, &eigenvalue)| JordanBlock { eigenvalue, start: j, len: 1 })
        .collect();
    Ok((a_modal, blocks, t, v, condition))
}

fn eigenvector(a: &CMatrix, lambda: C64) -> CVector {
    let n = a.nrows();
    let mut v = linalg::null_vector(&(a - CMatrix::identity(n, n) * lambda));
    linalg::normalize_phase(&mut v);
    v
}

/// Validated plant together with its modal form and per-sensor decompositions.
#[derive(Debug, Clone)]
pub struct SystemModel {
    pub raw: RawSystem,
    pub modal: ModalSystem,
    /// Attack sparsity budget.
    pub p: usize,
    pub decompositions: Vec<SensorDecomposition>,
    pub coverage: CoverageIndex,
    pub tolerances: Tolerances,
}

impl SystemModel {
    pub fn new(raw: RawSystem, mode: ModalMode, p: usize, tol: Tolerances) -> Result<Self> {
        let report = validate_raw(&raw, &tol);
        if !report.geometric_simple {
            let bad = report
                .eigenvalues
                .iter()
                .filter(|e| e.geometric != 1)
                .map(|e| fmt_complex(e.value()))
                .collect();
            return Err(Error::DegenerateEigenvalue(bad));
        }
        let modal = to_modal(&raw, mode, &tol)?;
        let decompositions = subspace::decompose_all(&modal, &tol)?;
        let coverage = CoverageIndex::new(modal.n(), &decompositions);
        let uncovered = coverage.uncovered();
        if !uncovered.is_empty() || !report.observable {
            return Err(Error::NotObservable { uncovered });
        }
        let s_max = subspace::sparse_observability_index(&coverage)?;
        if p > s_max {
            return Err(Error::SparsityExceedsRedundancy { p, s_max });
        }
        Ok(Self { raw, modal, p, decompositions, coverage, tolerances: tol })
    }

    pub fn n(&self) -> usize {
        self.raw.n()
    }

    pub fn m(&self) -> usize {
        self.raw.m()
    }

    pub fn s_max(&self) -> usize {
        self.coverage.redundancy().unwrap_or(0)
    }

    /// Whether the system is 2p-sparse observable for its configured p.
    pub fn supports_budget(&self) -> bool {
        self.coverage.redundancy().is_some_and(|s| s >= 2 * self.p)
    }
}

pub(crate) fn fmt_complex(z: C64) -> String {
    ComplexDisplay(z).to_string()
}

struct ComplexDisplay(C64);

impl fmt::Display for ComplexDisplay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0.im.partial_cmp(&0.0) {
            Some(Ordering::Less) => write!(f, "{}-{}i", self.0.re, -self.0.im),
            Some(Ordering::Equal) => write!(f, "{}", self.0.re),
            _ => write!(f, "{}+{}i", self.0.re, self.0.im),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
        linalg::to_complex(&DMatrix::from_row_slice(rows, cols, data))
    }

    fn noise() -> NoiseBounds {
        NoiseBounds { process: 1e-3, measurement: 1e-2 }
    }

    fn section3(l1: f64, l2: f64) -> RawSystem {
        let a = real(3, 3, &[l1, 0.0, 0.0, 0.0, l2, 1.0, 0.0, 0.0, l2]);
        let c = real(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        RawSystem::new(a, c, noise(), 1.0).unwrap()
    }

    #[test]
    fn scalar_system_is_valid() {
        let raw = RawSystem::new(real(1, 1, &[0.5]), real(1, 1, &[1.0]), noise(), 0.1).unwrap();
        let rep = validate_raw(&raw, &Tolerances::default());
        assert!(rep.observable && rep.is_valid());
        assert_eq!(rep.eigenvalues.len(), 1);
        assert_eq!(rep.eigenvalues[0].re, 0.5);
    }

    #[test]
    fn identity_with_one_sensor_is_unobservable() {
        let raw = RawSystem::new(real(2, 2, &[1.0, 0.0, 0.0, 1.0]), real(1, 2, &[1.0, 0.0]), noise(), 1.0)
            .unwrap();
        let rep = validate_raw(&raw, &Tolerances::default());
        assert!(!rep.observable);
        assert_eq!(rep.observability_rank, 1);
        assert!(!rep.geometric_simple);
    }

    #[test]
    fn section3_example_validates() {
        let rep = validate_raw(&section3(0.9, 0.5), &Tolerances::default());
        assert!(rep.observable);
        assert!(rep.geometric_simple);
        let jordan = rep.eigenvalues.iter().find(|e| e.re == 0.5).unwrap();
        assert_eq!((jordan.algebraic, jordan.geometric), (2, 1));
    }

    #[test]
    fn rejects_bad_dimensions_and_bounds() {
        assert!(RawSystem::new(real(1, 2, &[1.0, 2.0]), real(1, 2, &[1.0, 0.0]), noise(), 1.0).is_err());
        assert!(RawSystem::new(real(1, 1, &[1.0]), real(1, 2, &[1.0, 0.0]), noise(), 1.0).is_err());
        let bad = NoiseBounds { process: -1.0, measurement: 0.0 };
        assert!(RawSystem::new(real(1, 1, &[1.0]), real(1, 1, &[1.0]), bad, 1.0).is_err());
    }

    #[test]
    fn diagonal_input_keeps_identity_transform() {
        let raw = RawSystem::new(real(2, 2, &[0.9, 0.0, 0.0, 0.8]), real(1, 2, &[1.0, 1.0]), noise(), 1.0)
            .unwrap();
        let modal = to_modal(&raw, ModalMode::Diagonalize, &Tolerances::default()).unwrap();
        assert!((&modal.t - CMatrix::identity(2, 2)).norm() < 1e-12);
        assert_eq!(modal.blocks.len(), 2);
        assert_eq!(modal.blocks[0].eigenvalue, C64::new(0.9, 0.0));
        assert_eq!(modal.blocks[1].eigenvalue, C64::new(0.8, 0.0));
        assert_eq!((modal.blocks[0].start, modal.blocks[1].start), (0, 1));
    }

    #[test]
    fn section3_already_jordan_blocks() {
        let modal = to_modal(&section3(0.9, 0.5), ModalMode::AlreadyJordan, &Tolerances::default()).unwrap();
        assert_eq!(modal.t, CMatrix::identity(3, 3));
        let spans: Vec<_> = modal.blocks.iter().map(|b| (b.eigenvalue.re, b.range())).collect();
        assert_eq!(spans, vec![(0.9, 0..1), (0.5, 1..3)]);
        assert!(modal.is_jordan_structured());
    }

    #[test]
    fn rotation_diagonalizes_to_conjugate_pair() {
        let raw = RawSystem::new(real(2, 2, &[0.0, 1.0, -1.0, 0.0]), real(1, 2, &[1.0, 0.0]), noise(), 1.0)
            .unwrap();
        let modal = to_modal(&raw, ModalMode::Diagonalize, &Tolerances::default()).unwrap();
        let expected = CMatrix::from_diagonal(&CVector::from_vec(vec![C64::new(0.0, -1.0), C64::new(0.0, 1.0)]));
        let lhs = &modal.t * raw.a() * &modal.t_inv;
        assert!((lhs - &expected).norm() < 1e-10);
        assert_eq!(modal.a, expected);
        let pairing = modal.pairing.as_ref().unwrap();
        assert_eq!(pairing.blocks(), &[1, 0]);
    }

    #[test]
    fn defective_matrix_rejected_in_diagonalize_mode() {
        let raw = section3(0.9, 0.5);
        let err = to_modal(&raw, ModalMode::Diagonalize, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::DefectiveMatrix { .. }));
    }

    #[test]
    fn non_jordan_input_rejected() {
        let raw = RawSystem::new(real(2, 2, &[0.5, 2.0, 0.0, 0.5]), real(1, 2, &[1.0, 0.0]), noise(), 1.0)
            .unwrap();
        assert!(matches!(
            to_modal(&raw, ModalMode::AlreadyJordan, &Tolerances::default()),
            Err(Error::NotJordanForm(_))
        ));
        let raw = RawSystem::new(real(2, 2, &[0.5, 0.0, 0.3, 0.4]), real(1, 2, &[1.0, 0.0]), noise(), 1.0)
            .unwrap();
        assert!(matches!(
            to_modal(&raw, ModalMode::AlreadyJordan, &Tolerances::default()),
            Err(Error::NotJordanForm(_))
        ));
    }

    #[test]
    fn pairing_self_and_mutual() {
        let tol = Tolerances::default();
        let blk = |re: f64, im: f64, start| JordanBlock { eigenvalue: C64::new(re, im), start, len: 1 };
        let real_pair = pair_blocks(&[blk(0.9, 0.0, 0), blk(0.8, 0.0, 1)], &tol).unwrap();
        assert_eq!(real_pair.blocks(), &[0, 1]);
        let cx = pair_blocks(&[blk(0.0, 1.0, 0), blk(0.0, -1.0, 1)], &tol).unwrap();
        assert_eq!(cx.blocks(), &[1, 0]);
        assert!(cx.is_involution());
        assert!(matches!(
            pair_blocks(&[blk(0.0, 1.0, 0), blk(0.5, 0.0, 1)], &tol),
            Err(Error::UnpairedComplexBlock { block: 0, .. })
        ));
    }

    #[test]
    fn round_trip_of_random_real_state() {
        let a = real(3, 3, &[0.2, 0.5, -0.1, -0.4, 0.7, 0.3, 0.1, 0.0, -0.6]);
        let raw = RawSystem::new(a.clone(), real(1, 3, &[1.0, 1.0, 1.0]), noise(), 1.0).unwrap();
        let modal = to_modal(&raw, ModalMode::Diagonalize, &Tolerances::default()).unwrap();
        let back = &modal.t_inv * &modal.a * &modal.t;
        assert!((back - a).iter().all(|z| z.norm() < 1e-8));
        let x = linalg::to_complex_vec(&nalgebra::DVector::from_vec(vec![0.3, -1.2, 2.5]));
        let rt = modal.to_real_state(&modal.to_modal_state(&x));
        assert!((rt - x).norm() < 1e-10);
    }
}
