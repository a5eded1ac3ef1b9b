//! Per-sensor observable-subspace decomposition and sparse-observability analysis.
//!
//! Every sensor `i` sees the modal state through its observability matrix
//! `O_i = [C_i; C_i A; ...; C_i A^{n-1}]`. In Jordan coordinates with simple
//! geometric multiplicities, the observable subspace of sensor `i` is spanned
//! by the canonical basis vectors whose columns of `O_i` are nonzero, so the
//! projection onto it is a plain row selector `H_i`.

use serde::Serialize;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, ONE};
use crate::model::ModalSystem;

#[derive(Debug, Clone)]
pub struct SensorDecomposition {
    pub sensor: usize,
    pub observability: CMatrix,
    /// Observed modal state indices, ascending.
    pub observed: Vec<usize>,
    pub selector: CMatrix,
    pub a_tilde: CMatrix,
    /// 1 x n_i.
    pub c_tilde: CMatrix,
}

impl SensorDecomposition {
    pub fn dim(&self) -> usize {
        self.observed.len()
    }

    /// Position of modal state `j` inside this sensor's local state, if observed.
    pub fn position(&self, j: usize) -> Option<usize> {
        self.observed.binary_search(&j).ok()
    }
}

/// `O_i = [c; c A; ...; c A^{n-1}]` for a single 1 x n output row.
pub fn observability_matrix(a: &CMatrix, c_row: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let mut o = CMatrix::zeros(n, n);
    let mut row = c_row.clone();
    for k in 0..n {
        o.row_mut(k).copy_from(&row.row(0));
        if k + 1 < n {
            row = &row * a;
        }
    }
    o
}

/// Indices of the columns of `o` whose norm exceeds the global zero tolerance.
pub fn observed_index_set(o: &CMatrix, tol: &Tolerances) -> Vec<usize> {
    let cut = tol.zero_for(linalg::norm_inf(o));
    (0..o.ncols()).filter(|&j| o.column(j).norm() > cut).collect()
}

/// Row selector whose rows are the canonical basis vectors `e_j'` for `j` in `observed`.
pub fn selector(observed: &[usize], n: usize) -> CMatrix {
    let mut h = CMatrix::zeros(observed.len(), n);
    for (r, &j) in observed.iter().enumerate() {
        h[(r, j)] = ONE;
    }
    h
}

/// Reduced pair `(H A H', C_i H')`, checked against `Ã H = H A`.
pub fn reduced_pair(
    a: &CMatrix,
    c_row: &CMatrix,
    h: &CMatrix,
    sensor: usize,
    tol: &Tolerances,
) -> Result<(CMatrix, CMatrix)> {
    let ht = h.adjoint();
    let a_tilde = h * a * &ht;
    let c_tilde = c_row * &ht;
    let residual = max_abs(&(&a_tilde * h - h * a));
    if residual > tol.identity * linalg::norm_inf(a).max(1.0) {
        return Err(Error::IntertwiningViolated { sensor, residual });
    }
    Ok((a_tilde, c_tilde))
}

pub fn decompose_sensor(modal: &ModalSystem, sensor: usize, tol: &Tolerances) -> Result<SensorDecomposition> {
    let c_row = modal.c.rows(sensor, 1).into_owned();
    let observability = observability_matrix(&modal.a, &c_row);
    let observed = observed_index_set(&observability, tol);
    let h = selector(&observed, modal.n());
    let (a_tilde, c_tilde) = reduced_pair(&modal.a, &c_row, &h, sensor, tol)?;
    Ok(SensorDecomposition { sensor, observability, observed, selector: h, a_tilde, c_tilde })
}

pub fn decompose_all(modal: &ModalSystem, tol: &Tolerances) -> Result<Vec<SensorDecomposition>> {
    (0..modal.m()).map(|i| decompose_sensor(modal, i, tol)).collect()
}

/// For each modal state `j`, the sensors observing it together with the
/// position of `j` in each sensor's local state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageIndex {
    members: Vec<Vec<(usize, usize)>>,
}

impl CoverageIndex {
    pub fn new(n: usize, decs: &[SensorDecomposition]) -> Self {
        let sets: Vec<&[usize]> = decs.iter().map(|d| d.observed.as_slice()).collect();
        Self::from_index_sets(n, &sets)
    }

    /// Builds the index from raw observed-state sets, one per sensor.
    pub fn from_index_sets<S: AsRef<[usize]>>(n: usize, sets: &[S]) -> Self {
        let mut members = vec![Vec::new(); n];
        for (i, q) in sets.iter().enumerate() {
            for (pos, &j) in q.as_ref().iter().enumerate() {
                members[j].push((i, pos));
            }
        }
        Self { members }
    }

    pub fn n(&self) -> usize {
        self.members.len()
    }

    /// `(sensor, position)` pairs covering state `j`.
    pub fn members(&self, j: usize) -> &[(usize, usize)] {
        &self.members[j]
    }

    pub fn counts(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.n()).filter(|&j| self.members[j].is_empty()).collect()
    }

    /// `min_j |S_j| - 1`, or `None` when some state is not covered.
    pub fn redundancy(&self) -> Option<usize> {
        self.counts().into_iter().min().and_then(|c| c.checked_sub(1))
    }
}

/// Largest `s` for which the system stays observable after removing any `s` sensors.
pub fn sparse_observability_index(coverage: &CoverageIndex) -> Result<usize> {
    coverage
        .redundancy()
        .ok_or_else(|| Error::NotObservable { uncovered: coverage.uncovered() })
}

/// Exhaustive subset-rank computation of the sparse observability index.
/// Exponential in `m`; intended for small systems and cross-checks.
pub fn sparse_observability_brute_force(a: &CMatrix, c: &CMatrix, tol: &Tolerances) -> Option<usize> {
    let m = c.nrows();
    let mut best = None;
    for s in 0..m {
        let all_ok = subsets(m, s).all(|removed| {
            let keep: Vec<usize> = (0..m).filter(|i| !removed.contains(i)).collect();
            stacked_rank(a, c, &keep, tol) == a.nrows()
        });
        if !all_ok {
            break;
        }
        best = Some(s);
    }
    best
}

fn stacked_rank(a: &CMatrix, c: &CMatrix, rows: &[usize], tol: &Tolerances) -> usize {
    let n = a.nrows();
    if rows.is_empty() {
        return 0;
    }
    let mut stacked = CMatrix::zeros(rows.len() * n, n);
    let mut block = c.select_rows(rows);
    for k in 0..n {
        stacked.rows_mut(k * rows.len(), rows.len()).copy_from(&block);
        block = &block * a;
    }
    linalg::numerical_rank(&stacked, tol.zero)
}

fn subsets(m: usize, s: usize) -> impl Iterator<Item = Vec<usize>> {
    let mut idx: Vec<usize> = (0..s).collect();
    let mut done = s > m;
    std::iter::from_fn(move || {
        if done {
            return None;
        }
        let out = idx.clone();
        // advance to the next combination in lexicographic order
        let mut k = s;
        loop {
            if k == 0 {
                done = true;
                break;
            }
            k -= 1;
            if idx[k] < m - s + k {
                idx[k] += 1;
                for r in k + 1..s {
                    idx[r] = idx[r - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub sensor: usize,
    pub intertwining_residual: f64,
    pub output_residual: f64,
    pub intertwining: bool,
    pub output_identity: bool,
    pub projection: bool,
    /// Hautus test on the reduced pair, equivalent to `rank(O_i H_i') = n_i`.
    pub full_column_rank: bool,
    /// Singular-value rank of `O_i H_i'`; can undershoot for clustered spectra.
    pub numerical_rank: usize,
    pub dim: usize,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.intertwining && self.output_identity && self.projection && self.full_column_rank
    }
}

pub fn verify_decomposition(dec: &SensorDecomposition, modal: &ModalSystem, tol: &Tolerances) -> CheckReport {
    let n = modal.n();
    let h = &dec.selector;
    let scale = linalg::norm_inf(&modal.a).max(1.0);
    let limit = tol.identity * scale;

    let intertwining_residual = if h.nrows() == 0 {
        0.0
    } else {
        max_abs(&(&dec.a_tilde * h - h * &modal.a))
    };
    let c_row = modal.c.rows(dec.sensor, 1).into_owned();
    let output_residual = if h.nrows() == 0 {
        max_abs(&c_row)
    } else {
        max_abs(&(&dec.c_tilde * h - &c_row))
    };

    let proj = h.adjoint() * h;
    let projection = (0..n).all(|j| {
        let col = proj.column(j);
        let target = if dec.observed.contains(&j) { 1.0 } else { 0.0 };
        (0..n).all(|r| {
            let want = if r == j { target } else { 0.0 };
            (col[r].re - want).abs() <= tol.identity && col[r].im.abs() <= tol.identity
        })
    });

    let o_reduced = &dec.observability * h.adjoint();
    let numerical_rank = if dec.dim() == 0 { 0 } else { linalg::numerical_rank(&o_reduced, tol.identity) };

    CheckReport {
        sensor: dec.sensor,
        intertwining_residual,
        output_residual,
        intertwining: intertwining_residual <= limit,
        output_identity: output_residual <= limit,
        projection,
        full_column_rank: hautus_observable(&dec.a_tilde, &dec.c_tilde, tol),
        numerical_rank,
        dim: dec.dim(),
    }
}

/// PBH test: `rank [A - mu I; C] = n` for every eigenvalue `mu` of the
/// (upper triangular) matrix `a`.
pub fn hautus_observable(a: &CMatrix, c: &CMatrix, tol: &Tolerances) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let eigen = crate::model::eigenvalues(a, tol);
    eigen.iter().all(|&mu| {
        let mut stacked = CMatrix::zeros(n + c.nrows(), n);
        stacked.rows_mut(0, n).copy_from(&(a - CMatrix::identity(n, n) * mu));
        stacked.rows_mut(n, c.nrows()).copy_from(c);
        linalg::numerical_rank(&stacked, tol.zero) == n
    })
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
