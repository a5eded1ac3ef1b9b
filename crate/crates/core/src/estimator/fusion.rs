//! Resilient fusion: `min_x sum_i ||eta_i - H_i x||_1`, solved coordinate-wise.
//!
//! The objective separates over modal states, and for complex entries the
//! per-entry magnitude is `|Re| + |Im|`, so it further separates into real and
//! imaginary parts. Each part is minimized by the median of the candidate
//! values from the sensors covering that state.

use crate::error::{Error, Result};
use crate::linalg::{self, CVector, C64};
use crate::subspace::CoverageIndex;

#[derive(Debug, Clone, PartialEq)]
pub struct ModalFusion {
    pub x_hat: CVector,
    pub objective: f64,
}

/// Per-coordinate median fusion of local estimates. `etas[i]` is sensor `i`'s
/// local state, ordered like its observed index set.
pub fn fuse(etas: &[CVector], coverage: &CoverageIndex) -> Result<ModalFusion> {
    let uncovered = coverage.uncovered();
    if !uncovered.is_empty() {
        return Err(Error::EmptyCoverage(uncovered));
    }
    let n = coverage.n();
    let mut x_hat = CVector::zeros(n);
    let mut re = Vec::new();
    let mut im = Vec::new();
    for j in 0..n {
        re.clear();
        im.clear();
        for &(i, pos) in coverage.members(j) {
            let z = etas[i][pos];
            re.push(z.re);
            im.push(z.im);
        }
        x_hat[j] = C64::new(linalg::median(&mut re), linalg::median(&mut im));
    }
    let objective = objective(etas, coverage, &x_hat);
    Ok(ModalFusion { x_hat, objective })
}

/// `sum_i sum_{j in Q_i} |Re r| + |Im r|` with `r = eta_i[pos_i(j)] - x_j`.
pub fn objective(etas: &[CVector], coverage: &CoverageIndex, x_hat: &CVector) -> f64 {
    let mut total = 0.0;
    for j in 0..coverage.n() {
        for &(i, pos) in coverage.members(j) {
            let r = etas[i][pos] - x_hat[j];
            total += r.re.abs() + r.im.abs();
        }
    }
    total
}
