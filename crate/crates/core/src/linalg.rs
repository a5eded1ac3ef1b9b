//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, DMatrix, DVector};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

pub fn to_complex_vec(v: &DVector<f64>) -> CVector {
    v.map(|x| C64::new(x, 0.0))
}

/// Maximum absolute row sum.
pub fn norm_inf(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest real-or-imaginary magnitude over all entries; the per-part
/// infinity norm used for complex error bounds.
pub fn part_norm_inf(v: &CVector) -> f64 {
    v.iter().map(|z| z.re.abs().max(z.im.abs())).fold(0.0, f64::max)
}

pub fn max_imag(v: &CVector) -> f64 {
    v.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
}

pub fn is_real(m: &CMatrix) -> bool {
    m.iter().all(|z| z.im == 0.0)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn sigma_max(m: &CMatrix) -> f64 {
    match m.nrows().min(m.ncols()) {
        0 => 0.0,
        1 => m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt(),
        _ => singular_values(m).first().copied().unwrap_or(0.0),
    }
}

/// Number of singular values above `rel_tol * max(1, sigma_max)`.
pub fn numerical_rank(m: &CMatrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    let Some(&top) = s.first() else { return 0 };
    let cut = rel_tol * top.max(1.0);
    s.iter().filter(|&&x| x > cut).count()
}

pub fn condition_number(m: &CMatrix) -> f64 {
    let s = singular_values(m);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

/// Unit right singular vector associated with the smallest singular value of a square matrix.
pub fn null_vector(m: &CMatrix) -> CVector {
    let n = m.ncols();
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
    let mut v = CVector::zeros(n);
    for j in 0..n {
        v[j] = v_t[(idx, j)].conj();
    }
    v
}

/// Scale a vector to unit 2-norm and rotate its phase so the entry of
/// largest modulus (first one on ties) is real and positive.
pub fn normalize_phase(v: &mut CVector) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    let mut best = 0;
    for (i, z) in v.iter().enumerate() {
        if z.norm() > v[best].norm() * (1.0 + 1e-12) {
            best = i;
        }
    }
    let phase = v[best] / C64::new(v[best].norm(), 0.0);
    let scale = phase.conj() / C64::new(norm, 0.0);
    for z in v.iter_mut() {
        *z *= scale;
    }
}

/// Median of a non-empty slice; even counts return the midpoint of the two
/// central order statistics. The slice is reordered.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty set");
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
