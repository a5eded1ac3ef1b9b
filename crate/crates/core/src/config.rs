//! Numerical tolerances shared by every module.

/// Global tolerance set. A value is treated as zero when its modulus is
/// below `zero * max(1, ||M||_inf)` for the matrix it belongs to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub zero: f64,
    /// Upper limit on the eigenvector-matrix condition number in diagonalize mode.
    pub condition_limit: f64,
    /// Two eigenvalues closer than `eigen_cluster * max(1, |lambda|)` count as repeated.
    pub eigen_cluster: f64,
    /// Acceptable imaginary residue of physical-coordinate outputs.
    pub realness: f64,
    /// Residual allowed on structural identities (intertwining, output, projection).
    pub identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            zero: 1e-9,
            condition_limit: 1e8,
            eigen_cluster: 1e-7,
            realness: 1e-6,
            identity: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn with_zero(mut self, zero: f64) -> Self {
        self.zero = zero;
        self
    }

    /// Absolute threshold for "zero" entries of a matrix with the given infinity norm.
    pub fn zero_for(&self, norm_inf: f64) -> f64 {
        self.zero * norm_inf.max(1.0)
    }
}
