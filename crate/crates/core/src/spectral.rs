//! Network matrix `M = diag(z) - J`, its smallest eigenvalue and dense eigen-solvers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::economy::Economy;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NetworkMatrix {
    pub m: DMatrix<f64>,
    /// Smallest real part of the spectrum of `m`.
    pub eps: f64,
}

pub fn network_matrix(econ: &Economy) -> NetworkMatrix {
    let m = network_matrix_raw(econ);
    let eps = min_real_eigenvalue(&m);
    NetworkMatrix { m, eps }
}

/// `diag(z) - J` without the spectrum.
pub fn network_matrix_raw(econ: &Economy) -> DMatrix<f64> {
    let mut m = -econ.firm_block();
    for i in 0..econ.n() {
        m[(i, i)] += econ.z[i];
    }
    m
}

/// Shifts every productivity so that the smallest eigenvalue of `M` equals `eps_target`.
pub fn calibrate_epsilon(econ: &Economy, eps_target: f64) -> Result<Economy> {
    if !eps_target.is_finite() {
        return Err(Error::InvalidParameter(format!("target eps must be finite, got {eps_target}")));
    }
    let current = network_matrix(econ).eps;
    let shift = eps_target - current;
    let z: DVector<f64> = econ.z.map(|x| x + shift);
    if let Some((index, &value)) = z.iter().enumerate().find(|(_, x)| **x <= 0.0) {
        return Err(Error::NonPositiveProductivity { index, value });
    }
    econ.with_productivities(z)
}

/// M-matrix condition: every eigenvalue of `M` has positive real part.
pub fn hawkins_simon_check(nm: &NetworkMatrix) -> bool {
    nm.eps > 0.0
}

pub fn min_real_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m).iter().map(|c| c.re).fold(f64::INFINITY, f64::min)
}

/// Full spectrum of a real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    assert_eq!(m.nrows(), m.ncols(), "eigenvalues of a non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    match fm.eigenvalues() {
        Ok(ev) => ev.into_iter().map(|c| Complex64::new(c.re, c.im)).collect(),
        Err(_) => m.complex_eigenvalues().iter().map(|c| Complex64::new(c.re, c.im)).collect(),
    }
}

/// Spectrum of a real symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let fm = faer::Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let mut ev: Vec<f64> = match fm.self_adjoint_eigenvalues(faer::Side::Lower) {
        Ok(v) => v,
        Err(_) => m.clone().symmetric_eigenvalues().iter().copied().collect(),
    };
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}
