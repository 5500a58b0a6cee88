//! Dense eigen-solvers on top of nalgebra: Schur eigenvalues, complex inverse
//! iteration for eigenvectors, and symmetric spectral helpers for Gram matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const SCHUR_EPS: f64 = f64::EPSILON;
const MAX_ITER: usize = 100_000;

/// Eigenvalues of a general real matrix sorted by modulus (descending); ties
/// are broken by imaginary then real part, both descending.
pub fn eigenvalues_sorted(m: &DMatrix<f64>) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::shape("square matrix", format!("{:?}", m.shape())));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let schur = m
        .clone()
        .try_schur(SCHUR_EPS, MAX_ITER)
        .ok_or_else(|| Error::InvalidInput("Schur iteration did not converge".into()))?;
    let mut ev: Vec<C64> = schur.complex_eigenvalues().iter().copied().collect();
    sort_by_modulus(&mut ev);
    Ok(ev)
}

pub fn sort_by_modulus(ev: &mut [C64]) {
    ev.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.im.total_cmp(&a.im))
            .then(b.re.total_cmp(&a.re))
    });
}

/// Unit-norm eigenvector of `m` for the (already computed) eigenvalue `mu`,
/// by shifted inverse iteration. The largest-modulus entry is made real
/// positive so the result is deterministic.
pub fn eigenvector(m: &DMatrix<f64>, mu: C64) -> Result<DVector<C64>> {
    let n = m.nrows();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    let mc: DMatrix<C64> = m.map(|v| C64::new(v, 0.0));
    // Deterministic, generic start vector.
    let start = DVector::from_fn(n, |i, _| C64::new(1.0 + 0.1 * (i as f64).sin(), 0.05 * (i as f64 + 1.0).cos()));

    for shift_exp in [-10.0, -8.0, -6.0] {
        let shift = mu + C64::new(10f64.powf(shift_exp) * scale, 0.0);
        let mut a = mc.clone();
        for i in 0..n {
            a[(i, i)] -= shift;
        }
        let lu = a.lu();
        let mut v = start.clone();
        let mut ok = true;
        for _ in 0..4 {
            match lu.solve(&v) {
                Some(w) if w.iter().all(|c| c.re.is_finite() && c.im.is_finite()) => {
                    let norm = w.norm();
                    if norm == 0.0 || !norm.is_finite() {
                        ok = false;
                        break;
                    }
                    v = w / C64::new(norm, 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(fix_phase(v));
        }
    }
    Err(Error::InvalidInput(format!("inverse iteration failed for eigenvalue {mu}")))
}

/// Rotate so the largest-modulus entry is real positive.
pub fn fix_phase(mut v: DVector<C64>) -> DVector<C64> {
    let mut best = 0;
    let mut best_norm = -1.0;
    for (i, c) in v.iter().enumerate() {
        // Strict comparison with a relative margin keeps the anchor stable
        // under round-off when two entries have nearly equal modulus.
        if c.norm() > best_norm * (1.0 + 1e-9) {
            best = i;
            best_norm = c.norm();
        }
    }
    if best_norm > 0.0 {
        let phase = v[best] / C64::new(v[best].norm(), 0.0);
        let rot = phase.conj();
        v.iter_mut().for_each(|c| *c *= rot);
        v[best] = C64::new(v[best].re, 0.0);
    }
    v
}

/// `‖m v − mu v‖₂` for a candidate eigenpair.
pub fn eigen_residual(m: &DMatrix<f64>, mu: C64, v: &DVector<C64>) -> f64 {
    let mc: DMatrix<C64> = m.map(|x| C64::new(x, 0.0));
    (&mc * v - v * mu).norm()
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if !m.is_square() {
        return Err(Error::shape("square matrix", format!("{:?}", m.shape())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, SCHUR_EPS, MAX_ITER)
        .ok_or_else(|| Error::InvalidInput("symmetric eigen iteration did not converge".into()))?;
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_fn(n, |i, _| eig.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(n, n);
    for (j, &src) in order.iter().enumerate() {
        vectors.set_column(j, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// 2-norm condition number of a symmetric PSD matrix; infinite when singular.
pub fn condition_number_sym(m: &DMatrix<f64>) -> Result<f64> {
    let (values, _) = symmetric_eigen_desc(m)?;
    let n = values.len();
    if n == 0 {
        return Ok(1.0);
    }
    let hi = values[0];
    let lo = values[n - 1];
    if lo <= 0.0 || hi <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(hi / lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rotation_matrix_eigenpairs() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let ev = eigenvalues_sorted(&m).unwrap();
        assert_abs_diff_eq!(ev[0].im, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ev[1].im, -1.0, epsilon = 1e-12);
        for mu in ev {
            let v = eigenvector(&m, mu).unwrap();
            assert!(eigen_residual(&m, mu, &v) < 1e-10);
        }
    }

    #[test]
    fn clustered_eigenvalues_resolve() {
        // Near-identity operators are the typical K̂ = I + dt·M.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1e-3, 0.0, 0.0, 0.9999, 2e-4, 1e-5, 0.0, 0.9990]);
        let ev = eigenvalues_sorted(&m).unwrap();
        for mu in ev {
            let v = eigenvector(&m, mu).unwrap();
            assert!(eigen_residual(&m, mu, &v) < 1e-10);
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn phase_anchor_is_real_positive() {
        let v = DVector::from_vec(vec![C64::new(0.0, -2.0), C64::new(1.0, 0.0)]);
        let w = fix_phase(v);
        assert_abs_diff_eq!(w[0].re, 2.0, epsilon = 1e-15);
        assert_eq!(w[0].im, 0.0);
        assert_abs_diff_eq!(w[1].im, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn condition_number_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 0.5]));
        assert_abs_diff_eq!(condition_number_sym(&m).unwrap(), 8.0, epsilon = 1e-12);
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        assert!(condition_number_sym(&s).unwrap().is_infinite());
    }
}
