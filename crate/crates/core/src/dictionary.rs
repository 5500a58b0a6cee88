//! Observable dictionaries `{ψ₁, …, ψ_N}` with first and second input
//! derivatives, and their images under the SDE generator
//! `Aψ = b·∇ψ + ½ tr(σσᵀ ∇²ψ)`.
//!
//! Column 0 of every dictionary is the constant function 1.

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{relative_error, Mlp, MlpCheckpoint};
use crate::sde::{Domain, SdeSystem};

/// Rows above which evaluation is split across the rayon pool.
const PAR_ROWS: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    Rbf,
    Monomial,
    Hermite,
    Trainable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyFamily {
    Monomial,
    /// Probabilists' Hermite polynomials `He_n`.
    Hermite,
}

#[derive(Clone, Debug, PartialEq)]
enum Basis {
    Rbf {
        /// `n_c × d`
        centers: DMatrix<f64>,
        bandwidth: Vec<f64>,
    },
    Poly {
        family: PolyFamily,
        max_degree: usize,
        /// Graded multi-indices, the zero index first.
        exponents: Vec<Vec<usize>>,
    },
    Trainable {
        net: Mlp,
        include_state: bool,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    dim: usize,
    basis: Basis,
}

/// Values, gradients and Hessians of every basis function at one point.
#[derive(Clone, Debug)]
pub struct PointJet {
    pub value: Vec<f64>,
    /// `N × d`
    pub grad: DMatrix<f64>,
    /// Row `j`, column `p·d + q` holds `∂²ψ_j/∂x_p∂x_q`.
    pub hess: DMatrix<f64>,
}

/// All multi-indices of total degree ≤ `max_degree`, ordered by degree and
/// then with the first variable's exponent descending.
pub fn graded_exponents(dim: usize, max_degree: usize) -> Vec<Vec<usize>> {
    fn fill(dim: usize, remaining: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if prefix.len() + 1 == dim {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            fill(dim, remaining - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    for degree in 0..=max_degree {
        fill(dim, degree, &mut Vec::new(), &mut out);
    }
    out
}

/// `(p_k(x), p_k'(x), p_k''(x))` for `k = 0..=n`.
fn poly_table(family: PolyFamily, x: f64, n: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut v = vec![0.0; n + 1];
    v[0] = 1.0;
    if n >= 1 {
        v[1] = x;
    }
    for k in 1..n {
        v[k + 1] = match family {
            PolyFamily::Monomial => x * v[k],
            PolyFamily::Hermite => x * v[k] - k as f64 * v[k - 1],
        };
    }
    // d/dx x^k = k x^{k-1} and d/dx He_k = k He_{k-1}: both families share
    // the Appell property, so derivatives reuse the value table.
    let d1: Vec<f64> = (0..=n).map(|k| if k == 0 { 0.0 } else { k as f64 * v[k - 1] }).collect();
    let d2: Vec<f64> = (0..=n)
        .map(|k| if k < 2 { 0.0 } else { (k * (k - 1)) as f64 * v[k - 2] })
        .collect();
    (v, d1, d2)
}

impl Dictionary {
    /// Gaussian RBFs `exp(−Σ (x_p − c_p)² / (2 h_p²))` plus the constant.
    pub fn rbf(centers: DMatrix<f64>, bandwidth: Vec<f64>) -> Result<Self> {
        let dim = centers.ncols();
        if dim == 0 || centers.nrows() == 0 {
            return Err(Error::InvalidInput("RBF dictionary needs at least one center".into()));
        }
        if bandwidth.len() != dim {
            return Err(Error::shape(format!("{dim} bandwidths"), format!("{}", bandwidth.len())));
        }
        if bandwidth.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
            return Err(Error::InvalidInput(format!("RBF bandwidths must be positive, got {bandwidth:?}")));
        }
        Ok(Self {
            dim,
            basis: Basis::Rbf { centers, bandwidth },
        })
    }

    /// Centers at the midpoints of a uniform `per_axis^d` grid over `domain`;
    /// bandwidth defaults to the grid spacing on each axis.
    pub fn rbf_grid(domain: &Domain, per_axis: usize, bandwidth: Option<Vec<f64>>) -> Result<Self> {
        if per_axis == 0 {
            return Err(Error::InvalidInput("RBF grid needs at least one center per axis".into()));
        }
        let d = domain.dim();
        let spacing: Vec<f64> = (0..d).map(|i| domain.width(i) / per_axis as f64).collect();
        let n_c = per_axis.pow(d as u32);
        let mut centers = DMatrix::zeros(n_c, d);
        for c in 0..n_c {
            let mut rest = c;
            // First axis varies slowest.
            for axis in (0..d).rev() {
                let idx = rest % per_axis;
                rest /= per_axis;
                centers[(c, axis)] = domain.lower[axis] + (idx as f64 + 0.5) * spacing[axis];
            }
        }
        Dictionary::rbf(centers, bandwidth.unwrap_or(spacing))
    }

    pub fn monomial(dim: usize, max_degree: usize) -> Result<Self> {
        Dictionary::poly(PolyFamily::Monomial, dim, max_degree)
    }

    pub fn hermite(dim: usize, max_degree: usize) -> Result<Self> {
        Dictionary::poly(PolyFamily::Hermite, dim, max_degree)
    }

    fn poly(family: PolyFamily, dim: usize, max_degree: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("polynomial dictionary needs dim ≥ 1".into()));
        }
        Ok(Self {
            dim,
            basis: Basis::Poly {
                family,
                max_degree,
                exponents: graded_exponents(dim, max_degree),
            },
        })
    }

    /// `[1, x (optional), net(x)]`. Only the network part is trainable.
    pub fn trainable(net: Mlp, include_state: bool) -> Self {
        Self {
            dim: net.input_dim(),
            basis: Basis::Trainable { net, include_state },
        }
    }

    pub fn kind(&self) -> DictionaryKind {
        match &self.basis {
            Basis::Rbf { .. } => DictionaryKind::Rbf,
            Basis::Poly {
                family: PolyFamily::Monomial,
                ..
            } => DictionaryKind::Monomial,
            Basis::Poly {
                family: PolyFamily::Hermite,
                ..
            } => DictionaryKind::Hermite,
            Basis::Trainable { .. } => DictionaryKind::Trainable,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of basis functions `N`, constant included.
    pub fn size(&self) -> usize {
        match &self.basis {
            Basis::Rbf { centers, .. } => 1 + centers.nrows(),
            Basis::Poly { exponents, .. } => exponents.len(),
            Basis::Trainable { net, include_state } => 1 + if *include_state { self.dim } else { 0 } + net.output_dim(),
        }
    }

    /// Index of the first trainable column.
    pub fn trainable_offset(&self) -> Option<usize> {
        match &self.basis {
            Basis::Trainable { include_state, .. } => Some(1 + if *include_state { self.dim } else { 0 }),
            _ => None,
        }
    }

    pub fn net(&self) -> Option<&Mlp> {
        match &self.basis {
            Basis::Trainable { net, .. } => Some(net),
            _ => None,
        }
    }

    pub fn net_mut(&mut self) -> Option<&mut Mlp> {
        match &mut self.basis {
            Basis::Trainable { net, .. } => Some(net),
            _ => None,
        }
    }

    fn check_points(&self, points: &DMatrix<f64>) -> Result<()> {
        if points.ncols() != self.dim {
            return Err(Error::shape(format!("points of dim {}", self.dim), format!("{}", points.ncols())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("points contain non-finite values".into()));
        }
        Ok(())
    }

    fn values_at(&self, x: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        match &self.basis {
            Basis::Rbf { centers, bandwidth } => {
                for c in 0..centers.nrows() {
                    let mut r2 = 0.0;
                    for p in 0..self.dim {
                        let u = (x[p] - centers[(c, p)]) / bandwidth[p];
                        r2 += u * u;
                    }
                    out[1 + c] = (-0.5 * r2).exp();
                }
            }
            Basis::Poly {
                family,
                max_degree,
                exponents,
            } => {
                let tables: Vec<Vec<f64>> = x.iter().map(|&xi| poly_table(*family, xi, *max_degree).0).collect();
                for (j, e) in exponents.iter().enumerate() {
                    out[j] = e.iter().enumerate().map(|(p, &k)| tables[p][k]).product();
                }
            }
            Basis::Trainable { net, include_state } => {
                let mut col = 1;
                if *include_state {
                    out[1..1 + self.dim].copy_from_slice(x);
                    col += self.dim;
                }
                // Shapes were validated by the caller.
                let y = net.forward_row(x).expect("validated input width");
                out[col..].copy_from_slice(&y);
            }
        }
    }

    /// `[Ψ]_ij = ψ_j(x_i)`, an `m × N` matrix.
    pub fn evaluate(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_points(points)?;
        let n = self.size();
        let m = points.nrows();
        if let Basis::Trainable { net, include_state } = &self.basis {
            // Batched forward pass is much faster than row-by-row.
            let y = net.forward(points)?;
            let mut out = DMatrix::zeros(m, n);
            out.column_mut(0).fill(1.0);
            let mut col = 1;
            if *include_state {
                out.columns_mut(1, self.dim).copy_from(points);
                col += self.dim;
            }
            out.columns_mut(col, y.ncols()).copy_from(&y);
            return Ok(out);
        }
        let rows = self.map_rows(points, |x, out| self.values_at(x, out));
        Ok(assemble(rows, m, n))
    }

    fn map_rows<F>(&self, points: &DMatrix<f64>, f: F) -> Vec<Vec<f64>>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        let n = self.size();
        let row = |i: usize| {
            let x: Vec<f64> = points.row(i).iter().copied().collect();
            let mut out = vec![0.0; n];
            f(&x, &mut out);
            out
        };
        if points.nrows() >= PAR_ROWS {
            (0..points.nrows()).into_par_iter().map(row).collect()
        } else {
            (0..points.nrows()).map(row).collect()
        }
    }

    /// Values, gradients and Hessians at a single point.
    pub fn jet(&self, x: &[f64]) -> Result<PointJet> {
        let d = self.dim;
        if x.len() != d {
            return Err(Error::shape(format!("point of length {d}"), format!("{}", x.len())));
        }
        let n = self.size();
        let mut value = vec![0.0; n];
        let mut grad = DMatrix::zeros(n, d);
        let mut hess = DMatrix::zeros(n, d * d);
        match &self.basis {
            Basis::Rbf { centers, bandwidth } => {
                value[0] = 1.0;
                let mut u = vec![0.0; d];
                for c in 0..centers.nrows() {
                    let mut r2 = 0.0;
                    for p in 0..d {
                        let diff = x[p] - centers[(c, p)];
                        r2 += diff * diff / (bandwidth[p] * bandwidth[p]);
                        u[p] = diff / (bandwidth[p] * bandwidth[p]);
                    }
                    let psi = (-0.5 * r2).exp();
                    let j = 1 + c;
                    value[j] = psi;
                    for p in 0..d {
                        grad[(j, p)] = -psi * u[p];
                        for q in 0..d {
                            let diag = if p == q { 1.0 / (bandwidth[p] * bandwidth[p]) } else { 0.0 };
                            hess[(j, p * d + q)] = psi * (u[p] * u[q] - diag);
                        }
                    }
                }
            }
            Basis::Poly {
                family,
                max_degree,
                exponents,
            } => {
                let tables: Vec<_> = x.iter().map(|&xi| poly_table(*family, xi, *max_degree)).collect();
                for (j, e) in exponents.iter().enumerate() {
                    let prod_except = |skip: &[usize]| -> f64 {
                        (0..d)
                            .filter(|i| !skip.contains(i))
                            .map(|i| tables[i].0[e[i]])
                            .product()
                    };
                    value[j] = prod_except(&[]);
                    for p in 0..d {
                        grad[(j, p)] = tables[p].1[e[p]] * prod_except(&[p]);
                        for q in 0..d {
                            hess[(j, p * d + q)] = if p == q {
                                tables[p].2[e[p]] * prod_except(&[p])
                            } else {
                                tables[p].1[e[p]] * tables[q].1[e[q]] * prod_except(&[p, q])
                            };
                        }
                    }
                }
            }
            Basis::Trainable { net, include_state } => {
                value[0] = 1.0;
                let mut col = 1;
                if *include_state {
                    for p in 0..d {
                        value[1 + p] = x[p];
                        grad[(1 + p, p)] = 1.0;
                    }
                    col += d;
                }
                let jet = net.input_jet(x)?;
                for k in 0..net.output_dim() {
                    value[col + k] = jet.value[k];
                    for p in 0..d {
                        grad[(col + k, p)] = jet.jacobian[(k, p)];
                    }
                    for c in 0..d * d {
                        hess[(col + k, c)] = jet.hessian_flat[(k, c)];
                    }
                }
            }
        }
        Ok(PointJet { value, grad, hess })
    }

    /// `[AΨ]_ij = (Aψ_j)(x_i)` using the system's drift and diffusion.
    pub fn generator_apply(&self, system: &SdeSystem, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_points(points)?;
        if system.dim() != self.dim {
            return Err(Error::shape(format!("system of dim {}", self.dim), format!("{}", system.dim())));
        }
        let d = self.dim;
        let n = self.size();
        let m = points.nrows();
        // All built-in systems have additive noise, so σσᵀ is evaluated once.
        let constant_tensor = system
            .has_additive_noise()
            .then(|| system.diffusion_tensor(&vec![0.0; d]));
        let row = |i: usize| -> Result<Vec<f64>> {
            let x: Vec<f64> = points.row(i).iter().copied().collect();
            let jet = self.jet(&x)?;
            let b = system.drift(&x);
            let tensor = match &constant_tensor {
                Some(t) => t.clone(),
                None => system.diffusion_tensor(&x),
            };
            let mut out = vec![0.0; n];
            for (j, o) in out.iter_mut().enumerate().skip(1) {
                let acc: f64 = b.iter().enumerate().map(|(p, bp)| bp * jet.grad[(j, p)]).sum();
                let mut second = 0.0;
                for p in 0..d {
                    for q in 0..d {
                        second += tensor[(p, q)] * jet.hess[(j, p * d + q)];
                    }
                }
                *o = acc + 0.5 * second;
            }
            Ok(out)
        };
        let rows: Vec<Vec<f64>> = if m >= PAR_ROWS {
            (0..m).into_par_iter().map(row).collect::<Result<_>>()?
        } else {
            (0..m).map(row).collect::<Result<_>>()?
        };
        Ok(assemble(rows, m, n))
    }

    /// Analytic gradient/Hessian against central finite differences of the
    /// values (steps 1e-5 and 1e-4 respectively).
    pub fn derivative_check(&self, point: &[f64], tolerance: f64) -> Result<DerivativeReport> {
        let d = self.dim;
        let jet = self.jet(point)?;
        let n = self.size();
        let eval = |x: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            self.values_at(x, &mut out);
            out
        };
        let hg = 1e-5;
        let hh = 1e-4;
        let mut grad_err = 0.0f64;
        let mut hess_err = 0.0f64;
        for p in 0..d {
            let mut up = point.to_vec();
            let mut dn = point.to_vec();
            up[p] += hg;
            dn[p] -= hg;
            let (fu, fd) = (eval(&up), eval(&dn));
            for j in 0..n {
                grad_err = grad_err.max(relative_error(jet.grad[(j, p)], (fu[j] - fd[j]) / (2.0 * hg)));
            }
            for q in 0..d {
                let shifted = |sp: f64, sq: f64| {
                    let mut x = point.to_vec();
                    x[p] += sp;
                    x[q] += sq;
                    eval(&x)
                };
                let (pp, pm, mp, mm) = (shifted(hh, hh), shifted(hh, -hh), shifted(-hh, hh), shifted(-hh, -hh));
                for j in 0..n {
                    let numeric = (pp[j] - pm[j] - mp[j] + mm[j]) / (4.0 * hh * hh);
                    hess_err = hess_err.max(relative_error(jet.hess[(j, p * d + q)], numeric));
                }
            }
        }
        let max_rel_error = grad_err.max(hess_err);
        Ok(DerivativeReport {
            gradient_error: grad_err,
            hessian_error: hess_err,
            max_rel_error,
            passed: max_rel_error < tolerance,
        })
    }

    pub fn to_file(&self) -> DictionaryFile {
        match &self.basis {
            Basis::Rbf { centers, bandwidth } => DictionaryFile {
                kind: DictionaryKind::Rbf,
                dim: self.dim,
                centers: Some((0..centers.nrows()).map(|r| centers.row(r).iter().copied().collect()).collect()),
                bandwidth: Some(bandwidth.clone()),
                max_degree: None,
                include_state: None,
                net: None,
            },
            Basis::Poly { max_degree, .. } => DictionaryFile {
                kind: self.kind(),
                dim: self.dim,
                centers: None,
                bandwidth: None,
                max_degree: Some(*max_degree),
                include_state: None,
                net: None,
            },
            Basis::Trainable { net, include_state } => DictionaryFile {
                kind: DictionaryKind::Trainable,
                dim: self.dim,
                centers: None,
                bandwidth: None,
                max_degree: None,
                include_state: Some(*include_state),
                net: Some(net.to_checkpoint()),
            },
        }
    }

    pub fn from_file(file: &DictionaryFile) -> Result<Self> {
        let missing = |what: &str| Error::Config(format!("dictionary file lacks `{what}`"));
        match file.kind {
            DictionaryKind::Rbf => {
                let rows = file.centers.as_ref().ok_or_else(|| missing("centers"))?;
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                if rows.iter().any(|r| r.len() != file.dim) {
                    return Err(Error::Config("RBF center of wrong dimension".into()));
                }
                let centers = DMatrix::from_row_slice(rows.len(), file.dim, &flat);
                Dictionary::rbf(centers, file.bandwidth.clone().ok_or_else(|| missing("bandwidth"))?)
            }
            DictionaryKind::Monomial => Dictionary::monomial(file.dim, file.max_degree.ok_or_else(|| missing("max_degree"))?),
            DictionaryKind::Hermite => Dictionary::hermite(file.dim, file.max_degree.ok_or_else(|| missing("max_degree"))?),
            DictionaryKind::Trainable => {
                let net = Mlp::from_checkpoint(file.net.as_ref().ok_or_else(|| missing("net"))?)?;
                if net.input_dim() != file.dim {
                    return Err(Error::ArchitectureMismatch("network input width differs from dim".into()));
                }
                Ok(Dictionary::trainable(net, file.include_state.unwrap_or(true)))
            }
        }
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file())?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Dictionary::from_file(&serde_json::from_str(&text)?)
    }
}

fn assemble(rows: Vec<Vec<f64>>, m: usize, n: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m, n);
    for (i, r) in rows.into_iter().enumerate() {
        for (j, v) in r.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// `(Ψ_Y − Ψ_X) / dt`, the data-pair surrogate for `AΨ`.
pub fn finite_diff_generator(psi_x: &DMatrix<f64>, psi_y: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    if psi_x.shape() != psi_y.shape() {
        return Err(Error::shape(format!("{:?}", psi_x.shape()), format!("{:?}", psi_y.shape())));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    Ok((psi_y - psi_x) / dt)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub gradient_error: f64,
    pub hessian_error: f64,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// On-disk form of a built dictionary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DictionaryFile {
    pub kind: DictionaryKind,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub include_state: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<MlpCheckpoint>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Activation;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn monomial_evaluation() {
        let d = Dictionary::monomial(1, 1).unwrap();
        let psi = d.evaluate(&col(&[0.0, 1.0, 2.0])).unwrap();
        assert_eq!(psi, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]));
    }

    #[test]
    fn hermite_evaluation() {
        let d = Dictionary::hermite(1, 2).unwrap();
        let psi = d.evaluate(&col(&[2.0])).unwrap();
        assert_eq!(psi.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn rbf_peak_at_center() {
        let centers = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, 1.0, 2.0]);
        let d = Dictionary::rbf(centers, vec![0.3, 0.7]).unwrap();
        let psi = d.evaluate(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).unwrap();
        assert_eq!(psi[(0, 0)], 1.0);
        assert_eq!(psi[(0, 2)], 1.0);
        assert!(psi[(0, 1)] < 1.0);
    }

    #[test]
    fn rbf_grid_layout() {
        let domain = Domain::new(vec![-3.0, -4.0], vec![3.0, 4.0]).unwrap();
        let d = Dictionary::rbf_grid(&domain, 10, None).unwrap();
        assert_eq!(d.size(), 101);
        match &d.basis {
            Basis::Rbf { centers, bandwidth } => {
                assert_abs_diff_eq!(bandwidth[0], 0.6, epsilon = 1e-15);
                assert_abs_diff_eq!(bandwidth[1], 0.8, epsilon = 1e-15);
                assert_abs_diff_eq!(centers[(0, 0)], -2.7, epsilon = 1e-12);
                assert_abs_diff_eq!(centers[(0, 1)], -3.6, epsilon = 1e-12);
                assert_abs_diff_eq!(centers[(1, 1)], -2.8, epsilon = 1e-12);
                assert_abs_diff_eq!(centers[(99, 0)], 2.7, epsilon = 1e-12);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn graded_ordering() {
        assert_eq!(
            graded_exponents(2, 2),
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn generator_on_ou() {
        let ou = SdeSystem::ou(1.0, std::f64::consts::SQRT_2);
        let mono = Dictionary::monomial(1, 2).unwrap();
        let a = mono.generator_apply(&ou, &col(&[2.0, 1.0])).unwrap();
        // Aψ for ψ = x is −x; for ψ = x² it is −2x² + 2.
        assert_abs_diff_eq!(a[(0, 1)], -2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(a[(1, 2)], 0.0, epsilon = 1e-14);
        assert_eq!(a[(0, 0)], 0.0);
        assert_eq!(a[(1, 0)], 0.0);
    }

    #[test]
    fn hermite_is_ou_eigenbasis() {
        let ou = SdeSystem::ou(1.0, std::f64::consts::SQRT_2);
        let h = Dictionary::hermite(1, 3).unwrap();
        let pts = col(&[-1.3, 0.2, 0.9]);
        let psi = h.evaluate(&pts).unwrap();
        let a = h.generator_apply(&ou, &pts).unwrap();
        for i in 0..3 {
            for n in 0..4 {
                assert_abs_diff_eq!(a[(i, n)], -(n as f64) * psi[(i, n)], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn finite_diff_generator_cases() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let y = DMatrix::from_row_slice(1, 2, &[1.0, 0.01]);
        let g = finite_diff_generator(&x, &y, 0.01).unwrap();
        assert_abs_diff_eq!(g[(0, 0)], 0.0);
        assert_abs_diff_eq!(g[(0, 1)], 1.0, epsilon = 1e-12);
        assert_eq!(finite_diff_generator(&x, &x, 0.5).unwrap(), DMatrix::zeros(1, 2));
        assert!(matches!(
            finite_diff_generator(&x, &DMatrix::zeros(2, 2), 0.1),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn derivative_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let point = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let mono = Dictionary::monomial(2, 4).unwrap();
        assert!(mono.derivative_check(&point, 1e-6).unwrap().passed);
        let domain = Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let rbf = Dictionary::rbf_grid(&domain, 4, None).unwrap();
        assert!(rbf.derivative_check(&point, 1e-5).unwrap().passed);
        let net = Mlp::new(&[2, 16, 8], Activation::Tanh, &mut rng).unwrap();
        let tr = Dictionary::trainable(net, true);
        assert!(tr.derivative_check(&point, 1e-4).unwrap().passed);
    }

    #[test]
    fn trainable_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[2, 5, 3], Activation::Tanh, &mut rng).unwrap();
        let d = Dictionary::trainable(net.clone(), true);
        assert_eq!(d.size(), 6);
        assert_eq!(d.trainable_offset(), Some(3));
        let pts = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, -0.3, 0.4]);
        let psi = d.evaluate(&pts).unwrap();
        assert_eq!(psi[(1, 0)], 1.0);
        assert_eq!(psi[(1, 1)], -0.3);
        assert_eq!(psi[(1, 3)], net.forward_row(&[-0.3, 0.4]).unwrap()[0]);
        let mut single = vec![0.0; 6];
        d.values_at(&[-0.3, 0.4], &mut single);
        for j in 0..6 {
            assert_abs_diff_eq!(single[j], psi[(1, j)], epsilon = 1e-15);
        }
    }

    #[test]
    fn non_finite_points_rejected() {
        let d = Dictionary::monomial(1, 2).unwrap();
        assert!(matches!(d.evaluate(&col(&[f64::NAN])), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn file_round_trip() {
        let domain = Domain::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        for d in [
            Dictionary::rbf_grid(&domain, 3, None).unwrap(),
            Dictionary::hermite(2, 3).unwrap(),
            Dictionary::trainable(
                Mlp::new(&[2, 4, 2], Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(0)).unwrap(),
                false,
            ),
        ] {
            let back = Dictionary::from_file(&serde_json::from_str(&serde_json::to_string(&d.to_file()).unwrap()).unwrap())
                .unwrap();
            assert_eq!(d, back);
        }
    }
}
