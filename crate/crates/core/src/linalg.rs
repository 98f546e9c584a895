//! Small dense linear-algebra helpers shared by every module.
//!
//! Everything is `nalgebra` dynamic matrices; complex data uses
//! `num_complex::Complex64`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &RMat) -> CMat {
    m.map(|v| c(v, 0.0))
}

pub fn diag_c(v: &RVec) -> CMat {
    CMat::from_diagonal(&v.map(|x| c(x, 0.0)))
}

/// `(M + M^H) / 2`.
pub fn herm_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn sym_part(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

pub fn max_hermitian_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).iter().fold(0.0_f64, |acc, v| acc.max(v.norm()))
}

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
pub fn sym_eig(m: &RMat) -> (RVec, RMat) {
    let eig = SymmetricEigen::new(sym_part(m));
    sort_eig(eig.eigenvalues, eig.eigenvectors)
}

/// Eigen-decomposition of a complex Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(m: &CMat) -> (RVec, CMat) {
    let eig = SymmetricEigen::new(herm_part(m));
    sort_eig(eig.eigenvalues, eig.eigenvectors)
}

fn sort_eig<T: nalgebra::Scalar + Copy>(vals: RVec, vecs: DMatrix<T>) -> (RVec, DMatrix<T>) {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let sorted_vals = RVec::from_iterator(n, order.iter().map(|&i| vals[i]));
    let sorted_vecs = DMatrix::from_fn(vecs.nrows(), n, |r, col| vecs[(r, order[col])]);
    (sorted_vals, sorted_vecs)
}

pub fn min_eig_sym(m: &RMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    sym_eig(m).0[0]
}

pub fn min_eig_herm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    herm_eig(m).0[0]
}

/// Factor a Hermitian PSD matrix as `F F^H`, clipping eigenvalues below zero.
/// Returns the factor and the most negative eigenvalue encountered.
pub fn psd_factor(m: &CMat) -> (CMat, f64) {
    let (vals, vecs) = herm_eig(m);
    let most_negative = vals.iter().cloned().fold(0.0_f64, f64::min);
    let mut f = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    (f, most_negative)
}

/// Inverse of a real symmetric positive definite matrix via Cholesky.
pub fn inv_spd(m: &RMat, what: &str) -> Result<RMat> {
    let sym = sym_part(m);
    match sym.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => Err(Error::Singular { what: what.to_string(), condition: condition_sym(&sym) }),
    }
}

/// Inverse of a Hermitian positive definite matrix via Cholesky.
pub fn inv_hpd(m: &CMat, what: &str) -> Result<CMat> {
    let h = herm_part(m);
    match h.clone().cholesky() {
        Some(ch) => Ok(ch.inverse()),
        None => {
            let (vals, _) = herm_eig(&h);
            Err(Error::Singular { what: what.to_string(), condition: spread(&vals) })
        }
    }
}

/// Ratio of extreme absolute eigenvalues of a symmetric matrix.
pub fn condition_sym(m: &RMat) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    spread(&sym_eig(m).0)
}

fn spread(vals: &RVec) -> f64 {
    let max = vals.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = vals.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// `Re Tr(A B)` without forming the product.
pub fn re_trace_prod(a: &CMat, b: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..a.ncols() {
            let x = a[(i, k)] * b[(k, i)];
            acc += x.re;
        }
    }
    acc
}

/// `Tr(A B)` for complex matrices.
pub fn trace_prod(a: &CMat, b: &CMat) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Frobenius inner product `<A, B> = sum A_ij B_ij` of real matrices.
pub fn frob(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// `<A, B> = Re sum conj(A_ij) B_ij`.
pub fn frob_c(a: &CMat, b: &CMat) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn is_binary(a: &RVec, tol: f64) -> bool {
    a.iter().all(|&v| v.abs() <= tol || (v - 1.0).abs() <= tol)
}
