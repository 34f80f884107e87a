//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `X' diag(w) X`
pub fn weighted_crossprod(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut wx = x.clone();
    for (mut row, &wi) in wx.row_iter_mut().zip(w) {
        row *= wi;
    }
    wx.transpose() * x
}

/// `X' (w ∘ v)`
pub fn weighted_xty(x: &DMatrix<f64>, w: &[f64], v: &[f64]) -> DVector<f64> {
    let wv = DVector::from_iterator(v.len(), w.iter().zip(v).map(|(a, b)| a * b));
    x.tr_mul(&wv)
}

/// Names of columns that are (numerically) linear combinations of earlier
/// columns under weights `w`, by modified Gram–Schmidt.
pub fn collinear_columns(x: &DMatrix<f64>, w: &[f64], names: &[String]) -> Vec<String> {
    let sw: Vec<f64> = w.iter().map(|v| v.max(0.0).sqrt()).collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for j in 0..x.ncols() {
        let mut v = DVector::from_iterator(x.nrows(), x.column(j).iter().zip(&sw).map(|(a, b)| a * b));
        let norm0 = v.norm();
        for b in &basis {
            let c = b.dot(&v);
            v.axpy(-c, b, 1.0);
        }
        let norm = v.norm();
        if norm0 == 0.0 || norm <= 1e-9 * norm0.max(1.0) {
            out.push(names.get(j).cloned().unwrap_or_else(|| format!("#{j}")));
        } else {
            basis.push(v / norm);
        }
    }
    out
}

/// Solves a symmetric positive-definite system by Cholesky.
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().cholesky().map(|c| c.solve(b))
}

/// Solves a general square system by LU; `None` when singular.
pub fn solve_general(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let lu = a.clone().lu();
    let sol = lu.solve(b)?;
    if sol.iter().all(|v| v.is_finite()) {
        Some(sol)
    } else {
        None
    }
}

pub fn inverse(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let inv = a.clone().try_inverse().ok_or_else(|| Error::Singular(what.to_string()))?;
    if inv.iter().all(|v| v.is_finite()) {
        Ok(inv)
    } else {
        Err(Error::Singular(what.to_string()))
    }
}

/// Forward-difference Jacobian of `f` at `theta`.
pub fn numeric_jacobian<F>(f: F, theta: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let f0 = f(theta)?;
    let mut jac = DMatrix::zeros(f0.len(), theta.len());
    for j in 0..theta.len() {
        let h = 1e-6 * theta[j].abs().max(1.0);
        let mut t = theta.clone();
        t[j] += h;
        let f1 = f(&t)?;
        jac.set_column(j, &((f1 - &f0) / h));
    }
    Ok(jac)
}

/// Central-difference Jacobian of `f` at `theta`.
pub fn central_jacobian<F>(f: F, theta: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut cols = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let h = 1e-5 * theta[j].abs().max(1.0);
        let mut tp = theta.clone();
        let mut tm = theta.clone();
        tp[j] += h;
        tm[j] -= h;
        cols.push((f(&tp)? - f(&tm)?) / (2.0 * h));
    }
    let m = cols.first().map(|c| c.len()).unwrap_or(0);
    let mut jac = DMatrix::zeros(m, theta.len());
    for (j, c) in cols.iter().enumerate() {
        jac.set_column(j, c);
    }
    Ok(jac)
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
