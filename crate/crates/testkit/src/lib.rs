//! Test support for the fair workspace: brute-force oracles, random instance
//! generators, a finite-difference gradient checker and the invariant
//! properties shared by the property tests and the acceptance run.

pub mod fd;
pub mod gen;
pub mod oracle;
pub mod props;

use fair_core::Matrix;

pub type Rows = Vec<Vec<f64>>;

pub fn to_matrix(rows: &Rows) -> Matrix {
    Matrix::from_rows(rows)
}

pub fn to_rows(m: &Matrix) -> Rows {
    m.iter_rows().map(|r| r.to_vec()).collect()
}

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn all_close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y, tol))
}
