//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, LU};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Rows `rows` and columns `cols` of `m`, in the given order.
pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Determinant via partial-pivot LU; the empty matrix has determinant 1.
pub fn det(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    m.clone().lu().determinant()
}

/// LU factorization that fails on (numerically) singular input.
pub fn factor(m: DMatrix<f64>) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let scale = m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let lu = m.lu();
    let u = lu.u();
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE) * (u.nrows().max(1) as f64);
    if (0..u.nrows()).any(|i| !(u[(i, i)].abs() > tiny)) {
        return Err(Error::SingularSystem);
    }
    Ok(lu)
}

pub fn solve_matrix(m: DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(DMatrix::zeros(0, rhs.ncols()));
    }
    factor(m)?.solve(rhs).ok_or(Error::SingularSystem)
}

pub fn solve_vector(m: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    factor(m)?.solve(rhs).ok_or(Error::SingularSystem)
}

pub fn inverse(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    solve_matrix(m, &DMatrix::identity(n, n))
}

/// Eigenvalues of a general real matrix, sorted by real part then imaginary part.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut vals: Vec<Complex64> = m.complex_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    vals
}

/// Spectrum split into real eigenvalues and conjugate pairs, each pair reported by
/// its member with positive imaginary part.
#[derive(Clone, Debug, Default)]
pub struct PairedSpectrum {
    pub real: Vec<f64>,
    pub upper: Vec<Complex64>,
}

/// Greedy nearest-conjugate matching of a real matrix's eigenvalues.
pub fn pair_conjugates(values: &[Complex64], tol: f64) -> Result<PairedSpectrum> {
    let mut out = PairedSpectrum::default();
    let mut pending: Vec<Complex64> = Vec::new();
    for &v in values {
        if v.im.abs() <= tol * v.norm().max(1.0) {
            out.real.push(v.re);
        } else {
            pending.push(v);
        }
    }
    let mut used = vec![false; pending.len()];
    for i in 0..pending.len() {
        if used[i] || pending[i].im < 0.0 {
            continue;
        }
        let target = pending[i].conj();
        let partner = (0..pending.len())
            .filter(|&j| !used[j] && j != i && pending[j].im < 0.0)
            .min_by(|&a, &b| {
                (pending[a] - target)
                    .norm()
                    .total_cmp(&(pending[b] - target).norm())
            });
        match partner {
            Some(j) if (pending[j] - target).norm() <= tol * target.norm().max(1.0) => {
                used[i] = true;
                used[j] = true;
                out.upper.push(pending[i]);
            }
            _ => {
                return Err(Error::NonPmf(format!(
                    "eigenvalue {} has no conjugate partner",
                    pending[i]
                )))
            }
        }
    }
    if used.iter().any(|u| !u) {
        return Err(Error::NonPmf("unpaired complex eigenvalue".into()));
    }
    Ok(out)
}
