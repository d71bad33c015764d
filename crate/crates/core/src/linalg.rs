//! Dense linear-algebra helpers shared by the phase, graph and system code.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_traits::Zero;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn to_complex(m: &RMatrix) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(m: &CMatrix) -> RMatrix {
    m.map(|z| z.re)
}

pub fn max_imag(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.im.abs()))
}

pub fn ensure_square<T: nalgebra::Scalar>(m: &DMatrix<T>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    if m.nrows() == 0 {
        return Err(Error::Empty);
    }
    Ok(m.nrows())
}

pub fn ensure_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Splits `C` into `H0 + j S0` with both parts Hermitian.
pub fn hermitian_parts(m: &CMatrix) -> (CMatrix, CMatrix) {
    let adj = m.adjoint();
    let h = (m + &adj).scale(0.5);
    let s = (m - &adj) * c(0.0, -0.5);
    (h, s)
}

/// Symmetrises away rounding so the Hermitian eigensolver sees an exact Hermitian input.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitize(m).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = SymmetricEigen::new(hermitize(m));
    let n = eig.eigenvalues.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, idx[k])]);
    (vals, vecs)
}

pub fn lambda_min(m: &CMatrix) -> f64 {
    hermitian_eigenvalues(m)[0]
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<Complex64>> {
    let n = ensure_square(m)?;
    if n == 1 {
        return Ok(vec![m[(0, 0)]]);
    }
    for iters in [0usize, 100_000] {
        let schur = if iters == 0 { Some(Schur::new(m.clone())) } else { Schur::try_new(m.clone(), 1e-15, iters) };
        if let Some(ev) = schur.and_then(|s| s.eigenvalues()) {
            return Ok(ev.iter().copied().collect());
        }
    }
    Err(Error::NumericalDegeneracy("Schur decomposition did not converge".into()))
}

/// Eigenvalues of a general real matrix (complex conjugate pairs included).
pub fn real_eigenvalues(m: &RMatrix) -> Result<Vec<Complex64>> {
    let n = ensure_square(m)?;
    if n == 1 {
        return Ok(vec![c(m[(0, 0)], 0.0)]);
    }
    match Schur::try_new(m.clone(), f64::EPSILON, 200_000) {
        Some(s) => Ok(s.complex_eigenvalues().iter().copied().collect()),
        None => eigenvalues(&to_complex(m)),
    }
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut sv: Vec<f64> = SVD::new(m.clone(), false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Orthonormal bases of the numerical null space and its orthogonal complement
/// (row space). Singular values below `rel_tol * sigma_max` count as zero.
pub struct NullSplit {
    pub null: CMatrix,
    pub range: CMatrix,
    pub sigma_max: f64,
}

pub fn null_split(m: &CMatrix, rel_tol: f64) -> NullSplit {
    let n = m.ncols();
    let svd = SVD::new(m.clone(), false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let sigma_max = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let thresh = rel_tol * sigma_max.max(f64::MIN_POSITIVE);
    let mut null_cols = Vec::new();
    let mut range_cols = Vec::new();
    for (i, &s) in sv.iter().enumerate() {
        let col: DVector<Complex64> = v_t.row(i).adjoint();
        if s <= thresh {
            null_cols.push(col);
        } else {
            range_cols.push(col);
        }
    }
    // a wide matrix has extra null directions not returned by the thin SVD
    if v_t.nrows() < n {
        let basis = CMatrix::from_columns(&range_cols);
        let extra = orthonormal_complement(&basis, n);
        for col in extra.column_iter() {
            if null_cols.len() + range_cols.len() >= n {
                break;
            }
            null_cols.push(col.into_owned());
        }
    }
    let make = |cols: &[DVector<Complex64>]| {
        if cols.is_empty() {
            CMatrix::zeros(n, 0)
        } else {
            CMatrix::from_columns(cols)
        }
    };
    NullSplit { null: make(&null_cols), range: make(&range_cols), sigma_max }
}

/// Orthonormal basis of the orthogonal complement of the column span of `basis`
/// (which must have orthonormal columns) in C^n.
pub fn orthonormal_complement(basis: &CMatrix, n: usize) -> CMatrix {
    let k = basis.ncols();
    if k == 0 {
        return CMatrix::identity(n, n);
    }
    let proj = CMatrix::identity(n, n) - basis * basis.adjoint();
    let split = null_split(&proj, 1e-8);
    split.range
}

/// Real orthonormal basis of the complement of the all-ones vector.
pub fn ones_complement(n: usize) -> RMatrix {
    if n <= 1 {
        return RMatrix::zeros(n, 0);
    }
    // Helmert-style basis: column k is (1,...,1,-k,0,...)/norm
    RMatrix::from_fn(n, n - 1, |i, k| {
        let kk = (k + 1) as f64;
        let norm = (kk * (kk + 1.0)).sqrt();
        if i <= k {
            1.0 / norm
        } else if i == k + 1 {
            -kk / norm
        } else {
            0.0
        }
    })
}

pub fn kron<T>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T>
where
    T: nalgebra::Scalar + Copy + std::ops::Mul<Output = T> + Zero,
{
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn block_diag<T>(blocks: &[DMatrix<T>]) -> DMatrix<T>
where
    T: nalgebra::Scalar + Copy + Zero,
{
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::from_element(rows, cols, T::zero());
    let (mut r, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r, c0), b.shape()).copy_from(b);
        r += b.nrows();
        c0 += b.ncols();
    }
    out
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rfrobenius(m: &RMatrix) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut x = a % (2.0 * PI);
    if x <= -PI {
        x += 2.0 * PI;
    } else if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Shifts `a` by a multiple of 2pi so that it lies in (center - pi, center + pi].
pub fn angle_near(a: f64, center: f64) -> f64 {
    center + wrap_angle(a - center)
}
