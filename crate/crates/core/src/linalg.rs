//! Small dense complex linear-algebra helpers built on `nalgebra`.
//!
//! Everything in the crate works on `DMatrix<C64>`. The helpers here add the
//! pieces nalgebra leaves to the caller: Hermitian functions via
//! eigendecomposition with PSD clipping, descending SVDs with full unitary
//! factors and a deterministic phase convention, and a few predicates.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvalues below this are treated as zero when clipping to the PSD cone.
pub const PSD_CLIP_TOL: f64 = 1e-10;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| cr(x)))
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = cr(v);
    }
    m
}

/// Rectangular `rows x cols` matrix with `values` on the leading diagonal.
pub fn rect_diag(rows: usize, cols: usize, values: &[f64]) -> CMatrix {
    let mut m = zeros(rows, cols);
    for (i, &v) in values.iter().enumerate().take(rows.min(cols)) {
        m[(i, i)] = cr(v);
    }
    m
}

pub fn trace_re(m: &CMatrix) -> f64 {
    m.trace().re
}

/// `(A + Aᴴ) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * cr(0.5)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn real_diagonal(m: &CMatrix) -> Vec<f64> {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)].re).collect()
}

/// Hermitian eigendecomposition with eigenvalues sorted descending.
pub fn herm_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn herm_eigenvalues(m: &CMatrix) -> Vec<f64> {
    herm_eig(m).0
}

pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    herm_eigenvalues(m).last().copied().unwrap_or(0.0)
}

fn herm_apply(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, vectors) = herm_eig(m);
    let n = values.len();
    let mut scaled = vectors.clone();
    for j in 0..n {
        let s = cr(f(values[j]));
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    hermitize(&(scaled * vectors.adjoint()))
}

/// Hermitian square root of a PSD matrix; small negative eigenvalues are clipped.
pub fn psd_sqrt(m: &CMatrix) -> CMatrix {
    herm_apply(m, |v| if v > PSD_CLIP_TOL { v.sqrt() } else { 0.0 })
}

/// `M^{-1/2}` for a Hermitian positive-definite matrix.
pub fn pd_inv_sqrt(m: &CMatrix) -> Result<CMatrix> {
    let values = herm_eigenvalues(m);
    let smallest = values.last().copied().unwrap_or(1.0);
    if smallest <= PSD_CLIP_TOL {
        return Err(Error::Numerical(format!(
            "inverse square root of a matrix with eigenvalue {smallest:e}"
        )));
    }
    Ok(herm_apply(m, |v| 1.0 / v.sqrt()))
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn pd_inverse(m: &CMatrix) -> Result<CMatrix> {
    hermitize(m)
        .cholesky()
        .map(|ch| hermitize(&ch.inverse()))
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

pub fn is_psd(m: &CMatrix, tol: f64) -> bool {
    let herm_err = frobenius(&(m - m.adjoint()));
    herm_err <= tol.max(1e-12) * (1.0 + frobenius(m)) && min_eigenvalue(m) >= -tol
}

/// `‖UᴴU − I‖_max`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    max_abs(&(u.adjoint() * u - identity(u.ncols())))
}

/// Is `m` a (possibly zero) multiple of the identity, to relative Frobenius
/// deviation `rel_tol`? Returns the scale when it is.
pub fn identity_multiple(m: &CMatrix, rel_tol: f64) -> Option<f64> {
    let n = m.nrows();
    if n != m.ncols() {
        return None;
    }
    let norm = frobenius(m);
    let scale = trace_re(m) / n as f64;
    if norm == 0.0 {
        return Some(0.0);
    }
    let dev = frobenius(&(m - identity(n) * cr(scale)));
    (dev <= rel_tol * norm).then_some(scale)
}

/// Singular value decomposition `A = U diag(s) Vᴴ` with full unitary factors
/// (`U` is rows x rows, `V` is cols x cols) and `s` sorted descending.
///
/// Phase convention: the first entry of each right-singular vector whose
/// modulus exceeds 1e-12 is real and nonnegative; the matching left vector is
/// rotated by the same phase so the product is unchanged.
#[derive(Clone, Debug)]
pub struct SortedSvd {
    pub u: CMatrix,
    pub s: Vec<f64>,
    pub v: CMatrix,
}

pub fn svd_sorted(a: &CMatrix) -> SortedSvd {
    let (rows, cols) = a.shape();
    let r = rows.min(cols);
    let svd = a.clone().svd(true, true);
    let u_thin = svd.u.expect("u requested");
    let v_thin = svd.v_t.expect("v_t requested").adjoint();
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));

    let mut u = zeros(rows, r);
    let mut v = zeros(cols, r);
    let mut s = Vec::with_capacity(r);
    for (dst, &src) in order.iter().enumerate() {
        let mut vc = v_thin.column(src).into_owned();
        let mut uc = u_thin.column(src).into_owned();
        if let Some(lead) = vc.iter().find(|z| z.norm() > 1e-12).copied() {
            let phase = lead.conj() / lead.norm();
            vc *= phase;
            uc *= phase;
        }
        u.set_column(dst, &uc);
        v.set_column(dst, &vc);
        s.push(svd.singular_values[src]);
    }
    SortedSvd {
        u: complete_unitary(&u),
        s,
        v: complete_unitary(&v),
    }
}

/// Extends orthonormal columns to a square unitary matrix by Gram-Schmidt
/// against the canonical basis.
pub fn complete_unitary(thin: &CMatrix) -> CMatrix {
    let (n, k) = thin.shape();
    let mut cols: Vec<CVector> = (0..k).map(|j| thin.column(j).into_owned()).collect();
    let mut e = 0;
    while cols.len() < n && e < n {
        let mut cand = CVector::zeros(n);
        cand[e] = cr(1.0);
        e += 1;
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dotc(&cand);
                cand -= q * proj;
            }
        }
        let norm = cand.norm();
        if norm > 1e-8 {
            cols.push(cand / cr(norm));
        }
    }
    CMatrix::from_columns(&cols)
}

/// First `k` columns.
pub fn leading_columns(m: &CMatrix, k: usize) -> CMatrix {
    m.columns(0, k).into_owned()
}

/// Checks that `m` has the given shape.
pub fn expect_shape(m: &CMatrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "{what}: expected {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Real parameters (re, im interleaved, column-major) of a matrix.
pub fn to_real_params(m: &CMatrix, out: &mut Vec<f64>) {
    for z in m.iter() {
        out.push(z.re);
        out.push(z.im);
    }
}

pub fn from_real_params(rows: usize, cols: usize, params: &[f64]) -> CMatrix {
    debug_assert_eq!(params.len(), 2 * rows * cols);
    CMatrix::from_iterator(
        rows,
        cols,
        params.chunks_exact(2).map(|p| c(p[0], p[1])),
    )
}
