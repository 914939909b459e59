//! Dense complex linear algebra for composite spin systems.
//!
//! Matrices are stored row-major. Composite indices follow the usual
//! Kronecker convention: site 0 is the most significant digit, so for a
//! two-site system the basis order is `|00>, |01>, |10>, |11>`.

use std::ops::{Add, Index, Mul, Sub};

use faer::{Mat, Side};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QrcError, Result};

/// Entrywise tolerance on `|A - A^dagger|` for structural Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Allowed deviation of a density matrix trace from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue accepted in a density matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Largest imaginary part tolerated in `tr(rho O)` for a Hermitian `O`.
pub const EXPECTATION_IMAG_TOL: f64 = 1e-8;
/// Default cap on matrix dimension produced by [`kron`].
pub const MAX_DIM: usize = 1 << 12;

/// Matrices at or above this dimension are multiplied through faer.
const GEMM_THRESHOLD: usize = 64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major data, rejecting non-square or
    /// non-finite input.
    pub fn from_vec(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if dim == 0 {
            return Err(QrcError::Shape("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(QrcError::Shape(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QrcError::Numerical("matrix has non-finite entries".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(QrcError::Shape("rows must form a square matrix".into()));
        }
        Self::from_vec(dim, rows.concat())
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<Complex64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| Complex64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.data[i * values.len() + i] = Complex64::new(v, 0.0);
        }
        m
    }

    pub(crate) fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                data.push(f(i, j));
            }
        }
        Self { dim, data }
    }

    pub(crate) fn from_vec_unchecked(dim: usize, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, value: Complex64) {
        self.data[i * self.dim + j] = value;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.dim, |i, j| self.get(j, i).conj())
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Largest entrywise `|A - A^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    /// Exact Hermiticity: every mirrored pair equal bit for bit.
    pub fn is_exactly_hermitian(&self) -> bool {
        let n = self.dim;
        (0..n).all(|i| (i..n).all(|j| self.get(i, j) == self.get(j, i).conj()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self::from_vec_unchecked(self.dim, self.data.iter().map(|z| z * factor).collect())
    }

    pub fn scale_real(&self, factor: f64) -> Self {
        Self::from_vec_unchecked(self.dim, self.data.iter().map(|z| z * factor).collect())
    }

    /// Matrix product. Panics on dimension mismatch; use [`Self::try_matmul`]
    /// for a checked variant.
    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matmul");
        let n = self.dim;
        if n >= GEMM_THRESHOLD {
            let a = self.to_faer();
            let b = rhs.to_faer();
            let c = &a * &b;
            return Self::from_faer(&c);
        }
        let mut out = vec![ZERO; n * n];
        for i in 0..n {
            let row = &mut out[i * n..(i + 1) * n];
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &rhs.data[k * n..(k + 1) * n];
                for (o, b) in row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Self::from_vec_unchecked(n, out)
    }

    pub fn try_matmul(&self, rhs: &Self) -> Result<Self> {
        if self.dim != rhs.dim {
            return Err(QrcError::Shape(format!(
                "cannot multiply {0}x{0} by {1}x{1}",
                self.dim, rhs.dim
            )));
        }
        Ok(self.matmul(rhs))
    }

    /// `tr(self * rhs)` without forming the product.
    pub fn trace_product(&self, rhs: &Self) -> Complex64 {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in trace_product");
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            for j in 0..n {
                acc += self.data[i * n + j] * rhs.data[j * n + i];
            }
        }
        acc
    }

    pub(crate) fn to_faer(&self) -> Mat<Complex64> {
        sequential_faer();
        Mat::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub(crate) fn from_faer(m: &Mat<Complex64>) -> Self {
        Self::from_fn(m.nrows(), |i, j| m[(i, j)])
    }
}

/// Pins faer to single-threaded kernels so results never depend on the
/// thread count; callers parallelize across samples and cells instead.
pub(crate) fn sequential_faer() {
    static ONCE: std::sync::Once = std::sync::Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in add");
        ComplexMatrix::from_vec_unchecked(
            self.dim,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        )
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in sub");
        ComplexMatrix::from_vec_unchecked(
            self.dim,
            self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        )
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Dense row-major real matrix (feature tables, targets, predictions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(QrcError::Shape(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(QrcError::Shape("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    /// Single-column matrix.
    pub fn column_vector(values: &[f64]) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// New matrix made of the listed rows, in order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &r in indices {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// CSV with header `{prefix}0,{prefix}1,...`.
    pub fn to_csv(&self, prefix: &str) -> String {
        let header: Vec<String> = (0..self.cols).map(|c| format!("{prefix}{c}")).collect();
        let mut out = header.join(",");
        out.push('\n');
        for r in 0..self.rows {
            let row: Vec<String> = self.row(r).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Single-spin operators.
pub mod pauli {
    use super::*;

    pub fn identity() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_vec_unchecked(2, vec![ZERO, ONE, ONE, ZERO])
    }

    pub fn y() -> ComplexMatrix {
        let i = Complex64::new(0.0, 1.0);
        ComplexMatrix::from_vec_unchecked(2, vec![ZERO, -i, i, ZERO])
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::diag(&[1.0, -1.0])
    }

    /// `|0><0|`, the spin-up projector.
    pub fn up() -> ComplexMatrix {
        ComplexMatrix::diag(&[1.0, 0.0])
    }

    /// `|+><+|`, the +x eigenprojector.
    pub fn plus() -> ComplexMatrix {
        let h = Complex64::new(0.5, 0.0);
        ComplexMatrix::from_vec_unchecked(2, vec![h, h, h, h])
    }
}

/// Kronecker product `a ⊗ b`, capped at [`MAX_DIM`].
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    kron_with_limit(a, b, MAX_DIM)
}

pub fn kron_with_limit(a: &ComplexMatrix, b: &ComplexMatrix, max_dim: usize) -> Result<ComplexMatrix> {
    let da = a.dim();
    let db = b.dim();
    let dim = da
        .checked_mul(db)
        .filter(|&d| d <= max_dim)
        .ok_or(QrcError::SizeLimit {
            requested: da.saturating_mul(db),
            max: max_dim,
        })?;
    let mut out = vec![ZERO; dim * dim];
    for i in 0..da {
        for j in 0..da {
            let aij = a.get(i, j);
            if aij == ZERO {
                continue;
            }
            for k in 0..db {
                let row = (i * db + k) * dim + j * db;
                for l in 0..db {
                    out[row + l] = aij * b.get(k, l);
                }
            }
        }
    }
    Ok(ComplexMatrix::from_vec_unchecked(dim, out))
}

/// Kronecker product of a sequence, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Result<ComplexMatrix> {
    let mut iter = factors.into_iter();
    let first = iter
        .next()
        .ok_or_else(|| QrcError::Argument("kron of an empty sequence".into()))?
        .clone();
    iter.try_fold(first, |acc, m| kron(&acc, m))
}

/// Operator acting as `op` on `site` and identity elsewhere in an
/// `n_sites` chain of spins.
pub fn embed_single_site(op: &ComplexMatrix, site: usize, n_sites: usize) -> Result<ComplexMatrix> {
    if site >= n_sites {
        return Err(QrcError::SiteIndex {
            index: site,
            n_sites,
        });
    }
    let id = pauli::identity();
    let factors: Vec<&ComplexMatrix> = (0..n_sites)
        .map(|s| if s == site { op } else { &id })
        .collect();
    kron_all(factors)
}

pub fn trace(a: &ComplexMatrix) -> Complex64 {
    a.trace()
}

/// Hermitian, unit-trace, positive semidefinite matrix over a list of
/// subsystems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    matrix: ComplexMatrix,
    site_dims: Vec<usize>,
}

impl DensityMatrix {
    /// Validates all density-matrix invariants, including positivity.
    pub fn new(matrix: ComplexMatrix, site_dims: Vec<usize>) -> Result<Self> {
        let rho = Self::new_structural(matrix, site_dims)?;
        let min_eig = eigenvalues_hermitian(&rho.matrix)?[0];
        if min_eig < -PSD_TOL {
            return Err(QrcError::Numerical(format!(
                "density matrix has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(rho)
    }

    /// Checks shape, Hermiticity and trace, but not positivity. Used where
    /// positivity holds by construction.
    pub(crate) fn new_structural(matrix: ComplexMatrix, site_dims: Vec<usize>) -> Result<Self> {
        check_site_dims(&site_dims, matrix.dim())?;
        if !matrix.is_finite() {
            return Err(QrcError::Numerical("density matrix has non-finite entries".into()));
        }
        let herm = matrix.hermiticity_error();
        if herm > HERMITIAN_TOL {
            return Err(QrcError::Hermiticity(format!(
                "density matrix deviates from its adjoint by {herm:e}"
            )));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > TRACE_TOL {
            return Err(QrcError::Numerical(format!("density matrix trace is {tr}")));
        }
        Ok(Self { matrix, site_dims })
    }

    pub(crate) fn from_parts_unchecked(matrix: ComplexMatrix, site_dims: Vec<usize>) -> Self {
        Self { matrix, site_dims }
    }

    /// Pure state `|psi><psi|` of a chain of spins.
    pub fn qubits_from_projectors(projectors: &[ComplexMatrix]) -> Result<Self> {
        let m = kron_all(projectors)?;
        Self::new(m, projectors.iter().map(|p| p.dim()).collect())
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.matrix
    }

    pub fn site_dims(&self) -> &[usize] {
        &self.site_dims
    }

    pub fn n_sites(&self) -> usize {
        self.site_dims.len()
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn purity(&self) -> f64 {
        self.matrix.trace_product(&self.matrix).re
    }
}

fn check_site_dims(site_dims: &[usize], dim: usize) -> Result<()> {
    if site_dims.is_empty() || site_dims.contains(&0) {
        return Err(QrcError::Shape("site dimensions must be nonempty and positive".into()));
    }
    let product: usize = site_dims.iter().product();
    if product != dim {
        return Err(QrcError::Shape(format!(
            "site dimensions {site_dims:?} multiply to {product}, matrix has dimension {dim}"
        )));
    }
    Ok(())
}

/// Offsets of every basis state of the listed sites inside the full index,
/// enumerated with the first listed site as the most significant digit.
fn subsystem_offsets(sites: &[usize], site_dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0usize];
    for &s in sites {
        let mut next = Vec::with_capacity(offsets.len() * site_dims[s]);
        for &base in &offsets {
            for digit in 0..site_dims[s] {
                next.push(base + digit * strides[s]);
            }
        }
        offsets = next;
    }
    offsets
}

/// Reduced state on `keep_sites` (strictly ascending).
pub fn partial_trace(rho: &DensityMatrix, keep_sites: &[usize]) -> Result<DensityMatrix> {
    let site_dims = rho.site_dims();
    let n_sites = site_dims.len();
    if keep_sites.is_empty() {
        return Err(QrcError::Argument("partial trace needs at least one kept site".into()));
    }
    if let Some(&bad) = keep_sites.iter().find(|&&s| s >= n_sites) {
        return Err(QrcError::SiteIndex {
            index: bad,
            n_sites,
        });
    }
    if keep_sites.windows(2).any(|w| w[0] >= w[1]) {
        return Err(QrcError::Argument(format!(
            "kept sites must be strictly ascending, got {keep_sites:?}"
        )));
    }
    if keep_sites.len() == n_sites {
        return Ok(rho.clone());
    }

    let mut strides = vec![1usize; n_sites];
    for s in (0..n_sites - 1).rev() {
        strides[s] = strides[s + 1] * site_dims[s + 1];
    }
    let traced: Vec<usize> = (0..n_sites).filter(|s| !keep_sites.contains(s)).collect();
    let keep_off = subsystem_offsets(keep_sites, site_dims, &strides);
    let trace_off = subsystem_offsets(&traced, site_dims, &strides);

    let full = rho.matrix();
    let dk = keep_off.len();
    let out = ComplexMatrix::from_fn(dk, |a, b| {
        trace_off
            .iter()
            .map(|&r| full.get(keep_off[a] + r, keep_off[b] + r))
            .sum()
    });
    let dims = keep_sites.iter().map(|&s| site_dims[s]).collect();
    Ok(DensityMatrix::from_parts_unchecked(out, dims))
}

/// `Re tr(rho O)`, rejecting results with a non-negligible imaginary part.
pub fn expectation(rho: &DensityMatrix, obs: &ComplexMatrix) -> Result<f64> {
    expectation_raw(rho.matrix(), obs)
}

pub(crate) fn expectation_raw(rho: &ComplexMatrix, obs: &ComplexMatrix) -> Result<f64> {
    if rho.dim() != obs.dim() {
        return Err(QrcError::Shape(format!(
            "state has dimension {}, observable has dimension {}",
            rho.dim(),
            obs.dim()
        )));
    }
    let value = rho.trace_product(obs);
    if value.im.abs() >= EXPECTATION_IMAG_TOL {
        return Err(QrcError::Hermiticity(format!(
            "tr(rho O) has imaginary part {:e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// Ascending eigenvalues of a Hermitian matrix.
pub fn eigenvalues_hermitian(a: &ComplexMatrix) -> Result<Vec<f64>> {
    check_hermitian(a)?;
    let mut values = a
        .to_faer()
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| QrcError::Numerical(format!("eigenvalue solver failed: {e:?}")))?;
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors, as
/// columns of the returned matrix.
pub fn eigh(a: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    check_hermitian(a)?;
    let evd = a
        .to_faer()
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| QrcError::Numerical(format!("eigen decomposition failed: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let n = a.dim();
    let values: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    let vectors = ComplexMatrix::from_fn(n, |i, j| u[(i, j)]);
    Ok((values, vectors))
}

fn check_hermitian(a: &ComplexMatrix) -> Result<()> {
    let err = a.hermiticity_error();
    if err > HERMITIAN_TOL {
        return Err(QrcError::Hermiticity(format!(
            "matrix deviates from its adjoint by {err:e}"
        )));
    }
    Ok(())
}
