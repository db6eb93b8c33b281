//! Dense complex linear algebra for small operator spaces.
//!
//! Matrices are row-major. Kronecker products put the left factor's index
//! in the major position, so a joint vector on `H_A ⊗ H_B` is indexed by
//! `a * dim_b + b`.

use std::ops::{Add, Index, IndexMut, Mul, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bits::BitString;
use crate::error::{Error, Result};

/// Entrywise Hermiticity tolerance for matrices flagged Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Entrywise tolerance on `M†M − I` for matrices flagged unitary.
pub const UNITARY_TOL: f64 = 1e-8;
/// Tolerance on `‖v‖₂ − 1` for normalized vectors.
pub const NORMALIZED_TOL: f64 = 1e-10;
/// Largest acceptable eigen-pair residual `‖Mv − λv‖`, relative to `max(1, ‖M‖)`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-9;
/// Eigenvalues below this magnitude are treated as `+zero_tol` by [`sign_normalize`].
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;
/// Hermiticity accepted by the spectral routines. Matches strategy validation,
/// so sums of validated observables are always admissible.
pub const SPECTRAL_HERMITIAN_TOL: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::new(rows, cols, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn diagonal(entries: &[f64]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in entries.iter().enumerate() {
            m.data[i * n + i] = Complex64::new(x, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * c).collect(),
        }
    }

    pub fn scale_real(&self, c: f64) -> Self {
        self.scale(Complex64::new(c, 0.0))
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `max |M_ij − conj(M_ji)|`; infinite for non-square input.
    pub fn hermitian_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Entrywise max of `M†M − I`; infinite for non-square input.
    pub fn unitary_residual(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        (&self.adjoint() * self).max_abs_diff(&Self::identity(self.rows))
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_residual() <= HERMITIAN_TOL
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary_residual() <= UNITARY_TOL
    }

    /// `(M + M†)/2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| {
            (self[(i, j)] + self[(j, i)].conj()) * 0.5
        })
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    /// Matrix-vector product on raw amplitudes.
    pub fn apply_slice(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn apply(&self, v: &StateVector) -> StateVector {
        StateVector::from_amplitudes(self.apply_slice(v.amplitudes()))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    fn to_nalgebra(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    fn from_nalgebra(m: &DMatrix<Complex64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::DimensionMismatch("empty state vector".into()));
        }
        Ok(Self { amps })
    }

    pub(crate) fn from_amplitudes(amps: Vec<Complex64>) -> Self {
        Self { amps }
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    /// Computational basis vector `|index⟩`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn normalization_residual(&self) -> f64 {
        (self.norm() - 1.0).abs()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization_residual() <= NORMALIZED_TOL
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self {
            amps: self.amps.iter().map(|z| z / n).collect(),
        }
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        inner(&self.amps, &other.amps)
    }

    pub fn distance(&self, other: &Self) -> f64 {
        distance(&self.amps, &other.amps)
    }

    pub fn tensor(&self, other: &Self) -> Self {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Self { amps }
    }
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len(), "inner product dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance dimension mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Which tensor factor of a bipartite space an operator acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    #[serde(rename = "A")]
    Alice,
    #[serde(rename = "B")]
    Bob,
}

/// Shape of a bipartite space `H_A ⊗ H_B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bipartite {
    pub dim_a: usize,
    pub dim_b: usize,
}

impl Bipartite {
    pub fn new(dim_a: usize, dim_b: usize) -> Self {
        Self { dim_a, dim_b }
    }

    pub fn dim(&self) -> usize {
        self.dim_a * self.dim_b
    }

    pub fn side_dim(&self, side: Side) -> usize {
        match side {
            Side::Alice => self.dim_a,
            Side::Bob => self.dim_b,
        }
    }

    /// `(op ⊗ I) v` or `(I ⊗ op) v` without forming the Kronecker product.
    pub fn apply(&self, side: Side, op: &ComplexMatrix, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![ZERO; v.len()];
        self.apply_into(side, op, v, &mut out);
        out
    }

    pub fn apply_into(&self, side: Side, op: &ComplexMatrix, v: &[Complex64], out: &mut [Complex64]) {
        let (da, db) = (self.dim_a, self.dim_b);
        assert_eq!(v.len(), da * db, "bipartite vector dimension mismatch");
        assert_eq!(out.len(), v.len());
        match side {
            Side::Alice => {
                assert_eq!((op.rows, op.cols), (da, da), "Alice operator dimension mismatch");
                out.iter_mut().for_each(|z| *z = ZERO);
                for a in 0..da {
                    let dst = &mut out[a * db..(a + 1) * db];
                    for a2 in 0..da {
                        let c = op.data[a * da + a2];
                        if c == ZERO {
                            continue;
                        }
                        let src = &v[a2 * db..(a2 + 1) * db];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += c * s;
                        }
                    }
                }
            }
            Side::Bob => {
                assert_eq!((op.rows, op.cols), (db, db), "Bob operator dimension mismatch");
                for (src, dst) in v.chunks_exact(db).zip(out.chunks_exact_mut(db)) {
                    for (b, d) in dst.iter_mut().enumerate() {
                        let row = &op.data[b * db..(b + 1) * db];
                        *d = row.iter().zip(src).map(|(x, y)| x * y).sum();
                    }
                }
            }
        }
    }
}

/// Kronecker product `A ⊗ B`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    ComplexMatrix::from_fn(rows, cols, |i, j| {
        a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
    })
}

/// Tensor product of a sequence of factors, leftmost factor most significant.
pub fn tensor_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(ComplexMatrix::identity(1), |acc, f| tensor(&acc, f))
}

/// Spectral decomposition of a Hermitian matrix: eigenvalues and the unitary
/// whose columns are the matching eigenvectors.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl HermitianEigen {
    /// `V diag(g(λ)) V†`.
    pub fn map(&self, g: impl Fn(f64) -> f64) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let vals: Vec<f64> = self.eigenvalues.iter().map(|&l| g(l)).collect();
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| v[(i, k)] * v[(j, k)].conj() * vals[k])
                .sum()
        })
    }
}

pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    let residual = m.hermitian_residual();
    if residual > SPECTRAL_HERMITIAN_TOL {
        return Err(Error::NotHermitian(residual));
    }
    let h = m.hermitian_part();
    let eig = h.to_nalgebra().symmetric_eigen();
    let eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    let eigenvectors = ComplexMatrix::from_nalgebra(&eig.eigenvectors);

    let n = m.rows;
    let scale = h.max_abs().max(1.0) * n as f64;
    let mut worst = 0.0f64;
    for (k, &lambda) in eigenvalues.iter().enumerate() {
        let col: Vec<Complex64> = (0..n).map(|i| eigenvectors[(i, k)]).collect();
        let hv = h.apply_slice(&col);
        let r = hv
            .iter()
            .zip(&col)
            .map(|(a, b)| (a - b * lambda).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r);
    }
    if worst > EIGEN_RESIDUAL_TOL * scale {
        return Err(Error::EigenResidual(worst));
    }
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// `|M| = √(M²)`: eigenvalues of `M` replaced by their absolute values.
pub fn operator_abs(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(hermitian_eigen(m)?.map(f64::abs))
}

/// `M / |M|` with eigenvalues of magnitude below `zero_tol` regularized to
/// `+zero_tol`, so the result is always a Hermitian unitary.
pub fn sign_normalize(m: &ComplexMatrix, zero_tol: f64) -> Result<ComplexMatrix> {
    let eig = hermitian_eigen(m)?;
    Ok(eig.map(|l| {
        let l = if l.abs() < zero_tol { zero_tol } else { l };
        l / l.abs()
    }))
}

/// `∏_k M_k^{t_k}` with the smallest index leftmost.
pub fn ordered_product(ops: &[ComplexMatrix], t: &BitString) -> Result<ComplexMatrix> {
    if ops.is_empty() {
        return Err(Error::DimensionMismatch("empty operator family".into()));
    }
    if t.len() != ops.len() {
        return Err(Error::DimensionMismatch(format!(
            "exponent string has {} bits for {} operators",
            t.len(),
            ops.len()
        )));
    }
    let dim = ops[0].rows;
    if let Some(bad) = ops.iter().find(|o| o.rows != dim || o.cols != dim) {
        return Err(Error::DimensionMismatch(format!(
            "operator family mixes {dim}x{dim} with {}x{}",
            bad.rows, bad.cols
        )));
    }
    let mut acc = ComplexMatrix::identity(dim);
    for (k, op) in ops.iter().enumerate() {
        if t.bit(k + 1) {
            acc = &acc * op;
        }
    }
    Ok(acc)
}

pub mod pauli {
    use super::ComplexMatrix;
    use num_complex::Complex64;

    pub fn i2() -> ComplexMatrix {
        ComplexMatrix::identity(2)
    }

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn y() -> ComplexMatrix {
        let i = Complex64::new(0.0, 1.0);
        ComplexMatrix::new(2, 2, vec![0.0.into(), -i, i, 0.0.into()]).unwrap()
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    pub fn hadamard() -> ComplexMatrix {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        ComplexMatrix::from_real(2, 2, &[h, h, h, -h]).unwrap()
    }

    /// `exp(−i θ σ_y / 2)`, a real rotation in the x–z plane.
    pub fn ry(theta: f64) -> ComplexMatrix {
        let (s, c) = (theta / 2.0).sin_cos();
        ComplexMatrix::from_real(2, 2, &[c, -s, s, c]).unwrap()
    }

    /// `op` acting on qubit `k` (1-indexed, qubit 1 most significant) of `qubits`.
    pub fn embed(op: &ComplexMatrix, k: usize, qubits: usize) -> ComplexMatrix {
        assert!(k >= 1 && k <= qubits);
        let id = ComplexMatrix::identity(2);
        let factors: Vec<&ComplexMatrix> = (1..=qubits)
            .map(|j| if j == k { op } else { &id })
            .collect();
        super::tensor_all(factors)
    }
}
