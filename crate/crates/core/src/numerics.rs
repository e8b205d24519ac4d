//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are `nalgebra` dynamic matrices of `Complex<f64>` stored in
//! column-major order. Least-squares problems are solved through a
//! condition-checked Cholesky factorization of the Gram matrix `AᴴA`; the
//! projection energy `‖P_A r‖²` is obtained from the whitened fit without ever
//! forming the square projection matrix.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub use nalgebra::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest admissible condition number of a Gram matrix `AᴴA`.
pub const CONDITION_CEILING: f64 = 1e12;

/// Relative residual tolerance for `‖A·pinv(A)·A − A‖`.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-9;

pub const J: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn cis(phase: f64) -> C64 {
    let (s, c) = phase.sin_cos();
    C64::new(c, s)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn diag(entries: &[C64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_column_slice(entries))
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Entrywise (Hadamard) product `a ∘ b`.
pub fn hadamard(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "hadamard of {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.component_mul(b))
}

pub fn norm_sq(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Condition-checked least-squares factorization of a tall matrix `A`.
///
/// Holds the lower Cholesky factor `L` of `AᴴA` and the whitened operator
/// `W = L⁻¹Aᴴ`, whose rows form an orthonormal basis of the column space of
/// `A` (conjugated). Then `‖P_A y‖² = ‖W y‖²` and `A†y = L⁻ᴴ W y`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    chol: CMatrix,
    whitened: CMatrix,
    condition: f64,
}

impl LeastSquares {
    pub fn new(a: &CMatrix) -> Result<Self> {
        Self::with_ceiling(a, CONDITION_CEILING)
    }

    pub fn with_ceiling(a: &CMatrix, ceiling: f64) -> Result<Self> {
        if a.ncols() == 0 || a.nrows() < a.ncols() {
            return Err(Error::RankDeficient { condition: f64::INFINITY, ceiling });
        }
        let gram = a.adjoint() * a;
        let eig = gram.clone().symmetric_eigenvalues();
        let (lo, hi) = eig
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= ceiling) {
            return Err(Error::RankDeficient { condition, ceiling });
        }
        let chol = gram
            .cholesky()
            .ok_or(Error::RankDeficient { condition, ceiling })?
            .unpack();
        let whitened = chol
            .solve_lower_triangular(&a.adjoint())
            .ok_or(Error::RankDeficient { condition, ceiling })?;
        Ok(Self { chol, whitened, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn rank(&self) -> usize {
        self.whitened.nrows()
    }

    pub fn rows(&self) -> usize {
        self.whitened.ncols()
    }

    /// `W = L⁻¹Aᴴ`, shape `cols × rows` of the original matrix.
    pub fn whitened(&self) -> &CMatrix {
        &self.whitened
    }

    /// Coordinates of `y` in the orthonormal basis of the column space.
    pub fn coordinates(&self, y: &[C64]) -> CVector {
        let n = self.rows();
        assert_eq!(y.len(), n, "vector length must match matrix rows");
        let p = self.rank();
        let mut z = CVector::zeros(p);
        // column-major: accumulate column by column for contiguous access
        for (col, &yn) in self.whitened.column_iter().zip(y) {
            for (zi, &w) in z.iter_mut().zip(col.iter()) {
                *zi += w * yn;
            }
        }
        z
    }

    /// `‖P_A y‖²`.
    pub fn projected_energy(&self, y: &[C64]) -> f64 {
        self.coordinates(y).norm_squared()
    }

    /// Least-squares solution `A†y`.
    pub fn solve(&self, y: &[C64]) -> CVector {
        let z = self.coordinates(y);
        self.chol
            .adjoint()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Explicit pseudo-inverse `(AᴴA)⁻¹Aᴴ`.
    pub fn pinv(&self) -> CMatrix {
        self.chol
            .adjoint()
            .solve_upper_triangular(&self.whitened)
            .expect("Cholesky factor has a positive diagonal")
    }
}

/// Pseudo-inverse `(AᴴA)⁻¹Aᴴ` of a full-column-rank matrix.
pub fn pinv(a: &CMatrix) -> Result<CMatrix> {
    Ok(LeastSquares::new(a)?.pinv())
}

/// Energy of `r` inside the column space of `a`: `‖A(AᴴA)⁻¹Aᴴ r‖²`.
pub fn proj_norm_sq(a: &CMatrix, r: &CVector) -> Result<f64> {
    if a.nrows() != r.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} rows, vector has {} entries",
            a.nrows(),
            r.len()
        )));
    }
    Ok(LeastSquares::new(a)?.projected_energy(r.as_slice()))
}

/// A complex matrix split into real and imaginary `f64` parts so that products
/// can be dispatched to the real GEMM kernel.
#[derive(Debug, Clone)]
pub struct SplitMatrix {
    pub re: DMatrix<f64>,
    pub im: DMatrix<f64>,
}

impl SplitMatrix {
    pub fn from_complex(m: &CMatrix) -> Self {
        Self { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { re: DMatrix::zeros(rows, cols), im: DMatrix::zeros(rows, cols) }
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    /// `self · rhs` using four real products.
    pub fn mul(&self, rhs: &SplitMatrix) -> SplitMatrix {
        let mut re = &self.re * &rhs.re;
        re.gemm(-1.0, &self.im, &rhs.im, 1.0);
        let mut im = &self.re * &rhs.im;
        im.gemm(1.0, &self.im, &rhs.re, 1.0);
        SplitMatrix { re, im }
    }

    /// Adds `‖column_j‖²` to `acc[j]` for every column.
    pub fn accumulate_column_energy(&self, acc: &mut [f64]) {
        assert_eq!(acc.len(), self.ncols());
        for (j, a) in acc.iter_mut().enumerate() {
            let re = self.re.column(j);
            let im = self.im.column(j);
            *a += re.iter().chain(im.iter()).map(|x| x * x).sum::<f64>();
        }
    }
}
