use nalgebra::DMatrix;
use num_complex::Complex64;

use super::state::{check_register, PureState};
use crate::error::{Error, Result};

/// Tolerance used when validating density matrices.
pub const DENSITY_TOL: f64 = 1e-10;

/// Density matrix over `n_qubits` qubits (same big-endian basis as [`PureState`]).
#[derive(Clone, Debug, PartialEq)]
pub struct MixedState {
    n_qubits: usize,
    matrix: DMatrix<Complex64>,
}

impl MixedState {
    /// Validates Hermiticity, unit trace and positivity within [`DENSITY_TOL`].
    pub fn from_matrix(n_qubits: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(n_qubits, matrix)?;
        rho.validate(DENSITY_TOL)?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(n_qubits: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        check_register("density matrix", n_qubits)?;
        let dim = 1usize << n_qubits;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        Ok(MixedState { n_qubits, matrix })
    }

    /// |ψ><ψ|
    pub fn from_pure(psi: &PureState) -> Self {
        let v = nalgebra::DVector::from_column_slice(psi.amplitudes());
        MixedState {
            n_qubits: psi.n_qubits(),
            matrix: &v * v.adjoint(),
        }
    }

    /// Uniform mixture of pure states.
    pub fn mixture(states: &[PureState]) -> Result<Self> {
        let first = states.first().ok_or(Error::EmptyDataset)?;
        let dim = first.dim();
        let mut m = DMatrix::<Complex64>::zeros(dim, dim);
        for s in states {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
            let v = nalgebra::DVector::from_column_slice(s.amplitudes());
            m += &v * v.adjoint();
        }
        m /= Complex64::new(states.len() as f64, 0.0);
        Self::from_matrix_unchecked(first.n_qubits(), m)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Tr(ρ²)
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = &self.matrix - self.matrix.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = self.hermiticity_error();
        if herm > tol {
            return Err(Error::InvalidDensity(format!("not Hermitian (error {herm:e})")));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidDensity(format!("trace {tr} is not 1")));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if min < -tol {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// <ψ|ρ|ψ>, clamped to [0, 1].
    pub fn projection_prob(&self, psi: &PureState) -> Result<f64> {
        if psi.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: psi.dim(),
            });
        }
        Ok(quadratic_form(&self.matrix, psi.amplitudes()).clamp(0.0, 1.0))
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &MixedState) -> f64 {
        if self.dim() != other.dim() {
            return f64::INFINITY;
        }
        (&self.matrix - &other.matrix)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// Re <v|M|v> for a Hermitian M.
pub(crate) fn quadratic_form(m: &DMatrix<Complex64>, v: &[Complex64]) -> f64 {
    let n = v.len();
    let mut acc = 0.0;
    for r in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for c in 0..n {
            row += m[(r, c)] * v[c];
        }
        acc += (v[r].conj() * row).re;
    }
    acc
}

pub fn projection_prob(rho: &MixedState, psi: &PureState) -> Result<f64> {
    rho.projection_prob(psi)
}
