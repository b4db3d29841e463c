//! Thin wrappers over faer's symmetric eigensolver.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::diag::Diag;
use faer::{Mat, Par};

use crate::error::{Error, Result};

pub(crate) struct SymmetricEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Eigenvectors as columns.
    pub vectors: Mat<f64>,
}

/// Eigendecomposition of a real symmetric matrix (lower triangle is read).
///
/// `parallel = false` pins faer to sequential kernels so results do not
/// depend on the size of whatever thread pool the caller runs in.
pub(crate) fn symmetric_eigen(a: &Mat<f64>, parallel: bool) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidArgument("eigensolver needs a square matrix".into()));
    }
    let par = if parallel { faer::get_global_parallelism() } else { Par::Seq };
    let mut s = Diag::<f64>::zeros(n);
    let mut u = Mat::<f64>::zeros(n, n);
    if n > 0 {
        let scratch = evd::self_adjoint_evd_scratch::<f64>(n, ComputeEigenvectors::Yes, par, Default::default());
        let mut buf = MemBuffer::new(scratch);
        evd::self_adjoint_evd(
            a.as_ref(),
            s.as_mut(),
            Some(u.as_mut()),
            par,
            MemStack::new(&mut buf),
            Default::default(),
        )
        .map_err(|e| Error::Numerical(format!("symmetric eigensolver failed: {e:?}")))?;
    }
    let values = s.column_vector().iter().copied().collect();
    Ok(SymmetricEigen { values, vectors: u })
}

/// Spectral pseudo-inverse of a symmetric positive semidefinite matrix,
/// keeping eigenmodes with `lambda > rel_cutoff * lambda_max`.
pub(crate) struct PseudoInverse {
    /// Kept eigenvectors, one per row, each scaled by `lambda^{-1/2}`.
    modes: Vec<Vec<f64>>,
    pub rank: usize,
    pub max_eigenvalue: f64,
    pub min_eigenvalue: f64,
}

impl PseudoInverse {
    pub fn new(a: &Mat<f64>, rel_cutoff: f64) -> Result<Self> {
        let eig = symmetric_eigen(a, false)?;
        let max_eigenvalue = eig.values.last().copied().unwrap_or(0.0);
        let min_eigenvalue = eig.values.first().copied().unwrap_or(0.0);
        let cutoff = rel_cutoff * max_eigenvalue.max(0.0);
        let modes: Vec<Vec<f64>> = eig
            .values
            .iter()
            .enumerate()
            .filter(|(_, &lambda)| lambda > cutoff && lambda > 0.0)
            .map(|(k, &lambda)| {
                let scale = lambda.sqrt().recip();
                eig.vectors.col(k).iter().map(|v| v * scale).collect()
            })
            .collect();
        Ok(PseudoInverse {
            rank: modes.len(),
            modes,
            max_eigenvalue,
            min_eigenvalue,
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for mode in &self.modes {
            let c = dot(mode, x);
            for (o, m) in out.iter_mut().zip(mode) {
                *o += c * m;
            }
        }
        out
    }
}

pub(crate) fn mat_vec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut out = vec![0.0; n];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for i in 0..n {
            out[i] += col[i] * xj;
        }
    }
    out
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
