//! Exact diagonalization reference.
//!
//! Everything here works from a dense eigendecomposition, so it is limited to
//! small systems (see [`DEFAULT_ED_CAP`]).

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;

use crate::avqite::{AvqiteParams, Evolver};
use crate::error::{check_size, Error, Result};
use crate::linalg::symmetric_eigen;
use crate::pauli::{PauliString, WeightedPauliSum};
use crate::state::{Cps, StateVector};

pub const DEFAULT_ED_CAP: usize = 14;

/// Dense real matrix of a sum whose terms all have an even number of `Y`s.
fn dense_real(h: &WeightedPauliSum) -> Result<Mat<f64>> {
    let dim = 1usize << h.n_qubits();
    let mut m = Mat::<f64>::zeros(dim, dim);
    for (c, p) in h.terms() {
        if p.y_count() % 2 == 1 {
            return Err(Error::InvalidArgument(format!("term {p} is not real in the Z basis")));
        }
        for b in 0..dim as u64 {
            let (out, phase) = p.apply(b);
            m[(out as usize, b as usize)] += c * phase.re;
        }
    }
    Ok(m)
}

#[derive(Clone, Debug)]
pub struct Spectrum {
    n_qubits: usize,
    /// Ascending.
    eigenvalues: Vec<f64>,
    /// Column `n` is the eigenvector of `eigenvalues[n]`.
    eigenvectors: Mat<f64>,
}

/// Full spectrum of `h`; fails above `cap` qubits.
pub fn diagonalize(h: &WeightedPauliSum, cap: usize) -> Result<Spectrum> {
    if h.n_qubits() > cap {
        return Err(Error::EdCapExceeded {
            n_qubits: h.n_qubits(),
            cap,
        });
    }
    let m = dense_real(h)?;
    let eig = symmetric_eigen(&m, true)?;
    Ok(Spectrum {
        n_qubits: h.n_qubits(),
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
    })
}

impl Spectrum {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// `E_1 - E_0` between the two lowest distinct levels, with levels closer
    /// than `degeneracy_tol` treated as one.
    pub fn gap(&self, degeneracy_tol: f64) -> Option<f64> {
        let e0 = self.eigenvalues[0];
        self.eigenvalues.iter().find(|&&e| e - e0 > degeneracy_tol).map(|e| e - e0)
    }

    pub fn eigenvector(&self, n: usize) -> Vec<f64> {
        self.eigenvectors.col(n).iter().copied().collect()
    }

    /// `exp(-beta (E_n - E_0))`.
    fn weights(&self, beta: f64) -> Vec<f64> {
        let e0 = self.eigenvalues[0];
        self.eigenvalues.iter().map(|e| (-beta * (e - e0)).exp()).collect()
    }

    /// `ln Z`, stable at large `beta`.
    pub fn log_partition_function(&self, beta: f64) -> f64 {
        let w: f64 = self.weights(beta).iter().sum();
        w.ln() - beta * self.eigenvalues[0]
    }

    pub fn partition_function(&self, beta: f64) -> f64 {
        self.log_partition_function(beta).exp()
    }

    /// Thermal average from per-level expectation values `<n|O|n>`.
    fn boltzmann_average(&self, beta: f64, diag: impl Iterator<Item = f64>) -> Result<f64> {
        check_beta(beta)?;
        let w = self.weights(beta);
        let z: f64 = w.iter().sum();
        Ok(w.iter().zip(diag).map(|(w, o)| w * o).sum::<f64>() / z)
    }

    pub fn thermal_energy(&self, beta: f64) -> Result<f64> {
        self.boltzmann_average(beta, self.eigenvalues.iter().copied())
    }

    pub fn thermal_average(&self, op: &WeightedPauliSum, beta: f64) -> Result<f64> {
        check_size(self.n_qubits, op.n_qubits())?;
        let dim = self.eigenvalues.len();
        let mut levels = Vec::with_capacity(dim);
        for n in 0..dim {
            let amps = self.eigenvectors.col(n).iter().map(|&x| Complex64::new(x, 0.0)).collect();
            let v = StateVector::from_amplitudes(self.n_qubits, amps)?;
            levels.push(v.expectation(op)?);
        }
        let levels = levels.into_iter();
        self.boltzmann_average(beta, levels)
    }

    /// Thermal average of an observable diagonal in the Z basis, given as a
    /// function of the basis index.
    pub fn thermal_average_diagonal(&self, beta: f64, f: impl Fn(u64) -> f64) -> Result<f64> {
        let dim = self.eigenvalues.len();
        let values: Vec<f64> = (0..dim as u64).map(f).collect();
        let levels = (0..dim).map(|n| {
            let v = self.eigenvectors.col(n);
            (0..dim).map(|b| v[b] * v[b] * values[b]).sum()
        });
        self.boltzmann_average(beta, levels)
    }

    /// Coefficients `<n|i>` of a product state in the eigenbasis.
    fn cps_coefficients(&self, cps: Cps) -> Result<Vec<f64>> {
        let state = StateVector::prepare_cps(self.n_qubits, cps)?;
        let amps = state.amplitudes();
        let dim = self.eigenvalues.len();
        Ok((0..dim)
            .map(|n| {
                let v = self.eigenvectors.col(n);
                (0..dim).map(|b| v[b] * amps[b].re).sum()
            })
            .collect())
    }

    /// Exact METTS `P^{-1/2} exp(-beta H / 2)|i>` and `ln P` with
    /// `P = <i|exp(-beta H)|i>`.
    pub fn exact_metts_log(&self, cps: Cps, beta: f64) -> Result<(StateVector, f64)> {
        check_beta(beta)?;
        ExactFlow::new(self, cps)?.at_tau(beta / 2.0)
    }

    /// Exact METTS and its weight `P`.
    pub fn exact_metts(&self, cps: Cps, beta: f64) -> Result<(StateVector, f64)> {
        let (s, ln_p) = self.exact_metts_log(cps, beta)?;
        Ok((s, ln_p.exp()))
    }

    /// Level diagram, one `index,energy` row per eigenvalue.
    pub fn write_levels_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["index", "energy"])?;
        for (n, e) in self.eigenvalues.iter().enumerate() {
            csv.write_record([n.to_string(), format!("{e:?}")])?;
        }
        csv.flush()?;
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {beta}")))
    }
}

/// Exact normalized imaginary-time flow `exp(-tau H)|i>` of one product state.
pub struct ExactFlow<'a> {
    spectrum: &'a Spectrum,
    coefficients: Vec<f64>,
}

impl<'a> ExactFlow<'a> {
    pub fn new(spectrum: &'a Spectrum, cps: Cps) -> Result<Self> {
        Ok(ExactFlow {
            spectrum,
            coefficients: spectrum.cps_coefficients(cps)?,
        })
    }

    /// Normalized state at `tau` and `ln <i|exp(-2 tau H)|i>`.
    pub fn at_tau(&self, tau: f64) -> Result<(StateVector, f64)> {
        let spec = self.spectrum;
        let e0 = spec.eigenvalues[0];
        let scaled: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&spec.eigenvalues)
            .map(|(c, e)| c * (-tau * (e - e0)).exp())
            .collect();
        let shifted_p: f64 = scaled.iter().map(|c| c * c).sum();
        if !(shifted_p > 0.0) {
            return Err(Error::Numerical("product state has no weight on the spectrum".into()));
        }
        let ln_p = shifted_p.ln() - 2.0 * tau * e0;
        let norm = shifted_p.sqrt();
        let dim = scaled.len();
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        for (n, c) in scaled.iter().enumerate() {
            if *c == 0.0 {
                continue;
            }
            let v = spec.eigenvectors.col(n);
            let c = c / norm;
            for (a, vb) in amps.iter_mut().zip(v.iter()) {
                a.re += c * vb;
            }
        }
        Ok((StateVector::from_amplitudes(spec.n_qubits, amps)?, ln_p))
    }

    /// `<H>` at `tau`, from level populations only.
    pub fn energy(&self, tau: f64) -> f64 {
        let spec = self.spectrum;
        let e0 = spec.eigenvalues[0];
        let mut num = 0.0;
        let mut den = 0.0;
        for (c, e) in self.coefficients.iter().zip(&spec.eigenvalues) {
            let w = c * c * (-2.0 * tau * (e - e0)).exp();
            num += w * e;
            den += w;
        }
        num / den
    }
}

/// One point of a variational-vs-exact comparison.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FidelityPoint {
    pub tau: f64,
    pub infidelity: f64,
    pub energy_error: f64,
    pub n_theta: usize,
}

/// Runs the variational evolution of `reference` next to the exact flow and
/// compares them on every step of the shared grid, starting at `tau = 0`.
pub fn fidelity_trace(
    spectrum: &Spectrum,
    reference: Cps,
    h: &WeightedPauliSum,
    pool: &[PauliString],
    params: &AvqiteParams,
    tau_final: f64,
) -> Result<Vec<FidelityPoint>> {
    check_size(spectrum.n_qubits, h.n_qubits())?;
    let exact = ExactFlow::new(spectrum, reference)?;
    let mut evolver = Evolver::new(reference, h, pool, tau_final, params)?;
    let mut out = vec![FidelityPoint {
        tau: 0.0,
        infidelity: 0.0,
        energy_error: 0.0,
        n_theta: 0,
    }];
    let scale = 1e-10 * (1.0 + h.one_norm());
    let mut previous_energy = exact.energy(0.0);
    while let Some(diag) = evolver.step()? {
        let (state, _) = exact.at_tau(diag.tau)?;
        let exact_energy = exact.energy(diag.tau);
        assert!(
            exact_energy <= previous_energy + scale,
            "exact imaginary-time energy rose from {previous_energy} to {exact_energy}"
        );
        previous_energy = exact_energy;
        let overlap = state.inner(evolver.state())?;
        out.push(FidelityPoint {
            tau: diag.tau,
            infidelity: (1.0 - overlap.norm_sqr()).max(0.0),
            energy_error: (diag.energy - exact_energy).abs(),
            n_theta: diag.n_theta,
        });
    }
    Ok(out)
}

/// Columns `tau,infidelity,energy_error,n_theta`.
pub fn write_fidelity_csv<W: Write>(w: W, points: &[FidelityPoint]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for p in points {
        csv.serialize(p)?;
    }
    csv.flush()?;
    Ok(())
}
