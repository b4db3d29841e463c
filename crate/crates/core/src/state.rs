//! Dense statevector engine.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_size, Error, Result};
use crate::pauli::{mul_i_pow, PauliString, WeightedPauliSum};

/// Largest register the dense engine accepts (2^26 amplitudes, 1 GiB).
pub const MAX_STATE_QUBITS: usize = 26;

/// Drift beyond this is silently repaired by renormalizing.
pub const RENORM_TOLERANCE: f64 = 1e-10;
/// Drift beyond this means something upstream is broken.
pub const NORM_ABORT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn flipped(self) -> Basis {
        match self {
            Basis::Z => Basis::X,
            Basis::X => Basis::Z,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Z => "Z",
            Basis::X => "X",
        }
    }
}

/// Classical product state: `|bits>` in the Z basis, or `H^{(x)N}|bits>` in the X basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cps {
    pub bits: u64,
    pub basis: Basis,
}

impl Cps {
    pub fn z(bits: u64) -> Self {
        Cps {
            bits,
            basis: Basis::Z,
        }
    }

    pub fn x(bits: u64) -> Self {
        Cps {
            bits,
            basis: Basis::X,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

fn check_register(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_STATE_QUBITS {
        return Err(Error::InvalidArgument(format!(
            "statevector size must be in 1..={MAX_STATE_QUBITS} qubits, got {n_qubits}"
        )));
    }
    Ok(())
}

impl StateVector {
    pub fn prepare_cps(n_qubits: usize, cps: Cps) -> Result<Self> {
        check_register(n_qubits)?;
        let dim = 1usize << n_qubits;
        if cps.bits >= dim as u64 {
            return Err(Error::InvalidArgument(format!(
                "product state bits {:#b} do not fit {n_qubits} qubits",
                cps.bits
            )));
        }
        let amps = match cps.basis {
            Basis::Z => {
                let mut amps = vec![Complex64::new(0.0, 0.0); dim];
                amps[cps.bits as usize] = Complex64::new(1.0, 0.0);
                amps
            }
            Basis::X => {
                let scale = (dim as f64).sqrt().recip();
                (0..dim as u64)
                    .map(|b| {
                        let sign = if (cps.bits & b).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                        Complex64::new(sign * scale, 0.0)
                    })
                    .collect()
            }
        };
        Ok(StateVector { n_qubits, amps })
    }

    pub fn from_amplitudes(n_qubits: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_register(n_qubits)?;
        check_size(1 << n_qubits, amps.len())?;
        Ok(StateVector { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest `|Im a_b|` over the amplitudes.
    pub fn max_imag(&self) -> f64 {
        self.amps.iter().map(|a| a.im.abs()).fold(0.0, f64::max)
    }

    /// Rescale to unit norm if drift exceeds [`RENORM_TOLERANCE`]; fail past
    /// [`NORM_ABORT_TOLERANCE`].
    pub fn check_norm(&mut self) -> Result<()> {
        let norm = self.norm();
        let drift = (norm - 1.0).abs();
        if drift > NORM_ABORT_TOLERANCE {
            return Err(Error::Numerical(format!("statevector norm drifted to {norm}")));
        }
        if drift > RENORM_TOLERANCE {
            log::debug!("renormalizing statevector, norm {norm}");
            let inv = norm.recip();
            self.amps.iter_mut().for_each(|a| *a *= inv);
        }
        Ok(())
    }

    /// `|s> <- P|s>`.
    pub fn apply_pauli(&mut self, p: &PauliString) -> Result<()> {
        self.apply_pauli_scaled(p, 0)
    }

    /// `|s> <- i^k P|s>`.
    pub(crate) fn apply_pauli_scaled(&mut self, p: &PauliString, k: u32) -> Result<()> {
        check_size(self.n_qubits, p.n_qubits())?;
        let x = p.x_mask();
        if x == 0 {
            for (b, a) in self.amps.iter_mut().enumerate() {
                *a = mul_i_pow(*a, p.phase_exponent(b as u64) + k);
            }
            return Ok(());
        }
        let pivot = 1u64 << x.trailing_zeros();
        for b in 0..self.amps.len() as u64 {
            if b & pivot != 0 {
                continue;
            }
            let b2 = b ^ x;
            let (lo, hi) = (self.amps[b as usize], self.amps[b2 as usize]);
            self.amps[b2 as usize] = mul_i_pow(lo, p.phase_exponent(b) + k);
            self.amps[b as usize] = mul_i_pow(hi, p.phase_exponent(b2) + k);
        }
        Ok(())
    }

    /// `|s> <- exp(-i theta P)|s> = cos(theta)|s> - i sin(theta) P|s>`.
    pub fn apply_rotation(&mut self, p: &PauliString, theta: f64) -> Result<()> {
        check_size(self.n_qubits, p.n_qubits())?;
        if theta != 0.0 {
            rotate_raw(&mut self.amps, p, theta.sin_cos());
        }
        Ok(())
    }

    /// `O|s>` as a new (unnormalized) vector.
    pub fn applied(&self, op: &WeightedPauliSum) -> Result<StateVector> {
        check_size(self.n_qubits, op.n_qubits())?;
        let mut out = vec![Complex64::new(0.0, 0.0); self.amps.len()];
        op.apply_to(&self.amps, &mut out);
        Ok(StateVector {
            n_qubits: self.n_qubits,
            amps: out,
        })
    }

    /// `<s|O|s>` for a Hermitian `O`.
    pub fn expectation(&self, op: &WeightedPauliSum) -> Result<f64> {
        check_size(self.n_qubits, op.n_qubits())?;
        let mut total = Complex64::new(0.0, 0.0);
        let mut diag = 0.0;
        for (c, p) in op.terms() {
            let x = p.x_mask();
            if x == 0 {
                let mut acc = 0.0;
                for (b, a) in self.amps.iter().enumerate() {
                    let w = a.norm_sqr();
                    if (p.z_mask() & b as u64).count_ones() % 2 == 0 {
                        acc += w;
                    } else {
                        acc -= w;
                    }
                }
                diag += c * acc;
            } else {
                let mut acc = Complex64::new(0.0, 0.0);
                for (b, a) in self.amps.iter().enumerate() {
                    let b = b as u64;
                    acc += self.amps[(b ^ x) as usize].conj() * mul_i_pow(*a, p.phase_exponent(b));
                }
                total += acc * c;
            }
        }
        let scale = 1.0 + op.one_norm();
        if total.im.abs() > 1e-8 * scale {
            return Err(Error::Numerical(format!(
                "expectation value has imaginary part {}; phase convention broken",
                total.im
            )));
        }
        Ok(total.re + diag)
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64> {
        check_size(self.n_qubits, other.n_qubits)?;
        Ok(inner_raw(&self.amps, &other.amps))
    }

    /// Hadamard on every qubit (fast Walsh-Hadamard transform).
    pub fn apply_hadamard_all(&mut self) {
        let n = self.amps.len();
        let mut half = 1;
        while half < n {
            for start in (0..n).step_by(2 * half) {
                for b in start..start + half {
                    let (u, v) = (self.amps[b], self.amps[b + half]);
                    self.amps[b] = u + v;
                    self.amps[b + half] = u - v;
                }
            }
            half *= 2;
        }
        let scale = (n as f64).sqrt().recip();
        self.amps.iter_mut().for_each(|a| *a *= scale);
    }

    /// Measurement distribution of every qubit in `basis`.
    pub fn probabilities(&self, basis: Basis) -> Vec<f64> {
        match basis {
            Basis::Z => self.amps.iter().map(|a| a.norm_sqr()).collect(),
            Basis::X => {
                let mut rotated = self.clone();
                rotated.apply_hadamard_all();
                rotated.amps.iter().map(|a| a.norm_sqr()).collect()
            }
        }
    }

    /// Projective measurement of every qubit in `basis`; returns the outcome
    /// as a product state together with its probability.
    pub fn collapse<R: Rng + ?Sized>(&self, basis: Basis, rng: &mut R) -> Result<(Cps, f64)> {
        let probs = self.probabilities(basis);
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::Numerical(format!(
                "measurement probabilities sum to {total}"
            )));
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (b, p) in probs.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            acc += p;
            pick = Some(b);
            if u < acc {
                break;
            }
        }
        // `pick` falls back to the last nonzero entry when rounding leaves u >= acc.
        let b = pick.ok_or_else(|| Error::Numerical("all measurement probabilities vanish".into()))?;
        Ok((
            Cps {
                bits: b as u64,
                basis,
            },
            probs[b],
        ))
    }

    /// Raw dump: little-endian `(re, im)` pairs of `f64`, index-major.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for a in &self.amps {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }
}

/// `exp(-i theta P)` on raw amplitudes, given `(sin theta, cos theta)`.
///
/// With `P|b> = i^y (-1)^{|z & b|} |b ^ x>`, the pair `(b, b ^ x)` mixes
/// through the constant phase `omega = -i * i^y` and a sign per index.
pub(crate) fn rotate_raw(amps: &mut [Complex64], p: &PauliString, (s, c): (f64, f64)) {
    let (x, z) = (p.x_mask(), p.z_mask());
    let omega = (p.y_count() + 3) % 4;
    let parity = |b: u64| (z & b).count_ones() & 1;
    if x == 0 {
        for (b, a) in amps.iter_mut().enumerate() {
            let sb = if parity(b as u64) == 0 { s } else { -s };
            *a = *a * c + mul_i_pow(*a, omega) * sb;
        }
        return;
    }
    let low = (1u64 << x.trailing_zeros()) - 1;
    let flip = (z & x).count_ones() & 1;
    let half = (amps.len() / 2) as u64;
    // Odd y_count makes omega real, the case of every pool generator.
    let real_omega = match omega {
        0 => Some(s),
        2 => Some(-s),
        _ => None,
    };
    for k in 0..half {
        let b = ((k & !low) << 1) | (k & low);
        let b2 = b ^ x;
        let pb = parity(b);
        let (lo, hi) = (amps[b as usize], amps[b2 as usize]);
        match real_omega {
            Some(w) => {
                let (wb, wb2) = if pb == 0 { (w, if flip == 0 { w } else { -w }) } else { (-w, if flip == 0 { -w } else { w }) };
                amps[b2 as usize] = hi * c + lo * wb;
                amps[b as usize] = lo * c + hi * wb2;
            }
            None => {
                let (sb, sb2) = if pb == 0 { (s, if flip == 0 { s } else { -s }) } else { (-s, if flip == 0 { -s } else { s }) };
                amps[b2 as usize] = hi * c + mul_i_pow(lo, omega) * sb;
                amps[b as usize] = lo * c + mul_i_pow(hi, omega) * sb2;
            }
        }
    }
}

#[inline]
pub(crate) fn inner_raw(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // Split accumulation so the real and imaginary sums vectorize.
    let (mut re, mut im) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}
