//! Pauli strings in symplectic (bitmask) form.
//!
//! Qubit `j` corresponds to bit `j` of a computational basis index. A string
//! is stored as two masks: bit `j` of `x_mask` is set when qubit `j` carries
//! `X` or `Y`, bit `j` of `z_mask` when it carries `Z` or `Y`.
//!
//! Phase convention: with `Y = i X Z`,
//!
//! ```text
//! P |b> = i^{y_count} (-1)^{popcount(z_mask & b)} |b ^ x_mask>
//! ```
//!
//! so `Y|0> = i|1>` and `Y|1> = -i|0>`, matching `Y = [[0, -i], [i, 0]]`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{check_size, Error, Result};

/// Largest register a [`PauliString`] can address.
pub const MAX_QUBITS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Letter {
    I,
    X,
    Y,
    Z,
}

impl Letter {
    fn from_char(c: char) -> Option<Letter> {
        match c {
            'I' => Some(Letter::I),
            'X' => Some(Letter::X),
            'Y' => Some(Letter::Y),
            'Z' => Some(Letter::Z),
            _ => None,
        }
    }

    fn as_char(self) -> char {
        match self {
            Letter::I => 'I',
            Letter::X => 'X',
            Letter::Y => 'Y',
            Letter::Z => 'Z',
        }
    }
}

/// Powers of `i`, indexed by exponent mod 4.
pub(crate) const I_POWERS: [Complex64; 4] = [
    Complex64::new(1.0, 0.0),
    Complex64::new(0.0, 1.0),
    Complex64::new(-1.0, 0.0),
    Complex64::new(0.0, -1.0),
];

/// Multiply `a` by `i^k` without a complex multiplication.
#[inline(always)]
pub(crate) fn mul_i_pow(a: Complex64, k: u32) -> Complex64 {
    match k & 3 {
        0 => a,
        1 => Complex64::new(-a.im, a.re),
        2 => -a,
        _ => Complex64::new(a.im, -a.re),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    x_mask: u64,
    z_mask: u64,
}

fn low_mask(n_qubits: usize) -> u64 {
    if n_qubits >= 64 {
        u64::MAX
    } else {
        (1u64 << n_qubits) - 1
    }
}

fn check_register(n_qubits: usize) -> Result<()> {
    if n_qubits == 0 || n_qubits > MAX_QUBITS {
        return Err(Error::InvalidArgument(format!(
            "register size must be in 1..={MAX_QUBITS}, got {n_qubits}"
        )));
    }
    Ok(())
}

impl PauliString {
    pub fn identity(n_qubits: usize) -> Result<Self> {
        check_register(n_qubits)?;
        Ok(PauliString {
            n_qubits,
            x_mask: 0,
            z_mask: 0,
        })
    }

    pub fn from_masks(n_qubits: usize, x_mask: u64, z_mask: u64) -> Result<Self> {
        check_register(n_qubits)?;
        let stray = (x_mask | z_mask) & !low_mask(n_qubits);
        if stray != 0 {
            return Err(Error::QubitOutOfRange {
                index: stray.trailing_zeros() as usize,
                n_qubits,
            });
        }
        Ok(PauliString {
            n_qubits,
            x_mask,
            z_mask,
        })
    }

    /// Builds a string from `(qubit, letter)` pairs; omitted qubits carry identity.
    pub fn from_letters(n_qubits: usize, letters: &[(usize, Letter)]) -> Result<Self> {
        check_register(n_qubits)?;
        let mut seen = 0u64;
        let (mut x_mask, mut z_mask) = (0u64, 0u64);
        for &(index, letter) in letters {
            if index >= n_qubits {
                return Err(Error::QubitOutOfRange { index, n_qubits });
            }
            let bit = 1u64 << index;
            if seen & bit != 0 {
                return Err(Error::DuplicateQubit(index));
            }
            seen |= bit;
            match letter {
                Letter::I => {}
                Letter::X => x_mask |= bit,
                Letter::Z => z_mask |= bit,
                Letter::Y => {
                    x_mask |= bit;
                    z_mask |= bit;
                }
            }
        }
        Ok(PauliString {
            n_qubits,
            x_mask,
            z_mask,
        })
    }

    pub fn single(n_qubits: usize, qubit: usize, letter: Letter) -> Result<Self> {
        Self::from_letters(n_qubits, &[(qubit, letter)])
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn x_mask(&self) -> u64 {
        self.x_mask
    }

    pub fn z_mask(&self) -> u64 {
        self.z_mask
    }

    pub fn y_count(&self) -> u32 {
        (self.x_mask & self.z_mask).count_ones()
    }

    /// Number of non-identity letters.
    pub fn weight(&self) -> u32 {
        (self.x_mask | self.z_mask).count_ones()
    }

    pub fn is_identity(&self) -> bool {
        self.x_mask == 0 && self.z_mask == 0
    }

    /// True when the string contains no `X` or `Y`, i.e. is diagonal in the Z basis.
    pub fn is_diagonal(&self) -> bool {
        self.x_mask == 0
    }

    pub fn letter(&self, qubit: usize) -> Letter {
        let x = (self.x_mask >> qubit) & 1 == 1;
        let z = (self.z_mask >> qubit) & 1 == 1;
        match (x, z) {
            (false, false) => Letter::I,
            (true, false) => Letter::X,
            (true, true) => Letter::Y,
            (false, true) => Letter::Z,
        }
    }

    /// Non-identity letters in ascending qubit order.
    pub fn letters(&self) -> Vec<(usize, Letter)> {
        let mut support = self.x_mask | self.z_mask;
        let mut out = Vec::with_capacity(support.count_ones() as usize);
        while support != 0 {
            let q = support.trailing_zeros() as usize;
            out.push((q, self.letter(q)));
            support &= support - 1;
        }
        out
    }

    /// Exponent `k` such that `P|b> = i^k |b ^ x_mask>`.
    #[inline(always)]
    pub(crate) fn phase_exponent(&self, b: u64) -> u32 {
        self.y_count() + 2 * (self.z_mask & b).count_ones()
    }

    /// Action on a computational basis state: `P|b> = phase |b'>`.
    pub fn apply(&self, b: u64) -> (u64, Complex64) {
        debug_assert!(b <= low_mask(self.n_qubits));
        (
            b ^ self.x_mask,
            I_POWERS[(self.phase_exponent(b) & 3) as usize],
        )
    }

    pub fn commutes(&self, other: &PauliString) -> Result<bool> {
        check_size(self.n_qubits, other.n_qubits)?;
        let overlap =
            (self.x_mask & other.z_mask).count_ones() + (self.z_mask & other.x_mask).count_ones();
        Ok(overlap % 2 == 0)
    }
}

impl PartialOrd for PauliString {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PauliString {
    /// Orders by support (highest qubit last), then by letters.
    fn cmp(&self, other: &Self) -> Ordering {
        self.n_qubits
            .cmp(&other.n_qubits)
            .then_with(|| (self.x_mask | self.z_mask).cmp(&(other.x_mask | other.z_mask)))
            .then_with(|| self.x_mask.cmp(&other.x_mask))
            .then_with(|| self.z_mask.cmp(&other.z_mask))
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_identity() {
            return f.write_str("I");
        }
        for (k, (q, letter)) in self.letters().into_iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}{}", letter.as_char(), q)?;
        }
        Ok(())
    }
}

impl PauliString {
    /// Parses the whitespace-separated form produced by `Display`, e.g. `"Y0 Z3"` or `"I"`.
    pub fn parse(n_qubits: usize, text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        Self::parse_tokens(n_qubits, &tokens).map_err(|reason| Error::parse(text, reason))
    }

    fn parse_tokens(n_qubits: usize, tokens: &[&str]) -> Result<Self, String> {
        if tokens.is_empty() {
            return Err("empty Pauli string".into());
        }
        if tokens == ["I"] {
            return PauliString::identity(n_qubits).map_err(|e| e.to_string());
        }
        let mut letters = Vec::with_capacity(tokens.len());
        for tok in tokens {
            let mut chars = tok.chars();
            let letter = chars
                .next()
                .and_then(Letter::from_char)
                .ok_or_else(|| format!("bad Pauli token `{tok}`"))?;
            let index: usize = chars
                .as_str()
                .parse()
                .map_err(|_| format!("bad qubit index in `{tok}`"))?;
            letters.push((index, letter));
        }
        PauliString::from_letters(n_qubits, &letters).map_err(|e| e.to_string())
    }
}

/// A Hermitian operator `sum_k c_k P_k` with real coefficients.
///
/// Terms are kept sorted with duplicates merged, so two sums describing the
/// same operator compare equal.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedPauliSum {
    n_qubits: usize,
    terms: Vec<(f64, PauliString)>,
}

impl WeightedPauliSum {
    pub fn new(n_qubits: usize, terms: impl IntoIterator<Item = (f64, PauliString)>) -> Result<Self> {
        check_register(n_qubits)?;
        let mut terms: Vec<(f64, PauliString)> = terms.into_iter().collect();
        for (c, p) in &terms {
            check_size(n_qubits, p.n_qubits)?;
            if !c.is_finite() {
                return Err(Error::InvalidArgument(format!("coefficient {c} of {p}")));
            }
            // An odd number of Y letters makes the string antisymmetric, so a
            // real coefficient would not give a Hermitian operator.
            if p.y_count() % 2 == 1 {
                return Err(Error::InvalidArgument(format!(
                    "{p} is imaginary-symmetric; not allowed in a real-weighted sum"
                )));
            }
        }
        terms.sort_by(|a, b| a.1.cmp(&b.1));
        let mut merged: Vec<(f64, PauliString)> = Vec::with_capacity(terms.len());
        for (c, p) in terms {
            match merged.last_mut() {
                Some(last) if last.1 == p => last.0 += c,
                _ => merged.push((c, p)),
            }
        }
        merged.retain(|(c, _)| *c != 0.0);
        Ok(WeightedPauliSum {
            n_qubits,
            terms: merged,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn terms(&self) -> &[(f64, PauliString)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sum of `|c_k|`, an upper bound on the operator norm.
    pub fn one_norm(&self) -> f64 {
        self.terms.iter().map(|(c, _)| c.abs()).sum()
    }

    /// Diagonal matrix element `<b|O|b>`; only Z-type terms contribute.
    pub fn diagonal_element(&self, b: u64) -> f64 {
        self.terms
            .iter()
            .filter(|(_, p)| p.is_diagonal())
            .map(|(c, p)| {
                if (p.z_mask() & b).count_ones() % 2 == 0 {
                    *c
                } else {
                    -*c
                }
            })
            .sum()
    }

    /// `out = O |input>` on raw amplitude slices of length `2^n_qubits`.
    pub(crate) fn apply_to(&self, input: &[Complex64], out: &mut [Complex64]) {
        debug_assert_eq!(input.len(), out.len());
        out.iter_mut().for_each(|a| *a = Complex64::new(0.0, 0.0));
        // Z-type terms share one diagonal pass.
        let diagonal: Vec<(f64, u64)> = self
            .terms
            .iter()
            .filter(|(_, p)| p.is_diagonal())
            .map(|(c, p)| (*c, p.z_mask()))
            .collect();
        if !diagonal.is_empty() {
            for (b, (o, a)) in out.iter_mut().zip(input).enumerate() {
                let b = b as u64;
                let d: f64 = diagonal
                    .iter()
                    .map(|&(c, z)| if (z & b).count_ones() % 2 == 0 { c } else { -c })
                    .sum();
                *o += a * d;
            }
        }
        for (c, p) in self.terms.iter().filter(|(_, p)| !p.is_diagonal()) {
            let x = p.x_mask();
            for (b, a) in input.iter().enumerate() {
                let b = b as u64;
                let k = p.phase_exponent(b);
                out[(b ^ x) as usize] += mul_i_pow(*a, k) * *c;
            }
        }
    }
}

impl fmt::Display for WeightedPauliSum {
    /// `+1.0 * Y0 Z3 -0.5 * X1`; coefficients use the shortest round-trip form.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("+0.0 * I");
        }
        for (k, (c, p)) in self.terms.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            let sign = if c.is_sign_negative() { '-' } else { '+' };
            write!(f, "{sign}{:?} * {p}", c.abs())?;
        }
        Ok(())
    }
}

impl WeightedPauliSum {
    pub fn parse(n_qubits: usize, text: &str) -> Result<Self> {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut terms = Vec::new();
        let mut k = 0;
        while k < tokens.len() {
            let coef_tok = tokens[k];
            if !coef_tok.starts_with(['+', '-']) {
                return Err(Error::parse(text, format!("expected signed coefficient, found `{coef_tok}`")));
            }
            let coef = f64::from_str(coef_tok)
                .map_err(|_| Error::parse(text, format!("bad coefficient `{coef_tok}`")))?;
            if tokens.get(k + 1) != Some(&"*") {
                return Err(Error::parse(text, "expected `*` after coefficient"));
            }
            k += 2;
            let start = k;
            while k < tokens.len() && !tokens[k].starts_with(['+', '-']) {
                k += 1;
            }
            let pauli = PauliString::parse_tokens(n_qubits, &tokens[start..k])
                .map_err(|reason| Error::parse(text, reason))?;
            terms.push((coef, pauli));
        }
        WeightedPauliSum::new(n_qubits, terms)
    }
}
