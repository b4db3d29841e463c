//! Lattices, the mixed-field Ising Hamiltonian and the generator pool.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pauli::{Letter, PauliString, WeightedPauliSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Chain1d,
    Rectangle2d,
}

/// Sites are indexed row-major, `site = y * lx + x`; qubit `site` is bit
/// `site` of a basis index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    kind: LatticeKind,
    lx: usize,
    ly: usize,
    pbc: bool,
    edges: Vec<(usize, usize)>,
}

impl Lattice {
    pub fn chain(n: usize, pbc: bool) -> Result<Self> {
        Self::build(LatticeKind::Chain1d, n, 1, pbc)
    }

    pub fn rectangle(lx: usize, ly: usize, pbc: bool) -> Result<Self> {
        Self::build(LatticeKind::Rectangle2d, lx, ly, pbc)
    }

    pub fn new(kind: LatticeKind, lx: usize, ly: usize, pbc: bool) -> Result<Self> {
        match kind {
            LatticeKind::Chain1d if ly != 1 => Err(Error::InvalidArgument(format!(
                "a chain has ly = 1, got {ly}"
            ))),
            _ => Self::build(kind, lx, ly, pbc),
        }
    }

    fn build(kind: LatticeKind, lx: usize, ly: usize, pbc: bool) -> Result<Self> {
        if lx == 0 || ly == 0 {
            return Err(Error::InvalidArgument("lattice dimensions must be positive".into()));
        }
        if lx * ly > crate::pauli::MAX_QUBITS {
            return Err(Error::InvalidArgument(format!("{lx}x{ly} lattice is too large")));
        }
        let site = |x: usize, y: usize| y * lx + x;
        // Wraparound bonds on short axes coincide with open bonds; the set
        // keeps a single copy of each unordered pair.
        let mut edges = BTreeSet::new();
        for y in 0..ly {
            for x in 0..lx {
                let here = site(x, y);
                let mut neighbours = Vec::with_capacity(2);
                if x + 1 < lx || (pbc && lx > 1) {
                    neighbours.push(site((x + 1) % lx, y));
                }
                if y + 1 < ly || (pbc && ly > 1) {
                    neighbours.push(site(x, (y + 1) % ly));
                }
                for there in neighbours {
                    if there != here {
                        edges.insert((here.min(there), here.max(there)));
                    }
                }
            }
        }
        Ok(Lattice {
            kind,
            lx,
            ly,
            pbc,
            edges: edges.into_iter().collect(),
        })
    }

    pub fn kind(&self) -> LatticeKind {
        self.kind
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.lx, self.ly)
    }

    pub fn pbc(&self) -> bool {
        self.pbc
    }

    pub fn n_sites(&self) -> usize {
        self.lx * self.ly
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Short label such as `8` or `4x3`.
    pub fn label(&self) -> String {
        match self.kind {
            LatticeKind::Chain1d => format!("{}", self.lx),
            LatticeKind::Rectangle2d => format!("{}x{}", self.lx, self.ly),
        }
    }
}

/// Couplings of `H = -J sum_<jk> Z_j Z_k - sum_j (h_x X_j + h_z Z_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    pub j: f64,
    pub h_x: f64,
    pub h_z: f64,
}

impl IsingParams {
    pub fn tfim(h_x: f64) -> Self {
        IsingParams { j: 1.0, h_x, h_z: 0.0 }
    }

    pub fn mfim(h_x: f64, h_z: f64) -> Self {
        IsingParams { j: 1.0, h_x, h_z }
    }
}

pub fn build_hamiltonian(lattice: &Lattice, params: &IsingParams) -> WeightedPauliSum {
    let n = lattice.n_sites();
    let mut terms = Vec::with_capacity(lattice.edges().len() + 2 * n);
    for &(a, b) in lattice.edges() {
        let zz = PauliString::from_letters(n, &[(a, Letter::Z), (b, Letter::Z)])
            .expect("lattice edges are in range");
        terms.push((-params.j, zz));
    }
    for site in 0..n {
        if params.h_x != 0.0 {
            terms.push((-params.h_x, PauliString::single(n, site, Letter::X).expect("in range")));
        }
        if params.h_z != 0.0 {
            terms.push((-params.h_z, PauliString::single(n, site, Letter::Z).expect("in range")));
        }
    }
    WeightedPauliSum::new(n, terms).expect("Ising terms are real and Hermitian")
}

/// `{Y_j} ∪ {Y_j Z_k, Z_j Y_k : j < k}`, in that order; the order is the
/// tie-break order for operator selection.
pub fn build_pool(n_qubits: usize) -> Result<Vec<PauliString>> {
    let mut pool = Vec::with_capacity(n_qubits * n_qubits);
    for j in 0..n_qubits {
        pool.push(PauliString::single(n_qubits, j, Letter::Y)?);
    }
    for j in 0..n_qubits {
        for k in j + 1..n_qubits {
            pool.push(PauliString::from_letters(n_qubits, &[(j, Letter::Y), (k, Letter::Z)])?);
            pool.push(PauliString::from_letters(n_qubits, &[(j, Letter::Z), (k, Letter::Y)])?);
        }
    }
    Ok(pool)
}

/// Magnetization per site, `m(b) = (N - 2 popcount(b)) / (2N)`.
pub fn magnetization(n_qubits: usize, b: u64) -> f64 {
    let n = n_qubits as f64;
    (n - 2.0 * b.count_ones() as f64) / (2.0 * n)
}
