//! Finite-temperature simulation of Ising spin models by sampling minimally
//! entangled typical thermal states (METTS), with each imaginary-time
//! propagation carried out by adaptive variational imaginary-time evolution
//! on a dense statevector.
//!
//! The crate is organized bottom-up:
//!
//! - [`pauli`]: bitmask Pauli strings and real-weighted Pauli sums.
//! - [`state`]: dense statevectors, product-state preparation, Pauli
//!   rotations, expectation values and projective collapse.
//! - [`model`]: lattices, the mixed-field Ising Hamiltonian and the
//!   generator pool.
//! - [`avqite`]: the adaptive pseudo-Trotter ansatz and its McLachlan
//!   equations of motion.
//! - [`metts`]: thermal steps, seeded parallel walkers and ensemble
//!   statistics.
//! - [`ed`]: the exact-diagonalization reference.
//! - [`analysis`]: magnetization moments, Binder cumulants and crossing
//!   extraction.

pub mod analysis;
pub mod avqite;
pub mod ed;
mod error;
mod linalg;
pub mod metts;
pub mod model;
pub mod pauli;
pub mod state;

pub use error::{Error, Result};

pub use analysis::{binder_u4, magnetization_moments, BinderPoint, Crossing, CurvePoint};
pub use avqite::{Ansatz, AvqiteParams, EvolveOutcome, StepDiagnostics};
pub use ed::Spectrum;
pub use metts::{EnsembleAccumulator, Observable, SampleRecord, SamplerConfig, ThermalProblem, Walker};
pub use model::{IsingParams, Lattice, LatticeKind};
pub use pauli::{Letter, PauliString, WeightedPauliSum};
pub use state::{Basis, Cps, StateVector};
