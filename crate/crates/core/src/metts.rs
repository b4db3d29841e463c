//! The METTS Markov chain.
//!
//! A walker holds a classical product state. Each thermal step propagates it
//! to `tau = beta / 2` with [`avqite::evolve`](crate::avqite::evolve),
//! measures observables on the normalized result and collapses it onto a new
//! product state, alternating the measurement basis between steps. Walkers
//! are independent, seeded from `(master_seed, walker_id)`, and run in
//! parallel; the merged ensemble is ordered by `(walker_id, step_index)` so it
//! does not depend on scheduling.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{magnetization_moments, population_std};
use crate::avqite::{evolve, AvqiteParams, StepDiagnostics};
use crate::error::{check_size, Error, Result};
use crate::pauli::{PauliString, WeightedPauliSum};
use crate::state::{Basis, Cps};

pub const DEFAULT_BURN_IN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Energy,
    /// `<m^2>` of the METTS.
    M2,
    /// `<m^4>` of the METTS.
    M4,
}

impl Observable {
    pub fn as_str(self) -> &'static str {
        match self {
            Observable::Energy => "energy",
            Observable::M2 => "m2",
            Observable::M4 => "m4",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub beta: f64,
    pub s_w: usize,
    pub s_0: usize,
    pub burn_in: usize,
    pub master_seed: u64,
    /// Basis of the first collapse; later collapses alternate.
    pub first_collapse: Basis,
    /// Energy is always recorded; the magnetization moments only on request.
    pub observables: Vec<Observable>,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            beta: 1.0,
            s_w: 1,
            s_0: 1,
            burn_in: DEFAULT_BURN_IN,
            master_seed: 0,
            first_collapse: Basis::X,
            observables: vec![Observable::Energy],
            threads: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.s_w == 0 || self.s_0 == 0 {
            return Err(Error::InvalidArgument("s_w and s_0 must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidArgument("threads must be at least 1".into()));
        }
        Ok(())
    }

    fn wants_magnetization(&self) -> bool {
        self.observables.iter().any(|o| matches!(o, Observable::M2 | Observable::M4))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub walker_id: u64,
    /// Thermal-step counter of the walker, burn-in included.
    pub step_index: usize,
    /// Basis of the product state this step evolved from.
    pub origin_basis: Basis,
    pub origin_bits: u64,
    pub energy: f64,
    pub m2: Option<f64>,
    pub m4: Option<f64>,
    pub n_theta: usize,
    pub n_cx: usize,
}

impl SampleRecord {
    pub fn value(&self, obs: Observable) -> Option<f64> {
        match obs {
            Observable::Energy => Some(self.energy),
            Observable::M2 => self.m2,
            Observable::M4 => self.m4,
        }
    }
}

/// The Hamiltonian, pool and evolution settings shared by every walker.
#[derive(Clone, Copy)]
pub struct ThermalProblem<'a> {
    pub h: &'a WeightedPauliSum,
    pub pool: &'a [PauliString],
    pub params: &'a AvqiteParams,
}

impl ThermalProblem<'_> {
    fn n_qubits(&self) -> usize {
        self.h.n_qubits()
    }
}

#[derive(Clone, Debug)]
pub struct Walker {
    id: u64,
    n_qubits: usize,
    current: Cps,
    next_collapse: Basis,
    rng: ChaCha8Rng,
    step_count: usize,
}

impl Walker {
    /// Starts from a uniformly random Z-basis product state drawn from the
    /// walker's own stream `(master_seed, id)`.
    pub fn new(n_qubits: usize, master_seed: u64, id: u64, first_collapse: Basis) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(id);
        let mask = if n_qubits >= 64 { u64::MAX } else { (1u64 << n_qubits) - 1 };
        let bits = rng.random::<u64>() & mask;
        Walker {
            id,
            n_qubits,
            current: Cps::z(bits),
            next_collapse: first_collapse,
            rng,
            step_count: 0,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn current(&self) -> Cps {
        self.current
    }

    pub fn next_collapse(&self) -> Basis {
        self.next_collapse
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// One evolve, measure, collapse cycle. Returns the record and the
    /// imaginary-time trace of the evolution.
    pub fn thermal_step(
        &mut self,
        problem: ThermalProblem<'_>,
        beta: f64,
        magnetization: bool,
    ) -> Result<(SampleRecord, Vec<StepDiagnostics>)> {
        check_size(self.n_qubits, problem.n_qubits())?;
        let out = evolve(self.current, problem.h, problem.pool, beta / 2.0, problem.params)?;
        let energy = out.state.expectation(problem.h)?;
        let (m2, m4) = if magnetization {
            let (a, b) = magnetization_moments(&out.state);
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        let record = SampleRecord {
            walker_id: self.id,
            step_index: self.step_count,
            origin_basis: self.current.basis,
            origin_bits: self.current.bits,
            energy,
            m2,
            m4,
            n_theta: out.ansatz.n_theta(),
            n_cx: out.ansatz.count_cnots(),
        };
        let (next, _) = out.state.collapse(self.next_collapse, &mut self.rng)?;
        self.current = next;
        self.next_collapse = self.next_collapse.flipped();
        self.step_count += 1;
        Ok((record, out.diagnostics))
    }
}

/// What one walker hands back.
struct WalkOutput {
    records: Vec<SampleRecord>,
    /// Trace of the first recorded step.
    trace: Vec<StepDiagnostics>,
}

/// Runs `burn_in + s_0` thermal steps and keeps the last `s_0` records.
pub fn run_walk(
    walker: &mut Walker,
    problem: ThermalProblem<'_>,
    beta: f64,
    s_0: usize,
    burn_in: usize,
    magnetization: bool,
) -> Result<Vec<SampleRecord>> {
    Ok(walk(walker, problem, beta, s_0, burn_in, magnetization)?.records)
}

fn walk(
    walker: &mut Walker,
    problem: ThermalProblem<'_>,
    beta: f64,
    s_0: usize,
    burn_in: usize,
    magnetization: bool,
) -> Result<WalkOutput> {
    if s_0 == 0 {
        return Err(Error::InvalidArgument("s_0 must be at least 1".into()));
    }
    let mut records = Vec::with_capacity(s_0);
    let mut trace = Vec::new();
    for k in 0..burn_in + s_0 {
        let (record, diagnostics) = walker.thermal_step(problem, beta, magnetization)?;
        if k == burn_in {
            trace = diagnostics;
        }
        if k >= burn_in {
            records.push(record);
        }
    }
    Ok(WalkOutput { records, trace })
}

/// Runs `s_w` walkers in parallel and merges their records in walker order.
///
/// The first failing walker aborts the run; its seed and step are reported in
/// [`Error::Walker`].
pub fn run_ensemble(problem: ThermalProblem<'_>, config: &SamplerConfig) -> Result<EnsembleAccumulator> {
    config.validate()?;
    problem.params.validate()?;
    let magnetization = config.wants_magnetization();
    let run_one = |id: u64| -> Result<WalkOutput> {
        let mut walker = Walker::new(problem.n_qubits(), config.master_seed, id, config.first_collapse);
        walk(&mut walker, problem, config.beta, config.s_0, config.burn_in, magnetization).map_err(|e| {
            log::error!(
                "walker {id} failed at thermal step {} (master seed {}): {e}",
                walker.step_count(),
                config.master_seed
            );
            Error::Walker {
                walker_id: id,
                master_seed: config.master_seed,
                step: walker.step_count(),
                source: Box::new(e),
            }
        })
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = config.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let outputs: Vec<Result<WalkOutput>> =
        pool.install(|| (0..config.s_w as u64).into_par_iter().map(run_one).collect());

    let mut records = Vec::with_capacity(config.s_w * config.s_0);
    let mut trace = Vec::new();
    for (id, out) in outputs.into_iter().enumerate() {
        let out = out?;
        if id == 0 {
            trace = out.trace;
        }
        records.extend(out.records);
    }
    Ok(EnsembleAccumulator {
        records,
        s_w: config.s_w,
        s_0: config.s_0,
        burn_in: config.burn_in,
        beta: config.beta,
        master_seed: config.master_seed,
        trace,
    })
}

/// Mean and population standard deviation of a CNOT-count subset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnotMoments {
    pub count: usize,
    pub mean: f64,
    pub sigma: f64,
}

impl CnotMoments {
    fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(CnotMoments {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            sigma: population_std(values),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnotStats {
    pub all: CnotMoments,
    /// Steps that evolved from an X-basis product state.
    pub x_origin: Option<CnotMoments>,
    pub z_origin: Option<CnotMoments>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Per-run summary; the CLI wraps it with a schema tag and the config echo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub beta: f64,
    pub s_w: usize,
    pub s_0: usize,
    pub burn_in: usize,
    pub master_seed: u64,
    pub n_samples: usize,
    pub observables: BTreeMap<String, Estimate>,
    pub n_theta_mean: f64,
    pub cnot: CnotStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleAccumulator {
    pub records: Vec<SampleRecord>,
    pub s_w: usize,
    pub s_0: usize,
    pub burn_in: usize,
    pub beta: f64,
    pub master_seed: u64,
    /// Imaginary-time trace of walker 0's first recorded thermal step.
    pub trace: Vec<StepDiagnostics>,
}

impl EnsembleAccumulator {
    /// Wraps an existing record list, e.g. for post-processing.
    pub fn from_records(records: Vec<SampleRecord>) -> Self {
        EnsembleAccumulator {
            s_w: 1,
            s_0: records.len(),
            records,
            burn_in: 0,
            beta: f64::NAN,
            master_seed: 0,
            trace: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self, obs: Observable) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.value(obs)
                    .ok_or_else(|| Error::InvalidArgument(format!("{} was not recorded", obs.as_str())))
            })
            .collect()
    }

    pub fn mean(&self, obs: Observable) -> Result<f64> {
        let v = self.values(obs)?;
        if v.is_empty() {
            return Err(Error::InvalidArgument("empty ensemble".into()));
        }
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// `(1/S) sqrt(sum_i (O_i - <O>)^2)`. This is the population standard
    /// deviation over `sqrt(S)`, slightly smaller than the textbook `s / sqrt(S)`
    /// that uses the `S - 1` sample variance.
    pub fn stderr(&self, obs: Observable) -> Result<f64> {
        let v = self.values(obs)?;
        if v.len() < 2 {
            return Err(Error::InvalidArgument("standard error needs two samples".into()));
        }
        let s = v.len() as f64;
        let mean = v.iter().sum::<f64>() / s;
        Ok(v.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt() / s)
    }

    pub fn estimate(&self, obs: Observable) -> Result<Estimate> {
        Ok(Estimate {
            mean: self.mean(obs)?,
            stderr: self.stderr(obs)?,
        })
    }

    pub fn cnot_stats(&self) -> Result<CnotStats> {
        let pick = |basis: Option<Basis>| -> Vec<f64> {
            self.records
                .iter()
                .filter(|r| basis.is_none_or(|b| r.origin_basis == b))
                .map(|r| r.n_cx as f64)
                .collect()
        };
        Ok(CnotStats {
            all: CnotMoments::of(&pick(None)).ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?,
            x_origin: CnotMoments::of(&pick(Some(Basis::X))),
            z_origin: CnotMoments::of(&pick(Some(Basis::Z))),
        })
    }

    /// `(m2, m4)` pairs, for Binder analysis.
    pub fn moments(&self) -> Result<Vec<(f64, f64)>> {
        Ok(self.values(Observable::M2)?.into_iter().zip(self.values(Observable::M4)?).collect())
    }

    pub fn summary(&self) -> Result<EnsembleSummary> {
        let mut observables = BTreeMap::new();
        for obs in [Observable::Energy, Observable::M2, Observable::M4] {
            if self.records.first().is_some_and(|r| r.value(obs).is_some()) {
                let est = if self.len() >= 2 {
                    self.estimate(obs)?
                } else {
                    Estimate {
                        mean: self.mean(obs)?,
                        stderr: f64::NAN,
                    }
                };
                observables.insert(obs.as_str().to_string(), est);
            }
        }
        Ok(EnsembleSummary {
            beta: self.beta,
            s_w: self.s_w,
            s_0: self.s_0,
            burn_in: self.burn_in,
            master_seed: self.master_seed,
            n_samples: self.len(),
            observables,
            n_theta_mean: self.records.iter().map(|r| r.n_theta as f64).sum::<f64>() / self.len().max(1) as f64,
            cnot: self.cnot_stats()?,
        })
    }

    /// One row per record: `walker_id,step_index,origin_basis,origin_bits,energy,m2,m4,n_theta,n_cx`.
    pub fn write_samples_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        for r in &self.records {
            csv.serialize(r)?;
        }
        csv.flush()?;
        Ok(())
    }
}
