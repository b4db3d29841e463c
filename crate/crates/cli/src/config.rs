//! Run configuration: a TOML file with optional flag overrides.

use std::path::{Path, PathBuf};

use avqmetts_core::metts::DEFAULT_BURN_IN;
use avqmetts_core::model::build_hamiltonian;
use avqmetts_core::{AvqiteParams, Basis, Cps, IsingParams, Lattice, LatticeKind, Observable, SamplerConfig, WeightedPauliSum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Environment variable naming the directory that relative output paths
/// are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "AVQMETTS_OUTPUT_ROOT";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub avqite: AvqiteParams,
    pub sampling: SamplingConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub lattice: LatticeKind,
    pub lx: usize,
    pub ly: usize,
    pub pbc: bool,
    pub j: f64,
    pub h_x: f64,
    pub h_z: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            lattice: LatticeKind::Chain1d,
            lx: 4,
            ly: 1,
            pbc: true,
            j: 1.0,
            h_x: 1.0,
            h_z: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn lattice_of(&self, lx: usize, ly: usize) -> CliResult<Lattice> {
        Ok(Lattice::new(self.lattice, lx, ly, self.pbc)?)
    }

    pub fn lattice(&self) -> CliResult<Lattice> {
        self.lattice_of(self.lx, self.ly)
    }

    pub fn ising(&self, h_x: f64) -> IsingParams {
        IsingParams { j: self.j, h_x, h_z: self.h_z }
    }

    pub fn hamiltonian(&self) -> CliResult<WeightedPauliSum> {
        Ok(build_hamiltonian(&self.lattice()?, &self.ising(self.h_x)))
    }
}

/// A single inverse temperature or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    One(f64),
    Many(Vec<f64>),
}

impl BetaSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            BetaSpec::One(b) => vec![*b],
            BetaSpec::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub beta: BetaSpec,
    pub s_w: usize,
    pub s_0: usize,
    pub burn_in: usize,
    pub master_seed: u64,
    pub first_collapse: Basis,
    pub observables: Vec<Observable>,
    /// Worker threads; absent means every available core.
    pub threads: Option<usize>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            beta: BetaSpec::One(1.0),
            s_w: 8,
            s_0: 8,
            burn_in: DEFAULT_BURN_IN,
            master_seed: 0,
            first_collapse: Basis::X,
            observables: vec![Observable::Energy],
            threads: None,
        }
    }
}

impl SamplingConfig {
    pub fn sampler(&self, beta: f64, master_seed: u64, observables: Vec<Observable>) -> SamplerConfig {
        SamplerConfig {
            beta,
            s_w: self.s_w,
            s_0: self.s_0,
            burn_in: self.burn_in,
            master_seed,
            first_collapse: self.first_collapse,
            observables,
            threads: self.threads,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Field values of a Binder scan, ascending.
    pub h_x_grid: Vec<f64>,
    /// `[lx, ly]` of every lattice in a Binder scan.
    pub sizes: Vec<[usize; 2]>,
    pub bootstrap_resamples: usize,
    pub crossing_resamples: usize,
    /// Adds exact Binder values for sizes within `ed_cap`.
    pub ed_overlay: bool,
    pub ed_cap: usize,
    /// Prefix lengths of the `U4` convergence table.
    pub convergence_samples: Vec<usize>,
    /// Product state followed by the `fidelity` subcommand.
    pub reference: Cps,
    pub tau_final: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            h_x_grid: Vec::new(),
            sizes: Vec::new(),
            bootstrap_resamples: 1000,
            crossing_resamples: 1000,
            ed_overlay: true,
            ed_cap: avqmetts_core::ed::DEFAULT_ED_CAP,
            convergence_samples: vec![16, 32, 64, 128, 256, 512, 1024],
            reference: Cps::z(0),
            tau_final: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("avqmetts-out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// The output directory, under the output root when it is relative.
    pub fn resolved_directory(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if self.directory.is_relative() => Path::new(&root).join(&self.directory),
            _ => self.directory.clone(),
        }
    }
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub beta: Option<Vec<f64>>,
    pub s_w: Option<usize>,
    pub s_0: Option<usize>,
    pub burn_in: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub lx: Option<usize>,
    pub ly: Option<usize>,
    pub j: Option<f64>,
    pub h_x: Option<f64>,
    pub h_z: Option<f64>,
    pub delta_tau: Option<f64>,
    pub l_cut: Option<f64>,
    pub solver_cutoff: Option<f64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut self.output.directory, &o.output);
        if let Some(b) = &o.beta {
            self.sampling.beta = if b.len() == 1 { BetaSpec::One(b[0]) } else { BetaSpec::Many(b.clone()) };
        }
        set(&mut self.sampling.s_w, &o.s_w);
        set(&mut self.sampling.s_0, &o.s_0);
        set(&mut self.sampling.burn_in, &o.burn_in);
        set(&mut self.sampling.master_seed, &o.seed);
        if o.threads.is_some() {
            self.sampling.threads = o.threads;
        }
        set(&mut self.model.lx, &o.lx);
        set(&mut self.model.ly, &o.ly);
        set(&mut self.model.j, &o.j);
        set(&mut self.model.h_x, &o.h_x);
        set(&mut self.model.h_z, &o.h_z);
        set(&mut self.avqite.delta_tau, &o.delta_tau);
        set(&mut self.avqite.l_cut, &o.l_cut);
        set(&mut self.avqite.solver_cutoff, &o.solver_cutoff);
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let m = &self.model;
        for (name, v) in [("j", m.j), ("h_x", m.h_x), ("h_z", m.h_z)] {
            if !v.is_finite() {
                return bad(format!("model.{name} must be finite, got {v}"));
            }
        }
        m.lattice()?;
        self.avqite.validate()?;
        let betas = self.sampling.beta.values();
        if betas.is_empty() {
            return bad("sampling.beta must name at least one value".into());
        }
        for b in betas {
            self.sampling.sampler(b, 0, Vec::new()).validate()?;
        }
        let a = &self.analysis;
        if a.h_x_grid.iter().any(|h| !h.is_finite()) {
            return bad("analysis.h_x_grid must be finite".into());
        }
        if a.h_x_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("analysis.h_x_grid must be strictly ascending".into());
        }
        if a.bootstrap_resamples < 100 {
            return bad("analysis.bootstrap_resamples must be at least 100".into());
        }
        if !(a.tau_final.is_finite() && a.tau_final >= 0.0) {
            return bad(format!("analysis.tau_final must be finite and >= 0, got {}", a.tau_final));
        }
        for &[lx, ly] in &a.sizes {
            m.lattice_of(lx, ly)?;
        }
        Ok(())
    }
}
