//! The four subcommands. Each writes its artifacts under the resolved output
//! directory and returns the paths it wrote.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use avqmetts_core::analysis::{binder_bootstrap, find_crossing, write_binder_csv};
use avqmetts_core::ed::{self, diagonalize, Spectrum};
use avqmetts_core::metts::{run_ensemble, EnsembleSummary};
use avqmetts_core::model::{build_hamiltonian, build_pool, magnetization};
use avqmetts_core::{avqite, binder_u4, BinderPoint, CurvePoint, Observable, ThermalProblem};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::error::{CliError, CliResult};

pub const SUMMARY_SCHEMA: &str = "avqmetts/summary/v1";
pub const ED_SCHEMA: &str = "avqmetts/ed/v1";
pub const CROSSING_SCHEMA: &str = "avqmetts/crossing/v1";
pub const FIDELITY_SCHEMA: &str = "avqmetts/fidelity/v1";

/// Independent seed for sub-run `index`, drawn from stream `index` of the
/// master seed.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng.next_u64()
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn prepare(config: &RunConfig) -> CliResult<PathBuf> {
    config.validate()?;
    let dir = config.output.resolved_directory();
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

#[derive(Serialize)]
struct BetaRun {
    beta: f64,
    seed: u64,
    /// Relative to the run directory; empty when CSV output is off.
    samples_file: String,
    diagnostics_file: String,
    summary: EnsembleSummary,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    schema: &'static str,
    config: &'a RunConfig,
    master_seed: u64,
    partial: bool,
    error: Option<String>,
    runs: Vec<BetaRun>,
}

/// Energy table row of a temperature sweep.
#[derive(Serialize)]
struct EnergyRow {
    beta: f64,
    energy: f64,
    stderr: f64,
    n_samples: usize,
}

/// One ensemble per `beta`; returns the run directory.
pub fn cmd_run(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = prepare(config)?;
    let h = config.model.hamiltonian()?;
    let pool = build_pool(h.n_qubits())?;
    let problem = ThermalProblem { h: &h, pool: &pool, params: &config.avqite };
    let betas = config.sampling.beta.values();
    let csv = config.output.wants(Format::Csv);
    let mut runs = Vec::new();
    let mut failure = None;
    for (i, &beta) in betas.iter().enumerate() {
        let seed = derive_seed(config.sampling.master_seed, i as u64);
        let sampler = config.sampling.sampler(beta, seed, config.sampling.observables.clone());
        log::info!("beta = {beta}: {} walkers x {} samples", sampler.s_w, sampler.s_0);
        let acc = match run_ensemble(problem, &sampler) {
            Ok(acc) => acc,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let prefix = if betas.len() == 1 { String::new() } else { format!("beta_{i}/") };
        let (samples_file, diagnostics_file) = if csv {
            let s = format!("{prefix}samples.csv");
            let d = format!("{prefix}diagnostics.csv");
            acc.write_samples_csv(create(&dir.join(&s))?)?;
            avqite::write_diagnostics_csv(create(&dir.join(&d))?, &acc.trace)?;
            (s, d)
        } else {
            (String::new(), String::new())
        };
        runs.push(BetaRun { beta, seed, samples_file, diagnostics_file, summary: acc.summary()? });
    }
    if csv {
        let mut w = csv::Writer::from_writer(create(&dir.join("energy.csv"))?);
        for r in &runs {
            let e = r.summary.observables.get(Observable::Energy.as_str());
            w.serialize(EnergyRow {
                beta: r.beta,
                energy: e.map_or(f64::NAN, |e| e.mean),
                stderr: e.map_or(f64::NAN, |e| e.stderr),
                n_samples: r.summary.n_samples,
            })?;
        }
        w.flush()?;
    }
    let summary = RunSummary {
        schema: SUMMARY_SCHEMA,
        config,
        master_seed: config.sampling.master_seed,
        partial: failure.is_some(),
        error: failure.as_ref().map(|e| e.to_string()),
        runs,
    };
    // The summary is always written so a failed run still leaves a record.
    write_json(&dir.join("summary.json"), &summary)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(dir),
    }
}

/// `(<m^2>, <m^4>, U4)` of the exact thermal state.
fn exact_moments(spectrum: &Spectrum, beta: f64) -> CliResult<(f64, f64, f64)> {
    let n = spectrum.n_qubits();
    let m2 = spectrum.thermal_average_diagonal(beta, |b| magnetization(n, b).powi(2))?;
    let m4 = spectrum.thermal_average_diagonal(beta, |b| magnetization(n, b).powi(4))?;
    Ok((m2, m4, binder_u4(m2, m4)?))
}

#[derive(Serialize)]
struct ThermalRow {
    beta: f64,
    energy: f64,
    m2: f64,
    m4: f64,
    u4: f64,
}

#[derive(Serialize)]
struct EdSummary<'a> {
    schema: &'static str,
    config: &'a RunConfig,
    n_qubits: usize,
    ground_energy: f64,
    gap: Option<f64>,
}

/// Spectrum and exact thermal table at every configured `beta`.
pub fn cmd_ed(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = prepare(config)?;
    let h = config.model.hamiltonian()?;
    let spectrum = diagonalize(&h, config.analysis.ed_cap)?;
    if config.output.wants(Format::Csv) {
        spectrum.write_levels_csv(create(&dir.join("spectrum.csv"))?)?;
        let mut w = csv::Writer::from_writer(create(&dir.join("thermal.csv"))?);
        for beta in config.sampling.beta.values() {
            let (m2, m4, u4) = exact_moments(&spectrum, beta)?;
            w.serialize(ThermalRow { beta, energy: spectrum.thermal_energy(beta)?, m2, m4, u4 })?;
        }
        w.flush()?;
    }
    if config.output.wants(Format::Json) {
        let summary = EdSummary {
            schema: ED_SCHEMA,
            config,
            n_qubits: spectrum.n_qubits(),
            ground_energy: spectrum.ground_energy(),
            gap: spectrum.gap(1e-8),
        };
        write_json(&dir.join("ed.json"), &summary)?;
    }
    Ok(dir)
}

#[derive(Serialize)]
struct PairCrossing {
    sizes: [String; 2],
    status: &'static str,
    h_x_c: Option<f64>,
    error: Option<f64>,
    candidates: Vec<f64>,
}

#[derive(Serialize)]
struct CrossingReport<'a> {
    schema: &'static str,
    config: &'a RunConfig,
    beta: f64,
    pairs: Vec<PairCrossing>,
}

#[derive(Serialize)]
struct ConvergenceRow {
    size: String,
    h_x: f64,
    samples: usize,
    u4: f64,
    error: f64,
}

/// Binder curves for every configured size and their pairwise crossings.
///
/// Artifacts are written before a missing crossing is reported as an error.
pub fn cmd_binder(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = prepare(config)?;
    let a = &config.analysis;
    if a.sizes.len() < 2 || a.h_x_grid.len() < 2 {
        return Err(CliError::Config(
            "a Binder scan needs at least two sizes and two grid points".into(),
        ));
    }
    let betas = config.sampling.beta.values();
    let [beta] = betas.as_slice() else {
        return Err(CliError::Config("a Binder scan takes a single beta".into()));
    };
    let beta = *beta;
    let master = config.sampling.master_seed;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, u64::MAX));
    let observables = vec![Observable::Energy, Observable::M2, Observable::M4];

    let mut points: Vec<BinderPoint> = a
        .h_x_grid
        .iter()
        .map(|&h_x| BinderPoint { h_x, u4_by_size: Default::default(), ed_by_size: Default::default(), n_samples: 0 })
        .collect();
    let mut curves: Vec<(String, Vec<CurvePoint>)> = Vec::new();
    let mut convergence = Vec::new();
    for (s, &[lx, ly]) in a.sizes.iter().enumerate() {
        let lattice = config.model.lattice_of(lx, ly)?;
        let label = lattice.label();
        let pool = build_pool(lattice.n_sites())?;
        let mut curve = Vec::new();
        for (k, &h_x) in a.h_x_grid.iter().enumerate() {
            let h = build_hamiltonian(&lattice, &config.model.ising(h_x));
            let seed = derive_seed(master, (s * a.h_x_grid.len() + k) as u64);
            log::info!("size {label}, h_x = {h_x}");
            let acc = run_ensemble(
                ThermalProblem { h: &h, pool: &pool, params: &config.avqite },
                &config.sampling.sampler(beta, seed, observables.clone()),
            )?;
            let moments = acc.moments()?;
            let (u4, error) = binder_bootstrap(&moments, a.bootstrap_resamples, &mut rng)?;
            for &samples in a.convergence_samples.iter().filter(|&&c| c < moments.len()) {
                let (u4, error) = binder_bootstrap(&moments[..samples], a.bootstrap_resamples, &mut rng)?;
                convergence.push(ConvergenceRow { size: label.clone(), h_x, samples, u4, error });
            }
            convergence.push(ConvergenceRow { size: label.clone(), h_x, samples: moments.len(), u4, error });
            let point = &mut points[k];
            point.u4_by_size.insert(label.clone(), (u4, error));
            point.n_samples = moments.len();
            if a.ed_overlay && lattice.n_sites() <= a.ed_cap {
                let spectrum = diagonalize(&h, a.ed_cap)?;
                point.ed_by_size.insert(label.clone(), exact_moments(&spectrum, beta)?.2);
            }
            curve.push(CurvePoint { h_x, u4, error });
        }
        curves.push((label, curve));
    }
    if config.output.wants(Format::Csv) {
        write_binder_csv(create(&dir.join("binder.csv"))?, &points)?;
        let mut w = csv::Writer::from_writer(create(&dir.join("convergence.csv"))?);
        for row in &convergence {
            w.serialize(row)?;
        }
        w.flush()?;
    }

    let mut pairs = Vec::new();
    for i in 0..curves.len() {
        for j in i + 1..curves.len() {
            let sizes = [curves[i].0.clone(), curves[j].0.clone()];
            let pair = match find_crossing(&curves[i].1, &curves[j].1, a.crossing_resamples, &mut rng) {
                Ok(c) => PairCrossing { sizes, status: "ok", h_x_c: Some(c.h_x_c), error: Some(c.error), candidates: vec![c.h_x_c] },
                Err(avqmetts_core::Error::NoCrossing) => {
                    PairCrossing { sizes, status: "no_crossing", h_x_c: None, error: None, candidates: Vec::new() }
                }
                Err(avqmetts_core::Error::AmbiguousCrossing(candidates)) => {
                    PairCrossing { sizes, status: "ambiguous", h_x_c: None, error: None, candidates }
                }
                Err(e) => return Err(e.into()),
            };
            pairs.push(pair);
        }
    }
    let failed: Vec<String> = pairs
        .iter()
        .filter(|p| p.status != "ok")
        .map(|p| format!("{} vs {}: {}", p.sizes[0], p.sizes[1], p.status))
        .collect();
    // The crossing report is the point of the command, so it is written
    // whatever the formats say.
    write_json(&dir.join("crossing.json"), &CrossingReport { schema: CROSSING_SCHEMA, config, beta, pairs })?;
    if failed.is_empty() {
        Ok(dir)
    } else {
        Err(CliError::NoCrossing(failed.join("; ")))
    }
}

#[derive(Serialize)]
struct FidelitySummary<'a> {
    schema: &'static str,
    config: &'a RunConfig,
    max_infidelity: f64,
    max_energy_error: f64,
    final_infidelity: f64,
    final_n_theta: usize,
}

/// Variational trajectory of the configured reference against the exact flow.
pub fn cmd_fidelity(config: &RunConfig) -> CliResult<PathBuf> {
    let dir = prepare(config)?;
    let h = config.model.hamiltonian()?;
    let spectrum = diagonalize(&h, config.analysis.ed_cap)?;
    let pool = build_pool(h.n_qubits())?;
    let a = &config.analysis;
    let trace = ed::fidelity_trace(&spectrum, a.reference, &h, &pool, &config.avqite, a.tau_final)?;
    if config.output.wants(Format::Csv) {
        ed::write_fidelity_csv(create(&dir.join("fidelity.csv"))?, &trace)?;
    }
    if config.output.wants(Format::Json) {
        let last = trace.last().expect("the trace starts at tau = 0");
        write_json(
            &dir.join("fidelity.json"),
            &FidelitySummary {
                schema: FIDELITY_SCHEMA,
                config,
                max_infidelity: trace.iter().map(|p| p.infidelity).fold(0.0, f64::max),
                max_energy_error: trace.iter().map(|p| p.energy_error).fold(0.0, f64::max),
                final_infidelity: last.infidelity,
                final_n_theta: last.n_theta,
            },
        )?;
    }
    Ok(dir)
}
