//! Adaptive variational imaginary-time evolution.
//!
//! The state is a pseudo-Trotter product
//!
//! ```text
//! |phi(theta)> = exp(-i theta_N A_N) ... exp(-i theta_1 A_1) |ref>
//! ```
//!
//! whose parameters follow the McLachlan equations of motion `M theta_dot = V`
//! with
//!
//! ```text
//! M_uv = 2 Re[<d_u phi|d_v phi> - <d_u phi|phi><phi|d_v phi>]
//! V_u  = 2 Re[-<d_u phi|H|phi>]
//! ```
//!
//! integrated with explicit Euler steps. Before every step the generator list
//! is grown from a fixed pool until the McLachlan distance
//!
//! ```text
//! L^2 = 1/2 theta_dot^T M theta_dot - V^T theta_dot + var(H)
//! ```
//!
//! at the optimal `theta_dot = M^+ V` drops to `l_cut` or below.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_size, Error, Result};
use crate::linalg::{dot, PseudoInverse};
use crate::pauli::{PauliString, WeightedPauliSum};
use crate::state::{inner_raw, Cps, StateVector};

/// Candidates that lower `L^2` by no more than this count as no improvement.
pub const MIN_EXPANSION_GAIN: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvqiteParams {
    /// Euler step in imaginary time.
    pub delta_tau: f64,
    /// Threshold on the McLachlan distance `L^2`.
    pub l_cut: f64,
    /// Relative eigenvalue cutoff of the pseudo-inverse of `M`.
    pub solver_cutoff: f64,
    /// Cap on generators appended before a single Euler step; `None` is unlimited.
    pub max_new_ops_per_step: Option<usize>,
}

impl Default for AvqiteParams {
    fn default() -> Self {
        AvqiteParams {
            delta_tau: 0.02,
            l_cut: 1e-3,
            solver_cutoff: 1e-4,
            max_new_ops_per_step: None,
        }
    }
}

impl AvqiteParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("delta_tau", self.delta_tau)?;
        positive("l_cut", self.l_cut)?;
        if !(self.solver_cutoff.is_finite() && (0.0..1.0).contains(&self.solver_cutoff)) {
            return Err(Error::InvalidArgument(format!(
                "solver_cutoff must lie in [0, 1), got {}",
                self.solver_cutoff
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ansatz {
    n_qubits: usize,
    reference: Cps,
    generators: Vec<PauliString>,
    thetas: Vec<f64>,
}

impl Ansatz {
    pub fn new(n_qubits: usize, reference: Cps) -> Self {
        Ansatz {
            n_qubits,
            reference,
            generators: Vec::new(),
            thetas: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn reference(&self) -> Cps {
        self.reference
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    pub fn thetas_mut(&mut self) -> &mut [f64] {
        &mut self.thetas
    }

    pub fn n_theta(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    /// Appends `exp(-i theta A)` as the last gate. A generator equal to the
    /// current last one is merged into it by adding angles; returns whether a
    /// new parameter was created.
    pub fn push(&mut self, generator: PauliString, theta: f64) -> Result<bool> {
        check_size(self.n_qubits, generator.n_qubits())?;
        if self.generators.last() == Some(&generator) {
            *self.thetas.last_mut().expect("non-empty") += theta;
            return Ok(false);
        }
        self.generators.push(generator);
        self.thetas.push(theta);
        Ok(true)
    }

    /// Generator 1 acts first on the reference.
    pub fn state(&self) -> Result<StateVector> {
        let mut s = StateVector::prepare_cps(self.n_qubits, self.reference)?;
        for (g, &t) in self.generators.iter().zip(&self.thetas) {
            s.apply_rotation(g, t)?;
        }
        Ok(s)
    }

    /// CNOTs for all-to-all connectivity: a weight-`w` Pauli rotation costs a
    /// `2(w-1)` CNOT ladder, so two per two-qubit generator.
    pub fn count_cnots(&self) -> usize {
        self.generators
            .iter()
            .map(|g| 2 * (g.weight() as usize).saturating_sub(1))
            .sum()
    }

    /// True when every generator has an odd number of `Y` letters, which keeps
    /// a real reference state real.
    fn is_real_flow(&self) -> bool {
        self.generators.iter().all(|g| g.y_count() % 2 == 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Imaginary time after the step.
    pub tau: f64,
    pub n_theta: usize,
    /// McLachlan distance that governed the step, after expansion.
    pub l2: f64,
    /// Variational energy at `tau`.
    pub energy: f64,
    pub n_cx: usize,
}

/// `|d_u phi>` for every parameter, together with the final state.
///
/// Each derivative inserts `-i A_u` right after the `u`-th rotation. One
/// forward sweep carries the already-branched vectors along, so the cost is
/// `N_theta (N_theta + 1) / 2` gate applications.
pub fn derivative_states(ansatz: &Ansatz) -> Result<(StateVector, Vec<StateVector>)> {
    let mut state = StateVector::prepare_cps(ansatz.n_qubits, ansatz.reference)?;
    let mut derivs: Vec<StateVector> = Vec::with_capacity(ansatz.n_theta());
    for (g, &t) in ansatz.generators.iter().zip(&ansatz.thetas) {
        state.apply_rotation(g, t)?;
        for d in derivs.iter_mut() {
            d.apply_rotation(g, t)?;
        }
        let mut d = state.clone();
        // -i A
        d.apply_pauli_scaled(g, 3)?;
        derivs.push(d);
    }
    Ok((state, derivs))
}

/// Quantum Fisher information matrix of the ansatz.
pub fn compute_m(ansatz: &Ansatz) -> Result<Mat<f64>> {
    let (state, derivs) = derivative_states(ansatz)?;
    let overlaps: Vec<Complex64> = derivs.iter().map(|d| inner_raw(d.amplitudes(), state.amplitudes())).collect();
    let (m, _) = fisher_matrix(&derivs, &overlaps);
    Ok(m)
}

/// Energy gradient `V = -d<H>/d theta`.
pub fn compute_v(ansatz: &Ansatz, h: &WeightedPauliSum) -> Result<Vec<f64>> {
    check_size(ansatz.n_qubits, h.n_qubits())?;
    let (state, derivs) = derivative_states(ansatz)?;
    let h_state = state.applied(h)?;
    Ok(derivs.iter().map(|d| -2.0 * inner_raw(d.amplitudes(), h_state.amplitudes()).re).collect())
}

/// `M` from derivative states and overlaps `<d_u phi|phi>`; also returns the
/// largest magnitude of the Berry-connection term.
fn fisher_matrix(derivs: &[StateVector], overlaps: &[Complex64]) -> (Mat<f64>, f64) {
    let n = derivs.len();
    let mut m = Mat::<f64>::zeros(n, n);
    let mut berry = 0.0f64;
    for u in 0..n {
        for v in u..n {
            let gram = inner_raw(derivs[u].amplitudes(), derivs[v].amplitudes());
            let connection = overlaps[u] * overlaps[v].conj();
            berry = berry.max(connection.re.abs());
            let value = 2.0 * (gram - connection).re;
            m[(u, v)] = value;
            m[(v, u)] = value;
        }
    }
    (m, 2.0 * berry)
}

/// McLachlan distance `L^2 = 1/2 x^T M x - V^T x + var_h` for a trial `x = theta_dot`.
pub fn mclachlan_l2(m: &Mat<f64>, v: &[f64], theta_dot: &[f64], var_h: f64) -> Result<f64> {
    check_size(m.nrows(), v.len())?;
    check_size(v.len(), theta_dot.len())?;
    if var_h < -1e-12 {
        return Err(Error::Numerical(format!("negative energy variance {var_h}")));
    }
    let mx = crate::linalg::mat_vec(m, theta_dot);
    let l2 = 0.5 * dot(theta_dot, &mx) - dot(v, theta_dot) + var_h.max(0.0);
    let scale = 1.0 + var_h.abs();
    if l2 < -1e-8 * scale {
        return Err(Error::Numerical(format!(
            "McLachlan distance {l2} is negative; M, V and var(H) are inconsistent"
        )));
    }
    Ok(l2.max(0.0))
}

/// Optimal parameter velocity and the distance it achieves.
struct Solution {
    theta_dot: Vec<f64>,
    l2: f64,
    pinv: PseudoInverse,
}

/// Everything needed to solve and grow the equations of motion at one point
/// of the imaginary-time path.
struct Tangent {
    state: StateVector,
    h_state: StateVector,
    variance: f64,
    derivs: Vec<StateVector>,
    /// `<d_u phi|phi>`
    overlaps: Vec<Complex64>,
    m: Mat<f64>,
    v: Vec<f64>,
}

impl Tangent {
    fn build(ansatz: &Ansatz, h: &WeightedPauliSum) -> Result<Self> {
        let (mut state, derivs) = derivative_states(ansatz)?;
        state.check_norm()?;
        if ansatz.is_real_flow() {
            debug_assert!(
                state.max_imag() < 1e-10,
                "real flow produced imaginary amplitude {}",
                state.max_imag()
            );
        }
        let h_state = state.applied(h)?;
        let energy = inner_raw(state.amplitudes(), h_state.amplitudes()).re;
        let h2: f64 = h_state.amplitudes().iter().map(|a| a.norm_sqr()).sum();
        let variance = (h2 - energy * energy).max(0.0);
        let overlaps: Vec<Complex64> =
            derivs.iter().map(|d| inner_raw(d.amplitudes(), state.amplitudes())).collect();
        let (m, berry) = fisher_matrix(&derivs, &overlaps);
        if ansatz.is_real_flow() {
            debug_assert!(berry < 1e-10, "Berry term {berry} should vanish for a real flow");
        }
        let v = derivs
            .iter()
            .map(|d| -2.0 * inner_raw(d.amplitudes(), h_state.amplitudes()).re)
            .collect();
        Ok(Tangent {
            state,
            h_state,
            variance,
            derivs,
            overlaps,
            m,
            v,
        })
    }

    fn solve(&self, cutoff: f64) -> Result<Solution> {
        let pinv = PseudoInverse::new(&self.m, cutoff)?;
        if pinv.rank == 0 && self.v.iter().any(|x| x.abs() > 1e-10) {
            return Err(Error::Numerical(
                "quantum Fisher matrix vanishes while the energy gradient does not".into(),
            ));
        }
        if pinv.min_eigenvalue < -1e-9 * (1.0 + pinv.max_eigenvalue) {
            return Err(Error::Numerical(format!(
                "quantum Fisher matrix has negative eigenvalue {}",
                pinv.min_eigenvalue
            )));
        }
        let theta_dot = pinv.apply(&self.v);
        let l2 = mclachlan_l2(&self.m, &self.v, &theta_dot, self.variance)?;
        Ok(Solution { theta_dot, l2, pinv })
    }

    /// Appends a candidate's derivative state, bordering `M` and `V`.
    fn push(&mut self, cands: &Candidates, k: usize) {
        let n = self.derivs.len();
        let mut m = Mat::<f64>::zeros(n + 1, n + 1);
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = self.m[(i, j)];
            }
            m[(n, j)] = cands.b[k][j];
            m[(j, n)] = cands.b[k][j];
        }
        m[(n, n)] = cands.c[k];
        self.m = m;
        self.v.push(cands.v[k]);
        self.overlaps.push(cands.overlaps[k]);
        self.derivs.push(cands.derivs[k].clone());
    }
}

/// Every pool operator appended at `theta = 0`, i.e. `-i A|phi>`, with its
/// would-be row of `M` and entry of `V`.
struct Candidates {
    derivs: Vec<StateVector>,
    /// `<d_A|phi>`
    overlaps: Vec<Complex64>,
    /// Coupling to the current tangent space, grown as generators are appended.
    b: Vec<Vec<f64>>,
    c: Vec<f64>,
    v: Vec<f64>,
}

impl Candidates {
    fn build(tangent: &Tangent, pool: &[PauliString]) -> Result<Self> {
        let phi = tangent.state.amplitudes();
        let mut out = Candidates {
            derivs: Vec::with_capacity(pool.len()),
            overlaps: Vec::with_capacity(pool.len()),
            b: Vec::with_capacity(pool.len()),
            c: Vec::with_capacity(pool.len()),
            v: Vec::with_capacity(pool.len()),
        };
        for g in pool {
            let mut d = tangent.state.clone();
            d.apply_pauli_scaled(g, 3)?;
            let da = d.amplitudes();
            let overlap = inner_raw(da, phi);
            out.c.push(2.0 * (inner_raw(da, da).re - overlap.norm_sqr()));
            out.b.push(
                tangent
                    .derivs
                    .iter()
                    .zip(&tangent.overlaps)
                    .map(|(du, ou)| 2.0 * (inner_raw(du.amplitudes(), da) - ou * overlap.conj()).re)
                    .collect(),
            );
            out.v.push(-2.0 * inner_raw(da, tangent.h_state.amplitudes()).re);
            out.overlaps.push(overlap);
            out.derivs.push(d);
        }
        Ok(out)
    }

    /// `M` entries between candidate `k` and every candidate.
    fn couplings(&self, k: usize) -> Vec<f64> {
        let dk = self.derivs[k].amplitudes();
        let ok = self.overlaps[k];
        self.derivs
            .iter()
            .zip(&self.overlaps)
            .map(|(d, o)| 2.0 * (inner_raw(dk, d.amplitudes()) - ok * o.conj()).re)
            .collect()
    }
}

/// Rank-one bordered updates of the optimal solution while candidates are
/// appended one at a time.
///
/// For a candidate with column `b`, diagonal `c` and gradient `v`, the Schur
/// complement `s = c - b^T M^+ b` and residual `r = v - b^T theta_dot` give
/// the drop `r^2 / (2 s)` of the optimal `L^2` on appending it. Keeping
/// `q = M^+ b`, `s` and `r` current for every candidate makes each append cost
/// `O(pool * (2^N + N_theta))` instead of a fresh solve.
struct Bordered {
    theta_dot: Vec<f64>,
    l2: f64,
    q: Vec<Vec<f64>>,
    s: Vec<f64>,
    r: Vec<f64>,
    /// Schur complements at or below this fraction of the matrix scale count as
    /// linearly dependent.
    cutoff: f64,
    scale: f64,
}

impl Bordered {
    fn new(sol: &Solution, cands: &Candidates, cutoff: f64) -> Self {
        let q: Vec<Vec<f64>> = cands.b.iter().map(|b| sol.pinv.apply(b)).collect();
        let s = cands.c.iter().zip(&cands.b).zip(&q).map(|((c, b), q)| c - dot(b, q)).collect();
        let r = cands.v.iter().zip(&cands.b).map(|(v, b)| v - dot(b, &sol.theta_dot)).collect();
        Bordered {
            theta_dot: sol.theta_dot.clone(),
            l2: sol.l2,
            q,
            s,
            r,
            cutoff,
            scale: sol.pinv.max_eigenvalue,
        }
    }

    fn gain(&self, cands: &Candidates, k: usize) -> f64 {
        let s = self.s[k];
        if s <= self.cutoff * cands.c[k].max(self.scale).max(f64::MIN_POSITIVE) {
            return 0.0;
        }
        0.5 * self.r[k] * self.r[k] / s
    }

    /// Best candidate in pool order, with its gain.
    fn best(&self, cands: &Candidates) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for k in 0..cands.c.len() {
            let g = self.gain(cands, k);
            if best.is_none_or(|(_, b)| g > b) {
                best = Some((k, g));
            }
        }
        best
    }

    /// Appends candidate `k`; `cands.b` grows by the new coupling column.
    fn append(&mut self, cands: &mut Candidates, k: usize) {
        let u = self.q[k].clone();
        let (s, r) = (self.s[k], self.r[k]);
        let beta = cands.couplings(k);
        for a in 0..cands.c.len() {
            let g = dot(&u, &cands.b[a]) - beta[a];
            let q = &mut self.q[a];
            for (qi, ui) in q.iter_mut().zip(&u) {
                *qi += ui * g / s;
            }
            q.push(-g / s);
            self.s[a] -= g * g / s;
            self.r[a] += g * r / s;
            cands.b[a].push(beta[a]);
        }
        for (t, ui) in self.theta_dot.iter_mut().zip(&u) {
            *t -= ui * r / s;
        }
        self.theta_dot.push(r / s);
        self.l2 -= 0.5 * r * r / s;
        self.scale = self.scale.max(cands.c[k]);
    }
}

/// Outcome of growing the ansatz before one Euler step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Expansion {
    pub appended: usize,
    /// Optimal `L^2` after expansion.
    pub l2: f64,
    /// The pool could not bring `L^2` under `l_cut`.
    pub saturated: bool,
}

fn expand_tangent(
    ansatz: &mut Ansatz,
    tangent: &mut Tangent,
    pool: &[PauliString],
    params: &AvqiteParams,
) -> Result<(Solution, Expansion)> {
    let mut sol = tangent.solve(params.solver_cutoff)?;
    let mut appended = 0;
    let mut saturated = false;
    let mut cands: Option<Candidates> = None;
    let capped = |appended: usize| params.max_new_ops_per_step.is_some_and(|cap| appended >= cap);
    while sol.l2 > params.l_cut {
        if capped(appended) {
            saturated = true;
            break;
        }
        if cands.is_none() {
            cands = Some(Candidates::build(tangent, pool)?);
        }
        let cands = cands.as_mut().expect("built above");
        // Bordered updates until they predict L^2 <= l_cut, then an exact
        // solve, since the cutoff can discard part of what was gained.
        let mut bordered = Bordered::new(&sol, cands, params.solver_cutoff);
        let before = appended;
        while bordered.l2 > params.l_cut && !capped(appended) {
            match bordered.best(cands) {
                Some((k, gain)) if gain > MIN_EXPANSION_GAIN => {
                    bordered.append(cands, k);
                    let fresh = ansatz.push(pool[k], 0.0)?;
                    debug_assert!(fresh, "an adjacent duplicate has zero Schur complement");
                    tangent.push(cands, k);
                    appended += 1;
                }
                _ => break,
            }
        }
        let previous = sol.l2;
        sol = tangent.solve(params.solver_cutoff)?;
        if appended == before || sol.l2 >= previous - MIN_EXPANSION_GAIN {
            saturated = sol.l2 > params.l_cut;
            break;
        }
    }
    if saturated {
        log::debug!(
            "operator pool saturated at N_theta = {} with L^2 = {:.3e}",
            ansatz.n_theta(),
            sol.l2
        );
    }
    let l2 = sol.l2;
    Ok((
        sol,
        Expansion {
            appended,
            l2,
            saturated,
        },
    ))
}

/// Grows `ansatz` from `pool` until the optimal McLachlan distance is at most
/// `params.l_cut`. Appended generators start at `theta = 0`, so the state is
/// unchanged.
pub fn expand(
    ansatz: &mut Ansatz,
    pool: &[PauliString],
    h: &WeightedPauliSum,
    params: &AvqiteParams,
) -> Result<Expansion> {
    check_size(ansatz.n_qubits, h.n_qubits())?;
    let mut tangent = Tangent::build(ansatz, h)?;
    let (_, expansion) = expand_tangent(ansatz, &mut tangent, pool, params)?;
    Ok(expansion)
}

/// One Euler step `theta <- theta + dt M^+ V` without expansion; returns
/// `theta_dot` and the distance it achieves.
pub fn euler_step(ansatz: &mut Ansatz, h: &WeightedPauliSum, params: &AvqiteParams, dt: f64) -> Result<(Vec<f64>, f64)> {
    check_size(ansatz.n_qubits, h.n_qubits())?;
    let tangent = Tangent::build(ansatz, h)?;
    let sol = tangent.solve(params.solver_cutoff)?;
    for (t, d) in ansatz.thetas.iter_mut().zip(&sol.theta_dot) {
        *t += dt * d;
    }
    Ok((sol.theta_dot, sol.l2))
}

/// Number of Euler steps covering `[0, tau_final]`.
fn step_count(tau_final: f64, delta_tau: f64) -> usize {
    if tau_final <= 0.0 {
        return 0;
    }
    ((tau_final / delta_tau) - 1e-9).ceil().max(1.0) as usize
}

/// Step-by-step driver of an imaginary-time propagation.
pub struct Evolver<'a> {
    h: &'a WeightedPauliSum,
    pool: &'a [PauliString],
    params: &'a AvqiteParams,
    ansatz: Ansatz,
    state: StateVector,
    tau_final: f64,
    n_steps: usize,
    steps_done: usize,
    diagnostics: Vec<StepDiagnostics>,
    saturated_steps: usize,
}

impl<'a> Evolver<'a> {
    pub fn new(
        reference: Cps,
        h: &'a WeightedPauliSum,
        pool: &'a [PauliString],
        tau_final: f64,
        params: &'a AvqiteParams,
    ) -> Result<Self> {
        params.validate()?;
        if !(tau_final.is_finite() && tau_final >= 0.0) {
            return Err(Error::InvalidArgument(format!("tau_final must be >= 0, got {tau_final}")));
        }
        for g in pool {
            check_size(h.n_qubits(), g.n_qubits())?;
        }
        let ansatz = Ansatz::new(h.n_qubits(), reference);
        let state = ansatz.state()?;
        Ok(Evolver {
            h,
            pool,
            params,
            ansatz,
            state,
            tau_final,
            n_steps: step_count(tau_final, params.delta_tau),
            steps_done: 0,
            diagnostics: Vec::new(),
            saturated_steps: 0,
        })
    }

    pub fn tau(&self) -> f64 {
        if self.steps_done == self.n_steps {
            self.tau_final
        } else {
            self.steps_done as f64 * self.params.delta_tau
        }
    }

    pub fn is_done(&self) -> bool {
        self.steps_done == self.n_steps
    }

    pub fn state(&self) -> &StateVector {
        &self.state
    }

    pub fn ansatz(&self) -> &Ansatz {
        &self.ansatz
    }

    /// Expands, then takes one Euler step. Returns `None` once `tau_final` is reached.
    pub fn step(&mut self) -> Result<Option<StepDiagnostics>> {
        if self.is_done() {
            return Ok(None);
        }
        let tau_before = self.tau();
        let mut tangent = Tangent::build(&self.ansatz, self.h)?;
        let (sol, expansion) = expand_tangent(&mut self.ansatz, &mut tangent, self.pool, self.params)?;
        if expansion.saturated {
            self.saturated_steps += 1;
        }
        self.steps_done += 1;
        let dt = self.tau() - tau_before;
        for (t, d) in self.ansatz.thetas.iter_mut().zip(&sol.theta_dot) {
            *t += dt * d;
        }
        self.state = self.ansatz.state()?;
        self.state.check_norm()?;
        let diag = StepDiagnostics {
            tau: self.tau(),
            n_theta: self.ansatz.n_theta(),
            l2: sol.l2,
            energy: self.state.expectation(self.h)?,
            n_cx: self.ansatz.count_cnots(),
        };
        self.diagnostics.push(diag);
        Ok(Some(diag))
    }

    pub fn finish(mut self) -> Result<EvolveOutcome> {
        while self.step()?.is_some() {}
        Ok(EvolveOutcome {
            ansatz: self.ansatz,
            state: self.state,
            diagnostics: self.diagnostics,
            saturated_steps: self.saturated_steps,
        })
    }
}

#[derive(Clone, Debug)]
pub struct EvolveOutcome {
    pub ansatz: Ansatz,
    pub state: StateVector,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Steps where the pool could not reach `l_cut`.
    pub saturated_steps: usize,
}

/// Propagates `reference` to imaginary time `tau_final` (`beta / 2` for a METTS).
pub fn evolve(
    reference: Cps,
    h: &WeightedPauliSum,
    pool: &[PauliString],
    tau_final: f64,
    params: &AvqiteParams,
) -> Result<EvolveOutcome> {
    Evolver::new(reference, h, pool, tau_final, params)?.finish()
}

/// Columns `tau,n_theta,l2,energy,n_cx`.
pub fn write_diagnostics_csv<W: Write>(w: W, diagnostics: &[StepDiagnostics]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    for d in diagnostics {
        csv.serialize(d)?;
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8};

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::model::{build_hamiltonian, build_pool, IsingParams, Lattice};
    use crate::pauli::Letter;

    fn y0() -> PauliString {
        PauliString::single(1, 0, Letter::Y).unwrap()
    }

    fn ansatz1(theta: f64) -> Ansatz {
        let mut a = Ansatz::new(1, Cps::z(0));
        a.push(y0(), theta).unwrap();
        a
    }

    fn minus_z() -> WeightedPauliSum {
        WeightedPauliSum::parse(1, "-1.0 * Z0").unwrap()
    }

    #[test]
    fn derivative_state_examples() {
        let (state, derivs) = derivative_states(&Ansatz::new(2, Cps::z(0))).unwrap();
        assert!(derivs.is_empty());
        assert_eq!(state, StateVector::prepare_cps(2, Cps::z(0)).unwrap());

        let (_, derivs) = derivative_states(&ansatz1(0.0)).unwrap();
        let amps = derivs[0].amplitudes();
        assert!((amps[0]).norm() < 1e-15);
        assert!((amps[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_generator_m_and_v() {
        for theta in [0.0, 0.3, FRAC_PI_4, 1.2] {
            let m = compute_m(&ansatz1(theta)).unwrap();
            assert!((m[(0, 0)] - 2.0).abs() < 1e-14);
        }
        let v = compute_v(&ansatz1(FRAC_PI_4), &minus_z()).unwrap();
        assert!((v[0] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn l2_examples() {
        let m = Mat::<f64>::zeros(1, 1);
        assert_eq!(mclachlan_l2(&m, &[0.0], &[0.0], 0.37).unwrap(), 0.37);
        assert_eq!(mclachlan_l2(&m, &[0.0], &[0.0], 0.0).unwrap(), 0.0);

        // theta = pi/8 on |0>, H = -Z: var = sin^2(pi/4) = 1/2, V = -2 sin(pi/4), M = 2.
        let a = ansatz1(FRAC_PI_8);
        let m = compute_m(&a).unwrap();
        let v = compute_v(&a, &minus_z()).unwrap();
        assert!((v[0] + 2.0 * FRAC_PI_4.sin()).abs() < 1e-14);
        let theta_dot = [v[0] / m[(0, 0)]];
        let l2 = mclachlan_l2(&m, &v, &theta_dot, 0.5).unwrap();
        assert!(l2.abs() < 1e-14);

        assert!(mclachlan_l2(&Mat::from_fn(1, 1, |_, _| 2.0), &[2.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn euler_step_single_qubit() {
        let mut a = ansatz1(FRAC_PI_4);
        let params = AvqiteParams::default();
        let (theta_dot, _) = euler_step(&mut a, &minus_z(), &params, 0.02).unwrap();
        assert!((theta_dot[0] + 1.0).abs() < 1e-12);
        assert!((a.thetas()[0] - (FRAC_PI_4 - 0.02)).abs() < 1e-12);

        // Eigenstate: V = 0, nothing moves.
        let mut still = ansatz1(0.0);
        euler_step(&mut still, &minus_z(), &params, 0.02).unwrap();
        assert_eq!(still.thetas(), &[0.0]);
    }

    #[test]
    fn expand_examples() {
        let params = AvqiteParams::default();
        let pool = vec![y0()];
        let h = WeightedPauliSum::parse(1, "-1.0 * X0").unwrap();
        let mut a = Ansatz::new(1, Cps::z(0));
        let before = a.state().unwrap().expectation(&h).unwrap();
        let e = expand(&mut a, &pool, &h, &params).unwrap();
        assert_eq!(e.appended, 1);
        assert!(e.l2.abs() < 1e-14);
        assert_eq!(a.generators(), &[y0()]);
        assert_eq!(a.thetas(), &[0.0]);
        let after = a.state().unwrap().expectation(&h).unwrap();
        assert!((after - before).abs() < 1e-12);

        // Already converged: untouched.
        let mut done = ansatz1(0.0);
        let e = expand(&mut done, &pool, &minus_z(), &params).unwrap();
        assert_eq!(e.appended, 0);
        assert_eq!(done.n_theta(), 1);
    }

    #[test]
    fn adjacent_duplicates_merge() {
        let mut a = ansatz1(0.1);
        assert!(!a.push(y0(), 0.2).unwrap());
        assert_eq!(a.n_theta(), 1);
        assert!((a.thetas()[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn cnot_counts() {
        let mut a = Ansatz::new(3, Cps::z(0));
        assert_eq!(a.count_cnots(), 0);
        a.push(PauliString::single(3, 0, Letter::Y).unwrap(), 0.1).unwrap();
        a.push(PauliString::from_letters(3, &[(1, Letter::Y), (2, Letter::Z)]).unwrap(), 0.1).unwrap();
        assert_eq!(a.count_cnots(), 2);
    }

    #[test]
    fn evolve_zero_time_is_the_reference() {
        let h = build_hamiltonian(&Lattice::chain(3, true).unwrap(), &IsingParams::tfim(1.0));
        let pool = build_pool(3).unwrap();
        let out = evolve(Cps::x(0b101), &h, &pool, 0.0, &AvqiteParams::default()).unwrap();
        assert!(out.ansatz.is_empty());
        assert!(out.diagnostics.is_empty());
        assert_eq!(out.state, StateVector::prepare_cps(3, Cps::x(0b101)).unwrap());
    }

    #[test]
    fn evolve_partial_last_step() {
        let h = build_hamiltonian(&Lattice::chain(3, true).unwrap(), &IsingParams::tfim(1.0));
        let pool = build_pool(3).unwrap();
        let out = evolve(Cps::z(0b001), &h, &pool, 0.05, &AvqiteParams::default()).unwrap();
        let taus: Vec<f64> = out.diagnostics.iter().map(|d| d.tau).collect();
        assert_eq!(taus.len(), 3);
        assert!((taus[0] - 0.02).abs() < 1e-15);
        assert!((taus[1] - 0.04).abs() < 1e-15);
        assert_eq!(taus[2], 0.05);
        assert_eq!(step_count(2.0, 0.02), 100);
        assert_eq!(step_count(0.85, 0.02), 43);
    }

    #[test]
    fn evolve_lowers_energy_and_respects_l_cut() {
        let h = build_hamiltonian(&Lattice::chain(4, true).unwrap(), &IsingParams::mfim(1.0, 0.5));
        let pool = build_pool(4).unwrap();
        let params = AvqiteParams::default();
        for reference in [Cps::z(0b0110), Cps::x(0b0000), Cps::x(0b1011)] {
            let out = evolve(reference, &h, &pool, 1.0, &params).unwrap();
            let mut previous = StateVector::prepare_cps(4, reference).unwrap().expectation(&h).unwrap();
            for d in &out.diagnostics {
                assert!(d.energy <= previous + 1e-8, "{reference:?}: {} > {previous}", d.energy);
                previous = d.energy;
                assert!(d.l2 <= params.l_cut || out.saturated_steps > 0);
                assert!(d.n_cx <= 2 * d.n_theta);
            }
            assert!(out.state.max_imag() < 1e-10);
        }
    }

    #[test]
    fn diagnostics_csv_columns() {
        let d = StepDiagnostics { tau: 0.02, n_theta: 3, l2: 1e-4, energy: -1.5, n_cx: 2 };
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &[d]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "tau,n_theta,l2,energy,n_cx\n0.02,3,0.0001,-1.5,2\n");
    }

    fn random_ansatz(rng: &mut ChaCha8Rng, n: usize, len: usize, any_pauli: bool) -> Ansatz {
        let reference = if rng.random::<bool>() {
            Cps::z(rng.random_range(0..1u64 << n))
        } else {
            Cps::x(rng.random_range(0..1u64 << n))
        };
        let pool = build_pool(n).unwrap();
        let mut a = Ansatz::new(n, reference);
        while a.n_theta() < len {
            let g = if any_pauli {
                let mask = (1u64 << n) - 1;
                PauliString::from_masks(n, rng.random::<u64>() & mask, rng.random::<u64>() & mask).unwrap()
            } else {
                pool[rng.random_range(0..pool.len())]
            };
            if g.is_identity() {
                continue;
            }
            a.push(g, rng.random_range(-1.5..1.5)).unwrap();
        }
        a
    }

    /// Central-difference reference for the derivative states.
    fn fd_derivs(a: &Ansatz, h_step: f64) -> Vec<Vec<Complex64>> {
        (0..a.n_theta())
            .map(|u| {
                let mut plus = a.clone();
                plus.thetas_mut()[u] += h_step;
                let mut minus = a.clone();
                minus.thetas_mut()[u] -= h_step;
                let (p, m) = (plus.state().unwrap(), minus.state().unwrap());
                p.amplitudes()
                    .iter()
                    .zip(m.amplitudes())
                    .map(|(x, y)| (x - y) / (2.0 * h_step))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn m_and_v_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let h_step = 1e-4;
        for trial in 0..12 {
            let n = 4 + trial % 3;
            let any = trial % 2 == 1;
            let a = random_ansatz(&mut rng, n, 6, any);
            let lattice = Lattice::chain(n, true).unwrap();
            let h = build_hamiltonian(&lattice, &IsingParams::mfim(0.9, 0.4));
            let v = compute_v(&a, &h).unwrap();
            for u in 0..a.n_theta() {
                let mut plus = a.clone();
                plus.thetas_mut()[u] += h_step;
                let mut minus = a.clone();
                minus.thetas_mut()[u] -= h_step;
                let ep = plus.state().unwrap().expectation(&h).unwrap();
                let em = minus.state().unwrap().expectation(&h).unwrap();
                assert!((v[u] + (ep - em) / (2.0 * h_step)).abs() < 1e-6);
            }
            let m = compute_m(&a).unwrap();
            let phi = a.state().unwrap();
            let d = fd_derivs(&a, h_step);
            let ov: Vec<Complex64> = d.iter().map(|x| inner_raw(x, phi.amplitudes())).collect();
            for u in 0..a.n_theta() {
                for w in 0..a.n_theta() {
                    let fd = 2.0 * (inner_raw(&d[u], &d[w]) - ov[u] * ov[w].conj()).re;
                    assert!((m[(u, w)] - fd).abs() < 1e-6, "trial {trial} M[{u},{w}]");
                }
            }
        }
    }

    #[test]
    fn m_is_symmetric_psd_and_real_flow_has_no_berry_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let a = random_ansatz(&mut rng, 4, 8, false);
            let (state, derivs) = derivative_states(&a).unwrap();
            let ov: Vec<Complex64> = derivs.iter().map(|d| inner_raw(d.amplitudes(), state.amplitudes())).collect();
            let (m, berry) = fisher_matrix(&derivs, &ov);
            assert!(berry < 1e-10);
            for u in 0..8 {
                for w in 0..8 {
                    assert!((m[(u, w)] - m[(w, u)]).abs() < 1e-10);
                }
            }
            let eig = crate::linalg::symmetric_eigen(&m, false).unwrap();
            assert!(eig.values[0] > -1e-9);
            for d in &derivs {
                assert!((d.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn v_vanishes_on_eigenstates() {
        // |0000> is an eigenstate of the classical ring.
        let h = build_hamiltonian(&Lattice::chain(4, true).unwrap(), &IsingParams::tfim(0.0));
        let mut a = Ansatz::new(4, Cps::z(0));
        for g in build_pool(4).unwrap().into_iter().take(5) {
            a.push(g, 0.0).unwrap();
        }
        assert!(compute_v(&a, &h).unwrap().iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn bordered_updates_match_fresh_solves() {
        let n = 4;
        let h = build_hamiltonian(&Lattice::chain(n, true).unwrap(), &IsingParams::mfim(1.0, 0.5));
        let pool = build_pool(n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ansatz = Ansatz::new(n, Cps::x(0b0101));
        for _ in 0..3 {
            let g = pool[rng.random_range(0..pool.len())];
            ansatz.push(g, rng.random_range(-0.5..0.5)).unwrap();
        }
        let mut tangent = Tangent::build(&ansatz, &h).unwrap();
        let sol = tangent.solve(1e-12).unwrap();
        let mut cands = Candidates::build(&tangent, &pool).unwrap();
        let mut bordered = Bordered::new(&sol, &cands, 1e-12);
        for _ in 0..3 {
            let (k, gain) = bordered.best(&cands).unwrap();
            assert!(gain > 0.0);
            let before = bordered.l2;
            bordered.append(&mut cands, k);
            assert!((before - bordered.l2 - gain).abs() < 1e-10);
            ansatz.push(pool[k], 0.0).unwrap();
            tangent.push(&cands, k);
            let fresh = Tangent::build(&ansatz, &h).unwrap();
            for i in 0..fresh.v.len() {
                assert!((fresh.v[i] - tangent.v[i]).abs() < 1e-10);
                for j in 0..fresh.v.len() {
                    assert!((fresh.m[(i, j)] - tangent.m[(i, j)]).abs() < 1e-10);
                }
            }
            let exact = fresh.solve(1e-12).unwrap();
            assert!((exact.l2 - bordered.l2).abs() < 1e-8, "{} vs {}", exact.l2, bordered.l2);
            for (a, b) in exact.theta_dot.iter().zip(&bordered.theta_dot) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

}
