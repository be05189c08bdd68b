//! Hierarchical equations of motion for a Drude-Lorentz bath in the
//! high-temperature limit.
//!
//! Each operator σ^**n** obeys
//!
//! ```text
//! dσ^n/dt = −(i L_e + Σ_m n_m γ) σ^n + Σ_m φ_m σ^{n+e_m} + Σ_m n_m θ_m σ^{n−e_m}
//! φ_m σ = i [V_m, σ]
//! θ_m σ = i (2λ k_B T [V_m, σ] − i λ γ {V_m, σ})
//! ```
//!
//! with V_m = |m⟩⟨m| and ħ = 1. In the normalized representation the
//! operators are σ̃^n = (Π_m n_m! |c0|^{n_m})^{-1/2} σ^n and the couplings to
//! neighbouring tiers pick up √((n_m+1)|c0|) and √(n_m/|c0|) instead of 1 and
//! n_m. Couplings to tiers above the truncation depth are dropped.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{enumerate_indices, CharacteristicFrequency, HierarchyIndexTable};
use crate::integrator::{LinearRhs, Rk4};
use crate::linalg::{
    block_from_matrix, block_trace, hermitian_deviation, hermitian_deviation_flat, hermitian_eigenvalues,
    matrix_from_block,
};
use crate::units::{c0, BathSpec, OpenSystem};

/// Upper limit on dt · (max_tier · γ + ω_e).
pub const STABILITY_LIMIT: f64 = 2.5;

/// Largest tolerated drift of Tr σ^0 before a run is declared failed.
pub const TRACE_FAILURE_TOLERANCE: f64 = 1e-6;

const HERMITIAN_INPUT_TOLERANCE: f64 = 1e-9;
const POSITIVITY_INPUT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Regular,
    #[default]
    Normalized,
}

/// System density matrix plus every auxiliary operator, stored row-major
/// and contiguous in table order.
#[derive(Debug, Clone)]
pub struct HierarchyState {
    table: Arc<HierarchyIndexTable>,
    data: Vec<Complex64>,
    representation: Representation,
}

impl HierarchyState {
    /// σ^0 = ρ0 and every auxiliary operator zero: the bath starts in
    /// equilibrium with the electronic ground state.
    pub fn franck_condon(
        table: Arc<HierarchyIndexTable>,
        rho0: &DMatrix<Complex64>,
        representation: Representation,
    ) -> Result<Self> {
        let n = table.n_sites();
        if rho0.nrows() != n || rho0.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "initial state is {}x{} but the hierarchy has {n} sites",
                rho0.nrows(),
                rho0.ncols()
            )));
        }
        let mut data = vec![Complex64::new(0.0, 0.0); table.len() * n * n];
        data[..n * n].copy_from_slice(&block_from_matrix(rho0));
        Ok(Self {
            table,
            data,
            representation,
        })
    }

    /// Build a state from explicit per-ordinal matrices.
    pub fn from_matrices(
        table: Arc<HierarchyIndexTable>,
        matrices: &[DMatrix<Complex64>],
        representation: Representation,
    ) -> Result<Self> {
        let n = table.n_sites();
        if matrices.len() != table.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} matrices supplied for {} hierarchy slots",
                matrices.len(),
                table.len()
            )));
        }
        let mut data = Vec::with_capacity(table.len() * n * n);
        for m in matrices {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch(format!("expected {n}x{n} operators")));
            }
            data.extend(block_from_matrix(m));
        }
        Ok(Self {
            table,
            data,
            representation,
        })
    }

    pub fn table(&self) -> &Arc<HierarchyIndexTable> {
        &self.table
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn n_sites(&self) -> usize {
        self.table.n_sites()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Row-major block of operator `ordinal`.
    pub fn block(&self, ordinal: usize) -> &[Complex64] {
        let nn = self.n_sites() * self.n_sites();
        &self.data[ordinal * nn..(ordinal + 1) * nn]
    }

    pub fn matrix(&self, ordinal: usize) -> DMatrix<Complex64> {
        matrix_from_block(self.block(ordinal), self.n_sites())
    }

    /// The reduced system density matrix σ^0.
    pub fn system(&self) -> DMatrix<Complex64> {
        self.matrix(0)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Largest Hermiticity violation over all operators.
    pub fn max_hermitian_deviation(&self) -> f64 {
        let n = self.n_sites();
        self.data
            .chunks(n * n)
            .map(|b| hermitian_deviation_flat(b, n))
            .fold(0.0, f64::max)
    }

    fn blank_like(&self) -> Self {
        Self {
            table: Arc::clone(&self.table),
            data: vec![Complex64::new(0.0, 0.0); self.data.len()],
            representation: self.representation,
        }
    }
}

/// φ_m σ = i[V_m, σ] with V_m = |m⟩⟨m|.
pub fn phi_apply(m: usize, sigma: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    let n = sigma.nrows();
    let i = Complex64::i();
    DMatrix::from_fn(n, n, |r, c| {
        let left = if r == m { sigma[(m, c)] } else { Complex64::new(0.0, 0.0) };
        let right = if c == m { sigma[(r, m)] } else { Complex64::new(0.0, 0.0) };
        i * (left - right)
    })
}

/// θ_m σ = i·2λk_BT [V_m, σ] + λγ {V_m, σ} in rad/fs units.
pub fn theta_apply(m: usize, sigma: &DMatrix<Complex64>, bath: &BathSpec) -> DMatrix<Complex64> {
    let n = sigma.nrows();
    let (comm, anti) = theta_coefficients(bath);
    let i = Complex64::i();
    DMatrix::from_fn(n, n, |r, c| {
        let left = if r == m { sigma[(m, c)] } else { Complex64::new(0.0, 0.0) };
        let right = if c == m { sigma[(r, m)] } else { Complex64::new(0.0, 0.0) };
        i * comm * (left - right) + anti * (left + right)
    })
}

/// (2λk_BT, λγ): weights of the commutator and anticommutator in θ_m.
fn theta_coefficients(bath: &BathSpec) -> (f64, f64) {
    let lambda = bath.reorganization_energy();
    (2.0 * lambda * bath.thermal_energy(), lambda * bath.dissipation_rate())
}

/// Time derivative of a regular-representation state.
pub fn rhs(state: &HierarchyState, system: &OpenSystem) -> Result<HierarchyState> {
    evaluate_rhs(state, system, Representation::Regular)
}

/// Time derivative of a normalized-representation state.
pub fn rhs_normalized(state: &HierarchyState, system: &OpenSystem) -> Result<HierarchyState> {
    evaluate_rhs(state, system, Representation::Normalized)
}

fn evaluate_rhs(state: &HierarchyState, system: &OpenSystem, expected: Representation) -> Result<HierarchyState> {
    if state.representation != expected {
        return Err(Error::RepresentationMismatch {
            expected,
            found: state.representation,
        });
    }
    if state.n_sites() != system.n_sites() {
        return Err(Error::DimensionMismatch("state and model site counts differ".into()));
    }
    let op = HeomOperator::new(system, &state.table, expected);
    let mut out = state.blank_like();
    op.apply(&state.data, &mut out.data);
    Ok(out)
}

/// Π_m n_m! |c0|^{n_m}, the square of the normalization factor for one slot.
fn normalization_weight(table: &HierarchyIndexTable, ordinal: usize, c0_abs: f64) -> f64 {
    let idx = table.index(ordinal);
    idx.factorial_product() * c0_abs.powi(idx.tier() as i32)
}

/// Rescale every operator into the `target` representation.
pub fn convert_representation(state: &HierarchyState, target: Representation, bath: &BathSpec) -> Result<HierarchyState> {
    if state.representation == target {
        return Ok(state.clone());
    }
    let n = state.n_sites();
    let nn = n * n;
    let c0_abs = c0(bath).norm();
    let mut out = state.clone();
    out.representation = target;
    if c0_abs == 0.0 {
        if state.data[nn..].iter().any(|z| *z != Complex64::new(0.0, 0.0)) {
            return Err(Error::UndefinedConversion);
        }
        return Ok(out);
    }
    for (k, block) in out.data.chunks_mut(nn).enumerate().skip(1) {
        let scale = normalization_weight(&state.table, k, c0_abs).sqrt();
        let factor = match target {
            Representation::Normalized => 1.0 / scale,
            Representation::Regular => scale,
        };
        for z in block {
            *z *= factor;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Link {
    site: usize,
    neighbor: usize,
    weight: f64,
}

/// The full hierarchy generator as a linear map on the flat state vector.
#[derive(Debug, Clone)]
pub struct HeomOperator {
    n: usize,
    /// H_e row-major, rad/fs
    hamiltonian: Vec<f64>,
    /// Σ_m n_m γ per ordinal
    decay: Vec<f64>,
    up_offsets: Vec<usize>,
    up: Vec<Link>,
    down_offsets: Vec<usize>,
    down: Vec<Link>,
    /// λγ + i·2λk_BT and λγ − i·2λk_BT
    theta_row: Complex64,
    theta_col: Complex64,
}

impl HeomOperator {
    pub fn new(system: &OpenSystem, table: &HierarchyIndexTable, representation: Representation) -> Self {
        let n = system.n_sites();
        assert_eq!(table.n_sites(), n, "table built for a different site count");
        let h = system.model().hamiltonian_real();
        let hamiltonian = (0..n * n).map(|k| h[(k / n, k % n)]).collect();
        let gamma = system.bath().dissipation_rate();
        let c0_abs = c0(system.bath()).norm();
        let (comm, anti) = theta_coefficients(system.bath());

        let mut decay = Vec::with_capacity(table.len());
        let mut up_offsets = vec![0];
        let mut down_offsets = vec![0];
        let mut up = Vec::new();
        let mut down = Vec::new();
        for k in 0..table.len() {
            let idx = table.index(k);
            decay.push(f64::from(idx.tier()) * gamma);
            for m in 0..n {
                let n_m = f64::from(idx.entries()[m]);
                if let Some(neighbor) = table.raise(k, m) {
                    let weight = match representation {
                        Representation::Regular => 1.0,
                        Representation::Normalized => ((n_m + 1.0) * c0_abs).sqrt(),
                    };
                    if weight != 0.0 {
                        up.push(Link { site: m, neighbor, weight });
                    }
                }
                if let Some(neighbor) = table.lower(k, m) {
                    let weight = match representation {
                        Representation::Regular => n_m,
                        Representation::Normalized if c0_abs > 0.0 => (n_m / c0_abs).sqrt(),
                        Representation::Normalized => 0.0,
                    };
                    if weight != 0.0 && (comm != 0.0 || anti != 0.0) {
                        down.push(Link { site: m, neighbor, weight });
                    }
                }
            }
            up_offsets.push(up.len());
            down_offsets.push(down.len());
        }

        Self {
            n,
            hamiltonian,
            decay,
            up_offsets,
            up,
            down_offsets,
            down,
            theta_row: Complex64::new(anti, comm),
            theta_col: Complex64::new(anti, -comm),
        }
    }

    fn apply_block(&self, k: usize, input: &[Complex64], out: &mut [Complex64]) {
        let n = self.n;
        let nn = n * n;
        let h = &self.hamiltonian;
        let s = &input[k * nn..(k + 1) * nn];
        let rate = self.decay[k];

        // −i[H, σ] − (Σ n_m γ) σ
        for r in 0..n {
            for c in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for l in 0..n {
                    acc += s[l * n + c] * h[r * n + l] - s[r * n + l] * h[l * n + c];
                }
                out[r * n + c] = Complex64::new(acc.im, -acc.re) - s[r * n + c] * rate;
            }
        }

        // weight · i[V_m, σ^{n+e_m}]
        for link in &self.up[self.up_offsets[k]..self.up_offsets[k + 1]] {
            let t = &input[link.neighbor * nn..(link.neighbor + 1) * nn];
            let m = link.site;
            let w = Complex64::new(0.0, link.weight);
            for c in 0..n {
                out[m * n + c] += w * t[m * n + c];
            }
            for r in 0..n {
                out[r * n + m] -= w * t[r * n + m];
            }
        }

        // weight · θ_m σ^{n−e_m}
        for link in &self.down[self.down_offsets[k]..self.down_offsets[k + 1]] {
            let t = &input[link.neighbor * nn..(link.neighbor + 1) * nn];
            let m = link.site;
            let row = self.theta_row * link.weight;
            let col = self.theta_col * link.weight;
            for c in 0..n {
                out[m * n + c] += row * t[m * n + c];
            }
            for r in 0..n {
                out[r * n + m] += col * t[r * n + m];
            }
        }
    }
}

impl LinearRhs for HeomOperator {
    fn dimension(&self) -> usize {
        self.decay.len() * self.n * self.n
    }

    fn apply(&self, input: &[Complex64], out: &mut [Complex64]) {
        let nn = self.n * self.n;
        let min_len = (2048 / nn).max(1);
        out.par_chunks_mut(nn)
            .with_min_len(min_len)
            .enumerate()
            .for_each(|(k, block)| self.apply_block(k, input, block));
    }
}

/// Fixed-step integration parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationSettings {
    pub max_tier: u32,
    pub dt_fs: f64,
    pub t_end_fs: f64,
    pub sample_every: usize,
    pub representation: Representation,
}

impl IntegrationSettings {
    pub fn new(max_tier: u32, t_end_fs: f64) -> Self {
        Self {
            max_tier,
            dt_fs: 1.0,
            t_end_fs,
            sample_every: 10,
            representation: Representation::Normalized,
        }
    }

    fn step_count(&self) -> Result<usize> {
        if !(self.dt_fs.is_finite() && self.dt_fs > 0.0) {
            return Err(Error::Config(vec![format!("dt_fs must be positive, got {}", self.dt_fs)]));
        }
        if !(self.t_end_fs.is_finite() && self.t_end_fs >= 0.0) {
            return Err(Error::Config(vec![format!(
                "t_end_fs must be non-negative, got {}",
                self.t_end_fs
            )]));
        }
        if self.sample_every == 0 {
            return Err(Error::Config(vec!["sample_every must be at least 1".into()]));
        }
        let steps = (self.t_end_fs / self.dt_fs).round();
        if (steps * self.dt_fs - self.t_end_fs).abs() > 1e-9 * self.t_end_fs.max(1.0) {
            return Err(Error::Config(vec![format!(
                "t_end_fs = {} is not a whole number of dt_fs = {} steps",
                self.t_end_fs, self.dt_fs
            )]));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone)]
pub struct TrajectoryMetadata {
    pub system: OpenSystem,
    pub max_tier: u32,
    pub dt_fs: f64,
    pub sample_every: usize,
    pub representation: Representation,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub system_states: Vec<DMatrix<Complex64>>,
    /// Full hierarchy at each sample, always in the normalized representation.
    pub ado_snapshots: Option<Vec<HierarchyState>>,
    pub metadata: TrajectoryMetadata,
}

/// A configured hierarchy integrator, reusable across initial states.
#[derive(Debug, Clone)]
pub struct Propagator {
    system: OpenSystem,
    settings: IntegrationSettings,
    table: Arc<HierarchyIndexTable>,
    operator: HeomOperator,
    steps: usize,
}

impl Propagator {
    pub fn new(system: &OpenSystem, settings: IntegrationSettings) -> Result<Self> {
        let steps = settings.step_count()?;
        let omega_e = CharacteristicFrequency::EigenvalueSpread.evaluate(system.model());
        let stiffness = f64::from(settings.max_tier) * system.bath().dissipation_rate() + omega_e;
        let product = settings.dt_fs * stiffness;
        if product > STABILITY_LIMIT {
            return Err(Error::UnstableStep {
                dt_fs: settings.dt_fs,
                product,
                limit: STABILITY_LIMIT,
            });
        }
        let table = Arc::new(enumerate_indices(system.n_sites(), settings.max_tier)?);
        let operator = HeomOperator::new(system, &table, settings.representation);
        Ok(Self {
            system: system.clone(),
            settings,
            table,
            operator,
            steps,
        })
    }

    pub fn table(&self) -> &Arc<HierarchyIndexTable> {
        &self.table
    }

    pub fn settings(&self) -> &IntegrationSettings {
        &self.settings
    }

    pub fn system(&self) -> &OpenSystem {
        &self.system
    }

    pub fn sample_count(&self) -> usize {
        self.steps / self.settings.sample_every + 1
    }

    /// Sample times in fs.
    pub fn sample_times(&self) -> Vec<f64> {
        let stride = self.settings.sample_every as f64 * self.settings.dt_fs;
        (0..self.sample_count()).map(|k| k as f64 * stride).collect()
    }

    /// Integrate from σ^0 = `initial`, all auxiliary operators zero, calling
    /// `observer(sample, time_fs, state)` at every sample including t = 0.
    ///
    /// `initial` only has to be Hermitian, so differences of density matrices
    /// can be propagated directly.
    pub fn run_observed<F>(&self, initial: &DMatrix<Complex64>, mut observer: F) -> Result<()>
    where
        F: FnMut(usize, f64, &HierarchyState) -> Result<()>,
    {
        let dev = hermitian_deviation(initial);
        if dev > HERMITIAN_INPUT_TOLERANCE {
            return Err(Error::NotHermitian(dev));
        }
        let n = self.system.n_sites();
        let mut state = HierarchyState::franck_condon(Arc::clone(&self.table), initial, self.settings.representation)?;
        let trace0 = block_trace(&state.data[..n * n], n);
        let mut rk = Rk4::new(state.data.len());
        let every = self.settings.sample_every;

        observer(0, 0.0, &state)?;
        for step in 1..=self.steps {
            rk.step(&self.operator, &mut state.data, self.settings.dt_fs);
            if step % every == 0 {
                let time = step as f64 * self.settings.dt_fs;
                let drift = (block_trace(&state.data[..n * n], n) - trace0).norm();
                if !drift.is_finite() || drift > TRACE_FAILURE_TOLERANCE {
                    return Err(Error::IntegrationFailure {
                        time_fs: time,
                        reason: format!("trace drift {drift:e} exceeds {TRACE_FAILURE_TOLERANCE:e}"),
                    });
                }
                observer(step / every, time, &state)?;
            }
        }
        Ok(())
    }

    /// Integrate a density matrix and record the sampled trajectory.
    pub fn run(&self, rho0: &DMatrix<Complex64>, keep_ados: bool) -> Result<Trajectory> {
        validate_density_matrix(rho0, self.system.n_sites())?;
        let capacity = self.sample_count();
        let mut times = Vec::with_capacity(capacity);
        let mut system_states = Vec::with_capacity(capacity);
        let mut snapshots = keep_ados.then(|| Vec::with_capacity(capacity));
        let bath = *self.system.bath();
        self.run_observed(rho0, |_, t, state| {
            times.push(t);
            system_states.push(state.system());
            if let Some(snaps) = snapshots.as_mut() {
                snaps.push(convert_representation(state, Representation::Normalized, &bath)?);
            }
            Ok(())
        })?;
        Ok(Trajectory {
            times,
            system_states,
            ado_snapshots: snapshots,
            metadata: TrajectoryMetadata {
                system: self.system.clone(),
                max_tier: self.settings.max_tier,
                dt_fs: self.settings.dt_fs,
                sample_every: self.settings.sample_every,
                representation: self.settings.representation,
            },
        })
    }
}

/// Integrate the hierarchy from σ^0(0) = ρ0 with every auxiliary operator
/// zero.
pub fn propagate(
    rho0: &DMatrix<Complex64>,
    system: &OpenSystem,
    settings: IntegrationSettings,
    keep_ados: bool,
) -> Result<Trajectory> {
    Propagator::new(system, settings)?.run(rho0, keep_ados)
}

/// Check Hermiticity, unit trace and positivity of an initial state.
pub fn validate_density_matrix(rho: &DMatrix<Complex64>, n_sites: usize) -> Result<()> {
    if rho.nrows() != n_sites || rho.ncols() != n_sites {
        return Err(Error::DimensionMismatch(format!(
            "density matrix is {}x{}, expected {n_sites}x{n_sites}",
            rho.nrows(),
            rho.ncols()
        )));
    }
    let dev = hermitian_deviation(rho);
    if dev > HERMITIAN_INPUT_TOLERANCE {
        return Err(Error::InvalidState(format!("not Hermitian (deviation {dev:e})")));
    }
    let trace = rho.trace();
    if (trace - Complex64::new(1.0, 0.0)).norm() > HERMITIAN_INPUT_TOLERANCE {
        return Err(Error::InvalidState(format!("trace is {trace}, expected 1")));
    }
    let min_eig = hermitian_eigenvalues(rho).into_iter().fold(f64::INFINITY, f64::min);
    if min_eig < -POSITIVITY_INPUT_TOLERANCE {
        return Err(Error::InvalidState(format!("negative eigenvalue {min_eig:e}")));
    }
    Ok(())
}

/// |m⟩⟨m| for a zero-based site index.
pub fn site_projector(n_sites: usize, site: usize) -> DMatrix<Complex64> {
    let mut rho = DMatrix::zeros(n_sites, n_sites);
    rho[(site, site)] = Complex64::new(1.0, 0.0);
    rho
}
