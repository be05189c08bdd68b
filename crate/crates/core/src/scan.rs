//! Parameter sweeps over the dimer and FMO models, and the built-in presets.

use std::path::Path;

use rayon::prelude::*;

use crate::config::{
    BathBlock, HierarchyBlock, IntegrationBlock, ModelBlock, OptimizeTask, PairMode, PairTask, RunConfig,
    ScanParameter, ScanTask, Task,
};
use crate::error::{Error, Result};
use crate::files::parse_hamiltonian;
use crate::hierarchy::{validity_flag, CharacteristicFrequency, DEFAULT_SAFETY_FACTOR};
use crate::measures::{fixed_pair_nm, optimize_nm, site_candidate, NMResult};
use crate::propagator::{IntegrationSettings, Representation};
use crate::units::{high_temperature_check, BathSpec, OpenSystem};

const FMO_HAMILTONIAN: &str = include_str!("../data/fmo_hamiltonian.csv");

/// A fully specified sweep: one curve per correlation time, one point per
/// grid value.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanSpec {
    pub base: RunConfig,
    pub parameter: ScanParameter,
    pub grid: Vec<f64>,
    pub pair_mode: PairMode,
    /// Ignored for dissipation-rate scans, where τ_c = 1/γ per point.
    pub correlation_times_fs: Vec<f64>,
    /// Zero-based.
    pub initial_sites: (usize, usize),
    pub t_end_fs: f64,
    pub optimize: OptimizeTask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub parameter: f64,
    pub tau_c_fs: f64,
    /// NaN when the point failed.
    pub nm_ity: f64,
    pub valid: bool,
    pub max_tier: u32,
    pub pair_id: String,
    pub high_temperature: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub parameter: ScanParameter,
    pub rows: Vec<ScanRow>,
    pub warnings: Vec<String>,
}

impl ScanResult {
    /// Rows of the curve with the given correlation time.
    pub fn curve(&self, tau_c_fs: f64) -> Vec<&ScanRow> {
        self.rows.iter().filter(|r| r.tau_c_fs == tau_c_fs).collect()
    }

    /// The row at `parameter` on the curve `tau_c_fs`.
    pub fn row(&self, parameter: f64, tau_c_fs: f64) -> Option<&ScanRow> {
        self.rows
            .iter()
            .find(|r| r.tau_c_fs == tau_c_fs && (r.parameter - parameter).abs() <= 1e-12 * parameter.abs().max(1.0))
    }
}

impl ScanSpec {
    pub fn new(base: RunConfig, parameter: ScanParameter, grid: Vec<f64>) -> Self {
        let sites = base.initial_sites();
        Self {
            correlation_times_fs: base.bath.tau_c_fs.into_iter().collect(),
            t_end_fs: base.integration.t_end_fs,
            optimize: base.optimize_task(),
            initial_sites: sites,
            pair_mode: PairMode::FixedSitePair,
            parameter,
            grid,
            base,
        }
    }

    /// Build from a configuration whose task is a scan.
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        let Task::Scan(task) = &config.task else {
            return Err(Error::Config(vec!["task.kind: expected \"scan\"".into()]));
        };
        let mut spec = Self::new(config.clone(), task.parameter, task.grid.clone());
        spec.pair_mode = task.pair_mode;
        if !task.correlation_times_fs.is_empty() {
            spec.correlation_times_fs = task.correlation_times_fs.clone();
        }
        spec.t_end_fs = task.t_end_fs;
        spec.optimize = task.optimize.clone();
        Ok(spec)
    }

    pub fn with_correlation_times(mut self, tau_c_fs: Vec<f64>) -> Self {
        self.correlation_times_fs = tau_c_fs;
        self
    }

    pub fn with_pair_mode(mut self, mode: PairMode) -> Self {
        self.pair_mode = mode;
        self
    }

    pub fn with_t_end(mut self, t_end_fs: f64) -> Self {
        self.t_end_fs = t_end_fs;
        self
    }

    fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if self.grid.is_empty() {
            errors.push("scan grid must not be empty".to_string());
        }
        if self.grid.iter().any(|x| !x.is_finite()) || self.grid.windows(2).any(|w| w[1] <= w[0]) {
            errors.push("scan grid must be finite and strictly increasing".to_string());
        }
        let n = self.base.model.site_energies_cm.len();
        if matches!(self.parameter, ScanParameter::Coupling | ScanParameter::SiteEnergyGap) && n < 2 {
            errors.push(format!("{} scans need at least two sites", self.parameter.name()));
        }
        if self.parameter != ScanParameter::DissipationRate {
            if self.correlation_times_fs.is_empty() && self.base.bath.gamma_per_fs.is_none() {
                errors.push("scan needs at least one correlation time".to_string());
            }
            if self.correlation_times_fs.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                errors.push("correlation times must be positive".to_string());
            }
        }
        if self.initial_sites.0 >= n || self.initial_sites.1 >= n {
            errors.push("initial sites out of range".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// (τ_c, grid value) for every point, curve-major.
    fn points(&self) -> Vec<(Option<f64>, f64)> {
        if self.parameter == ScanParameter::DissipationRate {
            return self.grid.iter().map(|&g| (None, g)).collect();
        }
        let curves: Vec<Option<f64>> = if self.correlation_times_fs.is_empty() {
            vec![None]
        } else {
            self.correlation_times_fs.iter().copied().map(Some).collect()
        };
        curves
            .into_iter()
            .flat_map(|tau| self.grid.iter().map(move |&g| (tau, g)))
            .collect()
    }

    fn point_system(&self, tau_c_fs: Option<f64>, value: f64) -> Result<OpenSystem> {
        let cfg = &self.base;
        let mut energies = cfg.model.site_energies_cm.clone();
        let mut couplings = cfg.coupling_matrix().map_err(|e| Error::Config(vec![e]))?;
        let base_bath = cfg.bath_spec()?;
        let temperature = cfg.bath.temperature_k;
        let mut lambda = cfg.bath.lambda_cm;
        let mut gamma = tau_c_fs.map_or(base_bath.dissipation_rate(), |t| 1.0 / t);
        match self.parameter {
            ScanParameter::Coupling => {
                couplings[(0, 1)] = value;
                couplings[(1, 0)] = value;
            }
            ScanParameter::SiteEnergyGap => energies[1] = energies[0] + value,
            ScanParameter::DissipationRate => gamma = value,
            ScanParameter::ReorganizationEnergy => lambda = value,
        }
        OpenSystem::from_parts(energies, couplings, BathSpec::new(lambda, gamma, temperature)?)
    }

    fn settings(&self) -> IntegrationSettings {
        let mut settings = self.base.integration_settings();
        match self.pair_mode {
            PairMode::FixedSitePair => settings.t_end_fs = self.t_end_fs,
            PairMode::Optimized => {
                settings.t_end_fs = self.optimize.t_end_fs;
                settings.max_tier = self.optimize.max_tier;
            }
        }
        settings
    }

    fn evaluate(&self, system: &OpenSystem) -> Result<NMResult> {
        let settings = self.settings();
        let h = &self.base.hierarchy;
        match self.pair_mode {
            PairMode::FixedSitePair => {
                let n = system.n_sites();
                fixed_pair_nm(
                    system,
                    settings,
                    &site_candidate(n, self.initial_sites.0),
                    &site_candidate(n, self.initial_sites.1),
                    h.safety_factor,
                    h.characteristic_frequency,
                )
            }
            PairMode::Optimized => optimize_nm(
                system,
                settings,
                self.optimize.n_states,
                h.safety_factor,
                h.characteristic_frequency,
            ),
        }
    }

    fn run_point(&self, tau_c_fs: Option<f64>, value: f64) -> ScanRow {
        let max_tier = self.settings().max_tier;
        let system = self.point_system(tau_c_fs, value);
        let tau = match (&system, tau_c_fs) {
            (Ok(s), _) => s.bath().correlation_time_fs(),
            (Err(_), Some(t)) => t,
            (Err(_), None) if self.parameter == ScanParameter::DissipationRate => 1.0 / value,
            (Err(_), None) => f64::NAN,
        };
        let failed = |e: Error, high_temperature| ScanRow {
            parameter: value,
            tau_c_fs: tau,
            nm_ity: f64::NAN,
            valid: false,
            max_tier,
            pair_id: "failed".into(),
            high_temperature,
            error: Some(e.to_string()),
        };
        let system = match system {
            Ok(s) => s,
            Err(e) => return failed(e, false),
        };
        let high_temperature = high_temperature_check(system.bath()).satisfied;
        match self.evaluate(&system) {
            Ok(nm) => ScanRow {
                parameter: value,
                tau_c_fs: tau,
                nm_ity: nm.value,
                valid: nm.validity,
                max_tier: nm.max_tier_used,
                pair_id: format!("{}/{}", nm.pair.0, nm.pair.1),
                high_temperature,
                error: None,
            },
            Err(e) => failed(e, high_temperature),
        }
    }
}

/// Run every point of the scan in parallel. Rows come back in curve-major,
/// grid order; a failing point yields a row with `nm_ity = NaN` and its error.
pub fn run_scan(spec: &ScanSpec) -> Result<ScanResult> {
    spec.validate()?;
    let base_bath = spec.base.bath_spec()?;
    let check = high_temperature_check(&base_bath);
    let mut warnings = Vec::new();
    if !check.satisfied {
        if !spec.base.bath.allow_outside_high_temperature {
            return Err(Error::InvalidBath(format!(
                "base configuration fails the high-temperature condition (ħγβ = {:.3}); set bath.allow_outside_high_temperature to proceed",
                check.ratio
            )));
        }
        warnings.push(format!("base configuration outside the high-temperature regime (ħγβ = {:.3})", check.ratio));
    }

    let rows: Vec<ScanRow> = spec
        .points()
        .par_iter()
        .map(|&(tau, value)| spec.run_point(tau, value))
        .collect();

    for row in &rows {
        let at = format!("{} = {} (tau_c = {} fs)", spec.parameter.name(), row.parameter, row.tau_c_fs);
        if let Some(e) = &row.error {
            warnings.push(format!("point {at} failed: {e}"));
        } else {
            if !row.high_temperature {
                warnings.push(format!("point {at} is outside the high-temperature regime"));
            }
            if !row.valid {
                warnings.push(format!("point {at} uses an insufficient hierarchy depth"));
            }
        }
    }
    Ok(ScanResult {
        parameter: spec.parameter,
        rows,
        warnings,
    })
}

/// Default grid for each scan parameter; dissipation rates are 1/τ for
/// τ = 200, 190, …, 20 fs, so γ increases along the grid.
pub fn default_grid(parameter: ScanParameter) -> Vec<f64> {
    let linspace = |a: f64, b: f64, n: usize| -> Vec<f64> {
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    };
    match parameter {
        ScanParameter::Coupling => linspace(-200.0, 0.0, 21),
        ScanParameter::SiteEnergyGap => linspace(0.0, 400.0, 21),
        ScanParameter::DissipationRate => (0..19).map(|k| 1.0 / (200.0 - 10.0 * k as f64)).collect(),
        ScanParameter::ReorganizationEnergy => linspace(0.0, 300.0, 31),
    }
}

/// Turn a preset into a scan configuration over `parameter` on its default
/// grid with a 4 ps horizon per point.
pub fn scan_config(base: &RunConfig, parameter: ScanParameter, correlation_times_fs: Vec<f64>) -> RunConfig {
    let mut cfg = base.clone();
    cfg.task = Task::Scan(ScanTask {
        parameter,
        grid: default_grid(parameter),
        pair_mode: PairMode::FixedSitePair,
        correlation_times_fs,
        initial_sites: [base.initial_sites().0 + 1, base.initial_sites().1 + 1],
        t_end_fs: 4000.0,
        optimize: OptimizeTask::default(),
    });
    cfg
}

/// The standard dimer: ε = (0, 120) cm⁻¹, J = −87.7 cm⁻¹, λ = 20 cm⁻¹,
/// T = 288 K, 40 tiers, 20 ps, curves at τ_c = 50, 100, 150 fs.
pub fn dimer_preset() -> RunConfig {
    RunConfig {
        schema_version: 1,
        model: ModelBlock {
            site_energies_cm: vec![0.0, 120.0],
            couplings_cm: vec![vec![-87.7]],
        },
        bath: BathBlock {
            lambda_cm: 20.0,
            tau_c_fs: Some(150.0),
            gamma_per_fs: None,
            temperature_k: 288.0,
            allow_outside_high_temperature: false,
        },
        hierarchy: HierarchyBlock {
            max_tier: 39,
            representation: Representation::Normalized,
            safety_factor: DEFAULT_SAFETY_FACTOR,
            characteristic_frequency: CharacteristicFrequency::default(),
        },
        integration: IntegrationBlock {
            dt_fs: 1.0,
            t_end_fs: 20_000.0,
            sample_every: 10,
        },
        task: Task::Pair(PairTask {
            initial_sites: [1, 2],
            correlation_times_fs: Some(vec![50.0, 100.0, 150.0]),
        }),
    }
}

/// Seven-site FMO with the bundled Hamiltonian, four tiers, λ = 35 cm⁻¹,
/// τ_c = 150 fs, 4 ps, sites 1 and 2.
pub fn fmo_preset() -> RunConfig {
    fmo_preset_from_text(FMO_HAMILTONIAN).expect("bundled FMO Hamiltonian is valid")
}

pub fn fmo_preset_from_file(path: &Path) -> Result<RunConfig> {
    fmo_preset_from_text(&std::fs::read_to_string(path)?)
}

/// FMO preset around a Hamiltonian data file; energies are shifted so that
/// site 1 sits at zero.
pub fn fmo_preset_from_text(text: &str) -> Result<RunConfig> {
    let data = parse_hamiltonian(text)?;
    let n = data.site_energies_cm.len();
    if n < 2 {
        return Err(Error::Format(format!("FMO Hamiltonian needs at least two sites, found {n}")));
    }
    let origin = data.site_energies_cm[0];
    Ok(RunConfig {
        schema_version: 1,
        model: ModelBlock {
            site_energies_cm: data.site_energies_cm.iter().map(|e| e - origin).collect(),
            couplings_cm: (0..n)
                .map(|i| ((i + 1)..n).map(|j| data.couplings_cm[(i, j)]).collect())
                .filter(|row: &Vec<f64>| !row.is_empty())
                .collect(),
        },
        bath: BathBlock {
            lambda_cm: 35.0,
            tau_c_fs: Some(150.0),
            gamma_per_fs: None,
            temperature_k: 288.0,
            allow_outside_high_temperature: false,
        },
        hierarchy: HierarchyBlock {
            max_tier: 4,
            representation: Representation::Normalized,
            safety_factor: DEFAULT_SAFETY_FACTOR,
            characteristic_frequency: CharacteristicFrequency::default(),
        },
        integration: IntegrationBlock {
            dt_fs: 1.0,
            t_end_fs: 4000.0,
            sample_every: 10,
        },
        task: Task::Pair(PairTask {
            initial_sites: [1, 2],
            correlation_times_fs: None,
        }),
    })
}

/// Validity flag for a configuration's own max_tier.
pub fn config_validity(config: &RunConfig, system: &OpenSystem) -> bool {
    validity_flag(
        config.hierarchy.max_tier,
        system.model(),
        system.bath(),
        config.hierarchy.safety_factor,
        config.hierarchy.characteristic_frequency,
    )
}
