//! Run configuration: a versioned TOML document whose keys carry their units.
//!
//! ```toml
//! schema_version = 1
//!
//! [model]
//! site_energies_cm = [0.0, 120.0]
//! couplings_cm = [[0.0, -87.7], [-87.7, 0.0]]   # or upper triangle: [[-87.7]]
//!
//! [bath]
//! lambda_cm = 20.0
//! tau_c_fs = 100.0          # or gamma_per_fs, never both
//! temperature_K = 288.0
//!
//! [hierarchy]
//! max_tier = 39
//! representation = "normalized"
//!
//! [integration]
//! dt_fs = 1.0
//! t_end_fs = 20000.0
//! sample_every = 10
//!
//! [task]
//! kind = "pair"
//! initial_sites = [1, 2]
//! ```

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierarchy::{CharacteristicFrequency, DEFAULT_SAFETY_FACTOR};
use crate::propagator::{IntegrationSettings, Representation};
use crate::units::{BathSpec, OpenSystem};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub model: ModelBlock,
    pub bath: BathBlock,
    pub hierarchy: HierarchyBlock,
    pub integration: IntegrationBlock,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    pub site_energies_cm: Vec<f64>,
    /// Full symmetric matrix, or the strict upper triangle row by row.
    pub couplings_cm: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathBlock {
    pub lambda_cm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_c_fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_per_fs: Option<f64>,
    #[serde(rename = "temperature_K")]
    pub temperature_k: f64,
    /// Permit ħγβ ≥ 1, where the single-exponential bath is no longer exact.
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_outside_high_temperature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyBlock {
    pub max_tier: u32,
    #[serde(default)]
    pub representation: Representation,
    #[serde(default = "default_safety_factor")]
    pub safety_factor: f64,
    #[serde(default)]
    pub characteristic_frequency: CharacteristicFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationBlock {
    #[serde(default = "default_dt")]
    pub dt_fs: f64,
    pub t_end_fs: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Task {
    Pair(PairTask),
    Optimize(OptimizeTask),
    Scan(ScanTask),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTask {
    /// One-based site numbers of the two initial projectors.
    #[serde(default = "default_sites")]
    pub initial_sites: [usize; 2],
    /// Run once per correlation time instead of the bath block's value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation_times_fs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeTask {
    #[serde(default = "default_n_states")]
    pub n_states: usize,
    #[serde(default = "default_optimize_tier")]
    pub max_tier: u32,
    #[serde(default = "default_optimize_horizon")]
    pub t_end_fs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParameter {
    /// J_12 in cm⁻¹
    Coupling,
    /// ε_2 − ε_1 in cm⁻¹
    SiteEnergyGap,
    /// γ in fs⁻¹
    DissipationRate,
    /// λ in cm⁻¹
    ReorganizationEnergy,
}

impl ScanParameter {
    pub fn unit(self) -> &'static str {
        match self {
            ScanParameter::DissipationRate => "fs^-1",
            _ => "cm^-1",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScanParameter::Coupling => "coupling",
            ScanParameter::SiteEnergyGap => "site_energy_gap",
            ScanParameter::DissipationRate => "dissipation_rate",
            ScanParameter::ReorganizationEnergy => "reorganization_energy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    #[default]
    FixedSitePair,
    Optimized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTask {
    pub parameter: ScanParameter,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub pair_mode: PairMode,
    /// One curve per entry; ignored for dissipation-rate scans.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub correlation_times_fs: Vec<f64>,
    #[serde(default = "default_sites")]
    pub initial_sites: [usize; 2],
    /// Propagation horizon per grid point.
    #[serde(default = "default_scan_horizon")]
    pub t_end_fs: f64,
    #[serde(default)]
    pub optimize: OptimizeTask,
}

impl Default for OptimizeTask {
    fn default() -> Self {
        Self {
            n_states: default_n_states(),
            max_tier: default_optimize_tier(),
            t_end_fs: default_optimize_horizon(),
        }
    }
}

impl Default for PairTask {
    fn default() -> Self {
        Self {
            initial_sites: default_sites(),
            correlation_times_fs: None,
        }
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}
fn default_safety_factor() -> f64 {
    DEFAULT_SAFETY_FACTOR
}
fn default_dt() -> f64 {
    1.0
}
fn default_sample_every() -> usize {
    10
}
fn default_sites() -> [usize; 2] {
    [1, 2]
}
fn default_n_states() -> usize {
    50
}
fn default_optimize_tier() -> u32 {
    20
}
fn default_optimize_horizon() -> f64 {
    2000.0
}
fn default_scan_horizon() -> f64 {
    4000.0
}

const TOP_KEYS: &[&str] = &["schema_version", "model", "bath", "hierarchy", "integration", "task"];
const MODEL_KEYS: &[&str] = &["site_energies_cm", "couplings_cm"];
const BATH_KEYS: &[&str] = &[
    "lambda_cm",
    "tau_c_fs",
    "gamma_per_fs",
    "temperature_K",
    "allow_outside_high_temperature",
];
const HIERARCHY_KEYS: &[&str] = &["max_tier", "representation", "safety_factor", "characteristic_frequency"];
const INTEGRATION_KEYS: &[&str] = &["dt_fs", "t_end_fs", "sample_every"];
const PAIR_KEYS: &[&str] = &["kind", "initial_sites", "correlation_times_fs"];
const OPTIMIZE_KEYS: &[&str] = &["kind", "n_states", "max_tier", "t_end_fs"];
const SCAN_KEYS: &[&str] = &[
    "kind",
    "parameter",
    "grid",
    "pair_mode",
    "correlation_times_fs",
    "initial_sites",
    "t_end_fs",
    "optimize",
];
const SCAN_OPTIMIZE_KEYS: &[&str] = &["n_states", "max_tier", "t_end_fs"];

/// Strip the trailing unit suffix: `lambda_cm` → `lambda`.
fn stem(key: &str) -> &str {
    key.rsplit_once('_').map_or(key, |(s, _)| s)
}

fn check_keys(table: &toml::Table, allowed: &[&str], path: &str, errors: &mut Vec<String>) {
    for key in table.keys() {
        if allowed.contains(&key.as_str()) {
            continue;
        }
        let suffix_twin = allowed.iter().find(|a| a.contains('_') && stem(a) == stem(key));
        match suffix_twin {
            Some(expected) => errors.push(format!(
                "{path}{key}: unit suffix mismatch, expected `{expected}`"
            )),
            None => errors.push(format!("{path}{key}: unknown key")),
        }
    }
}

fn sub_table<'a>(table: &'a toml::Table, key: &str) -> Option<&'a toml::Table> {
    table.get(key).and_then(toml::Value::as_table)
}

/// Parse and validate a configuration, reporting every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;

    let mut errors = Vec::new();
    check_keys(&table, TOP_KEYS, "", &mut errors);
    for (block, keys) in [
        ("model", MODEL_KEYS),
        ("bath", BATH_KEYS),
        ("hierarchy", HIERARCHY_KEYS),
        ("integration", INTEGRATION_KEYS),
    ] {
        match sub_table(&table, block) {
            Some(t) => check_keys(t, keys, &format!("{block}."), &mut errors),
            None => errors.push(format!("{block}: missing table")),
        }
    }
    match sub_table(&table, "task") {
        Some(task) => {
            let keys = match task.get("kind").and_then(toml::Value::as_str) {
                Some("pair") => Some(PAIR_KEYS),
                Some("optimize") => Some(OPTIMIZE_KEYS),
                Some("scan") => Some(SCAN_KEYS),
                Some(other) => {
                    errors.push(format!("task.kind: unknown task kind `{other}`"));
                    None
                }
                None => {
                    errors.push("task.kind: missing".into());
                    None
                }
            };
            if let Some(keys) = keys {
                check_keys(task, keys, "task.", &mut errors);
            }
            if let Some(opt) = sub_table(task, "optimize") {
                check_keys(opt, SCAN_OPTIMIZE_KEYS, "task.optimize.", &mut errors);
            }
        }
        None => errors.push("task: missing table".into()),
    }
    if let Some(bath) = sub_table(&table, "bath") {
        match (bath.contains_key("tau_c_fs"), bath.contains_key("gamma_per_fs")) {
            (true, true) => errors.push(
                "bath: `tau_c_fs` and `gamma_per_fs` are mutually exclusive; give exactly one".into(),
            ),
            (false, false) => errors.push("bath: one of `tau_c_fs` or `gamma_per_fs` is required".into()),
            _ => {}
        }
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }

    let config: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
    let problems = config.validate();
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(problems))
    }
}

impl RunConfig {
    /// Serialize to the TOML schema accepted by [`parse_config`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    /// All validation problems, empty when the configuration is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        let mut check_finite = |name: &str, x: f64| {
            if !x.is_finite() {
                errors.push(format!("{name}: must be finite"));
            }
        };
        for &e in &self.model.site_energies_cm {
            check_finite("model.site_energies_cm", e);
        }
        for &x in self.model.couplings_cm.iter().flatten() {
            check_finite("model.couplings_cm", x);
        }
        check_finite("bath.lambda_cm", self.bath.lambda_cm);
        check_finite("bath.temperature_K", self.bath.temperature_k);
        check_finite("integration.dt_fs", self.integration.dt_fs);
        check_finite("integration.t_end_fs", self.integration.t_end_fs);

        if self.schema_version != SCHEMA_VERSION {
            errors.push(format!(
                "schema_version: {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let n = self.model.site_energies_cm.len();
        if n == 0 {
            errors.push("model.site_energies_cm: at least one site is required".into());
        }
        if let Err(e) = self.coupling_matrix() {
            errors.push(e);
        }

        let b = &self.bath;
        if b.lambda_cm < 0.0 {
            errors.push(format!("bath.lambda_cm: must be non-negative, got {}", b.lambda_cm));
        }
        if b.temperature_k <= 0.0 {
            errors.push(format!("bath.temperature_K: must be positive, got {}", b.temperature_k));
        }
        match (b.tau_c_fs, b.gamma_per_fs) {
            (Some(_), Some(_)) => errors.push(
                "bath: `tau_c_fs` and `gamma_per_fs` are mutually exclusive; give exactly one".into(),
            ),
            (None, None) => errors.push("bath: one of `tau_c_fs` or `gamma_per_fs` is required".into()),
            (Some(t), None) if !(t.is_finite() && t > 0.0) => {
                errors.push(format!("bath.tau_c_fs: must be positive, got {t}"))
            }
            (None, Some(g)) if !(g.is_finite() && g > 0.0) => {
                errors.push(format!("bath.gamma_per_fs: must be positive, got {g}"))
            }
            _ => {}
        }

        if !(self.hierarchy.safety_factor >= 1.0) {
            errors.push(format!(
                "hierarchy.safety_factor: must be at least 1, got {}",
                self.hierarchy.safety_factor
            ));
        }

        let i = &self.integration;
        if !(i.dt_fs > 0.0) {
            errors.push(format!("integration.dt_fs: must be positive, got {}", i.dt_fs));
        }
        if !(i.t_end_fs >= 0.0) {
            errors.push(format!("integration.t_end_fs: must be non-negative, got {}", i.t_end_fs));
        }
        if i.sample_every == 0 {
            errors.push("integration.sample_every: must be at least 1".into());
        }
        if i.dt_fs > 0.0 && i.t_end_fs >= 0.0 && !is_step_multiple(i.t_end_fs, i.dt_fs) {
            errors.push(format!(
                "integration.t_end_fs: {} is not a whole number of {} fs steps",
                i.t_end_fs, i.dt_fs
            ));
        }

        let check_sites = |sites: &[usize; 2], errors: &mut Vec<String>| {
            for &s in sites {
                if s == 0 || s > n {
                    errors.push(format!("task.initial_sites: site {s} outside 1..={n}"));
                }
            }
        };
        let check_times = |times: &[f64], errors: &mut Vec<String>| {
            if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                errors.push("task.correlation_times_fs: every entry must be positive".into());
            }
        };
        let check_optimize = |o: &OptimizeTask, prefix: &str, errors: &mut Vec<String>| {
            if o.n_states < 2 {
                errors.push(format!("{prefix}n_states: at least two states are required"));
            }
            if !(o.t_end_fs.is_finite() && o.t_end_fs >= 0.0) {
                errors.push(format!("{prefix}t_end_fs: must be non-negative"));
            } else if i.dt_fs > 0.0 && !is_step_multiple(o.t_end_fs, i.dt_fs) {
                errors.push(format!("{prefix}t_end_fs: not a whole number of steps"));
            }
        };
        match &self.task {
            Task::Pair(p) => {
                check_sites(&p.initial_sites, &mut errors);
                if let Some(times) = &p.correlation_times_fs {
                    if times.is_empty() {
                        errors.push("task.correlation_times_fs: must not be empty when given".into());
                    }
                    check_times(times, &mut errors);
                }
            }
            Task::Optimize(o) => {
                check_optimize(o, "task.", &mut errors);
                if n != 2 {
                    errors.push("task: optimization requires a two-site model".into());
                }
            }
            Task::Scan(s) => {
                check_sites(&s.initial_sites, &mut errors);
                check_times(&s.correlation_times_fs, &mut errors);
                check_optimize(&s.optimize, "task.optimize.", &mut errors);
                if s.grid.is_empty() {
                    errors.push("task.grid: must not be empty".into());
                }
                if s.grid.iter().any(|x| !x.is_finite()) {
                    errors.push("task.grid: entries must be finite".into());
                }
                if s.grid.windows(2).any(|w| w[1] <= w[0]) {
                    errors.push("task.grid: must be strictly increasing".into());
                }
                if !(s.t_end_fs.is_finite() && s.t_end_fs >= 0.0) || (i.dt_fs > 0.0 && !is_step_multiple(s.t_end_fs, i.dt_fs)) {
                    errors.push("task.t_end_fs: must be a non-negative whole number of steps".into());
                }
                match s.parameter {
                    ScanParameter::Coupling | ScanParameter::SiteEnergyGap if n < 2 => {
                        errors.push("task.parameter: needs at least two sites".into())
                    }
                    ScanParameter::DissipationRate if s.grid.iter().any(|g| *g <= 0.0) => {
                        errors.push("task.grid: dissipation rates must be positive".into())
                    }
                    ScanParameter::ReorganizationEnergy if s.grid.iter().any(|g| *g < 0.0) => {
                        errors.push("task.grid: reorganization energies must be non-negative".into())
                    }
                    _ => {}
                }
                if s.pair_mode == PairMode::Optimized && n != 2 {
                    errors.push("task.pair_mode: optimized pairs require a two-site model".into());
                }
            }
        }
        errors
    }

    /// Expand `couplings_cm` into the full symmetric matrix.
    pub fn coupling_matrix(&self) -> std::result::Result<DMatrix<f64>, String> {
        let n = self.model.site_energies_cm.len();
        let rows = &self.model.couplings_cm;
        let full = rows.len() == n && rows.iter().all(|r| r.len() == n);
        let upper = (rows.len() == n || rows.len() + 1 == n)
            && rows.iter().enumerate().all(|(i, r)| r.len() == n - 1 - i);
        if full {
            let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            for i in 0..n {
                if m[(i, i)] != 0.0 {
                    return Err(format!("model.couplings_cm: diagonal entry {} is nonzero", i + 1));
                }
                for j in (i + 1)..n {
                    if m[(i, j)] != m[(j, i)] {
                        return Err(format!("model.couplings_cm: not symmetric at ({}, {})", i + 1, j + 1));
                    }
                }
            }
            Ok(m)
        } else if upper {
            let mut m = DMatrix::zeros(n, n);
            for (i, row) in rows.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    let j = i + 1 + k;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            Ok(m)
        } else {
            Err(format!(
                "model.couplings_cm: expected a full {n}x{n} matrix or a strict upper triangle with rows of length {}..1",
                n.saturating_sub(1)
            ))
        }
    }

    pub fn bath_spec(&self) -> Result<BathSpec> {
        let b = &self.bath;
        match (b.tau_c_fs, b.gamma_per_fs) {
            (Some(tau), None) => BathSpec::from_correlation_time(b.lambda_cm, tau, b.temperature_k),
            (None, Some(gamma)) => BathSpec::new(b.lambda_cm, gamma, b.temperature_k),
            _ => Err(Error::Config(vec!["bath: exactly one of tau_c_fs / gamma_per_fs".into()])),
        }
    }

    pub fn open_system(&self) -> Result<OpenSystem> {
        let couplings = self.coupling_matrix().map_err(|e| Error::Config(vec![e]))?;
        OpenSystem::from_parts(self.model.site_energies_cm.clone(), couplings, self.bath_spec()?)
    }

    pub fn integration_settings(&self) -> IntegrationSettings {
        IntegrationSettings {
            max_tier: self.hierarchy.max_tier,
            dt_fs: self.integration.dt_fs,
            t_end_fs: self.integration.t_end_fs,
            sample_every: self.integration.sample_every,
            representation: self.hierarchy.representation,
        }
    }

    /// Replace the correlation time, dropping any γ entry.
    pub fn with_tau_c(mut self, tau_c_fs: f64) -> Self {
        self.bath.tau_c_fs = Some(tau_c_fs);
        self.bath.gamma_per_fs = None;
        if let Task::Pair(p) = &mut self.task {
            p.correlation_times_fs = None;
        }
        if let Task::Scan(s) = &mut self.task {
            s.correlation_times_fs = vec![tau_c_fs];
        }
        self
    }

    pub fn with_lambda(mut self, lambda_cm: f64) -> Self {
        self.bath.lambda_cm = lambda_cm;
        self
    }

    pub fn with_max_tier(mut self, max_tier: u32) -> Self {
        self.hierarchy.max_tier = max_tier;
        self
    }

    /// Correlation times to run for a pair task: the task's list, else the
    /// bath block's single value (None when the bath is given by γ).
    pub fn pair_correlation_times(&self) -> Option<Vec<f64>> {
        match &self.task {
            Task::Pair(PairTask {
                correlation_times_fs: Some(times),
                ..
            }) => Some(times.clone()),
            _ => self.bath.tau_c_fs.map(|t| vec![t]),
        }
    }

    /// Zero-based site pair used by pair-type commands.
    pub fn initial_sites(&self) -> (usize, usize) {
        let sites = match &self.task {
            Task::Pair(p) => p.initial_sites,
            Task::Scan(s) => s.initial_sites,
            Task::Optimize(_) => default_sites(),
        };
        (sites[0] - 1, sites[1] - 1)
    }

    pub fn optimize_task(&self) -> OptimizeTask {
        match &self.task {
            Task::Optimize(o) => o.clone(),
            Task::Scan(s) => s.optimize.clone(),
            Task::Pair(_) => OptimizeTask::default(),
        }
    }
}

fn is_step_multiple(t: f64, dt: f64) -> bool {
    let steps = (t / dt).round();
    (steps * dt - t).abs() <= 1e-9 * t.max(1.0)
}

/// Distinct error messages, for tests and diagnostics.
pub fn error_set(err: &Error) -> BTreeSet<String> {
    match err {
        Error::Config(list) => list.iter().cloned().collect(),
        other => std::iter::once(other.to_string()).collect(),
    }
}
