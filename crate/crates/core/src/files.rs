//! Delimiter-separated output files and the Hamiltonian data file.
//!
//! Every output starts with `#` comment lines naming the code version, the
//! file kind and, when available, the full configuration that produced it,
//! followed by one column-header line and `, `-separated rows. Floats use the
//! shortest representation that parses back to the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::config::{RunConfig, ScanParameter};
use crate::error::{Error, Result};
use crate::measures::{DistanceSeries, SeriesKind};
use crate::propagator::Trajectory;
use crate::scan::{ScanResult, ScanRow};

pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

const SEPARATOR: &str = ", ";

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Comment header shared by all output files.
pub fn header(kind: &str, config: Option<&RunConfig>, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {CODE_VERSION}");
    let _ = writeln!(out, "# kind: {kind}");
    for (key, value) in extra {
        let _ = writeln!(out, "# {key}: {value}");
    }
    if let Some(cfg) = config {
        let _ = writeln!(out, "# config:");
        for line in cfg.to_toml().lines() {
            if line.is_empty() {
                out.push_str("#\n");
            } else {
                let _ = writeln!(out, "#   {line}");
            }
        }
    }
    out
}

/// Comment metadata and data rows of a file, header line checked.
struct Parsed {
    meta: Vec<(String, String)>,
    rows: Vec<Vec<String>>,
}

impl Parsed {
    fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn parse_table(text: &str, expected_columns: Option<&[String]>) -> Result<Parsed> {
    let mut meta = Vec::new();
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut columns = None;
    for line in lines.by_ref() {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once(": ") {
                meta.push((k.to_string(), v.to_string()));
            }
        } else {
            columns = Some(line);
            break;
        }
    }
    let columns: Vec<String> = columns
        .ok_or_else(|| Error::Format("missing column header".into()))?
        .split(',')
        .map(|c| c.trim().to_string())
        .collect();
    if let Some(expected) = expected_columns {
        if columns != expected {
            return Err(Error::Format(format!("expected columns {expected:?}, found {columns:?}")));
        }
    }
    let rows = lines
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(|c| c.trim().to_string()).collect::<Vec<_>>())
        .collect::<Vec<_>>();
    if let Some(bad) = rows.iter().position(|r| r.len() != columns.len()) {
        return Err(Error::Format(format!(
            "data row {} has {} fields, expected {}",
            bad + 1,
            rows[bad].len(),
            columns.len()
        )));
    }
    Ok(Parsed { meta, rows })
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .parse()
        .map_err(|_| Error::Format(format!("not a number: `{field}`")))
}

fn trajectory_columns(n: usize) -> Vec<String> {
    let mut cols = vec!["time_fs".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            cols.push(format!("re_rho_{i}_{j}"));
            cols.push(format!("im_rho_{i}_{j}"));
        }
    }
    cols
}

/// Render the system trajectory: time_fs, then Re/Im of each element
/// row-major.
pub fn format_trajectory(traj: &Trajectory, config: Option<&RunConfig>) -> String {
    let n = traj.metadata.system.n_sites();
    let mut out = header(
        "trajectory",
        config,
        &[
            ("max_tier", traj.metadata.max_tier.to_string()),
            ("dt_fs", num(traj.metadata.dt_fs)),
        ],
    );
    out.push_str(&trajectory_columns(n).join(SEPARATOR));
    out.push('\n');
    for (t, rho) in traj.times.iter().zip(&traj.system_states) {
        let mut fields = vec![num(*t)];
        for i in 0..n {
            for j in 0..n {
                fields.push(num(rho[(i, j)].re));
                fields.push(num(rho[(i, j)].im));
            }
        }
        out.push_str(&fields.join(SEPARATOR));
        out.push('\n');
    }
    out
}

/// Read back the times and system matrices of a trajectory file.
pub fn parse_trajectory(text: &str) -> Result<(Vec<f64>, Vec<DMatrix<Complex64>>)> {
    let parsed = parse_table(text, None)?;
    let width = parsed.rows.first().map_or(1, Vec::len);
    let n = (((width - 1) / 2) as f64).sqrt().round() as usize;
    if 1 + 2 * n * n != width {
        return Err(Error::Format(format!("{width} columns do not form a square density matrix")));
    }
    let mut times = Vec::with_capacity(parsed.rows.len());
    let mut states = Vec::with_capacity(parsed.rows.len());
    for row in &parsed.rows {
        times.push(parse_f64(&row[0])?);
        let vals = row[1..].iter().map(|f| parse_f64(f)).collect::<Result<Vec<_>>>()?;
        states.push(DMatrix::from_fn(n, n, |i, j| {
            let k = 2 * (i * n + j);
            Complex64::new(vals[k], vals[k + 1])
        }));
    }
    Ok((times, states))
}

fn series_kind_name(kind: SeriesKind) -> &'static str {
    match kind {
        SeriesKind::SystemTraceDistance => "trace_distance",
        SeriesKind::AdoDistance => "ado_distance",
    }
}

/// Render a distance series as time_fs, D.
pub fn format_series(series: &DistanceSeries, config: Option<&RunConfig>) -> String {
    let mut out = header(series_kind_name(series.kind), config, &[]);
    out.push_str("time_fs, D\n");
    for (t, v) in series.times.iter().zip(&series.values) {
        let _ = writeln!(out, "{}{SEPARATOR}{}", num(*t), num(*v));
    }
    out
}

pub fn parse_series(text: &str) -> Result<DistanceSeries> {
    let cols = ["time_fs".to_string(), "D".to_string()];
    let parsed = parse_table(text, Some(&cols))?;
    let kind = match parsed.meta("kind") {
        Some("trace_distance") => SeriesKind::SystemTraceDistance,
        Some("ado_distance") => SeriesKind::AdoDistance,
        other => return Err(Error::Format(format!("not a distance series (kind {other:?})"))),
    };
    let mut times = Vec::with_capacity(parsed.rows.len());
    let mut values = Vec::with_capacity(parsed.rows.len());
    for row in &parsed.rows {
        times.push(parse_f64(&row[0])?);
        values.push(parse_f64(&row[1])?);
    }
    Ok(DistanceSeries { times, values, kind })
}

const SCAN_COLUMNS: [&str; 6] = ["parameter", "tau_c_fs", "nm_ity", "valid", "max_tier", "pair_id"];

/// Render a scan as parameter, tau_c_fs, nm_ity, valid, max_tier, pair_id.
/// Failed points carry `NaN` and the pair id `failed`.
pub fn format_scan(result: &ScanResult, config: Option<&RunConfig>) -> String {
    let mut out = header(
        "scan",
        config,
        &[
            ("parameter", result.parameter.name().to_string()),
            ("parameter_unit", result.parameter.unit().to_string()),
        ],
    );
    out.push_str(&SCAN_COLUMNS.join(SEPARATOR));
    out.push('\n');
    for row in &result.rows {
        let pair = if row.error.is_some() { "failed" } else { row.pair_id.as_str() };
        let _ = writeln!(
            out,
            "{}",
            [
                num(row.parameter),
                num(row.tau_c_fs),
                num(row.nm_ity),
                row.valid.to_string(),
                row.max_tier.to_string(),
                pair.to_string(),
            ]
            .join(SEPARATOR)
        );
    }
    out
}

pub fn parse_scan(text: &str) -> Result<ScanResult> {
    let cols: Vec<String> = SCAN_COLUMNS.iter().map(|s| s.to_string()).collect();
    let parsed = parse_table(text, Some(&cols))?;
    let parameter = match parsed.meta("parameter") {
        Some("coupling") => ScanParameter::Coupling,
        Some("site_energy_gap") => ScanParameter::SiteEnergyGap,
        Some("dissipation_rate") => ScanParameter::DissipationRate,
        Some("reorganization_energy") => ScanParameter::ReorganizationEnergy,
        other => return Err(Error::Format(format!("unknown scan parameter {other:?}"))),
    };
    let rows = parsed
        .rows
        .iter()
        .map(|r| {
            let valid = match r[3].as_str() {
                "true" => true,
                "false" => false,
                other => return Err(Error::Format(format!("valid must be true/false, got `{other}`"))),
            };
            let failed = r[5] == "failed";
            Ok(ScanRow {
                parameter: parse_f64(&r[0])?,
                tau_c_fs: parse_f64(&r[1])?,
                nm_ity: parse_f64(&r[2])?,
                valid,
                max_tier: r[4]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad max_tier `{}`", r[4])))?,
                pair_id: r[5].clone(),
                high_temperature: true,
                error: failed.then(|| "failed".to_string()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScanResult {
        parameter,
        rows,
        warnings: Vec::new(),
    })
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, config: Option<&RunConfig>) -> Result<()> {
    Ok(fs::write(path, format_trajectory(traj, config))?)
}

pub fn write_series(path: &Path, series: &DistanceSeries, config: Option<&RunConfig>) -> Result<()> {
    Ok(fs::write(path, format_series(series, config))?)
}

pub fn write_scan(path: &Path, result: &ScanResult, config: Option<&RunConfig>) -> Result<()> {
    Ok(fs::write(path, format_scan(result, config))?)
}

pub fn read_series(path: &Path) -> Result<DistanceSeries> {
    parse_series(&fs::read_to_string(path)?)
}

pub fn read_scan(path: &Path) -> Result<ScanResult> {
    parse_scan(&fs::read_to_string(path)?)
}

/// Write the full normalized hierarchy next to a trajectory file, one
/// sidecar per window of `window` samples: `<stem>.ado.<k>.csv`.
///
/// Columns: time_fs, ordinal, index (site occupations joined by `|`), then
/// Re/Im of every element row-major. Returns the written paths.
pub fn write_ado_sidecars(base: &Path, traj: &Trajectory, window: usize) -> Result<Vec<PathBuf>> {
    let snapshots = traj.ado_snapshots.as_ref().ok_or(Error::MissingSnapshots)?;
    let window = window.max(1);
    let n = traj.metadata.system.n_sites();
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trajectory".into());
    let dir = base.parent().unwrap_or_else(|| Path::new(""));

    let mut columns = vec!["time_fs".to_string(), "ordinal".into(), "index".into()];
    columns.extend(trajectory_columns(n).into_iter().skip(1));

    let mut paths = Vec::new();
    for (k, chunk) in traj.times.iter().zip(snapshots).collect::<Vec<_>>().chunks(window).enumerate() {
        let mut out = header(
            "ado_snapshots",
            None,
            &[("representation", "normalized".into()), ("max_tier", traj.metadata.max_tier.to_string())],
        );
        out.push_str(&columns.join(SEPARATOR));
        out.push('\n');
        for (t, state) in chunk {
            for ordinal in 0..state.len() {
                let idx = state.table().index(ordinal);
                let label = idx.entries().iter().map(u32::to_string).collect::<Vec<_>>().join("|");
                let mut fields = vec![num(**t), ordinal.to_string(), label];
                for z in state.block(ordinal) {
                    fields.push(num(z.re));
                    fields.push(num(z.im));
                }
                out.push_str(&fields.join(SEPARATOR));
                out.push('\n');
            }
        }
        let path = dir.join(format!("{stem}.ado.{k}.csv"));
        fs::write(&path, out)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Site energies and couplings read from a Hamiltonian data file.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianData {
    pub site_energies_cm: Vec<f64>,
    pub couplings_cm: DMatrix<f64>,
    pub provenance: Vec<String>,
}

/// Parse a symmetric N×N matrix in cm⁻¹ (comma-separated rows, diagonal =
/// site energies). At least one `# source:` comment line is required.
pub fn parse_hamiltonian(text: &str) -> Result<HamiltonianData> {
    let mut provenance = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(src) = comment.trim().strip_prefix("source:") {
                provenance.push(src.trim().to_string());
            }
            continue;
        }
        rows.push(line.split(',').map(|f| parse_f64(f.trim())).collect::<Result<Vec<_>>>()?);
    }
    if provenance.is_empty() {
        return Err(Error::Format("Hamiltonian file lacks a `# source:` provenance comment".into()));
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Format(format!("expected a square matrix, found {n} rows of varying length")));
    }
    let mut couplings = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if rows[i][j] != rows[j][i] {
                return Err(Error::Format(format!("matrix is not symmetric at ({}, {})", i + 1, j + 1)));
            }
            if i != j {
                couplings[(i, j)] = rows[i][j];
            }
        }
    }
    Ok(HamiltonianData {
        site_energies_cm: (0..n).map(|i| rows[i][i]).collect(),
        couplings_cm: couplings,
        provenance,
    })
}
