use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use exciton_heom::config::{parse_config, RunConfig, Task};
use exciton_heom::files::{format_scan, format_series, format_trajectory, header, write_ado_sidecars};
use exciton_heom::measures::{fixed_pair_nm, optimize_nm, pair_series, site_candidate, NMResult};
use exciton_heom::propagator::{site_projector, Propagator};
use exciton_heom::scan::{config_validity, dimer_preset, fmo_preset, fmo_preset_from_file, run_scan, ScanSpec};
use exciton_heom::units::{high_temperature_check, OpenSystem};
use exciton_heom::{Error, Result};

/// Hierarchical equations of motion for exciton transfer and trace-distance
/// non-Markovianity.
#[derive(Parser)]
#[command(name = "exciton-heom", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the first initial site and write the system trajectory.
    Propagate {
        #[command(flatten)]
        common: Common,
        /// One-based site to start from (default: first site of the task's pair).
        #[arg(long)]
        site: Option<usize>,
        /// Also write the full hierarchy to sidecar files next to --out.
        #[arg(long, requires = "out")]
        with_ados: bool,
        /// Samples per sidecar file.
        #[arg(long, default_value_t = 100)]
        ado_window: usize,
    },
    /// Trace distance D(t) between the two initial sites.
    Distance {
        #[command(flatten)]
        common: Common,
    },
    /// Summed trace distance over all auxiliary operators.
    AdoDistance {
        #[command(flatten)]
        common: Common,
    },
    /// Non-Markovianity of the fixed site pair.
    Nm {
        #[command(flatten)]
        common: Common,
    },
    /// Non-Markovianity maximized over pairs of Bloch-sphere states.
    NmOptimize {
        #[command(flatten)]
        common: Common,
        /// Number of candidate states (default: from the config).
        #[arg(long)]
        n_states: Option<usize>,
    },
    /// Run the parameter scan described by the config's task block.
    Scan {
        #[command(flatten)]
        common: Common,
    },
    /// Print a built-in configuration.
    Preset {
        name: PresetName,
        /// FMO Hamiltonian data file replacing the bundled one.
        #[arg(long)]
        hamiltonian: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetName {
    Dimer,
    Fmo,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Correlation time in fs, replacing the config's list.
    #[arg(long)]
    tau_c: Option<f64>,
    /// Reorganization energy in cm^-1.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_tier: Option<u32>,
    /// Output file; several correlation times get a `_tau<T>fs` suffix.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let text = fs::read_to_string(&self.config)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", self.config.display())))?;
        let mut cfg = parse_config(&text)?;
        if let Some(tau) = self.tau_c {
            cfg = cfg.with_tau_c(tau);
        }
        if let Some(lambda) = self.lambda {
            cfg = cfg.with_lambda(lambda);
        }
        if let Some(tier) = self.max_tier {
            cfg = cfg.with_max_tier(tier);
        }
        let problems = cfg.validate();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// One configuration per correlation time to run.
    fn runs(&self) -> Result<Vec<(Option<f64>, RunConfig)>> {
        let cfg = self.load()?;
        Ok(match cfg.pair_correlation_times() {
            Some(times) if !times.is_empty() => times
                .into_iter()
                .map(|tau| (Some(tau), cfg.clone().with_tau_c(tau)))
                .collect(),
            _ => vec![(None, cfg)],
        })
    }
}

fn warn(message: &str) {
    eprintln!("warning: {message}");
}

/// Build the system and report regime and depth warnings.
fn checked_system(cfg: &RunConfig, max_tier: u32) -> Result<OpenSystem> {
    let system = cfg.open_system()?;
    let check = high_temperature_check(system.bath());
    if !check.satisfied {
        if !cfg.bath.allow_outside_high_temperature {
            return Err(Error::InvalidBath(format!(
                "outside the high-temperature regime (ħγβ = {:.3}); set bath.allow_outside_high_temperature to proceed",
                check.ratio
            )));
        }
        warn(&format!("outside the high-temperature regime (ħγβ = {:.3})", check.ratio));
    }
    let mut depth_cfg = cfg.clone();
    depth_cfg.hierarchy.max_tier = max_tier;
    if !config_validity(&depth_cfg, &system) {
        warn(&format!(
            "max_tier = {max_tier} is below the required depth at tau_c = {} fs; results may be inaccurate",
            system.bath().correlation_time_fs()
        ));
    }
    Ok(system)
}

fn suffixed(path: &Path, tau: f64) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_tau{tau}fs.{}", ext.to_string_lossy()),
        None => format!("{stem}_tau{tau}fs"),
    };
    path.with_file_name(name)
}

/// Write each (τ_c, text) output to --out (suffixed when several) or stdout.
fn emit(out: Option<&Path>, outputs: &[(Option<f64>, String, PathBuf)]) -> Result<()> {
    match out {
        Some(_) => {
            for (_, text, path) in outputs {
                fs::write(path, text)?;
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            for (_, text, _) in outputs {
                stdout.write_all(text.as_bytes())?;
            }
        }
    }
    Ok(())
}

fn output_path(out: Option<&Path>, tau: Option<f64>, several: bool) -> PathBuf {
    match (out, tau) {
        (Some(p), Some(t)) if several => suffixed(p, t),
        (Some(p), _) => p.to_path_buf(),
        (None, _) => PathBuf::new(),
    }
}

fn nm_table(rows: &[(f64, NMResult)], cfg: &RunConfig) -> String {
    let mut out = header("nm_ity", Some(cfg), &[]);
    out.push_str("tau_c_fs, nm_ity, valid, max_tier, pair_id\n");
    for (tau, r) in rows {
        let _ = writeln!(
            out,
            "{tau:?}, {:?}, {}, {}, {}/{}",
            r.value, r.validity, r.max_tier_used, r.pair.0, r.pair.1
        );
    }
    out
}

fn pair_command(common: &Common, ado: bool) -> Result<()> {
    let runs = common.runs()?;
    let several = runs.len() > 1;
    let mut outputs = Vec::new();
    for (tau, cfg) in &runs {
        let system = checked_system(cfg, cfg.hierarchy.max_tier)?;
        let (a, b) = cfg.initial_sites();
        let propagator = Propagator::new(&system, cfg.integration_settings())?;
        let n = system.n_sites();
        let series = pair_series(&propagator, &site_projector(n, a), &site_projector(n, b), ado)?;
        let series = if ado { series.ado_distance.expect("requested") } else { series.distance };
        outputs.push((
            *tau,
            format_series(&series, Some(cfg)),
            output_path(common.out.as_deref(), *tau, several),
        ));
    }
    emit(common.out.as_deref(), &outputs)
}

fn propagate_command(common: &Common, site: Option<usize>, with_ados: bool, window: usize) -> Result<()> {
    let runs = common.runs()?;
    let several = runs.len() > 1;
    let mut outputs = Vec::new();
    for (tau, cfg) in &runs {
        let system = checked_system(cfg, cfg.hierarchy.max_tier)?;
        let n = system.n_sites();
        let start = match site {
            Some(s) if s == 0 || s > n => {
                return Err(Error::Config(vec![format!("--site must be in 1..={n}, got {s}")]))
            }
            Some(s) => s - 1,
            None => cfg.initial_sites().0,
        };
        let traj = Propagator::new(&system, cfg.integration_settings())?.run(&site_projector(n, start), with_ados)?;
        let path = output_path(common.out.as_deref(), *tau, several);
        if with_ados {
            for p in write_ado_sidecars(&path, &traj, window)? {
                eprintln!("wrote {}", p.display());
            }
        }
        outputs.push((*tau, format_trajectory(&traj, Some(cfg)), path));
    }
    emit(common.out.as_deref(), &outputs)
}

fn nm_command(common: &Common) -> Result<()> {
    let runs = common.runs()?;
    let mut rows = Vec::new();
    for (_, cfg) in &runs {
        let system = checked_system(cfg, cfg.hierarchy.max_tier)?;
        let (a, b) = cfg.initial_sites();
        let n = system.n_sites();
        let h = &cfg.hierarchy;
        let r = fixed_pair_nm(
            &system,
            cfg.integration_settings(),
            &site_candidate(n, a),
            &site_candidate(n, b),
            h.safety_factor,
            h.characteristic_frequency,
        )?;
        rows.push((system.bath().correlation_time_fs(), r));
    }
    let text = nm_table(&rows, &common.load()?);
    emit(common.out.as_deref(), &[(None, text, common.out.clone().unwrap_or_default())])
}

fn optimize_command(common: &Common, n_states: Option<usize>) -> Result<()> {
    let runs = common.runs()?;
    let mut rows = Vec::new();
    for (_, cfg) in &runs {
        let mut opt = cfg.optimize_task();
        if let Some(tier) = common.max_tier {
            opt.max_tier = tier;
        }
        let n_states = n_states.unwrap_or(opt.n_states);
        let system = checked_system(cfg, opt.max_tier)?;
        let mut settings = cfg.integration_settings();
        settings.max_tier = opt.max_tier;
        settings.t_end_fs = opt.t_end_fs;
        let h = &cfg.hierarchy;
        let r = optimize_nm(&system, settings, n_states, h.safety_factor, h.characteristic_frequency)?;
        rows.push((system.bath().correlation_time_fs(), r));
    }
    let text = nm_table(&rows, &common.load()?);
    emit(common.out.as_deref(), &[(None, text, common.out.clone().unwrap_or_default())])
}

fn scan_command(common: &Common) -> Result<()> {
    let cfg = common.load()?;
    if !matches!(cfg.task, Task::Scan(_)) {
        return Err(Error::Config(vec!["task.kind: the scan command needs kind = \"scan\"".into()]));
    }
    let result = run_scan(&ScanSpec::from_config(&cfg)?)?;
    for w in &result.warnings {
        warn(w);
    }
    let text = format_scan(&result, Some(&cfg));
    emit(common.out.as_deref(), &[(None, text, common.out.clone().unwrap_or_default())])
}

fn preset_command(name: PresetName, hamiltonian: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = match (name, hamiltonian) {
        (PresetName::Dimer, None) => dimer_preset(),
        (PresetName::Dimer, Some(_)) => {
            return Err(Error::Config(vec!["--hamiltonian applies to the fmo preset only".into()]))
        }
        (PresetName::Fmo, None) => fmo_preset(),
        (PresetName::Fmo, Some(path)) => fmo_preset_from_file(path)?,
    };
    let text = cfg.to_toml();
    emit(out, &[(None, text, out.map(Path::to_path_buf).unwrap_or_default())])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Propagate {
            common,
            site,
            with_ados,
            ado_window,
        } => propagate_command(&common, site, with_ados, ado_window),
        Command::Distance { common } => pair_command(&common, false),
        Command::AdoDistance { common } => pair_command(&common, true),
        Command::Nm { common } => nm_command(&common),
        Command::NmOptimize { common, n_states } => optimize_command(&common, n_states),
        Command::Scan { common } => scan_command(&common),
        Command::Preset { name, hamiltonian, out } => preset_command(name, hamiltonian.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
