//! Trace-distance measures of exciton-bath information flow.
//!
//! * D(ρ1, ρ2) = ½ Tr|ρ1 − ρ2| between two reduced states.
//! * NM-ity: the total increase of D over time, maximized over initial pairs.
//!   On a sampled grid the integral of the positive slope is exactly the sum
//!   of positive increments, so the slope is never differentiated explicitly.
//! * D_ADO: Σ_{n≠0} ½ Tr|σ̃1^n − σ̃2^n| over normalized auxiliary operators,
//!   the information currently held by the bath memory.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hierarchy::{validity_flag, CharacteristicFrequency};
use crate::linalg::{hermitian_deviation, hermitian_trace_norm, trace_norm};
use crate::propagator::{
    site_projector, validate_density_matrix, HierarchyState, IntegrationSettings, Propagator, Representation,
    Trajectory,
};
use crate::units::{c0, OpenSystem};

const HERMITIAN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    SystemTraceDistance,
    AdoDistance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub kind: SeriesKind,
}

impl DistanceSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value at the sample closest to `time_fs`.
    pub fn at(&self, time_fs: f64) -> Option<f64> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - time_fs).abs().total_cmp(&(b.1 - time_fs).abs()))
            .map(|(k, _)| self.values[k])
    }
}

/// ½ Tr|a − b| for Hermitian a, b.
pub fn trace_distance(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<f64> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "cannot compare {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    for m in [a, b] {
        let dev = hermitian_deviation(m);
        if dev > HERMITIAN_TOLERANCE {
            return Err(Error::NotHermitian(dev));
        }
    }
    Ok(0.5 * hermitian_trace_norm(&(a - b)))
}

/// ½ Tr|Δ| for an operator that should be Hermitian; falls back to singular
/// values when round-off has broken Hermiticity beyond tolerance.
fn half_trace_norm(delta: &DMatrix<Complex64>) -> f64 {
    let scale = delta.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if hermitian_deviation(delta) > HERMITIAN_TOLERANCE * scale {
        0.5 * trace_norm(delta)
    } else {
        0.5 * hermitian_trace_norm(delta)
    }
}

fn check_grids(t1: &Trajectory, t2: &Trajectory) -> Result<()> {
    if t1.times != t2.times {
        return Err(Error::GridMismatch(format!(
            "{} vs {} samples or differing sample times",
            t1.times.len(),
            t2.times.len()
        )));
    }
    if t1.metadata.max_tier != t2.metadata.max_tier
        || t1.metadata.system != t2.metadata.system
        || t1.metadata.dt_fs != t2.metadata.dt_fs
    {
        return Err(Error::GridMismatch("trajectories were produced with different settings".into()));
    }
    Ok(())
}

/// Pointwise trace distance between the system states of two trajectories.
pub fn distance_series(t1: &Trajectory, t2: &Trajectory) -> Result<DistanceSeries> {
    check_grids(t1, t2)?;
    let values = t1
        .system_states
        .iter()
        .zip(&t2.system_states)
        .map(|(a, b)| trace_distance(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceSeries {
        times: t1.times.clone(),
        values,
        kind: SeriesKind::SystemTraceDistance,
    })
}

/// Σ_k max(0, D_{k+1} − D_k).
pub fn nm_ity(series: &DistanceSeries) -> f64 {
    series.values.windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum()
}

/// Forward-difference slope per sampling interval, for diagnostics.
pub fn slopes(series: &DistanceSeries) -> Vec<f64> {
    series
        .values
        .windows(2)
        .zip(series.times.windows(2))
        .map(|(v, t)| (v[1] - v[0]) / (t[1] - t[0]))
        .collect()
}

fn ado_distance(a: &HierarchyState, b: &HierarchyState) -> Result<f64> {
    if a.representation() != Representation::Normalized || b.representation() != Representation::Normalized {
        return Err(Error::RepresentationMismatch {
            expected: Representation::Normalized,
            found: if a.representation() != Representation::Normalized {
                a.representation()
            } else {
                b.representation()
            },
        });
    }
    if a.len() != b.len() || a.n_sites() != b.n_sites() {
        return Err(Error::DimensionMismatch("snapshots belong to different hierarchies".into()));
    }
    Ok((1..a.len()).map(|k| half_trace_norm(&(a.matrix(k) - b.matrix(k)))).sum())
}

/// D_ADO^tot at every sample of two trajectories carrying snapshots.
pub fn ado_distance_series(t1: &Trajectory, t2: &Trajectory) -> Result<DistanceSeries> {
    check_grids(t1, t2)?;
    let (s1, s2) = match (&t1.ado_snapshots, &t2.ado_snapshots) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::MissingSnapshots),
    };
    let values = s1
        .iter()
        .zip(s2)
        .map(|(a, b)| ado_distance(a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(DistanceSeries {
        times: t1.times.clone(),
        values,
        kind: SeriesKind::AdoDistance,
    })
}

/// Trace-distance series of a pair, with the ADO series when requested.
#[derive(Debug, Clone)]
pub struct PairSeries {
    pub distance: DistanceSeries,
    pub ado_distance: Option<DistanceSeries>,
}

/// Propagate the difference ρ1 − ρ2 once instead of two trajectories.
///
/// The hierarchy is linear, so every operator of the difference state equals
/// the difference of the two runs' operators.
pub fn pair_series(
    propagator: &Propagator,
    rho1: &DMatrix<Complex64>,
    rho2: &DMatrix<Complex64>,
    with_ado: bool,
) -> Result<PairSeries> {
    let n = propagator.system().n_sites();
    validate_density_matrix(rho1, n)?;
    validate_density_matrix(rho2, n)?;
    let delta = rho1 - rho2;

    let table = propagator.table();
    // σ̃^n = σ^n / scale_n; unit scales when already normalized
    let scales: Vec<f64> = match propagator.settings().representation {
        Representation::Normalized => vec![1.0; table.len()],
        Representation::Regular => {
            let c0_abs = c0(propagator.system().bath()).norm();
            (0..table.len())
                .map(|k| {
                    let idx = table.index(k);
                    (idx.factorial_product() * c0_abs.powi(idx.tier() as i32)).sqrt()
                })
                .collect()
        }
    };

    let capacity = propagator.sample_count();
    let mut times = Vec::with_capacity(capacity);
    let mut values = Vec::with_capacity(capacity);
    let mut ado_values = Vec::with_capacity(if with_ado { capacity } else { 0 });
    propagator.run_observed(&delta, |_, t, state| {
        times.push(t);
        values.push(half_trace_norm(&state.system()));
        if with_ado {
            let mut total = 0.0;
            for (k, &scale) in scales.iter().enumerate().skip(1) {
                if scale == 0.0 {
                    continue;
                }
                total += half_trace_norm(&state.matrix(k)) / scale;
            }
            ado_values.push(total);
        }
        Ok(())
    })?;

    let ado_distance = with_ado.then(|| DistanceSeries {
        times: times.clone(),
        values: ado_values,
        kind: SeriesKind::AdoDistance,
    });
    Ok(PairSeries {
        distance: DistanceSeries {
            times,
            values,
            kind: SeriesKind::SystemTraceDistance,
        },
        ado_distance,
    })
}

/// Projector onto cos(θ/2)|1⟩ + e^{iφ} sin(θ/2)|2⟩.
pub fn bloch_state(theta: f64, phi: f64) -> DMatrix<Complex64> {
    let a = Complex64::new((theta / 2.0).cos(), 0.0);
    let b = Complex64::from_polar((theta / 2.0).sin(), phi);
    DMatrix::from_row_slice(2, 2, &[a * a.conj(), a * b.conj(), b * a.conj(), b * b.conj()])
}

/// A labelled initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateState {
    pub id: String,
    pub rho: DMatrix<Complex64>,
}

/// `count` pure qubit states on a Fibonacci spiral whose first and last
/// points are the poles |1⟩⟨1| and |2⟩⟨2|.
pub fn bloch_candidates(count: usize) -> Vec<CandidateState> {
    let golden_angle = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..count)
        .map(|k| {
            let z = if count == 1 {
                1.0
            } else {
                1.0 - 2.0 * k as f64 / (count - 1) as f64
            };
            let theta = z.clamp(-1.0, 1.0).acos();
            let phi = (k as f64 * golden_angle).rem_euclid(2.0 * std::f64::consts::PI);
            CandidateState {
                id: format!("bloch:{k}"),
                rho: bloch_state(theta, phi),
            }
        })
        .collect()
}

/// `|m⟩⟨m|` labelled `site:m` with a one-based site number.
pub fn site_candidate(n_sites: usize, site: usize) -> CandidateState {
    CandidateState {
        id: format!("site:{}", site + 1),
        rho: site_projector(n_sites, site),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairValue {
    pub first: String,
    pub second: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NMResult {
    pub value: f64,
    pub pair: (String, String),
    pub per_pair: Option<Vec<PairValue>>,
    pub max_tier_used: u32,
    pub validity: bool,
}

/// Depth-validity of a run, evaluated with the given truncation rule.
fn run_validity(system: &OpenSystem, max_tier: u32, safety_factor: f64, frequency: CharacteristicFrequency) -> bool {
    validity_flag(max_tier, system.model(), system.bath(), safety_factor, frequency)
}

/// NM-ity of a single, fixed pair of initial states.
pub fn fixed_pair_nm(
    system: &OpenSystem,
    settings: IntegrationSettings,
    first: &CandidateState,
    second: &CandidateState,
    safety_factor: f64,
    frequency: CharacteristicFrequency,
) -> Result<NMResult> {
    let propagator = Propagator::new(system, settings)?;
    let series = pair_series(&propagator, &first.rho, &second.rho, false)?;
    Ok(NMResult {
        value: nm_ity(&series.distance),
        pair: (first.id.clone(), second.id.clone()),
        per_pair: None,
        max_tier_used: settings.max_tier,
        validity: run_validity(system, settings.max_tier, safety_factor, frequency),
    })
}

/// Maximize NM-ity over all pairs drawn from `n_states` Bloch-sphere states.
///
/// Each candidate is propagated once; pair distances come from the stored
/// system trajectories. Only two-site systems are supported.
pub fn optimize_nm(
    system: &OpenSystem,
    settings: IntegrationSettings,
    n_states: usize,
    safety_factor: f64,
    frequency: CharacteristicFrequency,
) -> Result<NMResult> {
    if system.n_sites() != 2 {
        return Err(Error::Unsupported(format!(
            "initial-state optimization is defined for two-site systems, got {} sites",
            system.n_sites()
        )));
    }
    if n_states < 2 {
        return Err(Error::Unsupported("optimization needs at least two candidate states".into()));
    }
    optimize_over(system, settings, &bloch_candidates(n_states), safety_factor, frequency)
}

/// Maximize NM-ity over every pair of the supplied candidates.
pub fn optimize_over(
    system: &OpenSystem,
    settings: IntegrationSettings,
    candidates: &[CandidateState],
    safety_factor: f64,
    frequency: CharacteristicFrequency,
) -> Result<NMResult> {
    if candidates.len() < 2 {
        return Err(Error::Unsupported("optimization needs at least two candidate states".into()));
    }
    let propagator = Propagator::new(system, settings)?;
    let trajectories = candidates
        .par_iter()
        .map(|c| propagator.run(&c.rho, false))
        .collect::<Result<Vec<_>>>()?;

    let pairs: Vec<(usize, usize)> = (0..candidates.len())
        .flat_map(|i| ((i + 1)..candidates.len()).map(move |j| (i, j)))
        .collect();
    let per_pair = pairs
        .par_iter()
        .map(|&(i, j)| {
            let series = distance_series(&trajectories[i], &trajectories[j])?;
            Ok(PairValue {
                first: candidates[i].id.clone(),
                second: candidates[j].id.clone(),
                value: nm_ity(&series),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // first maximum in pair order, so ties resolve deterministically
    let best = per_pair
        .iter()
        .fold(None::<&PairValue>, |best, p| match best {
            Some(b) if b.value >= p.value => Some(b),
            _ => Some(p),
        })
        .expect("at least one pair");

    Ok(NMResult {
        value: best.value,
        pair: (best.first.clone(), best.second.clone()),
        max_tier_used: settings.max_tier,
        validity: run_validity(system, settings.max_tier, safety_factor, frequency),
        per_pair: Some(per_pair),
    })
}
