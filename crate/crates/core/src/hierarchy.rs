//! Multi-index bookkeeping for the auxiliary density operators.
//!
//! Every operator in the hierarchy is labelled by **n** = (n_1, ..., n_N)
//! with n_m ≥ 0. The table enumerates all indices up to a maximum tier
//! Σ n_m ≤ L in tier-major, lexicographic order, so ordinal 0 is always the
//! system density matrix and truncating at a lower tier is a prefix.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{BathSpec, ExcitonModel};

/// Default upper bound on the number of operators in a table.
pub const DEFAULT_OPERATOR_CAP: usize = 1_000_000;

/// Default ratio between hierarchy depth and ω_e/γ.
pub const DEFAULT_SAFETY_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<u32>,
}

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        Self { entries }
    }

    pub fn zero(n_sites: usize) -> Self {
        Self { entries: vec![0; n_sites] }
    }

    pub fn entries(&self) -> &[u32] {
        &self.entries
    }

    pub fn tier(&self) -> u32 {
        self.entries.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&n| n == 0)
    }

    /// n! product over the components.
    pub fn factorial_product(&self) -> f64 {
        self.entries
            .iter()
            .map(|&n| (1..=n).map(f64::from).product::<f64>())
            .product()
    }
}

#[derive(Debug, Clone)]
pub struct HierarchyIndexTable {
    n_sites: usize,
    max_tier: u32,
    indices: Vec<MultiIndex>,
    raise: Vec<Option<usize>>,
    lower: Vec<Option<usize>>,
}

/// C(n_sites + max_tier, n_sites), saturating at u128::MAX.
pub fn operator_count(n_sites: usize, max_tier: u32) -> u128 {
    // C(n + L, L) built up incrementally; each partial product is itself a
    // binomial coefficient, so the division is exact.
    let mut count: u128 = 1;
    for k in 1..=u128::from(max_tier) {
        count = match count.checked_mul(n_sites as u128 + k) {
            Some(c) => c / k,
            None => return u128::MAX,
        };
    }
    count
}

/// Enumerate every multi-index with tier ≤ `max_tier`.
pub fn enumerate_indices(n_sites: usize, max_tier: u32) -> Result<HierarchyIndexTable> {
    enumerate_indices_capped(n_sites, max_tier, DEFAULT_OPERATOR_CAP)
}

pub fn enumerate_indices_capped(n_sites: usize, max_tier: u32, cap: usize) -> Result<HierarchyIndexTable> {
    if n_sites == 0 {
        return Err(Error::InvalidModel("hierarchy needs at least one site".into()));
    }
    let count = operator_count(n_sites, max_tier);
    if count > cap as u128 {
        return Err(Error::HierarchyTooLarge { count, cap });
    }

    let mut indices = Vec::with_capacity(count as usize);
    let mut scratch = vec![0u32; n_sites];
    for tier in 0..=max_tier {
        compositions(tier, 0, &mut scratch, &mut indices);
    }
    debug_assert_eq!(indices.len() as u128, count);

    let lookup: HashMap<&[u32], usize> = indices
        .iter()
        .enumerate()
        .map(|(k, idx)| (idx.entries(), k))
        .collect();

    let mut raise = vec![None; indices.len() * n_sites];
    let mut lower = vec![None; indices.len() * n_sites];
    let mut probe = vec![0u32; n_sites];
    for (k, idx) in indices.iter().enumerate() {
        for m in 0..n_sites {
            probe.copy_from_slice(idx.entries());
            if idx.tier() < max_tier {
                probe[m] += 1;
                raise[k * n_sites + m] = lookup.get(probe.as_slice()).copied();
                probe[m] -= 1;
            }
            if probe[m] > 0 {
                probe[m] -= 1;
                lower[k * n_sites + m] = lookup.get(probe.as_slice()).copied();
            }
        }
    }

    Ok(HierarchyIndexTable {
        n_sites,
        max_tier,
        indices,
        raise,
        lower,
    })
}

/// Push all compositions of `remaining` into `slot..` in ascending
/// lexicographic order.
fn compositions(remaining: u32, slot: usize, scratch: &mut [u32], out: &mut Vec<MultiIndex>) {
    if slot + 1 == scratch.len() {
        scratch[slot] = remaining;
        out.push(MultiIndex::new(scratch.to_vec()));
        return;
    }
    for first in 0..=remaining {
        scratch[slot] = first;
        compositions(remaining - first, slot + 1, scratch, out);
    }
}

impl HierarchyIndexTable {
    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn max_tier(&self) -> u32 {
        self.max_tier
    }

    /// Number of operators including the system slot.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of auxiliary operators, i.e. excluding **0**.
    pub fn ado_count(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn index(&self, ordinal: usize) -> &MultiIndex {
        &self.indices[ordinal]
    }

    /// Ordinal of **n** + e_m, absent above the truncation tier.
    pub fn raise(&self, ordinal: usize, site: usize) -> Option<usize> {
        self.raise[ordinal * self.n_sites + site]
    }

    /// Ordinal of **n** − e_m, absent when n_m = 0.
    pub fn lower(&self, ordinal: usize, site: usize) -> Option<usize> {
        self.lower[ordinal * self.n_sites + site]
    }

    pub fn ordinal_of(&self, index: &MultiIndex) -> Option<usize> {
        self.indices.iter().position(|i| i == index)
    }
}

/// How ω_e, the characteristic frequency of the system Liouvillian, is
/// extracted from H_e.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CharacteristicFrequency {
    /// Largest minus smallest eigenvalue of H_e.
    #[default]
    EigenvalueSpread,
    /// Largest |J_mn|.
    MaxCoupling,
}

impl CharacteristicFrequency {
    /// ω_e in rad/fs.
    pub fn evaluate(self, model: &ExcitonModel) -> f64 {
        match self {
            CharacteristicFrequency::EigenvalueSpread => {
                let eig = model.hamiltonian_real().symmetric_eigenvalues();
                eig.max() - eig.min()
            }
            CharacteristicFrequency::MaxCoupling => {
                let h = model.hamiltonian_real();
                let n = h.nrows();
                let mut best = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            best = best.max(h[(i, j)].abs());
                        }
                    }
                }
                best
            }
        }
    }
}

/// Hierarchy depth L = ceil(safety_factor · ω_e / γ).
pub fn required_depth(
    model: &ExcitonModel,
    bath: &BathSpec,
    safety_factor: f64,
    frequency: CharacteristicFrequency,
) -> u32 {
    depth_for_ratio(safety_factor * frequency.evaluate(model) / bath.dissipation_rate())
}

fn depth_for_ratio(ratio: f64) -> u32 {
    // absorb round-off so that an exact integer ratio is not bumped up
    let depth = (ratio - 1e-9).ceil();
    if depth <= 0.0 {
        0
    } else {
        depth.min(f64::from(u32::MAX)) as u32
    }
}

/// True when `max_tier_used` satisfies the truncation criterion.
pub fn validity_flag(
    max_tier_used: u32,
    model: &ExcitonModel,
    bath: &BathSpec,
    safety_factor: f64,
    frequency: CharacteristicFrequency,
) -> bool {
    max_tier_used >= required_depth(model, bath, safety_factor, frequency)
}
