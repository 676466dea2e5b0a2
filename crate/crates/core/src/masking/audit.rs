//! Soundness and nesting audit of the lookahead masks against the exact
//! oracles, over states reached by random construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{exact_mask, local_mask, pi_mask, unvisited_mask, Mask};
use crate::env::ConstructionState;
use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::seeding::derive_seed;

#[derive(Debug, Clone)]
pub struct AuditConfig {
    /// Lookahead depths to check, each in `0..=2`.
    pub depths: Vec<usize>,
    /// Stop once at least this many states have been checked.
    pub min_states: usize,
    /// States with more remaining customers than this are skipped.
    pub max_remaining: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            depths: vec![0, 1, 2],
            min_states: 100_000,
            max_remaining: 12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub states: usize,
    pub candidates: usize,
    /// Per checked depth: candidates masked at that depth that still have a
    /// feasible completion.
    pub unsound: Vec<(usize, usize)>,
    /// States where the selectable sets were not nested.
    pub nesting_violations: usize,
    /// States where the exact set is strictly smaller than the depth-1 set.
    pub strict_exact_below_pi1: usize,
    /// Per checked depth: candidates removed by the lookahead beyond the local mask.
    pub pruned: Vec<(usize, usize)>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.nesting_violations == 0 && self.unsound.iter().all(|&(_, c)| c == 0)
    }

    fn merge(&mut self, other: &AuditReport) {
        self.states += other.states;
        self.candidates += other.candidates;
        self.nesting_violations += other.nesting_violations;
        self.strict_exact_below_pi1 += other.strict_exact_below_pi1;
        for (dst, src) in self.unsound.iter_mut().zip(&other.unsound) {
            dst.1 += src.1;
        }
        for (dst, src) in self.pruned.iter_mut().zip(&other.pruned) {
            dst.1 += src.1;
        }
    }

    fn empty(depths: &[usize]) -> Self {
        AuditReport {
            unsound: depths.iter().map(|&d| (d, 0)).collect(),
            pruned: depths.iter().map(|&d| (d, 0)).collect(),
            ..Default::default()
        }
    }
}

fn audit_rollout(instance: &Instance, config: &AuditConfig, rng: &mut ChaCha8Rng) -> Result<AuditReport> {
    let mut report = AuditReport::empty(&config.depths);
    let mut state = ConstructionState::new(instance);
    while !state.is_complete() {
        if state.remaining() <= config.max_remaining {
            check_state(&state, config, &mut report)?;
        }
        let local = local_mask(&state);
        let options = if local.is_empty() {
            unvisited_mask(&state)
        } else {
            local
        };
        let nodes: Vec<usize> = options.nodes().collect();
        state.step(nodes[rng.random_range(0..nodes.len())])?;
    }
    Ok(report)
}

fn check_state(state: &ConstructionState<'_>, config: &AuditConfig, report: &mut AuditReport) -> Result<()> {
    let exact = exact_mask(state)?;
    let local = local_mask(state);
    let masks: Vec<Mask> = config
        .depths
        .iter()
        .map(|&k| pi_mask(state, k))
        .collect::<Result<_>>()?;
    report.states += 1;
    report.candidates += state.remaining();

    let mut nested = exact.is_subset_of(&local);
    for (slot, mask) in masks.iter().enumerate() {
        nested &= exact.is_subset_of(mask) && mask.is_subset_of(&local);
        report.unsound[slot].1 += exact.nodes().filter(|&c| !mask.is_selectable(c)).count();
        report.pruned[slot].1 += local.count() - mask.count();
    }
    // deeper masks must be subsets of shallower ones
    let mut by_depth: Vec<(usize, &Mask)> = config.depths.iter().copied().zip(masks.iter()).collect();
    by_depth.sort_by_key(|&(d, _)| d);
    for w in by_depth.windows(2) {
        nested &= w[1].1.is_subset_of(w[0].1);
    }
    if !nested {
        report.nesting_violations += 1;
    }
    let pi1 = pi_mask(state, 1)?;
    if exact.count() < pi1.count() {
        report.strict_exact_below_pi1 += 1;
    }
    Ok(())
}

/// Runs random constructions over `instances` (round-robin, one rollout per
/// instance per pass) until `config.min_states` states have been checked.
pub fn audit_masks(instances: &[Instance], config: &AuditConfig) -> Result<AuditReport> {
    if instances.is_empty() {
        return Err(Error::InvalidConfig("audit needs at least one instance".into()));
    }
    if let Some(&k) = config.depths.iter().find(|&&k| k > 2) {
        return Err(Error::UnsupportedDepth(k));
    }
    let mut total = AuditReport::empty(&config.depths);
    let mut pass = 0u64;
    while total.states < config.min_states {
        let reports: Vec<AuditReport> = instances
            .par_iter()
            .enumerate()
            .map(|(idx, inst)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[pass, idx as u64]));
                audit_rollout(inst, config, &mut rng)
            })
            .collect::<Result<_>>()?;
        let before = total.states;
        for r in &reports {
            total.merge(r);
        }
        if total.states == before {
            return Err(Error::InvalidConfig(
                "no auditable states: every state exceeds the remaining-customer limit".into(),
            ));
        }
        pass += 1;
    }
    Ok(total)
}
