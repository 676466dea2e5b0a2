//! Feasibility masks over the next node to visit.
//!
//! * [`local_mask`]: unvisited and the immediate move is violation-free.
//! * [`pi_mask`] with depth `k`: a locally feasible candidate is also removed
//!   when some set of at most `k` remaining customers cannot be served, in any
//!   order, right after it (a doom certificate). Travel times obey the
//!   triangle inequality and waiting never helps later nodes, so any
//!   certificate found here also rules out every longer completion.
//! * [`exact_mask`]: a candidate stays iff some full completion is feasible.
//!
//! Selectable sets are nested: exact ⊆ depth 2 ⊆ depth 1 ⊆ local.

mod audit;
mod exact;
mod solve;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::env::ConstructionState;
use crate::error::{Error, Result};
use crate::instances::Instance;

pub use audit::{audit_masks, AuditConfig, AuditReport};
pub use exact::{completion_feasible, exact_mask, exact_mask_tspdl, exact_mask_tsptw, MAX_EXACT_REMAINING};
pub use solve::{exact_solve_small, solve_tsptw_labels, MAX_EXACT_SOLVE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskLevel {
    Local,
    Pi1,
    Pi2,
    Exact,
    Predicted,
}

impl MaskLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskLevel::Local => "local",
            MaskLevel::Pi1 => "pi1",
            MaskLevel::Pi2 => "pi2",
            MaskLevel::Exact => "exact",
            MaskLevel::Predicted => "predicted",
        }
    }
}

impl fmt::Display for MaskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    selectable: Vec<bool>,
    level: MaskLevel,
}

impl Mask {
    pub fn new(selectable: Vec<bool>, level: MaskLevel) -> Self {
        Mask { selectable, level }
    }

    pub fn level(&self) -> MaskLevel {
        self.level
    }

    pub fn selectable(&self) -> &[bool] {
        &self.selectable
    }

    #[inline]
    pub fn is_selectable(&self, node: usize) -> bool {
        self.selectable[node]
    }

    pub fn count(&self) -> usize {
        self.selectable.iter().filter(|&&s| s).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.selectable.iter().any(|&s| s)
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.selectable.iter().enumerate().filter_map(|(i, &s)| s.then_some(i))
    }

    /// True when every node selectable here is selectable in `other`.
    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.selectable.iter().zip(&other.selectable).all(|(&a, &b)| !a || b)
    }

    pub fn bitstring(&self) -> String {
        self.selectable.iter().map(|&s| if s { '1' } else { '0' }).collect()
    }

    /// Debug dump line: `step t: level=<L> selectable=<bits>`.
    pub fn dump_line(&self, step: usize) -> String {
        format!("step {step}: level={} selectable={}", self.level, self.bitstring())
    }
}

/// Whether moving from the current node to `c` is violation-free.
#[inline]
pub fn locally_feasible(state: &ConstructionState<'_>, c: usize) -> bool {
    match state.instance() {
        Instance::Tsptw(inst) => state.clock() + inst.travel(state.current(), c) <= inst.tw_hi()[c],
        Instance::Tspdl(inst) => state.load() + inst.demand()[c] <= inst.draft()[c],
    }
}

pub fn local_mask(state: &ConstructionState<'_>) -> Mask {
    let mut sel = vec![false; state.instance().size()];
    for c in state.unvisited() {
        sel[c] = locally_feasible(state, c);
    }
    Mask::new(sel, MaskLevel::Local)
}

/// All unvisited customers, constraint-blind.
pub fn unvisited_mask(state: &ConstructionState<'_>) -> Mask {
    let mut sel = vec![false; state.instance().size()];
    for c in state.unvisited() {
        sel[c] = true;
    }
    Mask::new(sel, MaskLevel::Local)
}

/// Lookahead mask of depth `k` (0 = local).
pub fn pi_mask(state: &ConstructionState<'_>, k: usize) -> Result<Mask> {
    if k > 2 {
        return Err(Error::UnsupportedDepth(k));
    }
    let mut mask = local_mask(state);
    if k == 0 {
        return Ok(mask);
    }
    let remaining: Vec<usize> = state.unvisited().collect();
    for &c in &remaining {
        if mask.selectable[c] && doomed_after(state, c, &remaining, k) {
            mask.selectable[c] = false;
        }
    }
    mask.level = if k == 1 { MaskLevel::Pi1 } else { MaskLevel::Pi2 };
    Ok(mask)
}

/// Per-candidate labels of the depth-1 mask: `true` for locally feasible
/// candidates that the lookahead removes.
pub fn pi1_labels(state: &ConstructionState<'_>, local: &Mask) -> Vec<bool> {
    let remaining: Vec<usize> = state.unvisited().collect();
    let mut labels = vec![false; state.instance().size()];
    for &c in &remaining {
        if local.selectable[c] {
            labels[c] = doomed_after(state, c, &remaining, 1);
        }
    }
    labels
}

/// Searches certificates of size `1..=depth` among `remaining \ {c}`.
fn doomed_after(state: &ConstructionState<'_>, c: usize, remaining: &[usize], depth: usize) -> bool {
    match state.instance() {
        Instance::Tsptw(inst) => {
            let lo = inst.tw_lo();
            let hi = inst.tw_hi();
            let start = (state.clock() + inst.travel(state.current(), c)).max(lo[c]);
            // size-1 certificates
            for &j in remaining {
                if j != c && start + inst.travel(c, j) > hi[j] {
                    return true;
                }
            }
            if depth < 2 {
                return false;
            }
            // size-2: both orders of {j, m} fail; all singles already pass
            let fails = |first: usize, second: usize| {
                let t = (start + inst.travel(c, first)).max(lo[first]);
                t + inst.travel(first, second) > hi[second]
            };
            for (a, &j) in remaining.iter().enumerate() {
                if j == c {
                    continue;
                }
                for &m in &remaining[a + 1..] {
                    if m != c && fails(j, m) && fails(m, j) {
                        return true;
                    }
                }
            }
            false
        }
        Instance::Tspdl(inst) => {
            let demand = inst.demand();
            let draft = inst.draft();
            let base = state.load() + demand[c];
            for &j in remaining {
                if j != c && base + demand[j] > draft[j] {
                    return true;
                }
            }
            if depth < 2 {
                return false;
            }
            let fails = |first: usize, second: usize| base + demand[first] + demand[second] > draft[second];
            for (a, &j) in remaining.iter().enumerate() {
                if j == c {
                    continue;
                }
                for &m in &remaining[a + 1..] {
                    if m != c && fails(j, m) && fails(m, j) {
                        return true;
                    }
                }
            }
            false
        }
    }
}
