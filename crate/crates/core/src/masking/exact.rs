//! Exact completion-feasibility oracles.
//!
//! TSPTW: subset dynamic programming over the remaining customers computing,
//! for every subset `S` and node `i ∈ S`, the latest service start at `i`
//! from which `S \ {i}` can still be served and the depot reached in time.
//! Feasibility in time is monotone (starting earlier never hurts, since early
//! arrivals wait), so one number per `(S, i)` suffices. Each positive answer
//! is confirmed by replaying a witness path forward with the same arithmetic
//! as [`ConstructionState::step`].
//!
//! TSPDL with unit demands: the customer served `r` positions after the
//! current one carries load `load + r`, so the remaining drafts admit an
//! order iff the `r`-th smallest is at least `load + r` for every `r`.

use super::{Mask, MaskLevel};
use crate::env::ConstructionState;
use crate::error::{Error, Result};
use crate::instances::{Instance, TspdlInstance, TsptwInstance};

/// Largest remaining-customer count accepted by [`exact_mask_tsptw`].
pub const MAX_EXACT_REMAINING: usize = 15;

pub(crate) struct LatestTable<'a> {
    inst: &'a TsptwInstance,
    nodes: Vec<usize>,
    latest: Vec<f64>,
}

impl<'a> LatestTable<'a> {
    /// `nodes` are the customers the table ranges over; bit `i` of a subset
    /// stands for `nodes[i]`.
    pub(crate) fn build(inst: &'a TsptwInstance, nodes: &[usize]) -> Self {
        let m = nodes.len();
        let lo = inst.tw_lo();
        let hi = inst.tw_hi();
        let depot_deadline = hi[0];
        let mut latest = vec![f64::NEG_INFINITY; (1usize << m) * m.max(1)];
        for set in 1usize..(1 << m) {
            let mut bits = set;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let rest = set & !(1 << i);
                let value = if rest == 0 {
                    depot_deadline - inst.travel(nodes[i], 0)
                } else {
                    let mut best = f64::NEG_INFINITY;
                    let mut ks = rest;
                    while ks != 0 {
                        let k = ks.trailing_zeros() as usize;
                        ks &= ks - 1;
                        let after = latest[rest * m + k];
                        if after < lo[nodes[k]] {
                            continue;
                        }
                        let bound = hi[nodes[k]].min(after) - inst.travel(nodes[i], nodes[k]);
                        if bound > best {
                            best = bound;
                        }
                    }
                    best
                };
                latest[set * m + i] = value;
            }
        }
        LatestTable {
            inst,
            nodes: nodes.to_vec(),
            latest,
        }
    }

    #[inline]
    pub(crate) fn latest(&self, set: usize, i: usize) -> f64 {
        self.latest[set * self.nodes.len() + i]
    }

    /// Whether starting service at `nodes[i]` at time `start`, the rest of
    /// `set` can be served and the depot reached. Confirmed by a forward walk.
    pub(crate) fn completes(&self, set: usize, i: usize, start: f64) -> bool {
        if start > self.latest(set, i) {
            return false;
        }
        let lo = self.inst.tw_lo();
        let hi = self.inst.tw_hi();
        let (mut cur, mut t, mut s) = (i, start, set);
        loop {
            let rest = s & !(1 << cur);
            if rest == 0 {
                return t + self.inst.travel(self.nodes[cur], 0) <= hi[0];
            }
            let mut pick = None;
            let mut best_slack = f64::NEG_INFINITY;
            let mut ks = rest;
            while ks != 0 {
                let k = ks.trailing_zeros() as usize;
                ks &= ks - 1;
                let node = self.nodes[k];
                let arrival = t + self.inst.travel(self.nodes[cur], node);
                if arrival > hi[node] {
                    continue;
                }
                let next = arrival.max(lo[node]);
                let slack = self.latest(rest, k) - next;
                if slack >= 0.0 && slack > best_slack {
                    best_slack = slack;
                    pick = Some((k, next));
                }
            }
            match pick {
                Some((k, next)) => {
                    cur = k;
                    t = next;
                    s = rest;
                }
                None => return false,
            }
        }
    }
}

pub fn exact_mask(state: &ConstructionState<'_>) -> Result<Mask> {
    match state.instance() {
        Instance::Tsptw(_) => exact_mask_tsptw(state),
        Instance::Tspdl(_) => exact_mask_tspdl(state),
    }
}

pub fn exact_mask_tsptw(state: &ConstructionState<'_>) -> Result<Mask> {
    let inst = state
        .instance()
        .as_tsptw()
        .ok_or(Error::VariantMismatch("exact TSPTW mask on a TSPDL state"))?;
    let remaining: Vec<usize> = state.unvisited().collect();
    let m = remaining.len();
    if m > MAX_EXACT_REMAINING {
        return Err(Error::TooLarge {
            what: "remaining customers for exact masking",
            size: m,
            limit: MAX_EXACT_REMAINING,
        });
    }
    let mut sel = vec![false; inst.n() + 1];
    if m == 0 {
        return Ok(Mask::new(sel, MaskLevel::Exact));
    }
    let table = LatestTable::build(inst, &remaining);
    let full = (1usize << m) - 1;
    for (i, &c) in remaining.iter().enumerate() {
        let arrival = state.clock() + inst.travel(state.current(), c);
        if arrival > inst.tw_hi()[c] {
            continue;
        }
        sel[c] = table.completes(full, i, arrival.max(inst.tw_lo()[c]));
    }
    Ok(Mask::new(sel, MaskLevel::Exact))
}

/// Drafts of `nodes` must satisfy `sorted[r - 1] >= load + r`.
pub(crate) fn drafts_admit_order(inst: &TspdlInstance, load: u32, sorted_drafts: &[u32]) -> bool {
    sorted_drafts.iter().enumerate().all(|(r, &d)| d > load + r as u32)
        && load + sorted_drafts.len() as u32 <= inst.draft()[0]
}

pub fn exact_mask_tspdl(state: &ConstructionState<'_>) -> Result<Mask> {
    let inst = state
        .instance()
        .as_tspdl()
        .ok_or(Error::VariantMismatch("exact TSPDL mask on a TSPTW state"))?;
    inst.check_unit_demands()?;
    let mut remaining: Vec<usize> = state.unvisited().collect();
    remaining.sort_by_key(|&j| (inst.draft()[j], j));
    let drafts: Vec<u32> = remaining.iter().map(|&j| inst.draft()[j]).collect();
    let load = state.load();
    let mut sel = vec![false; inst.n() + 1];
    let mut others = Vec::with_capacity(drafts.len());
    for (pos, &c) in remaining.iter().enumerate() {
        if load + 1 > inst.draft()[c] {
            continue;
        }
        others.clear();
        others.extend_from_slice(&drafts[..pos]);
        others.extend_from_slice(&drafts[pos + 1..]);
        sel[c] = drafts_admit_order(inst, load + 1, &others);
    }
    Ok(Mask::new(sel, MaskLevel::Exact))
}

/// Whether the state admits a violation-free completion (including the
/// return to the depot).
pub fn completion_feasible(state: &ConstructionState<'_>) -> Result<bool> {
    if state.is_complete() {
        return Ok(match state.instance() {
            Instance::Tsptw(inst) => state.clock() + inst.travel(state.current(), 0) <= inst.tw_hi()[0],
            Instance::Tspdl(inst) => state.load() <= inst.draft()[0],
        });
    }
    Ok(!exact_mask(state)?.is_empty())
}
