//! Exact reference solvers for small instances.

use std::collections::HashMap;

use super::exact::{drafts_admit_order, LatestTable};
use crate::env::Tour;
use crate::error::{Error, Result};
use crate::instances::{Instance, TspdlInstance, TsptwInstance};

/// Largest customer count accepted by [`exact_solve_small`].
pub const MAX_EXACT_SOLVE: usize = 12;

/// Minimum-length feasible tour by depth-first search, or `None` when the
/// instance has no feasible tour. Branches are pruned by the exact
/// completion oracle and by a constraint-free Held-Karp completion bound.
/// Among equal-length optima the lexicographically smallest tour wins.
pub fn exact_solve_small(instance: &Instance) -> Result<Option<(Tour, f64)>> {
    let n = instance.n();
    if n > MAX_EXACT_SOLVE {
        return Err(Error::TooLarge {
            what: "customers for the exact solver",
            size: n,
            limit: MAX_EXACT_SOLVE,
        });
    }
    let bound = PathBound::new(instance);
    let mut search = Search {
        instance,
        bound: &bound,
        path: vec![0],
        best: None,
        best_len: f64::INFINITY,
    };
    let full = (1usize << n) - 1;
    match instance {
        Instance::Tsptw(inst) => {
            let nodes: Vec<usize> = (1..=n).collect();
            let table = LatestTable::build(inst, &nodes);
            search.tsptw(inst, &table, full, 0.0, 0.0);
        }
        Instance::Tspdl(inst) => {
            inst.check_unit_demands()?;
            search.tspdl(inst, full, 0, 0.0);
        }
    }
    Ok(search.best.map(|t| (Tour(t), search.best_len)))
}

/// `bound(S, j)`: shortest path from customer `j` through all of `S` back to
/// the depot, ignoring side constraints.
struct PathBound {
    n: usize,
    table: Vec<f64>,
}

impl PathBound {
    fn new(instance: &Instance) -> Self {
        let n = instance.n();
        let mut table = vec![f64::INFINITY; (1usize << n) * n.max(1)];
        for set in 1usize..(1 << n) {
            let mut bits = set;
            while bits != 0 {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let rest = set & !(1 << i);
                table[set * n + i] = if rest == 0 {
                    instance.dist(i + 1, 0)
                } else {
                    let mut best = f64::INFINITY;
                    let mut ks = rest;
                    while ks != 0 {
                        let k = ks.trailing_zeros() as usize;
                        ks &= ks - 1;
                        best = best.min(instance.dist(i + 1, k + 1) + table[rest * n + k]);
                    }
                    best
                };
            }
        }
        PathBound { n, table }
    }

    #[inline]
    fn get(&self, set: usize, i: usize) -> f64 {
        self.table[set * self.n + i]
    }
}

struct Search<'a> {
    instance: &'a Instance,
    bound: &'a PathBound,
    path: Vec<usize>,
    best: Option<Vec<usize>>,
    best_len: f64,
}

impl Search<'_> {
    fn prune(&self, length: f64, set: usize, k: usize, cur: usize) -> bool {
        let lower = length + self.instance.dist(cur, k + 1) + self.bound.get(set, k);
        lower * (1.0 - 1e-12) >= self.best_len
    }

    fn record(&mut self, total: f64) {
        if total < self.best_len {
            self.best_len = total;
            self.best = Some(self.path.clone());
        }
    }

    fn tsptw(&mut self, inst: &TsptwInstance, table: &LatestTable<'_>, rest: usize, clock: f64, length: f64) {
        let cur = *self.path.last().expect("path starts at depot");
        if rest == 0 {
            if clock + inst.travel(cur, 0) <= inst.tw_hi()[0] {
                self.record(length + inst.dist(cur, 0));
            }
            return;
        }
        let mut ks = rest;
        while ks != 0 {
            let k = ks.trailing_zeros() as usize;
            ks &= ks - 1;
            let node = k + 1;
            let arrival = clock + inst.travel(cur, node);
            if arrival > inst.tw_hi()[node] {
                continue;
            }
            let start = arrival.max(inst.tw_lo()[node]);
            if start > table.latest(rest, k) || self.prune(length, rest, k, cur) {
                continue;
            }
            self.path.push(node);
            self.tsptw(inst, table, rest & !(1 << k), start, length + inst.dist(cur, node));
            self.path.pop();
        }
    }

    fn tspdl(&mut self, inst: &TspdlInstance, rest: usize, load: u32, length: f64) {
        let cur = *self.path.last().expect("path starts at depot");
        if rest == 0 {
            if load <= inst.draft()[0] {
                self.record(length + inst.dist(cur, 0));
            }
            return;
        }
        let mut ks = rest;
        while ks != 0 {
            let k = ks.trailing_zeros() as usize;
            ks &= ks - 1;
            let node = k + 1;
            let next_load = load + 1;
            if next_load > inst.draft()[node] {
                continue;
            }
            let after = rest & !(1 << k);
            let mut drafts: Vec<u32> = (0..inst.n())
                .filter(|&b| after & (1 << b) != 0)
                .map(|b| inst.draft()[b + 1])
                .collect();
            drafts.sort_unstable();
            if !drafts_admit_order(inst, next_load, &drafts) || self.prune(length, rest, k, cur) {
                continue;
            }
            self.path.push(node);
            self.tspdl(inst, after, next_load, length + inst.dist(cur, node));
            self.path.pop();
        }
    }
}

#[derive(Clone, Copy)]
struct Label {
    node: usize,
    time: f64,
    length: f64,
    parent: u32,
}

/// Label-setting dynamic program for TSPTW: per `(visited set, last node)`
/// it keeps the Pareto front of (time, length). Extensions that leave some
/// unvisited customer unreachable in time are dropped. Suited to benchmark
/// instances with narrow windows where few orders are feasible.
///
/// Fails with [`Error::TooLarge`] once more than `max_labels` labels are alive.
pub fn solve_tsptw_labels(inst: &TsptwInstance, max_labels: usize) -> Result<Option<(Tour, f64)>> {
    let n = inst.n();
    if n > 63 {
        return Err(Error::TooLarge {
            what: "customers for the label solver",
            size: n,
            limit: 63,
        });
    }
    let lo = inst.tw_lo();
    let hi = inst.tw_hi();
    let mut arena = vec![Label {
        node: 0,
        time: 0.0,
        length: 0.0,
        parent: u32::MAX,
    }];
    let mut layer: HashMap<(u64, usize), Vec<u32>> = HashMap::new();
    layer.insert((0, 0), vec![0]);
    let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };

    for _ in 0..n {
        let mut next: HashMap<(u64, usize), Vec<u32>> = HashMap::new();
        let mut keys: Vec<_> = layer.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let (set, _) = key;
            for &id in &layer[&key] {
                let label = arena[id as usize];
                for k in 1..=n {
                    let bit = 1u64 << (k - 1);
                    if set & bit != 0 {
                        continue;
                    }
                    let arrival = label.time + inst.travel(label.node, k);
                    if arrival > hi[k] {
                        continue;
                    }
                    let time = arrival.max(lo[k]);
                    let new_set = set | bit;
                    let stranded =
                        (1..=n).any(|j| new_set & (1u64 << (j - 1)) == 0 && time + inst.travel(k, j) > hi[j]);
                    if stranded || (new_set == full && time + inst.travel(k, 0) > hi[0]) {
                        continue;
                    }
                    let length = label.length + inst.dist(label.node, k);
                    let front = next.entry((new_set, k)).or_default();
                    if front.iter().any(|&o| {
                        let o = &arena[o as usize];
                        o.time <= time && o.length <= length
                    }) {
                        continue;
                    }
                    front.retain(|&o| {
                        let o = &arena[o as usize];
                        !(time <= o.time && length <= o.length)
                    });
                    arena.push(Label {
                        node: k,
                        time,
                        length,
                        parent: id,
                    });
                    front.push((arena.len() - 1) as u32);
                    if arena.len() > max_labels {
                        return Err(Error::TooLarge {
                            what: "labels in the TSPTW label solver",
                            size: arena.len(),
                            limit: max_labels,
                        });
                    }
                }
            }
        }
        layer = next;
    }

    let mut best: Option<(u32, f64)> = None;
    for ids in layer.values() {
        for &id in ids {
            let l = &arena[id as usize];
            let total = l.length + inst.dist(l.node, 0);
            if best.map_or(true, |(_, b)| total < b) {
                best = Some((id, total));
            }
        }
    }
    Ok(best.map(|(mut id, total)| {
        let mut nodes = Vec::with_capacity(n + 1);
        while id != u32::MAX {
            nodes.push(arena[id as usize].node);
            id = arena[id as usize].parent;
        }
        nodes.reverse();
        (Tour(nodes), total)
    }))
}
