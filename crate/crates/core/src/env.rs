//! Tour construction as a constrained MDP: state transitions, violation
//! accounting and the Lagrangian reward.
//!
//! Steps use soft semantics by default: a violating move is recorded in the
//! accumulators and construction continues. [`StepMode::Strict`] turns any
//! violation into an error instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepMode {
    #[default]
    Soft,
    Strict,
}

/// Partial tour state. Cloning gives an independent copy.
#[derive(Debug, Clone)]
pub struct ConstructionState<'a> {
    instance: &'a Instance,
    current: usize,
    clock: f64,
    load: u32,
    visited: Vec<bool>,
    tour: Vec<usize>,
    length: f64,
    violation: f64,
    violated: usize,
}

impl<'a> ConstructionState<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        let mut visited = vec![false; instance.size()];
        visited[0] = true;
        ConstructionState {
            instance,
            current: 0,
            clock: 0.0,
            load: 0,
            visited,
            tour: vec![0],
            length: 0.0,
            violation: 0.0,
            violated: 0,
        }
    }

    pub fn instance(&self) -> &'a Instance {
        self.instance
    }

    pub fn current(&self) -> usize {
        self.current
    }

    /// Service start time at the current node (TSPTW; zero for TSPDL).
    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Load on board after the current node (TSPDL; zero for TSPTW).
    pub fn load(&self) -> u32 {
        self.load
    }

    pub fn is_visited(&self, node: usize) -> bool {
        self.visited[node]
    }

    pub fn visited(&self) -> &[bool] {
        &self.visited
    }

    pub fn tour(&self) -> &[usize] {
        &self.tour
    }

    /// Length of the partial path so far (no return arc).
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Accumulated violation magnitude (time-window lateness or draft excess).
    pub fn violation(&self) -> f64 {
        self.violation
    }

    /// Number of nodes visited in violation so far.
    pub fn violated_nodes(&self) -> usize {
        self.violated
    }

    /// Customers not yet visited.
    pub fn remaining(&self) -> usize {
        self.instance.size() - self.tour.len()
    }

    pub fn is_complete(&self) -> bool {
        self.remaining() == 0
    }

    pub fn unvisited(&self) -> impl Iterator<Item = usize> + '_ {
        (1..self.visited.len()).filter(move |&j| !self.visited[j])
    }

    pub fn step(&mut self, node: usize) -> Result<()> {
        self.step_with(node, StepMode::Soft)
    }

    /// Returns the successor state, leaving `self` untouched.
    pub fn stepped(&self, node: usize) -> Result<Self> {
        let mut next = self.clone();
        next.step(node)?;
        Ok(next)
    }

    pub fn step_with(&mut self, node: usize, mode: StepMode) -> Result<()> {
        if node >= self.visited.len() {
            return Err(Error::NodeOutOfRange(node));
        }
        if self.visited[node] {
            return Err(Error::Revisit(node));
        }
        let excess = match self.instance {
            Instance::Tsptw(inst) => {
                let arrival = self.clock + inst.travel(self.current, node);
                let excess = (arrival - inst.tw_hi()[node]).max(0.0);
                if excess > 0.0 && mode == StepMode::Strict {
                    return Err(Error::Violation { node, excess });
                }
                self.clock = arrival.max(inst.tw_lo()[node]);
                excess
            }
            Instance::Tspdl(inst) => {
                let load = self.load + inst.demand()[node];
                let excess = load.saturating_sub(inst.draft()[node]) as f64;
                if excess > 0.0 && mode == StepMode::Strict {
                    return Err(Error::Violation { node, excess });
                }
                self.load = load;
                excess
            }
        };
        if excess > 0.0 {
            self.violation += excess;
            self.violated += 1;
        }
        self.length += self.instance.dist(self.current, node);
        self.visited[node] = true;
        self.tour.push(node);
        self.current = node;
        Ok(())
    }

    /// Closes the tour with the return arc to the depot and checks the depot
    /// constraint (deadline or draft).
    pub fn finalize(&self) -> Result<Completed> {
        if !self.is_complete() {
            return Err(Error::Incomplete(self.remaining()));
        }
        let mut violation = self.violation;
        let mut violated = self.violated;
        let excess = match self.instance {
            Instance::Tsptw(inst) => {
                let arrival = self.clock + inst.travel(self.current, 0);
                (arrival - inst.tw_hi()[0]).max(0.0)
            }
            Instance::Tspdl(inst) => self.load.saturating_sub(inst.draft()[0]) as f64,
        };
        if excess > 0.0 {
            violation += excess;
            violated += 1;
        }
        Ok(Completed {
            tour: Tour(self.tour.clone()),
            length: self.length + self.instance.dist(self.current, 0),
            violation,
            violated,
        })
    }
}

/// Result of [`ConstructionState::finalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Completed {
    pub tour: Tour,
    pub length: f64,
    pub violation: f64,
    pub violated: usize,
}

impl Completed {
    pub fn metrics(&self) -> TourMetrics {
        TourMetrics {
            length: self.length,
            violation: self.violation,
            violated: self.violated,
            feasible: self.violated == 0,
        }
    }
}

/// Node permutation starting at the depot; the return arc is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Tour(pub Vec<usize>);

impl Tour {
    pub fn nodes(&self) -> &[usize] {
        &self.0
    }

    pub fn validate(&self, size: usize) -> Result<()> {
        if self.0.len() != size {
            return Err(Error::InvalidTour(format!(
                "expected {size} nodes, got {}",
                self.0.len()
            )));
        }
        if self.0.first() != Some(&0) {
            return Err(Error::InvalidTour("tour must start at the depot".into()));
        }
        let mut seen = vec![false; size];
        for &v in &self.0 {
            if v >= size {
                return Err(Error::InvalidTour(format!("node {v} out of range")));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(Error::InvalidTour(format!("node {v} repeated")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TourMetrics {
    pub length: f64,
    pub violation: f64,
    pub violated: usize,
    pub feasible: bool,
}

impl TourMetrics {
    /// `-(length + lambda * violation + violated)`.
    pub fn reward(&self, lambda: f64) -> f64 {
        -(self.length + lambda * self.violation + self.violated as f64)
    }
}

/// Replays `tour` through [`ConstructionState::step`] and [`ConstructionState::finalize`].
pub fn tour_metrics(instance: &Instance, tour: &Tour) -> Result<TourMetrics> {
    tour.validate(instance.size())?;
    let mut state = ConstructionState::new(instance);
    for &v in &tour.0[1..] {
        state.step(v)?;
    }
    Ok(state.finalize()?.metrics())
}

pub fn lagrangian_reward(instance: &Instance, tour: &Tour, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::NegativeMultiplier(lambda));
    }
    Ok(tour_metrics(instance, tour)?.reward(lambda))
}

/// Interchange record for one solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TourRecord {
    pub tour: Vec<usize>,
    pub length: f64,
    pub feasible: bool,
}

impl TourRecord {
    pub fn new(tour: &Tour, metrics: &TourMetrics) -> Self {
        TourRecord {
            tour: tour.0.clone(),
            length: metrics.length,
            feasible: metrics.feasible,
        }
    }
}
