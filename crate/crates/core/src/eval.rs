//! Solving instance sets with a method, aggregating the infeasibility,
//! objective and gap metrics, and writing reports.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{tour_metrics, Tour, TourRecord};
use crate::error::{Error, Result};
use crate::instances::Instance;
use crate::masking::{exact_solve_small, MAX_EXACT_SOLVE};
use crate::policy::{greedy_c, greedy_l, rollout, Decode, MaskMode, PolicyParams, RolloutOptions};
use crate::seeding::derive_seed;
use crate::training::PredictorParams;

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    GreedyL,
    GreedyC,
    /// Uniform choice among the selectable candidates.
    Random {
        mask: MaskMode,
    },
    Policy {
        params: PolicyParams,
        predictor: Option<PredictorParams>,
        mask: MaskMode,
        decode: Decode,
    },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::GreedyL => "greedy-l".into(),
            Method::GreedyC => "greedy-c".into(),
            Method::Random { mask } => format!("random-{mask}"),
            Method::Policy { mask, decode, .. } => match decode {
                Decode::Sample => format!("policy-{mask}"),
                Decode::Greedy => format!("policy-{mask}-argmax"),
            },
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(
            self,
            Method::GreedyL
                | Method::GreedyC
                | Method::Policy {
                    decode: Decode::Greedy,
                    ..
                }
        )
    }

    pub fn mask(&self) -> Option<MaskMode> {
        match self {
            Method::Random { mask } | Method::Policy { mask, .. } => Some(*mask),
            _ => None,
        }
    }
}

/// All solutions produced by one method on one instance set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSet {
    pub method: String,
    pub n_s: usize,
    pub wall_s: f64,
    pub instances: Vec<Vec<TourRecord>>,
}

impl SolutionSet {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Re-derives every record from the instances, rejecting malformed tours
    /// and disagreeing lengths or feasibility flags.
    pub fn verify(&self, instances: &[Instance]) -> Result<()> {
        if self.instances.len() != instances.len() {
            return Err(Error::InvalidConfig(format!(
                "{} has solutions for {} instances, the dataset has {}",
                self.method,
                self.instances.len(),
                instances.len()
            )));
        }
        for (i, (recs, inst)) in self.instances.iter().zip(instances).enumerate() {
            for r in recs {
                let m = tour_metrics(inst, &Tour(r.tour.clone()))?;
                if m.feasible != r.feasible || (m.length - r.length).abs() > 1e-9 * m.length.max(1.0) {
                    return Err(Error::InvalidTour(format!(
                        "instance {i}: recorded metrics disagree with the tour"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Per instance, per solution: `Some(length)` when feasible.
    pub fn outcomes(&self) -> Vec<Vec<Option<f64>>> {
        self.instances
            .iter()
            .map(|recs| recs.iter().map(|r| r.feasible.then_some(r.length)).collect())
            .collect()
    }
}

/// Runs `method` `n_s` times per instance (once for deterministic methods).
pub fn solve(method: &Method, instances: &[Instance], n_s: usize, seed: u64) -> Result<SolutionSet> {
    if n_s == 0 {
        return Err(Error::InvalidConfig("need at least one solution per instance".into()));
    }
    let n_s = if method.is_deterministic() { 1 } else { n_s };
    let started = Instant::now();
    let zero = PolicyParams::default();
    let solved: Vec<Vec<TourRecord>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            (0..n_s)
                .map(|s| {
                    let tour = match method {
                        Method::GreedyL => greedy_l(inst),
                        Method::GreedyC => greedy_c(inst),
                        Method::Random { mask } => {
                            let opts = RolloutOptions::with_mask(*mask);
                            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3, i as u64, s as u64]));
                            rollout(&zero, inst, &opts, &mut rng)?.tour
                        }
                        Method::Policy {
                            params,
                            predictor,
                            mask,
                            decode,
                        } => {
                            let opts = RolloutOptions {
                                mask: *mask,
                                predictor: predictor.as_ref(),
                                decode: *decode,
                                ..Default::default()
                            };
                            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3, i as u64, s as u64]));
                            rollout(params, inst, &opts, &mut rng)?.tour
                        }
                    };
                    let m = tour_metrics(inst, &tour)?;
                    Ok(TourRecord::new(&tour, &m))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(SolutionSet {
        method: method.name(),
        n_s,
        wall_s: started.elapsed().as_secs_f64(),
        instances: solved,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub sol_infsb: f64,
    pub inst_infsb: f64,
    /// Mean of per-instance best feasible lengths.
    pub mean_obj: Option<f64>,
    /// Mean of per-instance relative gaps to the reference.
    pub mean_gap: Option<f64>,
}

/// Aggregates outcomes. Objective and gap average over instances with a
/// feasible solution that are also in `include` (all when `None`); gaps need
/// a reference for every such instance.
pub fn aggregate(
    outcomes: &[Vec<Option<f64>>],
    refs: Option<&[Option<f64>]>,
    include: Option<&[bool]>,
) -> Result<Metrics> {
    let solutions: usize = outcomes.iter().map(Vec::len).sum();
    if solutions == 0 {
        return Err(Error::NoSamples);
    }
    let infeasible = outcomes.iter().flatten().filter(|o| o.is_none()).count();
    let dead = outcomes.iter().filter(|o| o.iter().all(Option::is_none)).count();
    let (mut obj_sum, mut gap_sum, mut count) = (0.0, 0.0, 0usize);
    for (i, o) in outcomes.iter().enumerate() {
        if include.is_some_and(|inc| !inc[i]) {
            continue;
        }
        let Some(best) = o.iter().flatten().copied().reduce(f64::min) else {
            continue;
        };
        obj_sum += best;
        if let Some(refs) = refs {
            let r = refs[i].ok_or(Error::MissingReference(i))?;
            gap_sum += (best - r) / r;
        }
        count += 1;
    }
    let mean = |s: f64| (count > 0).then(|| s / count as f64);
    Ok(Metrics {
        sol_infsb: infeasible as f64 / solutions as f64,
        inst_infsb: dead as f64 / outcomes.len() as f64,
        mean_obj: mean(obj_sum),
        mean_gap: refs.and(mean(gap_sum)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefMode {
    /// Optimal lengths from the exact solver (small instances only).
    Exact,
    /// Shortest feasible length across the evaluated solution sets.
    Best,
    /// JSON array of lengths (or nulls), one per instance.
    File(std::path::PathBuf),
}

impl std::str::FromStr for RefMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "exact" => RefMode::Exact,
            "best" => RefMode::Best,
            path => RefMode::File(path.into()),
        })
    }
}

pub fn gap_reference(instances: &[Instance], mode: &RefMode, sets: &[SolutionSet]) -> Result<Vec<Option<f64>>> {
    match mode {
        RefMode::Exact => {
            if let Some(big) = instances.iter().find(|i| i.n() > MAX_EXACT_SOLVE) {
                return Err(Error::TooLarge {
                    what: "customers for exact references",
                    size: big.n(),
                    limit: MAX_EXACT_SOLVE,
                });
            }
            instances
                .par_iter()
                .map(|inst| Ok(exact_solve_small(inst)?.map(|(_, len)| len)))
                .collect()
        }
        RefMode::Best => Ok((0..instances.len())
            .map(|i| {
                sets.iter()
                    .flat_map(|s| s.instances[i].iter())
                    .filter(|r| r.feasible)
                    .map(|r| r.length)
                    .reduce(f64::min)
            })
            .collect()),
        RefMode::File(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let refs: Vec<Option<f64>> = serde_json::from_str(&text)?;
            if refs.len() != instances.len() {
                return Err(Error::InvalidConfig(format!(
                    "{} references for {} instances",
                    refs.len(),
                    instances.len()
                )));
            }
            Ok(refs)
        }
    }
}

/// Instances with a feasible solution under every set.
pub fn overlap(sets: &[SolutionSet]) -> Vec<bool> {
    let len = sets.first().map_or(0, |s| s.instances.len());
    (0..len)
        .map(|i| sets.iter().all(|s| s.instances[i].iter().any(|r| r.feasible)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub n: usize,
    pub hardness: String,
    #[serde(rename = "N_s")]
    pub n_s: usize,
    pub sol_infsb: f64,
    pub inst_infsb: f64,
    pub mean_obj: Option<f64>,
    pub mean_gap: Option<f64>,
    pub wall_s: f64,
}

impl EvalReport {
    pub fn new(set: &SolutionSet, dataset: &str, instances: &[Instance], metrics: &Metrics) -> Self {
        let first = instances.first();
        EvalReport {
            method: set.method.clone(),
            dataset: dataset.into(),
            n: first.map_or(0, Instance::n),
            hardness: first.map_or("", |i| i.hardness().as_str()).into(),
            n_s: set.n_s,
            sol_infsb: metrics.sol_infsb,
            inst_infsb: metrics.inst_infsb,
            mean_obj: metrics.mean_obj,
            mean_gap: metrics.mean_gap,
            wall_s: set.wall_s,
        }
    }
}

/// Solves and aggregates in one go, without gaps.
pub fn evaluate(method: &Method, dataset: &str, instances: &[Instance], n_s: usize, seed: u64) -> Result<EvalReport> {
    let set = solve(method, instances, n_s, seed)?;
    let metrics = aggregate(&set.outcomes(), None, None)?;
    Ok(EvalReport::new(&set, dataset, instances, &metrics))
}

pub fn write_report_csv(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    if reports.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in reports {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_report_json(path: impl AsRef<Path>, reports: &[EvalReport]) -> Result<()> {
    let path = path.as_ref();
    if reports.is_empty() {
        return Err(Error::NoSamples);
    }
    fs::write(path, serde_json::to_string_pretty(reports)? + "\n").map_err(|e| Error::io(path, e))
}

/// Per-instance rows for external plotting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotRow {
    pub method: String,
    pub instance: usize,
    pub feasible: usize,
    pub solutions: usize,
    pub best: Option<f64>,
    pub reference: Option<f64>,
    pub gap: Option<f64>,
}

pub fn plot_rows(set: &SolutionSet, refs: Option<&[Option<f64>]>) -> Vec<PlotRow> {
    set.instances
        .iter()
        .enumerate()
        .map(|(i, recs)| {
            let best = recs.iter().filter(|r| r.feasible).map(|r| r.length).reduce(f64::min);
            let reference = refs.and_then(|r| r[i]);
            PlotRow {
                method: set.method.clone(),
                instance: i,
                feasible: recs.iter().filter(|r| r.feasible).count(),
                solutions: recs.len(),
                best,
                reference,
                gap: best.zip(reference).map(|(b, r)| (b - r) / r),
            }
        })
        .collect()
}

pub fn write_plotdata(path: impl AsRef<Path>, rows: &[PlotRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
