//! Constructive policies: the greedy baselines and a linear-softmax policy
//! over hand-built candidate features with analytic score functions.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ConstructionState, Tour, TourMetrics};
use crate::error::{Error, Result};
use crate::instances::{Instance, Variant};
use crate::masking::{exact_mask, local_mask, pi1_labels, pi_mask, unvisited_mask, Mask, MaskLevel};
use crate::training::{predictor_mask, PredictorParams};

/// Feature count per candidate, both variants.
pub const FEATURES: usize = 7;
pub type Features = [f64; FEATURES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub w: Features,
    pub temperature: f64,
}

impl Default for PolicyParams {
    fn default() -> Self {
        PolicyParams {
            w: [0.0; FEATURES],
            temperature: 1.0,
        }
    }
}

impl PolicyParams {
    pub fn validate(&self) -> Result<()> {
        if !self.w.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig("policy weights must be finite".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn logit(&self, phi: &Features) -> f64 {
        dot(&self.w, phi) / self.temperature
    }
}

#[inline]
pub(crate) fn dot(a: &Features, b: &Features) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Candidate features.
///
/// TSPTW: distance, window slack on arrival, waiting time, time left until
/// the window closes, fraction of customers remaining, local-feasibility
/// flag, bias. TSPDL: distance, draft slack after loading, draft, demand,
/// fraction remaining, flag, bias; draft quantities are divided by the total
/// demand.
pub fn features(state: &ConstructionState<'_>, c: usize) -> Features {
    let inst = state.instance();
    let cur = state.current();
    let dist = inst.dist(cur, c);
    let remaining = state.remaining() as f64 / inst.n() as f64;
    match inst {
        Instance::Tsptw(tw) => {
            let arrival = state.clock() + tw.travel(cur, c);
            let hi = tw.tw_hi()[c];
            let slack = hi - arrival;
            let wait = (tw.tw_lo()[c] - arrival).max(0.0);
            let flag = if arrival <= hi { 1.0 } else { 0.0 };
            [dist, slack, wait, hi - state.clock(), remaining, flag, 1.0]
        }
        Instance::Tspdl(dl) => {
            let total = dl.total_demand().max(1) as f64;
            let demand = dl.demand()[c];
            let draft = dl.draft()[c];
            let load = state.load() + demand;
            let slack = (draft as f64 - load as f64) / total;
            let flag = if load <= draft { 1.0 } else { 0.0 };
            [dist, slack, draft as f64 / total, demand as f64, remaining, flag, 1.0]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepChoice {
    pub node: usize,
    pub logprob: f64,
    pub score: Features,
}

/// Softmax distribution of the policy over the selectable candidates.
pub fn distribution(
    params: &PolicyParams,
    state: &ConstructionState<'_>,
    mask: &Mask,
) -> Result<Vec<(usize, f64, Features)>> {
    let mut cands: Vec<(usize, f64, Features)> = mask
        .nodes()
        .map(|c| {
            let phi = features(state, c);
            (c, params.logit(&phi), phi)
        })
        .collect();
    if cands.is_empty() {
        return Err(Error::EmptyMask);
    }
    let max = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = cands.iter().map(|c| (c.1 - max).exp()).sum();
    for c in &mut cands {
        c.1 = (c.1 - max).exp() / z;
    }
    Ok(cands)
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Samples a node from the masked softmax and returns its log-probability
/// and the score vector `d log pi / d w`.
pub fn policy_step<R: Rng + ?Sized>(
    params: &PolicyParams,
    state: &ConstructionState<'_>,
    mask: &Mask,
    rng: &mut R,
) -> Result<StepChoice> {
    choose(params, state, mask, Decode::Sample, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decode {
    #[default]
    Sample,
    /// Highest logit, lowest node index on ties.
    Greedy,
}

fn choose<R: Rng + ?Sized>(
    params: &PolicyParams,
    state: &ConstructionState<'_>,
    mask: &Mask,
    decode: Decode,
    rng: &mut R,
) -> Result<StepChoice> {
    let cands: Vec<usize> = mask.nodes().collect();
    if cands.is_empty() {
        return Err(Error::EmptyMask);
    }
    let phis: Vec<Features> = cands.iter().map(|&c| features(state, c)).collect();
    let logits: Vec<f64> = phis.iter().map(|phi| params.logit(phi)).collect();
    let lse = log_sum_exp(&logits);
    let probs: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();

    let pick = match decode {
        Decode::Greedy => {
            let mut best = 0;
            for k in 1..logits.len() {
                if logits[k] > logits[best] {
                    best = k;
                }
            }
            best
        }
        Decode::Sample => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = probs.len() - 1;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = k;
                    break;
                }
            }
            pick
        }
    };

    let mut mean = [0.0; FEATURES];
    for (p, phi) in probs.iter().zip(&phis) {
        for f in 0..FEATURES {
            mean[f] += p * phi[f];
        }
    }
    let mut score = [0.0; FEATURES];
    for f in 0..FEATURES {
        score[f] = (phis[pick][f] - mean[f]) / params.temperature;
    }
    Ok(StepChoice {
        node: cands[pick],
        logprob: logits[pick] - lse,
        score,
    })
}

/// Which mask guides construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    Pi0,
    Pi1,
    Pi2,
    Exact,
    Predicted,
}

impl MaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::Pi0 => "pi0",
            MaskMode::Pi1 => "pi1",
            MaskMode::Pi2 => "pi2",
            MaskMode::Exact => "exact",
            MaskMode::Predicted => "predicted",
        }
    }

    pub fn level(self) -> MaskLevel {
        match self {
            MaskMode::Pi0 => MaskLevel::Local,
            MaskMode::Pi1 => MaskLevel::Pi1,
            MaskMode::Pi2 => MaskLevel::Pi2,
            MaskMode::Exact => MaskLevel::Exact,
            MaskMode::Predicted => MaskLevel::Predicted,
        }
    }
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pi0" | "local" => Ok(MaskMode::Pi0),
            "pi1" => Ok(MaskMode::Pi1),
            "pi2" => Ok(MaskMode::Pi2),
            "exact" => Ok(MaskMode::Exact),
            "predicted" => Ok(MaskMode::Predicted),
            other => Err(Error::InvalidConfig(format!("unknown mask mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutOptions<'a> {
    pub mask: MaskMode,
    /// Required for [`MaskMode::Predicted`].
    pub predictor: Option<&'a PredictorParams>,
    pub decode: Decode,
    /// Record depth-1 lookahead labels of the locally feasible candidates.
    pub collect_labels: bool,
    /// Use the requested mask for the first `s` steps only, the local mask after.
    pub early_stop_steps: Option<usize>,
}

impl Default for RolloutOptions<'_> {
    fn default() -> Self {
        RolloutOptions {
            mask: MaskMode::Pi0,
            predictor: None,
            decode: Decode::Sample,
            collect_labels: false,
            early_stop_steps: None,
        }
    }
}

impl<'a> RolloutOptions<'a> {
    pub fn with_mask(mask: MaskMode) -> Self {
        RolloutOptions {
            mask,
            ..Default::default()
        }
    }
}

/// Locally feasible candidates of one decoding step with their lookahead
/// labels (`true` = removed by the depth-1 mask).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledStep {
    pub features: Vec<Features>,
    pub labels: Vec<bool>,
}

impl LabeledStep {
    pub fn counts(&self) -> (usize, usize) {
        let infeasible = self.labels.iter().filter(|&&g| g).count();
        (infeasible, self.labels.len() - infeasible)
    }
}

#[derive(Debug, Clone)]
pub struct RolloutTrace {
    pub tour: Tour,
    pub metrics: TourMetrics,
    pub logprobs: Vec<f64>,
    pub scores: Vec<Features>,
    pub labels: Vec<LabeledStep>,
    pub mask_level: MaskLevel,
    /// Steps where the requested mask was empty and the local (or, failing
    /// that, the unconstrained) mask was used instead.
    pub fallbacks: usize,
}

impl RolloutTrace {
    pub fn logprob(&self) -> f64 {
        self.logprobs.iter().sum()
    }

    /// Sum of per-step score vectors.
    pub fn total_score(&self) -> Features {
        let mut g = [0.0; FEATURES];
        for s in &self.scores {
            for f in 0..FEATURES {
                g[f] += s[f];
            }
        }
        g
    }
}

/// The mask used at one step, with the empty-mask fallback applied.
fn step_mask(
    state: &ConstructionState<'_>,
    options: &RolloutOptions<'_>,
    step: usize,
    local: &Mask,
    labels: Option<&[bool]>,
) -> Result<(Mask, bool)> {
    let requested = options.early_stop_steps.map_or(true, |s| step < s);
    let mask = if !requested {
        local.clone()
    } else {
        match options.mask {
            MaskMode::Pi0 => local.clone(),
            MaskMode::Pi1 => match labels {
                Some(labels) => {
                    let sel = local.selectable().iter().zip(labels).map(|(&s, &g)| s && !g).collect();
                    Mask::new(sel, MaskLevel::Pi1)
                }
                None => pi_mask(state, 1)?,
            },
            MaskMode::Pi2 => pi_mask(state, 2)?,
            MaskMode::Exact => exact_mask(state)?,
            MaskMode::Predicted => {
                let predictor = options
                    .predictor
                    .ok_or_else(|| Error::InvalidConfig("predicted masks need predictor parameters".into()))?;
                predictor_mask(predictor, state)
            }
        }
    };
    if !mask.is_empty() {
        return Ok((mask, false));
    }
    if !local.is_empty() {
        return Ok((local.clone(), true));
    }
    Ok((unvisited_mask(state), true))
}

/// Builds a full tour under the requested mask.
pub fn rollout<R: Rng + ?Sized>(
    params: &PolicyParams,
    instance: &Instance,
    options: &RolloutOptions<'_>,
    rng: &mut R,
) -> Result<RolloutTrace> {
    let n = instance.n();
    let mut state = ConstructionState::new(instance);
    let mut logprobs = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    let mut labels = Vec::new();
    let mut fallbacks = 0;
    for step in 0..n {
        let local = local_mask(&state);
        let pi1 = (options.collect_labels
            || (options.mask == MaskMode::Pi1 && options.early_stop_steps.map_or(true, |s| step < s)))
        .then(|| pi1_labels(&state, &local));
        if options.collect_labels {
            let g = pi1.as_ref().expect("labels computed");
            let mut rec = LabeledStep::default();
            for c in local.nodes() {
                rec.features.push(features(&state, c));
                rec.labels.push(g[c]);
            }
            labels.push(rec);
        }
        let (mask, fell_back) = step_mask(&state, options, step, &local, pi1.as_deref())?;
        fallbacks += fell_back as usize;
        let choice = choose(params, &state, &mask, options.decode, rng)?;
        logprobs.push(choice.logprob);
        scores.push(choice.score);
        state.step(choice.node)?;
    }
    let done = state.finalize()?;
    Ok(RolloutTrace {
        metrics: done.metrics(),
        tour: done.tour,
        logprobs,
        scores,
        labels,
        mask_level: options.mask.level(),
        fallbacks,
    })
}

/// Log-probability of a given tour under the policy, recomputing masks along
/// the way with the same fallback rule as [`rollout`].
pub fn replay_logprob(
    params: &PolicyParams,
    instance: &Instance,
    tour: &Tour,
    options: &RolloutOptions<'_>,
) -> Result<f64> {
    tour.validate(instance.size())?;
    let mut state = ConstructionState::new(instance);
    let mut total = 0.0;
    for (step, &node) in tour.nodes()[1..].iter().enumerate() {
        let local = local_mask(&state);
        let (mask, _) = step_mask(&state, options, step, &local, None)?;
        if !mask.is_selectable(node) {
            return Err(Error::InvalidTour(format!("node {node} is masked at step {step}")));
        }
        let logits: Vec<(usize, f64)> = mask.nodes().map(|c| (c, params.logit(&features(&state, c)))).collect();
        let values: Vec<f64> = logits.iter().map(|l| l.1).collect();
        let lse = log_sum_exp(&values);
        let chosen = logits.iter().find(|l| l.0 == node).expect("selectable").1;
        total += chosen - lse;
        state.step(node)?;
    }
    Ok(total)
}

/// Nearest unvisited node at every step (ties: lowest index). Constraint-blind.
pub fn greedy_l(instance: &Instance) -> Tour {
    let mut state = ConstructionState::new(instance);
    while !state.is_complete() {
        let cur = state.current();
        let next = state
            .unvisited()
            .min_by(|&a, &b| instance.dist(cur, a).total_cmp(&instance.dist(cur, b)).then(a.cmp(&b)))
            .expect("incomplete state has an unvisited node");
        state.step(next).expect("unvisited");
    }
    Tour(state.tour().to_vec())
}

/// Tightest constraint first: earliest window close (TSPTW; ties go to the
/// nearer node, then the lower index) or smallest draft limit (TSPDL; ties go
/// to the lower index).
pub fn greedy_c(instance: &Instance) -> Tour {
    let mut state = ConstructionState::new(instance);
    while !state.is_complete() {
        let cur = state.current();
        let next = match instance {
            Instance::Tsptw(tw) => state.unvisited().min_by(|&a, &b| {
                tw.tw_hi()[a]
                    .total_cmp(&tw.tw_hi()[b])
                    .then(tw.dist(cur, a).total_cmp(&tw.dist(cur, b)))
                    .then(a.cmp(&b))
            }),
            Instance::Tspdl(dl) => state.unvisited().min_by_key(|&j| (dl.draft()[j], j)),
        }
        .expect("incomplete state has an unvisited node");
        state.step(next).expect("unvisited");
    }
    Tour(state.tour().to_vec())
}

/// Saved policy (and optional predictor).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub variant: Variant,
    pub w: Vec<f64>,
    pub temperature: f64,
    pub predictor_w: Option<Vec<f64>>,
    #[serde(default)]
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(variant: Variant, policy: &PolicyParams, predictor: Option<&PredictorParams>) -> Self {
        let mut meta = serde_json::Map::new();
        if let Some(p) = predictor {
            meta.insert("predictor_threshold".into(), p.threshold.into());
        }
        Checkpoint {
            variant,
            w: policy.w.to_vec(),
            temperature: policy.temperature,
            predictor_w: predictor.map(|p| p.v.to_vec()),
            meta,
        }
    }

    pub fn policy(&self) -> Result<PolicyParams> {
        let w: Features = self.w.as_slice().try_into().map_err(|_| {
            Error::InvalidConfig(format!("checkpoint has {} weights, expected {FEATURES}", self.w.len()))
        })?;
        let p = PolicyParams {
            w,
            temperature: self.temperature,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn predictor(&self) -> Result<Option<PredictorParams>> {
        let Some(v) = &self.predictor_w else {
            return Ok(None);
        };
        let v: Features = v
            .as_slice()
            .try_into()
            .map_err(|_| Error::InvalidConfig(format!("predictor has {} weights, expected {FEATURES}", v.len())))?;
        let threshold = self
            .meta
            .get("predictor_threshold")
            .and_then(|t| t.as_f64())
            .unwrap_or(PredictorParams::DEFAULT_THRESHOLD);
        let p = PredictorParams { v, threshold };
        p.validate()?;
        Ok(Some(p))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
