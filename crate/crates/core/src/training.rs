//! REINFORCE on the Lagrangian reward with a shared mean baseline, the
//! logistic mask predictor trained by weighted binary cross-entropy, and the
//! periodic predictor-refresh schedule.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::ConstructionState;
use crate::error::{Error, Result};
use crate::instances::{generate_set, Hardness, Instance, Variant};
use crate::masking::{local_mask, Mask, MaskLevel};
use crate::policy::{
    dot, features, rollout, Decode, Features, LabeledStep, MaskMode, PolicyParams, RolloutOptions, RolloutTrace,
    FEATURES,
};
use crate::seeding::derive_seed;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic model predicting, per locally feasible candidate, whether the
/// depth-1 lookahead would mask it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorParams {
    pub v: Features,
    pub threshold: f64,
}

impl Default for PredictorParams {
    fn default() -> Self {
        PredictorParams {
            v: [0.0; FEATURES],
            threshold: Self::DEFAULT_THRESHOLD,
        }
    }
}

impl PredictorParams {
    pub const DEFAULT_THRESHOLD: f64 = 0.5;

    pub fn validate(&self) -> Result<()> {
        if !self.v.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidConfig("predictor weights must be finite".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "predictor threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn prob(&self, phi: &Features) -> f64 {
        sigmoid(dot(&self.v, phi))
    }

    /// Strict comparison: an all-zero predictor (p = 0.5) masks nothing.
    #[inline]
    pub fn predicts_infeasible(&self, phi: &Features) -> bool {
        self.prob(phi) > self.threshold
    }
}

/// Local mask minus the candidates the predictor flags.
pub fn predictor_mask(predictor: &PredictorParams, state: &ConstructionState<'_>) -> Mask {
    let mut sel = local_mask(state).selectable().to_vec();
    for (c, s) in sel.iter_mut().enumerate() {
        if *s && predictor.predicts_infeasible(&features(state, c)) {
            *s = false;
        }
    }
    Mask::new(sel, MaskLevel::Predicted)
}

/// Balancing weights `(w_infsb, w_fsb)`; an absent class gets weight 0 and
/// the present one weight 1.
pub fn class_weights(n_infsb: usize, n_fsb: usize) -> Result<(f64, f64)> {
    match (n_infsb, n_fsb) {
        (0, 0) => Err(Error::InvalidConfig("class weights need at least one sample".into())),
        (0, _) => Ok((0.0, 1.0)),
        (_, 0) => Ok((1.0, 0.0)),
        (i, f) => {
            let total = (i + f) as f64;
            Ok((total / (2.0 * i as f64), total / (2.0 * f as f64)))
        }
    }
}

/// Mean weighted BCE over one group of candidates.
pub fn wbce_loss_group(v: &Features, features: &[Features], labels: &[bool], weights: (f64, f64)) -> f64 {
    let mut loss = 0.0;
    for (phi, &g) in features.iter().zip(labels) {
        let z = dot(v, phi);
        // log sigmoid(z) and log(1 - sigmoid(z)) without cancellation
        let log_p = -softplus(-z);
        let log_q = -softplus(z);
        loss -= if g { weights.0 * log_p } else { weights.1 * log_q };
    }
    loss / features.len().max(1) as f64
}

/// Gradient of [`wbce_loss_group`] with respect to `v`.
pub fn wbce_grad_group(v: &Features, features: &[Features], labels: &[bool], weights: (f64, f64)) -> Features {
    let mut grad = [0.0; FEATURES];
    for (phi, &g) in features.iter().zip(labels) {
        let p = sigmoid(dot(v, phi));
        let coef = if g { -weights.0 * (1.0 - p) } else { weights.1 * p };
        for f in 0..FEATURES {
            grad[f] += coef * phi[f];
        }
    }
    let m = features.len().max(1) as f64;
    grad.map(|g| g / m)
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn labeled(steps: &[LabeledStep]) -> impl Iterator<Item = (&LabeledStep, (f64, f64))> {
    steps.iter().filter(|s| !s.labels.is_empty()).map(|s| {
        let (i, f) = s.counts();
        (s, class_weights(i, f).expect("nonempty step"))
    })
}

/// Weighted BCE averaged over candidates within each step, then over steps;
/// class weights come from each step's own label counts.
pub fn wbce_loss(v: &Features, steps: &[LabeledStep]) -> f64 {
    let mut total = 0.0;
    let mut t = 0usize;
    for (s, w) in labeled(steps) {
        total += wbce_loss_group(v, &s.features, &s.labels, w);
        t += 1;
    }
    if t == 0 {
        0.0
    } else {
        total / t as f64
    }
}

pub fn wbce_grad(v: &Features, steps: &[LabeledStep]) -> Features {
    let mut grad = [0.0; FEATURES];
    let mut t = 0usize;
    for (s, w) in labeled(steps) {
        let g = wbce_grad_group(v, &s.features, &s.labels, w);
        for f in 0..FEATURES {
            grad[f] += g[f];
        }
        t += 1;
    }
    if t == 0 {
        grad
    } else {
        grad.map(|g| g / t as f64)
    }
}

/// Per-class recall of a predictor on labeled candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Recall {
    pub feasible: f64,
    pub infeasible: f64,
    pub n_feasible: usize,
    pub n_infeasible: usize,
}

pub fn predictor_recall(predictor: &PredictorParams, samples: &[(Features, bool)]) -> Recall {
    let (mut hit_f, mut hit_i, mut n_f, mut n_i) = (0usize, 0usize, 0usize, 0usize);
    for (phi, g) in samples {
        let flagged = predictor.predicts_infeasible(phi);
        if *g {
            n_i += 1;
            hit_i += flagged as usize;
        } else {
            n_f += 1;
            hit_f += (!flagged) as usize;
        }
    }
    let ratio = |h: usize, n: usize| if n == 0 { 1.0 } else { h as f64 / n as f64 };
    Recall {
        feasible: ratio(hit_f, n_f),
        infeasible: ratio(hit_i, n_i),
        n_feasible: n_f,
        n_infeasible: n_i,
    }
}

/// Predictor-update epochs: the first `e_init`, the first `e_u` of every
/// `e_p`-epoch window in between, and the last `e_l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub e_init: usize,
    pub e_p: usize,
    pub e_u: usize,
    pub e_l: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            e_init: 10,
            e_p: 10,
            e_u: 2,
            e_l: 5,
        }
    }
}

impl Schedule {
    pub fn validate(&self, epochs: usize) -> Result<()> {
        if self.e_p == 0 {
            return Err(Error::InvalidConfig("schedule period must be positive".into()));
        }
        if self.e_u > self.e_p {
            return Err(Error::InvalidConfig("refresh epochs exceed the period".into()));
        }
        if self.e_init + self.e_l > epochs {
            return Err(Error::InvalidConfig(format!(
                "initial ({}) plus final ({}) update epochs exceed the {epochs} epochs",
                self.e_init, self.e_l
            )));
        }
        Ok(())
    }

    pub fn is_update_epoch(&self, epoch: usize, epochs: usize) -> bool {
        epoch < self.e_init || epoch + self.e_l >= epochs || (epoch - self.e_init) % self.e_p < self.e_u
    }

    pub fn update_epochs(&self, epochs: usize) -> Vec<usize> {
        (0..epochs).filter(|&e| self.is_update_epoch(e, epochs)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub n: usize,
    pub hardness: Hardness,
    pub lambda: f64,
    /// Samples per instance.
    pub k: usize,
    pub lr_policy: f64,
    pub lr_predictor: f64,
    /// Predictor gradient steps on each batch of collected labels.
    pub predictor_steps: usize,
    /// Instances per update.
    pub batch: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    pub schedule: Schedule,
    pub alpha_mix: f64,
    pub beta_mix: f64,
    pub mask_mode: MaskMode,
    pub early_stop_steps: Option<usize>,
    pub temperature: f64,
    pub predictor_threshold: f64,
    /// Labeled candidates in the held-out pool used to pick the best predictor.
    pub holdout_samples: usize,
    /// Minimum infeasible-class recall a predictor needs before feasible-class
    /// recall decides between candidates.
    pub recall_floor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Tsptw,
            n: 20,
            hardness: Hardness::Medium,
            lambda: 1.0,
            k: 8,
            lr_policy: 1.0,
            lr_predictor: 4.0,
            predictor_steps: 20,
            batch: 32,
            batches_per_epoch: 4,
            epochs: 100,
            schedule: Schedule::default(),
            alpha_mix: 1.0,
            beta_mix: 1.0,
            mask_mode: MaskMode::Pi0,
            early_stop_steps: None,
            temperature: 1.0,
            predictor_threshold: PredictorParams::DEFAULT_THRESHOLD,
            holdout_samples: 10_000,
            recall_floor: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::NegativeMultiplier(self.lambda));
        }
        if self.k < 2 {
            return bad(format!("need at least 2 samples per instance, got {}", self.k));
        }
        for (name, v) in [
            ("lr_policy", self.lr_policy),
            ("lr_predictor", self.lr_predictor),
            ("temperature", self.temperature),
            ("alpha_mix", self.alpha_mix),
            ("beta_mix", self.beta_mix),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.batch == 0 || self.batches_per_epoch == 0 || self.predictor_steps == 0 {
            return bad("batch sizes must be positive".into());
        }
        if self.n == 0 {
            return bad("instances need at least one customer".into());
        }
        if !(self.predictor_threshold > 0.0 && self.predictor_threshold < 1.0) {
            return bad(format!(
                "predictor threshold must lie in (0, 1), got {}",
                self.predictor_threshold
            ));
        }
        if self.mask_mode == MaskMode::Predicted {
            return bad("rollout mask `predicted` is driven by the pipd mode, not the config".into());
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Instances of one batch, freshly generated from `(seed, epoch, batch)`.
    pub fn batch_instances(&self, epoch: usize, batch: usize) -> Result<Vec<Instance>> {
        let seed = derive_seed(self.seed, &[0, epoch as u64, batch as u64]);
        generate_set(self.variant, self.n, self.hardness, self.batch, seed)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct BatchStats {
    pub mean_reward: f64,
    pub solutions: usize,
    pub infeasible_solutions: usize,
    pub instances: usize,
    pub infeasible_instances: usize,
}

impl BatchStats {
    fn merge(&mut self, other: &BatchStats) {
        let total = self.solutions + other.solutions;
        if total > 0 {
            self.mean_reward =
                (self.mean_reward * self.solutions as f64 + other.mean_reward * other.solutions as f64) / total as f64;
        }
        self.solutions = total;
        self.infeasible_solutions += other.infeasible_solutions;
        self.instances += other.instances;
        self.infeasible_instances += other.infeasible_instances;
    }
}

/// Result of one policy-gradient step.
#[derive(Debug, Clone)]
pub struct Update {
    pub params: PolicyParams,
    pub gradient: Features,
    pub stats: BatchStats,
    pub labels: Vec<LabeledStep>,
    /// Sampled traces, grouped by instance.
    pub traces: Vec<Vec<RolloutTrace>>,
}

/// Per-instance estimator `(1/K) sum_i (R_i - b) sum_t score_t` with `b` the
/// mean of the K rewards.
pub fn instance_gradient(traces: &[RolloutTrace], lambda: f64) -> Features {
    let k = traces.len() as f64;
    let rewards: Vec<f64> = traces.iter().map(|t| t.metrics.reward(lambda)).collect();
    let baseline = rewards.iter().sum::<f64>() / k;
    let mut grad = [0.0; FEATURES];
    for (t, r) in traces.iter().zip(&rewards) {
        let adv = r - baseline;
        let s = t.total_score();
        for f in 0..FEATURES {
            grad[f] += adv * s[f];
        }
    }
    grad.map(|g| g / k)
}

/// Draws `config.k` rollouts per instance, ascends the batch-averaged
/// gradient by `lr_policy * alpha_mix`. Rollout streams derive from
/// `(seed, epoch, batch, instance, sample)`.
#[allow(clippy::too_many_arguments)]
pub fn reinforce_update(
    params: &PolicyParams,
    batch: &[Instance],
    config: &TrainConfig,
    mask_mode: MaskMode,
    predictor: Option<&PredictorParams>,
    collect_labels: bool,
    epoch: usize,
    batch_idx: usize,
) -> Result<Update> {
    if config.k < 2 {
        return Err(Error::InvalidConfig(
            "the shared baseline needs at least 2 samples".into(),
        ));
    }
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let options = RolloutOptions {
        mask: mask_mode,
        predictor,
        decode: Decode::Sample,
        collect_labels,
        early_stop_steps: config.early_stop_steps,
    };
    let traces: Vec<Vec<RolloutTrace>> = batch
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            (0..config.k)
                .map(|s| {
                    let seed = derive_seed(config.seed, &[1, epoch as u64, batch_idx as u64, i as u64, s as u64]);
                    rollout(params, inst, &options, &mut ChaCha8Rng::seed_from_u64(seed))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut gradient = [0.0; FEATURES];
    let mut stats = BatchStats::default();
    let mut reward_sum = 0.0;
    for group in &traces {
        let g = instance_gradient(group, config.lambda);
        for f in 0..FEATURES {
            gradient[f] += g[f];
        }
        stats.instances += 1;
        stats.solutions += group.len();
        let infeasible = group.iter().filter(|t| !t.metrics.feasible).count();
        stats.infeasible_solutions += infeasible;
        stats.infeasible_instances += (infeasible == group.len()) as usize;
        reward_sum += group.iter().map(|t| t.metrics.reward(config.lambda)).sum::<f64>();
    }
    stats.mean_reward = reward_sum / stats.solutions as f64;
    let gradient = gradient.map(|g| g / batch.len() as f64);
    let step = config.lr_policy * config.alpha_mix;
    let mut next = params.clone();
    for f in 0..FEATURES {
        next.w[f] += step * gradient[f];
    }
    let labels = if collect_labels {
        traces
            .iter()
            .flat_map(|g| g.iter().flat_map(|t| t.labels.iter().cloned()))
            .collect()
    } else {
        Vec::new()
    };
    Ok(Update {
        params: next,
        gradient,
        stats,
        labels,
        traces,
    })
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_reward: f64,
    pub sol_infsb: f64,
    pub inst_infsb: f64,
    pub predictor_acc_fsb: Option<f64>,
    pub predictor_acc_infsb: Option<f64>,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: PolicyParams,
    pub predictor: Option<PredictorParams>,
    pub log: Vec<EpochLog>,
    /// Epochs in which the predictor was trained on ground-truth labels.
    pub update_epochs: Vec<usize>,
}

impl TrainOutcome {
    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        for line in &self.log {
            text.push_str(&serde_json::to_string(line)?);
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

fn initial_policy(config: &TrainConfig) -> PolicyParams {
    PolicyParams {
        w: [0.0; FEATURES],
        temperature: config.temperature,
    }
}

fn epoch_log(epoch: usize, stats: &BatchStats, recall: Option<Recall>, wall_s: f64) -> EpochLog {
    EpochLog {
        epoch,
        mean_reward: stats.mean_reward,
        sol_infsb: stats.infeasible_solutions as f64 / stats.solutions.max(1) as f64,
        inst_infsb: stats.infeasible_instances as f64 / stats.instances.max(1) as f64,
        predictor_acc_fsb: recall.map(|r| r.feasible),
        predictor_acc_infsb: recall.map(|r| r.infeasible),
        wall_s,
    }
}

fn train_policy(init: PolicyParams, config: &TrainConfig, mask_mode: MaskMode) -> Result<TrainOutcome> {
    config.validate()?;
    let mut params = init;
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let mut stats = BatchStats::default();
        for b in 0..config.batches_per_epoch {
            let batch = config.batch_instances(epoch, b)?;
            let up = reinforce_update(&params, &batch, config, mask_mode, None, false, epoch, b)?;
            params = up.params;
            stats.merge(&up.stats);
        }
        log.push(epoch_log(epoch, &stats, None, started.elapsed().as_secs_f64()));
    }
    Ok(TrainOutcome {
        policy: params,
        predictor: None,
        log,
        update_epochs: Vec::new(),
    })
}

/// Lagrangian-reward training under `config.mask_mode` (no lookahead by default).
pub fn train_lagrangian(config: &TrainConfig) -> Result<TrainOutcome> {
    train_policy(initial_policy(config), config, config.mask_mode)
}

/// Lagrangian-reward training with ground-truth depth-1 lookahead masks.
pub fn train_pip(config: &TrainConfig) -> Result<TrainOutcome> {
    train_policy(initial_policy(config), config, MaskMode::Pi1)
}

/// Continues a pretrained policy with depth-1 lookahead masks for `config.epochs`.
pub fn fine_tune(pretrained: &PolicyParams, config: &TrainConfig) -> Result<TrainOutcome> {
    pretrained.validate()?;
    train_policy(pretrained.clone(), config, MaskMode::Pi1)
}

/// Labeled candidates from rollouts of `policy` on held-out instances.
pub fn holdout_pool(policy: &PolicyParams, config: &TrainConfig, window: usize) -> Result<Vec<(Features, bool)>> {
    let options = RolloutOptions {
        mask: MaskMode::Pi1,
        collect_labels: true,
        early_stop_steps: config.early_stop_steps,
        ..Default::default()
    };
    let mut pool = Vec::with_capacity(config.holdout_samples);
    let mut round = 0u64;
    while pool.len() < config.holdout_samples {
        let seed = derive_seed(config.seed, &[2, window as u64, round]);
        let insts = generate_set(config.variant, config.n, config.hardness, 16, seed)?;
        let traces: Vec<RolloutTrace> = insts
            .par_iter()
            .enumerate()
            .map(|(i, inst)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
                rollout(policy, inst, &options, &mut rng)
            })
            .collect::<Result<_>>()?;
        let before = pool.len();
        for t in &traces {
            for s in &t.labels {
                pool.extend(s.features.iter().copied().zip(s.labels.iter().copied()));
            }
        }
        if pool.len() == before {
            break;
        }
        round += 1;
    }
    pool.truncate(config.holdout_samples);
    Ok(pool)
}

/// Ranking of predictors on a common pool: meeting the infeasible-recall floor
/// first, then feasible recall, then infeasible recall.
fn better(a: &Recall, b: &Recall, floor: f64) -> bool {
    let key = |r: &Recall| {
        let ok = r.infeasible >= floor;
        (ok, if ok { r.feasible } else { r.infeasible }, r.infeasible)
    };
    let (ka, kb) = (key(a), key(b));
    (ka.0, ka.1, ka.2) > (kb.0, kb.1, kb.2)
}

/// Joint training of the policy and the mask predictor under the periodic
/// schedule: update epochs roll out with ground-truth masks and fit the
/// predictor; other epochs roll out with the best predictor so far, frozen.
pub fn train_pipd(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    config.schedule.validate(config.epochs)?;
    let mut params = initial_policy(config);
    let mut predictor = PredictorParams {
        threshold: config.predictor_threshold,
        ..Default::default()
    };
    let mut best: Option<(PredictorParams, Recall)> = None;
    let mut log = Vec::with_capacity(config.epochs);
    let update_epochs = config.schedule.update_epochs(config.epochs);
    let pred_step = config.lr_predictor * config.beta_mix;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let update = config.schedule.is_update_epoch(epoch, config.epochs);
        let mut stats = BatchStats::default();
        for b in 0..config.batches_per_epoch {
            let batch = config.batch_instances(epoch, b)?;
            let up = if update {
                reinforce_update(&params, &batch, config, MaskMode::Pi1, None, true, epoch, b)?
            } else {
                let frozen = best.as_ref().map(|b| &b.0).unwrap_or(&predictor);
                reinforce_update(
                    &params,
                    &batch,
                    config,
                    MaskMode::Predicted,
                    Some(frozen),
                    false,
                    epoch,
                    b,
                )?
            };
            if update {
                for _ in 0..config.predictor_steps {
                    let g = wbce_grad(&predictor.v, &up.labels);
                    for f in 0..FEATURES {
                        predictor.v[f] -= pred_step * g[f];
                    }
                }
            }
            params = up.params;
            stats.merge(&up.stats);
        }
        // epoch time excludes the held-out predictor selection
        let wall_s = started.elapsed().as_secs_f64();
        let closes_window = update && !config.schedule.is_update_epoch(epoch + 1, config.epochs);
        let last = epoch + 1 == config.epochs;
        let mut recall = best.as_ref().map(|b| b.1);
        if closes_window || (update && last) {
            let pool = holdout_pool(&params, config, epoch)?;
            let current = predictor_recall(&predictor, &pool);
            best = match best.take() {
                Some((p, _)) => {
                    let incumbent = predictor_recall(&p, &pool);
                    if better(&incumbent, &current, config.recall_floor) {
                        Some((p, incumbent))
                    } else {
                        Some((predictor.clone(), current))
                    }
                }
                None => Some((predictor.clone(), current)),
            };
            recall = best.as_ref().map(|b| b.1);
        }
        log.push(epoch_log(epoch, &stats, recall, wall_s));
    }
    let chosen = best.map(|b| b.0).unwrap_or(predictor);
    Ok(TrainOutcome {
        policy: params,
        predictor: Some(chosen),
        log,
        update_epochs,
    })
}
