//! Deterministic three-stage training: continual pre-training, balanced
//! fine-tuning and preference optimisation, driven by AdamW under a cosine
//! schedule.
//!
//! Everything here is a pure function of (config, data, initial model):
//! batch order comes from a ChaCha stream keyed by `(seed, epoch)` and all
//! reductions run in a fixed order.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CptSequence;
use crate::losses::{self, Completion, LossError, PreferenceBatch, PreferenceTriple, DEFAULT_BETA};
use crate::model::{ModelError, ModelFile, PolicyModel, Vocab};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    BadConfig(String),
    #[error("config is for the {config} stage but the data is for {data}")]
    StageMismatch { config: Stage, data: Stage },
    #[error("the preference stage needs a frozen reference model")]
    MissingReference,
    #[error("item {index}: {reason}")]
    InvalidItem { index: usize, reason: String },
    #[error("non-finite gradient at step {step}, parameter {index} (loss {loss})")]
    NonFiniteGradient { step: usize, index: usize, loss: f64 },
    #[error("checkpoint does not match this run: {0}")]
    ResumeMismatch(String),
    #[error("{stage} stage failed: {source}")]
    StageFailed {
        stage: Stage,
        #[source]
        source: Box<TrainError>,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Cpt,
    Sft,
    Dpo,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Cpt, Stage::Sft, Stage::Dpo];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Cpt => "cpt",
            Stage::Sft => "sft",
            Stage::Dpo => "dpo",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| TrainError::BadConfig(format!("unknown stage `{s}` (expected cpt, sft or dpo)")))
    }
}

/// Per-stage optimisation settings. `batch_size` is the micro-batch; one
/// optimizer step consumes `batch_size * grad_accum_steps` items.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainConfig {
    pub stage: Stage,
    pub lr: f64,
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    pub epochs: usize,
    pub warmup_steps: usize,
    pub cutoff_len: usize,
    pub beta: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Checkpoint cadence in optimizer steps; 0 disables intermediate saves.
    pub save_steps: usize,
}

impl TrainConfig {
    /// Small-model defaults. The learning rate is raised to 1e-3 because a
    /// model with a few thousand parameters barely moves at 1e-5.
    pub fn desk(stage: Stage) -> Self {
        let (batch_size, epochs, cutoff_len) = match stage {
            Stage::Cpt => (8, 2, 128),
            Stage::Sft => (4, 3, 128),
            Stage::Dpo => (4, 10, 64),
        };
        TrainConfig {
            stage,
            lr: 1e-3,
            batch_size,
            grad_accum_steps: 1,
            epochs,
            warmup_steps: 0,
            cutoff_len,
            beta: DEFAULT_BETA,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            save_steps: 0,
        }
    }

    /// The full-scale settings, kept for reference; not runnable on the toy
    /// model in reasonable time.
    pub fn published_profile(stage: Stage) -> Self {
        let (batch_size, grad_accum_steps, epochs, cutoff_len, save_steps) = match stage {
            Stage::Cpt => (64, 16, 2, 2048, 500),
            Stage::Sft => (8, 8, 3, 2048, 50),
            Stage::Dpo => (8, 1, 10, 1024, 0),
        };
        TrainConfig {
            lr: 1e-5,
            batch_size,
            grad_accum_steps,
            epochs,
            cutoff_len,
            save_steps,
            ..TrainConfig::desk(stage)
        }
    }

    /// Parses a flat `key = value` TOML file. Absent keys take the desk
    /// default for the declared stage.
    pub fn from_toml(text: &str) -> Result<Self, TrainError> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut c = TrainConfig::desk(raw.stage);
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = raw.$f { c.$f = v; })* };
        }
        take!(lr, batch_size, grad_accum_steps, epochs, warmup_steps, cutoff_len, beta, seed);
        take!(adam_beta1, adam_beta2, adam_eps, weight_decay, save_steps);
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::BadConfig(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 || self.cutoff_len == 0 {
            return bad("batch_size, grad_accum_steps and cutoff_len must be at least 1".into());
        }
        if self.stage == Stage::Dpo && !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        let ok = self.adam_eps > 0.0 && self.weight_decay >= 0.0;
        if !ok {
            return bad("adam_eps must be positive and weight_decay non-negative".into());
        }
        Ok(())
    }

    pub fn items_per_step(&self) -> usize {
        self.batch_size * self.grad_accum_steps
    }

    pub fn steps_per_epoch(&self, items: usize) -> usize {
        items.div_ceil(self.items_per_step())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    stage: Stage,
    lr: Option<f64>,
    batch_size: Option<usize>,
    grad_accum_steps: Option<usize>,
    epochs: Option<usize>,
    warmup_steps: Option<usize>,
    cutoff_len: Option<usize>,
    beta: Option<f64>,
    seed: Option<u64>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_eps: Option<f64>,
    weight_decay: Option<f64>,
    save_steps: Option<usize>,
}

/// Linear warmup to `base_lr`, then half-cosine decay reaching 0 at
/// `total_steps`. `step` counts optimizer steps already taken.
pub fn cosine_lr(step: usize, total_steps: usize, base_lr: f64, warmup: usize) -> Result<f64, TrainError> {
    if total_steps == 0 {
        return Err(TrainError::BadConfig("schedule needs at least one step".into()));
    }
    if step > total_steps || warmup > total_steps {
        return Err(TrainError::BadConfig(format!(
            "step {step} / warmup {warmup} beyond {total_steps} total steps"
        )));
    }
    if step < warmup {
        return Ok(base_lr * step as f64 / warmup as f64);
    }
    let progress = if total_steps == warmup {
        1.0
    } else {
        (step - warmup) as f64 / (total_steps - warmup) as f64
    };
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// First and second moment estimates plus the number of updates applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One AdamW update with decoupled weight decay and bias correction.
pub fn adamw_step(
    theta: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    assert_eq!(theta.len(), grad.len(), "parameter/gradient length");
    assert_eq!(theta.len(), state.m.len(), "parameter/moment length");
    if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { step: state.t as usize, index, loss: f64::NAN });
    }
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        theta[i] -= lr * config.weight_decay * theta[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + config.adam_eps);
    }
    Ok(())
}

/// A fine-tuning example: the detection item (prompt → label token) and the
/// explanation item (prompt → explanation tokens) for the same contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftPair {
    pub detect: Completion,
    pub explain: Completion,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StageData {
    Cpt(Vec<CptSequence>),
    Sft(Vec<SftPair>),
    Dpo(Vec<PreferenceTriple>),
}

impl StageData {
    pub fn stage(&self) -> Stage {
        match self {
            StageData::Cpt(_) => Stage::Cpt,
            StageData::Sft(_) => Stage::Sft,
            StageData::Dpo(_) => Stage::Dpo,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            StageData::Cpt(v) => v.len(),
            StageData::Sft(v) => v.len(),
            StageData::Dpo(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check(&self, limit: usize, vocab_size: usize) -> Result<(), TrainError> {
        let fits = |index: usize, prompt: &[u32], target: &[u32]| {
            let n = prompt.len() + target.len();
            if n > limit {
                return Err(TrainError::InvalidItem { index, reason: format!("{n} tokens exceed the limit of {limit}") });
            }
            if let Some(t) = prompt.iter().chain(target).find(|&&t| t as usize >= vocab_size) {
                return Err(TrainError::InvalidItem { index, reason: format!("token {t} outside vocabulary of {vocab_size}") });
            }
            Ok(())
        };
        match self {
            StageData::Cpt(v) => v.iter().enumerate().try_for_each(|(i, s)| fits(i, &[], &s.tokens)),
            StageData::Sft(v) => v.iter().enumerate().try_for_each(|(i, p)| {
                if p.detect.target.len() != 1 {
                    return Err(TrainError::InvalidItem { index: i, reason: "detection target must be one token".into() });
                }
                fits(i, &p.detect.prompt, &p.detect.target)?;
                fits(i, &p.explain.prompt, &p.explain.target)
            }),
            StageData::Dpo(v) => v.iter().enumerate().try_for_each(|(i, t)| {
                if t.chosen == t.rejected {
                    return Err(TrainError::InvalidItem { index: i, reason: "chosen equals rejected".into() });
                }
                fits(i, &t.prompt, &t.chosen)?;
                fits(i, &t.prompt, &t.rejected)
            }),
        }
    }
}

/// Model snapshot plus everything needed to continue the run bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub stage: Stage,
    /// Optimizer steps completed in this stage.
    pub step: usize,
    /// Mean loss over the steps completed so far.
    pub running_loss: f64,
    pub model: ModelFile,
    pub optimizer: AdamState,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let all = self.model.params.iter().chain(&self.optimizer.m).chain(&self.optimizer.v);
        if let Some(i) = all.into_iter().position(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite(i).into());
        }
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }

    pub fn policy(&self) -> Result<PolicyModel, TrainError> {
        Ok(self.model.clone().into_model()?.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    pub stage: Stage,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    /// One point per optimizer step.
    pub curve: Vec<LossPoint>,
    pub final_loss: Option<f64>,
    pub wall_time_ms: u128,
    /// Preference stage: mean reward margin on the training triples after
    /// each epoch.
    pub epoch_margins: Vec<f64>,
    /// Stage-specific held-out diagnostic before and after training: mean
    /// loss for pre-training and fine-tuning, log-likelihood margin for the
    /// preference stage.
    pub heldout_before: Option<f64>,
    pub heldout_after: Option<f64>,
}

impl StageReport {
    pub fn curve_csv(&self) -> String {
        let mut out = String::new();
        for p in &self.curve {
            out.push_str(&format!("{},{},{},{}\n", p.step, p.stage, p.loss, p.lr));
        }
        out
    }
}

pub const CURVE_CSV_HEADER: &str = "step,stage,loss,lr\n";

/// Optional behaviour of a stage run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where cadence checkpoints go (`{stage}-step{N}.json`).
    pub checkpoint_dir: Option<PathBuf>,
    /// Continue from a saved checkpoint of the same stage and config.
    pub resume: Option<Checkpoint>,
    /// Data for the held-out diagnostic; must match the stage.
    pub heldout: Option<StageData>,
    /// Vocabulary stored alongside the parameters in checkpoints.
    pub vocab: Option<Vocab>,
}

/// Mean over triples of `log π(y_w|x) − log π(y_l|x)`, minus the same
/// quantity under `reference` when given (i.e. the implied reward margin
/// divided by β).
pub fn preference_margin(
    model: &PolicyModel,
    reference: Option<&PolicyModel>,
    triples: &[PreferenceTriple],
) -> Result<f64, TrainError> {
    if triples.is_empty() {
        return Err(LossError::EmptyBatch("preference").into());
    }
    let mut sum = 0.0;
    for t in triples {
        let mut m = model.sequence_logprob(&t.prompt, &t.chosen)? - model.sequence_logprob(&t.prompt, &t.rejected)?;
        if let Some(r) = reference {
            m -= r.sequence_logprob(&t.prompt, &t.chosen)? - r.sequence_logprob(&t.prompt, &t.rejected)?;
        }
        sum += m;
    }
    Ok(sum / triples.len() as f64)
}

/// Mean objective value of `data` without gradients (gradients are computed
/// anyway by the loss functions; this is a diagnostic path).
fn evaluate(
    model: &PolicyModel,
    reference: Option<&PolicyModel>,
    data: &StageData,
    beta: f64,
) -> Result<f64, TrainError> {
    Ok(match data {
        StageData::Cpt(v) => {
            let seqs: Vec<Vec<u32>> = v.iter().map(|s| s.tokens.clone()).collect();
            losses::cpt_loss(model, &seqs)?.loss
        }
        StageData::Sft(v) => {
            let (d, e): (Vec<_>, Vec<_>) = v.iter().map(|p| (p.detect.clone(), p.explain.clone())).unzip();
            losses::sft_loss(model, &d, &e)?.loss
        }
        StageData::Dpo(v) => match reference {
            Some(r) => losses::dpo_loss(model, r, &PreferenceBatch { triples: v.clone(), beta })?.loss,
            None => return Err(TrainError::MissingReference),
        },
    })
}

fn heldout_metric(model: &PolicyModel, reference: Option<&PolicyModel>, data: &StageData, beta: f64) -> Result<f64, TrainError> {
    match data {
        StageData::Dpo(v) => preference_margin(model, None, v),
        other => evaluate(model, reference, other, beta),
    }
}

/// Loss and gradient of one micro-batch given by `idx`.
fn micro_batch(
    model: &PolicyModel,
    data: &StageData,
    ref_lp: &[(f64, f64)],
    idx: &[usize],
    beta: f64,
) -> Result<losses::LossOutput, TrainError> {
    Ok(match data {
        StageData::Cpt(v) => {
            let seqs: Vec<Vec<u32>> = idx.iter().map(|&i| v[i].tokens.clone()).collect();
            losses::cpt_loss(model, &seqs)?
        }
        StageData::Sft(v) => {
            let d: Vec<Completion> = idx.iter().map(|&i| v[i].detect.clone()).collect();
            let e: Vec<Completion> = idx.iter().map(|&i| v[i].explain.clone()).collect();
            losses::sft_loss(model, &d, &e)?
        }
        StageData::Dpo(v) => {
            let batch = PreferenceBatch { triples: idx.iter().map(|&i| v[i].clone()).collect(), beta };
            let lp: Vec<(f64, f64)> = idx.iter().map(|&i| ref_lp[i]).collect();
            losses::dpo_loss_with_reference(model, &lp, &batch)?
        }
    })
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    order
}

/// Trains `model` for one stage. For the preference stage `reference` must
/// be the frozen fine-tuned snapshot; it is only read.
pub fn run_stage(
    config: &TrainConfig,
    data: &StageData,
    model: PolicyModel,
    reference: Option<&PolicyModel>,
    opts: &RunOptions,
) -> Result<(Checkpoint, StageReport), TrainError> {
    let started = Instant::now();
    config.validate()?;
    if data.stage() != config.stage {
        return Err(TrainError::StageMismatch { config: config.stage, data: data.stage() });
    }
    if let Some(h) = &opts.heldout {
        if h.stage() != config.stage {
            return Err(TrainError::StageMismatch { config: config.stage, data: h.stage() });
        }
    }
    let reference = match (config.stage, reference) {
        (Stage::Dpo, None) => return Err(TrainError::MissingReference),
        (Stage::Dpo, Some(r)) => {
            if r.config() != model.config() {
                return Err(TrainError::BadConfig("reference and policy architectures differ".into()));
            }
            Some(r)
        }
        _ => None,
    };
    let limit = config.cutoff_len.min(model.config().context);
    data.check(limit, model.config().vocab_size)?;
    if let Some(h) = &opts.heldout {
        h.check(limit, model.config().vocab_size)?;
    }

    let n = data.len();
    let steps_per_epoch = config.steps_per_epoch(n);
    let total_steps = steps_per_epoch * config.epochs;
    if config.warmup_steps > total_steps && total_steps > 0 {
        return Err(TrainError::BadConfig(format!(
            "warmup of {} steps exceeds the {total_steps} total steps",
            config.warmup_steps
        )));
    }

    let mut model = model;
    let mut adam = AdamState::new(model.num_params());
    let mut step = 0;
    let mut loss_sum = 0.0;
    if let Some(ck) = &opts.resume {
        if ck.stage != config.stage || ck.step > total_steps {
            return Err(TrainError::ResumeMismatch(format!(
                "{} checkpoint at step {} for a {} run of {total_steps} steps",
                ck.stage, ck.step, config.stage
            )));
        }
        let resumed = ck.policy()?;
        if resumed.config() != model.config() || ck.optimizer.m.len() != model.num_params() {
            return Err(TrainError::ResumeMismatch("architecture differs".into()));
        }
        model = resumed;
        adam = ck.optimizer.clone();
        step = ck.step;
        loss_sum = ck.running_loss * ck.step as f64;
    }

    let heldout_before = match &opts.heldout {
        Some(h) if !h.is_empty() => Some(heldout_metric(&model, reference, h, config.beta)?),
        _ => None,
    };
    let ref_lp = match (data, reference) {
        (StageData::Dpo(v), Some(r)) => losses::reference_logprobs(r, v)?,
        _ => Vec::new(),
    };

    let checkpoint = |model: &PolicyModel, adam: &AdamState, step: usize, loss_sum: f64| Checkpoint {
        stage: config.stage,
        step,
        running_loss: if step == 0 { 0.0 } else { loss_sum / step as f64 },
        model: ModelFile::new(model, opts.vocab.as_ref()),
        optimizer: adam.clone(),
    };

    let mut curve = Vec::new();
    let mut epoch_margins = Vec::new();
    let first_epoch = step.checked_div(steps_per_epoch).unwrap_or(config.epochs);
    for epoch in first_epoch..config.epochs {
        let order = epoch_order(n, config.seed, epoch);
        let start = step - epoch * steps_per_epoch;
        for chunk in order.chunks(config.items_per_step()).skip(start) {
            let lr = cosine_lr(step, total_steps, config.lr, config.warmup_steps)?;
            let mut grad = vec![0.0; model.num_params()];
            let mut loss = 0.0;
            for micro in chunk.chunks(config.batch_size) {
                let w = micro.len() as f64 / chunk.len() as f64;
                let out = micro_batch(&model, data, &ref_lp, micro, config.beta)?;
                loss += w * out.loss;
                for (g, o) in grad.iter_mut().zip(&out.grad) {
                    *g += w * o;
                }
            }
            if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
                return Err(TrainError::NonFiniteGradient { step, index, loss });
            }
            adamw_step(model.params_mut(), &grad, &mut adam, lr, config)?;
            step += 1;
            loss_sum += loss;
            curve.push(LossPoint { step, stage: config.stage, loss, lr });
            if let Some(dir) = &opts.checkpoint_dir {
                if config.save_steps > 0 && step % config.save_steps == 0 {
                    checkpoint(&model, &adam, step, loss_sum)
                        .save(&dir.join(format!("{}-step{step}.json", config.stage)))?;
                }
            }
        }
        if let (StageData::Dpo(v), Some(r)) = (data, reference) {
            epoch_margins.push(preference_margin(&model, Some(r), v)?);
        }
    }

    let heldout_after = match &opts.heldout {
        Some(h) if !h.is_empty() => Some(heldout_metric(&model, reference, h, config.beta)?),
        _ => None,
    };
    let report = StageReport {
        stage: config.stage,
        final_loss: curve.last().map(|p| p.loss),
        curve,
        wall_time_ms: started.elapsed().as_millis(),
        epoch_margins,
        heldout_before,
        heldout_after,
    };
    Ok((checkpoint(&model, &adam, step, loss_sum), report))
}

/// Stage configs for a full run; `None` skips the stage (the `no_cpt` /
/// `no_dpo` ablations).
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub cpt: Option<TrainConfig>,
    pub sft: TrainConfig,
    pub dpo: Option<TrainConfig>,
}

impl PipelineConfig {
    pub fn desk(seed: u64) -> Self {
        let with_seed = |s| TrainConfig { seed, ..TrainConfig::desk(s) };
        PipelineConfig { cpt: Some(with_seed(Stage::Cpt)), sft: with_seed(Stage::Sft), dpo: Some(with_seed(Stage::Dpo)) }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineData {
    pub cpt: Vec<CptSequence>,
    pub sft: Vec<SftPair>,
    pub dpo: Vec<PreferenceTriple>,
    /// Held-out preference triples for the margin diagnostic.
    pub heldout_dpo: Vec<PreferenceTriple>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub final_checkpoint: Checkpoint,
    /// The fine-tuned model, which is also the preference reference.
    pub sft_checkpoint: Checkpoint,
    pub reports: Vec<StageReport>,
    /// Held-out log-likelihood margin of the fine-tuned model.
    pub sft_margin: Option<f64>,
    /// The same margin after preference optimisation.
    pub dpo_margin: Option<f64>,
}

/// Runs pre-training → fine-tuning → preference optimisation. The
/// fine-tuned model is cloned as the frozen reference. When
/// `opts.checkpoint_dir` is set each finished stage is saved as
/// `{stage}-final.json` before the next starts, so a failure keeps them.
pub fn pipeline(
    configs: &PipelineConfig,
    data: &PipelineData,
    initial: PolicyModel,
    opts: &RunOptions,
) -> Result<PipelineOutcome, TrainError> {
    let stage_opts = |heldout: Option<StageData>| RunOptions {
        checkpoint_dir: opts.checkpoint_dir.clone(),
        resume: None,
        heldout,
        vocab: opts.vocab.clone(),
    };
    let wrap = |stage: Stage| move |e: TrainError| TrainError::StageFailed { stage, source: Box::new(e) };
    let keep = |ck: &Checkpoint| -> Result<(), TrainError> {
        if let Some(dir) = &opts.checkpoint_dir {
            ck.save(&dir.join(format!("{}-final.json", ck.stage)))?;
        }
        Ok(())
    };

    let mut reports = Vec::new();
    let mut model = initial;
    if let Some(cfg) = &configs.cpt {
        let (ck, rep) = run_stage(cfg, &StageData::Cpt(data.cpt.clone()), model, None, &stage_opts(None))
            .map_err(wrap(Stage::Cpt))?;
        keep(&ck)?;
        model = ck.policy()?;
        reports.push(rep);
    }
    let (sft_ck, rep) = run_stage(&configs.sft, &StageData::Sft(data.sft.clone()), model, None, &stage_opts(None))
        .map_err(wrap(Stage::Sft))?;
    keep(&sft_ck)?;
    reports.push(rep);
    let reference = sft_ck.policy()?;
    let margin = |m: &PolicyModel| -> Result<Option<f64>, TrainError> {
        if data.heldout_dpo.is_empty() {
            Ok(None)
        } else {
            preference_margin(m, None, &data.heldout_dpo).map(Some)
        }
    };
    let sft_margin = margin(&reference)?;

    let (final_checkpoint, dpo_margin) = match &configs.dpo {
        Some(cfg) => {
            let heldout = (!data.heldout_dpo.is_empty()).then(|| StageData::Dpo(data.heldout_dpo.clone()));
            let (ck, rep) = run_stage(
                cfg,
                &StageData::Dpo(data.dpo.clone()),
                reference.clone(),
                Some(&reference),
                &stage_opts(heldout),
            )
            .map_err(wrap(Stage::Dpo))?;
            keep(&ck)?;
            let after = margin(&ck.policy()?)?;
            reports.push(rep);
            (ck, after)
        }
        None => (sft_ck.clone(), None),
    };
    Ok(PipelineOutcome { final_checkpoint, sft_checkpoint: sft_ck, reports, sft_margin, dpo_margin })
}
