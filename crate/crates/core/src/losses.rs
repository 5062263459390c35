//! Training objectives: next-token pre-training, balanced detection +
//! explanation fine-tuning, and the preference loss against a frozen
//! reference, together with the reward quantities it implies and a
//! closed-form optimal policy over an enumerable outcome set.
//!
//! Batch losses are arithmetic means over items; sums are reported too.

use serde::{Deserialize, Serialize};

use crate::model::{ModelError, PolicyModel};

/// Default preference temperature. A conventional choice, not a tuned one.
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("beta must be positive and finite, got {0}")]
    BadBeta(f64),
    #[error("invalid reward table: {0}")]
    BadTable(String),
    #[error("{0}; rescale the rewards or raise beta")]
    Overflow(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check_beta(beta: f64) -> Result<(), LossError> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(LossError::BadBeta(beta))
    }
}

/// Logistic function, evaluated so that `sigmoid(t) + sigmoid(-t) == 1`
/// holds exactly in floating point.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        1.0 - sigmoid(-t)
    }
}

/// `ln(1 + e^x)` without overflow; equals `-ln σ(-x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss value with its exact parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    /// Mean over batch items.
    pub loss: f64,
    /// Sum over batch items.
    pub sum: f64,
    /// Number of predicted tokens (or pairs, for the preference loss).
    pub count: usize,
    /// `sum / count`.
    pub token_mean: f64,
    pub grad: Vec<f64>,
}

/// A prompt and the completion whose likelihood is trained.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub prompt: Vec<u32>,
    pub target: Vec<u32>,
}

impl Completion {
    pub fn new(prompt: Vec<u32>, target: Vec<u32>) -> Self {
        Completion { prompt, target }
    }
}

/// Mean negative log-likelihood of `items` and its gradient.
fn nll(model: &PolicyModel, items: &[Completion], weight: f64, grad: &mut [f64]) -> Result<(f64, usize), LossError> {
    let n = items.len() as f64;
    let mut sum = 0.0;
    let mut count = 0;
    for it in items {
        sum -= model.accumulate_logprob_grad(&it.prompt, &it.target, -weight / n, grad)?;
        count += it.target.len();
    }
    Ok((sum, count))
}

/// Next-token loss over whole sequences: mean over sequences of
/// `-Σ_i log P(x_i | x_<i)`, where the conditioning context of each token is
/// its prefix.
pub fn cpt_loss(model: &PolicyModel, sequences: &[Vec<u32>]) -> Result<LossOutput, LossError> {
    if sequences.is_empty() {
        return Err(LossError::EmptyBatch("pre-training"));
    }
    let items: Vec<Completion> = sequences.iter().map(|s| Completion::new(Vec::new(), s.clone())).collect();
    let mut grad = vec![0.0; model.num_params()];
    let (sum, count) = nll(model, &items, 1.0, &mut grad)?;
    Ok(LossOutput {
        loss: sum / sequences.len() as f64,
        sum,
        count,
        token_mean: if count == 0 { 0.0 } else { sum / count as f64 },
        grad,
    })
}

/// Balanced fine-tuning loss `½(L_detect + L_explain)`; each term is the mean
/// negative log-likelihood over its own batch. Detection targets are the
/// single answer token, explanation targets the explanation tokens.
pub fn sft_loss(model: &PolicyModel, detect: &[Completion], explain: &[Completion]) -> Result<LossOutput, LossError> {
    if detect.is_empty() {
        return Err(LossError::EmptyBatch("detection"));
    }
    if explain.is_empty() {
        return Err(LossError::EmptyBatch("explanation"));
    }
    let mut grad = vec![0.0; model.num_params()];
    let (d_sum, d_count) = nll(model, detect, 0.5, &mut grad)?;
    let (e_sum, e_count) = nll(model, explain, 0.5, &mut grad)?;
    let loss = 0.5 * (d_sum / detect.len() as f64 + e_sum / explain.len() as f64);
    let sum = d_sum + e_sum;
    let count = d_count + e_count;
    Ok(LossOutput {
        loss,
        sum,
        count,
        token_mean: if count == 0 { 0.0 } else { sum / count as f64 },
        grad,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceTriple {
    pub prompt: Vec<u32>,
    pub chosen: Vec<u32>,
    pub rejected: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceBatch {
    pub triples: Vec<PreferenceTriple>,
    pub beta: f64,
}

/// Reference log-likelihoods `(log π_ref(y_w|x), log π_ref(y_l|x))` per triple.
pub fn reference_logprobs(reference: &PolicyModel, triples: &[PreferenceTriple]) -> Result<Vec<(f64, f64)>, LossError> {
    triples
        .iter()
        .map(|t| {
            Ok((
                reference.sequence_logprob(&t.prompt, &t.chosen)?,
                reference.sequence_logprob(&t.prompt, &t.rejected)?,
            ))
        })
        .collect()
}

/// Preference loss: mean over triples of `-log σ(β·[ρ(y_w) − ρ(y_l)])` with
/// `ρ(y) = log π(y|x) − log π_ref(y|x)`. The gradient is with respect to the
/// policy only.
pub fn dpo_loss(model: &PolicyModel, reference: &PolicyModel, batch: &PreferenceBatch) -> Result<LossOutput, LossError> {
    let ref_lp = reference_logprobs(reference, &batch.triples)?;
    dpo_loss_with_reference(model, &ref_lp, batch)
}

/// [`dpo_loss`] with precomputed reference log-likelihoods.
pub fn dpo_loss_with_reference(
    model: &PolicyModel,
    ref_lp: &[(f64, f64)],
    batch: &PreferenceBatch,
) -> Result<LossOutput, LossError> {
    check_beta(batch.beta)?;
    if batch.triples.is_empty() {
        return Err(LossError::EmptyBatch("preference"));
    }
    assert_eq!(ref_lp.len(), batch.triples.len(), "one reference pair per triple");
    let n = batch.triples.len() as f64;
    let beta = batch.beta;
    let mut grad = vec![0.0; model.num_params()];
    let mut sum = 0.0;
    for (t, &(ref_w, ref_l)) in batch.triples.iter().zip(ref_lp) {
        let lw = model.sequence_logprob(&t.prompt, &t.chosen)?;
        let ll = model.sequence_logprob(&t.prompt, &t.rejected)?;
        let margin = beta * ((lw - ref_w) - (ll - ref_l));
        sum += softplus(-margin);
        // d/dm softplus(-m) = -σ(-m)
        let coeff = -beta * sigmoid(-margin) / n;
        model.accumulate_logprob_grad(&t.prompt, &t.chosen, coeff, &mut grad)?;
        model.accumulate_logprob_grad(&t.prompt, &t.rejected, -coeff, &mut grad)?;
    }
    Ok(LossOutput {
        loss: sum / n,
        sum,
        count: batch.triples.len(),
        token_mean: sum / n,
        grad,
    })
}

/// `β·(log π(y|x) − log π_ref(y|x))`: the reward implied by a policy, up to
/// the prompt-only term `β·log Z(x)`, which cancels in every difference.
pub fn implied_reward(
    model: &PolicyModel,
    reference: &PolicyModel,
    x: &[u32],
    y: &[u32],
    beta: f64,
) -> Result<f64, LossError> {
    check_beta(beta)?;
    Ok(beta * (model.sequence_logprob(x, y)? - reference.sequence_logprob(x, y)?))
}

/// Bradley–Terry probability that `y1` is preferred over `y2` under the
/// implied rewards.
pub fn preference_prob(
    model: &PolicyModel,
    reference: &PolicyModel,
    x: &[u32],
    y1: &[u32],
    y2: &[u32],
    beta: f64,
) -> Result<f64, LossError> {
    let r1 = implied_reward(model, reference, x, y1, beta)?;
    let r2 = implied_reward(model, reference, x, y2, beta)?;
    Ok(sigmoid(r1 - r2))
}

/// Rewards and reference probabilities over an enumerable outcome set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub rewards: Vec<f64>,
    pub reference: Vec<f64>,
    pub beta: f64,
}

pub const MAX_OUTCOMES: usize = 10_000;

impl RewardTable {
    pub fn validate(&self) -> Result<(), LossError> {
        check_beta(self.beta)?;
        let bad = |m: String| Err(LossError::BadTable(m));
        if self.rewards.is_empty() || self.rewards.len() > MAX_OUTCOMES {
            return bad(format!("outcome count {} outside 1..={MAX_OUTCOMES}", self.rewards.len()));
        }
        if self.rewards.len() != self.reference.len() {
            return bad("rewards and reference differ in length".into());
        }
        if let Some(r) = self.rewards.iter().find(|r| !r.is_finite()) {
            return bad(format!("non-finite reward {r}"));
        }
        if let Some(p) = self.reference.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
            return bad(format!("reference probability {p} is not strictly positive"));
        }
        let total: f64 = self.reference.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("reference probabilities sum to {total}"));
        }
        Ok(())
    }
}

/// `π*(y) = π_ref(y)·exp(r(y)/β) / Z`, computed in log space.
pub fn optimal_policy(table: &RewardTable) -> Result<Vec<f64>, LossError> {
    table.validate()?;
    let logits: Vec<f64> = table
        .rewards
        .iter()
        .zip(&table.reference)
        .map(|(r, p)| p.ln() + r / table.beta)
        .collect();
    if let Some(l) = logits.iter().find(|l| !l.is_finite()) {
        return Err(LossError::Overflow(format!("exponent {l} is not finite")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(logits.iter().map(|l| (l - log_z).exp()).collect())
}
