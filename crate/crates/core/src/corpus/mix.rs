use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixSource {
    Contract,
    General,
}

/// One training sequence for the continual-pre-training objective.
///
/// The conditioning context of token `i` is the prefix `tokens[..i]`; there is
/// no separate context channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CptSequence {
    pub tokens: Vec<u32>,
    pub source: MixSource,
}

impl CptSequence {
    pub fn new(tokens: Vec<u32>, source: MixSource) -> Self {
        CptSequence { tokens, source }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks the cutoff-length and vocabulary bounds.
    pub fn validate(&self, cutoff_len: usize, vocab_size: usize) -> Result<(), String> {
        if self.tokens.len() > cutoff_len {
            return Err(format!(
                "sequence of {} tokens exceeds cutoff length {cutoff_len}",
                self.tokens.len()
            ));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&t| t as usize >= vocab_size) {
            return Err(format!("token id {bad} outside vocabulary of size {vocab_size}"));
        }
        Ok(())
    }
}

/// How to assemble the pre-training stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixPlan {
    pub cutoff_len: usize,
    pub seed: u64,
    /// Requested share of contract tokens. `None` keeps the natural
    /// token-count proportion of the two corpora.
    pub contract_share: Option<f64>,
    /// Total token budget when a share is requested; defaults to every
    /// available token.
    pub token_budget: Option<usize>,
}

impl MixPlan {
    pub fn new(cutoff_len: usize, seed: u64) -> Self {
        MixPlan {
            cutoff_len,
            seed,
            contract_share: None,
            token_budget: None,
        }
    }

    pub fn with_share(mut self, share: f64, budget: usize) -> Self {
        self.contract_share = Some(share);
        self.token_budget = Some(budget);
        self
    }
}

fn chunk(docs: &[Vec<u32>], cutoff: usize) -> Vec<Vec<u32>> {
    docs.iter()
        .flat_map(|d| d.chunks(cutoff).map(<[u32]>::to_vec))
        .collect()
}

fn take_tokens(chunks: Vec<Vec<u32>>, mut target: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for mut c in chunks {
        if target == 0 {
            break;
        }
        c.truncate(target);
        target -= c.len();
        out.push(c);
    }
    out
}

/// Interleaves contract and general token documents into cutoff-length
/// sequences.
///
/// Each corpus is chunked at the cutoff and shuffled under the plan seed.
/// The merge always emits next from the corpus that has consumed the smallest
/// fraction of its own tokens, so every prefix of the stream keeps the overall
/// token proportion up to one chunk. With a requested share, each corpus
/// contributes `share · budget` (resp. the remainder) tokens, capped at what
/// it has.
pub fn assemble_cpt_mix(
    contracts: &[Vec<u32>],
    general: &[Vec<u32>],
    plan: &MixPlan,
) -> Result<Vec<CptSequence>, CorpusError> {
    if plan.cutoff_len == 0 {
        return Err(CorpusError::BadMixPlan("cutoff length must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut c_chunks = chunk(contracts, plan.cutoff_len);
    let mut g_chunks = chunk(general, plan.cutoff_len);
    c_chunks.shuffle(&mut rng);
    g_chunks.shuffle(&mut rng);

    let available: usize = c_chunks.iter().chain(&g_chunks).map(Vec::len).sum();
    if available == 0 {
        return Err(CorpusError::EmptyMix);
    }

    if let Some(share) = plan.contract_share {
        if !(0.0..=1.0).contains(&share) {
            return Err(CorpusError::BadMixPlan(format!("contract share {share} outside [0, 1]")));
        }
        let budget = plan.token_budget.unwrap_or(available);
        let c_target = (share * budget as f64).round() as usize;
        c_chunks = take_tokens(c_chunks, c_target);
        g_chunks = take_tokens(g_chunks, budget - c_target);
    }

    let totals = [
        c_chunks.iter().map(Vec::len).sum::<usize>(),
        g_chunks.iter().map(Vec::len).sum::<usize>(),
    ];
    let mut emitted = [0usize; 2];
    let mut queues = [c_chunks.into_iter().peekable(), g_chunks.into_iter().peekable()];
    let mut out = Vec::new();
    loop {
        // consumed fraction e/t, compared without division
        let pick = (0..2)
            .filter(|&s| queues[s].peek().is_some())
            .min_by(|&a, &b| (emitted[a] * totals[b]).cmp(&(emitted[b] * totals[a])));
        let Some(s) = pick else { break };
        let seq = queues[s].next().expect("peeked");
        emitted[s] += seq.len();
        let source = if s == 0 { MixSource::Contract } else { MixSource::General };
        out.push(CptSequence::new(seq, source));
    }
    Ok(out)
}
