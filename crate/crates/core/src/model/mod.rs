//! A tiny causal self-attention language model with exact log-probabilities
//! and a hand-written backward pass.
//!
//! Each block is `h ← h + Wo·attn(h)` followed by `h ← h + W2·tanh(W1·h + b1)`;
//! the output head is `U·h + c`. There is no normalization layer. The head is
//! zero at initialization, so a fresh model is exactly uniform over the
//! vocabulary. A `<bos>` token is prepended to every input internally.
//! All arithmetic is in `f64`.

mod vocab;

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use vocab::{Vocab, BOS, EOS, PAD, SAFE, SEP, SPECIALS, UNK, VULN};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("sequence of {len} tokens exceeds the context length {context}")]
    Overlong { len: usize, context: usize },
    #[error("token id {token} outside vocabulary of size {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("parameter vector has {got} entries, expected {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
    #[error("unsupported checkpoint format version {0}")]
    FormatVersion(u32),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    /// Maximum number of input positions, `<bos>` included.
    pub context: usize,
    pub layers: usize,
    pub hidden: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::BadConfig(m.to_string()));
        if self.vocab_size < SPECIALS.len() {
            return bad("vocabulary must hold at least the special tokens");
        }
        if self.dim == 0 || self.context == 0 || self.hidden == 0 {
            return bad("dim, context and hidden must be positive");
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        Layout::new(self).total
    }
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embed: usize,
    pos: usize,
    blocks: Vec<BlockLayout>,
    head_w: usize,
    head_b: usize,
    total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BlockLayout {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    w1: usize,
    b1: usize,
    w2: usize,
}

impl Layout {
    fn new(c: &ModelConfig) -> Layout {
        let (d, m) = (c.dim, c.hidden);
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let embed = take(c.vocab_size * d);
        let pos = take(c.context * d);
        let blocks = (0..c.layers)
            .map(|_| BlockLayout {
                wq: take(d * d),
                wk: take(d * d),
                wv: take(d * d),
                wo: take(d * d),
                w1: take(m * d),
                b1: take(m),
                w2: take(d * m),
            })
            .collect();
        let head_w = take(c.vocab_size * d);
        let head_b = take(c.vocab_size);
        Layout {
            embed,
            pos,
            blocks,
            head_w,
            head_b,
            total: at,
        }
    }
}

/// `y += W·x` for a row-major `rows × cols` matrix.
fn matvec_add(w: &[f64], x: &[f64], y: &mut [f64]) {
    let cols = x.len();
    for (yi, row) in y.iter_mut().zip(w.chunks_exact(cols)) {
        *yi += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `x += Wᵀ·y` for a row-major `rows × cols` matrix.
fn matvec_t_add(w: &[f64], y: &[f64], x: &mut [f64]) {
    let cols = x.len();
    for (&yi, row) in y.iter().zip(w.chunks_exact(cols)) {
        if yi != 0.0 {
            for (xj, a) in x.iter_mut().zip(row) {
                *xj += a * yi;
            }
        }
    }
}

/// `G += y ⊗ x` for a row-major `rows × cols` gradient block.
fn outer_add(g: &mut [f64], y: &[f64], x: &[f64]) {
    let cols = x.len();
    for (&yi, row) in y.iter().zip(g.chunks_exact_mut(cols)) {
        if yi != 0.0 {
            for (gj, xj) in row.iter_mut().zip(x) {
                *gj += yi * xj;
            }
        }
    }
}

fn log_softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    for x in v {
        *x -= lse;
    }
}

struct BlockCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Row `t` holds attention weights over positions `0..=t`.
    alpha: Vec<f64>,
    attn: Vec<f64>,
    mid: Vec<f64>,
    act: Vec<f64>,
}

struct Forward {
    n: usize,
    blocks: Vec<BlockCache>,
    last: Vec<f64>,
    /// Log-probabilities, `n × vocab`.
    logp: Vec<f64>,
}

/// The trainable policy: configuration plus flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyModel {
    config: ModelConfig,
    params: Vec<f64>,
    layout: Layout,
}

impl PolicyModel {
    /// Small symmetric uniform initialization under `seed`, zero output head.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        Self::with_head_scale(config, seed, 0.0)
    }

    /// Like [`PolicyModel::new`] but with the output head drawn from
    /// `U(-head_scale, head_scale)`; used to obtain non-degenerate models for
    /// gradient checks.
    pub fn with_head_scale(config: ModelConfig, seed: u64, head_scale: f64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        let mut fill = |range: std::ops::Range<usize>, scale: f64, rng: &mut ChaCha8Rng| {
            for p in &mut params[range] {
                *p = if scale > 0.0 { rng.gen_range(-scale..scale) } else { 0.0 };
            }
        };
        let (d, m) = (config.dim as f64, config.hidden as f64);
        fill(layout.embed..layout.pos, 1.0, &mut rng);
        let pos_end = layout.blocks.first().map_or(layout.head_w, |b| b.wq);
        fill(layout.pos..pos_end, 0.5, &mut rng);
        for b in &layout.blocks {
            fill(b.wq..b.wo, 1.0 / d.sqrt(), &mut rng);
            fill(b.wo..b.w1, 0.5 / d.sqrt(), &mut rng);
            fill(b.w1..b.b1, 1.0 / d.sqrt(), &mut rng);
            fill(b.b1..b.w2, 0.1, &mut rng);
            fill(b.w2..b.w2 + config.dim * config.hidden, 0.5 / m.sqrt(), &mut rng);
        }
        fill(layout.head_w..layout.total, head_scale, &mut rng);
        Ok(PolicyModel {
            config,
            params,
            layout,
        })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(ModelError::ShapeMismatch {
                got: params.len(),
                expected: layout.total,
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        Ok(PolicyModel {
            config,
            params,
            layout,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Output-head bias, one entry per vocabulary item. Setting it on a
    /// model whose head weights are zero fixes the next-token distribution
    /// to `softmax(bias)` for every prefix.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let start = self.layout.head_b;
        &mut self.params[start..]
    }

    /// Range of the output head (weights then bias) inside the flat vector.
    pub fn head_range(&self) -> std::ops::Range<usize> {
        self.layout.head_w..self.params.len()
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), ModelError> {
        match tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            Some(&token) => Err(ModelError::TokenOutOfRange {
                token,
                vocab: self.config.vocab_size,
            }),
            None => Ok(()),
        }
    }

    /// Forward pass over `input` (which already starts with `<bos>`).
    fn forward(&self, input: &[u32]) -> Forward {
        let c = &self.config;
        let l = &self.layout;
        let (d, m, vs, n) = (c.dim, c.hidden, c.vocab_size, input.len());
        let p = &self.params;
        let scale = 1.0 / (d as f64).sqrt();

        let mut h = vec![0.0; n * d];
        for (t, &tok) in input.iter().enumerate() {
            let e = &p[l.embed + tok as usize * d..][..d];
            let q = &p[l.pos + t * d..][..d];
            for (i, hv) in h[t * d..(t + 1) * d].iter_mut().enumerate() {
                *hv = e[i] + q[i];
            }
        }

        let mut blocks = Vec::with_capacity(c.layers);
        for b in &l.blocks {
            let (wq, wk, wv, wo) = (
                &p[b.wq..][..d * d],
                &p[b.wk..][..d * d],
                &p[b.wv..][..d * d],
                &p[b.wo..][..d * d],
            );
            let (w1, b1, w2) = (&p[b.w1..][..m * d], &p[b.b1..][..m], &p[b.w2..][..d * m]);
            let mut q = vec![0.0; n * d];
            let mut k = vec![0.0; n * d];
            let mut v = vec![0.0; n * d];
            for t in 0..n {
                let x = &h[t * d..(t + 1) * d];
                matvec_add(wq, x, &mut q[t * d..(t + 1) * d]);
                matvec_add(wk, x, &mut k[t * d..(t + 1) * d]);
                matvec_add(wv, x, &mut v[t * d..(t + 1) * d]);
            }
            let mut alpha = vec![0.0; n * n];
            let mut attn = vec![0.0; n * d];
            for t in 0..n {
                let qt = &q[t * d..(t + 1) * d];
                let row = &mut alpha[t * n..t * n + t + 1];
                for (j, a) in row.iter_mut().enumerate() {
                    *a = scale * qt.iter().zip(&k[j * d..(j + 1) * d]).map(|(x, y)| x * y).sum::<f64>();
                }
                log_softmax_in_place(row);
                for a in row.iter_mut() {
                    *a = a.exp();
                }
                let out = &mut attn[t * d..(t + 1) * d];
                for j in 0..=t {
                    let a = alpha[t * n + j];
                    for (o, vj) in out.iter_mut().zip(&v[j * d..(j + 1) * d]) {
                        *o += a * vj;
                    }
                }
            }
            let mut mid = h.clone();
            for t in 0..n {
                matvec_add(wo, &attn[t * d..(t + 1) * d], &mut mid[t * d..(t + 1) * d]);
            }
            let mut act = vec![0.0; n * m];
            let mut out = mid.clone();
            for t in 0..n {
                let z = &mut act[t * m..(t + 1) * m];
                z.copy_from_slice(b1);
                matvec_add(w1, &mid[t * d..(t + 1) * d], z);
                for zi in z.iter_mut() {
                    *zi = zi.tanh();
                }
                matvec_add(w2, &act[t * m..(t + 1) * m], &mut out[t * d..(t + 1) * d]);
            }
            blocks.push(BlockCache {
                input: std::mem::replace(&mut h, out),
                q,
                k,
                v,
                alpha,
                attn,
                mid,
                act,
            });
        }

        let (uw, ub) = (&p[l.head_w..][..vs * d], &p[l.head_b..][..vs]);
        let mut logp = vec![0.0; n * vs];
        for t in 0..n {
            let row = &mut logp[t * vs..(t + 1) * vs];
            row.copy_from_slice(ub);
            matvec_add(uw, &h[t * d..(t + 1) * d], row);
            log_softmax_in_place(row);
        }
        Forward {
            n,
            blocks,
            last: h,
            logp,
        }
    }

    /// Adds `∂J/∂θ` to `grad`, where `dlogits` (`n × vocab`) holds `∂J/∂logits`.
    fn backward(&self, input: &[u32], fw: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let c = &self.config;
        let l = &self.layout;
        let (d, m, vs, n) = (c.dim, c.hidden, c.vocab_size, fw.n);
        let p = &self.params;
        let scale = 1.0 / (d as f64).sqrt();

        let mut dh = vec![0.0; n * d];
        {
            let uw = &p[l.head_w..][..vs * d];
            for t in 0..n {
                let dl = &dlogits[t * vs..(t + 1) * vs];
                for (g, x) in grad[l.head_b..][..vs].iter_mut().zip(dl) {
                    *g += x;
                }
                outer_add(&mut grad[l.head_w..][..vs * d], dl, &fw.last[t * d..(t + 1) * d]);
                matvec_t_add(uw, dl, &mut dh[t * d..(t + 1) * d]);
            }
        }

        for (b, cache) in l.blocks.iter().zip(&fw.blocks).rev() {
            let (wq, wk, wv, wo) = (
                &p[b.wq..][..d * d],
                &p[b.wk..][..d * d],
                &p[b.wv..][..d * d],
                &p[b.wo..][..d * d],
            );
            let (w1, w2) = (&p[b.w1..][..m * d], &p[b.w2..][..d * m]);

            // feed-forward residual
            let mut dmid = dh.clone();
            let mut dz = vec![0.0; m];
            for t in 0..n {
                let dht = &dh[t * d..(t + 1) * d];
                let g = &cache.act[t * m..(t + 1) * m];
                outer_add(&mut grad[b.w2..][..d * m], dht, g);
                dz.iter_mut().for_each(|x| *x = 0.0);
                matvec_t_add(w2, dht, &mut dz);
                for (z, gi) in dz.iter_mut().zip(g) {
                    *z *= 1.0 - gi * gi;
                }
                for (gb, z) in grad[b.b1..][..m].iter_mut().zip(&dz) {
                    *gb += z;
                }
                outer_add(&mut grad[b.w1..][..m * d], &dz, &cache.mid[t * d..(t + 1) * d]);
                matvec_t_add(w1, &dz, &mut dmid[t * d..(t + 1) * d]);
            }

            // attention residual
            let mut dinput = dmid.clone();
            let mut dattn = vec![0.0; n * d];
            for t in 0..n {
                let dm = &dmid[t * d..(t + 1) * d];
                outer_add(&mut grad[b.wo..][..d * d], dm, &cache.attn[t * d..(t + 1) * d]);
                matvec_t_add(wo, dm, &mut dattn[t * d..(t + 1) * d]);
            }
            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            let mut dalpha = vec![0.0; n];
            for t in 0..n {
                let dat = &dattn[t * d..(t + 1) * d];
                let arow = &cache.alpha[t * n..t * n + t + 1];
                for j in 0..=t {
                    dalpha[j] = dat.iter().zip(&cache.v[j * d..(j + 1) * d]).map(|(x, y)| x * y).sum();
                    for (dvj, x) in dv[j * d..(j + 1) * d].iter_mut().zip(dat) {
                        *dvj += arow[j] * x;
                    }
                }
                let dot: f64 = arow.iter().zip(&dalpha[..=t]).map(|(a, g)| a * g).sum();
                for j in 0..=t {
                    let ds = arow[j] * (dalpha[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for i in 0..d {
                        dq[t * d + i] += ds * cache.k[j * d + i];
                        dk[j * d + i] += ds * cache.q[t * d + i];
                    }
                }
            }
            for t in 0..n {
                let x = &cache.input[t * d..(t + 1) * d];
                let dxt = &mut dinput[t * d..(t + 1) * d];
                for (w, off, dy) in [(wq, b.wq, &dq), (wk, b.wk, &dk), (wv, b.wv, &dv)] {
                    let dyt = &dy[t * d..(t + 1) * d];
                    outer_add(&mut grad[off..][..d * d], dyt, x);
                    matvec_t_add(w, dyt, dxt);
                }
            }
            dh = dinput;
        }

        for (t, &tok) in input.iter().enumerate() {
            let dht = &dh[t * d..(t + 1) * d];
            for (g, x) in grad[l.embed + tok as usize * d..][..d].iter_mut().zip(dht) {
                *g += x;
            }
            for (g, x) in grad[l.pos + t * d..][..d].iter_mut().zip(dht) {
                *g += x;
            }
        }
    }

    /// `[<bos>] + prefix`, validated against vocabulary and context.
    fn input_for(&self, prefix: &[u32], completion: &[u32]) -> Result<Vec<u32>, ModelError> {
        self.check_tokens(prefix)?;
        self.check_tokens(completion)?;
        let len = prefix.len() + completion.len();
        if len > self.config.context {
            return Err(ModelError::Overlong {
                len,
                context: self.config.context,
            });
        }
        let mut input = Vec::with_capacity(len + 1);
        input.push(BOS);
        input.extend_from_slice(prefix);
        input.extend_from_slice(completion);
        Ok(input)
    }

    /// Log-probabilities of the next token after `prefix`.
    pub fn next_logprobs(&self, prefix: &[u32]) -> Result<Vec<f64>, ModelError> {
        if prefix.len() >= self.config.context {
            return Err(ModelError::Overlong {
                len: prefix.len() + 1,
                context: self.config.context,
            });
        }
        let input = self.input_for(prefix, &[])?;
        let fw = self.forward(&input);
        let vs = self.config.vocab_size;
        Ok(fw.logp[(fw.n - 1) * vs..].to_vec())
    }

    /// `Σ_i log P(y_i | x, y_<i)`.
    pub fn sequence_logprob(&self, x: &[u32], y: &[u32]) -> Result<f64, ModelError> {
        let input = self.input_for(x, y)?;
        if y.is_empty() {
            return Ok(0.0);
        }
        let fw = self.forward(&input[..input.len() - 1]);
        let vs = self.config.vocab_size;
        Ok((0..y.len())
            .map(|i| fw.logp[(x.len() + i) * vs + y[i] as usize])
            .sum())
    }

    /// Adds `weight · ∂/∂θ log π(y | x)` to `grad` and returns `log π(y | x)`.
    pub fn accumulate_logprob_grad(
        &self,
        x: &[u32],
        y: &[u32],
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        if grad.len() != self.params.len() {
            return Err(ModelError::ShapeMismatch {
                got: grad.len(),
                expected: self.params.len(),
            });
        }
        let input = self.input_for(x, y)?;
        if y.is_empty() {
            return Ok(0.0);
        }
        let input = &input[..input.len() - 1];
        let fw = self.forward(input);
        let vs = self.config.vocab_size;
        let mut dlogits = vec![0.0; fw.n * vs];
        let mut total = 0.0;
        for (i, &target) in y.iter().enumerate() {
            let t = x.len() + i;
            let lp = &fw.logp[t * vs..(t + 1) * vs];
            total += lp[target as usize];
            let row = &mut dlogits[t * vs..(t + 1) * vs];
            for (g, l) in row.iter_mut().zip(lp) {
                *g = -weight * l.exp();
            }
            row[target as usize] += weight;
        }
        if weight != 0.0 {
            self.backward(input, &fw, &dlogits, grad);
        }
        Ok(total)
    }

    /// `log π(y | x)` together with its exact gradient.
    pub fn grad_sequence_logprob(&self, x: &[u32], y: &[u32]) -> Result<(f64, Vec<f64>), ModelError> {
        let mut grad = vec![0.0; self.params.len()];
        let lp = self.accumulate_logprob_grad(x, y, 1.0, &mut grad)?;
        Ok((lp, grad))
    }

    /// Repeated argmax until `<eos>` or `max_len` tokens; ties go to the
    /// lowest id. The returned body excludes `<eos>`. Generation also stops
    /// when the context is full.
    pub fn greedy_decode(&self, x: &[u32], max_len: usize) -> Result<Vec<u32>, ModelError> {
        let mut seq = x.to_vec();
        let mut body = Vec::new();
        while body.len() < max_len && seq.len() < self.config.context {
            let lp = self.next_logprobs(&seq)?;
            let mut best = 0usize;
            for (i, &v) in lp.iter().enumerate() {
                if v > lp[best] {
                    best = i;
                }
            }
            if best as u32 == EOS {
                break;
            }
            body.push(best as u32);
            seq.push(best as u32);
        }
        Ok(body)
    }
}

pub const CHECKPOINT_FORMAT: u32 = 1;

/// Model checkpoint on disk: format version, configuration, optional
/// vocabulary and the parameter vector. JSON floats round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: u32,
    pub config: ModelConfig,
    #[serde(default)]
    pub vocab: Option<Vocab>,
    pub params: Vec<f64>,
}

impl ModelFile {
    pub fn new(model: &PolicyModel, vocab: Option<&Vocab>) -> Self {
        ModelFile {
            format: CHECKPOINT_FORMAT,
            config: model.config,
            vocab: vocab.cloned(),
            params: model.params.clone(),
        }
    }

    pub fn into_model(self) -> Result<(PolicyModel, Option<Vocab>), ModelError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(ModelError::FormatVersion(self.format));
        }
        if let Some(v) = &self.vocab {
            if v.len() != self.config.vocab_size {
                return Err(ModelError::BadConfig(format!(
                    "vocabulary has {} entries, config says {}",
                    v.len(),
                    self.config.vocab_size
                )));
            }
        }
        Ok((PolicyModel::from_params(self.config, self.params)?, self.vocab))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        fs::write(path, serde_json::to_vec(self)?).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = fs::read(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}
