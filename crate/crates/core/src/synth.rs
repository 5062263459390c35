//! Toy data for exercising the three-stage pipeline end to end, and the
//! encoders that turn real dataset records into token ids.
//!
//! The toy language has a handful of statement shapes per vulnerability
//! family; whether a contract is vulnerable depends on statement order or a
//! marker token, so the detection task is learnable but not trivial. Good
//! explanations name cause, impact and fix; degraded ones stop after naming
//! the obvious symptom, like the degradation checklist used for real pairs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{tokenize, CptSequence, MixSource};
use crate::datasets::{DpoRecord, Label, SftExample};
use crate::losses::{Completion, PreferenceTriple};
use crate::model::{ModelConfig, Vocab, BOS, EOS, SAFE, SEP, VULN};
use crate::taxonomy::VulnFamily;
use crate::trainer::{PipelineData, SftPair};

const WORDS: &[&str] = &[
    // structure
    "fn", "{", "}", ";", "=", "+", "<", ".", "(", ")",
    // identifiers
    "a", "b", "c", "d", "e", "f",
    // keywords
    "call", "value", "balance", "require", "now", "transfer", "emit", "old", "new", "delegatecall", "lib", "const",
    "unchecked",
    // explanation words
    "re", "td", "io", "de", "because", "before", "write", "external", "attacker", "drain", "fix", "first", "miner",
    "time", "overflow", "wrap", "checked", "target", "untrusted", "storage", "hijack", "no", "issue", "risk",
];

const IDENTS: &[&str] = &["a", "b", "c", "d", "e", "f"];

pub const TOY_FAMILIES: [VulnFamily; 4] = [VulnFamily::RE, VulnFamily::TD, VulnFamily::IO, VulnFamily::DE];

/// The fixed toy vocabulary (specials first).
pub fn toy_vocab() -> Vocab {
    let doc: Vec<String> = WORDS.iter().map(|w| w.to_string()).collect();
    Vocab::build([doc.as_slice()], 64)
}

fn family_word(f: VulnFamily) -> &'static str {
    match f {
        VulnFamily::RE => "re",
        VulnFamily::TD => "td",
        VulnFamily::IO => "io",
        VulnFamily::DE => "de",
        VulnFamily::MU => unreachable!("no toy shapes for unauditable issues"),
    }
}

/// A toy contract as words, with its label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyContract {
    pub family: VulnFamily,
    pub vulnerable: bool,
    pub words: Vec<&'static str>,
}

fn filler(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let x = *IDENTS.choose(rng).unwrap();
    let y = *IDENTS.choose(rng).unwrap();
    if rng.gen_bool(0.5) {
        vec![x, "=", y, ";"]
    } else {
        vec!["emit", x, ";"]
    }
}

pub fn toy_contract(family: VulnFamily, vulnerable: bool, rng: &mut ChaCha8Rng) -> ToyContract {
    let x = *IDENTS.choose(rng).unwrap();
    let y = *IDENTS.choose(rng).unwrap();
    let (prefix, core): (Vec<&str>, Vec<&str>) = match (family, vulnerable) {
        (VulnFamily::RE, true) => (vec![], vec![x, ".", "call", "value", ";", "balance", "=", y, ";"]),
        (VulnFamily::RE, false) => (vec![], vec!["balance", "=", y, ";", x, ".", "call", "value", ";"]),
        (VulnFamily::TD, true) => (vec![], vec!["require", "now", "<", x, ";", "transfer", ";"]),
        (VulnFamily::TD, false) => (vec![], vec!["emit", "now", ";", "transfer", ";"]),
        (VulnFamily::IO, v) => (vec![if v { "old" } else { "new" }, ";"], vec![x, "=", x, "+", y, ";"]),
        (VulnFamily::DE, true) => (vec![], vec![x, ".", "delegatecall", "(", ")", ";"]),
        (VulnFamily::DE, false) => (vec!["const", "lib", ";"], vec!["lib", ".", "delegatecall", "(", ")", ";"]),
        (VulnFamily::MU, _) => unreachable!("no toy shapes for unauditable issues"),
    };
    let mut words = prefix;
    words.extend(["fn", *IDENTS.choose(rng).unwrap(), "{"]);
    let before = rng.gen_range(0..=2);
    let after = rng.gen_range(0..=2);
    for _ in 0..before {
        words.extend(filler(rng));
    }
    words.extend(core);
    for _ in 0..after {
        words.extend(filler(rng));
    }
    words.push("}");
    ToyContract { family, vulnerable, words }
}

/// Full explanation for a vulnerable toy contract.
pub fn good_explanation(f: VulnFamily) -> Vec<&'static str> {
    let mut e = vec![family_word(f), "because"];
    e.extend(match f {
        VulnFamily::RE => &["external", "call", "before", "write", "attacker", "drain", "fix", "write", "first"][..],
        VulnFamily::TD => &["require", "now", "miner", "time", "attacker", "transfer", "fix", "no", "now"],
        VulnFamily::IO => &["old", "overflow", "wrap", "attacker", "balance", "fix", "checked"],
        VulnFamily::DE => &["untrusted", "target", "delegatecall", "storage", "hijack", "fix", "const", "target"],
        VulnFamily::MU => unreachable!(),
    });
    e
}

/// Explanation that only names the obvious symptom.
pub fn degraded_explanation(f: VulnFamily) -> Vec<&'static str> {
    let mut e = vec![family_word(f), "because"];
    e.extend(match f {
        VulnFamily::RE => &["external", "call", "risk"][..],
        VulnFamily::TD => &["now", "risk"],
        VulnFamily::IO => &["overflow", "risk"],
        VulnFamily::DE => &["delegatecall", "risk"],
        VulnFamily::MU => unreachable!(),
    });
    e
}

fn prompt(vocab: &Vocab, c: &ToyContract) -> Vec<u32> {
    let mut p = vec![BOS, vocab.id(family_word(c.family))];
    p.extend(vocab.encode(&c.words));
    p.push(SEP);
    p
}

fn with_eos(mut v: Vec<u32>) -> Vec<u32> {
    v.push(EOS);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ToySizes {
    pub cpt: usize,
    pub sft: usize,
    pub dpo: usize,
    pub heldout: usize,
    /// Share of vulnerable fine-tuning examples whose explanation is the
    /// degraded one, in percent.
    pub sft_degraded_pct: u32,
}

impl Default for ToySizes {
    fn default() -> Self {
        ToySizes { cpt: 400, sft: 200, dpo: 96, heldout: 48, sft_degraded_pct: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyCorpus {
    pub vocab: Vocab,
    pub data: PipelineData,
    pub model_config: ModelConfig,
}

impl ToyCorpus {
    /// Tokens across every stage's training and held-out items.
    pub fn token_count(&self) -> usize {
        let d = &self.data;
        let triples = |v: &[PreferenceTriple]| v.iter().map(|t| t.prompt.len() + t.chosen.len() + t.rejected.len()).sum::<usize>();
        d.cpt.iter().map(|s| s.len()).sum::<usize>()
            + d.sft
                .iter()
                .map(|p| p.detect.prompt.len() + 1 + p.explain.target.len())
                .sum::<usize>()
            + triples(&d.dpo)
            + triples(&d.heldout_dpo)
    }
}

/// Deterministic toy corpus for `seed`. Held-out triples are drawn from a
/// separate stream, so they are fresh contracts.
pub fn toy_corpus(seed: u64, sizes: ToySizes) -> ToyCorpus {
    let vocab = toy_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, force_vuln: bool| {
        let f = *TOY_FAMILIES.choose(rng).unwrap();
        let v = force_vuln || rng.gen_bool(0.5);
        toy_contract(f, v, rng)
    };

    let cpt = (0..sizes.cpt)
        .map(|_| {
            let c = pick(&mut rng, false);
            let mut t = vec![BOS];
            t.extend(vocab.encode(&c.words));
            CptSequence::new(with_eos(t), MixSource::Contract)
        })
        .collect();

    let sft = (0..sizes.sft)
        .map(|_| {
            let c = pick(&mut rng, false);
            let p = prompt(&vocab, &c);
            let answer = if c.vulnerable { VULN } else { SAFE };
            let words = if !c.vulnerable {
                vec!["no", "issue"]
            } else if rng.gen_range(0..100) < sizes.sft_degraded_pct {
                degraded_explanation(c.family)
            } else {
                good_explanation(c.family)
            };
            let mut explain_prompt = p.clone();
            explain_prompt.push(answer);
            SftPair {
                detect: Completion::new(p, vec![answer]),
                explain: Completion::new(explain_prompt, with_eos(vocab.encode(&words))),
            }
        })
        .collect();

    let triple = |rng: &mut ChaCha8Rng| {
        let c = pick(rng, true);
        let mut p = prompt(&vocab, &c);
        p.push(VULN);
        PreferenceTriple {
            prompt: p,
            chosen: with_eos(vocab.encode(&good_explanation(c.family))),
            rejected: with_eos(vocab.encode(&degraded_explanation(c.family))),
        }
    };
    let dpo = (0..sizes.dpo).map(|_| triple(&mut rng)).collect();
    let mut held_rng = ChaCha8Rng::seed_from_u64(seed);
    held_rng.set_stream(1);
    let heldout_dpo = (0..sizes.heldout).map(|_| triple(&mut held_rng)).collect();

    let model_config = ModelConfig { vocab_size: vocab.len(), dim: 16, context: 48, layers: 1, hidden: 32 };
    ToyCorpus { vocab, data: PipelineData { cpt, sft, dpo, heldout_dpo }, model_config }
}

/// Prompt for a real contract: `<bos> tokens… <sep>`, with the contract cut
/// to leave `reserve` positions within `limit`.
pub fn encode_prompt(vocab: &Vocab, contract: &str, limit: usize, reserve: usize) -> Vec<u32> {
    let room = limit.saturating_sub(reserve + 2);
    let mut p = vec![BOS];
    p.extend(tokenize(contract).iter().take(room).map(|t| vocab.id(t)));
    p.push(SEP);
    p
}

fn encode_completion(vocab: &Vocab, text: &str, room: usize) -> Vec<u32> {
    let mut out: Vec<u32> = tokenize(text).iter().take(room.saturating_sub(1)).map(|t| vocab.id(t)).collect();
    out.push(EOS);
    out
}

/// Splits `limit` between the contract and the explanation, giving the
/// explanation at most `explain_share` of it.
fn budget(limit: usize, explain_share: f64) -> usize {
    ((limit as f64 * explain_share) as usize).max(2)
}

/// Encodes fine-tuning records; every item fits within `limit` tokens.
pub fn encode_sft(vocab: &Vocab, examples: &[SftExample], limit: usize) -> Vec<SftPair> {
    let explain_room = budget(limit, 0.4);
    examples
        .iter()
        .map(|ex| {
            let p = encode_prompt(vocab, &ex.contract, limit, explain_room + 1);
            let answer = if ex.label == Label::Vulnerable { VULN } else { SAFE };
            let mut ep = p.clone();
            ep.push(answer);
            let room = limit - ep.len();
            SftPair {
                detect: Completion::new(p, vec![answer]),
                explain: Completion::new(ep, encode_completion(vocab, &ex.explanation, room)),
            }
        })
        .collect()
}

/// Encodes preference records. The prompt text is reduced to the contract
/// inside it, followed by the vulnerable answer token.
pub fn encode_dpo(vocab: &Vocab, records: &[DpoRecord], limit: usize) -> Vec<PreferenceTriple> {
    let explain_room = budget(limit, 0.4);
    records
        .iter()
        .map(|r| {
            let contract = crate::datasets::extract_contract(&r.prompt);
            let mut p = encode_prompt(vocab, contract, limit, explain_room + 1);
            p.push(VULN);
            let room = limit - p.len();
            PreferenceTriple {
                prompt: p,
                chosen: encode_completion(vocab, &r.chosen, room),
                rejected: encode_completion(vocab, &r.rejected, room),
            }
        })
        .collect()
}

/// Every document that should shape the vocabulary of a real run.
pub fn vocab_documents(sft: &[SftExample], dpo: &[DpoRecord]) -> Vec<Vec<String>> {
    sft.iter()
        .flat_map(|e| [tokenize(&e.contract), tokenize(&e.explanation)])
        .chain(dpo.iter().flat_map(|r| [tokenize(&r.prompt), tokenize(&r.chosen), tokenize(&r.rejected)]))
        .collect()
}
