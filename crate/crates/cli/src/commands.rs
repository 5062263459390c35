use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::Args;
use prefaudit_annotate::{parse_seeds, Candidate as TaskCandidate, Roster, Store, TaskSeed, DEFAULT_PORT};
use prefaudit_core::corpus::dedup;
use prefaudit_core::datasets::{
    build_dpo, build_sft, candidates_for, heuristic_score, parse_sft, select_best, validate_manifest, DatasetManifest,
    DpoRecord, GeneratorClient, Label, LabeledContract, ReviewedExplanation, ScoreCard, TemplateGenerator,
};
use prefaudit_core::evalkit::{
    check_reference_rows, detection_metrics, evaluate, likert_summary, reconstruct_cm, round_pct, LikertRating, Prediction,
    ReportedMetrics,
};
use prefaudit_core::model::{PolicyModel, SAFE, VULN};
use prefaudit_core::scanner::scan_all;
use prefaudit_core::synth::encode_sft;
use prefaudit_core::trainer::{Checkpoint, Stage, TrainConfig};
use prefaudit_core::VulnFamily;
use serde::{Deserialize, Serialize};

use crate::io::{self, usage};

/// Whether a command found something worth a non-zero exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    Findings,
}

#[derive(Debug, Args)]
pub struct DedupArgs {
    /// Jaccard similarity above which a later same-name record is dropped.
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    /// Output directory for kept.jsonl and removed.jsonl (default: <data root>/dedup).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Source directories, corpus JSONL files or .sol files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

pub fn dedup_cmd(data_dir: &Path, a: DedupArgs) -> Result<Outcome> {
    let mut records = Vec::new();
    for p in &a.inputs {
        records.extend(io::load_corpus(data_dir, p)?);
    }
    let outcome = dedup(&records, a.threshold).map_err(|e| usage(e.to_string()))?;
    let out = a.out.unwrap_or_else(|| data_dir.join("dedup"));
    io::write(&out.join("kept.jsonl"), &io::corpus_lines(&outcome.kept)?)?;
    io::write(&out.join("removed.jsonl"), &io::to_lines(&outcome.removed)?)?;
    println!(
        "{} records in, {} kept, {} removed (threshold {}); wrote {}",
        records.len(),
        outcome.kept.len(),
        outcome.removed.len(),
        a.threshold,
        out.display()
    );
    Ok(Outcome::Clean)
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    /// Write the JSONL reports here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Source directories, corpus JSONL files or .sol files.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

pub fn scan_cmd(data_dir: &Path, a: ScanArgs) -> Result<Outcome> {
    let mut reports = Vec::new();
    for p in &a.inputs {
        for r in io::load_corpus(data_dir, p)?.into_iter().filter(|r| r.category.is_contract()) {
            reports.push(scan_all(&r.id, &r.source).with_context(|| format!("scanning {}", r.id))?);
        }
    }
    let text = io::to_lines(&reports)?;
    let findings: usize = reports.iter().map(|r| r.findings.len()).sum();
    match &a.out {
        Some(out) => {
            io::write(out, &text)?;
            eprintln!("{} contracts, {findings} findings; wrote {}", reports.len(), out.display());
        }
        None => print!("{text}"),
    }
    Ok(if findings > 0 { Outcome::Findings } else { Outcome::Clean })
}

/// A contract with its generated explanations, as written by `gen` and read
/// by `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateSet {
    pub id: String,
    pub contract: String,
    #[serde(default)]
    pub family: Option<VulnFamily>,
    pub candidates: Vec<ScoredText>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredText {
    pub generator: String,
    pub text: String,
    #[serde(default)]
    pub score: Option<ScoreCard>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Labeled contracts JSONL ({id, contract, label, vuln_types?, locations?}).
    #[arg(long)]
    pub contracts: PathBuf,
    /// Output JSONL (default: <data root>/candidates.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn gen_cmd(data_dir: &Path, a: GenArgs) -> Result<Outcome> {
    let contracts: Vec<LabeledContract> = io::parse_lines(&io::read(data_dir, &a.contracts)?, "contracts")?;
    let gens = TemplateGenerator::pair(a.seed);
    let clients: Vec<&dyn GeneratorClient> = gens.iter().map(|g| g as &dyn GeneratorClient).collect();
    let sets: Vec<CandidateSet> = contracts
        .iter()
        .map(|c| CandidateSet {
            id: c.id.clone(),
            contract: c.contract.clone(),
            family: c.vuln_types.first().map(|t| t.family()),
            candidates: candidates_for(&c.contract, &clients)
                .into_iter()
                .map(|k| ScoredText { generator: k.generator, text: k.text, score: Some(k.score) })
                .collect(),
        })
        .collect();
    let out = a.out.unwrap_or_else(|| data_dir.join("candidates.jsonl"));
    io::write(&out, &io::to_lines(&sets)?)?;
    println!("{} contracts x {} generators; wrote {}", sets.len(), clients.len(), out.display());
    Ok(Outcome::Clean)
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Candidate sets JSONL as written by `gen`; missing scores are filled in.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Mark the selected explanations as expert-reviewed. Without it
    /// `build-sft` refuses them.
    #[arg(long)]
    pub reviewed: bool,
    /// Output JSONL of selected explanations (default: <data root>/explanations.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write review-task seeds for `serve`, covering contracts with a known family.
    #[arg(long, requires = "reviewers")]
    pub tasks_out: Option<PathBuf>,
    /// The two reviewer ids assigned to every seeded task, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub reviewers: Vec<String>,
}

pub fn score_cmd(data_dir: &Path, a: ScoreArgs) -> Result<Outcome> {
    if a.tasks_out.is_some() && a.reviewers.len() != 2 {
        return Err(usage("--reviewers takes exactly two ids, e.g. --reviewers ana,ben"));
    }
    let sets: Vec<CandidateSet> = io::parse_lines(&io::read(data_dir, &a.candidates)?, "candidates")?;
    let mut selected = Vec::new();
    let mut seeds = Vec::new();
    for s in &sets {
        let cards: Vec<(&ScoredText, ScoreCard)> = s
            .candidates
            .iter()
            .map(|c| (c, c.score.unwrap_or_else(|| heuristic_score(&s.contract, &c.text))))
            .collect();
        let best = select_best(&cards).with_context(|| format!("contract `{}`", s.id))?;
        let score = cards.iter().find(|(c, _)| std::ptr::eq(*c, *best)).map(|(_, k)| *k);
        selected.push(ReviewedExplanation { id: s.id.clone(), text: best.text.clone(), reviewed: a.reviewed, score });
        if let (Some(family), [r1, r2]) = (s.family, a.reviewers.as_slice()) {
            seeds.push(TaskSeed {
                id: s.id.clone(),
                contract: s.contract.clone(),
                family,
                candidates: cards
                    .iter()
                    .map(|(c, k)| TaskCandidate { generator: c.generator.clone(), explanation: c.text.clone(), score: Some(*k) })
                    .collect(),
                reviewers: [r1.clone(), r2.clone()],
            });
        }
    }
    let out = a.out.unwrap_or_else(|| data_dir.join("explanations.jsonl"));
    io::write(&out, &io::to_lines(&selected)?)?;
    println!("selected {} explanations; wrote {}", selected.len(), out.display());
    if let Some(t) = a.tasks_out {
        io::write(&t, &io::to_lines(&seeds)?)?;
        println!("seeded {} review tasks; wrote {}", seeds.len(), t.display());
    }
    Ok(Outcome::Clean)
}

#[derive(Debug, Args)]
pub struct BuildSftArgs {
    /// Labeled contracts JSONL.
    #[arg(long)]
    pub contracts: PathBuf,
    /// Reviewed explanations JSONL, one per contract id.
    #[arg(long)]
    pub explanations: PathBuf,
    /// Output JSONL (default: <data root>/sft.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn build_sft_cmd(data_dir: &Path, a: BuildSftArgs) -> Result<Outcome> {
    let contracts: Vec<LabeledContract> = io::parse_lines(&io::read(data_dir, &a.contracts)?, "contracts")?;
    let explanations: Vec<ReviewedExplanation> = io::parse_lines(&io::read(data_dir, &a.explanations)?, "explanations")?;
    let text = build_sft(&contracts, &explanations)?;
    let out = a.out.unwrap_or_else(|| data_dir.join("sft.jsonl"));
    io::write(&out, &text)?;
    println!("{} examples; wrote {}", text.lines().count(), out.display());
    Ok(Outcome::Clean)
}

#[derive(Debug, Args)]
pub struct BuildDpoArgs {
    /// Preference pairs JSONL ({id, prompt, chosen, rejected, tag}).
    #[arg(long)]
    pub pairs: PathBuf,
    /// Output JSONL (default: <data root>/dpo.jsonl).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn build_dpo_cmd(data_dir: &Path, a: BuildDpoArgs) -> Result<Outcome> {
    let pairs: Vec<DpoRecord> = io::parse_lines(&io::read(data_dir, &a.pairs)?, "pairs")?;
    let text = build_dpo(&pairs)?;
    let out = a.out.unwrap_or_else(|| data_dir.join("dpo.jsonl"));
    io::write(&out, &text)?;
    println!("{} pairs; wrote {}", pairs.len(), out.display());
    Ok(Outcome::Clean)
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gold fine-tuning-format JSONL.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predictions JSONL ({id, predicted_label, family?, explanation?}).
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    pub pred: Option<PathBuf>,
    /// Predict with a trained checkpoint instead of reading --pred.
    #[arg(long, value_name = "CHECKPOINT")]
    pub model: Option<PathBuf>,
    /// Likert ratings JSONL ({dimension, score, rationale?}) to summarise alongside.
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Report file (default: <data root>/eval-report.json).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Label by comparing the two answer tokens after the detection prompt;
/// the explanation is the greedy continuation after that answer.
fn predict(model: &PolicyModel, ck_vocab: &prefaudit_core::model::Vocab, gold: &[prefaudit_core::datasets::SftExample]) -> Result<Vec<Prediction>> {
    let limit = TrainConfig::desk(Stage::Sft).cutoff_len.min(model.config().context);
    let encoded = encode_sft(ck_vocab, gold, limit);
    gold.iter()
        .zip(&encoded)
        .map(|(g, pair)| {
            let mut prompt = pair.detect.prompt.clone();
            let lp = model.next_logprobs(&prompt)?;
            let vulnerable = lp[VULN as usize] > lp[SAFE as usize];
            prompt.push(if vulnerable { VULN } else { SAFE });
            let body = model.greedy_decode(&prompt, limit)?;
            Ok(Prediction {
                id: g.id.clone(),
                predicted_label: if vulnerable { Label::Vulnerable } else { Label::Secure },
                family: g.vuln_types.first().map(|t| t.family()),
                explanation: Some(ck_vocab.decode(&body).join(" ")),
            })
        })
        .collect()
}

pub fn eval_cmd(data_dir: &Path, a: EvalArgs) -> Result<Outcome> {
    let gold = parse_sft(&io::read(data_dir, &a.gold)?).context("parsing gold")?;
    let preds: Vec<Prediction> = match (&a.pred, &a.model) {
        (Some(p), _) => io::parse_lines(&io::read(data_dir, p)?, "predictions")?,
        (None, Some(m)) => {
            let p = io::resolve(data_dir, m);
            let ck = Checkpoint::load(&p).with_context(|| format!("loading {}", p.display()))?;
            let (model, vocab) = ck.model.into_model()?;
            let vocab = vocab.ok_or_else(|| usage(format!("{} carries no vocabulary", p.display())))?;
            predict(&model, &vocab, &gold)?
        }
        (None, None) => unreachable!("clap requires one of --pred / --model"),
    };
    let mut report = evaluate(&preds, &gold)?;
    if let Some(r) = &a.ratings {
        let ratings: Vec<LikertRating> = io::parse_lines(&io::read(data_dir, r)?, "ratings")?;
        report.likert = Some(likert_summary(&ratings)?);
    }
    let out = a.out.unwrap_or_else(|| data_dir.join("eval-report.json"));
    io::write(&out, &serde_json::to_string_pretty(&report)?)?;
    print!("{}", report.render());
    if !report.missing.is_empty() {
        println!("{} gold records had no prediction", report.missing.len());
    }
    println!("wrote {}", out.display());
    Ok(Outcome::Clean)
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = DEFAULT_PORT)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    /// Reviewer roster JSON: [{"id": ..., "token": ...}, ...].
    #[arg(long)]
    pub roster: PathBuf,
    /// Task seeds JSONL; ids already in the log are skipped.
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    /// Event log (default: <data root>/annotate-events.jsonl).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Largest per-dimension score gap two reviewers may have without a dispute.
    #[arg(long, default_value_t = prefaudit_annotate::DEFAULT_DISPUTE_THRESHOLD)]
    pub threshold: u8,
}

pub fn serve_cmd(data_dir: &Path, a: ServeArgs) -> Result<Outcome> {
    let roster = Roster::from_json(&io::read(data_dir, &a.roster)?).map_err(|e| usage(format!("roster: {e}")))?;
    let log = a.log.unwrap_or_else(|| data_dir.join("annotate-events.jsonl"));
    if let Some(parent) = log.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let store = Store::open(&log, roster, a.threshold).with_context(|| format!("opening {}", log.display()))?;
    if let Some(t) = &a.tasks {
        let seeds: Vec<TaskSeed> = parse_seeds(&io::read(data_dir, t)?)?;
        let n = store.ensure_tasks(seeds)?;
        println!("loaded {n} new tasks from {}", t.display());
    }
    let addr = SocketAddr::new(a.host, a.port);
    println!("serving {} tasks on http://{addr} (log {})", store.tasks().len(), log.display());
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(prefaudit_annotate::serve(Arc::new(store), addr))?;
    Ok(Outcome::Clean)
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Printed accuracy, in percent.
    #[arg(long, required_unless_present = "reference")]
    pub accuracy: Option<f64>,
    #[arg(long)]
    pub precision: Option<f64>,
    #[arg(long)]
    pub recall: Option<f64>,
    /// Printed F1, in percent.
    #[arg(long, required_unless_present = "reference")]
    pub f1: Option<f64>,
    /// Vulnerable samples in the split.
    #[arg(long, required_unless_present = "reference")]
    pub positives: Option<u64>,
    /// Samples in the split.
    #[arg(long, required_unless_present = "reference")]
    pub total: Option<u64>,
    /// Decimal places the metrics were printed with.
    #[arg(long, default_value_t = 2)]
    pub decimals: u32,
    /// Check every bundled published row against the reference split sizes.
    #[arg(long, conflicts_with_all = ["accuracy", "precision", "recall", "f1", "positives", "total"])]
    pub reference: bool,
}

pub fn reconstruct_cmd(a: ReconstructArgs) -> Result<Outcome> {
    if a.reference {
        let splits: BTreeMap<VulnFamily, (u64, u64)> =
            DatasetManifest::reference().eval.into_iter().map(|(f, s)| (f, (s.vulnerable, s.total))).collect();
        let rows = check_reference_rows(&splits);
        let mut bad = 0;
        for r in &rows {
            let f1 = match r.f1_consistent {
                Some(false) => " (printed F1 disagrees with printed P/R)",
                _ => "",
            };
            println!("{:<28} {:<3} {:>3} matrices{f1}", r.method, r.family.as_str(), r.candidates.len());
            bad += usize::from(r.candidates.is_empty());
        }
        println!("{} rows, {bad} without an integer solution", rows.len());
        return Ok(if bad > 0 { Outcome::Findings } else { Outcome::Clean });
    }
    let (Some(acc), Some(f1), Some(pos), Some(total)) = (a.accuracy, a.f1, a.positives, a.total) else {
        return Err(usage("--accuracy, --f1, --positives and --total are required"));
    };
    let reported = ReportedMetrics { accuracy: Some(acc), precision: a.precision, recall: a.recall, f1: Some(f1), decimals: a.decimals };
    if pos > total {
        return Err(usage("--positives exceeds --total"));
    }
    let sols = reconstruct_cm(&reported, pos, total).map_err(|e| usage(e.to_string()))?;
    for cm in &sols {
        let m = detection_metrics(cm)?;
        let d = a.decimals;
        println!(
            "{cm}  A={} P={} R={} F1={}",
            round_pct(m.accuracy, d),
            round_pct(m.precision, d),
            round_pct(m.recall, d),
            round_pct(m.f1, d)
        );
    }
    println!("{} matching confusion matrices", sols.len());
    Ok(if sols.is_empty() { Outcome::Findings } else { Outcome::Clean })
}

#[derive(Debug, Args)]
pub struct ManifestArgs {
    /// Dataset manifest JSON; omit with --reference.
    #[arg(required_unless_present = "reference")]
    pub path: Option<PathBuf>,
    /// Check the bundled full-scale reference manifest.
    #[arg(long, conflicts_with = "path")]
    pub reference: bool,
}

pub fn manifest_cmd(data_dir: &Path, a: ManifestArgs) -> Result<Outcome> {
    let m: DatasetManifest = match &a.path {
        Some(p) => serde_json::from_str(&io::read(data_dir, p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => DatasetManifest::reference(),
    };
    let report = validate_manifest(&m);
    for c in &report.checks {
        println!("{} {}: {}", if c.ok { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if report.is_consistent() { Outcome::Clean } else { Outcome::Findings })
}
