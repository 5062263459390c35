use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use prefaudit_core::corpus::{tokenize, CptSequence, MixSource};
use prefaudit_core::datasets::{parse_dpo, parse_sft, DpoRecord, SftExample};
use prefaudit_core::model::{ModelConfig, PolicyModel, Vocab, BOS, EOS};
use prefaudit_core::synth::{encode_dpo, encode_sft, toy_corpus, vocab_documents, ToySizes};
use prefaudit_core::trainer::{
    pipeline, run_stage, Checkpoint, PipelineConfig, PipelineData, RunOptions, Stage, StageData, StageReport, TrainConfig,
    CURVE_CSV_HEADER,
};
use serde_json::json;

use crate::io::{self, usage};

/// Size cap of a vocabulary built from real data.
const MAX_VOCAB: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StageArg {
    Cpt,
    Sft,
    Dpo,
}

impl From<StageArg> for Stage {
    fn from(s: StageArg) -> Stage {
        match s {
            StageArg::Cpt => Stage::Cpt,
            StageArg::Sft => Stage::Sft,
            StageArg::Dpo => Stage::Dpo,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run one stage only; without it the whole pipeline runs.
    #[arg(long, value_enum)]
    pub stage: Option<StageArg>,
    /// TOML hyper-parameters: a flat stage file with --stage, otherwise
    /// optional [cpt], [sft] and [dpo] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Frozen reference checkpoint; required for --stage dpo.
    #[arg(long = "ref", value_name = "CHECKPOINT")]
    pub reference: Option<PathBuf>,
    /// Checkpoint to start from (defaults to --ref for the dpo stage).
    #[arg(long, value_name = "CHECKPOINT")]
    pub init: Option<PathBuf>,
    /// Continue an interrupted stage from one of its cadence checkpoints.
    #[arg(long, value_name = "CHECKPOINT")]
    pub resume: Option<PathBuf>,
    /// Train on the built-in synthetic corpus instead of data files.
    #[arg(long)]
    pub toy: bool,
    /// Pre-training corpus (directory, corpus JSONL or .sol file).
    #[arg(long)]
    pub cpt: Option<PathBuf>,
    /// Fine-tuning JSONL.
    #[arg(long)]
    pub sft: Option<PathBuf>,
    /// Preference JSONL.
    #[arg(long)]
    pub dpo: Option<PathBuf>,
    /// Held-out preference JSONL for the margin diagnostic.
    #[arg(long)]
    pub heldout: Option<PathBuf>,
    /// Skip continual pre-training.
    #[arg(long)]
    pub no_cpt: bool,
    /// Skip preference optimisation.
    #[arg(long)]
    pub no_dpo: bool,
    /// Output directory (default: <data root>/runs/train).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Everything that determines token ids: vocabulary and model shape.
struct Space {
    vocab: Vocab,
    config: ModelConfig,
}

fn desk_model(vocab_size: usize) -> ModelConfig {
    ModelConfig { vocab_size, dim: 16, context: 128, layers: 1, hidden: 32 }
}

fn load_checkpoint(data_dir: &Path, path: &Path) -> Result<Checkpoint> {
    let p = io::resolve(data_dir, path);
    Checkpoint::load(&p).with_context(|| format!("loading checkpoint {}", p.display()))
}

fn checkpoint_space(ck: &Checkpoint, path: &Path) -> Result<Space> {
    let vocab = ck
        .model
        .vocab
        .clone()
        .ok_or_else(|| usage(format!("{} carries no vocabulary", path.display())))?;
    Ok(Space { vocab, config: ck.model.config })
}

fn load_sft(data_dir: &Path, p: &Option<PathBuf>) -> Result<Vec<SftExample>> {
    match p {
        Some(p) => Ok(parse_sft(&io::read(data_dir, p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => Ok(Vec::new()),
    }
}

fn load_dpo(data_dir: &Path, p: &Option<PathBuf>) -> Result<Vec<DpoRecord>> {
    match p {
        Some(p) => Ok(parse_dpo(&io::read(data_dir, p)?).with_context(|| format!("parsing {}", p.display()))?),
        None => Ok(Vec::new()),
    }
}

fn limit(config: &TrainConfig, space: &Space) -> usize {
    config.cutoff_len.min(space.config.context)
}

fn encode_cpt(space: &Space, sources: &[(String, MixSource)], limit: usize) -> Vec<CptSequence> {
    sources
        .iter()
        .filter_map(|(text, source)| {
            let mut t = vec![BOS];
            t.extend(tokenize(text).iter().take(limit.saturating_sub(2)).map(|w| space.vocab.id(w)));
            t.push(EOS);
            (t.len() > 2).then(|| CptSequence::new(t, *source))
        })
        .collect()
}

struct RealData {
    cpt: Vec<(String, MixSource)>,
    sft: Vec<SftExample>,
    dpo: Vec<DpoRecord>,
    heldout: Vec<DpoRecord>,
}

impl RealData {
    fn load(data_dir: &Path, a: &TrainArgs) -> Result<Self> {
        let cpt = match &a.cpt {
            Some(p) => io::load_corpus(data_dir, p)?
                .into_iter()
                .map(|r| {
                    let src = if r.category.is_contract() { MixSource::Contract } else { MixSource::General };
                    (r.source, src)
                })
                .collect(),
            None => Vec::new(),
        };
        Ok(RealData { cpt, sft: load_sft(data_dir, &a.sft)?, dpo: load_dpo(data_dir, &a.dpo)?, heldout: load_dpo(data_dir, &a.heldout)? })
    }

    fn space(&self) -> Space {
        let mut docs = vocab_documents(&self.sft, &self.dpo);
        docs.extend(self.cpt.iter().map(|(t, _)| tokenize(t)));
        let vocab = Vocab::build(docs.iter().map(|d| d.as_slice()), MAX_VOCAB);
        let config = desk_model(vocab.len());
        Space { vocab, config }
    }
}

/// Reads a single-stage TOML; `--seed` fills in when the file sets none.
fn stage_config(text: &str, seed: u64) -> Result<TrainConfig> {
    let mut t: toml::Table = toml::from_str(text)?;
    t.entry("seed").or_insert(toml::Value::Integer(seed as i64));
    Ok(TrainConfig::from_toml(&toml::to_string(&t)?)?)
}

/// Reads a pipeline TOML with optional per-stage tables; each table takes
/// the same keys as a single-stage file, minus `stage`.
fn pipeline_config(text: &str, seed: u64) -> Result<PipelineConfig> {
    let mut table: toml::Table = toml::from_str(text).context("parsing pipeline config")?;
    let mut out = PipelineConfig::desk(seed);
    for stage in Stage::ALL {
        let Some(v) = table.remove(stage.as_str()) else { continue };
        let toml::Value::Table(mut t) = v else { bail!(usage(format!("[{stage}] must be a table"))) };
        t.entry("seed").or_insert(toml::Value::Integer(seed as i64));
        t.insert("stage".into(), toml::Value::String(stage.as_str().into()));
        let c = TrainConfig::from_toml(&toml::to_string(&t)?).map_err(|e| usage(format!("[{stage}]: {e}")))?;
        match stage {
            Stage::Cpt => out.cpt = Some(c),
            Stage::Sft => out.sft = c,
            Stage::Dpo => out.dpo = Some(c),
        }
    }
    if let Some(k) = table.keys().next() {
        return Err(usage(format!("unknown pipeline config key `{k}`")));
    }
    Ok(out)
}

fn write_reports(out: &Path, reports: &[StageReport]) -> Result<()> {
    for r in reports {
        io::write(&out.join(format!("{}-curve.csv", r.stage)), &format!("{CURVE_CSV_HEADER}{}", r.curve_csv()))?;
    }
    Ok(())
}

fn summarize(r: &StageReport) -> String {
    let mut s = format!("{}: {} steps", r.stage, r.curve.len());
    if let Some(l) = r.final_loss {
        s.push_str(&format!(", final loss {l:.6}"));
    }
    s.push_str(&format!(", {} ms", r.wall_time_ms));
    if let (Some(a), Some(b)) = (r.heldout_before, r.heldout_after) {
        let what = if r.stage == Stage::Dpo { "margin" } else { "loss" };
        s.push_str(&format!(", held-out {what} {a:.6} -> {b:.6}"));
    }
    s
}

pub fn run(data_dir: &Path, a: TrainArgs) -> Result<()> {
    let out = a.out.clone().unwrap_or_else(|| data_dir.join("runs").join("train"));
    match a.stage {
        Some(stage) => single_stage(data_dir, &a, stage.into(), &out),
        None => full_pipeline(data_dir, &a, &out),
    }
}

fn single_stage(data_dir: &Path, a: &TrainArgs, stage: Stage, out: &Path) -> Result<()> {
    if a.no_cpt || a.no_dpo {
        return Err(usage("--no-cpt / --no-dpo only apply to a full pipeline run"));
    }
    if stage == Stage::Dpo && a.reference.is_none() {
        return Err(usage("--stage dpo needs a frozen reference: pass --ref <checkpoint>"));
    }
    let config = match &a.config {
        Some(p) => {
            let c = stage_config(&io::read(data_dir, p)?, a.seed).map_err(|e| usage(format!("{}: {e:#}", p.display())))?;
            if c.stage != stage {
                return Err(usage(format!("{} is a {} config but --stage is {stage}", p.display(), c.stage)));
            }
            c
        }
        None => TrainConfig { seed: a.seed, ..TrainConfig::desk(stage) },
    };

    let reference = a.reference.as_ref().map(|p| load_checkpoint(data_dir, p).map(|c| (p.clone(), c))).transpose()?;
    let init_path = a.init.clone().or_else(|| (stage == Stage::Dpo).then(|| a.reference.clone()).flatten());
    let init = init_path.as_ref().map(|p| load_checkpoint(data_dir, p).map(|c| (p.clone(), c))).transpose()?;
    let resume = a.resume.as_ref().map(|p| load_checkpoint(data_dir, p)).transpose()?;

    let toy = a.toy.then(|| toy_corpus(a.seed, ToySizes::default()));
    let real = if a.toy { None } else { Some(RealData::load(data_dir, a)?) };

    let space = match (&init, &toy, &real) {
        (Some((p, ck)), _, _) => checkpoint_space(ck, p)?,
        (None, Some(t), _) => Space { vocab: t.vocab.clone(), config: t.model_config },
        (None, None, Some(r)) => r.space(),
        _ => unreachable!("either toy or real data is loaded"),
    };
    if let Some((p, ck)) = &reference {
        let rs = checkpoint_space(ck, p)?;
        if rs.vocab != space.vocab || rs.config != space.config {
            return Err(usage("--ref and the starting model use different vocabularies or shapes"));
        }
    }

    let lim = limit(&config, &space);
    let (data, heldout) = match (&toy, &real) {
        (Some(t), _) => {
            let d = &t.data;
            match stage {
                Stage::Cpt => (StageData::Cpt(d.cpt.clone()), None),
                Stage::Sft => (StageData::Sft(d.sft.clone()), None),
                Stage::Dpo => (StageData::Dpo(d.dpo.clone()), Some(StageData::Dpo(d.heldout_dpo.clone()))),
            }
        }
        (None, Some(r)) => {
            let data = match stage {
                Stage::Cpt => StageData::Cpt(encode_cpt(&space, &r.cpt, lim)),
                Stage::Sft => StageData::Sft(encode_sft(&space.vocab, &r.sft, lim)),
                Stage::Dpo => StageData::Dpo(encode_dpo(&space.vocab, &r.dpo, lim)),
            };
            let heldout = (stage == Stage::Dpo && !r.heldout.is_empty())
                .then(|| StageData::Dpo(encode_dpo(&space.vocab, &r.heldout, lim)));
            (data, heldout)
        }
        _ => unreachable!(),
    };
    if data.is_empty() {
        let flag = format!("--{stage}");
        return Err(usage(format!("no {stage} training data: pass {flag} <file> or --toy")));
    }

    let model = match &init {
        Some((_, ck)) => ck.policy()?,
        None => PolicyModel::new(space.config, config.seed)?,
    };
    let reference_model = reference.as_ref().map(|(_, ck)| ck.policy()).transpose()?;
    let opts = RunOptions { checkpoint_dir: Some(out.to_path_buf()), resume, heldout, vocab: Some(space.vocab.clone()) };
    let (ck, report) = run_stage(&config, &data, model, reference_model.as_ref(), &opts)?;

    let final_path = out.join(format!("{stage}-final.json"));
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    ck.save(&final_path)?;
    write_reports(out, std::slice::from_ref(&report))?;
    let summary = json!({ "stage": stage, "checkpoint": final_path, "report": report });
    io::write(&out.join("report.json"), &serde_json::to_string_pretty(&summary)?)?;
    println!("{}", summarize(&report));
    if let Some(m) = report.epoch_margins.last() {
        println!("dpo: last-epoch margin vs reference {m:.6}");
    }
    println!("wrote {}", final_path.display());
    Ok(())
}

fn full_pipeline(data_dir: &Path, a: &TrainArgs, out: &Path) -> Result<()> {
    if a.reference.is_some() || a.init.is_some() || a.resume.is_some() {
        return Err(usage("--ref, --init and --resume apply to single-stage runs (--stage)"));
    }
    let mut configs = match &a.config {
        Some(p) => pipeline_config(&io::read(data_dir, p)?, a.seed)?,
        None => PipelineConfig::desk(a.seed),
    };
    if a.no_cpt {
        configs.cpt = None;
    }
    if a.no_dpo {
        configs.dpo = None;
    }

    let (space, data) = if a.toy {
        let t = toy_corpus(a.seed, ToySizes::default());
        (Space { vocab: t.vocab, config: t.model_config }, t.data)
    } else {
        let r = RealData::load(data_dir, a)?;
        if r.sft.is_empty() {
            return Err(usage("a pipeline run needs --sft <file> (or --toy)"));
        }
        if configs.cpt.is_some() && r.cpt.is_empty() {
            return Err(usage("pre-training needs --cpt <corpus>; pass --no-cpt to skip it"));
        }
        if configs.dpo.is_some() && r.dpo.is_empty() {
            return Err(usage("preference optimisation needs --dpo <file>; pass --no-dpo to skip it"));
        }
        let space = r.space();
        let lim = |c: Option<&TrainConfig>| c.map_or(space.config.context, |c| limit(c, &space));
        let data = PipelineData {
            cpt: encode_cpt(&space, &r.cpt, lim(configs.cpt.as_ref())),
            sft: encode_sft(&space.vocab, &r.sft, lim(Some(&configs.sft))),
            dpo: encode_dpo(&space.vocab, &r.dpo, lim(configs.dpo.as_ref())),
            heldout_dpo: encode_dpo(&space.vocab, &r.heldout, lim(configs.dpo.as_ref())),
        };
        (space, data)
    };

    let initial = PolicyModel::new(space.config, a.seed)?;
    let opts = RunOptions { checkpoint_dir: Some(out.to_path_buf()), resume: None, heldout: None, vocab: Some(space.vocab) };
    let outcome = pipeline(&configs, &data, initial, &opts)?;
    write_reports(out, &outcome.reports)?;
    let summary = json!({
        "stages": outcome.reports.iter().map(|r| r.stage).collect::<Vec<_>>(),
        "reports": outcome.reports,
        "heldout_margin_after_sft": outcome.sft_margin,
        "heldout_margin_after_dpo": outcome.dpo_margin,
    });
    io::write(&out.join("report.json"), &serde_json::to_string_pretty(&summary)?)?;
    for r in &outcome.reports {
        println!("{}", summarize(r));
    }
    if let (Some(s), Some(d)) = (outcome.sft_margin, outcome.dpo_margin) {
        println!("held-out preference margin: {s:.6} after sft, {d:.6} after dpo");
    }
    println!("wrote {}", out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pipeline_tables_override_single_keys() {
        let c = pipeline_config("[sft]\nepochs = 7\n[dpo]\nbeta = 0.5\n", 9).unwrap();
        assert_eq!(c.sft.epochs, 7);
        assert_eq!(c.sft.seed, 9);
        assert_eq!(c.sft.batch_size, TrainConfig::desk(Stage::Sft).batch_size);
        assert_eq!(c.dpo.unwrap().beta, 0.5);
        assert!(c.cpt.is_some());
    }

    #[test]
    fn pipeline_config_rejects_unknown_tables_and_keys() {
        assert!(pipeline_config("[ppo]\nlr = 1.0\n", 0).is_err());
        assert!(pipeline_config("[sft]\nlearning_rate = 1.0\n", 0).is_err());
    }
}
