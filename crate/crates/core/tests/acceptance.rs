//! Acceptance suite: one PASS/FAIL line per criterion, each with its time
//! budget. Runs as a plain binary so the lines always reach the output.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use prefaudit_core::corpus::{dedup, jaccard, load_dir, ContractRecord};
use prefaudit_core::datasets::{composite_score, validate_manifest, DatasetManifest};
use prefaudit_core::evalkit::{
    detection_metrics, likert_summary, reconstruct_cm, round_pct, ConfusionMatrix, LikertDimension, LikertRating,
    ReportedMetrics,
};
use prefaudit_core::losses::{
    cpt_loss, dpo_loss, implied_reward, optimal_policy, sft_loss, Completion, LossOutput, PreferenceBatch,
    PreferenceTriple, RewardTable,
};
use prefaudit_core::model::{ModelConfig, PolicyModel, EOS};
use prefaudit_core::scanner::{scan, scan_all, AuditableType, RULES};
use prefaudit_core::synth::{toy_corpus, ToySizes};
use prefaudit_core::taxonomy::VulnFamily;
use prefaudit_core::trainer::{pipeline, run_stage, PipelineConfig, RunOptions, Stage, StageData, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn dpo_identity() -> Outcome {
    let cfg = ModelConfig { vocab_size: 12, dim: 6, context: 12, layers: 2, hidden: 8 };
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let m = PolicyModel::with_head_scale(cfg, seed, 0.5).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seq = |n: usize| (0..n).map(|_| rng.gen_range(7..12)).collect::<Vec<u32>>();
        let triples = (0..4).map(|_| PreferenceTriple { prompt: seq(3), chosen: seq(4), rejected: seq(2) }).collect();
        let out = dpo_loss(&m, &m, &PreferenceBatch { triples, beta: 0.1 }).map_err(|e| e.to_string())?;
        worst = worst.max((out.loss - std::f64::consts::LN_2).abs());
    }
    ensure(worst < 1e-9, format!("max |loss − ln2| = {worst:e}"))?;
    Ok(format!("max |loss − ln2| = {worst:e} over 10 models"))
}

fn relative_fd_error(model: &PolicyModel, f: &dyn Fn(&PolicyModel) -> LossOutput) -> f64 {
    let analytic = f(model).grad;
    let h = 1e-4;
    let mut probe = model.clone();
    let mut diff = 0.0;
    let mut norm_a = 0.0;
    let mut norm_n = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + h;
        let up = f(&probe).loss;
        probe.params_mut()[i] = orig - h;
        let down = f(&probe).loss;
        probe.params_mut()[i] = orig;
        let n = (up - down) / (2.0 * h);
        diff += (a - n) * (a - n);
        norm_a += a * a;
        norm_n += n * n;
    }
    diff.sqrt() / norm_a.sqrt().max(norm_n.sqrt()).max(1e-12)
}

fn gradient_oracles() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for inst in 0..102u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
        let cfg = ModelConfig {
            vocab_size: rng.gen_range(8..13),
            dim: rng.gen_range(3..7),
            context: 12,
            layers: rng.gen_range(1..=2),
            hidden: rng.gen_range(4..9),
        };
        let v = cfg.vocab_size as u32;
        let m = PolicyModel::with_head_scale(cfg, inst, 0.5).map_err(|e| e.to_string())?;
        let mut seq = |lo: usize, hi: usize| {
            let n = rng.gen_range(lo..=hi);
            (0..n).map(|_| rng.gen_range(0..v)).collect::<Vec<u32>>()
        };
        let err = match inst % 3 {
            0 => {
                let seqs = vec![seq(1, 6), seq(1, 6)];
                relative_fd_error(&m, &|p| cpt_loss(p, &seqs).unwrap())
            }
            1 => {
                let det = vec![Completion::new(seq(1, 5), seq(1, 1)), Completion::new(seq(1, 5), seq(1, 1))];
                let exp = vec![Completion::new(seq(1, 5), seq(1, 5))];
                relative_fd_error(&m, &|p| sft_loss(p, &det, &exp).unwrap())
            }
            _ => {
                let reference = PolicyModel::with_head_scale(cfg, inst + 7, 0.5).map_err(|e| e.to_string())?;
                let mut triples = Vec::new();
                for _ in 0..2 {
                    let (prompt, chosen) = (seq(1, 4), seq(1, 4));
                    let mut rejected = seq(1, 4);
                    if rejected == chosen {
                        rejected.push(EOS);
                    }
                    triples.push(PreferenceTriple { prompt, chosen, rejected });
                }
                let batch = PreferenceBatch { triples, beta: 0.5 + inst as f64 / 100.0 };
                relative_fd_error(&m, &|p| dpo_loss(p, &reference, &batch).unwrap())
            }
        };
        worst = worst.max(err);
        count += 1;
    }
    ensure(worst < 1e-5, format!("worst relative error {worst:e}"))?;
    Ok(format!("{count} instances (cpt/sft/dpo, 1–2 layers), worst relative error {worst:e}"))
}

fn reward_consistency() -> Outcome {
    let mut worst_norm: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    for t in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(t);
        let n = rng.gen_range(2..=8usize);
        let beta = rng.gen_range(0.05..2.0);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let table = RewardTable {
            rewards: (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            reference: raw.iter().map(|p| p / z).collect(),
            beta,
        };
        let pi = optimal_policy(&table).map_err(|e| e.to_string())?;
        worst_norm = worst_norm.max((pi.iter().sum::<f64>() - 1.0).abs());

        // Realise π_ref and π* as single-token policies over outcome tokens
        // 7..7+n with a zero head: log-probabilities are bias minus LSE.
        let cfg = ModelConfig { vocab_size: 7 + n, dim: 4, context: 4, layers: 1, hidden: 4 };
        let mut reference = PolicyModel::new(cfg, t).map_err(|e| e.to_string())?;
        let mut policy = reference.clone();
        for (y, (r, p)) in table.reference.iter().zip(&pi).enumerate() {
            reference.output_bias_mut()[7 + y] = r.ln();
            policy.output_bias_mut()[7 + y] = p.ln();
        }
        let mut resid = Vec::new();
        for y in 0..n {
            let r = implied_reward(&policy, &reference, &[1], &[7 + y as u32], beta).map_err(|e| e.to_string())?;
            resid.push(r - table.rewards[y]);
        }
        let mean = resid.iter().sum::<f64>() / n as f64;
        let std = (resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        worst_std = worst_std.max(std);
    }
    ensure(worst_norm <= 1e-12, format!("normalisation error {worst_norm:e}"))?;
    ensure(worst_std < 1e-10, format!("residual std {worst_std:e}"))?;
    Ok(format!("50 tables: |Σπ*−1| ≤ {worst_norm:e}, residual std ≤ {worst_std:e}"))
}

fn bandit() -> Outcome {
    let cfg = ModelConfig { vocab_size: 12, dim: 8, context: 8, layers: 1, hidden: 8 };
    let reference = PolicyModel::with_head_scale(cfg, 5, 0.3).map_err(|e| e.to_string())?;
    let frozen = reference.clone();
    let (y1, y2, y3) = (vec![8, EOS], vec![9, 10, EOS], vec![11, EOS]);
    let prompt = vec![7];
    let triples = vec![
        PreferenceTriple { prompt: prompt.clone(), chosen: y1.clone(), rejected: y2 },
        PreferenceTriple { prompt, chosen: y1, rejected: y3 },
    ];
    let config = TrainConfig { lr: 1e-2, batch_size: 2, epochs: 10, ..TrainConfig::desk(Stage::Dpo) };
    let (_, report) = run_stage(&config, &StageData::Dpo(triples), reference.clone(), Some(&reference), &RunOptions::default())
        .map_err(|e| e.to_string())?;
    ensure(reference == frozen, "reference changed")?;
    let m = &report.epoch_margins;
    ensure(m.len() == 10, format!("{} epochs", m.len()))?;
    ensure(m[0] > 0.0, format!("first-epoch margin {}", m[0]))?;
    ensure(m.windows(2).all(|w| w[1] > w[0]), format!("margins not strictly increasing: {m:?}"))?;
    Ok(format!("margin {:.4} → {:.4} over 10 epochs, strictly increasing", m[0], m[9]))
}

fn table_arithmetic() -> Outcome {
    let rows = [
        (VulnFamily::RE, [94.47, 90.91, 86.21, 88.50], 116, 470, Some(ConfusionMatrix::new(100, 10, 344, 16))),
        (VulnFamily::TD, [95.54, 97.83, 95.07, 96.43], 568, 896, None),
        (VulnFamily::DE, [94.12, 100.00, 73.68, 84.85], 76, 340, None),
    ];
    let mut notes = Vec::new();
    for (fam, printed, pos, total, expect) in rows {
        let sols = reconstruct_cm(&ReportedMetrics::full(printed, 2), pos, total).map_err(|e| e.to_string())?;
        ensure(!sols.is_empty(), format!("{fam}: no matrix"))?;
        if let Some(cm) = expect {
            ensure(sols.contains(&cm), format!("{fam}: {cm} missing from {sols:?}"))?;
        }
        for cm in &sols {
            let m = detection_metrics(cm).map_err(|e| e.to_string())?;
            let got = [m.accuracy, m.precision, m.recall, m.f1].map(|x| round_pct(x, 2));
            for (g, p) in got.iter().zip(printed) {
                ensure((g - p).abs() <= 0.01 + 1e-9, format!("{fam}: {cm} gives {got:?}"))?;
            }
        }
        notes.push(format!("{fam} {}", sols.iter().map(|c| format!("({},{},{},{})", c.tp, c.fp, c.tn, c.fn_)).collect::<Vec<_>>().join("|")));
    }
    Ok(notes.join("; "))
}

fn likert() -> Outcome {
    let ratings = |counts: [u64; 4]| -> Vec<LikertRating> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| {
                (0..c).map(move |_| LikertRating { dimension: LikertDimension::Correctness, score: i as u8 + 1, rationale: None })
            })
            .collect()
    };
    let mut notes = Vec::new();
    for (panel, counts, want) in [("llm", [56, 86, 85, 834], 86.62), ("human", [19, 181, 215, 646], 81.15)] {
        let s = likert_summary(&ratings(counts)).map_err(|e| e.to_string())?;
        let d = s.dimensions[&LikertDimension::Correctness];
        ensure(d.counts == counts && d.n() == 1061, format!("{panel}: counts {:?}", d.counts))?;
        let share = d.positive_share_pct();
        ensure((share - want).abs() <= 0.01, format!("{panel}: {share}"))?;
        notes.push(format!("{panel} {share:.4}%"));
    }
    Ok(notes.join(", "))
}

/// 160 base records in 8 filename groups and 40 near-copies, each placed
/// after its base in the same group.
fn planted_corpus() -> (Vec<ContractRecord>, BTreeSet<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let common: Vec<String> = (0..50).map(|i| format!("kw{i}")).collect();
    let mut bases: Vec<Vec<String>> = Vec::new();
    for b in 0..160 {
        let mut toks: Vec<String> = (0..20).map(|_| common[rng.gen_range(0..common.len())].clone()).collect();
        toks.extend((0..40).map(|k| format!("u{b}x{k}")));
        bases.push(toks);
    }
    let mut records = Vec::new();
    let mut planted = BTreeSet::new();
    for (b, toks) in bases.iter().enumerate() {
        let file = format!("F{}.sol", b % 8);
        records.push(ContractRecord::contract(format!("base{b}"), &file, toks.join(" ")).unwrap());
        if b % 4 == 0 {
            // drop two unique tokens, add one fresh one
            let mut copy: Vec<String> = toks.iter().filter(|t| *t != &format!("u{b}x0") && *t != &format!("u{b}x1")).cloned().collect();
            copy.push(format!("fresh{b}"));
            let id = format!("dup{b}");
            planted.insert(id.clone());
            records.push(ContractRecord::contract(id, &file, copy.join("\n")).unwrap());
        }
    }
    (records, planted)
}

fn dedup_oracle() -> Outcome {
    let (records, planted) = planted_corpus();
    ensure(records.len() == 200 && planted.len() == 40, "corpus shape")?;
    // brute force over all earlier same-file pairs
    let mut brute = BTreeSet::new();
    let mut min_planted_sim: f64 = 1.0;
    for j in 0..records.len() {
        for i in 0..j {
            if records[i].filename == records[j].filename {
                let s = jaccard(&records[i].token_bag, &records[j].token_bag);
                if s > 0.9 {
                    brute.insert(records[j].id.clone());
                    min_planted_sim = min_planted_sim.min(s);
                }
            }
        }
    }
    ensure(brute == planted, "brute-force oracle disagrees with the planted set")?;
    let out = dedup(&records, 0.9).map_err(|e| e.to_string())?;
    let removed: BTreeSet<String> = out.removed.iter().map(|r| r.dropped_id.clone()).collect();
    ensure(removed == planted, format!("removed {} records, {} planted", removed.len(), planted.len()))?;
    let again = dedup(&out.kept, 0.9).map_err(|e| e.to_string())?;
    ensure(again.removed.is_empty() && again.kept == out.kept, "second pass changed the corpus")?;
    Ok(format!("removed exactly the 40 planted (min similarity {min_planted_sim:.3}); second pass is a no-op"))
}

#[derive(Deserialize)]
struct Truth {
    findings: std::collections::BTreeMap<String, Vec<(String, u32)>>,
}

fn scanner_micro_corpus() -> Outcome {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let recs = load_dir(&dir.join("micro_corpus")).map_err(|e| e.to_string())?;
    let truth: Truth = serde_json::from_str(&std::fs::read_to_string(dir.join("micro_corpus_truth.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(recs.len() == 10, format!("{} contracts", recs.len()))?;
    let mut per_rule = Vec::new();
    for (rule, _, _) in RULES {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for r in &recs {
            let got: BTreeSet<u32> = scan_all(&r.id, &r.source)
                .map_err(|e| e.to_string())?
                .findings
                .iter()
                .filter(|f| f.rule_id == *rule)
                .map(|f| f.span.start_line)
                .collect();
            let want: BTreeSet<u32> = truth.findings[&r.id].iter().filter(|(id, _)| id == rule).map(|(_, l)| *l).collect();
            tp += got.intersection(&want).count();
            fp += got.difference(&want).count();
            fn_ += want.difference(&got).count();
        }
        ensure(fp == 0 && fn_ == 0 && tp > 0, format!("{rule}: tp {tp} fp {fp} fn {fn_}"))?;
        per_rule.push(format!("{rule} {tp}/{tp}"));
    }
    let logging = recs.iter().find(|r| r.id.contains("timestamp_logging")).ok_or("no logging fixture")?;
    let td = scan(&logging.source, AuditableType::TD).map_err(|e| e.to_string())?;
    ensure(td.is_empty(), format!("{} TD findings on the logging case", td.len()))?;
    Ok(format!("P=R=100% per rule [{}]; logging case has 0 TD findings", per_rule.join(", ")))
}

fn end_to_end() -> Outcome {
    let mut improved = 0;
    let mut notes = Vec::new();
    let mut first = None;
    for seed in 0..5u64 {
        let toy = toy_corpus(seed, ToySizes::default());
        ensure(toy.vocab.len() <= 64, format!("vocab {}", toy.vocab.len()))?;
        ensure(toy.token_count() <= 50_000, format!("{} tokens", toy.token_count()))?;
        let init = PolicyModel::new(toy.model_config, seed).map_err(|e| e.to_string())?;
        let out = pipeline(&PipelineConfig::desk(seed), &toy.data, init.clone(), &RunOptions::default())
            .map_err(|e| e.to_string())?;
        let (sft, dpo) = (out.sft_margin.unwrap(), out.dpo_margin.unwrap());
        if dpo > sft {
            improved += 1;
        }
        notes.push(format!("{sft:.2}→{dpo:.2}"));
        if seed == 0 {
            first = Some((toy, init, serde_json::to_vec(&out.final_checkpoint).map_err(|e| e.to_string())?));
        }
    }
    let (toy, init, bytes) = first.unwrap();
    let again = pipeline(&PipelineConfig::desk(0), &toy.data, init, &RunOptions::default()).map_err(|e| e.to_string())?;
    let identical = serde_json::to_vec(&again.final_checkpoint).map_err(|e| e.to_string())? == bytes;
    ensure(identical, "rerun of seed 0 produced a different checkpoint")?;
    ensure(improved >= 4, format!("margin improved in {improved}/5 seeds: {}", notes.join(", ")))?;
    Ok(format!("held-out margin improved in {improved}/5 seeds ({}); rerun bit-identical", notes.join(", ")))
}

fn wcs_and_manifests() -> Outcome {
    let wcs = composite_score(8, 6, 10).map_err(|e| e.to_string())?;
    ensure(wcs == 7.6, format!("WCS {wcs}"))?;
    let m = DatasetManifest::reference();
    let fams = |v: &std::collections::BTreeMap<VulnFamily, u64>| VulnFamily::ALL.map(|f| v[&f]);
    ensure(fams(&m.sft) == [3390, 1167, 1013, 698, 1281], "sft counts")?;
    ensure(fams(&m.dpo) == [270, 227, 260, 265, 420], "dpo counts")?;
    let totals = VulnFamily::ALL.map(|f| m.eval[&f].total);
    ensure(totals == [470, 896, 1458, 340, 378] && totals.iter().sum::<u64>() == 3542, "eval totals")?;
    let report = validate_manifest(&m);
    let bad: Vec<_> = report.violations().map(|c| c.name.clone()).collect();
    ensure(bad.is_empty(), format!("violations: {bad:?}"))?;
    Ok(format!("WCS(8,6,10) = {wcs}; {} manifest checks pass", report.checks.len()))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: &[Criterion] = &[
        ("dpo-identity", Duration::from_secs(1), dpo_identity),
        ("gradient-oracles", Duration::from_secs(120), gradient_oracles),
        ("reward-consistency", Duration::from_secs(10), reward_consistency),
        ("bandit-convergence", Duration::from_secs(30), bandit),
        ("table-arithmetic", Duration::from_secs(60), table_arithmetic),
        ("likert-arithmetic", Duration::from_secs(1), likert),
        ("dedup-oracle", Duration::from_secs(10), dedup_oracle),
        ("scanner-micro-corpus", Duration::from_secs(1), scanner_micro_corpus),
        ("end-to-end-pipeline", Duration::from_secs(300), end_to_end),
        ("wcs-and-manifests", Duration::from_secs(1), wcs_and_manifests),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let took = start.elapsed();
        let verdict = match outcome {
            Ok(detail) if took <= *budget => ("PASS", detail),
            Ok(detail) => ("FAIL", format!("over budget {budget:?}: {detail}")),
            Err(e) => ("FAIL", e),
        };
        if verdict.0 == "FAIL" {
            failed += 1;
        }
        println!("{} {name} ({:.3}s / {}s): {}", verdict.0, took.as_secs_f64(), budget.as_secs(), verdict.1);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
