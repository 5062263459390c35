use std::fs;
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

const REENTRANT: &str = "pragma solidity ^0.8.0;\ncontract Bank {\n  mapping(address => uint) bal;\n  function withdraw(uint a) public {\n    msg.sender.call{value: a}(\"\");\n    bal[msg.sender] = 0;\n  }\n}\n";
const SECURE: &str = "pragma solidity ^0.8.0;\ncontract Store {\n  uint x;\n  function set(uint v) public {\n    x = v;\n  }\n}\n";

fn bin(dir: &Path) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_prefaudit"));
    c.current_dir(dir).env("PREFAUDIT_DATA_DIR", dir.join("data"));
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

fn write_lines(path: &Path, items: &[Value]) {
    let body: String = items.iter().map(|v| format!("{v}\n")).collect();
    fs::write(path, body).unwrap();
}

fn labeled(dir: &Path) {
    write_lines(
        &dir.join("contracts.jsonl"),
        &[
            json!({ "id": "bank", "contract": REENTRANT, "label": 1, "vuln_types": ["RE"] }),
            json!({ "id": "store", "contract": SECURE, "label": 0 }),
        ],
    );
}

#[test]
fn every_subcommand_documents_its_flags() {
    let dir = tempfile::tempdir().unwrap();
    let expect: &[(&str, &[&str])] = &[
        ("dedup", &["--threshold", "--out"]),
        ("scan", &["--out"]),
        ("gen", &["--contracts", "--seed", "--out"]),
        ("score", &["--candidates", "--reviewed", "--tasks-out", "--reviewers"]),
        ("build-sft", &["--contracts", "--explanations", "--out"]),
        ("build-dpo", &["--pairs", "--out"]),
        ("train", &["--stage", "--config", "--ref", "--init", "--resume", "--toy", "--no-cpt", "--no-dpo", "--seed", "--out"]),
        ("eval", &["--gold", "--pred", "--model", "--ratings", "--out"]),
        ("serve", &["--port", "--roster", "--tasks", "--log", "--threshold"]),
        ("reconstruct", &["--accuracy", "--f1", "--positives", "--total", "--decimals", "--reference"]),
        ("manifest", &["--reference"]),
    ];
    for (sub, flags) in expect {
        let o = run(dir.path(), &[sub, "--help"]);
        assert_eq!(code(&o), 0, "{sub}");
        let help = text(&o);
        for f in flags.iter().chain(&["--data-dir"]) {
            assert!(help.contains(f), "{sub} --help lacks {f}");
        }
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["scan", "--bogus", "x.sol"])), 2);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 2);
    assert_eq!(code(&run(dir.path(), &["scan", "missing.sol"])), 2);

    let o = run(dir.path(), &["train", "--stage", "dpo", "--toy"]);
    assert_eq!(code(&o), 2);
    assert!(text(&o).contains("--ref"));
}

#[test]
fn dedup_writes_kept_list_and_removal_log() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    for (sub, src) in [("a", REENTRANT), ("b", REENTRANT), ("c", SECURE)] {
        fs::create_dir_all(corpus.join(sub)).unwrap();
        fs::write(corpus.join(sub).join("Token.sol"), src).unwrap();
    }
    let o = run(dir.path(), &["dedup", "--threshold", "0.9", "corpus"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = dir.path().join("data/dedup");
    let kept = fs::read_to_string(out.join("kept.jsonl")).unwrap();
    let removed = fs::read_to_string(out.join("removed.jsonl")).unwrap();
    assert_eq!(kept.lines().count(), 2);
    let log: Value = serde_json::from_str(removed.lines().next().unwrap()).unwrap();
    assert_eq!(log["dropped_id"], "b/Token.sol");
    assert_eq!(log["kept_id"], "a/Token.sol");
    assert_eq!(log["similarity"], 1.0);

    // The kept list is itself a valid corpus, and re-running removes nothing.
    let again = run(dir.path(), &["dedup", "--out", "second", "data/dedup/kept.jsonl"]);
    assert_eq!(code(&again), 0);
    assert_eq!(fs::read_to_string(dir.path().join("second/removed.jsonl")).unwrap(), "");
    assert_eq!(code(&run(dir.path(), &["dedup", "--threshold", "1.5", "corpus"])), 2);
}

#[test]
fn scan_exit_code_reflects_findings() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bank.sol"), REENTRANT).unwrap();
    fs::write(dir.path().join("store.sol"), SECURE).unwrap();
    let o = run(dir.path(), &["scan", "bank.sol"]);
    assert_eq!(code(&o), 1);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["findings"][0]["vuln_type"], "RE");
    let o = run(dir.path(), &["scan", "store.sol"]);
    assert_eq!(code(&o), 0);
}

#[test]
fn dataset_path_from_contracts_to_sft() {
    let dir = tempfile::tempdir().unwrap();
    labeled(dir.path());
    let o = run(dir.path(), &["gen", "--contracts", "contracts.jsonl", "--seed", "7"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let first = fs::read_to_string(dir.path().join("data/candidates.jsonl")).unwrap();
    run(dir.path(), &["gen", "--contracts", "contracts.jsonl", "--seed", "7", "--out", "again.jsonl"]);
    assert_eq!(first, fs::read_to_string(dir.path().join("again.jsonl")).unwrap());

    // Unreviewed explanations are refused.
    assert_eq!(code(&run(dir.path(), &["score", "--candidates", "candidates.jsonl"])), 0);
    let o = run(dir.path(), &["build-sft", "--contracts", "contracts.jsonl", "--explanations", "explanations.jsonl"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("reviewed"));

    let o = run(
        dir.path(),
        &["score", "--candidates", "candidates.jsonl", "--reviewed", "--tasks-out", "tasks.jsonl", "--reviewers", "ana,ben"],
    );
    assert_eq!(code(&o), 0, "{}", text(&o));
    let seeds = fs::read_to_string(dir.path().join("tasks.jsonl")).unwrap();
    assert_eq!(seeds.lines().count(), 1, "only the contract with a known family is seeded");

    let o = run(dir.path(), &["build-sft", "--contracts", "contracts.jsonl", "--explanations", "explanations.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let sft = fs::read_to_string(dir.path().join("data/sft.jsonl")).unwrap();
    let ids: Vec<String> = sft.lines().map(|l| serde_json::from_str::<Value>(l).unwrap()["id"].as_str().unwrap().to_string()).collect();
    assert_eq!(ids, ["bank", "store"]);
}

#[test]
fn build_dpo_validates_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let good = json!({ "id": "p2", "prompt": "audit this", "chosen": "detailed", "rejected": "vague", "tag": "re-obvious-external-calls-only" });
    let other = json!({ "id": "p1", "prompt": "audit this", "chosen": "thorough", "rejected": "shallow", "tag": "td-direct-timestamp-only" });
    write_lines(&dir.path().join("pairs.jsonl"), &[good.clone(), other]);
    let o = run(dir.path(), &["build-dpo", "--pairs", "pairs.jsonl", "--out", "dpo.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = fs::read_to_string(dir.path().join("dpo.jsonl")).unwrap();
    assert!(out.starts_with("{\"id\":\"p1\""));

    let same = json!({ "id": "p3", "prompt": "audit", "chosen": "x", "rejected": "x", "tag": "re-obvious-external-calls-only" });
    write_lines(&dir.path().join("bad.jsonl"), &[good, same]);
    assert_eq!(code(&run(dir.path(), &["build-dpo", "--pairs", "bad.jsonl"])), 1);
}

#[test]
fn eval_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let gold = [
        json!({ "id": "a", "contract": REENTRANT, "label": 1, "vuln_types": ["RE"], "explanation": "re-entry", "locations": [] }),
        json!({ "id": "b", "contract": SECURE, "label": 0, "vuln_types": [], "explanation": "fine", "locations": [] }),
        json!({ "id": "c", "contract": SECURE, "label": 0, "vuln_types": [], "explanation": "fine", "locations": [] }),
    ];
    write_lines(&dir.path().join("g.jsonl"), &gold);
    write_lines(
        &dir.path().join("p.jsonl"),
        &[
            json!({ "id": "a", "predicted_label": 1 }),
            json!({ "id": "b", "predicted_label": 1, "family": "RE" }),
            json!({ "id": "c", "predicted_label": 0, "family": "RE" }),
        ],
    );
    write_lines(
        &dir.path().join("r.jsonl"),
        &[json!({ "dimension": "correctness", "score": 4 }), json!({ "dimension": "correctness", "score": 2 })],
    );
    let o = run(dir.path(), &["eval", "--pred", "p.jsonl", "--gold", "g.jsonl", "--ratings", "r.jsonl"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("data/eval-report.json")).unwrap()).unwrap();
    assert_eq!(report["per_family"]["RE"]["confusion"], json!({ "tp": 1, "fp": 1, "tn": 1, "fn_": 0 }));
    assert_eq!(report["likert"]["dimensions"]["correctness"]["counts"], json!([0, 1, 0, 1]));
    assert!(text(&o).contains("overall"));

    write_lines(&dir.path().join("dup.jsonl"), &[json!({ "id": "a", "predicted_label": 1 }), json!({ "id": "a", "predicted_label": 0 })]);
    assert_eq!(code(&run(dir.path(), &["eval", "--pred", "dup.jsonl", "--gold", "g.jsonl"])), 1);
    assert_eq!(code(&run(dir.path(), &["eval", "--gold", "g.jsonl"])), 2);
}

#[test]
fn reconstruct_recovers_a_published_row() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "reconstruct", "--accuracy", "94.47", "--precision", "90.91", "--recall", "86.21", "--f1", "88.50", "--positives", "116", "--total", "470",
    ];
    let o = run(dir.path(), &args);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("TP=100 FP=10 TN=344 FN=16"), "{}", text(&o));

    let o = run(dir.path(), &["reconstruct", "--accuracy", "94.6", "--f1", "82.4", "--positives", "10", "--total", "55", "--decimals", "1"]);
    assert_eq!(code(&o), 1);
    assert!(text(&o).contains("0 matching"));
}

#[test]
fn manifest_checks() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["manifest", "--reference"])), 0);
    let bad = json!({ "sft": { "RE": 1 }, "dpo": {}, "eval": {} });
    fs::write(dir.path().join("m.json"), bad.to_string()).unwrap();
    assert_eq!(code(&run(dir.path(), &["manifest", "m.json"])), 1);
}

const TINY: &str = "[cpt]\nepochs = 1\n[sft]\nepochs = 1\n[dpo]\nepochs = 1\n";

#[test]
fn toy_pipeline_is_reproducible_and_ablations_skip_stages() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tiny.toml"), TINY).unwrap();
    for out in ["r1", "r2"] {
        let o = run(dir.path(), &["train", "--toy", "--config", "tiny.toml", "--seed", "5", "--out", out]);
        assert_eq!(code(&o), 0, "{}", text(&o));
    }
    for f in ["cpt-final.json", "sft-final.json", "dpo-final.json", "dpo-curve.csv"] {
        let a = fs::read(dir.path().join("r1").join(f)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("r2").join(f)).unwrap(), "{f}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r1/report.json")).unwrap()).unwrap();
    assert!(report["heldout_margin_after_dpo"].is_f64());

    let o = run(dir.path(), &["train", "--toy", "--config", "tiny.toml", "--no-cpt", "--no-dpo", "--out", "sft-only"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(dir.path().join("sft-only/sft-final.json").exists());
    assert!(!dir.path().join("sft-only/cpt-final.json").exists());
    assert!(!dir.path().join("sft-only/dpo-final.json").exists());

    fs::write(dir.path().join("bad.toml"), "[sft]\nlr = -1.0\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["train", "--toy", "--config", "bad.toml"])), 2);
}

#[test]
fn staged_training_then_model_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sft.toml"), "stage = \"sft\"\nepochs = 1\n").unwrap();
    fs::write(dir.path().join("dpo.toml"), "stage = \"dpo\"\nepochs = 1\n").unwrap();
    let o = run(dir.path(), &["train", "--toy", "--stage", "sft", "--config", "sft.toml", "--out", "s"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let o = run(dir.path(), &["train", "--toy", "--stage", "dpo", "--config", "sft.toml", "--ref", "s/sft-final.json", "--out", "d"]);
    assert_eq!(code(&o), 2, "stage/config mismatch");
    let o = run(dir.path(), &["train", "--toy", "--stage", "dpo", "--config", "dpo.toml", "--ref", "s/sft-final.json", "--out", "d"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(text(&o).contains("margin"));
    assert!(dir.path().join("d/dpo-final.json").exists());

    // A real-data model built from fine-tuning records, then used to predict.
    let gold = [
        json!({ "id": "a", "contract": REENTRANT, "label": 1, "vuln_types": ["RE"], "explanation": "Vulnerable: the call on line 5 runs before the balance write.", "locations": [] }),
        json!({ "id": "b", "contract": SECURE, "label": 0, "vuln_types": [], "explanation": "Secure: no external calls.", "locations": [] }),
    ];
    write_lines(&dir.path().join("g.jsonl"), &gold);
    let o = run(dir.path(), &["train", "--stage", "sft", "--sft", "g.jsonl", "--config", "sft.toml", "--out", "real"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let o = run(dir.path(), &["eval", "--model", "real/sft-final.json", "--gold", "g.jsonl", "--out", "rep.json"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("rep.json")).unwrap()).unwrap();
    let cm = &report["overall"]["confusion"];
    let n: u64 = ["tp", "fp", "tn", "fn_"].iter().map(|k| cm[k].as_u64().unwrap()).sum();
    assert_eq!(n, 2);
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http(port: u16, method: &str, path: &str, token: Option<&str>, body: Option<&Value>) -> Option<(u16, String)> {
    let mut s = TcpStream::connect(("127.0.0.1", port)).ok()?;
    let payload = body.map(|b| b.to_string()).unwrap_or_default();
    let auth = token.map(|t| format!("Authorization: Bearer {t}\r\n")).unwrap_or_default();
    write!(
        s,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\n{auth}Content-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )
    .ok()?;
    let mut resp = String::new();
    s.read_to_string(&mut resp).ok()?;
    let status = resp.split_whitespace().nth(1)?.parse().ok()?;
    let body = resp.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    Some((status, body))
}

#[test]
fn serve_answers_over_http() {
    let dir = tempfile::tempdir().unwrap();
    labeled(dir.path());
    assert_eq!(code(&run(dir.path(), &["gen", "--contracts", "contracts.jsonl"])), 0);
    let o = run(dir.path(), &["score", "--candidates", "candidates.jsonl", "--tasks-out", "tasks.jsonl", "--reviewers", "ana,ben"]);
    assert_eq!(code(&o), 0, "{}", text(&o));
    let roster = json!([{ "id": "ana", "token": "t-ana" }, { "id": "ben", "token": "t-ben" }]);
    fs::write(dir.path().join("roster.json"), roster.to_string()).unwrap();

    let port = free_port();
    let mut child = bin(dir.path())
        .args(["serve", "--port", &port.to_string(), "--roster", "roster.json", "--tasks", "tasks.jsonl"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let health = loop {
        if let Some(r) = http(port, "GET", "/healthz", None, None) {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    let result = std::panic::catch_unwind(|| {
        assert_eq!(health.0, 200);
        let (s, body) = http(port, "GET", "/tasks", Some("t-ana"), None).unwrap();
        assert_eq!(s, 200);
        let page: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(page["tasks"][0]["id"], "bank");
        let scores = json!({ "version": 1, "scores": { "correctness": 8, "thoroughness": 7, "clarity": 9 } });
        assert_eq!(http(port, "POST", "/tasks/bank/scores", Some("t-ana"), Some(&scores)).unwrap().0, 200);
        assert_eq!(http(port, "POST", "/tasks/bank/scores", Some("t-ben"), Some(&scores)).unwrap().0, 409);
        assert_eq!(http(port, "GET", "/tasks", Some("nobody"), None).unwrap().0, 403);
    });
    child.kill().unwrap();
    child.wait().unwrap();
    result.unwrap();

    // The log survives the process and replays on the next start.
    let log = fs::read_to_string(dir.path().join("data/annotate-events.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
}
