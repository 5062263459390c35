//! Detection metrics, confusion-matrix reconstruction from published
//! percentages, and the four-point explanation rating schema.

pub mod reference;

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::datasets::{Label, SftExample};
use crate::taxonomy::VulnFamily;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("no ratings given")]
    NoRatings,
    #[error("rating score {0} outside 1..=4")]
    ScoreOutOfRange(u8),
    #[error("rubric has no anchors for {0}")]
    MissingDimension(LikertDimension),
    #[error("positives {positives} exceed total {total}")]
    BadSplit { positives: u64, total: u64 },
    #[error("prediction `{0}` has no gold record")]
    UnknownId(String),
    #[error("duplicate prediction for `{0}`")]
    DuplicatePrediction(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub const fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionMatrix { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn record(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (true, false) => self.fn_ += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TP={} FP={} TN={} FN={}", self.tp, self.fp, self.tn, self.fn_)
    }
}

/// Metrics as ratios in [0, 1]. A zero denominator yields 0 and sets the
/// matching `*_undefined` flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn detection_metrics(cm: &ConfusionMatrix) -> Result<DetectionMetrics, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let (accuracy, _) = ratio(cm.tp + cm.tn, cm.total());
    let (precision, precision_undefined) = ratio(cm.tp, cm.tp + cm.fp);
    let (recall, recall_undefined) = ratio(cm.tp, cm.tp + cm.fn_);
    let (f1, f1_undefined) = if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), false)
    } else {
        (0.0, true)
    };
    Ok(DetectionMetrics { accuracy, precision, recall, f1, precision_undefined, recall_undefined, f1_undefined })
}

/// Rounds a ratio to a percentage with `decimals` places, half away from
/// zero (the usual table convention).
pub fn round_pct(ratio: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    // the tiny offset keeps exact halves like 0.125 from rounding down
    // through representation error
    ((ratio * 100.0 * scale) + 0.5 + 1e-9).floor() / scale
}

/// Published percentages for one row; absent metrics are not constrained.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportedMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Decimal places the values were printed with.
    pub decimals: u32,
}

impl ReportedMetrics {
    pub fn full(values: [f64; 4], decimals: u32) -> Self {
        ReportedMetrics {
            accuracy: Some(values[0]),
            precision: Some(values[1]),
            recall: Some(values[2]),
            f1: Some(values[3]),
            decimals,
        }
    }

    pub fn accuracy_f1(accuracy: f64, f1: f64, decimals: u32) -> Self {
        ReportedMetrics { accuracy: Some(accuracy), f1: Some(f1), decimals, ..Default::default() }
    }

    /// Half-width of the rounding interval, in percentage points.
    pub fn tolerance(&self) -> f64 {
        0.5 * 10f64.powi(-(self.decimals as i32)) + 1e-9
    }

    /// Whether `m` rounds to these values.
    pub fn matches(&self, m: &DetectionMetrics) -> bool {
        let tol = self.tolerance();
        let ok = |want: Option<f64>, got: f64| want.is_none_or(|w| (w - 100.0 * got).abs() <= tol);
        ok(self.accuracy, m.accuracy) && ok(self.precision, m.precision) && ok(self.recall, m.recall) && ok(self.f1, m.f1)
    }

    /// Whether the printed F1 agrees with the harmonic mean of the printed
    /// precision and recall, allowing for rounding of all three.
    pub fn f1_consistent(&self) -> Option<bool> {
        let (p, r, f) = (self.precision?, self.recall?, self.f1?);
        if p + r == 0.0 {
            return Some(f == 0.0);
        }
        let tol = self.tolerance();
        // F1 is increasing in both P and R, so the interval endpoints bound it
        let hm = |p: f64, r: f64| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let lo = hm((p - tol).max(0.0), (r - tol).max(0.0));
        let hi = hm((p + tol).min(100.0), (r + tol).min(100.0));
        Some(f >= lo - tol && f <= hi + tol)
    }
}

/// Every integer matrix with `positives` vulnerable samples out of `total`
/// whose metrics round to `reported`. Empty means the row is inconsistent
/// with that split.
pub fn reconstruct_cm(reported: &ReportedMetrics, positives: u64, total: u64) -> Result<Vec<ConfusionMatrix>, EvalError> {
    if positives > total {
        return Err(EvalError::BadSplit { positives, total });
    }
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let negatives = total - positives;
    let tol = reported.tolerance() / 100.0;
    let mut out = Vec::new();
    for tp in 0..=positives {
        let fn_ = positives - tp;
        // recall depends on tp alone; prune early
        if let Some(r) = reported.recall {
            let (rec, _) = ratio(tp, positives);
            if (r / 100.0 - rec).abs() > tol {
                continue;
            }
        }
        for fp in 0..=negatives {
            let cm = ConfusionMatrix::new(tp, fp, negatives - fp, fn_);
            if let Ok(m) = detection_metrics(&cm) {
                if reported.matches(&m) {
                    out.push(cm);
                }
            }
        }
    }
    Ok(out)
}

/// Outcome of checking one published row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowCheck {
    pub method: String,
    pub family: VulnFamily,
    pub candidates: Vec<ConfusionMatrix>,
    /// `Some(false)` flags a printed F1 that the printed P and R cannot produce.
    pub f1_consistent: Option<bool>,
}

/// Checks every bundled four-metric row against the evaluation split sizes.
pub fn check_reference_rows(splits: &BTreeMap<VulnFamily, (u64, u64)>) -> Vec<RowCheck> {
    reference::DETECTION_ROWS
        .iter()
        .filter_map(|&(method, family, values)| {
            let &(pos, total) = splits.get(&family)?;
            let reported = ReportedMetrics::full(values, 2);
            Some(RowCheck {
                method: method.to_string(),
                family,
                candidates: reconstruct_cm(&reported, pos, total).unwrap_or_default(),
                f1_consistent: reported.f1_consistent(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikertDimension {
    Correctness,
    Thoroughness,
    Clarity,
}

impl LikertDimension {
    pub const ALL: [LikertDimension; 3] =
        [LikertDimension::Correctness, LikertDimension::Thoroughness, LikertDimension::Clarity];

    pub fn as_str(self) -> &'static str {
        match self {
            LikertDimension::Correctness => "correctness",
            LikertDimension::Thoroughness => "thoroughness",
            LikertDimension::Clarity => "clarity",
        }
    }
}

impl fmt::Display for LikertDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertRating {
    pub dimension: LikertDimension,
    pub score: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// Counts of scores 1, 2, 3, 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LikertDistribution {
    pub counts: [u64; 4],
}

impl LikertDistribution {
    pub fn n(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Share of 3s and 4s as a ratio; 0 for an empty distribution.
    pub fn positive_share(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            0.0
        } else {
            (self.counts[2] + self.counts[3]) as f64 / n as f64
        }
    }

    pub fn positive_share_pct(&self) -> f64 {
        100.0 * self.positive_share()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LikertSummary {
    pub dimensions: BTreeMap<LikertDimension, LikertDistribution>,
}

pub fn likert_summary(ratings: &[LikertRating]) -> Result<LikertSummary, EvalError> {
    if ratings.is_empty() {
        return Err(EvalError::NoRatings);
    }
    let mut out = LikertSummary::default();
    for r in ratings {
        if !(1..=4).contains(&r.score) {
            return Err(EvalError::ScoreOutOfRange(r.score));
        }
        out.dimensions.entry(r.dimension).or_default().counts[r.score as usize - 1] += 1;
    }
    Ok(out)
}

/// Scoring anchors for scores 1..=4 on each dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rubric {
    pub anchors: BTreeMap<LikertDimension, [String; 4]>,
}

impl Default for Rubric {
    fn default() -> Self {
        let a = |xs: [&str; 4]| xs.map(str::to_string);
        let anchors = BTreeMap::from([
            (
                LikertDimension::Correctness,
                a([
                    "disagree: the stated vulnerability or its cause is wrong",
                    "somewhat disagree: the cause is partly right but key facts are wrong",
                    "somewhat agree: the cause is right with minor inaccuracies",
                    "agree: the vulnerability, its location and its cause are all right",
                ]),
            ),
            (
                LikertDimension::Thoroughness,
                a([
                    "disagree: trigger, attack path and impact are all missing",
                    "somewhat disagree: only one of trigger, attack path or impact is covered",
                    "somewhat agree: most of trigger, attack path and impact are covered",
                    "agree: trigger, attack path, impact and remedy are all covered",
                ]),
            ),
            (
                LikertDimension::Clarity,
                a([
                    "disagree: hard to follow or mostly irrelevant",
                    "somewhat disagree: understandable only with effort",
                    "somewhat agree: clear with some redundancy",
                    "agree: concise, well ordered and easy to act on",
                ]),
            ),
        ]);
        Rubric { anchors }
    }
}

/// Deterministic judging prompt for an external rater.
pub fn judge_prompt(contract: &str, explanation: &str, rubric: &Rubric) -> Result<String, EvalError> {
    for d in LikertDimension::ALL {
        if !rubric.anchors.contains_key(&d) {
            return Err(EvalError::MissingDimension(d));
        }
    }
    let mut p = String::new();
    p.push_str("You are reviewing a vulnerability explanation for a Solidity contract.\n");
    p.push_str("Rate it on each dimension with an integer from 1 to 4.\n\n");
    for d in LikertDimension::ALL {
        let _ = writeln!(p, "## {d}");
        for (i, anchor) in rubric.anchors[&d].iter().enumerate() {
            let _ = writeln!(p, "{}: {anchor}", i + 1);
        }
        p.push('\n');
    }
    let _ = write!(p, "## contract\n```solidity\n{}\n```\n\n## explanation\n{}\n\n", contract.trim_end(), explanation.trim_end());
    p.push_str("Answer with one line per dimension: `<dimension>: <score> - <rationale>`.\n");
    Ok(p)
}

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted_label: Label,
    /// Family the prediction was made for; needed to bucket secure gold
    /// records, which carry no type of their own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<VulnFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyResult {
    pub confusion: ConfusionMatrix,
    pub metrics: DetectionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_family: BTreeMap<VulnFamily, FamilyResult>,
    pub overall: FamilyResult,
    /// Predictions whose family could not be determined (counted only in
    /// the overall row).
    pub unbucketed: usize,
    /// Gold records with no prediction.
    pub missing: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub likert: Option<LikertSummary>,
}

fn family_of(gold: &SftExample, pred: &Prediction) -> Option<VulnFamily> {
    gold.vuln_types.first().map(|t| t.family()).or(pred.family)
}

/// Scores predictions against gold fine-tuning records.
pub fn evaluate(predictions: &[Prediction], gold: &[SftExample]) -> Result<EvalReport, EvalError> {
    let index: HashMap<&str, &SftExample> = gold.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut seen = std::collections::HashSet::new();
    let mut per: BTreeMap<VulnFamily, ConfusionMatrix> = BTreeMap::new();
    let mut overall = ConfusionMatrix::default();
    let mut unbucketed = 0;
    for p in predictions {
        let g = index.get(p.id.as_str()).ok_or_else(|| EvalError::UnknownId(p.id.clone()))?;
        if !seen.insert(p.id.as_str()) {
            return Err(EvalError::DuplicatePrediction(p.id.clone()));
        }
        let (truth, guess) = (g.label == Label::Vulnerable, p.predicted_label == Label::Vulnerable);
        overall.record(truth, guess);
        match family_of(g, p) {
            Some(f) => per.entry(f).or_default().record(truth, guess),
            None => unbucketed += 1,
        }
    }
    let result = |cm: ConfusionMatrix| Ok::<_, EvalError>(FamilyResult { metrics: detection_metrics(&cm)?, confusion: cm });
    let mut missing: Vec<String> = gold.iter().filter(|g| !seen.contains(g.id.as_str())).map(|g| g.id.clone()).collect();
    missing.sort();
    Ok(EvalReport {
        per_family: per.into_iter().map(|(f, cm)| Ok((f, result(cm)?))).collect::<Result<_, EvalError>>()?,
        overall: result(overall)?,
        unbucketed,
        missing,
        likert: None,
    })
}

impl EvalReport {
    /// Plain-text table: one row per family plus the overall row.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8} {:>5} {:>5} {:>5} {:>5} {:>8} {:>8} {:>8} {:>8}", "type", "TP", "FP", "TN", "FN", "A(%)", "P(%)", "R(%)", "F1(%)");
        let mut row = |name: &str, r: &FamilyResult| {
            let m = &r.metrics;
            let c = &r.confusion;
            let _ = writeln!(
                s,
                "{:<8} {:>5} {:>5} {:>5} {:>5} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                name,
                c.tp,
                c.fp,
                c.tn,
                c.fn_,
                round_pct(m.accuracy, 2),
                round_pct(m.precision, 2),
                round_pct(m.recall, 2),
                round_pct(m.f1, 2)
            );
        };
        for (f, r) in &self.per_family {
            row(f.as_str(), r);
        }
        row("overall", &self.overall);
        if let Some(l) = &self.likert {
            let _ = writeln!(s, "\n{:<13} {:>5} {:>5} {:>5} {:>5} {:>9}", "dimension", "1", "2", "3", "4", "3+4 (%)");
            for (d, dist) in &l.dimensions {
                let c = dist.counts;
                let _ = writeln!(s, "{:<13} {:>5} {:>5} {:>5} {:>5} {:>9.2}", d.as_str(), c[0], c[1], c[2], c[3], round_pct(dist.positive_share(), 2));
            }
        }
        s
    }
}
