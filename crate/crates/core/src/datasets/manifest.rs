use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{VulnFamily, VulnType};

/// Tolerance, in percentage points, for stated percentages.
pub const SHARE_TOLERANCE_PP: f64 = 0.01;
/// Tolerance, in percentage points, for a subsample preserving the
/// vulnerable/total ratio of the full evaluation set.
const SUBSET_RATIO_TOLERANCE_PP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSplit {
    pub vulnerable: u64,
    pub total: u64,
}

impl EvalSplit {
    pub const fn new(vulnerable: u64, total: u64) -> Self {
        EvalSplit { vulnerable, total }
    }

    /// Vulnerable share within this type, in percent.
    pub fn positive_rate_pct(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.vulnerable as f64 / self.total as f64
        }
    }
}

/// Per-family counts of the three datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub sft: BTreeMap<VulnFamily, u64>,
    pub dpo: BTreeMap<VulnFamily, u64>,
    pub eval: BTreeMap<VulnFamily, EvalSplit>,
    /// Stated size of the evaluation set.
    #[serde(default)]
    pub eval_stated_total: Option<u64>,
    /// Stated per-family percentage of the evaluation set (total / sum).
    #[serde(default)]
    pub eval_stated_share_pct: BTreeMap<VulnFamily, f64>,
    /// Breakdown of the machine-unauditable family by fine-grained type.
    #[serde(default)]
    pub mu_subtypes: BTreeMap<VulnType, EvalSplit>,
    /// Explanation-quality subsample, expected to keep each family's ratio.
    #[serde(default)]
    pub explanation_subset: BTreeMap<VulnFamily, EvalSplit>,
    #[serde(default)]
    pub explanation_stated_total: Option<u64>,
}

impl DatasetManifest {
    /// Full-scale reference counts the desk-scale manifests are checked
    /// against.
    pub fn reference() -> Self {
        use VulnFamily::*;
        let fam = |v: [u64; 5]| -> BTreeMap<VulnFamily, u64> { VulnFamily::ALL.into_iter().zip(v).collect() };
        let split = |v: [(u64, u64); 5]| -> BTreeMap<VulnFamily, EvalSplit> {
            VulnFamily::ALL
                .into_iter()
                .zip(v.map(|(a, b)| EvalSplit::new(a, b)))
                .collect()
        };
        DatasetManifest {
            sft: fam([3390, 1167, 1013, 698, 1281]),
            dpo: fam([270, 227, 260, 265, 420]),
            eval: split([(116, 470), (568, 896), (354, 1458), (76, 340), (116, 378)]),
            eval_stated_total: Some(3542),
            eval_stated_share_pct: [(RE, 13.27), (TD, 25.30), (IO, 41.16), (DE, 9.60), (MU, 10.67)]
                .into_iter()
                .collect(),
            mu_subtypes: [
                (VulnType::PO, (25, 57)),
                (VulnType::PE, (15, 46)),
                (VulnType::IU, (13, 53)),
                (VulnType::IS, (23, 59)),
                (VulnType::EA, (20, 55)),
                (VulnType::CI, (10, 55)),
                (VulnType::AV, (10, 53)),
            ]
            .into_iter()
            .map(|(t, (a, b))| (t, EvalSplit::new(a, b)))
            .collect(),
            explanation_subset: split([(58, 235), (142, 224), (59, 243), (38, 170), (58, 189)]),
            explanation_stated_total: Some(1061),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCheck {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestReport {
    pub checks: Vec<ManifestCheck>,
    /// Per-family total as a percentage of the whole evaluation set.
    pub share_of_dataset_pct: BTreeMap<VulnFamily, f64>,
    /// Per-family vulnerable / total, in percent.
    pub positive_rate_pct: BTreeMap<VulnFamily, f64>,
}

impl ManifestReport {
    pub fn is_consistent(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ManifestCheck> {
        self.checks.iter().filter(|c| !c.ok)
    }
}

/// Checks a manifest for internal consistency and returns every check with
/// its outcome; it never fails.
///
/// Stated evaluation percentages are compared to each family's share of the
/// whole evaluation set. The per-family positive rate is reported alongside
/// so that the two readings can be told apart.
pub fn validate_manifest(m: &DatasetManifest) -> ManifestReport {
    let mut checks = Vec::new();
    let mut check = |name: String, ok: bool, detail: String| checks.push(ManifestCheck { name, ok, detail });

    for (name, counts) in [("sft", &m.sft), ("dpo", &m.dpo)] {
        let missing: Vec<_> = VulnFamily::ALL
            .into_iter()
            .filter(|f| !counts.contains_key(f))
            .map(|f| f.as_str())
            .collect();
        check(
            format!("{name}.families"),
            missing.is_empty(),
            if missing.is_empty() {
                format!("{} examples over all families", counts.values().sum::<u64>())
            } else {
                format!("missing families: {}", missing.join(", "))
            },
        );
    }

    for (f, s) in &m.eval {
        check(
            format!("eval.{f}.vulnerable_le_total"),
            s.vulnerable <= s.total,
            format!("{}/{}", s.vulnerable, s.total),
        );
    }
    let eval_total: u64 = m.eval.values().map(|s| s.total).sum();
    if let Some(stated) = m.eval_stated_total {
        check(
            "eval.total".into(),
            eval_total == stated,
            format!("per-family totals sum to {eval_total}, stated {stated}"),
        );
    }

    let share = |s: &EvalSplit| {
        if eval_total == 0 {
            0.0
        } else {
            100.0 * s.total as f64 / eval_total as f64
        }
    };
    let share_of_dataset_pct: BTreeMap<_, _> = m.eval.iter().map(|(&f, s)| (f, share(s))).collect();
    let positive_rate_pct: BTreeMap<_, _> = m.eval.iter().map(|(&f, s)| (f, s.positive_rate_pct())).collect();
    for (f, &stated) in &m.eval_stated_share_pct {
        match share_of_dataset_pct.get(f) {
            Some(&computed) => check(
                format!("eval.{f}.share"),
                (computed - stated).abs() <= SHARE_TOLERANCE_PP + 1e-9,
                format!(
                    "share of evaluation set {computed:.4}% vs stated {stated}% (positive rate {:.2}%)",
                    positive_rate_pct[f]
                ),
            ),
            None => check(format!("eval.{f}.share"), false, "no evaluation split for stated share".into()),
        }
    }

    if !m.mu_subtypes.is_empty() {
        let bad: Vec<_> = m.mu_subtypes.keys().filter(|t| t.family() != VulnFamily::MU).collect();
        check(
            "eval.MU.subtypes_are_mu".into(),
            bad.is_empty(),
            format!("{} subtypes", m.mu_subtypes.len()),
        );
        let sum = m.mu_subtypes.values().fold(EvalSplit::new(0, 0), |a, s| {
            EvalSplit::new(a.vulnerable + s.vulnerable, a.total + s.total)
        });
        let mu = m.eval.get(&VulnFamily::MU).copied();
        check(
            "eval.MU.subtype_sum".into(),
            mu == Some(sum),
            format!("subtypes sum to {}/{}, family split {mu:?}", sum.vulnerable, sum.total),
        );
        for (t, s) in &m.mu_subtypes {
            check(
                format!("eval.{t}.vulnerable_le_total"),
                s.vulnerable <= s.total,
                format!("{}/{}", s.vulnerable, s.total),
            );
        }
    }

    if !m.explanation_subset.is_empty() {
        let sub_total: u64 = m.explanation_subset.values().map(|s| s.total).sum();
        if let Some(stated) = m.explanation_stated_total {
            check(
                "explanation.total".into(),
                sub_total == stated,
                format!("per-family totals sum to {sub_total}, stated {stated}"),
            );
        }
        for (f, s) in &m.explanation_subset {
            let full = m.eval.get(f);
            let ok = s.vulnerable <= s.total
                && full.is_some_and(|full| {
                    s.total <= full.total
                        && (s.positive_rate_pct() - full.positive_rate_pct()).abs() <= SUBSET_RATIO_TOLERANCE_PP
                });
            check(
                format!("explanation.{f}.ratio"),
                ok,
                format!(
                    "{}/{} ({:.2}%) vs full set {:.2}%",
                    s.vulnerable,
                    s.total,
                    s.positive_rate_pct(),
                    full.map_or(f64::NAN, EvalSplit::positive_rate_pct)
                ),
            );
        }
    }

    ManifestReport {
        checks,
        share_of_dataset_pct,
        positive_rate_pct,
    }
}
