//! Published reference tables, bundled for consistency checks.
//!
//! Percentages are as printed. The last row of each detection family is the
//! full three-stage pipeline.

use crate::taxonomy::{VulnFamily, VulnType};

/// Four-metric detection rows: (method, family, [accuracy, precision,
/// recall, F1]), two decimals.
pub const DETECTION_ROWS: &[(&str, VulnFamily, [f64; 4])] = &[
    ("Mythril", VulnFamily::RE, [57.66, 33.73, 74.14, 46.36]),
    ("Mythril", VulnFamily::TD, [43.3, 56.79, 44.19, 49.7]),
    ("Osiris", VulnFamily::RE, [36.38, 26.84, 91.38, 41.49]),
    ("Osiris", VulnFamily::TD, [51.0, 72.47, 36.62, 48.65]),
    ("Oyente", VulnFamily::RE, [70.85, 42.22, 49.14, 45.42]),
    ("Oyente", VulnFamily::TD, [42.52, 66.67, 18.66, 29.16]),
    ("Slither", VulnFamily::RE, [42.13, 16.09, 31.9, 21.39]),
    ("Slither", VulnFamily::TD, [46.88, 56.5, 70.42, 62.7]),
    ("Smartcheck", VulnFamily::RE, [48.3, 30.09, 82.76, 44.14]),
    ("Smartcheck", VulnFamily::TD, [39.51, 57.3, 17.96, 27.35]),
    ("Conkas", VulnFamily::RE, [68.09, 38.36, 48.28, 42.75]),
    ("Conkas", VulnFamily::TD, [17.86, 32.79, 28.17, 30.3]),
    ("Smartian", VulnFamily::RE, [53.62, 27.03, 51.72, 35.5]),
    ("Smartian", VulnFamily::TD, [23.66, 39.26, 37.32, 38.27]),
    ("Confuzzius", VulnFamily::RE, [74.04, 48.05, 63.79, 54.81]),
    ("sFuzz", VulnFamily::RE, [48.09, 10.98, 15.52, 12.86]),
    ("sFuzz", VulnFamily::TD, [16.96, 31.67, 26.76, 29.01]),
    ("Solhint", VulnFamily::RE, [65.53, 36.78, 55.17, 44.14]),
    ("Solhint", VulnFamily::TD, [35.27, 48.6, 36.62, 41.77]),
    ("Sailfish", VulnFamily::RE, [76.17, 51.16, 75.86, 61.11]),
    ("Securify", VulnFamily::RE, [55.32, 28.04, 51.72, 36.36]),
    ("GCN", VulnFamily::RE, [73.21, 74.47, 73.18, 73.82]),
    ("GCN", VulnFamily::TD, [75.91, 74.93, 77.55, 76.22]),
    ("TMP", VulnFamily::RE, [76.45, 76.04, 75.3, 75.67]),
    ("TMP", VulnFamily::TD, [78.84, 78.68, 76.09, 77.36]),
    ("AME", VulnFamily::RE, [81.06, 79.62, 78.45, 79.03]),
    ("AME", VulnFamily::TD, [82.25, 81.42, 80.26, 80.84]),
    ("SMS", VulnFamily::RE, [83.85, 79.46, 77.48, 78.46]),
    ("SMS", VulnFamily::TD, [89.77, 89.15, 91.09, 90.11]),
    ("DMT", VulnFamily::RE, [89.42, 83.62, 81.06, 82.32]),
    ("DMT", VulnFamily::TD, [94.58, 93.6, 96.39, 94.97]),
    ("Peculiar", VulnFamily::RE, [65.11, 35.0, 48.28, 40.58]),
    ("Peculiar", VulnFamily::TD, [68.3, 77.1, 71.13, 73.99]),
    ("PSCVFinder", VulnFamily::RE, [64.68, 34.94, 50.0, 41.13]),
    ("PSCVFinder", VulnFamily::TD, [39.29, 52.17, 50.7, 51.43]),
    ("LLaMA3.1-8B", VulnFamily::RE, [33.19, 25.13, 86.21, 38.91]),
    ("LLaMA3.1-8B", VulnFamily::TD, [56.25, 68.64, 57.04, 62.31]),
    ("Qwen2.5-7B", VulnFamily::RE, [25.53, 24.89, 100.0, 39.86]),
    ("Qwen2.5-7B", VulnFamily::TD, [69.2, 68.34, 95.77, 79.77]),
    ("LLaMA3.1-70B", VulnFamily::RE, [24.68, 24.68, 100.0, 39.59]),
    ("LLaMA3.1-70B", VulnFamily::TD, [63.39, 63.39, 100.0, 77.6]),
    ("Qwen2.5-72B", VulnFamily::RE, [25.96, 25.0, 100.0, 40.0]),
    ("Qwen2.5-72B", VulnFamily::TD, [63.39, 63.39, 100.0, 77.6]),
    ("GPT-4o", VulnFamily::RE, [57.45, 34.78, 82.76, 48.98]),
    ("GPT-4o", VulnFamily::TD, [49.55, 80.85, 26.76, 40.21]),
    ("Claude-3.5-Sonnet", VulnFamily::RE, [26.38, 25.11, 100.0, 40.14]),
    ("Claude-3.5-Sonnet", VulnFamily::TD, [70.09, 85.05, 64.08, 73.09]),
    ("GPTScan", VulnFamily::RE, [32.77, 25.96, 93.1, 40.6]),
    ("GPTScan", VulnFamily::TD, [60.27, 62.56, 92.96, 74.79]),
    ("GPTLens", VulnFamily::RE, [27.23, 25.33, 100.0, 40.42]),
    ("GPTLens", VulnFamily::TD, [62.5, 63.06, 98.59, 76.92]),
    ("FTSmartAudit", VulnFamily::RE, [32.34, 26.07, 94.83, 40.89]),
    ("FTSmartAudit", VulnFamily::TD, [71.88, 83.19, 69.72, 75.86]),
    ("iAudit", VulnFamily::RE, [72.77, 46.88, 77.59, 58.44]),
    ("iAudit", VulnFamily::TD, [62.5, 63.81, 94.37, 76.14]),
    ("full-pipeline", VulnFamily::RE, [94.47, 90.91, 86.21, 88.5]),
    ("full-pipeline", VulnFamily::TD, [95.54, 97.83, 95.07, 96.43]),
    ("Mythril", VulnFamily::IO, [42.46, 20.25, 46.61, 28.23]),
    ("Mythril", VulnFamily::DE, [61.76, 33.73, 73.68, 46.28]),
    ("Osiris", VulnFamily::IO, [67.97, 41.27, 75.42, 53.35]),
    ("Oyente", VulnFamily::IO, [77.78, 55.0, 46.61, 50.46]),
    ("Oyente", VulnFamily::DE, [67.65, 30.23, 34.21, 32.1]),
    ("Slither", VulnFamily::IO, [56.93, 27.01, 45.48, 33.89]),
    ("Slither", VulnFamily::DE, [52.65, 31.11, 92.11, 46.51]),
    ("Smartcheck", VulnFamily::IO, [56.04, 24.51, 38.98, 30.1]),
    ("Smartcheck", VulnFamily::DE, [55.29, 25.32, 51.32, 33.91]),
    ("Conkas", VulnFamily::IO, [51.85, 22.12, 38.98, 28.22]),
    ("Conkas", VulnFamily::DE, [75.29, 47.22, 89.47, 61.82]),
    ("Smartian", VulnFamily::IO, [76.95, 51.9, 69.49, 59.42]),
    ("Smartian", VulnFamily::DE, [79.41, 52.83, 73.68, 61.54]),
    ("Confuzzius", VulnFamily::IO, [79.84, 58.33, 59.32, 58.82]),
    ("Confuzzius", VulnFamily::DE, [72.35, 41.82, 60.53, 49.46]),
    ("sFuzz", VulnFamily::IO, [79.01, 58.33, 47.46, 52.34]),
    ("sFuzz", VulnFamily::DE, [67.06, 36.76, 65.79, 47.17]),
    ("Solhint", VulnFamily::DE, [69.41, 40.54, 78.95, 53.57]),
    ("GCN", VulnFamily::IO, [67.53, 69.52, 70.93, 70.22]),
    ("GCN", VulnFamily::DE, [65.76, 69.01, 69.74, 69.37]),
    ("TMP", VulnFamily::IO, [70.85, 70.26, 69.47, 69.86]),
    ("TMP", VulnFamily::DE, [69.11, 68.18, 70.37, 69.26]),
    ("AME", VulnFamily::IO, [73.24, 71.36, 71.59, 71.47]),
    ("AME", VulnFamily::DE, [72.85, 70.25, 69.4, 69.82]),
    ("SMS", VulnFamily::IO, [79.36, 78.14, 72.98, 75.47]),
    ("SMS", VulnFamily::DE, [78.82, 76.97, 73.69, 75.29]),
    ("DMT", VulnFamily::IO, [85.64, 85.44, 74.32, 79.49]),
    ("DMT", VulnFamily::DE, [82.76, 84.61, 77.93, 81.13]),
    ("Peculiar", VulnFamily::IO, [82.72, 61.64, 76.27, 68.18]),
    ("Peculiar", VulnFamily::DE, [84.12, 65.71, 60.53, 63.01]),
    ("PSCVFinder", VulnFamily::IO, [64.2, 33.72, 49.15, 40.0]),
    ("PSCVFinder", VulnFamily::DE, [90.59, 76.19, 84.21, 80.0]),
    ("LLaMA3.1-8B", VulnFamily::IO, [54.32, 30.0, 66.1, 41.27]),
    ("LLaMA3.1-8B", VulnFamily::DE, [65.29, 34.33, 60.53, 43.81]),
    ("Qwen2.5-7B", VulnFamily::IO, [74.9, 47.5, 32.2, 38.38]),
    ("Qwen2.5-7B", VulnFamily::DE, [67.06, 40.22, 97.37, 56.92]),
    ("LLaMA3.1-70B", VulnFamily::IO, [79.42, 55.42, 77.97, 64.79]),
    ("LLaMA3.1-70B", VulnFamily::DE, [64.12, 38.38, 100.0, 55.47]),
    ("Qwen2.5-72B", VulnFamily::IO, [81.96, 65.02, 55.65, 59.97]),
    ("Qwen2.5-72B", VulnFamily::DE, [68.24, 41.3, 100.0, 58.46]),
    ("GPT-4o", VulnFamily::IO, [72.02, 44.44, 61.02, 51.43]),
    ("GPT-4o", VulnFamily::DE, [57.65, 34.55, 100.0, 51.35]),
    ("Claude-3.5-Sonnet", VulnFamily::IO, [77.37, 51.75, 100.0, 68.21]),
    ("Claude-3.5-Sonnet", VulnFamily::DE, [54.71, 33.04, 100.0, 49.67]),
    ("GPTScan", VulnFamily::IO, [45.68, 27.33, 74.58, 40.0]),
    ("GPTScan", VulnFamily::DE, [47.06, 29.37, 97.37, 45.12]),
    ("GPTLens", VulnFamily::IO, [57.61, 31.67, 64.41, 42.46]),
    ("GPTLens", VulnFamily::DE, [70.59, 43.18, 100.0, 60.32]),
    ("FTSmartAudit", VulnFamily::IO, [79.42, 59.18, 49.15, 53.7]),
    ("FTSmartAudit", VulnFamily::DE, [56.47, 32.69, 89.47, 47.89]),
    ("iAudit", VulnFamily::IO, [69.55, 40.96, 57.63, 47.89]),
    ("iAudit", VulnFamily::DE, [40.59, 27.34, 100.0, 42.94]),
    ("full-pipeline", VulnFamily::IO, [94.65, 94.23, 83.05, 88.29]),
    ("full-pipeline", VulnFamily::DE, [94.12, 100.0, 73.68, 84.85]),
];

/// (method, [(subtype, accuracy, F1)], (total accuracy, total F1)).
pub type UnauditableRow = (&'static str, [(VulnType, f64, f64); 7], (f64, f64));
/// (panel, method, correctness, thoroughness, clarity) four-point counts.
pub type LikertRow = (&'static str, &'static str, [u64; 4], [u64; 4], [u64; 4]);

/// Accuracy/F1 rows over the machine-unauditable subtypes, one decimal.
pub const UNAUDITABLE_ROWS: &[UnauditableRow] = &[
    (
        "LLaMA3.1-8B",
        [
            (VulnType::PO, 47.4, 60.5),
            (VulnType::EA, 43.6, 39.2),
            (VulnType::IU, 58.5, 52.2),
            (VulnType::IS, 45.8, 57.9),
            (VulnType::PE, 34.8, 42.3),
            (VulnType::AV, 20.8, 30.0),
            (VulnType::CI, 21.8, 31.8),
        ],
        (39.2, 45.8),
    ),
    (
        "GPT-4o",
        [
            (VulnType::PO, 49.1, 62.3),
            (VulnType::EA, 54.6, 59.0),
            (VulnType::IU, 58.5, 50.0),
            (VulnType::IS, 69.5, 71.0),
            (VulnType::PE, 67.4, 66.7),
            (VulnType::AV, 49.1, 27.0),
            (VulnType::CI, 58.2, 41.0),
        ],
        (57.9, 56.4),
    ),
    (
        "FTSmartAudit",
        [
            (VulnType::PO, 57.9, 25.0),
            (VulnType::EA, 69.1, 32.0),
            (VulnType::IU, 86.8, 63.2),
            (VulnType::IS, 72.9, 50.0),
            (VulnType::PE, 84.8, 69.6),
            (VulnType::AV, 84.9, 33.3),
            (VulnType::CI, 87.3, 46.2),
        ],
        (77.3, 44.9),
    ),
    (
        "iAudit",
        [
            (VulnType::PO, 40.4, 55.3),
            (VulnType::EA, 52.7, 55.2),
            (VulnType::IU, 88.7, 72.7),
            (VulnType::IS, 88.1, 82.9),
            (VulnType::PE, 89.1, 81.5),
            (VulnType::AV, 88.7, 62.5),
            (VulnType::CI, 92.7, 80.0),
        ],
        (76.7, 66.2),
    ),
    (
        "full-pipeline",
        [
            (VulnType::PO, 87.7, 86.3),
            (VulnType::EA, 87.3, 80.0),
            (VulnType::IU, 92.5, 83.3),
            (VulnType::IS, 89.8, 85.0),
            (VulnType::PE, 91.3, 84.6),
            (VulnType::AV, 92.5, 77.8),
            (VulnType::CI, 94.6, 82.4),
        ],
        (90.7, 83.4),
    ),
];

/// Four-point rating counts (scores 1..=4) per dimension:
/// (panel, method, correctness, thoroughness, clarity).
pub const LIKERT_ROWS: &[LikertRow] = &[
    ("llm", "LLaMA3.1-8B", [116, 201, 165, 579], [42, 229, 332, 458], [30, 204, 578, 249]),
    ("llm", "FTSmartAudit", [101, 234, 161, 565], [53, 167, 351, 490], [41, 165, 454, 401]),
    ("llm", "iAudit", [135, 129, 84, 713], [48, 216, 211, 586], [27, 47, 240, 747]),
    ("llm", "full-pipeline", [56, 86, 85, 834], [9, 96, 225, 731], [2, 25, 469, 565]),
    ("human", "LLaMA3.1-8B", [76, 303, 326, 356], [70, 266, 457, 268], [29, 212, 623, 197]),
    ("human", "FTSmartAudit", [127, 234, 352, 348], [126, 184, 523, 228], [28, 165, 482, 386]),
    ("human", "iAudit", [61, 255, 357, 388], [48, 241, 584, 188], [27, 143, 418, 473]),
    ("human", "full-pipeline", [19, 181, 215, 646], [18, 153, 346, 544], [9, 48, 435, 569]),
];

/// Positive-rating shares quoted in the text for the full pipeline, in
/// percent: (panel, correctness, thoroughness, clarity).
pub const LIKERT_STATED_SHARES: &[(&str, [f64; 3])] = &[("llm", [86.62, 90.10, 97.46]), ("human", [81.15, 83.88, 94.63])];
