use serde::{Deserialize, Serialize};

use super::DatasetError;

/// Reviewer scores on the 1–10 curation scale plus their weighted composite.
///
/// The composite weighs correctness 0.6, thoroughness 0.3 and clarity 0.1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawScoreCard")]
pub struct ScoreCard {
    pub correctness: u8,
    pub thoroughness: u8,
    pub clarity: u8,
    pub wcs: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScoreCard {
    correctness: i64,
    thoroughness: i64,
    clarity: i64,
    #[serde(default)]
    wcs: Option<f64>,
}

impl TryFrom<RawScoreCard> for ScoreCard {
    type Error = DatasetError;

    fn try_from(raw: RawScoreCard) -> Result<Self, Self::Error> {
        let card = ScoreCard::new(raw.correctness, raw.thoroughness, raw.clarity)?;
        match raw.wcs {
            Some(stored) if stored != card.wcs => Err(DatasetError::WcsMismatch {
                stored,
                computed: card.wcs,
            }),
            _ => Ok(card),
        }
    }
}

fn component(dimension: &'static str, value: i64) -> Result<u8, DatasetError> {
    if (1..=10).contains(&value) {
        Ok(value as u8)
    } else {
        Err(DatasetError::ScoreOutOfRange { dimension, value })
    }
}

/// Weighted composite score of three 1–10 component scores.
///
/// Computed as `(6c + 3t + 1l) / 10` over integers so that e.g. (8, 6, 10)
/// yields exactly the double nearest to 7.6.
pub fn composite_score(correctness: i64, thoroughness: i64, clarity: i64) -> Result<f64, DatasetError> {
    let c = component("correctness", correctness)?;
    let t = component("thoroughness", thoroughness)?;
    let l = component("clarity", clarity)?;
    Ok(f64::from(6 * u16::from(c) + 3 * u16::from(t) + u16::from(l)) / 10.0)
}

impl ScoreCard {
    pub fn new(correctness: i64, thoroughness: i64, clarity: i64) -> Result<Self, DatasetError> {
        let wcs = composite_score(correctness, thoroughness, clarity)?;
        Ok(ScoreCard {
            correctness: correctness as u8,
            thoroughness: thoroughness as u8,
            clarity: clarity as u8,
            wcs,
        })
    }

    /// Largest absolute per-dimension difference to another card.
    pub fn max_gap(&self, other: &ScoreCard) -> u8 {
        [
            self.correctness.abs_diff(other.correctness),
            self.thoroughness.abs_diff(other.thoroughness),
            self.clarity.abs_diff(other.clarity),
        ]
        .into_iter()
        .max()
        .unwrap_or(0)
    }
}

/// Index of the first maximum; `None` for an empty slice.
pub fn argmax_first(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// The candidate with the highest composite score; ties go to the earliest.
pub fn select_best<T>(cards: &[(T, ScoreCard)]) -> Result<&T, DatasetError> {
    let scores: Vec<f64> = cards.iter().map(|(_, c)| c.wcs).collect();
    argmax_first(&scores)
        .map(|i| &cards[i].0)
        .ok_or(DatasetError::NoCandidates)
}
