//! Edit-locality metrics: volume change inside the parts an utterance names
//! relative to the change over the whole shape.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapeworld::{region_volume, volume, BoxSet, Category, Part, ShapeParams, PARAM_COUNT};

pub const DEFAULT_SWELL: f64 = 0.02;

/// Keyword lookup from utterance words to part labels.
pub fn mentioned_parts(utterance: &str) -> Vec<Part> {
    let mut parts: Vec<Part> = utterance
        .split_whitespace()
        .filter_map(|w| match w.to_lowercase().as_str() {
            "leg" | "legs" => Some(Part::Legs),
            "seat" => Some(Part::Seat),
            "back" | "backrest" => Some(Part::Back),
            "arm" | "arms" | "armrest" | "armrests" => Some(Part::Armrests),
            _ => None,
        })
        .collect();
    parts.sort();
    parts.dedup();
    parts
}

/// Source boxes of the mentioned parts, each grown by `swell` on every face.
pub fn relevant_region(source: &BoxSet, utterance: &str, swell: f64) -> Result<BoxSet> {
    let parts = mentioned_parts(utterance);
    if parts.is_empty() {
        return Err(Error::MetricUndefined(format!(
            "no part mentioned in {utterance:?}"
        )));
    }
    Ok(source.with_parts(&parts).swollen(swell))
}

/// |net volume change| inside `region`.
pub fn delta_v(region: &BoxSet, edited: &BoxSet, source: &BoxSet) -> f64 {
    (region_volume(edited, region) - region_volume(source, region)).abs()
}

/// `delta_v` relative to the source volume inside `region`.
pub fn pct_change(region: &BoxSet, edited: &BoxSet, source: &BoxSet) -> Result<f64> {
    let base = region_volume(source, region);
    if base <= 0.0 {
        return Err(Error::MetricUndefined(
            "source has no volume in the region".into(),
        ));
    }
    Ok(delta_v(region, edited, source) / base)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PepFlag {
    NoPartMentioned,
    EmptyRelevantRegion,
    NoChange,
    /// Only unmentioned regions changed; the score is minus infinity.
    NoRelevantChange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PepEntry {
    pub utterance: String,
    pub delta_v_whole: f64,
    pub delta_v_relevant: f64,
    pub pct_whole: Option<f64>,
    pub pct_relevant: Option<f64>,
    /// Natural-log score; absent when flagged.
    pub pep: Option<f64>,
    pub flag: Option<PepFlag>,
}

impl PepEntry {
    /// The score with the minus-infinity sentinel filled in.
    pub fn score(&self) -> Option<f64> {
        match self.flag {
            Some(PepFlag::NoRelevantChange) => Some(f64::NEG_INFINITY),
            _ => self.pep,
        }
    }
}

/// Log ratio of the percentage volume change in the mentioned parts to that of
/// the whole shape. `source` must be realized from the unedited shape.
pub fn pep(source: &BoxSet, edited: &BoxSet, utterance: &str, swell: f64) -> PepEntry {
    let mut entry = PepEntry {
        utterance: utterance.to_string(),
        delta_v_whole: (volume(edited) - volume(source)).abs(),
        delta_v_relevant: 0.0,
        pct_whole: None,
        pct_relevant: None,
        pep: None,
        flag: None,
    };
    let src_total = volume(source);
    if src_total > 0.0 {
        entry.pct_whole = Some(entry.delta_v_whole / src_total);
    }
    let region = match relevant_region(source, utterance, swell) {
        Ok(r) => r,
        Err(_) => {
            entry.flag = Some(PepFlag::NoPartMentioned);
            return entry;
        }
    };
    entry.delta_v_relevant = delta_v(&region, edited, source);
    entry.pct_relevant = pct_change(&region, edited, source).ok();
    entry.flag = match (entry.pct_relevant, entry.pct_whole) {
        (None, _) => Some(PepFlag::EmptyRelevantRegion),
        (_, None) | (_, Some(0.0)) => Some(PepFlag::NoChange),
        (Some(r), _) if r == 0.0 => Some(PepFlag::NoRelevantChange),
        (Some(r), Some(w)) => {
            entry.pep = Some((r / w).ln());
            None
        }
    };
    entry
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PepSummary {
    pub mean_pep: f64,
    pub mean_delta_v: f64,
    pub defined: usize,
    pub flagged: BTreeMap<String, usize>,
    pub swell: f64,
    pub log_base: String,
}

/// Means over unflagged entries, with flag counts.
pub fn aggregate(entries: &[PepEntry], swell: f64) -> Result<PepSummary> {
    let mut flagged = BTreeMap::new();
    let mut sum_pep = 0.0;
    let mut sum_dv = 0.0;
    let mut n = 0;
    for e in entries {
        match (e.flag, e.pep) {
            (None, Some(p)) => {
                sum_pep += p;
                sum_dv += e.delta_v_whole;
                n += 1;
            }
            (flag, _) => {
                let key = serde_json::to_value(flag.unwrap_or(PepFlag::NoChange))?
                    .as_str()
                    .unwrap_or("unknown")
                    .to_string();
                *flagged.entry(key).or_insert(0) += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::MetricUndefined(format!(
            "all {} entries are flagged",
            entries.len()
        )));
    }
    Ok(PepSummary {
        mean_pep: sum_pep / n as f64,
        mean_delta_v: sum_dv / n as f64,
        defined: n,
        flagged,
        swell,
        log_base: "e".into(),
    })
}

/// Per-edit records followed by one aggregate record.
pub fn write_pep_report(
    out: &mut impl Write,
    entries: &[PepEntry],
    summary: &PepSummary,
) -> Result<()> {
    for e in entries {
        serde_json::to_writer(
            &mut *out,
            &serde_json::json!({ "record": "edit", "entry": e }),
        )?;
        out.write_all(b"\n")?;
    }
    serde_json::to_writer(
        &mut *out,
        &serde_json::json!({ "record": "aggregate", "summary": summary }),
    )?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Per-category, per-parameter [1st, 99th] percentile bounds of a shape set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub chair: Option<Vec<(f64, f64)>>,
    pub table: Option<Vec<(f64, f64)>>,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl Envelope {
    pub fn from_shapes(shapes: &[ShapeParams]) -> Self {
        let bounds = |cat: Category| {
            let vals: Vec<[f64; PARAM_COUNT]> = shapes
                .iter()
                .filter(|p| p.category == cat)
                .map(ShapeParams::values)
                .collect();
            if vals.is_empty() {
                return None;
            }
            Some(
                (0..PARAM_COUNT)
                    .map(|i| {
                        let mut col: Vec<f64> = vals.iter().map(|v| v[i]).collect();
                        col.sort_by(f64::total_cmp);
                        (percentile(&col, 0.01), percentile(&col, 0.99))
                    })
                    .collect(),
            )
        };
        Self {
            chair: bounds(Category::Chair),
            table: bounds(Category::Table),
        }
    }

    pub fn contains(&self, p: &ShapeParams) -> bool {
        let b = match p.category {
            Category::Chair => &self.chair,
            Category::Table => &self.table,
        };
        b.as_ref().is_some_and(|b| {
            p.values()
                .iter()
                .zip(b)
                .all(|(x, (lo, hi))| lo <= x && x <= hi)
        })
    }

    /// Fraction of shapes inside the envelope.
    pub fn validity_rate(&self, shapes: &[ShapeParams]) -> f64 {
        if shapes.is_empty() {
            return 0.0;
        }
        shapes.iter().filter(|p| self.contains(p)).count() as f64 / shapes.len() as f64
    }
}
