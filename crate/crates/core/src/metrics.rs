//! Per-fixation metrics on conditional priority maps.
//!
//! All log-likelihood quantities are in bits. Probabilities below
//! [`PROBABILITY_FLOOR`] are raised to the floor and the map renormalized
//! before taking logarithms, so scores stay finite.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Fixation;
use crate::error::{Error, Result};
use crate::grid::PriorityMap;

/// Per-cell probability floor, 2^-32.
pub const PROBABILITY_FLOOR: f64 = 1.0 / 4_294_967_296.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "LL")]
    LogLikelihood,
    #[serde(rename = "IG")]
    InformationGain,
    #[serde(rename = "AUC")]
    Auc,
    #[serde(rename = "NSS")]
    Nss,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::LogLikelihood,
        Metric::InformationGain,
        Metric::Auc,
        Metric::Nss,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Metric::LogLikelihood => "LL",
            Metric::InformationGain => "IG",
            Metric::Auc => "AUC",
            Metric::Nss => "NSS",
        }
    }

    /// LL and IG only make sense for models emitting probability maps.
    pub fn needs_probability(self) -> bool {
        matches!(self, Metric::LogLikelihood | Metric::InformationGain)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ll" => Ok(Metric::LogLikelihood),
            "ig" => Ok(Metric::InformationGain),
            "auc" => Ok(Metric::Auc),
            "nss" => Ok(Metric::Nss),
            other => Err(Error::InvalidParameter(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationScore {
    pub image_id: String,
    pub subject_id: String,
    pub scanpath_index: usize,
    /// Always at least 1; the initial fixation is never scored.
    pub fixation_index: usize,
    pub metric: Metric,
    pub value: f64,
}

fn floored_probability(values: &[f64], index: usize) -> f64 {
    if values.iter().all(|&v| v >= PROBABILITY_FLOOR) {
        return values[index];
    }
    let total: f64 = values.iter().map(|&v| v.max(PROBABILITY_FLOOR)).sum();
    values[index].max(PROBABILITY_FLOOR) / total
}

/// Log-likelihood of a fixation relative to a uniform map over the same grid.
pub fn log_likelihood(map: &PriorityMap, fixation: &Fixation) -> Result<f64> {
    map.require_probability()?;
    let index = map.geometry().cell_of(fixation)?;
    let cells = map.geometry().cells() as f64;
    Ok(floored_probability(map.values(), index).log2() - (1.0 / cells).log2())
}

pub fn information_gain(
    map: &PriorityMap,
    baseline: &PriorityMap,
    fixation: &Fixation,
) -> Result<f64> {
    map.require_probability()?;
    baseline.require_probability()?;
    if map.geometry() != baseline.geometry() {
        return Err(Error::GeometryMismatch(format!(
            "model {:?} vs baseline {:?}",
            map.geometry(),
            baseline.geometry()
        )));
    }
    let index = map.geometry().cell_of(fixation)?;
    Ok(floored_probability(map.values(), index).log2()
        - floored_probability(baseline.values(), index).log2())
}

/// AUC with every grid cell as a nonfixation: the normalized mid-rank of the
/// fixated cell.
pub fn auc_uniform(map: &PriorityMap, fixation: &Fixation) -> Result<f64> {
    let index = map.geometry().cell_of(fixation)?;
    let v = map.values()[index];
    let (mut below, mut tied) = (0usize, 0usize);
    for &u in map.values() {
        if u < v {
            below += 1;
        } else if u == v {
            tied += 1;
        }
    }
    Ok((below as f64 + 0.5 * tied as f64) / map.values().len() as f64)
}

/// Normalized scanpath saliency with population standard deviation.
pub fn nss(map: &PriorityMap, fixation: &Fixation) -> Result<f64> {
    let index = map.geometry().cell_of(fixation)?;
    let values = map.values();
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::DegenerateMap);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        return Err(Error::DegenerateMap);
    }
    Ok((values[index] - mean) / std)
}

/// Dataset-level score: mean over the fixations of each image, then the mean
/// over images.
pub fn aggregate<'a>(
    scores: impl IntoIterator<Item = &'a FixationScore>,
    metric: Metric,
) -> Result<f64> {
    let mut per_image: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for s in scores.into_iter().filter(|s| s.metric == metric) {
        let entry = per_image.entry(s.image_id.as_str()).or_insert((0.0, 0));
        entry.0 += s.value;
        entry.1 += 1;
    }
    if per_image.is_empty() {
        return Err(Error::EmptyInput(format!("no {metric} scores to aggregate")));
    }
    let total: f64 = per_image.values().map(|&(sum, n)| sum / n as f64).sum();
    Ok(total / per_image.len() as f64)
}

/// Replaces every value by its fractional mid-rank `(rank + 0.5) / C`, ties
/// sharing their mean rank. Rank order, and therefore every AUC, is kept.
pub fn histogram_equalize(map: &PriorityMap) -> PriorityMap {
    let values = map.values();
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; n];
    let denom = 2.0 * n as f64;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // mean 0-based rank of the tie group is (start + end - 1) / 2
        let equalized = (start + end) as f64 / denom;
        for &i in &order[start..end] {
            out[i] = equalized;
        }
        start = end;
    }
    PriorityMap::priority(*map.geometry(), out).expect("ranks are finite")
}

pub fn write_scores_csv(scores: &[FixationScore], w: impl Write) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for s in scores {
        writer.serialize(s)?;
    }
    writer.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_scores_csv(r: impl Read) -> Result<Vec<FixationScore>> {
    let mut reader = csv::Reader::from_reader(r);
    reader
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
