//! Stimuli, fixations and scanpaths, plus the JSON-lines dataset format.
//!
//! One scanpath per line:
//!
//! ```text
//! {"image_id":"i1","subject_id":"s1","width_px":1024,"height_px":768,"px_per_dva":35.0,
//!  "forced_initial":true,"fixations":[{"x":512.000000,"y":384.000000,"duration_ms":null}]}
//! ```
//!
//! Coordinates and durations are written with six fractional digits. A
//! fixation may carry `"invalid": true` to mark an unusable initial fixation.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusMeta {
    pub image_id: String,
    pub width_px: u32,
    pub height_px: u32,
    /// Pixels per degree of visual angle.
    pub px_per_dva: f64,
}

impl StimulusMeta {
    pub fn new(
        image_id: impl Into<String>,
        width_px: u32,
        height_px: u32,
        px_per_dva: f64,
    ) -> Result<Self> {
        let meta = Self {
            image_id: image_id.into(),
            width_px,
            height_px,
            px_per_dva,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::InvalidStimulus {
                image_id: self.image_id.clone(),
                message,
            })
        };
        if self.width_px == 0 || self.height_px == 0 {
            return fail(format!(
                "dimensions must be positive, got {}x{}",
                self.width_px, self.height_px
            ));
        }
        if !(self.px_per_dva.is_finite() && self.px_per_dva > 0.0) {
            return fail(format!("px_per_dva must be positive, got {}", self.px_per_dva));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (self.width_px as f64 / 2.0, self.height_px as f64 / 2.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.width_px as f64 && y < self.height_px as f64
    }

    /// Nearest in-bounds position, snapping to the last pixel on overflow.
    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64) {
        let clamp_axis = |v: f64, size: u32| {
            if v < 0.0 {
                0.0
            } else if v >= size as f64 {
                (size - 1) as f64
            } else {
                v
            }
        };
        (clamp_axis(x, self.width_px), clamp_axis(y, self.height_px))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixation {
    pub x: f64,
    pub y: f64,
    pub duration_ms: Option<f64>,
    /// Marked unusable by the recording (only meaningful for fixation 0).
    pub invalid: bool,
}

impl Fixation {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            duration_ms: None,
            invalid: false,
        }
    }

    pub fn with_duration(x: f64, y: f64, duration_ms: f64) -> Self {
        Self {
            duration_ms: Some(duration_ms),
            ..Self::new(x, y)
        }
    }

    pub fn distance_px(&self, other: &Fixation) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn same_position(&self, other: &Fixation) -> bool {
        self.x == other.x && self.y == other.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scanpath {
    pub image_id: String,
    pub subject_id: String,
    /// Fixation 0 is the initial (forced) fixation and is never scored.
    pub fixations: Vec<Fixation>,
    pub forced_initial: bool,
}

impl Scanpath {
    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub stimuli: BTreeMap<String, StimulusMeta>,
    pub scanpaths: Vec<Scanpath>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        stimuli: impl IntoIterator<Item = StimulusMeta>,
        scanpaths: Vec<Scanpath>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for meta in stimuli {
            meta.validate()?;
            if let Some(prev) = map.get(&meta.image_id) {
                if prev != &meta {
                    return Err(Error::InvalidStimulus {
                        image_id: meta.image_id.clone(),
                        message: "declared twice with different dimensions".into(),
                    });
                }
            }
            map.insert(meta.image_id.clone(), meta);
        }
        for sp in &scanpaths {
            if !map.contains_key(&sp.image_id) {
                return Err(Error::UnknownStimulus(sp.image_id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            stimuli: map,
            scanpaths,
        })
    }

    pub fn stimulus(&self, image_id: &str) -> Result<&StimulusMeta> {
        self.stimuli
            .get(image_id)
            .ok_or_else(|| Error::UnknownStimulus(image_id.to_string()))
    }

    /// Image ids that have at least one scanpath, in sorted order.
    pub fn image_ids(&self) -> Vec<&str> {
        let ids: BTreeSet<&str> = self.scanpaths.iter().map(|s| s.image_id.as_str()).collect();
        ids.into_iter().collect()
    }

    pub fn subject_ids(&self) -> Vec<&str> {
        let ids: BTreeSet<&str> = self
            .scanpaths
            .iter()
            .map(|s| s.subject_id.as_str())
            .collect();
        ids.into_iter().collect()
    }

    /// Number of fixations that get scored (every fixation but the first).
    pub fn scored_fixation_count(&self) -> usize {
        self.scanpaths.iter().map(|s| s.len().saturating_sub(1)).sum()
    }

    pub fn fixation_count(&self) -> usize {
        self.scanpaths.iter().map(Scanpath::len).sum()
    }
}

/// How out-of-bounds fixations are handled while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutOfBoundsPolicy {
    #[default]
    Reject,
    Clamp,
}

#[derive(Deserialize)]
struct RecordIn {
    image_id: String,
    subject_id: String,
    width_px: u32,
    height_px: u32,
    px_per_dva: f64,
    #[serde(default)]
    forced_initial: bool,
    fixations: Vec<FixationIn>,
}

#[derive(Deserialize)]
struct FixationIn {
    x: f64,
    y: f64,
    #[serde(default)]
    duration_ms: Option<f64>,
    #[serde(default)]
    invalid: bool,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    image_id: &'a str,
    subject_id: &'a str,
    width_px: u32,
    height_px: u32,
    px_per_dva: f64,
    forced_initial: bool,
    fixations: Vec<FixationOut>,
}

#[derive(Serialize)]
struct FixationOut {
    x: Box<RawValue>,
    y: Box<RawValue>,
    duration_ms: Option<Box<RawValue>>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    invalid: bool,
}

fn fixed6(v: f64) -> Box<RawValue> {
    // `{:.6}` on a finite f64 is always a valid JSON number.
    RawValue::from_string(format!("{v:.6}")).expect("finite decimal")
}

pub fn load_dataset(path: impl AsRef<Path>, policy: OutOfBoundsPolicy) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset(BufReader::new(file), name, path, policy)
}

/// Parses the JSON-lines format. `origin` is used in error messages only.
pub fn read_dataset(
    reader: impl BufRead,
    name: impl Into<String>,
    origin: &Path,
    policy: OutOfBoundsPolicy,
) -> Result<Dataset> {
    let mut stimuli: BTreeMap<String, StimulusMeta> = BTreeMap::new();
    let mut scanpaths = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let record: RecordIn =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let meta = StimulusMeta {
            image_id: record.image_id.clone(),
            width_px: record.width_px,
            height_px: record.height_px,
            px_per_dva: record.px_per_dva,
        };
        meta.validate().map_err(|e| parse_err(e.to_string()))?;
        match stimuli.get(&meta.image_id) {
            Some(prev) if prev != &meta => {
                return Err(parse_err(format!(
                    "stimulus `{}` redeclared as {}x{} @ {} px/dva (was {}x{} @ {})",
                    meta.image_id,
                    meta.width_px,
                    meta.height_px,
                    meta.px_per_dva,
                    prev.width_px,
                    prev.height_px,
                    prev.px_per_dva
                )))
            }
            Some(_) => {}
            None => {
                stimuli.insert(meta.image_id.clone(), meta.clone());
            }
        }
        if record.fixations.is_empty() {
            return Err(parse_err("scanpath without fixations".into()));
        }
        let mut fixations = Vec::with_capacity(record.fixations.len());
        for (i, f) in record.fixations.into_iter().enumerate() {
            if !(f.x.is_finite() && f.y.is_finite()) {
                return Err(parse_err(format!("fixation {i} has non-finite coordinates")));
            }
            if let Some(d) = f.duration_ms {
                if !(d.is_finite() && d >= 0.0) {
                    return Err(parse_err(Error::NegativeDuration(d).to_string()));
                }
            }
            let mut fixation = Fixation {
                x: f.x,
                y: f.y,
                duration_ms: f.duration_ms,
                invalid: f.invalid,
            };
            if !meta.contains(f.x, f.y) {
                if i == 0 {
                    // An out-of-bounds initial fixation is treated as invalid.
                    fixation.invalid = true;
                } else if policy == OutOfBoundsPolicy::Reject {
                    return Err(parse_err(format!(
                        "fixation {i}: {}",
                        Error::OutOfBounds {
                            x: f.x,
                            y: f.y,
                            width: meta.width_px,
                            height: meta.height_px,
                        }
                    )));
                }
                (fixation.x, fixation.y) = meta.clamp(f.x, f.y);
            }
            fixations.push(fixation);
        }
        scanpaths.push(Scanpath {
            image_id: record.image_id,
            subject_id: record.subject_id,
            fixations,
            forced_initial: record.forced_initial,
        });
    }
    Dataset::new(name, stimuli.into_values(), scanpaths)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(dataset, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_dataset(dataset: &Dataset, mut w: impl Write) -> Result<()> {
    for sp in &dataset.scanpaths {
        let meta = dataset.stimulus(&sp.image_id)?;
        let record = RecordOut {
            image_id: &sp.image_id,
            subject_id: &sp.subject_id,
            width_px: meta.width_px,
            height_px: meta.height_px,
            px_per_dva: meta.px_per_dva,
            forced_initial: sp.forced_initial,
            fixations: sp
                .fixations
                .iter()
                .map(|f| FixationOut {
                    x: fixed6(f.x),
                    y: fixed6(f.y),
                    duration_ms: f.duration_ms.map(fixed6),
                    invalid: f.invalid,
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PreprocessPolicy {
    /// Prepend a forced central fixation to paths that lack one.
    pub inject_central: bool,
    /// Replace an invalid initial fixation by the stimulus center.
    pub replace_invalid_initial: bool,
    /// Collapse exact consecutive duplicates.
    pub dedup: bool,
}

impl Default for PreprocessPolicy {
    fn default() -> Self {
        Self {
            inject_central: false,
            replace_invalid_initial: true,
            dedup: true,
        }
    }
}

pub fn preprocess_scanpath(
    scanpath: &Scanpath,
    meta: &StimulusMeta,
    policy: PreprocessPolicy,
) -> Scanpath {
    let (cx, cy) = meta.center();
    let mut out = scanpath.clone();

    if policy.replace_invalid_initial {
        if let Some(first) = out.fixations.first_mut() {
            if first.invalid || !meta.contains(first.x, first.y) {
                *first = Fixation {
                    x: cx,
                    y: cy,
                    duration_ms: first.duration_ms,
                    invalid: false,
                };
                out.forced_initial = true;
            }
        }
    }

    if policy.inject_central && !out.forced_initial {
        out.fixations.insert(0, Fixation::new(cx, cy));
        out.forced_initial = true;
    }

    if policy.dedup {
        let mut merged: Vec<Fixation> = Vec::with_capacity(out.fixations.len());
        for f in out.fixations {
            match merged.last_mut() {
                Some(prev) if prev.same_position(&f) => {
                    prev.duration_ms = match (prev.duration_ms, f.duration_ms) {
                        (Some(a), Some(b)) => Some(a + b),
                        (a, b) => a.or(b),
                    };
                }
                _ => merged.push(f),
            }
        }
        out.fixations = merged;
    }
    out
}

pub fn preprocess_dataset(dataset: &Dataset, policy: PreprocessPolicy) -> Result<Dataset> {
    let scanpaths = dataset
        .scanpaths
        .iter()
        .map(|sp| Ok(preprocess_scanpath(sp, dataset.stimulus(&sp.image_id)?, policy)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: dataset.name.clone(),
        stimuli: dataset.stimuli.clone(),
        scanpaths,
    })
}

/// Saccade amplitude between two fixations in degrees of visual angle.
pub fn saccade_amplitude_dva(a: &Fixation, b: &Fixation, meta: &StimulusMeta) -> f64 {
    a.distance_px(b) / meta.px_per_dva
}
