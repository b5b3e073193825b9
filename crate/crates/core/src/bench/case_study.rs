use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvaluationRun;
use crate::data::{saccade_amplitude_dva, Dataset};
use crate::error::{Error, Result};
use crate::grid::PriorityMap;
use crate::metrics::{histogram_equalize, Metric};
use crate::models::{conditional_prediction, ConditionalModel, ModelContext, SaliencyStore};
use crate::smap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyQuery {
    /// Keep fixations whose incoming saccade is longer than this.
    pub min_amplitude_dva: Option<f64>,
    /// Keep fixations farther than this from every earlier fixation.
    pub min_distance_to_previous_dva: Option<f64>,
    pub top_k: usize,
}

impl CaseStudyQuery {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidParameter("top_k must be >= 1".into()));
        }
        for t in [self.min_amplitude_dva, self.min_distance_to_previous_dva].into_iter().flatten() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::InvalidParameter(format!("filter threshold {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FixationKey {
    pub scanpath_index: usize,
    pub fixation_index: usize,
    pub image_id: String,
    pub subject_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudy {
    pub key: FixationKey,
    pub auc_std: f64,
    /// `(run label, AUC)` in run order.
    pub aucs: Vec<(String, f64)>,
    pub amplitude_dva: f64,
    pub min_distance_to_previous_dva: f64,
}

/// Standard deviation dividing by the number of values.
pub fn population_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

fn auc_table(run: &EvaluationRun) -> BTreeMap<FixationKey, f64> {
    run.scores
        .iter()
        .filter(|s| s.metric == Metric::Auc)
        .map(|s| {
            (
                FixationKey {
                    scanpath_index: s.scanpath_index,
                    fixation_index: s.fixation_index,
                    image_id: s.image_id.clone(),
                    subject_id: s.subject_id.clone(),
                },
                s.value,
            )
        })
        .collect()
}

/// Fixations where the runs disagree most on AUC, after the filters.
/// Equal spreads keep key order.
pub fn rank_case_studies(runs: &[EvaluationRun], ds: &Dataset, query: &CaseStudyQuery) -> Result<Vec<CaseStudy>> {
    query.validate()?;
    if runs.len() < 2 {
        return Err(Error::InvalidParameter("case studies need at least two runs".into()));
    }
    let tables: Vec<_> = runs.iter().map(auc_table).collect();
    if tables[0].is_empty() {
        return Err(Error::EmptyInput(format!("run `{}` has no AUC scores", runs[0].label())));
    }
    for (run, t) in runs.iter().zip(&tables).skip(1) {
        if !t.keys().eq(tables[0].keys()) {
            return Err(Error::InvalidParameter(format!(
                "run `{}` covers different fixations than `{}`",
                run.label(),
                runs[0].label()
            )));
        }
    }

    let mut studies = Vec::new();
    for key in tables[0].keys() {
        let sp = ds.scanpaths.get(key.scanpath_index).filter(|sp| {
            sp.image_id == key.image_id && sp.subject_id == key.subject_id && key.fixation_index < sp.len()
        });
        let sp = sp.ok_or_else(|| {
            Error::InvalidParameter(format!(
                "scanpath {} fixation {} is not in dataset `{}`",
                key.scanpath_index, key.fixation_index, ds.name
            ))
        })?;
        let meta = ds.stimulus(&sp.image_id)?;
        let i = key.fixation_index;
        let target = &sp.fixations[i];
        let amplitude = saccade_amplitude_dva(&sp.fixations[i - 1], target, meta);
        let nearest = sp.fixations[..i]
            .iter()
            .map(|f| saccade_amplitude_dva(f, target, meta))
            .fold(f64::INFINITY, f64::min);
        if query.min_amplitude_dva.is_some_and(|t| amplitude <= t)
            || query.min_distance_to_previous_dva.is_some_and(|t| nearest <= t)
        {
            continue;
        }
        let aucs: Vec<(String, f64)> = runs
            .iter()
            .zip(&tables)
            .map(|(r, t)| (r.label().to_string(), t[key]))
            .collect();
        let values: Vec<f64> = aucs.iter().map(|(_, v)| *v).collect();
        studies.push(CaseStudy {
            key: key.clone(),
            auc_std: population_std(&values),
            aucs,
            amplitude_dva: amplitude,
            min_distance_to_previous_dva: nearest,
        });
    }
    studies.sort_by(|a, b| b.auc_std.total_cmp(&a.auc_std));
    studies.truncate(query.top_k);
    Ok(studies)
}

pub struct ExportModel<'a, M> {
    pub label: &'a str,
    pub model: &'a M,
    pub saliency: Option<&'a SaliencyStore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyMap {
    pub rank: usize,
    pub key: FixationKey,
    pub model: String,
    pub smap: String,
    #[serde(default)]
    pub pgm: Option<String>,
}

#[derive(Serialize)]
struct Index<'a> {
    studies: &'a [CaseStudy],
    maps: &'a [CaseStudyMap],
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_pgm(map: &PriorityMap, path: &Path) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", map.width(), map.height()).into_bytes();
    bytes.extend(map.values().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Writes the histogram-equalized conditional map of every model for every
/// case study, plus `index.json` listing them.
pub fn export_case_maps<M: ConditionalModel>(
    studies: &[CaseStudy],
    models: &[ExportModel<'_, M>],
    ds: &Dataset,
    downsample: u32,
    out_dir: impl AsRef<Path>,
    pgm: bool,
) -> Result<Vec<CaseStudyMap>> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut maps = Vec::new();
    for (rank, study) in studies.iter().enumerate() {
        let sp = &ds.scanpaths[study.key.scanpath_index];
        let meta = ds.stimulus(&sp.image_id)?;
        let history = &sp.fixations[..study.key.fixation_index];
        for m in models {
            let ctx = ModelContext::new(meta, downsample)?
                .with_subject(&sp.subject_id)
                .with_saliency(m.saliency.and_then(|s| s.get(&sp.image_id)));
            let map = histogram_equalize(&conditional_prediction(m.model, &ctx, history)?);
            let stem = format!("case{:03}_{}", rank + 1, sanitize(m.label));
            let smap_name = format!("{stem}.smap");
            smap::save_smap(&map, out_dir.join(&smap_name))?;
            let pgm_name = if pgm {
                let name = format!("{stem}.pgm");
                write_pgm(&map, &out_dir.join(&name))?;
                Some(name)
            } else {
                None
            };
            maps.push(CaseStudyMap {
                rank: rank + 1,
                key: study.key.clone(),
                model: m.label.to_string(),
                smap: smap_name,
                pgm: pgm_name,
            });
        }
    }
    let index = out_dir.join("index.json");
    let text = serde_json::to_string_pretty(&Index { studies, maps: &maps })?;
    std::fs::write(&index, text + "\n").map_err(|e| Error::io(&index, e))?;
    Ok(maps)
}
