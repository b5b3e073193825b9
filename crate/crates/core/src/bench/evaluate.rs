use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{Dataset, Scanpath};
use crate::density::{fit_center_bias_bandwidth, FittedBaseline};
use crate::error::{Error, Result};
use crate::metrics::{self, FixationScore, Metric};
use crate::models::{check_inside, ConditionalModel, ModelContext, SaliencyStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvaluateOptions {
    pub metrics: Vec<Metric>,
    pub downsample: u32,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        Self {
            metrics: Metric::ALL.to_vec(),
            downsample: 1,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    /// Metrics actually scored. LL and IG are dropped for models without
    /// probability maps.
    pub metrics: Vec<Metric>,
    /// Ordered by scanpath, fixation, then metric.
    pub scores: Vec<FixationScore>,
    /// NSS rows left out because the map was constant.
    pub skipped_nss: usize,
}

impl ScoreTable {
    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        metrics::write_scores_csv(&self.scores, w)
    }
}

fn wrap(sp: &Scanpath, scanpath_index: usize, fixation_index: usize, e: Error) -> Error {
    Error::Model {
        image_id: sp.image_id.clone(),
        scanpath_index,
        fixation_index,
        source: Box::new(e),
    }
}

/// Scores every fixation but the first of every scanpath under the model's
/// map conditioned on the preceding fixations.
///
/// IG is measured against `ig_baseline`; when that is missing a
/// leave-image-out center bias is fitted on `ds`.
pub fn evaluate<M: ConditionalModel>(
    model: &M,
    ds: &Dataset,
    saliency: Option<&SaliencyStore>,
    ig_baseline: Option<&FittedBaseline>,
    opts: &EvaluateOptions,
) -> Result<ScoreTable> {
    if opts.jobs == 0 {
        return Err(Error::InvalidParameter("jobs must be >= 1".into()));
    }
    if opts.metrics.is_empty() {
        return Err(Error::InvalidParameter("no metrics requested".into()));
    }
    let mut wanted: Vec<Metric> = Vec::new();
    for &m in &opts.metrics {
        if !wanted.contains(&m) && (model.is_probabilistic() || !m.needs_probability()) {
            wanted.push(m);
        }
    }
    if wanted.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "`{}` does not emit probability maps; request AUC or NSS",
            model.name()
        )));
    }
    if model.uses_saliency() {
        let store = saliency.ok_or_else(|| {
            Error::MissingSaliency(format!("`{}` needs a saliency directory", model.name()))
        })?;
        for image in ds.image_ids() {
            if store.get(image).is_none() {
                return Err(Error::MissingSaliency(image.to_string()));
            }
        }
    }

    let fitted;
    let baseline = if wanted.contains(&Metric::InformationGain) {
        match ig_baseline {
            Some(b) => Some(b),
            None => {
                let (bw, _) = fit_center_bias_bandwidth(ds, opts.downsample)?;
                fitted = FittedBaseline::center_bias(ds, bw, opts.downsample)?;
                Some(&fitted)
            }
        }
    } else {
        None
    };

    let score_one = |(index, sp): (usize, &Scanpath)| -> Result<(Vec<FixationScore>, usize)> {
        let meta = ds.stimulus(&sp.image_id)?;
        let ctx = ModelContext::new(meta, opts.downsample)?
            .with_subject(&sp.subject_id)
            .with_saliency(saliency.and_then(|s| s.get(&sp.image_id)));
        let mut out = Vec::with_capacity(sp.len().saturating_sub(1) * wanted.len());
        let mut skipped = 0;
        let Some((first, rest)) = sp.fixations.split_first() else {
            return Ok((out, 0));
        };
        check_inside(&ctx, first).map_err(|e| wrap(sp, index, 0, e))?;
        let mut state = model.initialize(&ctx, first).map_err(|e| wrap(sp, index, 0, e))?;
        for (offset, f) in rest.iter().enumerate() {
            let i = offset + 1;
            let at = |e| wrap(sp, index, i, e);
            check_inside(&ctx, f).map_err(at)?;
            let map = model.compute_priority_map(&ctx, &state).map_err(at)?;
            for &metric in &wanted {
                let value = match metric {
                    Metric::LogLikelihood => metrics::log_likelihood(&map, f),
                    Metric::InformationGain => {
                        let cb = baseline
                            .expect("baseline is set when IG is requested")
                            .predict(&sp.image_id, i)
                            .map_err(at)?;
                        metrics::information_gain(&map, cb, f)
                    }
                    Metric::Auc => metrics::auc_uniform(&map, f),
                    Metric::Nss => match metrics::nss(&map, f) {
                        Err(Error::DegenerateMap) => {
                            skipped += 1;
                            continue;
                        }
                        other => other,
                    },
                }
                .map_err(at)?;
                out.push(FixationScore {
                    image_id: sp.image_id.clone(),
                    subject_id: sp.subject_id.clone(),
                    scanpath_index: index,
                    fixation_index: i,
                    metric,
                    value,
                });
            }
            if offset + 1 < rest.len() {
                state = model.update_state(&ctx, state, f).map_err(at)?;
            }
        }
        Ok((out, skipped))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let per_scanpath: Vec<Result<(Vec<FixationScore>, usize)>> =
        pool.install(|| ds.scanpaths.par_iter().enumerate().map(score_one).collect());

    let mut scores = Vec::with_capacity(ds.scored_fixation_count() * wanted.len());
    let mut skipped_nss = 0;
    for r in per_scanpath {
        let (s, k) = r?;
        scores.extend(s);
        skipped_nss += k;
    }
    Ok(ScoreTable {
        metrics: wanted,
        scores,
        skipped_nss,
    })
}

/// What was evaluated, as given on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: String,
    #[serde(default)]
    pub dataset_path: Option<String>,
    pub model: String,
    /// Row label in reports; defaults to the model name.
    pub label: String,
    #[serde(default)]
    pub params_path: Option<String>,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
    #[serde(default)]
    pub saliency_dir: Option<String>,
    pub metrics: Vec<Metric>,
    pub downsample: u32,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: String,
    pub timestamp_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRun {
    pub config: RunConfig,
    pub probabilistic: bool,
    pub internal_saliency: Option<String>,
    pub metrics: Vec<Metric>,
    pub scores: Vec<FixationScore>,
    pub skipped_nss: usize,
    /// Per-image mean, then mean over images. Metrics without any score are
    /// absent.
    pub aggregate: BTreeMap<Metric, f64>,
    pub provenance: Provenance,
}

impl EvaluationRun {
    pub fn new<M: ConditionalModel>(config: RunConfig, model: &M, table: ScoreTable) -> Self {
        let timestamp_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let provenance = Provenance {
            seed: config.seed,
            config_hash: config.hash(),
            timestamp_unix,
        };
        let mut run = Self {
            config,
            probabilistic: model.is_probabilistic(),
            internal_saliency: model.internal_saliency(),
            metrics: table.metrics,
            scores: table.scores,
            skipped_nss: table.skipped_nss,
            aggregate: BTreeMap::new(),
            provenance,
        };
        run.aggregate = run.recompute_aggregate();
        run
    }

    pub fn recompute_aggregate(&self) -> BTreeMap<Metric, f64> {
        self.metrics
            .iter()
            .filter_map(|&m| metrics::aggregate(&self.scores, m).ok().map(|v| (m, v)))
            .collect()
    }

    pub fn label(&self) -> &str {
        &self.config.label
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
