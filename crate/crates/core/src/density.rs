//! Gaussian kernel density estimates on grids and the spatial baselines built
//! from them: center bias, fixation-number dependent center bias and the
//! spatial gold standard.
//!
//! Kernels are isotropic, truncated at [`KERNEL_RADIUS_SIGMAS`] and evaluated
//! at cell centers. The estimate is renormalized over the image rectangle, so
//! mass falling off-screen is redistributed onto it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StimulusMeta};
use crate::error::{Error, Result};
use crate::fitting::{self, FitResult, FitSpec, FitSplit};
use crate::grid::{Geometry, PriorityMap};
use crate::metrics::{self, PROBABILITY_FLOOR};

pub const KERNEL_RADIUS_SIGMAS: f64 = 5.0;

/// Uniform share mixed into every center-bias grid.
pub const CENTER_BIAS_UNIFORM_WEIGHT: f64 = 0.01;

pub const MIN_BANDWIDTH_PX: f64 = 0.1;
pub const MAX_BANDWIDTH_PX: f64 = 200.0;

/// Bandwidth in pixels for a bandwidth given in degrees of visual angle.
pub fn bandwidth_from_dva(bandwidth_dva: f64, meta: &StimulusMeta) -> f64 {
    bandwidth_dva * meta.px_per_dva
}

#[derive(Debug, Clone)]
struct AxisWindow {
    start: usize,
    weights: Vec<f64>,
    sum: f64,
}

impl AxisWindow {
    fn new(pos: f64, sigma: f64, cells: usize, cell_size: f64) -> Self {
        let radius = KERNEL_RADIUS_SIGMAS * sigma;
        let owner = ((pos / cell_size).floor().max(0.0) as usize).min(cells - 1);
        let lo = (((pos - radius) / cell_size - 0.5).floor().max(0.0) as usize).min(owner);
        let hi = (((pos + radius) / cell_size - 0.5).ceil().max(0.0) as usize)
            .min(cells - 1)
            .max(owner);
        let inv = 1.0 / (2.0 * sigma * sigma);
        let weights: Vec<f64> = (lo..=hi)
            .map(|i| {
                let d = (i as f64 + 0.5) * cell_size - pos;
                if d.abs() <= radius || i == owner {
                    (-d * d * inv).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let sum = weights.iter().sum();
        Self {
            start: lo,
            weights,
            sum,
        }
    }

    #[inline]
    fn weight(&self, i: usize) -> f64 {
        i.checked_sub(self.start)
            .and_then(|k| self.weights.get(k))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Equal-weight Gaussian mixture over a point set, kept in separable form so
/// single cells can be evaluated without building the whole grid.
#[derive(Debug, Clone)]
pub struct SeparableKde {
    geometry: Geometry,
    kernels: Vec<(AxisWindow, AxisWindow)>,
    total: f64,
}

impl SeparableKde {
    pub fn new(points: &[(f64, f64)], bandwidth_px: f64, geometry: Geometry) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput("kernel density estimate without points".into()));
        }
        if !(bandwidth_px.is_finite() && bandwidth_px > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth {bandwidth_px}")));
        }
        let k = geometry.downsample as f64;
        let kernels: Vec<_> = points
            .iter()
            .map(|&(x, y)| {
                (
                    AxisWindow::new(x, bandwidth_px, geometry.width, k),
                    AxisWindow::new(y, bandwidth_px, geometry.height, k),
                )
            })
            .collect();
        let total: f64 = kernels.iter().map(|(wx, wy)| wx.sum * wy.sum).sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth {bandwidth_px} px leaves no mass on the grid"
            )));
        }
        Ok(Self {
            geometry,
            kernels,
            total,
        })
    }

    /// Normalized density of one cell.
    pub fn density_at(&self, index: usize) -> f64 {
        let (i, j) = (index % self.geometry.width, index / self.geometry.width);
        let mut raw = 0.0;
        for (wx, wy) in &self.kernels {
            raw += wx.weight(i) * wy.weight(j);
        }
        raw / self.total
    }

    pub fn to_map(&self) -> Result<PriorityMap> {
        let w = self.geometry.width;
        let mut raw = vec![0.0; self.geometry.cells()];
        for (wx, wy) in &self.kernels {
            for (dj, &gy) in wy.weights.iter().enumerate() {
                let row = (wy.start + dj) * w + wx.start;
                for (di, &gx) in wx.weights.iter().enumerate() {
                    raw[row + di] += gx * gy;
                }
            }
        }
        raw.iter_mut().for_each(|v| *v /= self.total);
        PriorityMap::probability(self.geometry, raw)
    }
}

pub fn gaussian_kde_grid(
    points: &[(f64, f64)],
    bandwidth_px: f64,
    geometry: Geometry,
) -> Result<PriorityMap> {
    SeparableKde::new(points, bandwidth_px, geometry)?.to_map()
}

/// Voluntary fixations (index >= 1) of other images accepted by `keep`,
/// rescaled proportionally into the target stimulus' pixel frame.
fn other_image_points(
    ds: &Dataset,
    target: &StimulusMeta,
    keep: impl Fn(usize) -> bool,
) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for sp in ds.scanpaths.iter().filter(|s| s.image_id != target.image_id) {
        let src = ds.stimulus(&sp.image_id)?;
        let sx = target.width_px as f64 / src.width_px as f64;
        let sy = target.height_px as f64 / src.height_px as f64;
        for (i, f) in sp.fixations.iter().enumerate().skip(1) {
            if keep(i) {
                points.push((f.x * sx, f.y * sy));
            }
        }
    }
    Ok(points)
}

fn center_bias_with(
    ds: &Dataset,
    target_image: &str,
    bandwidth_px: f64,
    downsample: u32,
    keep: impl Fn(usize) -> bool,
) -> Result<PriorityMap> {
    let target = ds.stimulus(target_image)?;
    let points = other_image_points(ds, target, keep)?;
    if points.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no fixations on images other than `{target_image}`"
        )));
    }
    let geometry = Geometry::for_stimulus(target, downsample)?;
    let kde = gaussian_kde_grid(&points, bandwidth_px, geometry)?;
    let uniform = PriorityMap::uniform(geometry);
    PriorityMap::mixture(&[
        (1.0 - CENTER_BIAS_UNIFORM_WEIGHT, &kde),
        (CENTER_BIAS_UNIFORM_WEIGHT, &uniform),
    ])
}

/// Center bias for one image: a KDE over the voluntary fixations of every
/// other image, with a small uniform floor.
pub fn fit_center_bias(
    ds: &Dataset,
    target_image: &str,
    bandwidth_px: f64,
    downsample: u32,
) -> Result<PriorityMap> {
    if ds.image_ids().len() < 2 {
        return Err(Error::InsufficientData(
            "center bias needs at least two images".into(),
        ));
    }
    center_bias_with(ds, target_image, bandwidth_px, downsample, |_| true)
}

/// Partition of fixation indices `1..` into consecutive intervals, given by
/// their start indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct FixationIntervals {
    starts: Vec<usize>,
}

impl FixationIntervals {
    pub fn new(starts: Vec<usize>) -> Result<Self> {
        if starts.first() != Some(&1) {
            return Err(Error::InvalidParameter(
                "fixation intervals must start at index 1".into(),
            ));
        }
        if starts.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "fixation interval starts must increase strictly".into(),
            ));
        }
        Ok(Self { starts })
    }

    /// 1, 2, 3-5, 6-inf
    pub fn mit() -> Self {
        Self {
            starts: vec![1, 2, 3, 6],
        }
    }

    /// 1, 2, 3, 4, 5-6, 7-10, 11-15, 16-inf
    pub fn cat2000() -> Self {
        Self {
            starts: vec![1, 2, 3, 4, 5, 7, 11, 16],
        }
    }

    pub fn single() -> Self {
        Self { starts: vec![1] }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// Interval containing fixation `index` (index 0 shares interval 0).
    pub fn interval_of(&self, index: usize) -> usize {
        self.starts.partition_point(|&s| s <= index).saturating_sub(1)
    }
}

impl TryFrom<Vec<usize>> for FixationIntervals {
    type Error = Error;

    fn try_from(starts: Vec<usize>) -> Result<Self> {
        Self::new(starts)
    }
}

impl From<FixationIntervals> for Vec<usize> {
    fn from(i: FixationIntervals) -> Self {
        i.starts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Uniform,
    Centerbias,
    FixnumCenterbias,
    Goldstandard,
}

/// Bandwidth and mixture weights of a KDE-mixture baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdeParams {
    pub bandwidth_px: f64,
    pub uniform_weight: f64,
    pub centerbias_weight: f64,
}

impl KdeParams {
    pub fn new(bandwidth_px: f64, uniform_weight: f64, centerbias_weight: f64) -> Result<Self> {
        let p = Self {
            bandwidth_px,
            uniform_weight,
            centerbias_weight,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_px.is_finite() && self.bandwidth_px > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth_px must be positive, got {}",
                self.bandwidth_px
            )));
        }
        let (u, c) = (self.uniform_weight, self.centerbias_weight);
        if !(u >= 0.0 && c >= 0.0 && u + c <= 1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "mixture weights ({u}, {c}) must be nonnegative with sum <= 1"
            )));
        }
        Ok(())
    }

    pub fn kde_weight(&self) -> f64 {
        (1.0 - self.uniform_weight - self.centerbias_weight).max(0.0)
    }
}

/// Persisted form of a fitted baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineParams {
    pub kind: BaselineKind,
    pub bandwidth_px: f64,
    pub uniform_weight: f64,
    pub centerbias_weight: f64,
    pub interval_edges: Vec<usize>,
    /// Bandwidth of the center-bias component used by the gold standard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centerbias_bandwidth_px: Option<f64>,
}

impl BaselineParams {
    pub fn kde(&self) -> Result<KdeParams> {
        KdeParams::new(self.bandwidth_px, self.uniform_weight, self.centerbias_weight)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Center-bias style baseline with its per-image (and per-interval) grids.
#[derive(Debug, Clone)]
pub struct FittedBaseline {
    pub params: BaselineParams,
    pub downsample: u32,
    intervals: FixationIntervals,
    grids: BTreeMap<(String, usize), PriorityMap>,
}

impl FittedBaseline {
    /// Plain center bias for every image of the dataset.
    pub fn center_bias(ds: &Dataset, bandwidth_px: f64, downsample: u32) -> Result<Self> {
        Self::build(ds, FixationIntervals::single(), bandwidth_px, downsample)
    }

    pub fn from_params(ds: &Dataset, params: &BaselineParams, downsample: u32) -> Result<Self> {
        let intervals = match params.kind {
            BaselineKind::Centerbias => FixationIntervals::single(),
            BaselineKind::FixnumCenterbias => FixationIntervals::new(params.interval_edges.clone())?,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "{other:?} parameters do not describe a center bias"
                )))
            }
        };
        Self::build(ds, intervals, params.bandwidth_px, downsample)
    }

    fn build(
        ds: &Dataset,
        intervals: FixationIntervals,
        bandwidth_px: f64,
        downsample: u32,
    ) -> Result<Self> {
        if ds.image_ids().len() < 2 {
            return Err(Error::InsufficientData(
                "center bias needs at least two images".into(),
            ));
        }
        for k in 0..intervals.len() {
            let any = ds.scanpaths.iter().any(|sp| {
                (1..sp.len()).any(|i| intervals.interval_of(i) == k)
            });
            if !any {
                return Err(Error::InsufficientData(format!(
                    "fixation interval starting at {} has no fixations",
                    intervals.starts()[k]
                )));
            }
        }
        let mut grids = BTreeMap::new();
        for image in ds.image_ids() {
            for k in 0..intervals.len() {
                let map = center_bias_with(ds, image, bandwidth_px, downsample, |i| {
                    intervals.interval_of(i) == k
                })?;
                grids.insert((image.to_string(), k), map);
            }
        }
        let kind = if intervals.len() == 1 {
            BaselineKind::Centerbias
        } else {
            BaselineKind::FixnumCenterbias
        };
        Ok(Self {
            params: BaselineParams {
                kind,
                bandwidth_px,
                uniform_weight: CENTER_BIAS_UNIFORM_WEIGHT,
                centerbias_weight: 0.0,
                interval_edges: intervals.starts().to_vec(),
                centerbias_bandwidth_px: None,
            },
            downsample,
            intervals,
            grids,
        })
    }

    pub fn intervals(&self) -> &FixationIntervals {
        &self.intervals
    }

    pub fn grid_count(&self) -> usize {
        self.grids.len()
    }

    /// Grid used to predict fixation `fixation_index` on `image_id`.
    pub fn predict(&self, image_id: &str, fixation_index: usize) -> Result<&PriorityMap> {
        let k = self.intervals.interval_of(fixation_index);
        self.grids
            .get(&(image_id.to_string(), k))
            .ok_or_else(|| Error::UnknownStimulus(image_id.to_string()))
    }

    /// Writes one SMAP file per cached grid as `<image_id>.<interval>.smap`.
    pub fn save_grid_cache(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for ((image, k), map) in &self.grids {
            crate::smap::save_smap(map, dir.join(format!("{image}.{k}.smap")))?;
        }
        Ok(())
    }
}

fn subject_points(ds: &Dataset, image: &str, keep_subject: impl Fn(&str) -> bool) -> Vec<(f64, f64)> {
    ds.scanpaths
        .iter()
        .filter(|sp| sp.image_id == image && keep_subject(&sp.subject_id))
        .flat_map(|sp| sp.fixations.iter().skip(1).map(|f| (f.x, f.y)))
        .collect()
}

/// Gold-standard prediction for `image`: KDE over the voluntary fixations of
/// all subjects except `excluded_subject`, mixed with a uniform and a
/// center-bias component.
pub fn gold_standard_predict(
    ds: &Dataset,
    image: &str,
    excluded_subject: Option<&str>,
    params: &KdeParams,
    centerbias: &PriorityMap,
) -> Result<PriorityMap> {
    params.validate()?;
    let meta = ds.stimulus(image)?;
    let geometry = *centerbias.geometry();
    if Geometry::for_stimulus(meta, geometry.downsample)? != geometry {
        return Err(Error::GeometryMismatch(format!(
            "center bias grid {}x{} does not cover image `{image}`",
            geometry.width, geometry.height
        )));
    }
    let points = subject_points(ds, image, |s| Some(s) != excluded_subject);
    if points.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no fixations from other subjects on `{image}`"
        )));
    }
    let kde = gaussian_kde_grid(&points, params.bandwidth_px, geometry)?;
    let uniform = PriorityMap::uniform(geometry);
    PriorityMap::mixture(&[
        (params.kde_weight(), &kde),
        (params.uniform_weight, &uniform),
        (params.centerbias_weight, centerbias),
    ])
}

/// Unconstrained parameters `(ln bandwidth, uniform logit, center-bias logit)`
/// with the KDE logit pinned at zero.
pub fn kde_params_from_unconstrained(x: &[f64]) -> KdeParams {
    let (bw, lu, lc) = (x[0].exp(), x[1], x[2]);
    let m = lu.max(lc).max(0.0);
    let (ek, eu, ec) = ((-m).exp(), (lu - m).exp(), (lc - m).exp());
    let z = ek + eu + ec;
    KdeParams {
        bandwidth_px: bw,
        uniform_weight: eu / z,
        centerbias_weight: ec / z,
    }
}

struct GoldStandardTrial {
    image: usize,
    subject: usize,
    cells: Vec<usize>,
}

/// Precomputed pieces of the gold-standard likelihood.
pub struct GoldStandardObjective<'a> {
    ds: &'a Dataset,
    images: Vec<String>,
    subjects: Vec<String>,
    centerbias: Vec<PriorityMap>,
    trials: Vec<GoldStandardTrial>,
}

impl<'a> GoldStandardObjective<'a> {
    pub fn new(ds: &'a Dataset, centerbias: &FittedBaseline) -> Result<Self> {
        let images: Vec<String> = ds.image_ids().into_iter().map(String::from).collect();
        let subjects: Vec<String> = ds.subject_ids().into_iter().map(String::from).collect();
        let mut cb_maps = Vec::with_capacity(images.len());
        for image in &images {
            cb_maps.push(centerbias.predict(image, 1)?.clone());
        }
        let mut trials: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for sp in &ds.scanpaths {
            let ii = images.binary_search(&sp.image_id).expect("image listed");
            let si = subjects.binary_search(&sp.subject_id).expect("subject listed");
            let geometry = cb_maps[ii].geometry();
            let entry = trials.entry((ii, si)).or_default();
            for f in sp.fixations.iter().skip(1) {
                entry.push(geometry.cell_of(f)?);
            }
        }
        let multi_subject =
            (0..images.len()).any(|ii| trials.keys().filter(|(i, _)| *i == ii).count() >= 2);
        if !multi_subject {
            return Err(Error::InsufficientData(
                "gold standard needs at least two subjects on some image".into(),
            ));
        }
        let trials = trials
            .into_iter()
            .filter(|(_, cells)| !cells.is_empty())
            .map(|((image, subject), cells)| GoldStandardTrial {
                image,
                subject,
                cells,
            })
            .collect();
        Ok(Self {
            ds,
            images,
            subjects,
            centerbias: cb_maps,
            trials,
        })
    }

    /// Per-subject mean log-likelihood (bits) of that subject's scored
    /// fixations. Fixations on images no other subject viewed are skipped
    /// in the leave-one-subject-out variant.
    pub fn per_subject(&self, params: &KdeParams, leave_subject_out: bool) -> Result<Vec<(String, f64)>> {
        let mut sums = vec![(0.0, 0usize); self.subjects.len()];
        for trial in &self.trials {
            let image = &self.images[trial.image];
            let subject = &self.subjects[trial.subject];
            let excluded = leave_subject_out.then_some(subject.as_str());
            let points = subject_points(self.ds, image, |s| Some(s) != excluded);
            if points.is_empty() {
                continue;
            }
            let cb = &self.centerbias[trial.image];
            let geometry = *cb.geometry();
            let cells = geometry.cells() as f64;
            let uniform_value = 1.0 / cells;
            let acc = &mut sums[trial.subject];
            if params.uniform_weight * uniform_value < PROBABILITY_FLOOR {
                // Floor may be active: score on the full grid.
                let map = gold_standard_predict(self.ds, image, excluded, params, cb)?;
                for &cell in &trial.cells {
                    let (x, y) = geometry.cell_center(cell);
                    acc.0 += metrics::log_likelihood(&map, &crate::data::Fixation::new(x, y))?;
                    acc.1 += 1;
                }
                continue;
            }
            let kde = SeparableKde::new(&points, params.bandwidth_px, geometry)?;
            let log_uniform = uniform_value.log2();
            for &cell in &trial.cells {
                let mut p = 0.0;
                p += params.kde_weight() * kde.density_at(cell);
                p += params.uniform_weight * uniform_value;
                p += params.centerbias_weight * cb.values()[cell];
                acc.0 += p.log2() - log_uniform;
                acc.1 += 1;
            }
        }
        Ok(self
            .subjects
            .iter()
            .zip(sums)
            .filter(|(_, (_, n))| *n > 0)
            .map(|(s, (sum, n))| (s.clone(), sum / n as f64))
            .collect())
    }

    /// Mean over subjects of the per-subject mean log-likelihood.
    pub fn mean_ll(&self, params: &KdeParams, leave_subject_out: bool) -> Result<f64> {
        let per = self.per_subject(params, leave_subject_out)?;
        if per.is_empty() {
            return Err(Error::InsufficientData("no scorable fixations".into()));
        }
        Ok(per.iter().map(|(_, v)| v).sum::<f64>() / per.len() as f64)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GoldStandardFit {
    pub params: KdeParams,
    pub centerbias_bandwidth_px: f64,
    /// Leave-one-subject-out mean log-likelihood in bits per fixation.
    pub loso_ll: f64,
    /// Same parameters with every subject included in the estimate.
    pub joint_ll: f64,
    pub fit: FitResult,
}

impl GoldStandardFit {
    pub fn baseline_params(&self) -> BaselineParams {
        BaselineParams {
            kind: BaselineKind::Goldstandard,
            bandwidth_px: self.params.bandwidth_px,
            uniform_weight: self.params.uniform_weight,
            centerbias_weight: self.params.centerbias_weight,
            interval_edges: vec![],
            centerbias_bandwidth_px: Some(self.centerbias_bandwidth_px),
        }
    }
}

/// Maximum-likelihood bandwidth and mixture weights of the gold standard
/// under leave-one-subject-out crossvalidation.
pub fn fit_gold_standard(ds: &Dataset, centerbias: &FittedBaseline) -> Result<GoldStandardFit> {
    let objective = GoldStandardObjective::new(ds, centerbias)?;
    let spec = FitSpec::new(
        vec!["ln_bandwidth_px".into(), "uniform_logit".into(), "centerbias_logit".into()],
        vec![MIN_BANDWIDTH_PX.ln(), -12.0, -12.0],
        vec![MAX_BANDWIDTH_PX.ln(), 12.0, 12.0],
        vec![20f64.ln(), -2.0, -2.0],
        FitSplit::Loso,
    )?;
    let fit = fitting::maximize(&spec, |x| {
        objective
            .mean_ll(&kde_params_from_unconstrained(x), true)
            .unwrap_or(f64::NEG_INFINITY)
    })?;
    let params = kde_params_from_unconstrained(&fit.parameters);
    let loso_ll = objective.mean_ll(&params, true)?;
    let joint_ll = objective.mean_ll(&params, false)?;
    Ok(GoldStandardFit {
        params,
        centerbias_bandwidth_px: centerbias.params.bandwidth_px,
        loso_ll,
        joint_ll,
        fit,
    })
}

/// Maximum-likelihood center-bias bandwidth: maximizes the mean over images
/// of each image's mean log-likelihood under its leave-image-out estimate.
pub fn fit_center_bias_bandwidth(ds: &Dataset, downsample: u32) -> Result<(f64, FitResult)> {
    let images = ds.image_ids();
    if images.len() < 2 {
        return Err(Error::InsufficientData(
            "center bias needs at least two images".into(),
        ));
    }
    struct Target {
        geometry: Geometry,
        points: Vec<(f64, f64)>,
        cells: Vec<usize>,
    }
    let mut targets = Vec::new();
    for image in images {
        let meta = ds.stimulus(image)?;
        let geometry = Geometry::for_stimulus(meta, downsample)?;
        let points = other_image_points(ds, meta, |_| true)?;
        let mut cells = Vec::new();
        for sp in ds.scanpaths.iter().filter(|s| s.image_id == image) {
            for f in sp.fixations.iter().skip(1) {
                cells.push(geometry.cell_of(f)?);
            }
        }
        if !points.is_empty() && !cells.is_empty() {
            targets.push(Target {
                geometry,
                points,
                cells,
            });
        }
    }
    if targets.is_empty() {
        return Err(Error::InsufficientData("no scorable fixations".into()));
    }
    let objective = |x: &[f64]| -> f64 {
        let bw = x[0].exp();
        let mut total = 0.0;
        for t in &targets {
            let Ok(kde) = SeparableKde::new(&t.points, bw, t.geometry) else {
                return f64::NEG_INFINITY;
            };
            let u = 1.0 / t.geometry.cells() as f64;
            let mut sum = 0.0;
            for &cell in &t.cells {
                let mut p = 0.0;
                p += (1.0 - CENTER_BIAS_UNIFORM_WEIGHT) * kde.density_at(cell);
                p += CENTER_BIAS_UNIFORM_WEIGHT * u;
                sum += p.log2() - u.log2();
            }
            total += sum / t.cells.len() as f64;
        }
        total / targets.len() as f64
    };
    let spec = FitSpec::new(
        vec!["ln_bandwidth_px".into()],
        vec![MIN_BANDWIDTH_PX.ln()],
        vec![MAX_BANDWIDTH_PX.ln()],
        vec![30f64.ln()],
        FitSplit::TrainAll,
    )?;
    let fit = fitting::maximize(&spec, objective)?;
    Ok((fit.parameters[0].exp(), fit))
}
