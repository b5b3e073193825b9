//! Maximum-likelihood fitting: a bounded derivative-free maximizer plus the
//! dataset splits used to assemble objectives.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Scanpath};
use crate::error::{Error, Result};

pub const MAX_CYCLES: usize = 50;
pub const RELATIVE_TOLERANCE: f64 = 1e-6;
const GOLDEN_SECTION_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitSplit {
    Loso,
    TrainAll,
    Subset { image_ids: Vec<String> },
}

/// Box-constrained problem description. The objective itself is passed to
/// [`maximize`] separately.
#[derive(Debug, Clone)]
pub struct FitSpec {
    pub names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub initial: Vec<f64>,
    pub split: FitSplit,
    pub seed: Option<u64>,
}

impl FitSpec {
    pub fn new(
        names: Vec<String>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        initial: Vec<f64>,
        split: FitSplit,
    ) -> Result<Self> {
        let n = names.len();
        if n == 0 || lower.len() != n || upper.len() != n || initial.len() != n {
            return Err(Error::InvalidParameter(
                "names, bounds and initial values must have one entry per parameter".into(),
            ));
        }
        for k in 0..n {
            let (lo, hi, x0) = (lower[k], upper[k], initial[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidParameter(format!(
                    "{}: bounds [{lo}, {hi}] must be finite with lower < upper",
                    names[k]
                )));
            }
            if !(lo..=hi).contains(&x0) {
                return Err(Error::InvalidParameter(format!(
                    "{}: initial value {x0} outside [{lo}, {hi}]",
                    names[k]
                )));
            }
        }
        Ok(Self {
            names,
            lower,
            upper,
            initial,
            split,
            seed: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameter_names: Vec<String>,
    pub parameters: Vec<f64>,
    pub objective_bits_per_fix: f64,
    pub initial_objective: f64,
    pub split: FitSplit,
    pub seed: Option<u64>,
    pub iterations: usize,
    pub evaluations: usize,
}

impl FitResult {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Golden-section search for the maximum of a unimodal `f` on `[a, b]`.
fn golden_section_max(f: &mut impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let tol = GOLDEN_SECTION_TOLERANCE * (b - a);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Cyclic coordinate ascent; each coordinate is line-searched over its whole
/// box with golden sections, bound endpoints included as candidates. Stops
/// once a cycle improves the objective by less than [`RELATIVE_TOLERANCE`]
/// (relative) or after [`MAX_CYCLES`] cycles. Non-finite objective values
/// count as worse than any finite one.
pub fn maximize(spec: &FitSpec, mut objective: impl FnMut(&[f64]) -> f64) -> Result<FitResult> {
    let mut x = spec.initial.clone();
    let mut evaluations = 1;
    let mut fx = objective(&x);
    if !fx.is_finite() {
        return Err(Error::NonFiniteObjective(fx));
    }
    let initial_objective = fx;
    let sanitize = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut iterations = 0;
    for _ in 0..MAX_CYCLES {
        iterations += 1;
        let cycle_start = fx;
        for k in 0..x.len() {
            let (lo, hi) = (spec.lower[k], spec.upper[k]);
            let mut probe = x.clone();
            let mut eval = |t: f64| {
                probe[k] = t;
                evaluations += 1;
                sanitize(objective(&probe))
            };
            let (t_best, f_best) = golden_section_max(&mut eval, lo, hi);
            let f_lo = eval(lo);
            let f_hi = eval(hi);
            for (t, ft) in [(t_best, f_best), (lo, f_lo), (hi, f_hi)] {
                if ft > fx {
                    fx = ft;
                    x[k] = t;
                }
            }
        }
        let improvement = fx - cycle_start;
        if improvement <= RELATIVE_TOLERANCE * cycle_start.abs().max(1e-12) {
            break;
        }
    }
    Ok(FitResult {
        parameter_names: spec.names.clone(),
        parameters: x,
        objective_bits_per_fix: fx,
        initial_objective,
        split: spec.split.clone(),
        seed: spec.seed,
        iterations,
        evaluations,
    })
}

/// A subset of a dataset's scanpaths, by index.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    pub dataset: &'a Dataset,
    pub indices: Vec<usize>,
}

impl<'a> DatasetView<'a> {
    pub fn scanpaths(&self) -> impl Iterator<Item = &'a Scanpath> + '_ {
        self.indices.iter().map(|&i| &self.dataset.scanpaths[i])
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn image_ids(&self) -> Vec<&'a str> {
        let ids: BTreeSet<&str> = self.scanpaths().map(|s| s.image_id.as_str()).collect();
        ids.into_iter().collect()
    }

    /// Owned dataset holding only the selected scanpaths.
    pub fn to_dataset(&self) -> Dataset {
        let scanpaths: Vec<Scanpath> = self.scanpaths().cloned().collect();
        let used: BTreeSet<&str> = scanpaths.iter().map(|s| s.image_id.as_str()).collect();
        Dataset {
            name: self.dataset.name.clone(),
            stimuli: self
                .dataset
                .stimuli
                .iter()
                .filter(|(k, _)| used.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            scanpaths,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LosoSplit<'a> {
    pub subject: String,
    pub training: DatasetView<'a>,
    pub held_out: Vec<usize>,
}

/// One split per subject; the training view drops every scanpath of the
/// held-out subject.
pub fn loso_splits(ds: &Dataset) -> Result<Vec<LosoSplit<'_>>> {
    let subjects = ds.subject_ids();
    if subjects.len() < 2 {
        return Err(Error::InsufficientData(
            "leave-one-subject-out needs at least two subjects".into(),
        ));
    }
    Ok(subjects
        .into_iter()
        .map(|subject| {
            let (held_out, training): (Vec<usize>, Vec<usize>) =
                (0..ds.scanpaths.len()).partition(|&i| ds.scanpaths[i].subject_id == subject);
            LosoSplit {
                subject: subject.to_string(),
                training: DatasetView {
                    dataset: ds,
                    indices: training,
                },
                held_out,
            }
        })
        .collect())
}

/// Seeded uniform sample of `n_images` images with all of their scanpaths.
pub fn subset_sample(ds: &Dataset, n_images: usize, seed: u64) -> Result<DatasetView<'_>> {
    let images = ds.image_ids();
    if n_images > images.len() {
        return Err(Error::InvalidParameter(format!(
            "requested {n_images} images but only {} are available",
            images.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: BTreeSet<&str> = rand::seq::index::sample(&mut rng, images.len(), n_images)
        .into_iter()
        .map(|i| images[i])
        .collect();
    let indices = (0..ds.scanpaths.len())
        .filter(|&i| chosen.contains(ds.scanpaths[i].image_id.as_str()))
        .collect();
    Ok(DatasetView {
        dataset: ds,
        indices,
    })
}
