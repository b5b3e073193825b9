//! Gaussian encoding of models that predict a single next location.

use crate::data::{Fixation, StimulusMeta};
use crate::error::{Error, Result};
use crate::grid::{Geometry, PriorityMap};
use crate::metrics;

pub const DEFAULT_POINT_SIGMA_DVA: f64 = 9.0;

const SIGMA_GRID_MIN_DVA: f64 = 0.5;
const SIGMA_GRID_MAX_DVA: f64 = 20.0;
const SIGMA_GRID_POINTS: usize = 25;

/// Isotropic Gaussian of `sigma_dva` at `location`, truncated to the image
/// and renormalized. Not cut off at a few sigma: values never increase with
/// distance from `location`.
pub fn point_to_map(
    location: (f64, f64),
    sigma_dva: f64,
    meta: &StimulusMeta,
    downsample: u32,
) -> Result<PriorityMap> {
    if !(sigma_dva.is_finite() && sigma_dva > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma_dva} dva")));
    }
    let geometry = Geometry::for_stimulus(meta, downsample)?;
    let inv = 1.0 / (2.0 * (sigma_dva * meta.px_per_dva).powi(2));
    let log_weights = (0..geometry.cells())
        .map(|c| {
            let (x, y) = geometry.cell_center(c);
            let (dx, dy) = (x - location.0, y - location.1);
            -(dx * dx + dy * dy) * inv
        })
        .collect();
    PriorityMap::from_log_weights(geometry, log_weights)
}

/// Logarithmically spaced candidate widths, 0.5 to 20 dva.
pub fn sigma_grid_dva() -> Vec<f64> {
    let (lo, hi) = (SIGMA_GRID_MIN_DVA.ln(), SIGMA_GRID_MAX_DVA.ln());
    let step = (hi - lo) / (SIGMA_GRID_POINTS - 1) as f64;
    (0..SIGMA_GRID_POINTS)
        .map(|k| (lo + step * k as f64).exp())
        .collect()
}

/// Grid width with the highest mean NSS of `truths` under maps centered on
/// the paired `points`. Earlier (narrower) widths win ties.
pub fn fit_sigma_nss(
    points: &[(f64, f64)],
    truths: &[Fixation],
    meta: &StimulusMeta,
    downsample: u32,
) -> Result<f64> {
    if points.is_empty() || points.len() != truths.len() {
        return Err(Error::EmptyInput(
            "need one or more (prediction, fixation) pairs of equal count".into(),
        ));
    }
    let mut best = (f64::NEG_INFINITY, SIGMA_GRID_MIN_DVA);
    for sigma in sigma_grid_dva() {
        let mut total = 0.0;
        for (&p, t) in points.iter().zip(truths) {
            total += metrics::nss(&point_to_map(p, sigma, meta, downsample)?, t)?;
        }
        let mean = total / points.len() as f64;
        if mean > best.0 {
            best = (mean, sigma);
        }
    }
    Ok(best.1)
}
