//! Image-independent Gaussian jump whose mean offset and log-variances are
//! quadratic polynomials of the current position.
//!
//! Positions are normalized to `u = x / width`, `v = y / height`; the
//! features are `[1, u, v, u², uv, v²]`. Mean offsets are in units of the
//! image width (x) and height (y), log-variances in the same normalized
//! units, and the correlation is a constant.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::{ConditionalModel, DependencyOrder, ModelContext};
use crate::data::{Dataset, Fixation, StimulusMeta};
use crate::error::{Error, Result};
use crate::grid::{Geometry, PriorityMap};
use crate::metrics;

pub const FEATURES: usize = 6;

/// `E[ln χ²₁]`, the offset between a log squared residual and its log
/// variance.
const MEAN_LOG_CHI2_1: f64 = -1.270_362_845_461_478;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaccadicFlowParams {
    pub mean_x: [f64; FEATURES],
    pub mean_y: [f64; FEATURES],
    pub log_var_x: [f64; FEATURES],
    pub log_var_y: [f64; FEATURES],
    pub rho: f64,
}

fn features(u: f64, v: f64) -> [f64; FEATURES] {
    [1.0, u, v, u * u, u * v, v * v]
}

fn dot(a: &[f64; FEATURES], b: &[f64; FEATURES]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jump distribution from one position, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianJump {
    pub mean_x: f64,
    pub mean_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub rho: f64,
}

impl SaccadicFlowParams {
    /// Position-independent jump: constant offset and spread.
    pub fn isotropic(offset: (f64, f64), sigma: f64) -> Self {
        let lv = (sigma * sigma).ln();
        let mut p = Self {
            mean_x: [0.0; FEATURES],
            mean_y: [0.0; FEATURES],
            log_var_x: [0.0; FEATURES],
            log_var_y: [0.0; FEATURES],
            rho: 0.0,
        };
        p.mean_x[0] = offset.0;
        p.mean_y[0] = offset.1;
        p.log_var_x[0] = lv;
        p.log_var_y[0] = lv;
        p
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .mean_x
            .iter()
            .chain(&self.mean_y)
            .chain(&self.log_var_x)
            .chain(&self.log_var_y)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "correlation {} makes the covariance singular",
                self.rho
            )));
        }
        Ok(())
    }

    pub fn jump_from(&self, current: &Fixation, meta: &StimulusMeta) -> Result<GaussianJump> {
        let (w, h) = (meta.width_px as f64, meta.height_px as f64);
        let phi = features(current.x / w, current.y / h);
        let sx = dot(&self.log_var_x, &phi).exp().sqrt() * w;
        let sy = dot(&self.log_var_y, &phi).exp().sqrt() * h;
        if !(sx.is_finite() && sy.is_finite() && sx > 0.0 && sy > 0.0 && self.rho.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "covariance at ({}, {}) is not positive definite (sigma {sx}, {sy}, rho {})",
                current.x, current.y, self.rho
            )));
        }
        Ok(GaussianJump {
            mean_x: current.x + dot(&self.mean_x, &phi) * w,
            mean_y: current.y + dot(&self.mean_y, &phi) * h,
            sigma_x: sx,
            sigma_y: sy,
            rho: self.rho,
        })
    }

    fn names() -> Vec<String> {
        let mut names = Vec::new();
        for group in ["mean_x", "mean_y", "log_var_x", "log_var_y"] {
            for f in ["1", "u", "v", "uu", "uv", "vv"] {
                names.push(format!("{group}.{f}"));
            }
        }
        names.push("rho".into());
        names
    }

    pub fn flatten(&self) -> (Vec<String>, Vec<f64>) {
        let values = self
            .mean_x
            .iter()
            .chain(&self.mean_y)
            .chain(&self.log_var_x)
            .chain(&self.log_var_y)
            .copied()
            .chain(std::iter::once(self.rho))
            .collect();
        (Self::names(), values)
    }
}

/// Discretized bivariate Gaussian jump, truncated to the image and
/// renormalized.
pub fn saccadic_flow_map(
    params: &SaccadicFlowParams,
    current: &Fixation,
    meta: &StimulusMeta,
    geometry: Geometry,
) -> Result<PriorityMap> {
    params.validate()?;
    geometry.cell_of(current)?;
    let j = params.jump_from(current, meta)?;
    let scale = -0.5 / (1.0 - j.rho * j.rho);
    let log_weights = (0..geometry.cells())
        .map(|c| {
            let (x, y) = geometry.cell_center(c);
            let zx = (x - j.mean_x) / j.sigma_x;
            let zy = (y - j.mean_y) / j.sigma_y;
            scale * (zx * zx - 2.0 * j.rho * zx * zy + zy * zy)
        })
        .collect();
    PriorityMap::from_log_weights(geometry, log_weights)
}

#[derive(Debug, Clone)]
pub struct SaccadicFlowModel {
    params: SaccadicFlowParams,
}

impl SaccadicFlowModel {
    pub fn new(params: SaccadicFlowParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &SaccadicFlowParams {
        &self.params
    }
}

impl ConditionalModel for SaccadicFlowModel {
    type State = Fixation;

    fn name(&self) -> String {
        "saccadic_flow".into()
    }

    fn dependency_order(&self) -> DependencyOrder {
        DependencyOrder::Fixed(1)
    }

    fn initialize(&self, _ctx: &ModelContext<'_>, first: &Fixation) -> Result<Fixation> {
        Ok(*first)
    }

    fn update_state(&self, _ctx: &ModelContext<'_>, _state: Fixation, fixation: &Fixation) -> Result<Fixation> {
        Ok(*fixation)
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, state: &Fixation) -> Result<PriorityMap> {
        saccadic_flow_map(&self.params, state, ctx.meta, ctx.geometry)
    }
}

/// One saccade with the size of the stimulus it was made on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: Fixation,
    pub to: Fixation,
    pub width_px: f64,
    pub height_px: f64,
}

impl Transition {
    /// Every consecutive fixation pair of every scanpath.
    pub fn from_dataset(ds: &Dataset) -> Result<Vec<Transition>> {
        let mut out = Vec::new();
        for sp in &ds.scanpaths {
            let meta = ds.stimulus(&sp.image_id)?;
            for pair in sp.fixations.windows(2) {
                out.push(Transition {
                    from: pair[0],
                    to: pair[1],
                    width_px: meta.width_px as f64,
                    height_px: meta.height_px as f64,
                });
            }
        }
        Ok(out)
    }

    fn features(&self) -> [f64; FEATURES] {
        features(self.from.x / self.width_px, self.from.y / self.height_px)
    }
}

/// Least squares through the normal equations.
fn least_squares(rows: &[[f64; FEATURES]], targets: &[f64]) -> Result<[f64; FEATURES]> {
    let mut gram = Matrix6::<f64>::zeros();
    let mut rhs = Vector6::<f64>::zeros();
    for (phi, &t) in rows.iter().zip(targets) {
        let phi = Vector6::from_column_slice(phi);
        gram += phi * phi.transpose();
        rhs += phi * t;
    }
    let beta = gram.cholesky().map(|c| c.solve(&rhs)).ok_or_else(|| {
        Error::InsufficientData("saccade start positions do not span the polynomial features".into())
    })?;
    Ok(beta.into())
}

/// Regression estimate: least-squares mean offsets, log-variances from a
/// regression of log squared residuals (bias-corrected for a Gaussian), and
/// the correlation of the standardized residuals. Truncation at the image
/// border is not modelled by the estimator.
pub fn fit_saccadic_flow(transitions: &[Transition]) -> Result<SaccadicFlowParams> {
    if transitions.len() < 4 * FEATURES {
        return Err(Error::InsufficientData(format!(
            "{} saccades; need at least {}",
            transitions.len(),
            4 * FEATURES
        )));
    }
    let rows: Vec<[f64; FEATURES]> = transitions.iter().map(Transition::features).collect();
    let dx: Vec<f64> = transitions.iter().map(|t| (t.to.x - t.from.x) / t.width_px).collect();
    let dy: Vec<f64> = transitions.iter().map(|t| (t.to.y - t.from.y) / t.height_px).collect();
    let mean_x = least_squares(&rows, &dx)?;
    let mean_y = least_squares(&rows, &dy)?;
    let rx: Vec<f64> = rows.iter().zip(&dx).map(|(p, d)| d - dot(&mean_x, p)).collect();
    let ry: Vec<f64> = rows.iter().zip(&dy).map(|(p, d)| d - dot(&mean_y, p)).collect();
    let log_sq = |r: &[f64]| -> Vec<f64> {
        r.iter().map(|v| (v * v).max(1e-18).ln() - MEAN_LOG_CHI2_1).collect()
    };
    let log_var_x = least_squares(&rows, &log_sq(&rx))?;
    let log_var_y = least_squares(&rows, &log_sq(&ry))?;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (k, p) in rows.iter().enumerate() {
        let zx = rx[k] / dot(&log_var_x, p).exp().sqrt();
        let zy = ry[k] / dot(&log_var_y, p).exp().sqrt();
        sxy += zx * zy;
        sxx += zx * zx;
        syy += zy * zy;
    }
    let rho = (sxy / (sxx * syy).sqrt()).clamp(-0.99, 0.99);
    let params = SaccadicFlowParams {
        mean_x,
        mean_y,
        log_var_x,
        log_var_y,
        rho: if rho.is_finite() { rho } else { 0.0 },
    };
    params.validate()?;
    Ok(params)
}

/// Mean log-likelihood (bits per saccade, relative to uniform) of the
/// dataset's saccades.
pub fn saccadic_flow_log_likelihood(
    params: &SaccadicFlowParams,
    ds: &Dataset,
    downsample: u32,
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for sp in &ds.scanpaths {
        let meta = ds.stimulus(&sp.image_id)?;
        let g = Geometry::for_stimulus(meta, downsample)?;
        for pair in sp.fixations.windows(2) {
            let map = saccadic_flow_map(params, &pair[0], meta, g)?;
            total += metrics::log_likelihood(&map, &pair[1])?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InsufficientData("no saccades".into()));
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{sample_from_map, ConditionalModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_coefficients_give_a_position_independent_jump() {
        let meta = StimulusMeta::new("a", 100, 80, 1.0).unwrap();
        let p = SaccadicFlowParams::isotropic((0.1, -0.05), 0.08);
        let a = p.jump_from(&Fixation::new(20.0, 30.0), &meta).unwrap();
        let b = p.jump_from(&Fixation::new(70.0, 10.0), &meta).unwrap();
        assert!(((a.mean_x - 20.0) - (b.mean_x - 70.0)).abs() < 1e-12);
        assert!(((a.mean_y - 30.0) - (b.mean_y - 10.0)).abs() < 1e-12);
        assert_eq!((a.sigma_x, a.sigma_y), (b.sigma_x, b.sigma_y));
        assert!((a.sigma_x - 8.0).abs() < 1e-9 && (a.sigma_y - 6.4).abs() < 1e-9);
    }

    #[test]
    fn mirror_symmetric_coefficients_give_a_symmetric_map() {
        let meta = StimulusMeta::new("a", 60, 40, 1.0).unwrap();
        let g = Geometry::for_stimulus(&meta, 1).unwrap();
        let mut p = SaccadicFlowParams::isotropic((0.0, 0.1), 0.2);
        // Offset x proportional to (u - 1/2) and variance even in u about 1/2.
        p.mean_x = [0.3, -0.6, 0.0, 0.0, 0.0, 0.0];
        p.log_var_x = [-3.0, 1.0, 0.0, -1.0, 0.0, 0.0];
        let map = saccadic_flow_map(&p, &Fixation::new(30.0, 20.0), &meta, g).unwrap();
        for j in 0..g.height {
            for i in 0..g.width / 2 {
                let a = map.values()[j * g.width + i];
                let b = map.values()[j * g.width + g.width - 1 - i];
                assert!((a - b).abs() <= 1e-15 * a.max(b).max(1e-300), "{a} {b}");
            }
        }
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let meta = StimulusMeta::new("a", 60, 40, 1.0).unwrap();
        let g = Geometry::for_stimulus(&meta, 1).unwrap();
        let mut p = SaccadicFlowParams::isotropic((0.0, 0.0), 0.1);
        p.rho = 1.0;
        assert!(saccadic_flow_map(&p, &Fixation::new(3.0, 3.0), &meta, g).is_err());
        let mut p = SaccadicFlowParams::isotropic((0.0, 0.0), 0.1);
        p.log_var_x[0] = -2000.0;
        assert!(SaccadicFlowModel::new(p).is_ok());
        assert!(saccadic_flow_map(&p, &Fixation::new(3.0, 3.0), &meta, g).is_err());
    }

    #[test]
    fn regression_recovers_untruncated_coefficients() {
        // Draw directly from the continuous Gaussian so the estimator's
        // assumptions hold exactly.
        let truth = SaccadicFlowParams {
            mean_x: [0.3, -0.6, 0.05, 0.1, -0.1, 0.05],
            mean_y: [0.25, 0.05, -0.5, -0.05, 0.1, 0.05],
            log_var_x: [-5.0, 0.5, 0.0, 0.0, 0.0, 0.0],
            log_var_y: [-5.5, 0.0, 0.4, 0.0, 0.0, 0.0],
            rho: 0.3,
        };
        let meta = StimulusMeta::new("a", 400, 300, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(rand_distr::StandardNormal) };
        let mut transitions = Vec::new();
        for _ in 0..20_000 {
            let from = Fixation::new(rng.gen::<f64>() * 400.0, rng.gen::<f64>() * 300.0);
            let j = truth.jump_from(&from, &meta).unwrap();
            let (z1, z2) = (gauss(&mut rng), gauss(&mut rng));
            let x = j.mean_x + j.sigma_x * z1;
            let y = j.mean_y + j.sigma_y * (j.rho * z1 + (1.0 - j.rho * j.rho).sqrt() * z2);
            transitions.push(Transition {
                from,
                to: Fixation::new(x, y),
                width_px: 400.0,
                height_px: 300.0,
            });
        }
        let fit = fit_saccadic_flow(&transitions).unwrap();
        for (est, tru) in fit.mean_x.iter().zip(&truth.mean_x).chain(fit.mean_y.iter().zip(&truth.mean_y)) {
            assert!((est - tru).abs() < 0.02, "{est} vs {tru}");
        }
        assert!((fit.log_var_x[0] - truth.log_var_x[0]).abs() < 0.15);
        assert!((fit.rho - truth.rho).abs() < 0.05, "{}", fit.rho);
    }

    #[test]
    fn sampled_jumps_land_inside_the_image() {
        let meta = StimulusMeta::new("a", 50, 40, 1.0).unwrap();
        let ctx = ModelContext::new(&meta, 1).unwrap();
        let model = SaccadicFlowModel::new(SaccadicFlowParams::isotropic((0.4, 0.0), 0.2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let map = model.compute_priority_map(&ctx, &Fixation::new(45.0, 20.0)).unwrap();
        for _ in 0..500 {
            let f = sample_from_map(&map, &meta, &mut rng).unwrap();
            assert!(meta.contains(f.x, f.y));
        }
    }
}
