//! Saliency-modulated jump model: `p(y) ∝ s(y)^e · k(|y - x| / scale)` with
//! a Cauchy or Gaussian radial kernel `k` around the current fixation `x`.
//! With `e = 0` or no saliency this is a pure (Lévy-flight style) jump
//! process.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::saliency::{normalized_saliency, SaliencyStore};
use super::{ConditionalModel, DependencyOrder, ModelContext};
use crate::data::{Dataset, Fixation};
use crate::error::{Error, Result};
use crate::fitting::{self, FitResult, FitSpec, FitSplit};
use crate::grid::{Geometry, PriorityMap};
use crate::metrics::PROBABILITY_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKernel {
    /// Bivariate Cauchy, `(1 + u²)^(-3/2)`.
    Cauchy,
    Gaussian,
}

impl JumpKernel {
    #[inline]
    fn value(self, u2: f64) -> f64 {
        match self {
            JumpKernel::Cauchy => {
                let t = 1.0 + u2;
                1.0 / (t * t.sqrt())
            }
            JumpKernel::Gaussian => (-0.5 * u2).exp(),
        }
    }

    #[inline]
    fn log_value(self, u2: f64) -> f64 {
        match self {
            JumpKernel::Cauchy => -1.5 * u2.ln_1p(),
            JumpKernel::Gaussian => -0.5 * u2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpModelParams {
    pub kernel: JumpKernel,
    pub scale_px: f64,
    /// Inverse temperature applied to the saliency map.
    #[serde(default)]
    pub saliency_exponent: f64,
    /// Read a per-image saliency map; otherwise saliency is constant.
    #[serde(default)]
    pub use_saliency: bool,
}

impl JumpModelParams {
    pub fn cauchy(scale_px: f64) -> Self {
        Self {
            kernel: JumpKernel::Cauchy,
            scale_px,
            saliency_exponent: 0.0,
            use_saliency: false,
        }
    }

    pub fn gaussian(scale_px: f64) -> Self {
        Self {
            kernel: JumpKernel::Gaussian,
            ..Self::cauchy(scale_px)
        }
    }

    pub fn with_saliency(mut self, exponent: f64) -> Self {
        self.use_saliency = true;
        self.saliency_exponent = exponent;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_px.is_finite() && self.scale_px > 0.0) {
            return Err(Error::InvalidParameter(format!("scale_px {}", self.scale_px)));
        }
        if !(self.saliency_exponent.is_finite() && self.saliency_exponent >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "saliency_exponent {}",
                self.saliency_exponent
            )));
        }
        Ok(())
    }

    fn saliency_active(&self) -> bool {
        self.use_saliency && self.saliency_exponent > 0.0
    }
}

/// Unnormalized kernel values at every cell center.
pub fn jump_kernel_values(params: &JumpModelParams, current: &Fixation, geometry: Geometry) -> Vec<f64> {
    let inv = 1.0 / (params.scale_px * params.scale_px);
    (0..geometry.cells())
        .map(|c| {
            let (x, y) = geometry.cell_center(c);
            let (dx, dy) = (x - current.x, y - current.y);
            params.kernel.value((dx * dx + dy * dy) * inv)
        })
        .collect()
}

pub fn jump_model_map(
    params: &JumpModelParams,
    current: &Fixation,
    geometry: Geometry,
    saliency: Option<&PriorityMap>,
) -> Result<PriorityMap> {
    params.validate()?;
    geometry.cell_of(current)?;
    let log_saliency = match (params.saliency_active(), saliency) {
        (false, _) => None,
        (true, None) => {
            return Err(Error::MissingSaliency(
                "jump model with a saliency exponent needs a saliency map".into(),
            ))
        }
        (true, Some(map)) => {
            if *map.geometry() != geometry {
                return Err(Error::GeometryMismatch("saliency grid differs".into()));
            }
            Some(normalized_saliency(map)?)
        }
    };
    let inv = 1.0 / (params.scale_px * params.scale_px);
    let log_weights = (0..geometry.cells())
        .map(|c| {
            let (x, y) = geometry.cell_center(c);
            let (dx, dy) = (x - current.x, y - current.y);
            let mut lw = params.kernel.log_value((dx * dx + dy * dy) * inv);
            if let Some(s) = &log_saliency {
                lw += params.saliency_exponent * s[c].ln();
            }
            lw
        })
        .collect();
    PriorityMap::from_log_weights(geometry, log_weights)
}

/// Conditional model around [`jump_model_map`]; the state is the current
/// fixation.
#[derive(Debug, Clone)]
pub struct JumpModel {
    params: JumpModelParams,
}

impl JumpModel {
    pub fn new(params: JumpModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &JumpModelParams {
        &self.params
    }
}

impl ConditionalModel for JumpModel {
    type State = Fixation;

    fn name(&self) -> String {
        match self.params.kernel {
            JumpKernel::Cauchy => "jump_cauchy".into(),
            JumpKernel::Gaussian => "jump_gaussian".into(),
        }
    }

    fn dependency_order(&self) -> DependencyOrder {
        DependencyOrder::Fixed(1)
    }

    fn uses_saliency(&self) -> bool {
        self.params.saliency_active()
    }

    fn initialize(&self, _ctx: &ModelContext<'_>, first: &Fixation) -> Result<Fixation> {
        Ok(*first)
    }

    fn update_state(&self, _ctx: &ModelContext<'_>, _state: Fixation, fixation: &Fixation) -> Result<Fixation> {
        Ok(*fixation)
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, state: &Fixation) -> Result<PriorityMap> {
        let saliency = if self.params.saliency_active() {
            Some(ctx.require_saliency()?)
        } else {
            None
        };
        jump_model_map(&self.params, state, ctx.geometry, saliency)
    }
}

struct JumpTransition {
    image: usize,
    current: Fixation,
    target: usize,
}

/// Maximum-likelihood kernel scale (and saliency exponent when `saliency` is
/// given) over every saccade of the dataset, including the one leaving the
/// forced initial fixation.
pub fn fit_jump_model(
    ds: &Dataset,
    kernel: JumpKernel,
    saliency: Option<&SaliencyStore>,
    downsample: u32,
    split: FitSplit,
) -> Result<(JumpModelParams, FitResult)> {
    let images = ds.image_ids();
    let mut geometries = Vec::with_capacity(images.len());
    let mut log_saliency: Vec<Option<Vec<f64>>> = Vec::with_capacity(images.len());
    for image in &images {
        let g = Geometry::for_stimulus(ds.stimulus(image)?, downsample)?;
        geometries.push(g);
        log_saliency.push(match saliency {
            None => None,
            Some(store) => {
                let map = store
                    .get(image)
                    .ok_or_else(|| Error::MissingSaliency(image.to_string()))?;
                if *map.geometry() != g {
                    return Err(Error::GeometryMismatch(format!("saliency grid of `{image}`")));
                }
                Some(normalized_saliency(map)?.into_iter().map(f64::ln).collect())
            }
        });
    }
    let mut transitions = Vec::new();
    for sp in &ds.scanpaths {
        let image = images.binary_search(&sp.image_id.as_str()).expect("image listed");
        for pair in sp.fixations.windows(2) {
            transitions.push(JumpTransition {
                image,
                current: pair[0],
                target: geometries[image].cell_of(&pair[1])?,
            });
        }
    }
    if transitions.is_empty() {
        return Err(Error::InsufficientData("no saccades to fit".into()));
    }
    let max_extent = geometries
        .iter()
        .map(|g| (g.width.max(g.height) * g.downsample as usize) as f64)
        .fold(1.0, f64::max);

    let objective = |x: &[f64]| -> f64 {
        let scale = x[0].exp();
        let exponent = x.get(1).copied().unwrap_or(0.0);
        let inv = 1.0 / (scale * scale);
        let lls: Vec<f64> = transitions
            .par_iter()
            .map(|t| {
                let g = geometries[t.image];
                let ls = log_saliency[t.image].as_deref();
                let weight = |c: usize| {
                    let (cx, cy) = g.cell_center(c);
                    let (dx, dy) = (cx - t.current.x, cy - t.current.y);
                    let k = kernel.value((dx * dx + dy * dy) * inv);
                    match ls {
                        Some(ls) if exponent > 0.0 => k * (exponent * ls[c]).exp(),
                        _ => k,
                    }
                };
                let total: f64 = (0..g.cells()).map(weight).sum();
                let p = (weight(t.target) / total).max(PROBABILITY_FLOOR);
                p.log2() + (g.cells() as f64).log2()
            })
            .collect();
        lls.iter().sum::<f64>() / lls.len() as f64
    };

    let mut names = vec!["ln_scale_px".to_string()];
    let mut lower = vec![0.5f64.ln()];
    let mut upper = vec![(2.0 * max_extent).ln()];
    let mut initial = vec![(0.1 * max_extent).max(1.0).ln()];
    if saliency.is_some() {
        names.push("saliency_exponent".into());
        lower.push(0.0);
        upper.push(10.0);
        initial.push(1.0);
    }
    let spec = FitSpec::new(names, lower, upper, initial, split)?;
    let fit = fitting::maximize(&spec, objective)?;
    let mut params = JumpModelParams {
        kernel,
        scale_px: fit.parameters[0].exp(),
        saliency_exponent: 0.0,
        use_saliency: false,
    };
    if saliency.is_some() {
        params = params.with_saliency(fit.parameters[1]);
    }
    Ok((params, fit))
}
