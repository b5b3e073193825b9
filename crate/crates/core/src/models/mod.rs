//! Conditional scanpath models.
//!
//! A model is a small state machine: it is initialized with the first
//! (forced) fixation, updated with every further fixation, and emits a
//! priority map over the next fixation position at any point. Scoring
//! replays a recorded history through the same machine; sampling feeds the
//! model its own draws.

mod any;
mod baseline;
mod jump;
mod point;
mod saccadic_flow;
mod saliency;
mod scenewalk;
mod uniform;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, RngCore};

use crate::data::{Fixation, Scanpath, StimulusMeta};
use crate::error::{Error, Result};
use crate::grid::{Geometry, PriorityMap};

pub use any::{AnyModel, AnyState, ModelKind};
pub use baseline::{CenterBiasModel, GoldStandardModel};
pub use jump::{fit_jump_model, jump_kernel_values, jump_model_map, JumpKernel, JumpModel, JumpModelParams};
pub use point::{fit_sigma_nss, point_to_map, sigma_grid_dva, DEFAULT_POINT_SIGMA_DVA};
pub use saccadic_flow::{
    fit_saccadic_flow, saccadic_flow_log_likelihood, saccadic_flow_map, SaccadicFlowModel, SaccadicFlowParams, Transition,
};
pub use saliency::{normalized_saliency, SaliencyStore, StaticSaliencyModel, SALIENCY_FLOOR};
pub use scenewalk::{fit_scenewalk, scenewalk_log_likelihood, scenewalk_map, scenewalk_update, SceneWalkModel, SceneWalkParams, SceneWalkState};
pub use uniform::UniformModel;

/// Everything a model may know about the trial it is predicting.
#[derive(Debug, Clone, Copy)]
pub struct ModelContext<'a> {
    pub meta: &'a StimulusMeta,
    pub geometry: Geometry,
    pub subject_id: &'a str,
    pub saliency: Option<&'a PriorityMap>,
}

impl<'a> ModelContext<'a> {
    pub fn new(meta: &'a StimulusMeta, downsample: u32) -> Result<Self> {
        Ok(Self {
            meta,
            geometry: Geometry::for_stimulus(meta, downsample)?,
            subject_id: "",
            saliency: None,
        })
    }

    pub fn with_subject(mut self, subject_id: &'a str) -> Self {
        self.subject_id = subject_id;
        self
    }

    pub fn with_saliency(mut self, saliency: Option<&'a PriorityMap>) -> Self {
        self.saliency = saliency;
        self
    }

    pub fn require_saliency(&self) -> Result<&'a PriorityMap> {
        let map = self
            .saliency
            .ok_or_else(|| Error::MissingSaliency(self.meta.image_id.clone()))?;
        if *map.geometry() != self.geometry {
            return Err(Error::GeometryMismatch(format!(
                "saliency map for `{}` is {}x{}, expected {}x{}",
                self.meta.image_id,
                map.width(),
                map.height(),
                self.geometry.width,
                self.geometry.height
            )));
        }
        Ok(map)
    }
}

/// How many of the most recent fixations the next map depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DependencyOrder {
    Fixed(usize),
    Unbounded,
}

pub trait ConditionalModel: Send + Sync {
    type State: Clone + Send;

    fn name(&self) -> String;

    /// Whether emitted maps are probability distributions. Others are only
    /// scored with rank and saliency metrics and sampled winner-take-all.
    fn is_probabilistic(&self) -> bool {
        true
    }

    fn dependency_order(&self) -> DependencyOrder;

    /// Whether the model reads the per-image saliency map.
    fn uses_saliency(&self) -> bool {
        false
    }

    /// Name of an internal saliency map, for reports.
    fn internal_saliency(&self) -> Option<String> {
        None
    }

    fn initialize(&self, ctx: &ModelContext<'_>, first: &Fixation) -> Result<Self::State>;

    fn update_state(
        &self,
        ctx: &ModelContext<'_>,
        state: Self::State,
        fixation: &Fixation,
    ) -> Result<Self::State>;

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, state: &Self::State) -> Result<PriorityMap>;

    /// Draws the next fixation: proportional to the map for probabilistic
    /// models (uniform within the chosen cell), the first argmax cell's
    /// center otherwise.
    fn sample_fixation(
        &self,
        ctx: &ModelContext<'_>,
        map: &PriorityMap,
        rng: &mut dyn RngCore,
    ) -> Result<Fixation> {
        if self.is_probabilistic() {
            sample_from_map(map, ctx.meta, rng)
        } else {
            let (x, y) = map.geometry().cell_center(map.argmax());
            let (x, y) = ctx.meta.clamp(x, y);
            Ok(Fixation::new(x, y))
        }
    }
}

/// Draws a cell proportional to `map`, then a uniform position inside the
/// part of that cell covered by the stimulus. Positions are rounded down to
/// multiples of 1e-6 px so they survive the scanpath file format unchanged.
pub fn sample_from_map(map: &PriorityMap, meta: &StimulusMeta, rng: &mut dyn RngCore) -> Result<Fixation> {
    map.require_probability()?;
    let index = WeightedIndex::new(map.values())
        .map_err(|e| Error::InvalidMap(e.to_string()))?
        .sample(rng);
    let g = map.geometry();
    let k = g.downsample as f64;
    let mut within = |cell: usize, extent: u32| {
        let lo = cell as f64 * k;
        let hi = ((cell + 1) as f64 * k).min(extent as f64);
        let v = ((lo + rng.gen::<f64>() * (hi - lo)) * 1e6).floor() / 1e6;
        if v >= lo && v < hi {
            v
        } else {
            lo
        }
    };
    let x = within(index % g.width, meta.width_px);
    let y = within(index / g.width, meta.height_px);
    Ok(Fixation::new(x, y))
}

pub(crate) fn check_inside(ctx: &ModelContext<'_>, f: &Fixation) -> Result<()> {
    if ctx.meta.contains(f.x, f.y) {
        Ok(())
    } else {
        Err(Error::OutOfBounds {
            x: f.x,
            y: f.y,
            width: ctx.meta.width_px,
            height: ctx.meta.height_px,
        })
    }
}

/// State after replaying `history` (which starts with the forced fixation).
pub fn replay<M: ConditionalModel + ?Sized>(
    model: &M,
    ctx: &ModelContext<'_>,
    history: &[Fixation],
) -> Result<M::State> {
    let (first, rest) = history
        .split_first()
        .ok_or_else(|| Error::EmptyInput("history needs the initial fixation".into()))?;
    check_inside(ctx, first)?;
    let mut state = model.initialize(ctx, first)?;
    for f in rest {
        check_inside(ctx, f)?;
        state = model.update_state(ctx, state, f)?;
    }
    Ok(state)
}

/// Map over the next fixation given the whole history so far.
pub fn conditional_prediction<M: ConditionalModel + ?Sized>(
    model: &M,
    ctx: &ModelContext<'_>,
    history: &[Fixation],
) -> Result<PriorityMap> {
    let state = replay(model, ctx, history)?;
    model.compute_priority_map(ctx, &state)
}

/// Generates a scanpath of `n_fixations` starting at the stimulus center.
pub fn sample_scanpath<M: ConditionalModel + ?Sized>(
    model: &M,
    ctx: &ModelContext<'_>,
    n_fixations: usize,
    rng: &mut dyn RngCore,
) -> Result<Scanpath> {
    if n_fixations == 0 {
        return Err(Error::InvalidParameter("n_fixations must be >= 1".into()));
    }
    let (cx, cy) = ctx.meta.center();
    let first = Fixation::new(cx, cy);
    let mut fixations = vec![first];
    let mut state = model.initialize(ctx, &first)?;
    while fixations.len() < n_fixations {
        let map = model.compute_priority_map(ctx, &state)?;
        let next = model.sample_fixation(ctx, &map, rng)?;
        state = model.update_state(ctx, state, &next)?;
        fixations.push(next);
    }
    Ok(Scanpath {
        image_id: ctx.meta.image_id.clone(),
        subject_id: ctx.subject_id.to_string(),
        fixations,
        forced_initial: true,
    })
}

/// `sigma_px`-wide Gaussian over one axis, evaluated at cell centers and
/// truncated like the density estimates.
pub(crate) fn axis_gaussian(center: f64, sigma_px: f64, cells: usize, cell_size: f64) -> Vec<f64> {
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    let radius = crate::density::KERNEL_RADIUS_SIGMAS * sigma_px;
    (0..cells)
        .map(|i| {
            let d = (i as f64 + 0.5) * cell_size - center;
            if d.abs() <= radius {
                (-d * d * inv).exp()
            } else {
                0.0
            }
        })
        .collect()
}
