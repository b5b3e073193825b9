use std::sync::Arc;

use super::{ConditionalModel, DependencyOrder, ModelContext};
use crate::data::{Dataset, Fixation};
use crate::density::{gold_standard_predict, FittedBaseline, KdeParams};
use crate::error::{Error, Result};
use crate::grid::PriorityMap;

/// Center bias (optionally fixation-number dependent) as a conditional model.
/// The state is the index of the fixation about to be predicted.
#[derive(Debug, Clone)]
pub struct CenterBiasModel {
    baseline: Arc<FittedBaseline>,
}

impl CenterBiasModel {
    pub fn new(baseline: Arc<FittedBaseline>) -> Self {
        Self { baseline }
    }

    pub fn baseline(&self) -> &FittedBaseline {
        &self.baseline
    }
}

impl ConditionalModel for CenterBiasModel {
    type State = usize;

    fn name(&self) -> String {
        if self.baseline.intervals().len() > 1 {
            "fixnum_centerbias".into()
        } else {
            "centerbias".into()
        }
    }

    fn dependency_order(&self) -> DependencyOrder {
        if self.baseline.intervals().len() > 1 {
            DependencyOrder::Unbounded
        } else {
            DependencyOrder::Fixed(0)
        }
    }

    fn initialize(&self, _ctx: &ModelContext<'_>, _first: &Fixation) -> Result<usize> {
        Ok(1)
    }

    fn update_state(&self, _ctx: &ModelContext<'_>, state: usize, _fixation: &Fixation) -> Result<usize> {
        Ok(state + 1)
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, state: &usize) -> Result<PriorityMap> {
        let map = self.baseline.predict(&ctx.meta.image_id, *state)?;
        if *map.geometry() != ctx.geometry {
            return Err(Error::GeometryMismatch(format!(
                "center bias for `{}` was built on a different grid",
                ctx.meta.image_id
            )));
        }
        Ok(map.clone())
    }
}

/// Spatial gold standard: KDE over other subjects' fixations on the same
/// image mixed with uniform and center-bias components. The joint variant
/// also uses the predicted subject's own fixations.
#[derive(Debug, Clone)]
pub struct GoldStandardModel {
    dataset: Arc<Dataset>,
    params: KdeParams,
    centerbias: Arc<FittedBaseline>,
    leave_subject_out: bool,
}

impl GoldStandardModel {
    pub fn new(
        dataset: Arc<Dataset>,
        params: KdeParams,
        centerbias: Arc<FittedBaseline>,
        leave_subject_out: bool,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            dataset,
            params,
            centerbias,
            leave_subject_out,
        })
    }

    pub fn params(&self) -> &KdeParams {
        &self.params
    }
}

impl ConditionalModel for GoldStandardModel {
    /// The map only depends on (image, subject), so it is built once.
    type State = Arc<PriorityMap>;

    fn name(&self) -> String {
        if self.leave_subject_out {
            "goldstandard_loso".into()
        } else {
            "goldstandard_joint".into()
        }
    }

    fn dependency_order(&self) -> DependencyOrder {
        DependencyOrder::Fixed(0)
    }

    fn initialize(&self, ctx: &ModelContext<'_>, _first: &Fixation) -> Result<Self::State> {
        let image = ctx.meta.image_id.as_str();
        let cb = self.centerbias.predict(image, 1)?;
        let excluded = self.leave_subject_out.then_some(ctx.subject_id);
        match gold_standard_predict(&self.dataset, image, excluded, &self.params, cb) {
            Ok(map) => Ok(Arc::new(map)),
            // Nobody else viewed this image: fall back to the center bias.
            Err(Error::InsufficientData(_)) => Ok(Arc::new(cb.clone())),
            Err(e) => Err(e),
        }
    }

    fn update_state(
        &self,
        _ctx: &ModelContext<'_>,
        state: Self::State,
        _fixation: &Fixation,
    ) -> Result<Self::State> {
        Ok(state)
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, state: &Self::State) -> Result<PriorityMap> {
        if *state.geometry() != ctx.geometry {
            return Err(Error::GeometryMismatch(
                "gold standard grid differs from the evaluation grid".into(),
            ));
        }
        Ok((**state).clone())
    }
}
