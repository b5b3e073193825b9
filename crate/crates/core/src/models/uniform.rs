use super::{ConditionalModel, DependencyOrder, ModelContext};
use crate::data::Fixation;
use crate::error::Result;
use crate::grid::PriorityMap;

/// Every cell equally likely, whatever the history.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformModel;

impl ConditionalModel for UniformModel {
    type State = ();

    fn name(&self) -> String {
        "uniform".into()
    }

    fn dependency_order(&self) -> DependencyOrder {
        DependencyOrder::Fixed(0)
    }

    fn initialize(&self, _ctx: &ModelContext<'_>, _first: &Fixation) -> Result<()> {
        Ok(())
    }

    fn update_state(&self, _ctx: &ModelContext<'_>, state: (), _fixation: &Fixation) -> Result<()> {
        Ok(state)
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, _state: &()) -> Result<PriorityMap> {
        Ok(PriorityMap::uniform(ctx.geometry))
    }
}
