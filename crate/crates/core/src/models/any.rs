//! Runtime selection of a model by name.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    CenterBiasModel, ConditionalModel, DependencyOrder, GoldStandardModel, JumpModel, JumpModelParams,
    ModelContext, SaccadicFlowModel, SaccadicFlowParams, SceneWalkModel, SceneWalkParams, SceneWalkState,
    StaticSaliencyModel, UniformModel,
};
use crate::data::{Dataset, Fixation};
use crate::density::{BaselineKind, BaselineParams, FittedBaseline};
use crate::error::{Error, Result};
use crate::grid::PriorityMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Uniform,
    Centerbias,
    FixnumCenterbias,
    GoldstandardLoso,
    GoldstandardJoint,
    Jump,
    SaccadicFlow,
    Scenewalk,
    Saliency,
}

impl ModelKind {
    pub const ALL: [ModelKind; 9] = [
        ModelKind::Uniform,
        ModelKind::Centerbias,
        ModelKind::FixnumCenterbias,
        ModelKind::GoldstandardLoso,
        ModelKind::GoldstandardJoint,
        ModelKind::Jump,
        ModelKind::SaccadicFlow,
        ModelKind::Scenewalk,
        ModelKind::Saliency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Uniform => "uniform",
            ModelKind::Centerbias => "centerbias",
            ModelKind::FixnumCenterbias => "fixnum_centerbias",
            ModelKind::GoldstandardLoso => "goldstandard_loso",
            ModelKind::GoldstandardJoint => "goldstandard_joint",
            ModelKind::Jump => "jump",
            ModelKind::SaccadicFlow => "saccadic_flow",
            ModelKind::Scenewalk => "scenewalk",
            ModelKind::Saliency => "saliency",
        }
    }

    /// Whether building the model requires a parameter file.
    pub fn needs_params(self) -> bool {
        !matches!(self, ModelKind::Uniform | ModelKind::Scenewalk | ModelKind::Saliency)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ModelKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::InvalidParameter(format!("unknown model `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone)]
pub enum AnyModel {
    Uniform(UniformModel),
    CenterBias(CenterBiasModel),
    GoldStandard(GoldStandardModel),
    Jump(JumpModel),
    SaccadicFlow(SaccadicFlowModel),
    SceneWalk(SceneWalkModel),
    Saliency(StaticSaliencyModel),
}

#[derive(Debug, Clone)]
pub enum AnyState {
    Unit,
    Index(usize),
    Map(Arc<PriorityMap>),
    Fixation(Fixation),
    SceneWalk(Box<SceneWalkState>),
}

fn parse_params<T: DeserializeOwned>(kind: ModelKind, json: Option<&str>) -> Result<T> {
    let json = json.ok_or_else(|| Error::InvalidParameter(format!("model `{kind}` needs a parameter file")))?;
    Ok(serde_json::from_str(json)?)
}

impl AnyModel {
    /// Builds `kind` from its parameter JSON. Baseline models are fitted
    /// grids and need the dataset they are evaluated on.
    pub fn build(
        kind: ModelKind,
        params_json: Option<&str>,
        dataset: &Arc<Dataset>,
        downsample: u32,
        saliency_label: Option<&str>,
    ) -> Result<Self> {
        Ok(match kind {
            ModelKind::Uniform => AnyModel::Uniform(UniformModel),
            ModelKind::Centerbias | ModelKind::FixnumCenterbias => {
                let p: BaselineParams = parse_params(kind, params_json)?;
                let expected = if kind == ModelKind::Centerbias {
                    BaselineKind::Centerbias
                } else {
                    BaselineKind::FixnumCenterbias
                };
                if p.kind != expected {
                    return Err(Error::InvalidParameter(format!(
                        "parameter file describes a {:?} baseline, not `{kind}`",
                        p.kind
                    )));
                }
                let fitted = FittedBaseline::from_params(dataset, &p, downsample)?;
                AnyModel::CenterBias(CenterBiasModel::new(Arc::new(fitted)))
            }
            ModelKind::GoldstandardLoso | ModelKind::GoldstandardJoint => {
                let p: BaselineParams = parse_params(kind, params_json)?;
                if p.kind != BaselineKind::Goldstandard {
                    return Err(Error::InvalidParameter(format!(
                        "parameter file describes a {:?} baseline, not a gold standard",
                        p.kind
                    )));
                }
                let cb_bw = p.centerbias_bandwidth_px.ok_or_else(|| {
                    Error::InvalidParameter("gold standard parameters lack centerbias_bandwidth_px".into())
                })?;
                let cb = FittedBaseline::center_bias(dataset, cb_bw, downsample)?;
                AnyModel::GoldStandard(GoldStandardModel::new(
                    dataset.clone(),
                    p.kde()?,
                    Arc::new(cb),
                    kind == ModelKind::GoldstandardLoso,
                )?)
            }
            ModelKind::Jump => AnyModel::Jump(JumpModel::new(parse_params::<JumpModelParams>(kind, params_json)?)?),
            ModelKind::SaccadicFlow => {
                AnyModel::SaccadicFlow(SaccadicFlowModel::new(parse_params::<SaccadicFlowParams>(kind, params_json)?)?)
            }
            ModelKind::Scenewalk => {
                let p = match params_json {
                    Some(j) => serde_json::from_str::<SceneWalkParams>(j)?,
                    None => SceneWalkParams::default(),
                };
                AnyModel::SceneWalk(SceneWalkModel::new(p)?)
            }
            ModelKind::Saliency => AnyModel::Saliency(StaticSaliencyModel::new(saliency_label.unwrap_or("saliency"))),
        })
    }

    fn inner(&self) -> &dyn Describe {
        match self {
            AnyModel::Uniform(m) => m,
            AnyModel::CenterBias(m) => m,
            AnyModel::GoldStandard(m) => m,
            AnyModel::Jump(m) => m,
            AnyModel::SaccadicFlow(m) => m,
            AnyModel::SceneWalk(m) => m,
            AnyModel::Saliency(m) => m,
        }
    }
}

/// The state-independent part of [`ConditionalModel`], object safe.
trait Describe {
    fn name(&self) -> String;
    fn is_probabilistic(&self) -> bool;
    fn dependency_order(&self) -> DependencyOrder;
    fn uses_saliency(&self) -> bool;
    fn internal_saliency(&self) -> Option<String>;
}

impl<M: ConditionalModel> Describe for M {
    fn name(&self) -> String {
        ConditionalModel::name(self)
    }
    fn is_probabilistic(&self) -> bool {
        ConditionalModel::is_probabilistic(self)
    }
    fn dependency_order(&self) -> DependencyOrder {
        ConditionalModel::dependency_order(self)
    }
    fn uses_saliency(&self) -> bool {
        ConditionalModel::uses_saliency(self)
    }
    fn internal_saliency(&self) -> Option<String> {
        ConditionalModel::internal_saliency(self)
    }
}

fn state_mismatch() -> Error {
    Error::InvalidParameter("model state does not belong to this model".into())
}

impl ConditionalModel for AnyModel {
    type State = AnyState;

    fn name(&self) -> String {
        self.inner().name()
    }

    fn is_probabilistic(&self) -> bool {
        self.inner().is_probabilistic()
    }

    fn dependency_order(&self) -> DependencyOrder {
        self.inner().dependency_order()
    }

    fn uses_saliency(&self) -> bool {
        self.inner().uses_saliency()
    }

    fn internal_saliency(&self) -> Option<String> {
        self.inner().internal_saliency()
    }

    fn initialize(&self, ctx: &ModelContext<'_>, first: &Fixation) -> Result<AnyState> {
        Ok(match self {
            AnyModel::Uniform(m) => {
                m.initialize(ctx, first)?;
                AnyState::Unit
            }
            AnyModel::CenterBias(m) => AnyState::Index(m.initialize(ctx, first)?),
            AnyModel::GoldStandard(m) => AnyState::Map(m.initialize(ctx, first)?),
            AnyModel::Jump(m) => AnyState::Fixation(m.initialize(ctx, first)?),
            AnyModel::SaccadicFlow(m) => AnyState::Fixation(m.initialize(ctx, first)?),
            AnyModel::SceneWalk(m) => AnyState::SceneWalk(Box::new(m.initialize(ctx, first)?)),
            AnyModel::Saliency(m) => {
                m.initialize(ctx, first)?;
                AnyState::Unit
            }
        })
    }

    fn update_state(&self, ctx: &ModelContext<'_>, state: AnyState, f: &Fixation) -> Result<AnyState> {
        Ok(match (self, state) {
            (AnyModel::Uniform(m), AnyState::Unit) => {
                m.update_state(ctx, (), f)?;
                AnyState::Unit
            }
            (AnyModel::Saliency(m), AnyState::Unit) => {
                m.update_state(ctx, (), f)?;
                AnyState::Unit
            }
            (AnyModel::CenterBias(m), AnyState::Index(s)) => AnyState::Index(m.update_state(ctx, s, f)?),
            (AnyModel::GoldStandard(m), AnyState::Map(s)) => AnyState::Map(m.update_state(ctx, s, f)?),
            (AnyModel::Jump(m), AnyState::Fixation(s)) => AnyState::Fixation(m.update_state(ctx, s, f)?),
            (AnyModel::SaccadicFlow(m), AnyState::Fixation(s)) => AnyState::Fixation(m.update_state(ctx, s, f)?),
            (AnyModel::SceneWalk(m), AnyState::SceneWalk(s)) => {
                AnyState::SceneWalk(Box::new(m.update_state(ctx, *s, f)?))
            }
            _ => return Err(state_mismatch()),
        })
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, state: &AnyState) -> Result<PriorityMap> {
        match (self, state) {
            (AnyModel::Uniform(m), AnyState::Unit) => m.compute_priority_map(ctx, &()),
            (AnyModel::Saliency(m), AnyState::Unit) => m.compute_priority_map(ctx, &()),
            (AnyModel::CenterBias(m), AnyState::Index(s)) => m.compute_priority_map(ctx, s),
            (AnyModel::GoldStandard(m), AnyState::Map(s)) => m.compute_priority_map(ctx, s),
            (AnyModel::Jump(m), AnyState::Fixation(s)) => m.compute_priority_map(ctx, s),
            (AnyModel::SaccadicFlow(m), AnyState::Fixation(s)) => m.compute_priority_map(ctx, s),
            (AnyModel::SceneWalk(m), AnyState::SceneWalk(s)) => m.compute_priority_map(ctx, s),
            _ => Err(state_mismatch()),
        }
    }

    fn sample_fixation(&self, ctx: &ModelContext<'_>, map: &PriorityMap, rng: &mut dyn RngCore) -> Result<Fixation> {
        match self {
            AnyModel::Uniform(m) => m.sample_fixation(ctx, map, rng),
            AnyModel::CenterBias(m) => m.sample_fixation(ctx, map, rng),
            AnyModel::GoldStandard(m) => m.sample_fixation(ctx, map, rng),
            AnyModel::Jump(m) => m.sample_fixation(ctx, map, rng),
            AnyModel::SaccadicFlow(m) => m.sample_fixation(ctx, map, rng),
            AnyModel::SceneWalk(m) => m.sample_fixation(ctx, map, rng),
            AnyModel::Saliency(m) => m.sample_fixation(ctx, map, rng),
        }
    }
}
