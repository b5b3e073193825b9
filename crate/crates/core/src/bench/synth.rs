use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Fixation, Scanpath, StimulusMeta};
use crate::density::gaussian_kde_grid;
use crate::error::{Error, Result};
use crate::grid::PriorityMap;
use crate::models::{
    sample_scanpath, ConditionalModel, DependencyOrder, JumpModel, JumpModelParams, ModelContext, SaccadicFlowModel,
    SaccadicFlowParams,
};

/// The model scanpaths are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// Fixations drawn independently from a per-image mixture of Gaussian
    /// bumps (centers scattered around the image center) and a uniform
    /// component. All subjects share the image's mixture.
    SpatialMixture {
        n_components: usize,
        bandwidth_px: f64,
        center_spread_px: f64,
        uniform_weight: f64,
    },
    Jump(JumpModelParams),
    SaccadicFlow(SaccadicFlowParams),
}

fn default_name() -> String {
    "synthetic".into()
}

fn default_downsample() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub n_images: usize,
    pub n_subjects: usize,
    /// Including the forced central fixation.
    pub fixations_per_scanpath: usize,
    pub width_px: u32,
    pub height_px: u32,
    pub px_per_dva: f64,
    /// Grid the generating model samples on.
    #[serde(default = "default_downsample")]
    pub downsample: u32,
    pub generator: Generator,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synthetic config: {m}")));
        if self.n_images == 0 || self.n_subjects == 0 {
            return bad("n_images and n_subjects must be >= 1");
        }
        if self.fixations_per_scanpath == 0 {
            return bad("fixations_per_scanpath must be >= 1");
        }
        if self.downsample == 0 {
            return bad("downsample must be >= 1");
        }
        StimulusMeta::new("probe", self.width_px, self.height_px, self.px_per_dva)?;
        match &self.generator {
            Generator::SpatialMixture {
                n_components,
                bandwidth_px,
                center_spread_px,
                uniform_weight,
            } => {
                if *n_components == 0 {
                    return bad("n_components must be >= 1");
                }
                if !(bandwidth_px.is_finite() && *bandwidth_px > 0.0) {
                    return bad("bandwidth_px must be positive");
                }
                if !(center_spread_px.is_finite() && *center_spread_px >= 0.0) {
                    return bad("center_spread_px must be >= 0");
                }
                if !(0.0..=1.0).contains(uniform_weight) {
                    return bad("uniform_weight must lie in [0, 1]");
                }
                Ok(())
            }
            Generator::Jump(p) => p.validate(),
            Generator::SaccadicFlow(p) => p.validate(),
        }
    }
}

/// Generating parameters, for recovery checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: SynthConfig,
    pub seed: u64,
    /// Bump centers per image, spatial mixtures only.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub components: BTreeMap<String, Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

/// A fixed map per image, independent of the history.
struct FixedMapModel {
    maps: BTreeMap<String, PriorityMap>,
}

impl ConditionalModel for FixedMapModel {
    type State = ();

    fn name(&self) -> String {
        "spatial_mixture".into()
    }

    fn dependency_order(&self) -> DependencyOrder {
        DependencyOrder::Fixed(0)
    }

    fn initialize(&self, _ctx: &ModelContext<'_>, _first: &Fixation) -> Result<()> {
        Ok(())
    }

    fn update_state(&self, _ctx: &ModelContext<'_>, _state: (), _f: &Fixation) -> Result<()> {
        Ok(())
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, _state: &()) -> Result<PriorityMap> {
        self.maps
            .get(&ctx.meta.image_id)
            .cloned()
            .ok_or_else(|| Error::UnknownStimulus(ctx.meta.image_id.clone()))
    }
}

enum Sampler {
    Fixed(FixedMapModel),
    Jump(JumpModel),
    Flow(SaccadicFlowModel),
}

/// Draws `n_subjects` scanpaths per image from the configured model, every
/// one starting at the image center. One seeded stream drives everything,
/// images in order and subjects within images.
pub fn generate_synthetic_dataset(config: &SynthConfig, seed: u64) -> Result<SynthOutput> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stimuli: Vec<StimulusMeta> = (0..config.n_images)
        .map(|k| StimulusMeta::new(format!("img{k:03}"), config.width_px, config.height_px, config.px_per_dva))
        .collect::<Result<_>>()?;

    let mut components = BTreeMap::new();
    let sampler = match &config.generator {
        Generator::SpatialMixture {
            n_components,
            bandwidth_px,
            center_spread_px,
            uniform_weight,
        } => {
            let mut maps = BTreeMap::new();
            for meta in &stimuli {
                let (cx, cy) = meta.center();
                let centers: Vec<(f64, f64)> = if *center_spread_px > 0.0 {
                    let nx = Normal::new(cx, *center_spread_px).expect("valid spread");
                    let ny = Normal::new(cy, *center_spread_px).expect("valid spread");
                    (0..*n_components)
                        .map(|_| meta.clamp(rng.sample(nx), rng.sample(ny)))
                        .collect()
                } else {
                    vec![(cx, cy); *n_components]
                };
                let geometry = crate::grid::Geometry::for_stimulus(meta, config.downsample)?;
                let bumps = gaussian_kde_grid(&centers, *bandwidth_px, geometry)?;
                let uniform = PriorityMap::uniform(geometry);
                let map = PriorityMap::mixture(&[(1.0 - uniform_weight, &bumps), (*uniform_weight, &uniform)])?;
                maps.insert(meta.image_id.clone(), map);
                components.insert(meta.image_id.clone(), centers);
            }
            Sampler::Fixed(FixedMapModel { maps })
        }
        Generator::Jump(p) => Sampler::Jump(JumpModel::new(*p)?),
        Generator::SaccadicFlow(p) => Sampler::Flow(SaccadicFlowModel::new(*p)?),
    };

    let mut scanpaths = Vec::with_capacity(config.n_images * config.n_subjects);
    for meta in &stimuli {
        for s in 0..config.n_subjects {
            let subject = format!("s{s:02}");
            let ctx = ModelContext::new(meta, config.downsample)?.with_subject(&subject);
            let n = config.fixations_per_scanpath;
            let sp: Scanpath = match &sampler {
                Sampler::Fixed(m) => sample_scanpath(m, &ctx, n, &mut rng)?,
                Sampler::Jump(m) => sample_scanpath(m, &ctx, n, &mut rng)?,
                Sampler::Flow(m) => sample_scanpath(m, &ctx, n, &mut rng)?,
            };
            scanpaths.push(sp);
        }
    }
    let dataset = Dataset::new(config.name.clone(), stimuli, scanpaths)?;
    Ok(SynthOutput {
        dataset,
        truth: GroundTruth {
            config: config.clone(),
            seed,
            components,
        },
    })
}
