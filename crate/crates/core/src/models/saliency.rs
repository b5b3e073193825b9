use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{ConditionalModel, DependencyOrder, ModelContext};
use crate::data::{Dataset, Fixation};
use crate::error::{Error, Result};
use crate::grid::{Geometry, PriorityMap};
use crate::smap;

/// Saliency values are floored at this fraction of the map maximum.
pub const SALIENCY_FLOOR: f64 = 1e-9;

/// Per-image saliency maps, one `<image_id>.smap` per image.
#[derive(Debug, Clone, Default)]
pub struct SaliencyStore {
    label: String,
    maps: BTreeMap<String, PriorityMap>,
}

impl SaliencyStore {
    /// Loads the map of every image that has scanpaths in `ds`.
    pub fn load(dir: impl AsRef<Path>, ds: &Dataset, downsample: u32) -> Result<Self> {
        let dir = dir.as_ref();
        let mut maps = BTreeMap::new();
        for image in ds.image_ids() {
            let path: PathBuf = dir.join(format!("{image}.smap"));
            if !path.is_file() {
                return Err(Error::MissingSaliency(format!(
                    "{image} (expected {})",
                    path.display()
                )));
            }
            let map = smap::load_smap(&path, downsample)?;
            let expected = Geometry::for_stimulus(ds.stimulus(image)?, downsample)?;
            if *map.geometry() != expected {
                return Err(Error::GeometryMismatch(format!(
                    "{}: {}x{} grid, expected {}x{} at downsample {downsample}",
                    path.display(),
                    map.width(),
                    map.height(),
                    expected.width,
                    expected.height
                )));
            }
            maps.insert(image.to_string(), map);
        }
        let label = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        Ok(Self { label, maps })
    }

    pub fn from_maps(label: impl Into<String>, maps: BTreeMap<String, PriorityMap>) -> Self {
        Self {
            label: label.into(),
            maps,
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn get(&self, image_id: &str) -> Option<&PriorityMap> {
        self.maps.get(image_id)
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }
}

/// Saliency floored at [`SALIENCY_FLOOR`] times its maximum and scaled to
/// sum to one.
pub fn normalized_saliency(map: &PriorityMap) -> Result<Vec<f64>> {
    let values = map.values();
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidMap(format!("saliency value {v}; needs nonnegative input")));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::InvalidMap("saliency map is zero everywhere".into()));
    }
    let floor = SALIENCY_FLOOR * max;
    let floored: Vec<f64> = values.iter().map(|&v| v.max(floor)).collect();
    let total: f64 = floored.iter().sum();
    Ok(floored.into_iter().map(|v| v / total).collect())
}

/// A static saliency map used directly as a priority map. Not a probability
/// model: only rank and saliency metrics apply.
#[derive(Debug, Clone)]
pub struct StaticSaliencyModel {
    label: String,
}

impl StaticSaliencyModel {
    pub fn new(label: impl Into<String>) -> Self {
        Self { label: label.into() }
    }
}

impl ConditionalModel for StaticSaliencyModel {
    type State = ();

    fn name(&self) -> String {
        "saliency".into()
    }

    fn is_probabilistic(&self) -> bool {
        false
    }

    fn dependency_order(&self) -> DependencyOrder {
        DependencyOrder::Fixed(0)
    }

    fn uses_saliency(&self) -> bool {
        true
    }

    fn internal_saliency(&self) -> Option<String> {
        Some(self.label.clone())
    }

    fn initialize(&self, ctx: &ModelContext<'_>, _first: &Fixation) -> Result<()> {
        ctx.require_saliency().map(|_| ())
    }

    fn update_state(&self, _ctx: &ModelContext<'_>, state: (), _fixation: &Fixation) -> Result<()> {
        Ok(state)
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, _state: &()) -> Result<PriorityMap> {
        Ok(ctx.require_saliency()?.clone().into_priority())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Scanpath, StimulusMeta};
    use crate::models::sample_scanpath;
    use rand::SeedableRng;

    #[test]
    fn floors_and_normalizes() {
        let g = Geometry::new(3, 1, 1).unwrap();
        let map = PriorityMap::priority(g, vec![0.0, 1.0, 3.0]).unwrap();
        let s = normalized_saliency(&map).unwrap();
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(s[0] > 0.0 && s[0] < 1e-9);
        assert!(normalized_saliency(&PriorityMap::priority(g, vec![0.0; 3]).unwrap()).is_err());
        assert!(normalized_saliency(&PriorityMap::priority(g, vec![-1.0, 1.0, 1.0]).unwrap()).is_err());
    }

    #[test]
    fn loads_one_map_per_image() {
        let dir = tempfile::tempdir().unwrap();
        let meta = StimulusMeta::new("img", 8, 4, 1.0).unwrap();
        let ds = Dataset::new(
            "d",
            vec![meta.clone()],
            vec![Scanpath {
                image_id: "img".into(),
                subject_id: "s".into(),
                fixations: vec![Fixation::new(4.0, 2.0)],
                forced_initial: true,
            }],
        )
        .unwrap();
        assert!(matches!(SaliencyStore::load(dir.path(), &ds, 2), Err(Error::MissingSaliency(_))));
        let g = Geometry::for_stimulus(&meta, 2).unwrap();
        let map = PriorityMap::priority(g, vec![0.0, 1.0, 5.0, 2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        smap::save_smap(&map, dir.path().join("img.smap")).unwrap();
        assert!(SaliencyStore::load(dir.path(), &ds, 1).is_err());
        let store = SaliencyStore::load(dir.path(), &ds, 2).unwrap();
        assert_eq!(store.get("img"), Some(&map));

        // Winner-take-all sampling walks to the maximum.
        let ctx = ModelContext::new(&meta, 2).unwrap().with_saliency(store.get("img"));
        let model = StaticSaliencyModel::new(store.label());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let sp = sample_scanpath(&model, &ctx, 3, &mut rng).unwrap();
        assert_eq!(sp.fixations[1], Fixation::new(5.0, 1.0));
    }
}
