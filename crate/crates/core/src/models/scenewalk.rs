//! Attention and inhibition-of-return dynamics over a saliency map.
//!
//! Two fields evolve with every fixation at `z` lasting `d` ms:
//!
//! * attention `A` relaxes toward `G_A(z) ⊙ S` (normalized) at rate `1/τ_A`,
//! * inhibition `F` relaxes toward `G_F(z)` at rate `1/τ_F`,
//!
//! where `G_σ(z)` is a normalized Gaussian at `z` and `S` the normalized
//! saliency. The next-fixation map is
//! `u = max(A^γ/ΣA^γ − c·F^γ/ΣF^γ, 0)`, mixed with a uniform floor. The
//! inhibition field is narrower and slower than the attention field.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::saliency::{normalized_saliency, SaliencyStore};
use super::{axis_gaussian, replay, ConditionalModel, DependencyOrder, ModelContext};
use crate::data::{Dataset, Fixation};
use crate::error::{Error, Result};
use crate::fitting::{self, FitResult, FitSpec, FitSplit};
use crate::grid::{Geometry, PriorityMap};
use crate::metrics;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneWalkParams {
    pub sigma_attention_dva: f64,
    pub sigma_inhibition_dva: f64,
    pub tau_attention_ms: f64,
    pub tau_inhibition_ms: f64,
    pub inhibition_strength: f64,
    pub exponent: f64,
    pub uniform_floor: f64,
    /// Used for fixations without a recorded duration.
    pub default_duration_ms: f64,
}

impl Default for SceneWalkParams {
    fn default() -> Self {
        Self {
            sigma_attention_dva: 6.0,
            sigma_inhibition_dva: 2.0,
            tau_attention_ms: 300.0,
            tau_inhibition_ms: 1600.0,
            inhibition_strength: 0.3,
            exponent: 1.0,
            uniform_floor: 0.01,
            default_duration_ms: 250.0,
        }
    }
}

impl SceneWalkParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.sigma_attention_dva,
            self.sigma_inhibition_dva,
            self.tau_attention_ms,
            self.tau_inhibition_ms,
            self.exponent,
            self.default_duration_ms,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(
                "spreads, time constants, exponent and default duration must be positive".into(),
            ));
        }
        if !(self.inhibition_strength.is_finite() && self.inhibition_strength >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inhibition strength {}",
                self.inhibition_strength
            )));
        }
        if !(0.0..1.0).contains(&self.uniform_floor) {
            return Err(Error::InvalidParameter(format!("uniform floor {}", self.uniform_floor)));
        }
        if self.tau_attention_ms >= self.tau_inhibition_ms {
            return Err(Error::InvalidParameter(
                "attention must decay faster than inhibition (tau_attention < tau_inhibition)".into(),
            ));
        }
        if self.sigma_inhibition_dva >= self.sigma_attention_dva {
            return Err(Error::InvalidParameter(
                "inhibition must cover a smaller area (sigma_inhibition < sigma_attention)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneWalkState {
    pub attention: Vec<f64>,
    pub inhibition: Vec<f64>,
}

/// Normalized Gaussian field at `(x, y)`; falls back to the owning cell when
/// the kernel misses every cell center.
fn gaussian_field(x: f64, y: f64, sigma_px: f64, geometry: Geometry) -> Vec<f64> {
    let k = geometry.downsample as f64;
    let gx = axis_gaussian(x, sigma_px, geometry.width, k);
    let gy = axis_gaussian(y, sigma_px, geometry.height, k);
    let total = gx.iter().sum::<f64>() * gy.iter().sum::<f64>();
    let mut field = vec![0.0; geometry.cells()];
    if total > 0.0 {
        for (j, &wy) in gy.iter().enumerate() {
            for (i, &wx) in gx.iter().enumerate() {
                field[j * geometry.width + i] = wx * wy / total;
            }
        }
    } else if let Ok(c) = geometry.cell_index(x, y) {
        field[c] = 1.0;
    }
    field
}

fn initial_state(saliency: &[f64], geometry: Geometry) -> SceneWalkState {
    SceneWalkState {
        attention: saliency.to_vec(),
        inhibition: vec![1.0 / geometry.cells() as f64; geometry.cells()],
    }
}

/// Advances both fields over one fixation.
pub fn scenewalk_update(
    params: &SceneWalkParams,
    mut state: SceneWalkState,
    fixation: &Fixation,
    saliency: &[f64],
    px_per_dva: f64,
    geometry: Geometry,
) -> Result<SceneWalkState> {
    if saliency.len() != geometry.cells() || state.attention.len() != geometry.cells() {
        return Err(Error::GeometryMismatch("scene walk fields and grid differ".into()));
    }
    let d = fixation.duration_ms.unwrap_or(params.default_duration_ms);
    let ga = gaussian_field(fixation.x, fixation.y, params.sigma_attention_dva * px_per_dva, geometry);
    let gf = gaussian_field(fixation.x, fixation.y, params.sigma_inhibition_dva * px_per_dva, geometry);
    let mut target: Vec<f64> = ga.iter().zip(saliency).map(|(g, s)| g * s).collect();
    let total: f64 = target.iter().sum();
    if total > 0.0 {
        target.iter_mut().for_each(|v| *v /= total);
    } else {
        target = ga;
    }
    let keep_a = (-d / params.tau_attention_ms).exp();
    let keep_f = (-d / params.tau_inhibition_ms).exp();
    for (a, t) in state.attention.iter_mut().zip(&target) {
        *a = t + (*a - t) * keep_a;
    }
    for (f, g) in state.inhibition.iter_mut().zip(&gf) {
        *f = g + (*f - g) * keep_f;
    }
    Ok(state)
}

pub fn scenewalk_map(params: &SceneWalkParams, state: &SceneWalkState, geometry: Geometry) -> Result<PriorityMap> {
    let powered = |field: &[f64]| -> Vec<f64> {
        let v: Vec<f64> = field.iter().map(|x| x.max(0.0).powf(params.exponent)).collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            v.into_iter().map(|x| x / total).collect()
        } else {
            v
        }
    };
    let a = powered(&state.attention);
    let f = powered(&state.inhibition);
    let u: Vec<f64> = a
        .iter()
        .zip(&f)
        .map(|(a, f)| (a - params.inhibition_strength * f).max(0.0))
        .collect();
    let total: f64 = u.iter().sum();
    let n = geometry.cells() as f64;
    if !(total > 0.0 && total.is_finite()) {
        return Ok(PriorityMap::uniform(geometry));
    }
    let floor = params.uniform_floor / n;
    let values = u
        .iter()
        .map(|v| (1.0 - params.uniform_floor) * v / total + floor)
        .collect();
    PriorityMap::from_weights(geometry, values)
}

#[derive(Debug, Clone)]
pub struct SceneWalkModel {
    params: SceneWalkParams,
}

impl SceneWalkModel {
    pub fn new(params: SceneWalkParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &SceneWalkParams {
        &self.params
    }
}

impl ConditionalModel for SceneWalkModel {
    type State = SceneWalkState;

    fn name(&self) -> String {
        "scenewalk".into()
    }

    fn dependency_order(&self) -> DependencyOrder {
        DependencyOrder::Unbounded
    }

    fn uses_saliency(&self) -> bool {
        true
    }

    fn initialize(&self, ctx: &ModelContext<'_>, first: &Fixation) -> Result<SceneWalkState> {
        let s = normalized_saliency(ctx.require_saliency()?)?;
        let state = initial_state(&s, ctx.geometry);
        scenewalk_update(&self.params, state, first, &s, ctx.meta.px_per_dva, ctx.geometry)
    }

    fn update_state(
        &self,
        ctx: &ModelContext<'_>,
        state: SceneWalkState,
        fixation: &Fixation,
    ) -> Result<SceneWalkState> {
        let s = normalized_saliency(ctx.require_saliency()?)?;
        scenewalk_update(&self.params, state, fixation, &s, ctx.meta.px_per_dva, ctx.geometry)
    }

    fn compute_priority_map(&self, ctx: &ModelContext<'_>, state: &SceneWalkState) -> Result<PriorityMap> {
        scenewalk_map(&self.params, state, ctx.geometry)
    }
}

fn params_from_vector(x: &[f64], base: &SceneWalkParams) -> SceneWalkParams {
    SceneWalkParams {
        sigma_attention_dva: x[0].exp(),
        sigma_inhibition_dva: x[1].exp(),
        tau_attention_ms: x[2].exp(),
        tau_inhibition_ms: x[3].exp(),
        inhibition_strength: x[4],
        ..*base
    }
}

/// Mean log-likelihood (bits per scored fixation) of the dataset under the
/// model.
pub fn scenewalk_log_likelihood(
    params: &SceneWalkParams,
    ds: &Dataset,
    saliency: &SaliencyStore,
    downsample: u32,
) -> Result<f64> {
    let model = SceneWalkModel::new(*params)?;
    let per_path: Vec<(f64, usize)> = ds
        .scanpaths
        .par_iter()
        .map(|sp| -> Result<(f64, usize)> {
            let meta = ds.stimulus(&sp.image_id)?;
            let ctx = ModelContext::new(meta, downsample)?
                .with_subject(&sp.subject_id)
                .with_saliency(saliency.get(&sp.image_id));
            let mut state = replay(&model, &ctx, &sp.fixations[..1])?;
            let mut sum = 0.0;
            for f in &sp.fixations[1..] {
                let map = model.compute_priority_map(&ctx, &state)?;
                sum += metrics::log_likelihood(&map, f)?;
                state = model.update_state(&ctx, state, f)?;
            }
            Ok((sum, sp.len() - 1))
        })
        .collect::<Result<_>>()?;
    let (sum, n) = per_path
        .iter()
        .fold((0.0, 0usize), |(s, n), (a, b)| (s + a, n + b));
    if n == 0 {
        return Err(Error::InsufficientData("no scored fixations".into()));
    }
    Ok(sum / n as f64)
}

/// Maximum-likelihood spreads, time constants and inhibition strength,
/// starting from `initial`. Exponent, floor and default duration stay fixed.
pub fn fit_scenewalk(
    ds: &Dataset,
    saliency: &SaliencyStore,
    downsample: u32,
    initial: &SceneWalkParams,
    split: FitSplit,
) -> Result<(SceneWalkParams, FitResult)> {
    initial.validate()?;
    let spec = FitSpec::new(
        vec![
            "ln_sigma_attention_dva".into(),
            "ln_sigma_inhibition_dva".into(),
            "ln_tau_attention_ms".into(),
            "ln_tau_inhibition_ms".into(),
            "inhibition_strength".into(),
        ],
        vec![0.1f64.ln(), 0.05f64.ln(), 10f64.ln(), 20f64.ln(), 0.0],
        vec![40f64.ln(), 20f64.ln(), 10_000f64.ln(), 50_000f64.ln(), 5.0],
        vec![
            initial.sigma_attention_dva.ln(),
            initial.sigma_inhibition_dva.ln(),
            initial.tau_attention_ms.ln(),
            initial.tau_inhibition_ms.ln(),
            initial.inhibition_strength.min(5.0),
        ],
        split,
    )?;
    let fit = fitting::maximize(&spec, |x| {
        let p = params_from_vector(x, initial);
        scenewalk_log_likelihood(&p, ds, saliency, downsample).unwrap_or(f64::NEG_INFINITY)
    })?;
    Ok((params_from_vector(&fit.parameters, initial), fit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StimulusMeta;
    use crate::models::conditional_prediction;

    fn setup() -> (StimulusMeta, PriorityMap) {
        let meta = StimulusMeta::new("a", 40, 30, 2.0).unwrap();
        let g = Geometry::for_stimulus(&meta, 1).unwrap();
        let s = (0..g.cells())
            .map(|c| {
                let (x, y) = g.cell_center(c);
                1.0 + (x * 0.3).sin().abs() + y / 30.0
            })
            .collect();
        (meta, PriorityMap::priority(g, s).unwrap())
    }

    #[test]
    fn parameter_ordering_is_enforced() {
        let mut p = SceneWalkParams::default();
        assert!(p.validate().is_ok());
        p.tau_attention_ms = 2000.0;
        assert!(SceneWalkModel::new(p).is_err());
        let mut p = SceneWalkParams::default();
        p.sigma_inhibition_dva = 7.0;
        assert!(SceneWalkModel::new(p).is_err());
    }

    #[test]
    fn without_inhibition_and_memory_the_map_is_gated_saliency() {
        let (meta, sal) = setup();
        let params = SceneWalkParams {
            inhibition_strength: 0.0,
            tau_attention_ms: 1e-6,
            ..Default::default()
        };
        let model = SceneWalkModel::new(params).unwrap();
        let ctx = ModelContext::new(&meta, 1).unwrap().with_saliency(Some(&sal));
        let z = Fixation::new(12.0, 20.0);
        let map = conditional_prediction(&model, &ctx, &[Fixation::new(20.0, 15.0), z]).unwrap();
        let g = ctx.geometry;
        let s = normalized_saliency(&sal).unwrap();
        let ga = gaussian_field(z.x, z.y, 6.0 * 2.0, g);
        let expected: Vec<f64> = s.iter().zip(&ga).map(|(a, b)| a * b).collect();
        let total: f64 = expected.iter().sum();
        let floor = 0.01 / g.cells() as f64;
        for (p, e) in map.values().iter().zip(&expected) {
            assert!(((p - floor) / 0.99 - e / total).abs() < 1e-12);
        }
    }

    #[test]
    fn long_fixation_inhibits_return() {
        let (meta, sal) = setup();
        let params = SceneWalkParams {
            inhibition_strength: 3.0,
            ..Default::default()
        };
        let model = SceneWalkModel::new(params).unwrap();
        let ctx = ModelContext::new(&meta, 1).unwrap().with_saliency(Some(&sal));
        let start = Fixation::new(5.0, 5.0);
        let z = Fixation::with_duration(28.0, 18.0, 3000.0);
        let before = conditional_prediction(&model, &ctx, &[start]).unwrap();
        let after = conditional_prediction(&model, &ctx, &[start, z]).unwrap();
        let cell = ctx.geometry.cell_of(&z).unwrap();
        assert!(after.values()[cell] < before.values()[cell]);
    }

    #[test]
    fn replay_is_deterministic_and_needs_saliency() {
        let (meta, sal) = setup();
        let model = SceneWalkModel::new(SceneWalkParams::default()).unwrap();
        let ctx = ModelContext::new(&meta, 1).unwrap().with_saliency(Some(&sal));
        let h = [Fixation::new(20.0, 15.0), Fixation::new(3.0, 4.0), Fixation::new(30.0, 9.0)];
        assert_eq!(
            conditional_prediction(&model, &ctx, &h).unwrap(),
            conditional_prediction(&model, &ctx, &h).unwrap()
        );
        let bare = ModelContext::new(&meta, 1).unwrap();
        assert!(matches!(
            conditional_prediction(&model, &bare, &h),
            Err(Error::MissingSaliency(_))
        ));
    }
}
