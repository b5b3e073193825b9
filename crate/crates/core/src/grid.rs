//! Dense priority grids over a stimulus.
//!
//! A [`Geometry`] relates grid cells to stimulus pixels: cell `(i, j)` covers
//! pixels `[i*k, (i+1)*k) x [j*k, (j+1)*k)` for downsample factor `k`, and is
//! represented by its center point.

use crate::data::{Fixation, StimulusMeta};
use crate::error::{Error, Result};

/// Maximum deviation of a probability map's total mass from one.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Geometry {
    pub width: usize,
    pub height: usize,
    pub downsample: u32,
}

impl Geometry {
    pub fn new(width: usize, height: usize, downsample: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "grid must be nonempty, got {width}x{height}"
            )));
        }
        if downsample == 0 || !downsample.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "downsample factor must be a power of two, got {downsample}"
            )));
        }
        Ok(Self {
            width,
            height,
            downsample,
        })
    }

    /// Grid covering a stimulus at the given downsample factor. Partial cells
    /// at the right and bottom edges are kept.
    pub fn for_stimulus(meta: &StimulusMeta, downsample: u32) -> Result<Self> {
        if downsample == 0 || !downsample.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "downsample factor must be a power of two, got {downsample}"
            )));
        }
        let k = downsample as usize;
        Self::new(
            (meta.width_px as usize).div_ceil(k),
            (meta.height_px as usize).div_ceil(k),
            downsample,
        )
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    /// Column and row of the cell owning pixel coordinate `(x, y)`.
    pub fn cell_coords(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        let k = self.downsample as f64;
        let (cx, cy) = ((x / k).floor(), (y / k).floor());
        if !(cx >= 0.0 && cy >= 0.0 && cx < self.width as f64 && cy < self.height as f64) {
            return Err(Error::FixationOutsideGrid {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok((cx as usize, cy as usize))
    }

    /// Row-major index of the cell owning pixel coordinate `(x, y)`.
    pub fn cell_index(&self, x: f64, y: f64) -> Result<usize> {
        let (cx, cy) = self.cell_coords(x, y)?;
        Ok(cy * self.width + cx)
    }

    pub fn cell_of(&self, fixation: &Fixation) -> Result<usize> {
        self.cell_index(fixation.x, fixation.y)
    }

    /// Pixel x coordinate of the center of column `i`.
    #[inline]
    pub fn center_x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.downsample as f64
    }

    #[inline]
    pub fn center_y(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.downsample as f64
    }

    pub fn cell_center(&self, index: usize) -> (f64, f64) {
        (
            self.center_x(index % self.width),
            self.center_y(index / self.width),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapKind {
    Priority,
    Probability,
}

/// A dense row-major grid of finite priority values.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorityMap {
    geometry: Geometry,
    values: Vec<f64>,
    kind: MapKind,
}

impl PriorityMap {
    pub fn priority(geometry: Geometry, values: Vec<f64>) -> Result<Self> {
        check_len(&geometry, &values)?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidMap(format!("non-finite value {v}")));
        }
        Ok(Self {
            geometry,
            values,
            kind: MapKind::Priority,
        })
    }

    /// Wraps values that already form a probability distribution.
    pub fn probability(geometry: Geometry, values: Vec<f64>) -> Result<Self> {
        check_len(&geometry, &values)?;
        let mut total = 0.0;
        for &v in &values {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::NotProbability(format!("cell value {v}")));
            }
            total += v;
        }
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            return Err(Error::NotProbability(format!("total mass {total}")));
        }
        Ok(Self {
            geometry,
            values,
            kind: MapKind::Probability,
        })
    }

    /// Normalizes nonnegative weights into a probability map.
    pub fn from_weights(geometry: Geometry, mut weights: Vec<f64>) -> Result<Self> {
        check_len(&geometry, &weights)?;
        let mut total = 0.0;
        for &w in &weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::NotProbability(format!("weight {w}")));
            }
            total += w;
        }
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::NotProbability(format!("total weight {total}")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::probability(geometry, weights)
    }

    /// Normalizes natural-log weights into a probability map. `-inf` entries
    /// get zero mass.
    pub fn from_log_weights(geometry: Geometry, mut log_weights: Vec<f64>) -> Result<Self> {
        check_len(&geometry, &log_weights)?;
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NotProbability(format!("maximum log weight {max}")));
        }
        log_weights.iter_mut().for_each(|w| *w = (*w - max).exp());
        Self::from_weights(geometry, log_weights)
    }

    pub fn uniform(geometry: Geometry) -> Self {
        let c = geometry.cells();
        Self {
            geometry,
            values: vec![1.0 / c as f64; c],
            kind: MapKind::Probability,
        }
    }

    /// Convex combination of probability maps sharing one geometry.
    pub fn mixture(components: &[(f64, &PriorityMap)]) -> Result<Self> {
        let (_, first) = components
            .first()
            .ok_or_else(|| Error::EmptyInput("mixture without components".into()))?;
        let geometry = first.geometry;
        let mut values = vec![0.0; geometry.cells()];
        for &(w, map) in components {
            map.require_probability()?;
            if map.geometry != geometry {
                return Err(Error::GeometryMismatch(format!(
                    "{:?} vs {:?}",
                    map.geometry, geometry
                )));
            }
            if !(w >= 0.0) {
                return Err(Error::InvalidParameter(format!("mixture weight {w}")));
            }
            if w == 0.0 {
                continue;
            }
            for (acc, v) in values.iter_mut().zip(&map.values) {
                *acc += w * v;
            }
        }
        Self::probability(geometry, values)
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn is_probability(&self) -> bool {
        self.kind == MapKind::Probability
    }

    pub fn require_probability(&self) -> Result<()> {
        if self.is_probability() {
            Ok(())
        } else {
            Err(Error::NotProbability("priority map given".into()))
        }
    }

    pub fn value_at(&self, fixation: &Fixation) -> Result<f64> {
        Ok(self.values[self.geometry.cell_of(fixation)?])
    }

    /// Index of the largest value; the first in row-major order wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Same values, relabelled as a plain priority map.
    pub fn into_priority(mut self) -> Self {
        self.kind = MapKind::Priority;
        self
    }
}

fn check_len(geometry: &Geometry, values: &[f64]) -> Result<()> {
    if values.len() != geometry.cells() {
        return Err(Error::GeometryMismatch(format!(
            "{} values for a {}x{} grid",
            values.len(),
            geometry.width,
            geometry.height
        )));
    }
    Ok(())
}
