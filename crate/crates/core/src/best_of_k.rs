//! Exact distribution of best-of-N candidate sampling over a discrete support.
//!
//! Draw N i.i.d. candidates from `p` and keep the one with the highest gain.
//! For a cell `y` with gain `g`, the kept candidate is `y` with probability
//! `p(y) / P[gain = g] * (P[gain <= g]^N - P[gain < g]^N)`. Cells with gain
//! `-inf` mark rejected candidates; if all N draws are rejected the result is
//! drawn from a fallback distribution instead.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::PriorityMap;

/// Total-mass tolerance for [`DiscreteDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Below this gap `a^N - b^N` is evaluated as `(a - b) * sum a^i b^(N-1-i)`.
const STABLE_DIFFERENCE_GAP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<usize>,
    probabilities: Vec<f64>,
    gains: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<usize>, probabilities: Vec<f64>, gains: Vec<f64>) -> Result<Self> {
        let n = support.len();
        if n == 0 || probabilities.len() != n || gains.len() != n {
            return Err(Error::InvalidDistribution(
                "support, probabilities and gains must be nonempty and of equal length".into(),
            ));
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDistribution("repeated support cell".into()));
        }
        if let Some(p) = probabilities.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidDistribution(format!("probability {p}")));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        if let Some(g) = gains.iter().find(|g| g.is_nan() || **g == f64::INFINITY) {
            return Err(Error::InvalidDistribution(format!("gain {g}")));
        }
        Ok(Self {
            support,
            probabilities,
            gains,
        })
    }

    /// Support `0..weights.len()` with normalized weights.
    pub fn from_weights(weights: &[f64], gains: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
        }
        let probabilities = weights.iter().map(|w| w / total).collect();
        Self::new((0..weights.len()).collect(), probabilities, gains)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Probability of `cell`, zero if outside the support.
    pub fn probability_of(&self, cell: usize) -> f64 {
        self.support
            .iter()
            .position(|&c| c == cell)
            .map_or(0.0, |k| self.probabilities[k])
    }

    /// Total probability of the `-inf` gain cells.
    pub fn rejection_mass(&self) -> f64 {
        self.probabilities
            .iter()
            .zip(&self.gains)
            .filter(|(_, g)| **g == f64::NEG_INFINITY)
            .map(|(p, _)| p)
            .sum()
    }
}

fn pow_n(x: f64, n: u32) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (n as f64 * x.ln()).exp()
    }
}

/// `a^n - b^n` for `0 <= b <= a`.
fn power_difference(a: f64, b: f64, n: u32) -> f64 {
    let gap = a - b;
    if gap <= 0.0 {
        return 0.0;
    }
    if gap >= STABLE_DIFFERENCE_GAP || b <= 0.0 {
        return (pow_n(a, n) - pow_n(b, n)).max(0.0);
    }
    let (la, lb) = (a.ln(), b.ln());
    let sum: f64 = (0..n)
        .map(|i| (i as f64 * la + (n - 1 - i) as f64 * lb).exp())
        .sum();
    gap * sum
}

/// Output probability per input position. `floor_mass` is extra mass sitting
/// below every gain class (the pooled rejection cell).
fn theorem(d: &DiscreteDistribution, n: u32, floor_mass: f64) -> Vec<f64> {
    let mut classes: BTreeMap<u64, (f64, f64, Vec<usize>)> = BTreeMap::new();
    for (k, (&p, &g)) in d.probabilities.iter().zip(&d.gains).enumerate() {
        if g == f64::NEG_INFINITY {
            continue;
        }
        // Order-preserving key for finite floats; -0.0 and 0.0 share a class.
        let g = if g == 0.0 { 0.0 } else { g };
        let bits = g.to_bits();
        let key = if bits >> 63 == 1 { !bits } else { bits | (1 << 63) };
        let entry = classes.entry(key).or_insert((g, 0.0, Vec::new()));
        entry.1 += p;
        entry.2.push(k);
    }
    let mut out = vec![0.0; d.len()];
    let mut below = floor_mass;
    for (_, (_, mass, members)) in classes {
        let upto = (below + mass).min(1.0);
        if mass > 0.0 {
            // With one draw the ratio is exactly 1; skip the rounding.
            let ratio = if n == 1 {
                1.0
            } else {
                power_difference(upto, below.min(upto), n) / mass
            };
            for k in members {
                out[k] = d.probabilities[k] * ratio;
            }
        }
        below = upto;
    }
    out
}

fn check_n(n: u32) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("number of candidates must be >= 1".into()));
    }
    Ok(())
}

/// Distribution of the highest-gain candidate among `n` i.i.d. draws.
pub fn best_of_k_density(d: &DiscreteDistribution, n: u32) -> Result<DiscreteDistribution> {
    check_n(n)?;
    if d.gains.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidDistribution(
            "gains must be finite; use best_of_k_with_rejection for rejected cells".into(),
        ));
    }
    Ok(DiscreteDistribution {
        support: d.support.clone(),
        probabilities: theorem(d, n, 0.0),
        gains: d.gains.clone(),
    })
}

/// Like [`best_of_k_density`], but `-inf` gain cells are rejections. The
/// probability that every candidate is rejected is handed to `fallback`,
/// whose support must lie within the non-rejected cells of `d`.
pub fn best_of_k_with_rejection(
    d: &DiscreteDistribution,
    n: u32,
    fallback: &DiscreteDistribution,
) -> Result<DiscreteDistribution> {
    check_n(n)?;
    let rejected: Vec<bool> = d.gains.iter().map(|g| *g == f64::NEG_INFINITY).collect();
    let valid_mass: f64 = d
        .probabilities
        .iter()
        .zip(&rejected)
        .filter(|(_, r)| !**r)
        .map(|(p, _)| p)
        .sum();
    if valid_mass <= 0.0 {
        return Err(Error::TotalRejection);
    }
    let r = d.rejection_mass();
    let mut out = theorem(d, n, r);
    let all_rejected = pow_n(r, n);
    if all_rejected > 0.0 {
        for (&cell, &q) in fallback.support.iter().zip(&fallback.probabilities) {
            let k = d
                .support
                .iter()
                .position(|&c| c == cell)
                .filter(|&k| !rejected[k])
                .ok_or_else(|| {
                    Error::InvalidDistribution(format!(
                        "fallback cell {cell} is not a non-rejected support cell"
                    ))
                })?;
            out[k] += all_rejected * q;
        }
    }
    Ok(DiscreteDistribution {
        support: d.support.clone(),
        probabilities: out,
        gains: d.gains.clone(),
    })
}

/// Best-of-`n` over a whole grid: candidates drawn from `candidates`, gains
/// per cell (`-inf` rejects), rejected draws replaced by a draw from
/// `fallback` when given.
pub fn best_of_k_map(
    candidates: &PriorityMap,
    gains: &[f64],
    n: u32,
    fallback: Option<&PriorityMap>,
) -> Result<PriorityMap> {
    candidates.require_probability()?;
    let geometry = *candidates.geometry();
    if gains.len() != geometry.cells() {
        return Err(Error::GeometryMismatch(format!(
            "{} gains for {} cells",
            gains.len(),
            geometry.cells()
        )));
    }
    let d = DiscreteDistribution::from_weights(candidates.values(), gains.to_vec())?;
    let out = match fallback {
        None => best_of_k_density(&d, n)?,
        Some(fb) => {
            fb.require_probability()?;
            if *fb.geometry() != geometry {
                return Err(Error::GeometryMismatch("fallback grid differs".into()));
            }
            let keep: Vec<usize> = (0..geometry.cells())
                .filter(|&c| gains[c] != f64::NEG_INFINITY && fb.values()[c] > 0.0)
                .collect();
            let w: Vec<f64> = keep.iter().map(|&c| fb.values()[c]).collect();
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::InvalidDistribution(
                    "fallback has no mass on non-rejected cells".into(),
                ));
            }
            let fallback = DiscreteDistribution::new(
                keep,
                w.iter().map(|v| v / total).collect(),
                vec![0.0; w.len()],
            )?;
            best_of_k_with_rejection(&d, n, &fallback)?
        }
    };
    PriorityMap::from_weights(geometry, out.probabilities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Enumerates every ordered tuple of `n` draws; the first maximal gain
    /// among non-rejected draws wins, all-rejected tuples go to `fallback`.
    fn enumerate(d: &DiscreteDistribution, n: u32, fallback: Option<&DiscreteDistribution>) -> Vec<f64> {
        let m = d.len();
        let mut out = vec![0.0; m];
        let mut idx = vec![0usize; n as usize];
        loop {
            let prob: f64 = idx.iter().map(|&k| d.probabilities[k]).product();
            let mut best: Option<usize> = None;
            for &k in &idx {
                if d.gains[k] == f64::NEG_INFINITY {
                    continue;
                }
                if best.map_or(true, |b| d.gains[k] > d.gains[b]) {
                    best = Some(k);
                }
            }
            match best {
                Some(b) => out[b] += prob,
                None => {
                    let fb = fallback.expect("rejections need a fallback");
                    for (&cell, &q) in fb.support.iter().zip(&fb.probabilities) {
                        let k = d.support.iter().position(|&c| c == cell).unwrap();
                        out[k] += prob * q;
                    }
                }
            }
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    return out;
                }
                idx[pos] += 1;
                if idx[pos] < m {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    fn dist(p: &[f64], g: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new((0..p.len()).collect(), p.to_vec(), g.to_vec()).unwrap()
    }

    #[test]
    fn single_candidate_is_identity() {
        let d = dist(&[0.2, 0.3, 0.5], &[3.0, 1.0, 2.0]);
        assert_eq!(best_of_k_density(&d, 1).unwrap().probabilities(), d.probabilities());
    }

    #[test]
    fn two_cells_two_draws() {
        let out = best_of_k_density(&dist(&[0.5, 0.5], &[1.0, 2.0]), 2).unwrap();
        assert!((out.probabilities()[0] - 0.25).abs() < 1e-15);
        assert!((out.probabilities()[1] - 0.75).abs() < 1e-15);
        let tied = best_of_k_density(&dist(&[0.5, 0.5], &[1.0, 1.0]), 7).unwrap();
        assert_eq!(tied.probabilities(), &[0.5, 0.5]);
    }

    #[test]
    fn rejection_goes_to_fallback() {
        let d = dist(&[0.5, 0.5], &[1.0, f64::NEG_INFINITY]);
        let fb = DiscreteDistribution::new(vec![0], vec![1.0], vec![0.0]).unwrap();
        let out = best_of_k_with_rejection(&d, 2, &fb).unwrap();
        assert!((out.probabilities()[0] - 1.0).abs() < 1e-15);
        assert_eq!(out.probabilities()[1], 0.0);

        // One draw: the fallback receives exactly the rejection mass.
        let d = dist(&[0.3, 0.45, 0.25], &[1.0, 2.0, f64::NEG_INFINITY]);
        let fb = DiscreteDistribution::new(vec![0], vec![1.0], vec![0.0]).unwrap();
        let out = best_of_k_with_rejection(&d, 1, &fb).unwrap();
        assert!((out.probabilities()[0] - (0.3 + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn rejection_errors() {
        let d = dist(&[1.0], &[f64::NEG_INFINITY]);
        let fb = DiscreteDistribution::new(vec![0], vec![1.0], vec![0.0]).unwrap();
        assert!(matches!(best_of_k_with_rejection(&d, 2, &fb), Err(Error::TotalRejection)));
        let d = dist(&[0.5, 0.5], &[1.0, f64::NEG_INFINITY]);
        assert!(best_of_k_density(&d, 2).is_err());
        let bad_fb = DiscreteDistribution::new(vec![1], vec![1.0], vec![0.0]).unwrap();
        assert!(best_of_k_with_rejection(&d, 2, &bad_fb).is_err());
    }

    #[test]
    fn without_rejections_matches_plain_theorem() {
        let d = dist(&[0.1, 0.6, 0.3], &[0.5, -1.0, 2.0]);
        let fb = DiscreteDistribution::new(vec![0], vec![1.0], vec![0.0]).unwrap();
        assert_eq!(
            best_of_k_with_rejection(&d, 3, &fb).unwrap(),
            best_of_k_density(&d, 3).unwrap()
        );
    }

    #[test]
    fn invalid_inputs() {
        assert!(DiscreteDistribution::new(vec![0, 1], vec![0.5, 0.6], vec![0.0, 0.0]).is_err());
        assert!(DiscreteDistribution::new(vec![0, 0], vec![0.5, 0.5], vec![0.0, 0.0]).is_err());
        assert!(DiscreteDistribution::new(vec![0], vec![1.0], vec![f64::NAN]).is_err());
        assert!(best_of_k_density(&dist(&[1.0], &[0.0]), 0).is_err());
    }

    #[test]
    fn stable_difference_matches_direct_form() {
        let (a, b): (f64, f64) = (0.75, 0.75 - 1e-10);
        let gap = a - b;
        let expanded = gap * (a.powi(4) + a.powi(3) * b + a * a * b * b + a * b.powi(3) + b.powi(4));
        assert!((power_difference(a, b, 5) - expanded).abs() < 1e-24);
        assert!((power_difference(a, b, 5) - (a.powi(5) - b.powi(5))).abs() < 1e-15);
    }

    #[test]
    fn large_n_does_not_underflow() {
        let d = dist(&[0.999, 0.001], &[0.0, 1.0]);
        let out = best_of_k_density(&d, 100_000).unwrap();
        let s: f64 = out.probabilities().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(out.probabilities()[1] > 0.99);
    }

    #[test]
    fn map_wrapper_matches_distribution() {
        let g = crate::grid::Geometry::new(2, 2, 1).unwrap();
        let cand = PriorityMap::from_weights(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let gains = [4.0, 3.0, f64::NEG_INFINITY, 1.0];
        let fb = PriorityMap::uniform(g);
        let map = best_of_k_map(&cand, &gains, 3, Some(&fb)).unwrap();
        let d = DiscreteDistribution::from_weights(cand.values(), gains.to_vec()).unwrap();
        let fbd = DiscreteDistribution::new(vec![0, 1, 3], vec![1.0 / 3.0; 3], vec![0.0; 3]).unwrap();
        let oracle = enumerate(&d, 3, Some(&fbd));
        for (a, b) in map.values().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<i32>, u32)> {
        (1usize..=6).prop_flat_map(|m| {
            (
                prop::collection::vec(0.0f64..1.0, m),
                prop::collection::vec(-2i32..3, m),
                1u32..=4,
            )
        })
    }

    proptest! {
        #[test]
        fn matches_enumeration((w, g, n) in instance()) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let gains: Vec<f64> = g.iter().map(|&v| v as f64).collect();
            let d = DiscreteDistribution::from_weights(&w, gains).unwrap();
            let out = best_of_k_density(&d, n).unwrap();
            let oracle = enumerate(&d, n, None);
            for (a, b) in out.probabilities().iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
            prop_assert!((out.probabilities().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn relabeling_gains_is_invisible((w, g, n) in instance()) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let gains: Vec<f64> = g.iter().map(|&v| v as f64).collect();
            let warped: Vec<f64> = gains.iter().map(|v| (v * 0.7).exp() * 3.0 - 11.0).collect();
            let a = best_of_k_density(&DiscreteDistribution::from_weights(&w, gains).unwrap(), n).unwrap();
            let b = best_of_k_density(&DiscreteDistribution::from_weights(&w, warped).unwrap(), n).unwrap();
            prop_assert_eq!(a.probabilities(), b.probabilities());
        }

        #[test]
        fn mass_concentrates_on_top_class((w, g, _n) in instance()) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let gains: Vec<f64> = g.iter().map(|&v| v as f64).collect();
            let d = DiscreteDistribution::from_weights(&w, gains.clone()).unwrap();
            let top = gains
                .iter()
                .zip(d.probabilities())
                .filter(|(_, p)| **p > 0.0)
                .map(|(g, _)| *g)
                .fold(f64::NEG_INFINITY, f64::max);
            let top_mass = |n: u32| -> f64 {
                let out = best_of_k_density(&d, n).unwrap();
                out.probabilities().iter().zip(&gains).filter(|(_, g)| **g == top).map(|(p, _)| p).sum()
            };
            let mut prev = top_mass(1);
            for n in [2, 3, 5, 10, 50, 400] {
                let m = top_mass(n);
                prop_assert!(m >= prev - 1e-12);
                prev = m;
            }
            prop_assert!(top_mass(100_000) > 1.0 - 1e-9);
        }

        #[test]
        fn rejection_matches_enumeration(
            (w, g, n) in instance(),
            rejected in prop::collection::vec(any::<bool>(), 6),
        ) {
            prop_assume!(w.iter().sum::<f64>() > 1e-3);
            let gains: Vec<f64> = g
                .iter()
                .zip(&rejected)
                .map(|(&v, &r)| if r { f64::NEG_INFINITY } else { v as f64 })
                .collect();
            let d = DiscreteDistribution::from_weights(&w, gains.clone()).unwrap();
            let valid: Vec<usize> = (0..w.len()).filter(|&k| gains[k].is_finite()).collect();
            prop_assume!(!valid.is_empty() && valid.iter().any(|&k| d.probabilities()[k] > 0.0));
            let fb = DiscreteDistribution::new(
                valid.clone(),
                vec![1.0 / valid.len() as f64; valid.len()],
                vec![0.0; valid.len()],
            )
            .unwrap();
            let out = best_of_k_with_rejection(&d, n, &fb).unwrap();
            let oracle = enumerate(&d, n, Some(&fb));
            for (a, b) in out.probabilities().iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }
}
