//! Scan regularization and planar patch construction.
//!
//! Endpoints are thinned so that consecutive survivors are at least
//! `min_gap` apart, and chains are broken wherever two survivors are more
//! than `max_gap` apart. Each remaining consecutive pair yields one patch:
//! midpoint center, chord normal rotated 90° clockwise, mean timestamp.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion_model::Point2;

/// What to do with the endpoints on either side of a gap wider than `max_gap`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Keep both endpoints, forbid a patch across the gap.
    #[default]
    Break,
    /// Additionally discard the endpoint that closes the chain before the gap.
    DropBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularizationConfig {
    pub min_gap: f64,
    pub max_gap: f64,
    #[serde(default)]
    pub gap_policy: GapPolicy,
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig {
            min_gap: 0.15,
            max_gap: 0.4,
            gap_policy: GapPolicy::Break,
        }
    }
}

impl RegularizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_gap > 0.0 && self.min_gap < self.max_gap && self.max_gap.is_finite()) {
            return Err(Error::invalid(format!(
                "regularization requires 0 < min_gap < max_gap, got {} / {}",
                self.min_gap, self.max_gap
            )));
        }
        Ok(())
    }
}

/// Indices of retained endpoints. `breaks[k]` is true when no patch may join
/// `retained[k - 1]` and `retained[k]`; `breaks[0]` is always false.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Regularized {
    pub retained: Vec<usize>,
    pub breaks: Vec<bool>,
}

impl Regularized {
    pub fn is_empty(&self) -> bool {
        self.retained.is_empty()
    }

    /// Consecutive retained pairs that may form a patch.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.retained.len())
            .filter(|&k| !self.breaks[k])
            .map(|k| (self.retained[k - 1], self.retained[k]))
    }
}

/// Greedy forward thinning of endpoints in acquisition order.
pub fn regularize(endpoints: &[Point2], cfg: &RegularizationConfig) -> Regularized {
    let mut out = Regularized::default();
    if endpoints.len() < 2 {
        return out;
    }
    out.retained.push(0);
    out.breaks.push(false);
    let mut last = endpoints[0];
    for (i, p) in endpoints.iter().enumerate().skip(1) {
        let gap = (p - last).norm();
        if gap < cfg.min_gap {
            continue;
        }
        let is_break = gap > cfg.max_gap;
        if is_break && cfg.gap_policy == GapPolicy::DropBoth {
            // the previous survivor loses its forward neighbour; drop it unless
            // it is the only point of its chain
            let k = out.retained.len() - 1;
            if k > 0 && !out.breaks[k] {
                out.retained.pop();
                out.breaks.pop();
            }
        }
        out.retained.push(i);
        out.breaks.push(is_break);
        last = *p;
    }
    if out.retained.len() < 2 {
        return Regularized::default();
    }
    out
}

/// Local surface element built from two endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPatch {
    pub center: Point2,
    pub normal: Point2,
    pub timestamp: f64,
    /// Measurement indices `(i, i + k)` the patch was built from.
    pub src: (usize, usize),
}

/// Rotates a chord 90° clockwise.
pub(crate) fn chord_normal_matrix() -> Matrix2<f64> {
    Matrix2::new(0.0, 1.0, -1.0, 0.0)
}

const MIN_CHORD: f64 = 1e-12;

impl PlanarPatch {
    /// Patch from two endpoints; `None` for a degenerate chord.
    pub fn from_endpoints(
        first: &Point2,
        second: &Point2,
        t_first: f64,
        t_second: f64,
        src: (usize, usize),
    ) -> Option<PlanarPatch> {
        let chord = second - first;
        let len = chord.norm();
        if len < MIN_CHORD {
            return None;
        }
        Some(PlanarPatch {
            center: 0.5 * (first + second),
            normal: chord_normal_matrix() * chord / len,
            timestamp: 0.5 * (t_first + t_second),
            src,
        })
    }
}

pub fn build_patches(
    endpoints: &[Point2],
    timestamps: &[f64],
    regularized: &Regularized,
) -> Result<Vec<PlanarPatch>> {
    if endpoints.len() != timestamps.len() {
        return Err(Error::invalid(format!(
            "{} endpoints but {} timestamps",
            endpoints.len(),
            timestamps.len()
        )));
    }
    Ok(regularized
        .pairs()
        .filter_map(|(i, j)| {
            PlanarPatch::from_endpoints(&endpoints[i], &endpoints[j], timestamps[i], timestamps[j], (i, j))
        })
        .collect())
}
