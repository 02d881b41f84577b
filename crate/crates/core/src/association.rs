//! Patch-to-patch data association.
//!
//! A pair `(i, j)` is admissible when the centers are closer than `tau_c`,
//! the normals agree (`n_i · n_j > tau_n`) and the patches are more than
//! `tau_t` seconds apart. Among admissible partners the one with the smallest
//! absolute projective distance `(c_i - c_j)ᵀ(n_i + n_j)` wins.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scan_pipeline::PlanarPatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssociationConfig {
    /// Maximum center distance, m.
    pub tau_c: f64,
    /// Minimum cosine between normals.
    pub tau_n: f64,
    /// Minimum time separation, s.
    pub tau_t: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        AssociationConfig {
            tau_c: 0.5,
            tau_n: 0.9,
            tau_t: 0.05,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_c > 0.0 && self.tau_c.is_finite()) {
            return Err(Error::invalid(format!("tau_c must be positive, got {}", self.tau_c)));
        }
        if !(self.tau_t > 0.0 && self.tau_t.is_finite()) {
            return Err(Error::invalid(format!("tau_t must be positive, got {}", self.tau_t)));
        }
        if !(self.tau_n > -1.0 && self.tau_n < 1.0) {
            return Err(Error::invalid(format!("tau_n must lie in (-1, 1), got {}", self.tau_n)));
        }
        Ok(())
    }

    /// True when `a` and `b` pass all three gates.
    pub fn admits(&self, a: &PlanarPatch, b: &PlanarPatch) -> bool {
        (a.center - b.center).norm() < self.tau_c
            && a.normal.dot(&b.normal) > self.tau_n
            && (a.timestamp - b.timestamp).abs() > self.tau_t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub i: usize,
    pub j: usize,
    /// Signed projective distance at association time, m.
    pub proj_dist: f64,
}

pub fn projective_distance(a: &PlanarPatch, b: &PlanarPatch) -> f64 {
    (a.center - b.center).dot(&(a.normal + b.normal))
}

/// Uniform hash grid over patch centers.
struct CenterGrid {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl CenterGrid {
    fn new(patches: &[PlanarPatch], cell: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (k, p) in patches.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(k);
        }
        CenterGrid { cell, cells }
    }

    fn key(p: &PlanarPatch, cell: f64) -> (i64, i64) {
        (
            (p.center.x / cell).floor() as i64,
            (p.center.y / cell).floor() as i64,
        )
    }

    fn neighbours<'a>(&'a self, p: &PlanarPatch) -> impl Iterator<Item = usize> + 'a {
        let (cx, cy) = Self::key(p, self.cell);
        (-1..=1)
            .flat_map(move |dx| (-1..=1).map(move |dy| (cx + dx, cy + dy)))
            .filter_map(move |k| self.cells.get(&k))
            .flatten()
            .copied()
    }
}

pub fn find_correspondences(
    patches: &[PlanarPatch],
    cfg: &AssociationConfig,
) -> Vec<Correspondence> {
    if patches.is_empty() {
        return Vec::new();
    }
    let grid = CenterGrid::new(patches, cfg.tau_c);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, a) in patches.iter().enumerate() {
        let best = grid
            .neighbours(a)
            .filter(|&j| j != i && cfg.admits(a, &patches[j]))
            .map(|j| (projective_distance(a, &patches[j]), j))
            .min_by(|x, y| x.0.abs().total_cmp(&y.0.abs()).then(x.1.cmp(&y.1)));
        if let Some((proj_dist, j)) = best {
            if seen.insert((i.min(j), i.max(j))) {
                out.push(Correspondence { i, j, proj_dist });
            }
        }
    }
    out
}
