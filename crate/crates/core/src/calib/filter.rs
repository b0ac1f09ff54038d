//! Radius / min-neighbor density clustering used to drop tracking glitches.
//!
//! A point is a core point when at least `min_neighbors` other points lie
//! within `neighborhood_radius`. Core points closer than the radius are
//! chained into one cluster, and non-core points within the radius of a core
//! point join the first cluster that reaches them. Only the largest cluster
//! survives; ties go to the cluster discovered first in input order.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::CalibError;
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Meters for tip points; chord length for unit axis vectors.
    pub neighborhood_radius: f64,
    pub min_neighbors: usize,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            neighborhood_radius: 0.005,
            min_neighbors: 10,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), CalibError> {
        if !(self.neighborhood_radius > 0.0 && self.neighborhood_radius.is_finite()) {
            return Err(CalibError::InvalidParams(format!(
                "neighborhood_radius must be positive, got {}",
                self.neighborhood_radius
            )));
        }
        if self.min_neighbors < 1 {
            return Err(CalibError::InvalidParams("min_neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterOutcome {
    /// Indices into the input, ascending.
    pub kept: Vec<usize>,
    pub removed: usize,
}

pub fn filter_outliers(points: &[Vec3], params: &FilterParams) -> Result<FilterOutcome, CalibError> {
    params.validate()?;
    if points.is_empty() {
        return Err(CalibError::InvalidDataset("no points to filter".into()));
    }
    let grid = Grid::new(points, params.neighborhood_radius);
    let core: Vec<bool> = (0..points.len())
        .map(|i| {
            let mut count = 0;
            grid.visit(i, |_| {
                count += 1;
                count < params.min_neighbors
            });
            count >= params.min_neighbors
        })
        .collect();

    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut sizes: Vec<usize> = Vec::new();
    let mut queue = VecDeque::new();
    for seed in 0..points.len() {
        if !core[seed] || label[seed].is_some() {
            continue;
        }
        let id = sizes.len();
        sizes.push(1);
        label[seed] = Some(id);
        queue.push_back(seed);
        while let Some(q) = queue.pop_front() {
            grid.visit(q, |nb| {
                if label[nb].is_none() {
                    label[nb] = Some(id);
                    sizes[id] += 1;
                    if core[nb] {
                        queue.push_back(nb);
                    }
                }
                true
            });
        }
    }

    let best = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (id, &size)| match acc {
            Some((_, s)) if s >= size => acc,
            _ => Some((id, size)),
        });
    let (best_id, best_size) = best.unwrap_or((usize::MAX, 0));
    if best_size < params.min_neighbors {
        return Err(CalibError::AllOutliers {
            largest: best_size,
            min_neighbors: params.min_neighbors,
        });
    }
    let kept: Vec<usize> = (0..points.len()).filter(|&i| label[i] == Some(best_id)).collect();
    Ok(FilterOutcome {
        removed: points.len() - kept.len(),
        kept,
    })
}

type Cell = (i64, i64, i64);

/// Uniform grid with cells one radius wide.
struct Grid<'a> {
    points: &'a [Vec3],
    radius: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl<'a> Grid<'a> {
    fn new(points: &'a [Vec3], radius: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell(p, radius)).or_default().push(i);
        }
        Self { points, radius, cells }
    }

    fn cell(p: &Vec3, radius: f64) -> Cell {
        let c = |v: f64| (v / radius).floor() as i64;
        (c(p.x), c(p.y), c(p.z))
    }

    /// Calls `f` on each neighbor of `i` within the radius, self excluded,
    /// until it returns `false`.
    fn visit(&self, i: usize, mut f: impl FnMut(usize) -> bool) {
        let p = &self.points[i];
        let (cx, cy, cz) = Self::cell(p, self.radius);
        let r2 = self.radius * self.radius;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(members) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) else {
                        continue;
                    };
                    for &j in members {
                        if j != i && (self.points[j] - p).norm_squared() <= r2 && !f(j) {
                            return;
                        }
                    }
                }
            }
        }
    }
}
