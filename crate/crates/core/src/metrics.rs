//! Multi-objective quality indicators: exact two-objective hypervolume,
//! the dominance-aware distances GD+ and IGD+, and the
//! evaluations-to-success summary.
//!
//! All point sets are taken in maximization orientation, the way the
//! evaluation targets produce them.

use crate::error::{Error, Result};

/// A set of objective vectors under one label.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontSet {
    pub points: Vec<Vec<f64>>,
    pub label: String,
}

impl FrontSet {
    pub fn new(points: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        if let Some(first) = points.first() {
            let dim = first.len();
            for p in &points {
                if p.len() != dim {
                    return Err(Error::invalid("front points must share one dimension"));
                }
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("front points must be finite"));
                }
            }
        }
        Ok(Self { points, label: label.into() })
    }

    pub fn dimension(&self) -> Option<usize> {
        self.points.first().map(Vec::len)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// The anti-optimal corner a hypervolume is measured against.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePoint {
    pub coordinates: Vec<f64>,
}

impl ReferencePoint {
    pub fn new(coordinates: Vec<f64>) -> Self {
        Self { coordinates }
    }
}

/// Exact area dominated by a two-objective front relative to `reference`.
///
/// Every point must weakly dominate the reference. The sweep walks the
/// points by descending first objective, adding each strip that rises
/// above the best second objective seen so far; dominated points
/// contribute nothing.
pub fn hypervolume_2d(front: &FrontSet, reference: &ReferencePoint) -> Result<f64> {
    if reference.coordinates.len() != 2 {
        return Err(Error::UnsupportedDimension { expected: 2, got: reference.coordinates.len() });
    }
    if let Some(dim) = front.dimension() {
        if dim != 2 {
            return Err(Error::UnsupportedDimension { expected: 2, got: dim });
        }
    }
    let (rx, ry) = (reference.coordinates[0], reference.coordinates[1]);
    for p in &front.points {
        if p[0] < rx || p[1] < ry {
            return Err(Error::invalid(format!(
                "point ({}, {}) does not weakly dominate the reference ({rx}, {ry})",
                p[0], p[1]
            )));
        }
    }
    let mut pts: Vec<(f64, f64)> = front.points.iter().map(|p| (p[0], p[1])).collect();
    pts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(b.1.partial_cmp(&a.1).unwrap()));
    let mut area = 0.0;
    let mut best_y = ry;
    for (x, y) in pts {
        if y > best_y {
            area += (x - rx) * (y - best_y);
            best_y = y;
        }
    }
    Ok(area)
}

/// Componentwise shortfall of `x` against `z` under maximization,
/// Euclidean-combined.
fn dominance_distance(x: &[f64], z: &[f64]) -> f64 {
    x.iter()
        .zip(z)
        .map(|(&xv, &zv)| (zv - xv).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn check_dims(x: &FrontSet, z: &FrontSet) -> Result<()> {
    if let (Some(dx), Some(dz)) = (x.dimension(), z.dimension()) {
        if dx != dz {
            return Err(Error::invalid(format!("front dimensions disagree: {dx} vs {dz}")));
        }
    }
    Ok(())
}

/// Average dominance-aware distance from each solution to its nearest
/// reference point: `(1/|X|) * sqrt(sum_i d_i^2)`.
pub fn gd_plus(x: &FrontSet, z: &FrontSet) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("solution set must be nonempty"));
    }
    if z.is_empty() {
        return Err(Error::invalid("reference set must be nonempty"));
    }
    check_dims(x, z)?;
    let sum_sq: f64 = x
        .points
        .iter()
        .map(|p| {
            z.points
                .iter()
                .map(|r| dominance_distance(p, r))
                .fold(f64::INFINITY, f64::min)
                .powi(2)
        })
        .sum();
    Ok(sum_sq.sqrt() / x.points.len() as f64)
}

/// Mirror of [`gd_plus`]: averages over the reference set, measuring each
/// reference point's shortfall against its nearest solution.
pub fn igd_plus(x: &FrontSet, z: &FrontSet) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::invalid("solution set must be nonempty"));
    }
    if z.is_empty() {
        return Err(Error::invalid("reference set must be nonempty"));
    }
    check_dims(x, z)?;
    let sum_sq: f64 = z
        .points
        .iter()
        .map(|r| {
            x.points
                .iter()
                .map(|p| dominance_distance(p, r))
                .fold(f64::INFINITY, f64::min)
                .powi(2)
        })
        .sum();
    Ok(sum_sq.sqrt() / z.points.len() as f64)
}

/// First generation whose hypervolume reaches `success_fraction` of the
/// target, or `None` if the series never gets there.
pub fn aes(hv_series: &[f64], target_hv: f64, success_fraction: f64) -> Result<Option<usize>> {
    if hv_series.is_empty() {
        return Err(Error::invalid("hypervolume series must be nonempty"));
    }
    if !(success_fraction > 0.0 && success_fraction <= 1.0) {
        return Err(Error::invalid(format!(
            "success fraction must lie in (0, 1], got {success_fraction}"
        )));
    }
    let threshold = success_fraction * target_hv;
    Ok(hv_series.iter().position(|&hv| hv >= threshold))
}
