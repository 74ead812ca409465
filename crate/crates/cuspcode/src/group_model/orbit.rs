use super::enumerate::walk;
use super::GroupModel;
use crate::boundary_geometry::{hyperbolic_distance, HalfSpacePoint};
use crate::error::Result;
use crate::stats::{line_fit, LineFit};
use serde::{Deserialize, Serialize};

/// Distances d(x, gamma y) <= radius, found by a word search that abandons a word once its
/// orbit point lies beyond radius + slack.
pub fn orbit_distances(
    g: &GroupModel,
    radius: f64,
    x: &HalfSpacePoint,
    y: &HalfSpacePoint,
    slack: f64,
    max_depth: usize,
) -> Result<Vec<f64>> {
    let mut out = vec![];
    walk(g, max_depth, |_, m| {
        let d = hyperbolic_distance(x, &m.apply_half(y));
        if d <= radius {
            out.push(d);
        }
        Ok(d <= radius + slack)
    })?;
    Ok(out)
}

/// Number of orbit points gamma y within distance T of x.
pub fn orbit_count(g: &GroupModel, t: f64, x: &HalfSpacePoint, y: &HalfSpacePoint) -> Result<usize> {
    Ok(orbit_distances(g, t, x, y, g.slack(), usize::MAX)?.len())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitCount {
    pub radii: Vec<f64>,
    pub counts: Vec<usize>,
    /// slope of log N against T
    pub fit: Option<LineFit>,
}

/// Counts over a ladder of radii from a single search at the largest radius.
pub fn growth_fit(g: &GroupModel, ladder: &[f64], x: &HalfSpacePoint, y: &HalfSpacePoint) -> Result<OrbitCount> {
    let tmax = ladder.iter().cloned().fold(0.0, f64::max);
    let mut d = orbit_distances(g, tmax, x, y, g.slack(), usize::MAX)?;
    d.sort_by(|a, b| a.total_cmp(b));
    let counts: Vec<usize> = ladder.iter().map(|t| d.partition_point(|v| v <= t)).collect();
    let lx: Vec<f64> = ladder.to_vec();
    let ly: Vec<f64> = counts.iter().map(|&c| (c.max(1) as f64).ln()).collect();
    Ok(OrbitCount { radii: ladder.to_vec(), counts, fit: line_fit(&lx, &ly) })
}
