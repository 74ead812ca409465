use super::enumerate::walk;
use super::{GroupModel, Word};
use crate::boundary_geometry::{hyperbolic_distance, HalfSpacePoint, MobiusMap, Vect};
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Parabolic fixed point p = gamma p_l seen in the coordinates of chart i.
///
/// `map` is M = g_i gamma g_l^{-1} normalized so that its pole x_p = M^{-1}(inf) lies in the
/// domain of chart l (top representation) and p lies in the domain of chart i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParabolicPoint {
    pub p: Vect,
    pub height: f64,
    pub rank: usize,
    pub word: Word,
    pub cusp_index: usize,
    pub chart: usize,
    pub map: MobiusMap,
    pub x_p: Vect,
}

#[derive(Clone, Debug)]
pub struct ParabolicQuery {
    pub max_depth: usize,
    pub height_floor: f64,
    /// charts in whose coordinates points are reported; None = all
    pub charts: Option<Vec<usize>>,
    /// cusp classes to report; None = all
    pub classes: Option<Vec<usize>>,
}

pub fn parabolic_points(g: &GroupModel, depth: usize, height_floor: f64) -> Result<Vec<ParabolicPoint>> {
    parabolic_points_query(
        g,
        &ParabolicQuery { max_depth: depth, height_floor, charts: None, classes: None },
    )
}

fn chart_offset(g: &GroupModel, i: usize) -> f64 {
    let o = HalfSpacePoint::origin(g.dim);
    hyperbolic_distance(&o, &g.cusps[i].chart.apply_half(&o))
}

/// Orbit radius that contains a top representation of every point above the floor.
fn search_radius(g: &GroupModel, charts: &[usize], classes: &[usize], floor: f64) -> f64 {
    let zero = Vect::zeros(g.dim);
    let mut t: f64 = 0.0;
    for &i in charts {
        let ri = g.cusps[i].domain.max_dist(&zero);
        let hm = floor * g.t0;
        let reach = (1.0 + (ri * ri + 1.0) / (2.0 * hm)).acosh();
        for &l in classes {
            let rl = g.cusps[l].domain.max_dist(&zero);
            let top = 2.0 * (rl / 2.0).asinh();
            t = t.max(chart_offset(g, i) + chart_offset(g, l) + reach + top);
        }
    }
    t
}

/// Parabolic points with height >= floor and word length <= max_depth, one per point,
/// each with a top representation.
pub fn parabolic_points_query(g: &GroupModel, q: &ParabolicQuery) -> Result<Vec<ParabolicPoint>> {
    if g.cusps.is_empty() {
        return Err(Error::Invalid("group has no cusp charts".into()));
    }
    if !(q.height_floor > 0.0) {
        return Err(Error::Invalid("height floor must be positive".into()));
    }
    let all: Vec<usize> = (0..g.cusps.len()).collect();
    let charts = q.charts.clone().unwrap_or_else(|| all.clone());
    let classes = q.classes.clone().unwrap_or(all);
    let radius = search_radius(g, &charts, &classes, q.height_floor);
    let prune = radius + g.slack();
    let o = HalfSpacePoint::origin(g.dim);
    let chart_inv: Vec<MobiusMap> = g.cusps.iter().map(|c| c.chart.inverse()).collect();
    let mut found: HashMap<(usize, usize, Vec<i64>), ParabolicPoint> = HashMap::new();
    let mut order: Vec<(usize, usize, Vec<i64>)> = vec![];
    walk(g, q.max_depth, |w, gamma| {
        let d = hyperbolic_distance(&o, &gamma.apply_half(&o));
        if d > prune {
            return Ok(false);
        }
        for &i in &charts {
            for &l in &classes {
                let m = g.cusps[i].chart.compose_unchecked(gamma).compose_unchecked(&chart_inv[l]);
                let MobiusMap::Inversive { p_inv, .. } = m else { continue };
                let cl = &g.cusps[l];
                let (_, n) = cl.domain.reduce(&p_inv);
                let k = cl.rank();
                let m = m.compose_unchecked(&MobiusMap::translation(cl.domain.translation(&n[..k])));
                let word = w.concat(&cl.lattice_word(&n[..k]));
                let MobiusMap::Inversive { p, h, .. } = m else { continue };
                let ci = &g.cusps[i];
                let (pr, mi) = ci.domain.reduce(&p);
                if !ci.domain.contains(&pr) {
                    continue;
                }
                let ki = ci.rank();
                let shift = ci.domain.translation(&mi[..ki]);
                let m = MobiusMap::translation(-shift).compose_unchecked(&m);
                let word = ci.lattice_word(&mi[..ki]).inverse().concat(&word);
                let height = h / g.t0;
                if height < q.height_floor * (1.0 - 1e-12) {
                    continue;
                }
                let MobiusMap::Inversive { p, p_inv, .. } = m else { continue };
                let key = (i, l, p.as_slice().iter().map(|x| (x * 1e9).round() as i64).collect::<Vec<_>>());
                let entry = ParabolicPoint {
                    p,
                    height,
                    rank: cl.rank(),
                    word,
                    cusp_index: l,
                    chart: i,
                    map: m,
                    x_p: p_inv,
                };
                match found.get_mut(&key) {
                    Some(old) => {
                        if entry.word.len() < old.word.len() {
                            *old = entry;
                        }
                    }
                    None => {
                        order.push(key.clone());
                        found.insert(key, entry);
                    }
                }
            }
        }
        Ok(true)
    })?;
    let mut out: Vec<ParabolicPoint> = order.into_iter().map(|k| found.remove(&k).unwrap()).collect();
    out.sort_by(|a, b| {
        (a.chart, a.cusp_index)
            .cmp(&(b.chart, b.cusp_index))
            .then(b.height.total_cmp(&a.height))
            .then(a.p.as_slice().partial_cmp(b.p.as_slice()).unwrap_or(std::cmp::Ordering::Equal))
    });
    Ok(out)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RangeReport {
    pub min: f64,
    pub max: f64,
    pub samples: usize,
}

impl RangeReport {
    fn from_iter(it: impl Iterator<Item = f64>) -> RangeReport {
        let mut r = RangeReport { min: f64::INFINITY, max: 0.0, samples: 0 };
        for v in it {
            r.min = r.min.min(v);
            r.max = r.max.max(v);
            r.samples += 1;
        }
        r
    }
}

/// Ratio of the height of a point seen through chart i to its height in chart 0 coordinates.
pub fn height_ratio_report(g: &GroupModel, points: &[ParabolicPoint], chart: usize) -> RangeReport {
    let base_inv = g.cusps[0].chart.inverse();
    let gi = g.cusps[chart].chart;
    RangeReport::from_iter(points.iter().filter(|p| p.chart == 0).filter_map(|pt| {
        // M in base coordinates -> g_i g_0^{-1} M
        let m = gi.compose_unchecked(&base_inv).compose_unchecked(&pt.map);
        match m {
            MobiusMap::Inversive { h, .. } => Some(h / g.t0 / pt.height),
            MobiusMap::Affine { .. } => None,
        }
    }))
}

/// Distance distortion of g_i^{-1} on sampled pairs of the domain of chart i.
pub fn chart_bilipschitz<R: Rng + ?Sized>(g: &GroupModel, chart: usize, samples: usize, rng: &mut R) -> RangeReport {
    let c = &g.cusps[chart];
    let inv = c.chart.inverse();
    RangeReport::from_iter((0..samples).filter_map(|_| {
        let x = c.domain.sample(rng);
        let y = c.domain.sample(rng);
        let d = x.dist(&y);
        let (gx, gy) = (inv.apply_vec(&x)?, inv.apply_vec(&y)?);
        (d > 0.0).then(|| gx.dist(&gy) / d)
    }))
}
