use super::{parabolic_points, GroupModel, ParabolicPoint};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SeparationReport {
    pub ok: bool,
    pub pairs_checked: usize,
    /// worst pair (indices) and its ratio d(p,q)^2 / (h_p h_q); separation needs ratio > 1
    pub worst: Option<(usize, usize, f64)>,
    /// factor by which t0 should grow for the worst pair to separate
    pub suggested_t0_factor: Option<f64>,
}

/// Checks d(p, q) > sqrt(h_p h_q) for all pairs of points in the same chart.
pub fn check_separation(points: &[ParabolicPoint]) -> SeparationReport {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| {
        (points[a].chart, points[a].p.get(0)).partial_cmp(&(points[b].chart, points[b].p.get(0))).unwrap()
    });
    let hmax = points.iter().map(|p| p.height).fold(0.0, f64::max);
    let mut worst: Option<(usize, usize, f64)> = None;
    let mut checked = 0;
    for (a, &i) in idx.iter().enumerate() {
        let pi = &points[i];
        let reach = (pi.height * hmax).sqrt();
        for &j in &idx[a + 1..] {
            let pj = &points[j];
            if pj.chart != pi.chart || pj.p.get(0) - pi.p.get(0) > reach {
                break;
            }
            checked += 1;
            let ratio = (pi.p - pj.p).norm2() / (pi.height * pj.height);
            if worst.is_none_or(|w| ratio < w.2) {
                worst = Some((i.min(j), i.max(j), ratio));
            }
        }
    }
    let ok = worst.is_none_or(|w| w.2 > 1.0);
    SeparationReport {
        ok,
        pairs_checked: checked,
        worst,
        suggested_t0_factor: if ok { None } else { worst.map(|w| (1.0 / w.2.max(1e-300)).sqrt() * 1.01) },
    }
}

/// Doubles t0 until the points up to `depth` separate; returns the rescaled group.
pub fn auto_rescale_t0(g: &GroupModel, depth: usize, height_floor: f64) -> Result<(GroupModel, SeparationReport)> {
    let mut cur = g.clone();
    for _ in 0..30 {
        let pts = parabolic_points(&cur, depth, height_floor / cur.t0 * g.t0)?;
        let rep = check_separation(&pts);
        if rep.ok {
            return Ok((cur, rep));
        }
        let t0 = cur.t0 * 2.0;
        cur = cur.with_t0(t0);
    }
    Err(Error::Invalid("t0 rescaling did not separate the horoballs".into()))
}
