use crate::boundary_geometry::{hyperbolic_distance, ChartBox, HalfSpacePoint, MobiusMap, Vect};
use crate::coding_builder::image_ball;
use crate::error::{Error, Result};
use crate::group_model::{GroupModel, Word};
use crate::registry::Registry;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Finitely supported measure on the boundary, in one chart's coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub dim: usize,
    pub points: Vec<Vect>,
    pub masses: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(points: Vec<Vect>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() {
            return Err(Error::Invalid("points and masses differ in length".into()));
        }
        if points.is_empty() {
            return Err(Error::Invalid("empty measure".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(Error::Invalid("masses must be finite and nonnegative".into()));
        }
        Ok(DiscreteMeasure { dim: points[0].dim(), points, masses })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn normalized(&self) -> Self {
        let t = self.total();
        let mut m = self.clone();
        if t > 0.0 {
            m.masses.iter_mut().for_each(|x| *x /= t);
        }
        m
    }

    pub fn scaled(&self, k: f64) -> Self {
        let mut m = self.clone();
        m.masses.iter_mut().for_each(|x| *x *= k);
        m
    }

    pub fn ball_mass(&self, c: &Vect, r: f64) -> f64 {
        self.points.iter().zip(&self.masses).filter(|(p, _)| p.dist(c) <= r).map(|(_, m)| m).sum()
    }

    pub fn ball_count(&self, c: &Vect, r: f64) -> usize {
        self.points.iter().filter(|p| p.dist(c) <= r).count()
    }

    pub fn integrate(&self, f: impl Fn(&Vect) -> f64) -> f64 {
        self.points.iter().zip(&self.masses).map(|(p, m)| m * f(p)).sum()
    }

    /// Keeps the part inside the closed region.
    pub fn restrict(&self, region: &ChartBox) -> Result<Self> {
        let (p, m): (Vec<_>, Vec<_>) = self
            .points
            .iter()
            .zip(&self.masses)
            .filter(|(p, _)| region.contains_eps(p, 1e-12))
            .map(|(p, m)| (*p, *m))
            .unzip();
        DiscreteMeasure::new(p, m)
    }

    /// Moves every point into the region by a lattice translation (masses unchanged).
    pub fn reduce_into(&self, region: &ChartBox) -> Result<Self> {
        let (p, m): (Vec<_>, Vec<_>) = self
            .points
            .iter()
            .zip(&self.masses)
            .filter_map(|(p, m)| {
                let (r, _) = region.reduce(p);
                region.contains_eps(&r, 1e-12).then_some((r, *m))
            })
            .unzip();
        DiscreteMeasure::new(p, m)
    }

    /// Push-forward with the conformal Jacobian |g'|^delta.
    pub fn transport(&self, g: &MobiusMap, delta: f64) -> Self {
        let mut pts = vec![];
        let mut ms = vec![];
        for (p, m) in self.points.iter().zip(&self.masses) {
            if let (Some(q), Some(d)) = (g.apply_vec(p), g.deriv_vec(p)) {
                pts.push(q);
                ms.push(m * d.powf(delta));
            }
        }
        DiscreteMeasure { dim: self.dim, points: pts, masses: ms }
    }

    /// Lumps the measure into about `bins` cells of the region, each at its centre of mass.
    pub fn compress(&self, region: &ChartBox, bins: usize) -> Result<Self> {
        let d = region.dim();
        let per = ((bins as f64).powf(1.0 / d as f64).ceil() as usize).max(1);
        let k = region.rank();
        let ybasis = region.orthogonal_basis();
        let yr = region.y_radius.max(1e-300);
        let mut mass = std::collections::BTreeMap::<Vec<usize>, (f64, Vect)>::new();
        for (p, m) in self.points.iter().zip(&self.masses) {
            if *m == 0.0 {
                continue;
            }
            let (t, y) = region.coords(p);
            let mut key = Vec::with_capacity(d);
            for tj in t.iter().take(k) {
                key.push(((tj.clamp(0.0, 1.0 - 1e-15)) * per as f64) as usize);
            }
            for b in &ybasis {
                let c = (b.dot(&y) / yr).clamp(-1.0, 1.0 - 1e-15);
                key.push((((c + 1.0) / 2.0) * per as f64) as usize);
            }
            let e = mass.entry(key).or_insert((0.0, Vect::zeros(d)));
            e.0 += m;
            e.1 += p.scale(*m);
        }
        let (pts, ms): (Vec<_>, Vec<_>) = mass.into_values().map(|(m, s)| (s.scale(1.0 / m), m)).unzip();
        DiscreteMeasure::new(pts, ms)
    }
}

/// Conformal measure seen in each chart's coordinates, restricted to that chart's domain.
pub trait MeasureSource: Send + Sync {
    fn name(&self) -> &'static str;
    fn chart_measure(&self, chart: usize) -> Result<DiscreteMeasure>;
}

/// Everything a measure source may draw on.
#[derive(Clone)]
pub struct SourceArgs {
    pub group: Option<Arc<GroupModel>>,
    pub domains: Vec<ChartBox>,
    pub delta: f64,
    /// left-eigenvector masses in chart-0 coordinates
    pub eigen: Option<DiscreteMeasure>,
    pub params: toml::Table,
}

pub fn measure_sources() -> Registry<dyn MeasureSource, SourceArgs> {
    let mut r: Registry<dyn MeasureSource, SourceArgs> = Registry::new("measure source");
    r.register("eigenvector", |a| Ok(Box::new(EigenvectorSource::new(a)?)))
        .register("patterson-shell", |a| Ok(Box::new(PattersonShell::new(a)?)))
        .register("lebesgue", |a| Ok(Box::new(Lebesgue::new(a)?)));
    r
}

/// Left eigenvector of the discretized operator, moved into other charts by the chart maps.
pub struct EigenvectorSource {
    base: DiscreteMeasure,
    domains: Vec<ChartBox>,
    group: Option<Arc<GroupModel>>,
    delta: f64,
}

impl EigenvectorSource {
    pub fn new(a: &SourceArgs) -> Result<Self> {
        let base = a.eigen.clone().ok_or_else(|| Error::Invalid("eigenvector source needs a spectral report".into()))?;
        Ok(EigenvectorSource { base, domains: a.domains.clone(), group: a.group.clone(), delta: a.delta })
    }
}

impl MeasureSource for EigenvectorSource {
    fn name(&self) -> &'static str {
        "eigenvector"
    }

    fn chart_measure(&self, chart: usize) -> Result<DiscreteMeasure> {
        let dom0 = &self.domains[0];
        if chart == 0 {
            return self.base.reduce_into(dom0);
        }
        let g = self.group.as_ref().ok_or_else(|| Error::Invalid("chart transport needs a group".into()))?;
        let c = g.cusps.get(chart).ok_or_else(|| Error::Invalid(format!("no chart {chart}")))?;
        if !g.cusps[0].chart.is_affine() {
            return Err(Error::Invalid("chart 0 must fix infinity".into()));
        }
        let to0 = g.cusps[0].chart;
        let dom = &self.domains[chart];
        // region of chart-0 coordinates that lands in the chart domain
        let back = to0.compose_unchecked(&c.chart.inverse());
        let (bc, br) = image_ball(&back, dom)
            .ok_or_else(|| Error::Invalid(format!("chart {chart} domain surrounds the image of infinity")))?;
        let reduced = self.base.reduce_into(dom0)?;
        let k = dom0.rank();
        let d = dom0.dim();
        let (t, _) = dom0.coords(&bc);
        let mut ranges = vec![];
        for j in 0..k {
            // |dual_j| from the images of the unit vectors
            let dn = (0..d)
                .map(|i| dom0.coords(&(dom0.origin + Vect::unit(d, i))).0[j].powi(2))
                .sum::<f64>()
                .sqrt();
            ranges.push(((t[j] - br * dn).floor() as i64 - 1, (t[j] + br * dn).ceil() as i64));
        }
        let fwd = c.chart.compose_unchecked(&to0.inverse());
        let mut pts = vec![];
        let mut ms = vec![];
        let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        loop {
            let shift = dom0.translation(&idx);
            for (p, m) in reduced.points.iter().zip(&reduced.masses) {
                let x = *p + shift;
                if let (Some(y), Some(dv)) = (fwd.apply_vec(&x), fwd.deriv_vec(&x)) {
                    if dom.contains_eps(&y, 1e-12) {
                        pts.push(y);
                        ms.push(m * dv.powf(self.delta));
                    }
                }
            }
            let mut j = 0;
            loop {
                if j == k {
                    return DiscreteMeasure::new(pts, ms);
                }
                idx[j] += 1;
                if idx[j] <= ranges[j].1 {
                    break;
                }
                idx[j] = ranges[j].0;
                j += 1;
            }
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShellParams {
    radius: f64,
    #[serde(default = "default_width")]
    width: f64,
}

fn default_width() -> f64 {
    1.0
}

/// Orbit points in a distance shell about o, each weighted by height^delta.
pub struct PattersonShell {
    group: Arc<GroupModel>,
    domains: Vec<ChartBox>,
    delta: f64,
    points: Vec<(Word, HalfSpacePoint)>,
}

impl PattersonShell {
    pub fn new(a: &SourceArgs) -> Result<Self> {
        let p: ShellParams = a.params.clone().try_into().map_err(|e| Error::Parse(format!("patterson-shell: {e}")))?;
        if !(p.width > 0.0 && p.radius > p.width) {
            return Err(Error::Invalid("patterson-shell needs 0 < width < radius".into()));
        }
        let g = a.group.clone().ok_or_else(|| Error::Invalid("patterson-shell needs a group".into()))?;
        let o = HalfSpacePoint::origin(g.dim);
        let mut points = vec![];
        crate::group_model::walk(&g, usize::MAX, |w, m| {
            let q = m.apply_half(&o);
            let d = hyperbolic_distance(&o, &q);
            if d > p.radius - p.width && d <= p.radius {
                points.push((w.clone(), q));
            }
            Ok(d <= p.radius + g.slack())
        })?;
        Ok(PattersonShell { group: g, domains: a.domains.clone(), delta: a.delta, points })
    }
}

impl MeasureSource for PattersonShell {
    fn name(&self) -> &'static str {
        "patterson-shell"
    }

    fn chart_measure(&self, chart: usize) -> Result<DiscreteMeasure> {
        let c = self.group.cusps.get(chart).ok_or_else(|| Error::Invalid(format!("no chart {chart}")))?;
        let dom = &self.domains[chart];
        let mut pts = vec![];
        let mut ms = vec![];
        for (_, q) in &self.points {
            let z = c.chart.apply_half(q);
            if dom.contains_eps(&z.base, 1e-12) {
                pts.push(z.base);
                ms.push(z.height.powf(self.delta));
            }
        }
        DiscreteMeasure::new(pts, ms)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LebesgueParams {
    #[serde(default = "default_per_axis")]
    per_axis: usize,
}

fn default_per_axis() -> usize {
    512
}

/// Lebesgue measure on each domain: the conformal measure of a lattice with delta = d.
pub struct Lebesgue {
    domains: Vec<ChartBox>,
    per_axis: usize,
}

impl Lebesgue {
    pub fn new(a: &SourceArgs) -> Result<Self> {
        let p: LebesgueParams = a.params.clone().try_into().map_err(|e| Error::Parse(format!("lebesgue: {e}")))?;
        Ok(Lebesgue { domains: a.domains.clone(), per_axis: p.per_axis.max(1) })
    }
}

impl MeasureSource for Lebesgue {
    fn name(&self) -> &'static str {
        "lebesgue"
    }

    fn chart_measure(&self, chart: usize) -> Result<DiscreteMeasure> {
        let dom = self.domains.get(chart).ok_or_else(|| Error::Invalid(format!("no chart {chart}")))?;
        let pts = dom.grid(self.per_axis);
        let m = dom.volume() / pts.len() as f64;
        let n = pts.len();
        DiscreteMeasure::new(pts, vec![m; n])
    }
}
