use super::branch::{sup_deriv, BranchFamily, BranchSystem, RayTail};
use super::flower::{build_flower, Flower};
use super::CodingParams;
use crate::boundary_geometry::Vect;
use crate::error::{Error, Result};
use crate::group_model::{parabolic_points_query, GroupModel, ParabolicPoint, ParabolicQuery};
use crate::spectral_engine::{DiscreteMeasure, MeasureSource};
use crate::stats::line_fit;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One coded cell: the image of a target chart domain (or a ray of them) under a branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub family: BranchFamily,
    /// index of the flower in `removed_flowers`
    pub flower: usize,
    /// mu-hat mass of the cell (all members of a ray)
    pub mass: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CodingState {
    pub generation: usize,
    pub removed_flowers: Vec<Flower>,
    pub cells: Vec<Cell>,
    /// mu-hat(Omega_n) / mu-hat(Delta_0) after each generation
    pub residual_measure_series: Vec<f64>,
    /// removed mass of tiles too small to keep as explicit branches
    pub truncated_mass: f64,
    // flower indices sorted by the lower end of their first-coordinate span
    #[serde(skip)]
    by_span: Vec<(f64, usize)>,
    #[serde(skip)]
    max_width: f64,
}

/// Everything the coding procedure needs besides the state.
pub struct CodingContext<'a> {
    pub group: &'a GroupModel,
    pub params: &'a CodingParams,
    pub base_chart: usize,
    /// candidates of this chart, sorted by generation
    pub candidates: Vec<(usize, ParabolicPoint)>,
    pub measures: &'a [DiscreteMeasure],
    pub base_mass: f64,
}

/// Generation of a parabolic point: the n with eta h_p in (e^{-n}, e^{-n+1}].
pub fn generation_of(eta: f64, height: f64) -> usize {
    let v = -(eta * height).ln();
    (v.floor() as i64 + 1).max(1) as usize
}

impl CodingState {
    pub fn new() -> Self {
        CodingState::default()
    }

    /// Distance from x to the boundary of Omega_n, 0 when x is outside Omega_n.
    pub fn dist_to_residual_boundary(&self, x: &Vect, base: &crate::boundary_geometry::ChartBox, cap: f64) -> f64 {
        let mut best = base.dist_to_boundary(x);
        if !base.contains(x) {
            return 0.0;
        }
        let x0 = x.get(0);
        let reach = cap.min(best);
        let lo = x0 - reach - self.max_width;
        let start = self.by_span.partition_point(|(l, _)| *l < lo);
        for &(l, i) in &self.by_span[start..] {
            if l > x0 + reach {
                break;
            }
            let f = &self.removed_flowers[i];
            best = best.min(f.region.dist(x));
            if best == 0.0 {
                break;
            }
        }
        best
    }

    fn push_flower(&mut self, f: Flower) -> usize {
        let (l, h) = f.region.span0();
        self.max_width = self.max_width.max(h - l);
        self.removed_flowers.push(f);
        let i = self.removed_flowers.len() - 1;
        let at = self.by_span.partition_point(|(x, _)| *x < l);
        self.by_span.insert(at, (l, i));
        i
    }

    fn rebuild_index(&mut self) {
        self.by_span = self.removed_flowers.iter().enumerate().map(|(i, f)| (f.region.span0().0, i)).collect();
        self.by_span.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.max_width = self.removed_flowers.iter().map(|f| f.region.span0().1 - f.region.span0().0).fold(0.0, f64::max);
    }
}

/// mu-hat mass of the union of the cells of a family, by quadrature against the target measure.
pub fn family_mass(sys: &BranchSystem, fi: usize, target: &DiscreteMeasure, delta: f64) -> f64 {
    let f = &sys.families[fi];
    match f {
        BranchFamily::Single { map, .. } => target
            .points
            .iter()
            .zip(&target.masses)
            .map(|(y, m)| m * map.deriv_vec(y).map_or(0.0, |d| d.powf(delta)))
            .sum(),
        BranchFamily::Ray { n0, .. } => {
            let tail = RayTail { family: fi, n_start: *n0 };
            let s = Complex64::new(delta, 0.0);
            if 2.0 * delta > 1.0 + 1e-12 {
                target
                    .points
                    .iter()
                    .zip(&target.masses)
                    .map(|(y, m)| m * sys.tail_eval(&tail, y, s).map_or(0.0, |t| t.weight.re))
                    .sum()
            } else {
                // divergent closed form: sum members directly until they are negligible
                let mut total = 0.0;
                let mut n = *n0;
                loop {
                    let g = f.member(n);
                    let term: f64 = target
                        .points
                        .iter()
                        .zip(&target.masses)
                        .map(|(y, m)| m * g.deriv_vec(y).map_or(0.0, |d| d.powf(delta)))
                        .sum();
                    total += term;
                    n += 1;
                    if term < 1e-14 * total || n - n0 > 100_000 {
                        break;
                    }
                }
                total
            }
        }
    }
}

/// One generation: accepts the good points of the next generation and removes their flowers.
pub fn coding_step(mut state: CodingState, ctx: &CodingContext) -> Result<CodingState> {
    let p = ctx.params;
    let g = ctx.group;
    let n = state.generation;
    let next = n + 1;
    let base = &g.cusps[ctx.base_chart].domain;
    let hn = (-(n as f64)).exp();
    let gap = hn / (4.0 * p.eta);
    let start = ctx.candidates.partition_point(|(gen, _)| *gen < next);
    let end = ctx.candidates.partition_point(|(gen, _)| *gen <= next);
    let mut accepted = vec![];
    for (_, pt) in &ctx.candidates[start..end] {
        let r = p.eta * pt.height;
        let need = r.max(gap);
        let d = state.dist_to_residual_boundary(&pt.p, base, need * 1.0001);
        if d >= r && d > gap {
            accepted.push(pt);
        }
    }
    let built: Vec<Result<Flower>> = accepted
        .par_iter()
        .map(|pt| build_flower(pt, p.eta, g.t0, &g.cusps[pt.cusp_index], base, next))
        .collect();
    let domains: Vec<_> = g.cusps.iter().map(|c| c.domain.clone()).collect();
    let mut new_fams = vec![];
    for f in built {
        let f = f?;
        let (fams, left) = f.families(&g.cusps[f.point.cusp_index], p.truncation_floor, p.delta_hint);
        let idx = state.push_flower(f);
        state.truncated_mass += left;
        for fam in fams {
            new_fams.push((idx, fam));
        }
    }
    let sys = BranchSystem {
        dim: g.dim,
        domains,
        families: new_fams.iter().map(|(_, f)| f.clone()).collect(),
        truncated_mass: 0.0,
    };
    let masses: Vec<f64> = (0..sys.families.len())
        .into_par_iter()
        .map(|fi| family_mass(&sys, fi, &ctx.measures[sys.families[fi].target()], p.delta_hint))
        .collect();
    for ((idx, fam), m) in new_fams.into_iter().zip(masses) {
        state.cells.push(Cell { family: fam, flower: idx, mass: m });
    }
    let found: f64 = state.cells.iter().map(|c| c.mass).sum();
    let res = (1.0 - found / ctx.base_mass).max(0.0);
    let prev = state.residual_measure_series.last().copied().unwrap_or(1.0);
    state.residual_measure_series.push(res.min(prev));
    state.generation = next;
    Ok(state)
}

/// Result of the coding procedure for one or more base charts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coding {
    pub params: CodingParams,
    pub t0: f64,
    pub charts: Vec<ChartCoding>,
    pub system: BranchSystem,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartCoding {
    pub chart: usize,
    pub state: CodingState,
    pub base_mass: f64,
    /// least-squares slope of log residual against generation
    pub slope: Option<f64>,
    /// generation where the fitted decay reaches a 0.05 residual
    pub extrapolated_generation: Option<f64>,
    pub candidates: usize,
    pub min_c4: f64,
}

impl Coding {
    pub fn residual(&self, chart: usize) -> Option<&[f64]> {
        self.charts.iter().find(|c| c.chart == chart).map(|c| c.state.residual_measure_series.as_slice())
    }

    pub fn lambda_max(&self) -> f64 {
        self.system
            .families
            .iter()
            .enumerate()
            .map(|(i, f)| self.system.member_sup(i, f.first()))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Coding> {
        let mut c: Coding = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        for ch in &mut c.charts {
            ch.state.rebuild_index();
        }
        Ok(c)
    }
}

/// Runs the coding procedure to generation N on every base chart in `params.base_charts`
/// (the coded classes by default), with cell masses from `measure`.
pub fn run_coding(group: &GroupModel, params: &CodingParams, measure: &dyn MeasureSource) -> Result<Coding> {
    params.validate()?;
    let nc = group.cusps.len();
    let classes = params.classes.clone().unwrap_or_else(|| (0..nc).collect());
    let bases = params.base_charts.clone().unwrap_or_else(|| classes.clone());
    for &c in classes.iter().chain(&bases) {
        if c >= nc {
            return Err(Error::Invalid(format!("no cusp chart {c}")));
        }
    }
    // target measures compressed for quadrature
    let mut measures = vec![];
    let mut totals = vec![];
    for (i, c) in group.cusps.iter().enumerate() {
        let used = classes.contains(&i) || bases.contains(&i);
        if used {
            let m = measure.chart_measure(i)?;
            totals.push(m.total());
            measures.push(m.compress(&c.domain, params.quadrature_bins)?);
        } else {
            totals.push(0.0);
            measures.push(DiscreteMeasure { dim: group.dim, points: vec![], masses: vec![] });
        }
    }
    let floor = (-((params.max_generation + 1) as f64)).exp() / params.eta;
    let mut charts = vec![];
    let mut families = vec![];
    for &b in &bases {
        let pts = parabolic_points_query(
            group,
            &ParabolicQuery {
                max_depth: params.max_depth,
                height_floor: floor,
                charts: Some(vec![b]),
                classes: Some(classes.clone()),
            },
        )?;
        let mut candidates: Vec<(usize, ParabolicPoint)> = pts
            .into_iter()
            .filter(|p| p.height > floor)
            .map(|p| (generation_of(params.eta, p.height), p))
            .collect();
        candidates.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.height.total_cmp(&a.1.height)));
        let ncand = candidates.len();
        log::info!("chart {b}: {ncand} parabolic candidates above height {floor:.3e}");
        let base_mass = totals[b];
        if !(base_mass > 0.0) {
            return Err(Error::Invalid(format!("measure of chart {b} domain is zero")));
        }
        let ctx = CodingContext { group, params, base_chart: b, candidates, measures: &measures, base_mass };
        let mut state = CodingState::new();
        for _ in 0..params.max_generation {
            state = coding_step(state, &ctx)?;
            log::debug!(
                "chart {b} generation {}: {} flowers, residual {:.6}",
                state.generation,
                state.removed_flowers.len(),
                state.residual_measure_series.last().unwrap()
            );
        }
        let (slope, ext) = decay_fit(&state.residual_measure_series);
        let min_c4 = state.removed_flowers.iter().map(|f| f.c4).fold(f64::INFINITY, f64::min);
        families.extend(state.cells.iter().map(|c| c.family.clone()));
        charts.push(ChartCoding { chart: b, state, base_mass, slope, extrapolated_generation: ext, candidates: ncand, min_c4 });
    }
    let truncated: f64 = charts.iter().map(|c| c.state.truncated_mass).sum();
    let system = BranchSystem {
        dim: group.dim,
        domains: group.cusps.iter().map(|c| c.domain.clone()).collect(),
        families,
        truncated_mass: truncated,
    };
    system.validate()?;
    Ok(Coding { params: params.clone(), t0: group.t0, charts, system })
}

/// Slope of log residual over the generations where it is positive and below 1, and the
/// generation where the fitted line reaches 0.05.
pub fn decay_fit(series: &[f64]) -> (Option<f64>, Option<f64>) {
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .iter()
        .enumerate()
        .filter(|(_, r)| **r > 0.0 && **r < 1.0)
        .map(|(i, r)| ((i + 1) as f64, r.ln()))
        .unzip();
    let Some(fit) = line_fit(&x, &y) else { return (None, None) };
    let last = *series.last().unwrap();
    let ext = (fit.slope < 0.0 && last > 0.0).then(|| series.len() as f64 + (0.05 / last).ln() / fit.slope);
    (Some(fit.slope), ext.map(|e| e.max(series.len() as f64)))
}

/// First flower invariant to break at each eta of a ladder.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EtaCheck {
    pub eta: f64,
    pub flowers: usize,
    pub lambda_max: f64,
    pub min_c4: f64,
    /// None when every check passes
    pub first_failure: Option<String>,
}

pub fn eta_diagnostic(group: &GroupModel, params: &CodingParams, etas: &[f64], measure: &dyn MeasureSource) -> Vec<EtaCheck> {
    etas.iter()
        .map(|&eta| {
            let mut p = params.clone();
            p.eta = eta;
            match run_coding(group, &p, measure) {
                Err(e) => EtaCheck { eta, flowers: 0, lambda_max: f64::NAN, min_c4: f64::NAN, first_failure: Some(e.to_string()) },
                Ok(c) => {
                    let lam = c.lambda_max();
                    let flowers = c.charts.iter().map(|x| x.state.removed_flowers.len()).sum();
                    let min_c4 = c.charts.iter().map(|x| x.min_c4).fold(f64::INFINITY, f64::min);
                    let failure = if lam > 4.0 * eta * eta {
                        Some(format!("lambda_max {lam:.4e} exceeds 4 eta^2"))
                    } else if separation_ratio(&c, group) <= 1.0 {
                        Some("flower gaps below h_n/(2 eta)".to_string())
                    } else {
                        None
                    };
                    EtaCheck { eta, flowers, lambda_max: lam, min_c4, first_failure: failure }
                }
            }
        })
        .collect()
}

/// Smallest ratio of the distance between two removed flowers (or a flower and the domain
/// boundary) to h_n/(2 eta), n the later generation. Above 1 means the gaps hold.
pub fn separation_ratio(c: &Coding, group: &GroupModel) -> f64 {
    let mut worst = f64::INFINITY;
    for ch in &c.charts {
        let fl = &ch.state.removed_flowers;
        let base = &group.cusps[ch.chart].domain;
        let gap = |n: usize| (-(n as f64)).exp() / (2.0 * c.params.eta);
        for i in 0..fl.len() {
            let (ci, ri) = outer_ball(&fl[i]);
            let db = (base.dist_to_boundary(&ci) - ri).max(0.0);
            worst = worst.min(db / gap(fl[i].generation));
            for j in i + 1..fl.len() {
                let n = fl[i].generation.max(fl[j].generation);
                worst = worst.min(flower_distance(&fl[i], &fl[j]) / gap(n));
            }
        }
    }
    worst
}

/// Lower bound for the distance between two flower regions.
pub fn flower_distance(a: &Flower, b: &Flower) -> f64 {
    use super::flower::FlowerRegion::*;
    match (&a.region, &b.region) {
        (Interval { lo: l1, hi: h1 }, Interval { lo: l2, hi: h2 }) => (l2 - h1).max(l1 - h2).max(0.0),
        _ => {
            let (ca, ra) = outer_ball(a);
            let (cb, rb) = outer_ball(b);
            (ca.dist(&cb) - ra - rb).max(0.0)
        }
    }
}

fn outer_ball(f: &Flower) -> (Vect, f64) {
    match f.region {
        super::flower::FlowerRegion::Interval { lo, hi } => (Vect::new1(0.5 * (lo + hi)), 0.5 * (hi - lo)),
        super::flower::FlowerRegion::Balls { center, outer, .. } => (center, outer),
    }
}

/// Largest sup derivative among the branches of a system (members of rays from n0 on).
pub fn system_lambda(sys: &BranchSystem) -> f64 {
    sys.families
        .iter()
        .enumerate()
        .map(|(i, f)| match f {
            BranchFamily::Single { map, .. } => sup_deriv(map, &sys.domains[f.target()]),
            BranchFamily::Ray { n0, .. } => {
                // sup over the ray: scan until the members start shrinking
                let mut best: f64 = 0.0;
                let mut prev = f64::INFINITY;
                for k in 0..10_000 {
                    let s = sys.member_sup(i, n0 + k);
                    best = best.max(s);
                    if s < prev && k > 2 && s < best * 0.5 {
                        break;
                    }
                    prev = s;
                }
                best
            }
        })
        .fold(0.0, f64::max)
}
