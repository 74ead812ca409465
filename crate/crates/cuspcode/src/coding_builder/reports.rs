use super::branch::{sup_deriv, BranchFamily, BranchSystem};
use crate::boundary_geometry::{ChartBox, MobiusMap, Vect};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Partial sums of sum_j |g_j'|_sup^{delta - eps}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TailReport {
    pub exponent: f64,
    /// explicit terms, largest first
    pub terms: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// closed-form remainder of the rays past the explicit members
    pub closure: f64,
    pub total: f64,
    /// sum of the last tenth of the explicit terms
    pub last_block_increment: f64,
}

pub fn tail_report(sys: &BranchSystem, delta: f64, eps: f64, floor: f64) -> Result<TailReport> {
    let sigma = delta - eps;
    if !(sigma > 0.0) {
        return Err(Error::Invalid(format!("exponent delta - eps = {sigma} must be positive")));
    }
    let exp = sys.expand(floor)?;
    let mut terms: Vec<f64> = exp.members.iter().map(|m| m.sup.powf(sigma)).collect();
    terms.extend(exp.dropped.iter().map(|(_, s)| s.powf(sigma)));
    terms.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let partial_sums: Vec<f64> = terms
        .iter()
        .map(|t| {
            acc += t;
            acc
        })
        .collect();
    let closure: f64 = exp.tails.iter().map(|t| sys.tail_sup_sum(t, sigma)).sum();
    let block = (terms.len() / 10).max(1).min(terms.len());
    let last_block_increment = terms[terms.len() - block..].iter().sum();
    Ok(TailReport { exponent: sigma, total: acc + closure, terms, partial_sums, closure, last_block_increment })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContractionReport {
    pub lambda_max: f64,
    pub worst_branch: String,
    /// max over branches of 2 / d(pole, target domain)
    pub c1_max: f64,
    /// max of |D log|g'|| over sample points of the target domains
    pub c1_sampled: f64,
    pub branches: usize,
}

/// Largest sup derivative and log-derivative bound over the explicit branches and the first
/// member of every ray tail.
pub fn contraction_distortion_report(sys: &BranchSystem, floor: f64) -> Result<ContractionReport> {
    let (lambda_max, worst_branch, c1_max, c1_sampled, branches) = contraction_data(sys, floor)?;
    if lambda_max >= 1.0 {
        return Err(Error::Contraction { branch: worst_branch, sup: lambda_max });
    }
    Ok(ContractionReport { lambda_max, worst_branch, c1_max, c1_sampled, branches })
}

fn pole_bound(map: &MobiusMap, dom: &ChartBox) -> f64 {
    match map {
        MobiusMap::Inversive { p_inv, .. } => {
            let d = dom.dist(p_inv);
            if d > 0.0 {
                2.0 / d
            } else {
                f64::INFINITY
            }
        }
        MobiusMap::Affine { .. } => 0.0,
    }
}

fn sampled_log_deriv(map: &MobiusMap, dom: &ChartBox) -> f64 {
    let d = dom.dim();
    let pts = if d == 1 {
        let mut v = dom.grid(32);
        v.extend(dom.corners());
        v.push(dom.point(&[1.0], &Vect::zeros(1)));
        v
    } else {
        let mut v = dom.grid(8);
        v.extend(dom.corners());
        v
    };
    let mut best: f64 = 0.0;
    for x in pts {
        for i in 0..d {
            if let Ok(g) = map.grad_log_deriv(&x, &Vect::unit(d, i)) {
                best = best.max(g.abs());
            }
        }
        if let MobiusMap::Inversive { p_inv, .. } = map {
            let r = x - *p_inv;
            best = best.max(2.0 / r.norm());
        }
    }
    best
}

type ContractionData = (f64, String, f64, f64, usize);

fn contraction_data(sys: &BranchSystem, floor: f64) -> Result<ContractionData> {
    let exp = sys.expand(floor)?;
    let mut lam: f64 = 0.0;
    let mut worst = String::new();
    let mut c1: f64 = 0.0;
    let mut c1s: f64 = 0.0;
    let mut count = 0;
    let mut visit = |name: String, map: MobiusMap, dom: &ChartBox| {
        let s = sup_deriv(&map, dom);
        if s > lam || worst.is_empty() {
            lam = lam.max(s);
            worst = name;
        }
        c1 = c1.max(pole_bound(&map, dom));
        c1s = c1s.max(sampled_log_deriv(&map, dom));
        count += 1;
    };
    for m in &exp.members {
        let f = &sys.families[m.family];
        visit(f.member_name(m.n), m.map, &sys.domains[f.target()]);
    }
    for (fi, _) in &exp.dropped {
        let f = &sys.families[*fi];
        if let BranchFamily::Single { map, .. } = f {
            visit(f.name().to_string(), *map, &sys.domains[f.target()]);
        }
    }
    for t in &exp.tails {
        let f = &sys.families[t.family];
        visit(f.member_name(t.n_start), f.member(t.n_start), &sys.domains[f.target()]);
    }
    Ok((lam, worst, c1, c1s, count))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniParams {
    /// composition length of the branches searched
    #[serde(default = "one")]
    pub n0: usize,
    /// base points per axis
    #[serde(default = "default_base")]
    pub base_points: usize,
    /// radius of the ball around each base point; whole domain when absent
    #[serde(default)]
    pub radius: Option<f64>,
    /// sample points per axis inside each ball
    #[serde(default = "default_ball")]
    pub ball_points: usize,
    #[serde(default = "default_dirs")]
    pub directions: usize,
    /// only the largest branches of H_{n0} enter the pair search
    #[serde(default = "default_max_branches")]
    pub max_branches: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default = "default_eps_floor")]
    pub epsilon_floor: f64,
}

fn one() -> usize {
    1
}
fn default_base() -> usize {
    8
}
fn default_ball() -> usize {
    33
}
fn default_dirs() -> usize {
    8
}
fn default_max_branches() -> usize {
    12
}
fn default_floor() -> f64 {
    1e-8
}
fn default_eps_floor() -> f64 {
    1e-9
}

impl Default for UniParams {
    fn default() -> Self {
        UniParams {
            n0: 1,
            base_points: default_base(),
            radius: None,
            ball_points: default_ball(),
            directions: default_dirs(),
            max_branches: default_max_branches(),
            floor: default_floor(),
            epsilon_floor: default_eps_floor(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniPair {
    pub first: String,
    pub second: String,
    pub direction: Vect,
    pub epsilon: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UniCertificate {
    pub n0: usize,
    /// best pair at each base point
    pub pairs: Vec<UniPair>,
    pub epsilon0: f64,
    pub radius: f64,
    pub lambda: f64,
    pub c1: f64,
    /// C1 / (1 - lambda); infinite when lambda >= 1
    pub c2_bound: f64,
    /// largest |D tau| seen on the pair branches
    pub dtau_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum UniOutcome {
    Certified(UniCertificate),
    Failure { reason: String, best_epsilon: f64 },
}

impl UniOutcome {
    pub fn certificate(&self) -> Option<&UniCertificate> {
        match self {
            UniOutcome::Certified(c) => Some(c),
            UniOutcome::Failure { .. } => None,
        }
    }
}

struct Composite {
    name: String,
    map: MobiusMap,
    sup: f64,
}

/// n0-fold compositions of the branches on a single-chart system, largest first.
fn compositions(sys: &BranchSystem, n0: usize, floor: f64, keep: usize) -> Result<Vec<Composite>> {
    let exp = sys.expand(floor)?;
    let dom = &sys.domains[0];
    let mut base: Vec<Composite> = exp
        .members
        .iter()
        .map(|m| Composite { name: sys.families[m.family].member_name(m.n), map: m.map, sup: m.sup })
        .collect();
    base.sort_by(|a, b| b.sup.total_cmp(&a.sup));
    base.truncate(keep.max(2));
    let mut cur: Vec<Composite> = vec![Composite { name: String::new(), map: MobiusMap::identity(sys.dim), sup: 1.0 }];
    for _ in 0..n0 {
        let mut next = vec![];
        for c in &cur {
            for b in &base {
                let map = c.map.compose_unchecked(&b.map);
                let sup = sup_deriv(&map, dom);
                let name = if c.name.is_empty() { b.name.clone() } else { format!("{}.{}", c.name, b.name) };
                next.push(Composite { name, map, sup });
            }
        }
        next.sort_by(|a, b| b.sup.total_cmp(&a.sup));
        next.truncate(keep.max(2));
        cur = next;
    }
    Ok(cur)
}

// D_e(tau_1 - tau_2)(y) with tau = -log|g'|
fn dtau_diff(p1: &Vect, p2: &Vect, y: &Vect, e: &Vect) -> f64 {
    let a = *y - *p1;
    let b = *y - *p2;
    2.0 * (a.scale(1.0 / a.norm2()) - b.scale(1.0 / b.norm2())).dot(e)
}

fn directions(d: usize, n: usize) -> Vec<Vect> {
    match d {
        1 => vec![Vect::new1(1.0)],
        2 => (0..n.max(1))
            .map(|k| {
                let t = std::f64::consts::PI * k as f64 / n.max(1) as f64;
                Vect::new2(t.cos(), t.sin())
            })
            .collect(),
        _ => (0..d).map(|i| Vect::unit(d, i)).collect(),
    }
}

fn ball_samples(dom: &ChartBox, x: &Vect, r: f64, m: usize) -> Vec<Vect> {
    let d = dom.dim();
    let mut out = vec![];
    if d == 1 {
        let lo = dom.origin.get(0);
        let hi = lo + dom.lattice[0].get(0);
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let a = (x.get(0) - r).max(lo);
        let b = (x.get(0) + r).min(hi);
        for i in 0..m.max(2) {
            let t = i as f64 / (m.max(2) - 1) as f64;
            out.push(Vect::new1(a + t * (b - a)));
        }
        return out;
    }
    let side = (m as f64).sqrt().ceil() as usize;
    let grid = dom.grid(side.max(2));
    out.extend(grid.into_iter().filter(|y| y.dist(x) <= r));
    out.extend(dom.corners().into_iter().filter(|y| y.dist(x) <= r));
    out.push(*x);
    out
}

/// Searches pairs of branches in H_{n0} whose roof difference has a directional derivative
/// bounded away from zero on balls around sampled base points.
pub fn uni_search(sys: &BranchSystem, params: &UniParams) -> Result<UniOutcome> {
    if !sys.is_single_chart() {
        return Err(Error::Invalid("uni_search needs a single-chart system (induce first)".into()));
    }
    let dom = &sys.domains[0];
    let comps = compositions(sys, params.n0.max(1), params.floor, params.max_branches)?;
    let fail = |reason: &str, best: f64| Ok(UniOutcome::Failure { reason: reason.to_string(), best_epsilon: best });
    if comps.len() < 2 {
        return fail("fewer than two branches in H_n0", 0.0);
    }
    let poles: Vec<Option<Vect>> = comps
        .iter()
        .map(|c| match c.map {
            MobiusMap::Inversive { p_inv, .. } => Some(p_inv),
            MobiusMap::Affine { .. } => None,
        })
        .collect();
    let radius = params.radius.unwrap_or(2.0 * dom.radius());
    let dirs = directions(sys.dim, params.directions);
    let bases = if sys.dim == 1 {
        let mut v = dom.grid(params.base_points.max(1));
        v.push(dom.origin);
        v
    } else {
        dom.grid(params.base_points.max(1))
    };
    let mut eps0 = f64::INFINITY;
    let mut pairs = vec![];
    let mut dtau_max: f64 = 0.0;
    for x in &bases {
        let ys = ball_samples(dom, x, radius, params.ball_points);
        let mut best = UniPair { first: String::new(), second: String::new(), direction: dirs[0], epsilon: 0.0 };
        for i in 0..comps.len() {
            let Some(p1) = poles[i] else { continue };
            for j in i + 1..comps.len() {
                let Some(p2) = poles[j] else { continue };
                for e in &dirs {
                    let m = ys.iter().map(|y| dtau_diff(&p1, &p2, y, e).abs()).fold(f64::INFINITY, f64::min);
                    if m > best.epsilon {
                        best = UniPair { first: comps[i].name.clone(), second: comps[j].name.clone(), direction: *e, epsilon: m };
                    }
                }
            }
        }
        if best.epsilon > 0.0 {
            for name in [&best.first, &best.second] {
                if let Some(c) = comps.iter().find(|c| &c.name == name) {
                    dtau_max = dtau_max.max(sampled_log_deriv(&c.map, dom));
                }
            }
        }
        eps0 = eps0.min(best.epsilon);
        pairs.push(best);
    }
    if !(eps0 > params.epsilon_floor) {
        return fail("no pair clears the epsilon floor at every base point", eps0);
    }
    let (lambda, _, c1, _, _) = contraction_data(sys, params.floor)?;
    let c2 = if lambda < 1.0 { c1 / (1.0 - lambda) } else { f64::INFINITY };
    Ok(UniOutcome::Certified(UniCertificate {
        n0: params.n0,
        pairs,
        epsilon0: eps0,
        radius,
        lambda,
        c1,
        c2_bound: c2,
        dtau_max,
    }))
}
