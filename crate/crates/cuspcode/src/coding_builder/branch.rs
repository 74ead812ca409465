use crate::boundary_geometry::{ChartBox, Mat, MobiusMap, Vect};
use crate::error::{Error, Result};
use crate::group_model::Word;
use crate::special::lattice_ray_sum;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Group words labelling the members of a ray: member n is prefix step^n suffix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RayWords {
    pub prefix: Word,
    pub step: Word,
    pub suffix: Word,
}

/// A set of inverse branches. Each branch maps the target chart domain into the source chart domain.
///
/// A `Ray` is the infinite family n -> P tau^{n step} Q for n >= n0, where tau is translation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BranchFamily {
    Single {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        word: Option<Word>,
        map: MobiusMap,
        source: usize,
        target: usize,
    },
    Ray {
        name: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        words: Option<RayWords>,
        p: MobiusMap,
        step: Vect,
        q: MobiusMap,
        n0: i64,
        source: usize,
        target: usize,
    },
}

impl BranchFamily {
    pub fn single(name: impl Into<String>, map: MobiusMap) -> Self {
        BranchFamily::Single { name: name.into(), word: None, map, source: 0, target: 0 }
    }

    pub fn ray(name: impl Into<String>, p: MobiusMap, step: Vect, q: MobiusMap, n0: i64) -> Self {
        BranchFamily::Ray { name: name.into(), words: None, p, step, q, n0, source: 0, target: 0 }
    }

    pub fn name(&self) -> &str {
        match self {
            BranchFamily::Single { name, .. } | BranchFamily::Ray { name, .. } => name,
        }
    }

    pub fn source(&self) -> usize {
        match self {
            BranchFamily::Single { source, .. } | BranchFamily::Ray { source, .. } => *source,
        }
    }

    pub fn target(&self) -> usize {
        match self {
            BranchFamily::Single { target, .. } | BranchFamily::Ray { target, .. } => *target,
        }
    }

    pub fn is_ray(&self) -> bool {
        matches!(self, BranchFamily::Ray { .. })
    }

    /// First member index (0 for singles).
    pub fn first(&self) -> i64 {
        match self {
            BranchFamily::Single { .. } => 0,
            BranchFamily::Ray { n0, .. } => *n0,
        }
    }

    pub fn member(&self, n: i64) -> MobiusMap {
        match self {
            BranchFamily::Single { map, .. } => *map,
            BranchFamily::Ray { p, step, q, .. } => p
                .compose_unchecked(&MobiusMap::translation(step.scale(n as f64)))
                .compose_unchecked(q),
        }
    }

    pub fn member_word(&self, n: i64) -> Option<Word> {
        match self {
            BranchFamily::Single { word, .. } => word.clone(),
            BranchFamily::Ray { words, .. } => words
                .as_ref()
                .map(|w| w.prefix.concat(&w.step.pow(n)).concat(&w.suffix)),
        }
    }

    pub fn member_name(&self, n: i64) -> String {
        match self {
            BranchFamily::Single { name, .. } => name.clone(),
            BranchFamily::Ray { name, .. } => format!("{name}[{n}]"),
        }
    }

    pub fn with_charts(mut self, src: usize, tgt: usize) -> Self {
        match &mut self {
            BranchFamily::Single { source, target, .. } | BranchFamily::Ray { source, target, .. } => {
                *source = src;
                *target = tgt;
            }
        }
        self
    }
}

/// Sup of |g'| over a region: h / d(pole, region)^2, or the scale of an affine map.
pub fn sup_deriv(map: &MobiusMap, region: &ChartBox) -> f64 {
    match map {
        MobiusMap::Inversive { p_inv, h, .. } => {
            let d = region.dist(p_inv);
            if d <= 0.0 {
                f64::INFINITY
            } else {
                h / (d * d)
            }
        }
        MobiusMap::Affine { scale, .. } => *scale,
    }
}

/// Ball containing g(region), when the pole stays outside the bounding ball of the region.
pub fn image_ball(map: &MobiusMap, region: &ChartBox) -> Option<(Vect, f64)> {
    let c = region.center();
    let r = region.radius();
    match map {
        MobiusMap::Inversive { p, p_inv, h, a } => {
            let u = c - *p_inv;
            let den = u.norm2() - r * r;
            if den <= 0.0 {
                return None;
            }
            Some((a.apply(&u.scale(h / den)) + *p, h * r / den))
        }
        MobiusMap::Affine { scale, a, b } => Some((a.apply(&c).scale(*scale) + *b, scale * r)),
    }
}

#[derive(Clone, Debug)]
pub struct Member {
    pub family: usize,
    pub n: i64,
    pub map: MobiusMap,
    pub sup: f64,
}

/// Remainder of a ray from `n_start` on, summed in closed form.
#[derive(Clone, Copy, Debug)]
pub struct RayTail {
    pub family: usize,
    pub n_start: i64,
}

/// Finite truncation of a branch system.
#[derive(Clone, Debug, Default)]
pub struct Expansion {
    pub members: Vec<Member>,
    pub tails: Vec<RayTail>,
    /// single branches below the floor, with their sup derivative
    pub dropped: Vec<(usize, f64)>,
}

impl Expansion {
    pub fn dropped_mass(&self, exponent: f64) -> f64 {
        self.dropped.iter().map(|(_, s)| s.powf(exponent)).sum()
    }
}

/// Weight and lumped image point of a ray tail at one point.
#[derive(Clone, Copy, Debug)]
pub struct TailEval {
    pub weight: Complex64,
    pub pos: Vect,
}

/// Countable system of inverse branches over one or more chart domains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchSystem {
    pub dim: usize,
    pub domains: Vec<ChartBox>,
    pub families: Vec<BranchFamily>,
    /// mass known to be missing from the families (reported, exponent delta_hint)
    #[serde(default)]
    pub truncated_mass: f64,
}

const MAX_RAY_MEMBERS: i64 = 2_000_000;

struct RayFrame {
    p: Vect,
    p_inv: Vect,
    h: f64,
    a: Mat,
    v: Vect,
    l2: f64,
}

impl BranchSystem {
    pub fn new(dim: usize, domains: Vec<ChartBox>, families: Vec<BranchFamily>) -> Result<Self> {
        let s = BranchSystem { dim, domains, families, truncated_mass: 0.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(Error::Invalid("branch system needs a domain".into()));
        }
        for d in &self.domains {
            if d.dim() != self.dim {
                return Err(Error::Dimension(self.dim, d.dim()));
            }
        }
        for f in &self.families {
            if f.source() >= self.domains.len() || f.target() >= self.domains.len() {
                return Err(Error::Invalid(format!("family {} refers to a missing chart", f.name())));
            }
            match f {
                BranchFamily::Single { map, .. } => {
                    if map.dim() != self.dim {
                        return Err(Error::Dimension(self.dim, map.dim()));
                    }
                }
                BranchFamily::Ray { p, step, q, .. } => {
                    if !matches!(p, MobiusMap::Inversive { .. }) {
                        return Err(Error::Invalid(format!("ray {}: P must not fix infinity", f.name())));
                    }
                    if step.dim() != self.dim || q.dim() != self.dim || p.dim() != self.dim {
                        return Err(Error::Dimension(self.dim, step.dim()));
                    }
                    if step.norm2() == 0.0 {
                        return Err(Error::Invalid(format!("ray {}: zero step", f.name())));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn base(&self) -> &ChartBox {
        &self.domains[0]
    }

    pub fn is_single_chart(&self) -> bool {
        self.families.iter().all(|f| f.source() == 0 && f.target() == 0)
    }

    pub fn member_sup(&self, family: usize, n: i64) -> f64 {
        let f = &self.families[family];
        sup_deriv(&f.member(n), &self.domains[f.target()])
    }

    fn frame(&self, family: usize) -> Option<RayFrame> {
        match &self.families[family] {
            BranchFamily::Ray { p: MobiusMap::Inversive { p, p_inv, h, a }, step, .. } => {
                Some(RayFrame { p: *p, p_inv: *p_inv, h: *h, a: *a, v: *step, l2: step.norm2() })
            }
            _ => None,
        }
    }

    /// Member index nearest to the closest approach of the ray's poles to the target domain.
    fn turning_index(&self, family: usize) -> f64 {
        let f = &self.families[family];
        let BranchFamily::Ray { q, .. } = f else { return 0.0 };
        let fr = self.frame(family).unwrap();
        match q.apply_vec(&self.domains[f.target()].center()) {
            Some(qc) => (fr.p_inv - qc).dot(&fr.v) / fr.l2,
            None => 0.0,
        }
    }

    /// Explicit members with sup |g'| >= floor; each ray keeps its remainder as a tail.
    pub fn expand(&self, floor: f64) -> Result<Expansion> {
        let mut out = Expansion::default();
        for (fi, f) in self.families.iter().enumerate() {
            match f {
                BranchFamily::Single { map, .. } => {
                    let sup = sup_deriv(map, &self.domains[f.target()]);
                    if sup >= floor {
                        out.members.push(Member { family: fi, n: 0, map: *map, sup });
                    } else {
                        out.dropped.push((fi, sup));
                    }
                }
                BranchFamily::Ray { n0, .. } => {
                    let turn = self.turning_index(fi);
                    let mut n = *n0;
                    let mut prev = f64::INFINITY;
                    loop {
                        let map = f.member(n);
                        let sup = sup_deriv(&map, &self.domains[f.target()]);
                        if sup < floor && (n as f64) > turn && sup <= prev {
                            out.tails.push(RayTail { family: fi, n_start: n });
                            break;
                        }
                        if sup >= floor {
                            out.members.push(Member { family: fi, n, map, sup });
                        } else {
                            out.dropped.push((fi, sup));
                        }
                        prev = sup;
                        n += 1;
                        if n - n0 > MAX_RAY_MEMBERS {
                            return Err(Error::Invalid(format!("ray {} does not decay below the floor", f.name())));
                        }
                    }
                }
            }
        }
        if out.members.is_empty() && out.tails.is_empty() {
            return Err(Error::Truncation);
        }
        Ok(out)
    }

    /// Closed-form sum over a ray tail of |g_n'(x)|^s, with the point where the real weights
    /// |g_n'(x)|^{Re s} put their mean. None when the sum diverges (Re 2s <= 1) or x is a pole.
    pub fn tail_eval(&self, tail: &RayTail, x: &Vect, s: Complex64) -> Option<TailEval> {
        if 2.0 * s.re <= 1.0 + 1e-12 {
            return None;
        }
        let BranchFamily::Ray { q, .. } = &self.families[tail.family] else { return None };
        let fr = self.frame(tail.family)?;
        let z = q.apply_vec(x)?;
        let dq = q.deriv_vec(x)?;
        let u = z - fr.p_inv;
        let c = u.dot(&fr.v) / fr.l2;
        let uperp = u - fr.v.scale(c);
        let e = (uperp.norm2() / fr.l2).sqrt();
        let log_pref = (fr.h * dq / fr.l2).ln();
        let weight = (s * log_pref).exp() * lattice_ray_sum(c, e, s, 0, tail.n_start);
        let a = Complex64::new(s.re, 0.0);
        let s0 = lattice_ray_sum(c, e, a, 0, tail.n_start).re;
        let s1 = lattice_ray_sum(c, e, a + 1.0, 1, tail.n_start).re;
        let s1p = if e > 0.0 { lattice_ray_sum(c, e, a + 1.0, 0, tail.n_start).re } else { 0.0 };
        let mean = (fr.v.scale(s1) + uperp.scale(s1p)).scale(1.0 / (fr.l2 * s0));
        Some(TailEval { weight, pos: fr.a.apply(&mean).scale(fr.h) + fr.p })
    }

    /// Sum over n >= n_start of sup|g_n'|^sigma, closed by comparison with the nearest corner.
    pub fn tail_sup_sum(&self, tail: &RayTail, sigma: f64) -> f64 {
        let f = &self.families[tail.family];
        let BranchFamily::Ray { q, .. } = f else { return 0.0 };
        let Some(fr) = self.frame(tail.family) else { return 0.0 };
        let dom = &self.domains[f.target()];
        // the point of Q(domain) that stays nearest to the receding poles
        let far = dom
            .corners()
            .into_iter()
            .filter_map(|y| q.apply_vec(&y))
            .min_by(|a, b| a.dot(&fr.v).total_cmp(&b.dot(&fr.v)));
        let Some(far) = far else { return f64::INFINITY };
        let u = far - fr.p_inv;
        let c = u.dot(&fr.v) / fr.l2;
        let e = ((u - fr.v.scale(c)).norm2() / fr.l2).sqrt();
        let n1 = tail.n_start as f64;
        let sup1 = self.member_sup(tail.family, tail.n_start);
        let base = ((n1 + c).powi(2) + e * e).powf(sigma);
        sup1.powf(sigma) * base * lattice_ray_sum(c, e, Complex64::new(sigma, 0.0), 0, tail.n_start).re
    }

    fn single_contains(&self, f: &BranchFamily, map: &MobiusMap, x: &Vect) -> bool {
        let dom = &self.domains[f.target()];
        if let Some((c, r)) = image_ball(map, dom) {
            if c.dist(x) > r * (1.0 + 1e-9) + 1e-12 {
                return false;
            }
        }
        map.inverse().apply_vec(x).is_some_and(|y| dom.contains(&y))
    }

    fn ray_candidates(&self, fi: usize, x: &Vect) -> Vec<(i64, MobiusMap)> {
        self.ray_scan(fi, x, false)
    }

    fn ray_scan(&self, fi: usize, x: &Vect, first: bool) -> Vec<(i64, MobiusMap)> {
        let f = &self.families[fi];
        let BranchFamily::Ray { p, q, n0, step, .. } = f else { return vec![] };
        let dom = &self.domains[f.target()];
        let Some(z) = p.inverse().apply_vec(x) else { return vec![] };
        let qi = q.inverse();
        let qc = q.apply_vec(&dom.center()).unwrap_or(z);
        let guess = ((z - qc).dot(step) / step.norm2()).round() as i64;
        let mut out = vec![];
        for n in (guess - 2).max(*n0)..=(guess + 2).max(*n0 - 1) {
            let w = z - step.scale(n as f64);
            if qi.apply_vec(&w).is_some_and(|y| dom.contains(&y)) {
                out.push((n, f.member(n)));
                if first {
                    break;
                }
            }
        }
        out
    }

    /// First branch (family, member) whose cell in chart `chart` contains x.
    pub fn lookup(&self, chart: usize, x: &Vect) -> Option<(usize, i64, MobiusMap)> {
        for (fi, f) in self.families.iter().enumerate() {
            if f.source() != chart {
                continue;
            }
            match f {
                BranchFamily::Single { map, .. } => {
                    if self.single_contains(f, map, x) {
                        return Some((fi, 0, *map));
                    }
                }
                BranchFamily::Ray { .. } => {
                    if let Some((n, m)) = self.ray_scan(fi, x, true).into_iter().next() {
                        return Some((fi, n, m));
                    }
                }
            }
        }
        None
    }

    /// All (family, member) cells in chart `chart` containing x.
    pub fn cells_containing(&self, chart: usize, x: &Vect) -> Vec<(usize, i64)> {
        let mut out = vec![];
        for (fi, f) in self.families.iter().enumerate() {
            if f.source() != chart {
                continue;
            }
            match f {
                BranchFamily::Single { map, .. } => {
                    if self.single_contains(f, map, x) {
                        out.push((fi, 0));
                    }
                }
                BranchFamily::Ray { .. } => {
                    out.extend(self.ray_candidates(fi, x).into_iter().map(|(n, _)| (fi, n)));
                }
            }
        }
        out
    }
}
