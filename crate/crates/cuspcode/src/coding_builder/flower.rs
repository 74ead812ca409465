use super::branch::{sup_deriv, BranchFamily, RayWords};
use crate::boundary_geometry::{ChartBox, MobiusMap, Vect, MAX_DIM};
use crate::error::{Error, Result};
use crate::group_model::{CuspChart, ParabolicPoint, Word};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Shape of a flower in the coordinates of the chart where p lives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FlowerRegion {
    /// exact image interval (d = 1)
    Interval { lo: f64, hi: f64 },
    /// B(center, inner) is inside the flower, which is inside B(center, outer)
    Balls { center: Vect, inner: f64, outer: f64 },
}

impl FlowerRegion {
    /// Distance from x to the (outer) region; 0 inside.
    pub fn dist(&self, x: &Vect) -> f64 {
        match self {
            FlowerRegion::Interval { lo, hi } => (lo - x.get(0)).max(x.get(0) - hi).max(0.0),
            FlowerRegion::Balls { center, outer, .. } => (x.dist(center) - outer).max(0.0),
        }
    }

    /// Extent along the first coordinate.
    pub fn span0(&self) -> (f64, f64) {
        match self {
            FlowerRegion::Interval { lo, hi } => (*lo, *hi),
            FlowerRegion::Balls { center, outer, .. } => (center.get(0) - outer, center.get(0) + outer),
        }
    }
}

/// Neighbourhood J_p of a parabolic point removed by the coding, with its tiles.
///
/// The excluded box K is the ball factor B_Y(2 t0/eta) times the lattice tiles with index in
/// `lo..hi` around x_p; the flower is M(K^c) and its cells are M(tile) for tiles outside K.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flower {
    pub point: ParabolicPoint,
    pub eta: f64,
    pub generation: usize,
    pub lo: Vec<i64>,
    pub hi: Vec<i64>,
    pub y_radius: f64,
    pub region: FlowerRegion,
    /// largest c with B(p, c eta h_p) inside the flower
    pub c4: f64,
}

/// Index ranges of the smallest tiled box whose tiles cover B(x_p, rho).
pub fn tile_range(domain: &ChartBox, x_p: &Vect, rho: f64) -> (Vec<i64>, Vec<i64>) {
    let k = domain.rank();
    let d = domain.dim();
    let (t, _) = domain.coords(x_p);
    let mut lo = vec![];
    let mut hi = vec![];
    for j in 0..k {
        let dn = (0..d)
            .map(|i| domain.coords(&(domain.origin + Vect::unit(d, i))).0[j].powi(2))
            .sum::<f64>()
            .sqrt();
        lo.push((t[j] - rho * dn).floor() as i64);
        hi.push((t[j] + rho * dn).ceil() as i64);
    }
    (lo, hi)
}

fn kbox_dists(domain: &ChartBox, x_p: &Vect, lo: &[i64], hi: &[i64], y_rad: f64) -> (f64, f64) {
    let k = domain.rank();
    let d = domain.dim();
    let (t, y) = domain.coords(x_p);
    let mut inner = f64::INFINITY;
    for j in 0..k {
        let dn = (0..d)
            .map(|i| domain.coords(&(domain.origin + Vect::unit(d, i))).0[j].powi(2))
            .sum::<f64>()
            .sqrt();
        inner = inner.min((t[j] - lo[j] as f64) / dn).min((hi[j] as f64 - t[j]) / dn);
    }
    let yn = y.norm();
    if k < d {
        inner = inner.min(y_rad - yn);
    }
    // farthest corner of the tiled part, plus the ball factor
    let mut far2: f64 = 0.0;
    for mask in 0..(1usize << k) {
        let mut tt = [0.0; MAX_DIM];
        for j in 0..k {
            tt[j] = if mask >> j & 1 == 1 { hi[j] as f64 } else { lo[j] as f64 };
        }
        let c = domain.point(&tt[..k], &Vect::zeros(d));
        let (_, yc) = domain.coords(&c);
        let lat = c - yc - (*x_p - y);
        far2 = far2.max(lat.norm2());
    }
    let outer = if k < d { (far2 + (yn + y_rad).powi(2)).sqrt() } else { far2.sqrt() };
    (inner, outer)
}

/// Builds J_p in the coordinates of chart `p.chart` (whose domain is `base`).
pub fn build_flower(
    p: &ParabolicPoint,
    eta: f64,
    t0: f64,
    chart: &CuspChart,
    base: &ChartBox,
    generation: usize,
) -> Result<Flower> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Invalid(format!("eta must lie in (0,1), got {eta}")));
    }
    let dom = &chart.domain;
    let rho = t0 / eta;
    let k = dom.rank();
    let d = dom.dim();
    if k < d && dom.y_radius > rho {
        return Err(Error::Scale(format!("chart ball radius {} exceeds t0/eta = {rho}", dom.y_radius)));
    }
    let (lo, hi) = tile_range(dom, &p.x_p, rho);
    let y_rad = 2.0 * rho;
    let MobiusMap::Inversive { h, .. } = p.map else {
        return Err(Error::Invalid("parabolic point map fixes infinity".into()));
    };
    let (region, inner) = if d == 1 {
        let a = dom.point(&[lo[0] as f64], &Vect::zeros(1));
        let b = dom.point(&[hi[0] as f64], &Vect::zeros(1));
        let ma = p.map.apply_vec(&a).ok_or_else(|| Error::Scale("x_p on the tile boundary".into()))?;
        let mb = p.map.apply_vec(&b).ok_or_else(|| Error::Scale("x_p on the tile boundary".into()))?;
        let (l, r) = (ma.get(0).min(mb.get(0)), ma.get(0).max(mb.get(0)));
        let pc = p.p.get(0);
        (FlowerRegion::Interval { lo: l, hi: r }, (pc - l).min(r - pc))
    } else {
        let (rin, rout) = kbox_dists(dom, &p.x_p, &lo, &hi, y_rad);
        let region = FlowerRegion::Balls { center: p.p, inner: h / rout, outer: h / rin };
        (region, h / rout)
    };
    let outer = match region {
        FlowerRegion::Interval { lo, hi } => (p.p.get(0) - lo).max(hi - p.p.get(0)),
        FlowerRegion::Balls { outer, .. } => outer,
    };
    if base.dist_to_boundary(&p.p) < outer * (1.0 - 1e-12) || !base.contains(&p.p) {
        return Err(Error::Scale(format!(
            "flower at {} of radius {outer:.3e} leaves the domain",
            p.p
        )));
    }
    Ok(Flower {
        point: p.clone(),
        eta,
        generation,
        lo,
        hi,
        y_radius: y_rad,
        region,
        c4: inner / (eta * p.height),
    })
}

impl Flower {
    pub fn rank(&self) -> usize {
        self.lo.len()
    }

    /// Whether tile n lies outside the excluded box (that is, belongs to N_p).
    pub fn in_np(&self, n: &[i64]) -> bool {
        n.iter().zip(self.lo.iter().zip(&self.hi)).any(|(x, (l, h))| x < l || x >= h)
    }

    /// Cells of the flower as branch families from chart `p.cusp_index` into chart `p.chart`.
    ///
    /// Rank one gives two rays; higher rank lists tiles with sup |g'| >= floor and returns the
    /// estimated sum of sup|g'|^delta over the tiles left out.
    pub fn families(&self, chart: &CuspChart, floor: f64, delta: f64) -> (Vec<BranchFamily>, f64) {
        let pt = &self.point;
        let (src, tgt) = (pt.chart, pt.cusp_index);
        let dom = &chart.domain;
        let tag = format!("g{}:{}", self.generation, pt.p);
        if self.rank() == 1 {
            let v = dom.lattice[0];
            let lw = chart.lattice_words.first().cloned().unwrap_or_else(Word::identity);
            let id = MobiusMap::identity(dom.dim());
            let up = BranchFamily::Ray {
                name: format!("{tag}+"),
                words: Some(RayWords { prefix: pt.word.clone(), step: lw.clone(), suffix: Word::identity() }),
                p: pt.map,
                step: v,
                q: id,
                n0: self.hi[0],
                source: src,
                target: tgt,
            };
            let down = BranchFamily::Ray {
                name: format!("{tag}-"),
                words: Some(RayWords { prefix: pt.word.clone(), step: lw.inverse(), suffix: Word::identity() }),
                p: pt.map,
                step: -v,
                q: id,
                n0: 1 - self.lo[0],
                source: src,
                target: tgt,
            };
            return (vec![up, down], 0.0);
        }
        // higher rank: grow shells of tiles around the excluded box until a shell is below floor
        let k = self.rank();
        let mut fams = vec![];
        let mut left = 0.0;
        let mut shell = 0i64;
        loop {
            let mut any = false;
            let mut shell_mass = 0.0;
            let lo: Vec<i64> = self.lo.iter().map(|l| l - shell).collect();
            let hi: Vec<i64> = self.hi.iter().map(|h| h + shell).collect();
            let mut idx = lo.clone();
            'outer: loop {
                let on_shell = (0..k).any(|j| idx[j] == lo[j] || idx[j] == hi[j]);
                if on_shell && self.in_np(&idx) {
                    let m = pt.map.compose_unchecked(&MobiusMap::translation(dom.translation(&idx)));
                    let sup = sup_deriv(&m, dom);
                    let word = pt.word.concat(&chart.lattice_word(&idx));
                    if sup >= floor {
                        any = true;
                        fams.push(BranchFamily::Single {
                            name: format!("{tag}{idx:?}"),
                            word: Some(word),
                            map: m,
                            source: src,
                            target: tgt,
                        });
                    } else {
                        shell_mass += sup.powf(delta);
                    }
                }
                let mut j = 0;
                loop {
                    if j == k {
                        break 'outer;
                    }
                    idx[j] += 1;
                    if idx[j] <= hi[j] {
                        break;
                    }
                    idx[j] = lo[j];
                    j += 1;
                }
            }
            left += shell_mass;
            shell += 1;
            if !any && shell > 1 {
                // remaining shells decay like the lattice sum of |n|^{-2 delta}
                let r = (shell as f64).max(1.0);
                let ratio = 2.0 * delta - k as f64;
                if ratio > 0.0 {
                    left += shell_mass * r / ratio;
                } else {
                    left = f64::INFINITY;
                }
                break;
            }
            if shell > 10_000 {
                break;
            }
        }
        (fams, left)
    }

    /// Points on the boundary of the excluded box, for containment checks.
    pub fn boundary_samples<R: Rng + ?Sized>(&self, chart: &CuspChart, n: usize, rng: &mut R) -> Vec<Vect> {
        let dom = &chart.domain;
        let k = self.rank();
        let d = dom.dim();
        if d == 1 {
            return vec![
                dom.point(&[self.lo[0] as f64], &Vect::zeros(1)),
                dom.point(&[self.hi[0] as f64], &Vect::zeros(1)),
            ];
        }
        let basis = dom.orthogonal_basis();
        (0..n)
            .map(|_| {
                let mut t = [0.0; MAX_DIM];
                for j in 0..k {
                    t[j] = self.lo[j] as f64 + rng.random::<f64>() * (self.hi[j] - self.lo[j]) as f64;
                }
                let mut y = Vect::zeros(d);
                let face = rng.random_range(0..(2 * k + usize::from(k < d)));
                if face < 2 * k {
                    let j = face / 2;
                    t[j] = if face % 2 == 0 { self.lo[j] as f64 } else { self.hi[j] as f64 };
                    // interior of the ball factor
                    for b in &basis {
                        y += b.scale((rng.random::<f64>() * 2.0 - 1.0) * self.y_radius / (basis.len() as f64).sqrt());
                    }
                } else {
                    let mut dir = Vect::zeros(d);
                    for b in &basis {
                        dir += b.scale(rng.random::<f64>() * 2.0 - 1.0);
                    }
                    let nrm = dir.norm().max(1e-12);
                    y = dir.scale(self.y_radius / nrm);
                }
                dom.point(&t[..k], &y)
            })
            .collect()
    }
}
