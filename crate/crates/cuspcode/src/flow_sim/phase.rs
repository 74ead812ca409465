use crate::boundary_geometry::{BoundaryPoint, MobiusMap, Vect};
use crate::coding_builder::BranchSystem;
use crate::error::{Error, Result};
use crate::spectral_engine::SpectralReport;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// A point of the suspension: forward coordinate x in the base domain, backward coordinate
/// x_minus, and height s under the roof.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vect,
    pub x_minus: BoundaryPoint,
    pub s: f64,
}

/// Result of a tracked evolution: the composed inverse branch g with g(x_0) = x_n.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub point: PhasePoint,
    pub steps: usize,
    pub map: MobiusMap,
    /// smallest roof value consumed (infinite when no step was taken)
    pub roof_min: f64,
}

/// Suspension semiflow over the expanding map T(x) = g^{-1} x on the cell of branch g, with
/// roof R(x) = log |(g^{-1})'(x)|. Cells whose branch has sup |g'| below `floor` count as
/// outside the coded region.
pub struct Suspension {
    pub system: Arc<BranchSystem>,
    pub floor: f64,
}

impl Suspension {
    pub fn new(system: Arc<BranchSystem>, floor: f64) -> Result<Self> {
        if !system.is_single_chart() {
            return Err(Error::Invalid("the suspension needs a single-chart system".into()));
        }
        if !(floor >= 0.0) {
            return Err(Error::Invalid("floor must be nonnegative".into()));
        }
        Ok(Suspension { system, floor })
    }

    /// Inverse branch at x and the roof value there.
    pub fn inverse_branch(&self, x: &Vect) -> Result<(MobiusMap, f64)> {
        let esc = || Error::Escape(format!("{:?}", x.as_slice()));
        let (fi, n, g) = self.system.lookup(0, x).ok_or_else(esc)?;
        if self.floor > 0.0 && self.system.member_sup(fi, n) < self.floor {
            return Err(esc());
        }
        let gi = g.inverse();
        let d = gi.deriv_vec(x).ok_or_else(esc)?;
        Ok((gi, d.ln()))
    }

    pub fn roof(&self, x: &Vect) -> Result<f64> {
        self.inverse_branch(x).map(|r| r.1)
    }

    /// One step of the skew product (x, x_-) -> (g^{-1} x, g^{-1} x_-), s unchanged.
    pub fn skew(&self, x: &Vect, x_minus: &BoundaryPoint) -> Result<(Vect, BoundaryPoint, MobiusMap, f64)> {
        let (gi, r) = self.inverse_branch(x)?;
        let (y, ym) = self.apply_branch(&gi, x, x_minus)?;
        Ok((y, ym, gi, r))
    }

    fn apply_branch(&self, gi: &MobiusMap, x: &Vect, x_minus: &BoundaryPoint) -> Result<(Vect, BoundaryPoint)> {
        let y = gi.apply_vec(x).ok_or_else(|| Error::Escape(format!("{:?}", x.as_slice())))?;
        let y = self.system.base().reduce(&y).0;
        Ok((y, gi.apply(x_minus)))
    }

    pub fn evolve(&self, p: &PhasePoint, t: f64) -> Result<PhasePoint> {
        self.run(p, t, false).map(|e| e.point)
    }

    pub fn evolve_tracked(&self, p: &PhasePoint, t: f64) -> Result<Evolution> {
        self.run(p, t, true)
    }

    fn run(&self, p: &PhasePoint, t: f64, track: bool) -> Result<Evolution> {
        if !(t >= 0.0) {
            return Err(Error::Invalid(format!("flow time must be nonnegative, got {t}")));
        }
        let mut x = p.x;
        let mut xm = p.x_minus;
        let mut s = p.s + t;
        let mut cur = self.inverse_branch(&x)?;
        let mut map = MobiusMap::identity(self.system.dim);
        let mut steps = 0;
        let mut roof_min = f64::INFINITY;
        while s >= cur.1 {
            let (gi, r0) = cur;
            let (y, ym) = self.apply_branch(&gi, &x, &xm)?;
            s -= r0;
            roof_min = roof_min.min(r0);
            if track {
                map = gi.compose_unchecked(&map);
            }
            x = y;
            xm = ym;
            cur = self.inverse_branch(&x)?;
            steps += 1;
            if steps > 10_000_000 {
                return Err(Error::NonConvergence(steps));
            }
        }
        Ok(Evolution { point: PhasePoint { x, x_minus: xm, s }, steps, map, roof_min })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleOptions {
    /// skew-product steps from x_minus = infinity before a sample is used
    #[serde(default = "default_burn")]
    pub burn_in: usize,
    /// accept with probability R(x)/roof_cap (always when R exceeds it)
    #[serde(default = "default_cap")]
    pub roof_cap: f64,
    /// give up on one sample after this many restarts
    #[serde(default = "default_restarts")]
    pub max_restarts: usize,
    #[serde(default)]
    pub chain: Chain,
    /// branches below this sup derivative are left out of the backward chain
    #[serde(default = "default_chain_floor")]
    pub chain_floor: f64,
}

/// How the backward coordinate is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chain {
    /// draw x_0 from nu and run the skew product forward from x_minus = infinity; needs nu to
    /// charge open sets, since off the limit set the forward orbit escapes
    #[default]
    Forward,
    /// pick preimage branches with the Gibbs weights |g'(y)|^a h(g y): x is the end of one such
    /// chain from a node draw, x_minus the forward image of infinity along a second one from x
    Backward,
}

fn default_burn() -> usize {
    50
}
fn default_cap() -> f64 {
    30.0
}
fn default_restarts() -> usize {
    100_000
}
fn default_chain_floor() -> f64 {
    1e-4
}

impl Default for SampleOptions {
    fn default() -> Self {
        SampleOptions {
            burn_in: default_burn(),
            roof_cap: default_cap(),
            max_restarts: default_restarts(),
            chain: Chain::Forward,
            chain_floor: default_chain_floor(),
        }
    }
}

/// Draws phase points from the invariant measure: node by invariant mass, uniform jitter over
/// the node's share of the domain, burn-in of the skew product from x_minus = infinity, then
/// acceptance proportional to the roof and s uniform under it.
pub struct PhaseSampler<'a> {
    pub susp: &'a Suspension,
    nodes: Vec<Vect>,
    jitter: Vec<f64>,
    pick: WeightedIndex<f64>,
    pub opts: SampleOptions,
    right: Vec<f64>,
    exponent: f64,
    /// node indices sorted by coordinate (d = 1)
    order: Vec<usize>,
    branches: Vec<MobiusMap>,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct SampleStats {
    pub restarts: usize,
    pub escapes: usize,
    /// accepted samples whose roof exceeded the cap
    pub capped: usize,
}

impl std::ops::Add for SampleStats {
    type Output = SampleStats;
    fn add(self, o: SampleStats) -> SampleStats {
        SampleStats { restarts: self.restarts + o.restarts, escapes: self.escapes + o.escapes, capped: self.capped + o.capped }
    }
}

fn node_jitter(nodes: &[Vect]) -> Vec<f64> {
    let n = nodes.len();
    if n < 2 {
        return vec![0.0; n];
    }
    if nodes[0].dim() == 1 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|a, b| nodes[*a].get(0).total_cmp(&nodes[*b].get(0)));
        let mut out = vec![0.0; n];
        for (k, &i) in idx.iter().enumerate() {
            let l = if k > 0 { nodes[i].dist(&nodes[idx[k - 1]]) } else { f64::INFINITY };
            let r = if k + 1 < n { nodes[i].dist(&nodes[idx[k + 1]]) } else { f64::INFINITY };
            out[i] = 0.5 * l.min(r);
        }
        return out;
    }
    (0..n)
        .map(|i| 0.5 * (0..n).filter(|j| *j != i).map(|j| nodes[i].dist(&nodes[j])).fold(f64::INFINITY, f64::min))
        .collect()
}

impl<'a> PhaseSampler<'a> {
    pub fn new(susp: &'a Suspension, report: &SpectralReport, opts: SampleOptions) -> Result<Self> {
        if !(opts.roof_cap > 0.0) {
            return Err(Error::Invalid("roof_cap must be positive".into()));
        }
        let pick = WeightedIndex::new(report.invariant.iter().map(|w| w.max(0.0)))
            .map_err(|e| Error::Invalid(format!("invariant masses: {e}")))?;
        let branches = match opts.chain {
            Chain::Forward => vec![],
            Chain::Backward => {
                let e = susp.system.expand(opts.chain_floor)?;
                let b: Vec<MobiusMap> = e.members.iter().filter(|m| susp.floor == 0.0 || m.sup >= susp.floor).map(|m| m.map).collect();
                if b.is_empty() {
                    return Err(Error::Truncation);
                }
                b
            }
        };
        let mut order: Vec<usize> = (0..report.nodes.len()).collect();
        if susp.system.dim == 1 {
            order.sort_by(|a, b| report.nodes[*a].get(0).total_cmp(&report.nodes[*b].get(0)));
        }
        Ok(PhaseSampler {
            susp,
            jitter: node_jitter(&report.nodes),
            nodes: report.nodes.clone(),
            pick,
            opts,
            right: report.right.clone(),
            exponent: report.exponent,
            order,
            branches,
        })
    }

    /// Right eigenfunction between nodes: linear in d = 1, nearest node otherwise.
    fn eigenfunction(&self, y: &Vect) -> f64 {
        if y.dim() == 1 {
            let t = y.get(0);
            let k = self.order.partition_point(|i| self.nodes[*i].get(0) < t);
            if k == 0 {
                return self.right[self.order[0]];
            }
            if k == self.order.len() {
                return self.right[self.order[k - 1]];
            }
            let (i, j) = (self.order[k - 1], self.order[k]);
            let (a, b) = (self.nodes[i].get(0), self.nodes[j].get(0));
            let w = if b > a { (t - a) / (b - a) } else { 0.0 };
            return (1.0 - w) * self.right[i] + w * self.right[j];
        }
        let i = (0..self.nodes.len()).min_by(|a, b| self.nodes[*a].dist(y).total_cmp(&self.nodes[*b].dist(y))).unwrap();
        self.right[i]
    }

    /// `burn_in` preimage steps from x: the endpoint and the branch indices used.
    fn backward_chain<R: Rng + ?Sized>(&self, x: &Vect, rng: &mut R) -> Result<(Vect, Vec<usize>)> {
        let mut y = *x;
        let mut word = Vec::with_capacity(self.opts.burn_in);
        let mut w = vec![0.0; self.branches.len()];
        for _ in 0..self.opts.burn_in {
            for (k, g) in self.branches.iter().enumerate() {
                w[k] = match (g.deriv_vec(&y), g.apply_vec(&y)) {
                    (Some(d), Some(z)) => d.powf(self.exponent) * self.eigenfunction(&z).max(0.0),
                    _ => 0.0,
                };
            }
            let pick = WeightedIndex::new(&w).map_err(|e| Error::Invalid(format!("backward chain weights: {e}")))?;
            let k = pick.sample(rng);
            y = self.branches[k].apply_vec(&y).ok_or_else(|| Error::Escape(format!("{:?}", y.as_slice())))?;
            word.push(k);
        }
        Ok((y, word))
    }

    /// A point of the base drawn from the node masses.
    pub fn base_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vect {
        let i = self.pick.sample(rng);
        let h = self.jitter[i];
        let dom = self.susp.system.base();
        let d = dom.dim();
        for _ in 0..64 {
            let mut y = self.nodes[i];
            for k in 0..d {
                y.set(k, y.get(k) + h * (2.0 * rng.random::<f64>() - 1.0));
            }
            if dom.contains(&y) {
                return y;
            }
        }
        self.nodes[i]
    }

    /// Sample number `index` of the stream `seed`; independent of how samples are scheduled.
    pub fn sample(&self, seed: u64, index: u64) -> Result<(PhasePoint, SampleStats)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut stats = SampleStats::default();
        if self.opts.chain == Chain::Backward {
            // the chain is stationary for nu, so its endpoint is a nu-draw lying within the
            // contraction of the limit set; a second run supplies the past of x
            for _ in 0..self.opts.max_restarts {
                let (x, _) = self.backward_chain(&self.base_point(&mut rng), &mut rng)?;
                let Ok(r) = self.susp.roof(&x) else {
                    stats.escapes += 1;
                    stats.restarts += 1;
                    continue;
                };
                if rng.random::<f64>() * self.opts.roof_cap >= r {
                    stats.restarts += 1;
                    continue;
                }
                if r > self.opts.roof_cap {
                    stats.capped += 1;
                }
                let s = r * rng.random::<f64>();
                let (_, word) = self.backward_chain(&x, &mut rng)?;
                let mut x_minus = BoundaryPoint::Infinity;
                for k in word.iter().rev() {
                    x_minus = self.branches[*k].inverse().apply(&x_minus);
                }
                return Ok((PhasePoint { x, x_minus, s }, stats));
            }
            return Err(Error::NonConvergence(self.opts.max_restarts));
        }
        'restart: for _ in 0..self.opts.max_restarts {
            let mut x = self.base_point(&mut rng);
            let mut xm = BoundaryPoint::Infinity;
            for _ in 0..self.opts.burn_in {
                match self.susp.skew(&x, &xm) {
                    Ok((y, ym, _, _)) => {
                        x = y;
                        xm = ym;
                    }
                    Err(_) => {
                        stats.escapes += 1;
                        stats.restarts += 1;
                        continue 'restart;
                    }
                }
            }
            let Ok(r) = self.susp.roof(&x) else {
                stats.escapes += 1;
                stats.restarts += 1;
                continue;
            };
            if rng.random::<f64>() * self.opts.roof_cap >= r {
                stats.restarts += 1;
                continue;
            }
            if r > self.opts.roof_cap {
                stats.capped += 1;
            }
            let s = r * rng.random::<f64>();
            return Ok((PhasePoint { x, x_minus: xm, s }, stats));
        }
        Err(Error::NonConvergence(self.opts.max_restarts))
    }
}

/// n phase points from `seed`, one generator stream per sample.
pub fn sample_phase(
    susp: &Suspension,
    report: &SpectralReport,
    n: usize,
    seed: u64,
    opts: &SampleOptions,
) -> Result<(Vec<PhasePoint>, SampleStats)> {
    let sampler = PhaseSampler::new(susp, report, opts.clone())?;
    let out: Vec<(PhasePoint, SampleStats)> =
        (0..n as u64).into_par_iter().map(|i| sampler.sample(seed, i)).collect::<Result<_>>()?;
    let stats = out.iter().fold(SampleStats::default(), |a, (_, s)| a + *s);
    Ok((out.into_iter().map(|(p, _)| p).collect(), stats))
}

/// Mean roof against the invariant node masses, averaging R over each node's jitter cell.
pub fn mean_roof(susp: &Suspension, report: &SpectralReport) -> f64 {
    let jit = node_jitter(&report.nodes);
    let dom = susp.system.base();
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for ((x, w), h) in report.nodes.iter().zip(&report.invariant).zip(&jit) {
        if *w <= 0.0 {
            continue;
        }
        let m = 16;
        let vals: Vec<f64> = (0..m)
            .filter_map(|k| {
                let mut y = *x;
                if y.dim() == 1 {
                    y.set(0, y.get(0) + h * (2.0 * (k as f64 + 0.5) / m as f64 - 1.0));
                }
                if dom.contains(&y) {
                    susp.roof(&y).ok()
                } else {
                    None
                }
            })
            .collect();
        if !vals.is_empty() {
            acc += w * vals.iter().sum::<f64>() / vals.len() as f64;
            wsum += w;
        }
    }
    acc / wsum
}
