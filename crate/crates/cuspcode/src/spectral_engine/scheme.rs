use crate::boundary_geometry::{ChartBox, Vect, MAX_DIM};
use crate::error::{Error, Result};
use crate::registry::Registry;
use serde::Deserialize;
use std::collections::HashMap;

/// A way to turn functions on the domain into node vectors.
///
/// Row i of the discretized operator averages (L u) over `samples(i)`; u at an arbitrary point
/// is read from node values through `stencil`.
pub trait Scheme: Send + Sync {
    fn name(&self) -> &'static str;
    fn domain(&self) -> &ChartBox;
    fn nodes(&self) -> &[Vect];
    /// points (with weights summing to 1) where row i is evaluated
    fn samples(&self, i: usize) -> Vec<(Vect, f64)>;
    /// interpolation weights of node values at y
    fn stencil(&self, y: &Vect) -> Vec<(usize, f64)>;
    /// half-width of the region node i stands for
    fn jitter(&self, i: usize) -> f64;
}

#[derive(Clone)]
pub struct SchemeArgs {
    pub domain: ChartBox,
    pub nodes: usize,
    pub params: toml::Table,
}

pub fn schemes() -> Registry<dyn Scheme, SchemeArgs> {
    let mut r: Registry<dyn Scheme, SchemeArgs> = Registry::new("discretization scheme");
    r.register("collocation-linear", |a| Ok(Box::new(LinearCollocation::new(a)?)))
        .register("collocation-nearest", |a| Ok(Box::new(NearestGrid::new(a, 1)?)))
        .register("ulam", |a| {
            let q = a.params.get("samples_per_bin").and_then(|v| v.as_integer()).unwrap_or(8);
            if q < 1 {
                return Err(Error::Invalid("samples_per_bin must be positive".into()));
            }
            Ok(Box::new(NearestGrid::new(a, q as usize)?))
        });
    r
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearParams {
    #[serde(default = "uniform")]
    layout: String,
}

fn uniform() -> String {
    "uniform".into()
}

/// Piecewise-linear interpolation on an interval, nodes including both endpoints.
pub struct LinearCollocation {
    domain: ChartBox,
    nodes: Vec<Vect>,
    xs: Vec<f64>,
}

impl LinearCollocation {
    pub fn new(a: &SchemeArgs) -> Result<Self> {
        let p: LinearParams = a.params.clone().try_into().map_err(|e| Error::Parse(format!("collocation-linear: {e}")))?;
        if a.domain.dim() != 1 {
            return Err(Error::Invalid("collocation-linear needs d = 1 (use collocation-nearest)".into()));
        }
        if a.nodes < 2 {
            return Err(Error::Invalid("need at least two nodes".into()));
        }
        let lo = a.domain.origin.get(0);
        let hi = lo + a.domain.lattice[0].get(0);
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let n = a.nodes;
        let xs: Vec<f64> = match p.layout.as_str() {
            "uniform" => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
            "chebyshev" => (0..n)
                .map(|i| {
                    let t = std::f64::consts::PI * (n - 1 - i) as f64 / (n - 1) as f64;
                    lo + (hi - lo) * 0.5 * (1.0 + t.cos())
                })
                .collect(),
            other => return Err(Error::Invalid(format!("unknown layout '{other}' (uniform, chebyshev)"))),
        };
        Ok(LinearCollocation { domain: a.domain.clone(), nodes: xs.iter().map(|x| Vect::new1(*x)).collect(), xs })
    }
}

impl Scheme for LinearCollocation {
    fn name(&self) -> &'static str {
        "collocation-linear"
    }

    fn domain(&self) -> &ChartBox {
        &self.domain
    }

    fn nodes(&self) -> &[Vect] {
        &self.nodes
    }

    fn samples(&self, i: usize) -> Vec<(Vect, f64)> {
        vec![(self.nodes[i], 1.0)]
    }

    fn stencil(&self, y: &Vect) -> Vec<(usize, f64)> {
        let n = self.xs.len();
        let x = y.get(0).clamp(self.xs[0], self.xs[n - 1]);
        let j = self.xs.partition_point(|v| *v <= x).clamp(1, n - 1);
        let (a, b) = (self.xs[j - 1], self.xs[j]);
        let t = (x - a) / (b - a);
        if t <= 0.0 {
            vec![(j - 1, 1.0)]
        } else if t >= 1.0 {
            vec![(j, 1.0)]
        } else {
            vec![(j - 1, 1.0 - t), (j, t)]
        }
    }

    fn jitter(&self, i: usize) -> f64 {
        let n = self.xs.len();
        let l = if i > 0 { self.xs[i] - self.xs[i - 1] } else { 0.0 };
        let r = if i + 1 < n { self.xs[i + 1] - self.xs[i] } else { 0.0 };
        0.5 * l.max(r)
    }
}

/// Tensor grid of cells; u is constant on each cell. With q > 1 samples per cell this is
/// Ulam's method.
pub struct NearestGrid {
    domain: ChartBox,
    nodes: Vec<Vect>,
    per: usize,
    q: usize,
    index: HashMap<Vec<usize>, usize>,
    basis: Vec<Vect>,
    name: &'static str,
}

impl NearestGrid {
    pub fn new(a: &SchemeArgs, q: usize) -> Result<Self> {
        let known = ["samples_per_bin"];
        if let Some(k) = a.params.keys().find(|k| !known.contains(&k.as_str()) || q == 1) {
            return Err(Error::Parse(format!("unknown scheme parameter '{k}'")));
        }
        let d = a.domain.dim();
        let per = ((a.nodes as f64).powf(1.0 / d as f64).round() as usize).max(1);
        let basis = a.domain.orthogonal_basis();
        let mut g = NearestGrid {
            domain: a.domain.clone(),
            nodes: vec![],
            per,
            q,
            index: HashMap::new(),
            basis,
            name: if q == 1 { "collocation-nearest" } else { "ulam" },
        };
        let total = per.pow(d as u32);
        for idx in 0..total {
            let mut r = idx;
            let mut key = vec![0; d];
            for k in key.iter_mut() {
                *k = r % per;
                r /= per;
            }
            let c = g.cell_point(&key, &vec![0.5; d]);
            if g.inside(&c) {
                g.index.insert(key, g.nodes.len());
                g.nodes.push(c);
            }
        }
        if g.nodes.is_empty() {
            return Err(Error::Invalid("grid has no nodes".into()));
        }
        Ok(g)
    }

    fn inside(&self, x: &Vect) -> bool {
        let (_, y) = self.domain.coords(x);
        self.domain.rank() == self.domain.dim() || y.norm() <= self.domain.y_radius * (1.0 + 1e-12)
    }

    // point at fractional offset `off` inside cell `key`
    fn cell_point(&self, key: &[usize], off: &[f64]) -> Vect {
        let k = self.domain.rank();
        let per = self.per as f64;
        let mut t = [0.0; MAX_DIM];
        for j in 0..k {
            t[j] = (key[j] as f64 + off[j]) / per;
        }
        let mut y = Vect::zeros(self.domain.dim());
        for (a, b) in self.basis.iter().enumerate() {
            let c = (key[k + a] as f64 + off[k + a]) / per;
            y += b.scale((2.0 * c - 1.0) * self.domain.y_radius);
        }
        self.domain.point(&t[..k], &y)
    }

    fn key_of(&self, x: &Vect) -> Vec<usize> {
        let k = self.domain.rank();
        let (t, y) = self.domain.coords(x);
        let per = self.per as f64;
        let clamp = |c: f64| ((c * per).floor().max(0.0) as usize).min(self.per - 1);
        let mut key: Vec<usize> = (0..k).map(|j| clamp(t[j])).collect();
        for b in &self.basis {
            let c = (b.dot(&y) / self.domain.y_radius + 1.0) / 2.0;
            key.push(clamp(c));
        }
        key
    }
}

impl Scheme for NearestGrid {
    fn name(&self) -> &'static str {
        self.name
    }

    fn domain(&self) -> &ChartBox {
        &self.domain
    }

    fn nodes(&self) -> &[Vect] {
        &self.nodes
    }

    fn samples(&self, i: usize) -> Vec<(Vect, f64)> {
        if self.q == 1 {
            return vec![(self.nodes[i], 1.0)];
        }
        let key = self.key_of(&self.nodes[i]);
        let d = self.domain.dim();
        let side = ((self.q as f64).powf(1.0 / d as f64).round() as usize).max(1);
        let total = side.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for s in 0..total {
            let mut r = s;
            let mut off = vec![0.0; d];
            for o in off.iter_mut() {
                *o = ((r % side) as f64 + 0.5) / side as f64;
                r /= side;
            }
            let p = self.cell_point(&key, &off);
            if self.inside(&p) {
                out.push(p);
            }
        }
        if out.is_empty() {
            out.push(self.nodes[i]);
        }
        let w = 1.0 / out.len() as f64;
        out.into_iter().map(|p| (p, w)).collect()
    }

    fn stencil(&self, y: &Vect) -> Vec<(usize, f64)> {
        if let Some(&i) = self.index.get(&self.key_of(y)) {
            return vec![(i, 1.0)];
        }
        let i = (0..self.nodes.len())
            .min_by(|a, b| self.nodes[*a].dist(y).total_cmp(&self.nodes[*b].dist(y)))
            .unwrap();
        vec![(i, 1.0)]
    }

    fn jitter(&self, _i: usize) -> f64 {
        0.5 * self.domain.lattice.iter().map(|v| v.norm()).fold(0.0, f64::max) / self.per as f64
    }
}
