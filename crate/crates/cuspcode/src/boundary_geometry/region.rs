use super::linalg::{Mat, Vect, MAX_DIM};
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Chart domain B_Y(C) x D: a ball of radius `y_radius` in the directions orthogonal to the
/// lattice, times the half-open parallelotope spanned by the lattice vectors at `origin`.
///
/// With as many lattice vectors as dimensions the ball factor is trivial and the region is a
/// fundamental parallelotope for the translation lattice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChartBoxRepr", into = "ChartBoxRepr")]
pub struct ChartBox {
    pub origin: Vect,
    pub lattice: Vec<Vect>,
    pub y_radius: f64,
    dual: Vec<Vect>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartBoxRepr {
    origin: Vect,
    lattice: Vec<Vect>,
    #[serde(default)]
    y_radius: f64,
}

impl TryFrom<ChartBoxRepr> for ChartBox {
    type Error = Error;
    fn try_from(r: ChartBoxRepr) -> Result<Self> {
        ChartBox::new(r.origin, r.lattice, r.y_radius)
    }
}

impl From<ChartBox> for ChartBoxRepr {
    fn from(b: ChartBox) -> Self {
        ChartBoxRepr { origin: b.origin, lattice: b.lattice, y_radius: b.y_radius }
    }
}

impl ChartBox {
    pub fn new(origin: Vect, lattice: Vec<Vect>, y_radius: f64) -> Result<Self> {
        let d = origin.dim();
        let k = lattice.len();
        if k == 0 || k > d {
            return Err(Error::Invalid(format!("chart box needs 1..={d} lattice vectors, got {k}")));
        }
        if lattice.iter().any(|v| v.dim() != d) {
            return Err(Error::Dimension(d, lattice[0].dim()));
        }
        if k < d && !(y_radius > 0.0) {
            return Err(Error::Invalid("y_radius must be positive when rank < dimension".into()));
        }
        let mut b = ChartBox { origin, lattice, y_radius: if k == d { 0.0 } else { y_radius }, dual: vec![] };
        b.dual = b.dual_basis()?;
        Ok(b)
    }

    /// Axis-aligned interval [lo, hi) in d = 1.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        ChartBox::new(Vect::new1(lo), vec![Vect::new1(hi - lo)], 0.0)
    }

    /// Axis-aligned box with the given corner and side lengths.
    pub fn axis_box(lo: &[f64], sides: &[f64]) -> Result<Self> {
        let d = lo.len();
        let lattice = (0..d).map(|i| Vect::unit(d, i).scale(sides[i])).collect();
        ChartBox::new(Vect::from_slice(lo), lattice, 0.0)
    }

    fn dual_basis(&self) -> Result<Vec<Vect>> {
        let k = self.lattice.len();
        let mut g = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..k {
            for j in 0..k {
                g[i][j] = self.lattice[i].dot(&self.lattice[j]);
            }
        }
        let rows: Vec<Vec<f64>> = (0..k).map(|i| g[i][..k].to_vec()).collect();
        let gm = nalgebra::DMatrix::from_fn(k, k, |i, j| rows[i][j]);
        let inv = gm
            .try_inverse()
            .ok_or_else(|| Error::Invalid("lattice vectors are linearly dependent".into()))?;
        Ok((0..k)
            .map(|i| {
                let mut v = Vect::zeros(self.dim());
                for j in 0..k {
                    v += self.lattice[j].scale(inv[(i, j)]);
                }
                v
            })
            .collect())
    }

    pub fn dim(&self) -> usize {
        self.origin.dim()
    }

    pub fn rank(&self) -> usize {
        self.lattice.len()
    }

    fn duals(&self) -> &[Vect] {
        &self.dual
    }

    /// Lattice coordinates t and the orthogonal remainder y of x - origin.
    pub fn coords(&self, x: &Vect) -> ([f64; MAX_DIM], Vect) {
        let w = *x - self.origin;
        let mut t = [0.0; MAX_DIM];
        let mut y = w;
        for (j, dj) in self.duals().iter().enumerate() {
            t[j] = dj.dot(&w);
            y -= self.lattice[j].scale(t[j]);
        }
        (t, y)
    }

    pub fn point(&self, t: &[f64], y: &Vect) -> Vect {
        let mut x = self.origin + *y;
        for (j, v) in self.lattice.iter().enumerate() {
            x += v.scale(t[j]);
        }
        x
    }

    /// Membership with slack `eps` in lattice coordinates (half-open on the far faces when eps = 0).
    pub fn contains_eps(&self, x: &Vect, eps: f64) -> bool {
        let (t, y) = self.coords(x);
        for tj in t.iter().take(self.rank()) {
            if *tj < -eps || *tj >= 1.0 + eps {
                return false;
            }
        }
        self.rank() == self.dim() || y.norm() <= self.y_radius * (1.0 + eps)
    }

    pub fn contains(&self, x: &Vect) -> bool {
        self.contains_eps(x, 0.0)
    }

    /// Integer lattice coordinates n with x - sum n_j v_j back in the lattice cell.
    pub fn lattice_index(&self, x: &Vect) -> [i64; MAX_DIM] {
        let (t, _) = self.coords(x);
        let mut n = [0i64; MAX_DIM];
        for j in 0..self.rank() {
            n[j] = t[j].floor() as i64;
        }
        n
    }

    pub fn translation(&self, n: &[i64]) -> Vect {
        let mut v = Vect::zeros(self.dim());
        for (j, l) in self.lattice.iter().enumerate() {
            v += l.scale(n[j] as f64);
        }
        v
    }

    /// Reduces x modulo the lattice; returns the reduced point and the subtracted index.
    pub fn reduce(&self, x: &Vect) -> (Vect, [i64; MAX_DIM]) {
        let n = self.lattice_index(x);
        (*x - self.translation(&n[..self.rank()]), n)
    }

    /// Euclidean distance from x to the closed region (0 inside).
    pub fn dist(&self, x: &Vect) -> f64 {
        let (t, y) = self.coords(x);
        let w = *x - self.origin - y;
        let span2 = self.span_dist2(&w, &t);
        let ey = if self.rank() == self.dim() { 0.0 } else { (y.norm() - self.y_radius).max(0.0) };
        (span2 + ey * ey).sqrt()
    }

    // min over u in [0,1]^k of |w - sum u_j v_j|^2 by enumerating active sets
    fn span_dist2(&self, w: &Vect, t: &[f64; MAX_DIM]) -> f64 {
        let k = self.rank();
        if t[..k].iter().all(|tj| (0.0..=1.0).contains(tj)) {
            return 0.0;
        }
        if k == 1 {
            let u = t[0].clamp(0.0, 1.0);
            return (*w - self.lattice[0].scale(u)).norm2();
        }
        let mut best = f64::INFINITY;
        let patterns = 3usize.pow(k as u32);
        for pat in 0..patterns {
            // 0: free, 1: at 0, 2: at 1
            let mut state = [0u8; MAX_DIM];
            let mut p = pat;
            for s in state.iter_mut().take(k) {
                *s = (p % 3) as u8;
                p /= 3;
            }
            let mut target = *w;
            let mut free = vec![];
            let mut u = [0.0; MAX_DIM];
            for j in 0..k {
                match state[j] {
                    0 => free.push(j),
                    1 => u[j] = 0.0,
                    _ => {
                        u[j] = 1.0;
                        target -= self.lattice[j];
                    }
                }
            }
            if !free.is_empty() {
                let m = free.len();
                let g = nalgebra::DMatrix::from_fn(m, m, |a, b| self.lattice[free[a]].dot(&self.lattice[free[b]]));
                let r = nalgebra::DVector::from_fn(m, |a, _| self.lattice[free[a]].dot(&target));
                let Some(sol) = g.lu().solve(&r) else { continue };
                if sol.iter().any(|s| !(-1e-12..=1.0 + 1e-12).contains(s)) {
                    continue;
                }
                for (a, &j) in free.iter().enumerate() {
                    u[j] = sol[a].clamp(0.0, 1.0);
                }
            }
            let mut q = Vect::zeros(self.dim());
            for j in 0..k {
                q += self.lattice[j].scale(u[j]);
            }
            best = best.min((*w - q).norm2());
        }
        best
    }

    /// Vertices of the lattice parallelotope (ball factor collapsed to its centre).
    pub fn corners(&self) -> Vec<Vect> {
        let k = self.rank();
        (0..(1usize << k))
            .map(|mask| {
                let t: Vec<f64> = (0..k).map(|j| ((mask >> j) & 1) as f64).collect();
                self.point(&t, &Vect::zeros(self.dim()))
            })
            .collect()
    }

    /// Largest distance from x to a point of the region.
    pub fn max_dist(&self, x: &Vect) -> f64 {
        let (_, y) = self.coords(x);
        let base = self.corners().iter().map(|c| (*x - y - *c).norm2()).fold(0.0, f64::max);
        let ey = y.norm() + self.y_radius;
        (base + ey * ey).sqrt()
    }

    /// Distance from an interior point to the boundary; 0 outside.
    pub fn dist_to_boundary(&self, x: &Vect) -> f64 {
        let (t, y) = self.coords(x);
        let mut best = f64::INFINITY;
        for (j, dj) in self.duals().iter().enumerate() {
            let s = dj.norm();
            best = best.min(t[j] / s).min((1.0 - t[j]) / s);
        }
        if self.rank() < self.dim() {
            best = best.min(self.y_radius - y.norm());
        }
        best.max(0.0)
    }

    pub fn center(&self) -> Vect {
        self.point(&[0.5; MAX_DIM], &Vect::zeros(self.dim()))
    }

    /// Radius of the smallest ball about `center()` containing the region.
    pub fn radius(&self) -> f64 {
        self.max_dist(&self.center())
    }

    /// Lebesgue measure of the region.
    pub fn volume(&self) -> f64 {
        let k = self.rank();
        let g = nalgebra::DMatrix::from_fn(k, k, |a, b| self.lattice[a].dot(&self.lattice[b]));
        let base = g.determinant().abs().sqrt();
        let yd = self.dim() - k;
        let ball = match yd {
            0 => 1.0,
            1 => 2.0 * self.y_radius,
            _ => std::f64::consts::PI * self.y_radius * self.y_radius,
        };
        base * ball
    }

    /// Uniform sample from the region.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vect {
        let k = self.rank();
        let t: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let y = self.sample_ball(rng);
        self.point(&t, &y)
    }

    fn sample_ball<R: Rng + ?Sized>(&self, rng: &mut R) -> Vect {
        let d = self.dim();
        let mut y = Vect::zeros(d);
        if self.rank() == d {
            return y;
        }
        let basis = self.orthogonal_basis();
        loop {
            let c: Vec<f64> = basis.iter().map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
            if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                for (b, ci) in basis.iter().zip(&c) {
                    y += b.scale(ci * self.y_radius);
                }
                return y;
            }
        }
    }

    /// Orthonormal basis of the complement of the lattice span.
    pub fn orthogonal_basis(&self) -> Vec<Vect> {
        let d = self.dim();
        let mut span: Vec<Vect> = vec![];
        for v in &self.lattice {
            let mut u = *v;
            for b in &span {
                u -= b.scale(b.dot(&u));
            }
            span.push(u.scale(1.0 / u.norm()));
        }
        let mut out = vec![];
        for i in 0..d {
            let mut u = Vect::unit(d, i);
            for b in span.iter().chain(out.iter()) {
                u -= b.scale(b.dot(&u));
            }
            if u.norm() > 1e-8 {
                let n = u.norm();
                out.push(u.scale(1.0 / n));
            }
            if span.len() + out.len() == d {
                break;
            }
        }
        out
    }

    /// Tensor grid of m points per axis at cell midpoints (lattice axes and orthogonal axes).
    pub fn grid(&self, m: usize) -> Vec<Vect> {
        let d = self.dim();
        let k = self.rank();
        let basis = self.orthogonal_basis();
        let total = m.pow(d as u32);
        let mut out = Vec::with_capacity(total);
        for idx in 0..total {
            let mut r = idx;
            let mut c = [0.0; MAX_DIM];
            for ci in c.iter_mut().take(d) {
                *ci = ((r % m) as f64 + 0.5) / m as f64;
                r /= m;
            }
            let mut y = Vect::zeros(d);
            for (a, b) in basis.iter().enumerate() {
                y += b.scale((2.0 * c[k + a] - 1.0) * self.y_radius);
            }
            if y.norm() <= self.y_radius + 1e-12 {
                out.push(self.point(&c[..k], &y));
            }
        }
        out
    }

    /// Image of the region under a translation.
    pub fn translated(&self, b: &Vect) -> ChartBox {
        let mut out = self.clone();
        out.origin += *b;
        out
    }

    /// Rotation/reflection of the lattice frame, used when comparing charts.
    pub fn transformed(&self, a: &Mat, b: &Vect) -> Result<ChartBox> {
        ChartBox::new(a.apply(&self.origin) + *b, self.lattice.iter().map(|v| a.apply(v)).collect(), self.y_radius)
    }
}
