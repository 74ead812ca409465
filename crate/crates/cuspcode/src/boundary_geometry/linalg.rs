use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Largest boundary dimension supported by the fixed-size types.
pub const MAX_DIM: usize = 3;

/// A point or vector of R^d, d <= MAX_DIM, stored inline.
#[derive(Clone, Copy, PartialEq)]
pub struct Vect {
    dim: usize,
    c: [f64; MAX_DIM],
}

impl Vect {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} out of range");
        Vect { dim, c: [0.0; MAX_DIM] }
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let mut out = Vect::zeros(v.len());
        out.c[..v.len()].copy_from_slice(v);
        out
    }

    pub fn new1(x: f64) -> Self {
        Vect::from_slice(&[x])
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Vect::from_slice(&[x, y])
    }

    /// Standard basis vector e_i.
    pub fn unit(dim: usize, i: usize) -> Self {
        let mut v = Vect::zeros(dim);
        v.c[i] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.c[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: f64) {
        debug_assert!(i < self.dim);
        self.c[i] = v;
    }

    #[inline]
    pub fn dot(&self, o: &Vect) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            s += self.c[i] * o.c[i];
        }
        s
    }

    #[inline]
    pub fn norm2(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    #[inline]
    pub fn scale(&self, k: f64) -> Vect {
        let mut out = *self;
        for i in 0..self.dim {
            out.c[i] *= k;
        }
        out
    }

    #[inline]
    pub fn dist(&self, o: &Vect) -> f64 {
        (*self - *o).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, o: &Vect) -> f64 {
        (0..self.dim).map(|i| (self.c[i] - o.c[i]).abs()).fold(0.0, f64::max)
    }
}

impl fmt::Debug for Vect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_slice())
    }
}

impl fmt::Display for Vect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.as_slice().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl Add for Vect {
    type Output = Vect;
    #[inline]
    fn add(mut self, o: Vect) -> Vect {
        debug_assert_eq!(self.dim, o.dim);
        for i in 0..self.dim {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl AddAssign for Vect {
    #[inline]
    fn add_assign(&mut self, o: Vect) {
        *self = *self + o;
    }
}

impl Sub for Vect {
    type Output = Vect;
    #[inline]
    fn sub(mut self, o: Vect) -> Vect {
        debug_assert_eq!(self.dim, o.dim);
        for i in 0..self.dim {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl SubAssign for Vect {
    #[inline]
    fn sub_assign(&mut self, o: Vect) {
        *self = *self - o;
    }
}

impl Neg for Vect {
    type Output = Vect;
    #[inline]
    fn neg(self) -> Vect {
        self.scale(-1.0)
    }
}

impl Mul<Vect> for f64 {
    type Output = Vect;
    #[inline]
    fn mul(self, v: Vect) -> Vect {
        v.scale(self)
    }
}

impl Serialize for Vect {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vect {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        if v.is_empty() || v.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!(
                "vector length {} outside 1..={MAX_DIM}",
                v.len()
            )));
        }
        Ok(Vect::from_slice(&v))
    }
}

/// Square d x d matrix; used for the orthogonal parts of Möbius maps.
#[derive(Clone, Copy, PartialEq)]
pub struct Mat {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl Mat {
    pub fn identity(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim));
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Mat { dim, m }
    }

    pub fn zeros(dim: usize) -> Self {
        Mat { dim, m: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let dim = rows.len();
        if dim == 0 || dim > MAX_DIM || rows.iter().any(|r| r.len() != dim) {
            return None;
        }
        let mut out = Mat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                out.m[i][j] = rows[i][j];
            }
        }
        Some(out)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim).map(|i| self.m[i][..self.dim].to_vec()).collect()
    }

    /// Planar rotation by `theta` (d = 2).
    pub fn rotation2(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Mat::from_rows(&[vec![c, -s], vec![s, c]]).unwrap()
    }

    /// Householder reflection I - 2 u u^T for a unit vector u.
    pub fn reflection(u: &Vect) -> Self {
        let d = u.dim();
        let mut out = Mat::identity(d);
        for i in 0..d {
            for j in 0..d {
                out.m[i][j] -= 2.0 * u.get(i) * u.get(j);
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[i][j] = v;
    }

    #[inline]
    pub fn apply(&self, v: &Vect) -> Vect {
        let mut out = Vect::zeros(self.dim);
        for i in 0..self.dim {
            let mut s = 0.0;
            for j in 0..self.dim {
                s += self.m[i][j] * v.get(j);
            }
            out.set(i, s);
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    pub fn mul(&self, o: &Mat) -> Mat {
        let d = self.dim;
        let mut out = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.m[i][k] * o.m[k][j];
                }
                out.m[i][j] = s;
            }
        }
        out
    }

    pub fn scale(&self, k: f64) -> Mat {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] *= k;
            }
        }
        out
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        match self.dim {
            1 => m[0][0],
            2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
            _ => {
                m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                    - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                    + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
            }
        }
    }

    /// max |M^T M - I| entrywise
    pub fn orthogonality_defect(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.m[i][j] - target).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, o: &Mat) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((self.m[i][j] - o.m[i][j]).abs());
            }
        }
        worst
    }

    /// Nearest orthogonal matrix by a few Newton steps X <- (X + X^-T)/2; keeps roundoff from drifting.
    pub fn reorthogonalize(&self) -> Mat {
        let mut x = *self;
        for _ in 0..3 {
            if x.orthogonality_defect() < 1e-15 {
                break;
            }
            // for near-orthogonal X, X^-T ~ X (2I - X^T X)
            let xtx = x.transpose().mul(&x);
            let mut corr = Mat::identity(self.dim).scale(2.0);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    corr.m[i][j] -= xtx.m[i][j];
                }
            }
            let inv_t = x.mul(&corr);
            for i in 0..self.dim {
                for j in 0..self.dim {
                    x.m[i][j] = 0.5 * (x.m[i][j] + inv_t.m[i][j]);
                }
            }
        }
        x
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.rows())
    }
}

impl Serialize for Mat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Mat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Mat::from_rows(&rows)
            .ok_or_else(|| serde::de::Error::custom("matrix must be square with size 1..=3"))
    }
}
