use super::linalg::{Mat, Vect};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Structural identities (orthogonality, round trips).
pub const TOL_STRUCTURAL: f64 = 1e-10;
/// Analytic identities (chain rule, cocycles).
pub const TOL_ANALYTIC: f64 = 1e-8;
/// Finite-difference comparisons.
pub const TOL_FINITE_DIFF: f64 = 1e-6;
/// Relative size of g2(inf) - pole(g1) below which a composition is taken to fix infinity.
pub const TOL_FIXES_INFINITY: f64 = 1e-12;

/// Module tolerances; `Default` gives the module constants, configs may override.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub structural: f64,
    pub analytic: f64,
    pub finite_difference: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            structural: TOL_STRUCTURAL,
            analytic: TOL_ANALYTIC,
            finite_difference: TOL_FINITE_DIFF,
        }
    }
}

/// A point of R^d or the point at infinity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoundaryPoint {
    Finite(Vect),
    Infinity,
}

impl BoundaryPoint {
    pub fn is_infinity(&self) -> bool {
        matches!(self, BoundaryPoint::Infinity)
    }

    pub fn finite(&self) -> Option<Vect> {
        match self {
            BoundaryPoint::Finite(v) => Some(*v),
            BoundaryPoint::Infinity => None,
        }
    }

    /// |x|^2, infinite at infinity
    pub fn norm2(&self) -> f64 {
        match self {
            BoundaryPoint::Finite(v) => v.norm2(),
            BoundaryPoint::Infinity => f64::INFINITY,
        }
    }
}

impl From<Vect> for BoundaryPoint {
    fn from(v: Vect) -> Self {
        BoundaryPoint::Finite(v)
    }
}

impl Serialize for BoundaryPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BoundaryPoint::Finite(v) => v.serialize(s),
            BoundaryPoint::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for BoundaryPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Tag(String),
            Coords(Vect),
        }
        match Repr::deserialize(d)? {
            Repr::Coords(v) => Ok(BoundaryPoint::Finite(v)),
            Repr::Tag(t) if t == "inf" => Ok(BoundaryPoint::Infinity),
            Repr::Tag(t) => Err(serde::de::Error::custom(format!(
                "expected coordinates or \"inf\", got {t:?}"
            ))),
        }
    }
}

/// Point (base, height) of the upper half-space H^{d+1}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpacePoint {
    pub base: Vect,
    pub height: f64,
}

impl HalfSpacePoint {
    pub fn new(base: Vect, height: f64) -> Self {
        debug_assert!(height > 0.0);
        HalfSpacePoint { base, height }
    }

    /// The reference point o = (0, ..., 0, 1).
    pub fn origin(dim: usize) -> Self {
        HalfSpacePoint { base: Vect::zeros(dim), height: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Euclidean,
    Spherical,
}

/// Boundary isometry in Bruhat form.
///
/// `Inversive`: x -> h A (x - p_inv)/|x - p_inv|^2 + p, sending p_inv to infinity and infinity to p.
/// `Affine`: x -> scale A x + b, fixing infinity. Cusp stabilizers have scale 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MobiusMap {
    Inversive { p: Vect, p_inv: Vect, h: f64, a: Mat },
    Affine { scale: f64, a: Mat, b: Vect },
}

impl MobiusMap {
    pub fn identity(dim: usize) -> Self {
        MobiusMap::Affine { scale: 1.0, a: Mat::identity(dim), b: Vect::zeros(dim) }
    }

    pub fn translation(b: Vect) -> Self {
        MobiusMap::Affine { scale: 1.0, a: Mat::identity(b.dim()), b }
    }

    pub fn dim(&self) -> usize {
        match self {
            MobiusMap::Inversive { p, .. } => p.dim(),
            MobiusMap::Affine { b, .. } => b.dim(),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, MobiusMap::Affine { .. })
    }

    /// g(infinity)
    pub fn image_of_infinity(&self) -> BoundaryPoint {
        match self {
            MobiusMap::Inversive { p, .. } => BoundaryPoint::Finite(*p),
            MobiusMap::Affine { .. } => BoundaryPoint::Infinity,
        }
    }

    /// g^{-1}(infinity), the point xi of the distortion formulas.
    pub fn pole(&self) -> BoundaryPoint {
        match self {
            MobiusMap::Inversive { p_inv, .. } => BoundaryPoint::Finite(*p_inv),
            MobiusMap::Affine { .. } => BoundaryPoint::Infinity,
        }
    }

    /// Horoball-height scale h (Inversive) or 1/scale (Affine).
    pub fn height_scale(&self) -> f64 {
        match self {
            MobiusMap::Inversive { h, .. } => *h,
            MobiusMap::Affine { scale, .. } => 1.0 / scale,
        }
    }

    pub fn orth(&self) -> Mat {
        match self {
            MobiusMap::Inversive { a, .. } | MobiusMap::Affine { a, .. } => *a,
        }
    }

    /// Checks h > 0 and orthogonality of A.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let (scale, a) = match self {
            MobiusMap::Inversive { h, a, p, p_inv } => {
                if p.dim() != p_inv.dim() || a.dim() != p.dim() {
                    return Err(Error::Dimension(p.dim(), a.dim()));
                }
                if !p.is_finite() || !p_inv.is_finite() {
                    return Err(Error::Invalid("non-finite Bruhat point".into()));
                }
                (*h, a)
            }
            MobiusMap::Affine { scale, a, b } => {
                if a.dim() != b.dim() {
                    return Err(Error::Dimension(a.dim(), b.dim()));
                }
                (*scale, a)
            }
        };
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Invalid(format!("scale must be positive, got {scale}")));
        }
        let defect = a.orthogonality_defect();
        if defect > tol {
            return Err(Error::Invalid(format!("A not orthogonal (defect {defect:e})")));
        }
        Ok(())
    }

    /// Action on a finite point; None when x is the pole.
    #[inline]
    pub fn apply_vec(&self, x: &Vect) -> Option<Vect> {
        match self {
            MobiusMap::Inversive { p, p_inv, h, a } => {
                let u = *x - *p_inv;
                let r2 = u.norm2();
                if r2 == 0.0 {
                    return None;
                }
                Some(a.apply(&u).scale(h / r2) + *p)
            }
            MobiusMap::Affine { scale, a, b } => Some(a.apply(x).scale(*scale) + *b),
        }
    }

    pub fn apply(&self, x: &BoundaryPoint) -> BoundaryPoint {
        match x {
            BoundaryPoint::Infinity => self.image_of_infinity(),
            BoundaryPoint::Finite(v) => match self.apply_vec(v) {
                Some(y) => BoundaryPoint::Finite(y),
                None => BoundaryPoint::Infinity,
            },
        }
    }

    /// Extension to the upper half-space.
    pub fn apply_half(&self, z: &HalfSpacePoint) -> HalfSpacePoint {
        match self {
            MobiusMap::Inversive { p, p_inv, h, a } => {
                let u = z.base - *p_inv;
                let rho2 = u.norm2() + z.height * z.height;
                HalfSpacePoint { base: a.apply(&u).scale(h / rho2) + *p, height: h * z.height / rho2 }
            }
            MobiusMap::Affine { scale, a, b } => HalfSpacePoint {
                base: a.apply(&z.base).scale(*scale) + *b,
                height: scale * z.height,
            },
        }
    }

    /// Euclidean distortion |g'(x)| at a finite point; None at the pole.
    #[inline]
    pub fn deriv_vec(&self, x: &Vect) -> Option<f64> {
        match self {
            MobiusMap::Inversive { p_inv, h, .. } => {
                let r2 = (*x - *p_inv).norm2();
                if r2 == 0.0 {
                    None
                } else {
                    Some(h / r2)
                }
            }
            MobiusMap::Affine { scale, .. } => Some(*scale),
        }
    }

    pub fn deriv(&self, x: &BoundaryPoint, metric: Metric) -> Result<f64> {
        match metric {
            Metric::Euclidean => match x {
                BoundaryPoint::Infinity => Err(Error::Pole("infinity".into())),
                BoundaryPoint::Finite(v) => {
                    self.deriv_vec(v).ok_or_else(|| Error::Pole(format!("{v}")))
                }
            },
            Metric::Spherical => Ok(self.deriv_spherical(x)),
        }
    }

    /// Spherical distortion (1+|x|^2)/(1+|gx|^2) |g'(x)|, with the limits at the pole and at infinity.
    pub fn deriv_spherical(&self, x: &BoundaryPoint) -> f64 {
        match (self, x) {
            (MobiusMap::Inversive { p, h, .. }, BoundaryPoint::Infinity) => h / (1.0 + p.norm2()),
            (MobiusMap::Affine { scale, .. }, BoundaryPoint::Infinity) => 1.0 / scale,
            (MobiusMap::Inversive { p_inv, h, .. }, BoundaryPoint::Finite(v)) if *v == *p_inv => {
                (1.0 + p_inv.norm2()) / h
            }
            (_, BoundaryPoint::Finite(v)) => {
                let gx = self.apply_vec(v).expect("pole handled above");
                (1.0 + v.norm2()) / (1.0 + gx.norm2()) * self.deriv_vec(v).unwrap()
            }
        }
    }

    /// Directional derivative of log|g'| at x along e: -2<x - xi, e>/|x - xi|^2.
    pub fn grad_log_deriv(&self, x: &Vect, e: &Vect) -> Result<f64> {
        match self {
            MobiusMap::Inversive { p_inv, .. } => {
                let u = *x - *p_inv;
                let r2 = u.norm2();
                if r2 == 0.0 {
                    return Err(Error::Pole(format!("{x}")));
                }
                Ok(-2.0 * u.dot(e) / r2)
            }
            MobiusMap::Affine { .. } => Ok(0.0),
        }
    }

    /// Full Jacobian Dg(x) at a finite non-pole point.
    pub fn jacobian(&self, x: &Vect) -> Option<Mat> {
        match self {
            MobiusMap::Inversive { p_inv, h, a, .. } => {
                let u = *x - *p_inv;
                let r2 = u.norm2();
                if r2 == 0.0 {
                    return None;
                }
                let refl = Mat::reflection(&u.scale(1.0 / r2.sqrt()));
                Some(a.mul(&refl).scale(h / r2))
            }
            MobiusMap::Affine { scale, a, .. } => Some(a.scale(*scale)),
        }
    }

    pub fn inverse(&self) -> MobiusMap {
        match self {
            MobiusMap::Inversive { p, p_inv, h, a } => {
                MobiusMap::Inversive { p: *p_inv, p_inv: *p, h: *h, a: a.transpose() }
            }
            MobiusMap::Affine { scale, a, b } => {
                let at = a.transpose();
                MobiusMap::Affine { scale: 1.0 / scale, a: at, b: -at.apply(b).scale(1.0 / scale) }
            }
        }
    }

    /// self o other, renormalized into Bruhat form.
    pub fn compose(&self, other: &MobiusMap) -> Result<MobiusMap> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(self.dim(), other.dim()));
        }
        Ok(self.compose_unchecked(other))
    }

    pub fn compose_unchecked(&self, other: &MobiusMap) -> MobiusMap {
        use MobiusMap::*;
        match (self, other) {
            (Affine { scale: s1, a: a1, b: b1 }, Affine { scale: s2, a: a2, b: b2 }) => Affine {
                scale: s1 * s2,
                a: a1.mul(a2),
                b: a1.apply(b2).scale(*s1) + *b1,
            },
            (Inversive { p, p_inv, h, a: a1 }, Affine { scale, a: a2, .. }) => {
                // pole moves to the preimage of p_inv
                let inv = other.inverse();
                Inversive { p: *p, p_inv: inv.apply_vec(p_inv).unwrap(), h: h / scale, a: a1.mul(a2) }
            }
            (Affine { scale, a: a1, b }, Inversive { p, p_inv, h, a: a2 }) => Inversive {
                p: a1.apply(p).scale(*scale) + *b,
                p_inv: *p_inv,
                h: scale * h,
                a: a1.mul(a2),
            },
            (Inversive { p: p1, p_inv: q1, h: h1, a: a1 }, Inversive { p: p2, p_inv: q2, h: h2, a: a2 }) => {
                let w = *p2 - *q1;
                let w2 = w.norm2();
                let size = 1.0 + q1.norm2().sqrt().max(p2.norm2().sqrt());
                if w2.sqrt() <= TOL_FIXES_INFINITY * size {
                    let scale = h1 / h2;
                    let a = a1.mul(a2);
                    let b = *p1 - a.apply(q2).scale(scale);
                    Affine { scale, a, b }
                } else {
                    let what = w.scale(1.0 / w2.sqrt());
                    let a = a1.mul(&Mat::reflection(&what)).mul(a2);
                    Inversive {
                        p: a1.apply(&w).scale(h1 / w2) + *p1,
                        p_inv: *q2 - a2.transpose().apply(&w).scale(h2 / w2),
                        h: h1 * h2 / w2,
                        a,
                    }
                }
            }
        }
    }

    /// Map of a real 2x2 matrix [[a, b], [c, d]] acting on R (d = 1).
    pub fn from_real_matrix(m: [[f64; 2]; 2]) -> Result<MobiusMap> {
        let [[a, b], [c, d]] = m;
        let det = a * d - b * c;
        if det == 0.0 || !det.is_finite() {
            return Err(Error::Invalid("singular matrix".into()));
        }
        if c == 0.0 {
            let k = a / d;
            return Ok(MobiusMap::Affine {
                scale: k.abs(),
                a: Mat::from_rows(&[vec![k.signum()]]).unwrap(),
                b: Vect::new1(b / d),
            });
        }
        Ok(MobiusMap::Inversive {
            p: Vect::new1(a / c),
            p_inv: Vect::new1(-d / c),
            h: det.abs() / (c * c),
            a: Mat::from_rows(&[vec![-det.signum()]]).unwrap(),
        })
    }

    /// Map of a complex 2x2 matrix acting on C = R^2 (d = 2).
    pub fn from_complex_matrix(m: [[Complex64; 2]; 2]) -> Result<MobiusMap> {
        let [[a, b], [c, d]] = m;
        let det = a * d - b * c;
        if det.norm() == 0.0 || !det.is_finite() {
            return Err(Error::Invalid("singular matrix".into()));
        }
        let v = |z: Complex64| Vect::new2(z.re, z.im);
        if c.norm() == 0.0 {
            let k = a / d;
            return Ok(MobiusMap::Affine {
                scale: k.norm(),
                a: Mat::rotation2(k.arg()),
                b: v(b / d),
            });
        }
        // (az+b)/(cz+d) = a/c - det/c^2 * 1/(z + d/c); 1/w = conj(w)/|w|^2
        let u = -det / (c * c);
        let h = u.norm();
        let un = u / h;
        // z -> un * conj(z) as a real matrix
        let refl = Mat::from_rows(&[vec![un.re, un.im], vec![un.im, -un.re]]).unwrap();
        Ok(MobiusMap::Inversive { p: v(a / c), p_inv: v(-d / c), h, a: refl })
    }

    /// Entrywise distance between Bruhat tuples; infinite across variants.
    pub fn distance(&self, other: &MobiusMap) -> f64 {
        use MobiusMap::*;
        match (self, other) {
            (Inversive { p, p_inv, h, a }, Inversive { p: p2, p_inv: q2, h: h2, a: a2 }) => p
                .max_abs_diff(p2)
                .max(p_inv.max_abs_diff(q2))
                .max((h - h2).abs())
                .max(a.max_abs_diff(a2)),
            (Affine { scale, a, b }, Affine { scale: s2, a: a2, b: b2 }) => {
                (scale - s2).abs().max(a.max_abs_diff(a2)).max(b.max_abs_diff(b2))
            }
            _ => f64::INFINITY,
        }
    }

    /// Canonical key: Bruhat tuple rounded to 1e-9 (rounding also folds -0 into 0).
    pub fn canonical_key(&self) -> Vec<i64> {
        let q = |x: f64| (x * 1e9).round() as i64;
        let mut key = Vec::with_capacity(16);
        let (tag, parts): (i64, Vec<f64>) = match self {
            MobiusMap::Inversive { p, p_inv, h, a } => {
                let mut v = p.as_slice().to_vec();
                v.extend_from_slice(p_inv.as_slice());
                v.push(*h);
                v.extend(a.rows().into_iter().flatten());
                (1, v)
            }
            MobiusMap::Affine { scale, a, b } => {
                let mut v = vec![*scale];
                v.extend_from_slice(b.as_slice());
                v.extend(a.rows().into_iter().flatten());
                (2, v)
            }
        };
        key.push(tag);
        key.extend(parts.into_iter().map(q));
        key
    }

    /// Splits a stabilizer element into the blocks (A on the first d-k axes, R on the last k, translation b).
    pub fn stabilizer_blocks(&self, k: usize) -> Option<(Mat, Mat, Vect)> {
        let MobiusMap::Affine { scale, a, b } = self else { return None };
        let d = a.dim();
        if (scale - 1.0).abs() > TOL_STRUCTURAL || k == 0 || k > d {
            return None;
        }
        let dy = d - k;
        for i in 0..d {
            for j in 0..d {
                if (i < dy) != (j < dy) && a.get(i, j).abs() > TOL_STRUCTURAL {
                    return None;
                }
            }
        }
        if b.as_slice()[..dy].iter().any(|x| x.abs() > TOL_STRUCTURAL) {
            return None;
        }
        let block = |off: usize, n: usize| {
            let rows: Vec<Vec<f64>> =
                (0..n).map(|i| (0..n).map(|j| a.get(off + i, off + j)).collect()).collect();
            rows
        };
        let ay = if dy > 0 { Mat::from_rows(&block(0, dy)).unwrap() } else { Mat::identity(1) };
        let r = Mat::from_rows(&block(dy, k)).unwrap();
        Some((ay, r, Vect::from_slice(&b.as_slice()[dy..])))
    }
}

/// beta_x(z, z') = lim d(z, x_t) - d(z', x_t).
pub fn busemann(x: &BoundaryPoint, z: &HalfSpacePoint, z2: &HalfSpacePoint) -> f64 {
    match x {
        BoundaryPoint::Infinity => (z2.height / z.height).ln(),
        BoundaryPoint::Finite(xv) => {
            // transport x to infinity: heights become h / |z - x|^2
            let w = |q: &HalfSpacePoint| q.height / ((q.base - *xv).norm2() + q.height * q.height);
            (w(z2) / w(z)).ln()
        }
    }
}

/// Hyperbolic distance in the upper half-space model.
pub fn hyperbolic_distance(x: &HalfSpacePoint, y: &HalfSpacePoint) -> f64 {
    let dh = x.height - y.height;
    let e2 = (x.base - y.base).norm2() + dh * dh;
    2.0 * (e2.sqrt() / (2.0 * (x.height * y.height).sqrt())).asinh()
}

pub fn apply(m: &MobiusMap, x: &BoundaryPoint) -> BoundaryPoint {
    m.apply(x)
}

pub fn deriv(m: &MobiusMap, x: &BoundaryPoint, metric: Metric) -> Result<f64> {
    m.deriv(x, metric)
}

pub fn compose(m1: &MobiusMap, m2: &MobiusMap) -> Result<MobiusMap> {
    m1.compose(m2)
}

pub fn invert(m: &MobiusMap) -> MobiusMap {
    m.inverse()
}

pub fn grad_log_deriv(m: &MobiusMap, x: &BoundaryPoint, e: &Vect) -> Result<f64> {
    match x {
        BoundaryPoint::Finite(v) => m.grad_log_deriv(v, e),
        BoundaryPoint::Infinity => Err(Error::Pole("infinity".into())),
    }
}
