use super::operator::OperatorMatrix;
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerOptions {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_iter")]
    pub max_iter: usize,
    /// also compute the subdominant eigenvalue by deflation
    #[serde(default = "yes")]
    pub deflate: bool,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_iter() -> usize {
    20_000
}
fn yes() -> bool {
    true
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { tol: default_tol(), max_iter: default_iter(), deflate: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Spectrum {
    pub eigenvalue: Complex64,
    pub right: Vec<Complex64>,
    pub left: Vec<Complex64>,
    pub subdominant: Option<Complex64>,
    /// |subdominant| / |eigenvalue|
    pub gap: Option<f64>,
    pub iterations: usize,
}

impl Spectrum {
    pub fn right_re(&self) -> Vec<f64> {
        self.right.iter().map(|z| z.re).collect()
    }
    pub fn left_re(&self) -> Vec<f64> {
        self.left.iter().map(|z| z.re).collect()
    }
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn start_vector(n: usize, seed: f64) -> Vec<Complex64> {
    (0..n).map(|i| Complex64::new(1.0 + 0.5 * ((i as f64 + 1.0) * seed).sin(), 0.0)).collect()
}

/// Dominant eigenpair of a linear map by power iteration with the Rayleigh quotient.
pub fn power_iterate<F>(apply: F, start: Vec<Complex64>, opts: &PowerOptions) -> Result<(Complex64, Vec<Complex64>, usize)>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    let mut v = start;
    let nv = norm(&v);
    if nv == 0.0 {
        return Err(Error::Invalid("zero start vector".into()));
    }
    v.iter_mut().for_each(|z| *z /= nv);
    let mut lam_prev = Complex64::new(f64::NAN, 0.0);
    let mut settled = 0;
    for it in 1..=opts.max_iter {
        let w = apply(&v);
        let lam = dotc(&v, &w);
        let nw = norm(&w);
        if !nw.is_finite() {
            return Err(Error::Invalid("operator produced non-finite values".into()));
        }
        if nw == 0.0 {
            return Ok((Complex64::new(0.0, 0.0), v, it));
        }
        let resid = w.iter().zip(&v).map(|(a, b)| (a - lam * b).norm_sqr()).sum::<f64>().sqrt();
        v = w.into_iter().map(|z| z / nw).collect();
        let scale = lam.norm().max(1e-300);
        if (lam - lam_prev).norm() <= opts.tol * scale && resid <= opts.tol.sqrt() * scale {
            settled += 1;
            if settled >= 2 {
                return Ok((lam, v, it));
            }
        } else {
            settled = 0;
        }
        lam_prev = lam;
    }
    Err(Error::NonConvergence(opts.max_iter))
}

// rotate so that the entry sum is real and positive
fn fix_phase(v: &mut [Complex64]) {
    let s: Complex64 = v.iter().sum();
    if s.norm() > 0.0 {
        let ph = s / s.norm();
        v.iter_mut().for_each(|z| *z /= ph);
    }
}

/// Leading eigenvalue with right and left eigenvectors, and the subdominant eigenvalue of
/// M - lambda r l^T / (l^T r).
pub fn leading_spectrum(m: &OperatorMatrix, opts: &PowerOptions) -> Result<Spectrum> {
    if !m.is_finite() {
        return Err(Error::Invalid("operator has infinite entries (divergent tail)".into()));
    }
    let n = m.n;
    let (lam, mut r, it1) = power_iterate(|v| m.mul(v), start_vector(n, 0.0), opts)?;
    let (lam_l, mut l, it2) = power_iterate(|v| m.mul_transpose(v), start_vector(n, 0.0), opts)?;
    if (lam - lam_l).norm() > 1e-6 * lam.norm().max(1e-300) {
        log::warn!("left and right power iterations disagree: {lam} vs {lam_l}");
    }
    fix_phase(&mut r);
    fix_phase(&mut l);
    let lr: Complex64 = l.iter().zip(&r).map(|(a, b)| a * b).sum();
    let mut sub = None;
    let mut gap = None;
    let mut iterations = it1 + it2;
    if opts.deflate && n > 1 && lr.norm() > 0.0 {
        let apply = |v: &[Complex64]| {
            let mv = m.mul(v);
            let lv: Complex64 = l.iter().zip(v).map(|(a, b)| a * b).sum();
            let k = lam * lv / lr;
            mv.into_iter().zip(&r).map(|(a, b)| a - k * b).collect::<Vec<_>>()
        };
        match power_iterate(apply, start_vector(n, 1.37), opts) {
            Ok((mu, _, it3)) => {
                sub = Some(mu);
                gap = Some(mu.norm() / lam.norm());
                iterations += it3;
            }
            Err(e) => log::warn!("deflated iteration failed: {e}"),
        }
    }
    Ok(Spectrum { eigenvalue: lam, right: r, left: l, subdominant: sub, gap, iterations })
}
