use super::operator::Discretization;
use super::power::{power_iterate, PowerOptions};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Grid in the shift s = sigma + ib from the critical exponent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanGrid {
    pub sigmas: Vec<f64>,
    pub bs: Vec<f64>,
}

impl ScanGrid {
    /// Inclusive ranges with the given steps (a zero step gives the single lower value).
    pub fn stepped(sigma: (f64, f64), sigma_step: f64, b: (f64, f64), b_step: f64) -> Result<Self> {
        Ok(ScanGrid { sigmas: stepped(sigma, sigma_step)?, bs: stepped(b, b_step)? })
    }
}

fn stepped((lo, hi): (f64, f64), step: f64) -> Result<Vec<f64>> {
    if !(hi >= lo) || step < 0.0 || !step.is_finite() {
        return Err(Error::Invalid(format!("bad scan range [{lo}, {hi}] step {step}")));
    }
    if step == 0.0 {
        return Ok(vec![lo]);
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanPoint {
    pub sigma: f64,
    pub b: f64,
    pub spectral_radius: f64,
    pub min_singular: f64,
    pub near_singular: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanField {
    /// heuristic: finite-matrix singular values, not a certified resonance computation
    pub heuristic: bool,
    pub delta: f64,
    pub threshold: f64,
    /// row-major over (sigma, b)
    pub points: Vec<ScanPoint>,
    pub n_sigma: usize,
    pub n_b: usize,
    /// near-singular grid points connected to the one nearest s = 0
    pub trivial_region: Vec<(f64, f64)>,
    /// near-singular points outside that region
    pub other_near_singular: Vec<(f64, f64)>,
    /// largest eta with no other near-singular point at sigma >= -eta on the grid
    pub zero_free_strip: f64,
}

impl ScanField {
    pub fn min_singular_where(&self, keep: impl Fn(&ScanPoint) -> bool) -> Option<f64> {
        self.points.iter().filter(|p| keep(p)).map(|p| p.min_singular).reduce(f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma,b,spectral_radius,min_singular,near_singular\n");
        for p in &self.points {
            s.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                p.sigma, p.b, p.spectral_radius, p.min_singular, p.near_singular
            ));
        }
        s
    }
}

fn min_singular(m: &DMatrix<Complex64>) -> f64 {
    let n = m.nrows();
    let a = DMatrix::<Complex64>::identity(n, n) - m;
    a.singular_values().iter().copied().fold(f64::INFINITY, f64::min)
}

fn spectral_radius(m: &DMatrix<Complex64>) -> f64 {
    if let Some(ev) = m.clone().try_schur(1e-12, 10_000).and_then(|s| s.eigenvalues()) {
        return ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    let n = m.nrows();
    let opts = PowerOptions { tol: 1e-10, max_iter: 20_000, deflate: false };
    power_iterate(|v| (m * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec(), vec![Complex64::new(1.0, 0.0); n], &opts)
        .map(|r| r.0.norm())
        .unwrap_or(f64::NAN)
}

/// Minimum singular value of I - M(delta + s) and spectral radius of M(delta + s) on a grid.
pub fn resonance_scan(disc: &Discretization, delta: f64, grid: &ScanGrid, threshold: f64) -> Result<ScanField> {
    if grid.sigmas.is_empty() || grid.bs.is_empty() {
        return Err(Error::Invalid("empty scan grid".into()));
    }
    let cells: Vec<(f64, f64)> = grid.sigmas.iter().flat_map(|s| grid.bs.iter().map(move |b| (*s, *b))).collect();
    let points: Vec<ScanPoint> = cells
        .par_iter()
        .map(|&(sigma, b)| {
            let m = disc.assemble(Complex64::new(delta + sigma, b));
            if !m.is_finite() {
                return ScanPoint { sigma, b, spectral_radius: f64::INFINITY, min_singular: f64::NAN, near_singular: false };
            }
            let d = m.to_dense();
            let ms = min_singular(&d);
            ScanPoint { sigma, b, spectral_radius: spectral_radius(&d), min_singular: ms, near_singular: ms < threshold }
        })
        .collect();
    let (ns, nb) = (grid.sigmas.len(), grid.bs.len());
    // flood fill from the grid point nearest s = 0
    let start = (0..points.len())
        .min_by(|i, j| {
            let d = |k: usize| points[k].sigma.hypot(points[k].b);
            d(*i).total_cmp(&d(*j))
        })
        .unwrap();
    let mut in_trivial = vec![false; points.len()];
    if points[start].near_singular {
        let mut stack = vec![start];
        in_trivial[start] = true;
        while let Some(k) = stack.pop() {
            let (i, j) = (k / nb, k % nb);
            let mut nbrs = vec![];
            if i > 0 {
                nbrs.push(k - nb);
            }
            if i + 1 < ns {
                nbrs.push(k + nb);
            }
            if j > 0 {
                nbrs.push(k - 1);
            }
            if j + 1 < nb {
                nbrs.push(k + 1);
            }
            for q in nbrs {
                if points[q].near_singular && !in_trivial[q] {
                    in_trivial[q] = true;
                    stack.push(q);
                }
            }
        }
    }
    let trivial_region = (0..points.len()).filter(|k| in_trivial[*k]).map(|k| (points[k].sigma, points[k].b)).collect();
    let other: Vec<(f64, f64)> = (0..points.len())
        .filter(|k| points[*k].near_singular && !in_trivial[*k])
        .map(|k| (points[k].sigma, points[k].b))
        .collect();
    let lowest = grid.sigmas.iter().copied().fold(f64::INFINITY, f64::min);
    let zero_free_strip = other
        .iter()
        .map(|(s, _)| -s)
        .filter(|e| *e >= 0.0)
        .fold(-lowest, |acc: f64, e| acc.min(e))
        .max(0.0);
    Ok(ScanField {
        heuristic: true,
        delta,
        threshold,
        points,
        n_sigma: ns,
        n_b: nb,
        trivial_region,
        other_near_singular: other,
        zero_free_strip,
    })
}
