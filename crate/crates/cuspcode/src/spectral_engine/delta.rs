use super::measure::DiscreteMeasure;
use super::operator::Discretization;
use super::power::{leading_spectrum, power_iterate, PowerOptions};
use crate::boundary_geometry::Vect;
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeltaOptions {
    #[serde(default)]
    pub lo: f64,
    #[serde(default = "two")]
    pub hi: f64,
    #[serde(default = "default_width")]
    pub width: f64,
    #[serde(default = "quiet_power")]
    pub power: PowerOptions,
}

fn two() -> f64 {
    2.0
}
fn default_width() -> f64 {
    1e-8
}
fn quiet_power() -> PowerOptions {
    PowerOptions { deflate: false, ..PowerOptions::default() }
}

impl Default for DeltaOptions {
    fn default() -> Self {
        DeltaOptions { lo: 0.0, hi: 2.0, width: default_width(), power: quiet_power() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaEstimate {
    pub delta: f64,
    pub bracket: (f64, f64),
    pub lambda_at_root: f64,
    pub evaluations: usize,
}

/// Leading eigenvalue lambda(a) of the real operator; infinite when a tail diverges.
pub fn pressure_eigenvalue(disc: &Discretization, a: f64, opts: &PowerOptions) -> Result<f64> {
    let m = disc.assemble(Complex64::new(a, 0.0));
    if !m.is_finite() {
        return Ok(f64::INFINITY);
    }
    let n = m.n;
    let (lam, _, _) = power_iterate(|v| m.mul(v), vec![Complex64::new(1.0, 0.0); n], opts)?;
    Ok(lam.re)
}

const ENDPOINT_ROOT: f64 = 1e-10;

/// Root of log lambda(a) = 0 by bisection. lambda is decreasing in a; an endpoint that is
/// itself a root (|log lambda| <= 1e-10, as for a one-point limit set at a = 0) is returned.
pub fn estimate_delta(disc: &Discretization, opts: &DeltaOptions) -> Result<DeltaEstimate> {
    if !(opts.hi > opts.lo) {
        return Err(Error::Invalid("delta bracket must have hi > lo".into()));
    }
    let f = |a: f64| -> Result<f64> {
        let l = pressure_eigenvalue(disc, a, &opts.power)?;
        Ok(if l.is_infinite() { f64::INFINITY } else if l <= 0.0 { f64::NEG_INFINITY } else { l.ln() })
    };
    let (mut lo, mut hi) = (opts.lo, opts.hi);
    let flo = f(lo)?;
    let mut evals = 1;
    if flo.abs() <= ENDPOINT_ROOT {
        return Ok(DeltaEstimate { delta: lo, bracket: (lo, lo), lambda_at_root: flo.exp(), evaluations: evals });
    }
    let fhi = f(hi)?;
    evals += 1;
    if fhi.abs() <= ENDPOINT_ROOT {
        return Ok(DeltaEstimate { delta: hi, bracket: (hi, hi), lambda_at_root: fhi.exp(), evaluations: evals });
    }
    if flo < 0.0 || fhi > 0.0 {
        return Err(Error::Bracket { lo, hi });
    }
    let mut fmid = 0.0;
    while hi - lo > opts.width {
        let mid = 0.5 * (lo + hi);
        fmid = f(mid)?;
        evals += 1;
        if fmid > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DeltaEstimate { delta: 0.5 * (lo + hi), bracket: (lo, hi), lambda_at_root: fmid.exp(), evaluations: evals })
}

/// Perron data of the operator at one real exponent.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralReport {
    pub delta_estimate: f64,
    /// exponent the eigen-data belong to
    pub exponent: f64,
    pub leading_eigenvalue: f64,
    pub nodes: Vec<Vect>,
    /// right eigenfunction f, normalized so that sum left_i f_i = 1
    pub right: Vec<f64>,
    /// conformal masses, summing to 1
    pub left: Vec<f64>,
    /// invariant masses left_i f_i, summing to 1
    pub invariant: Vec<f64>,
    pub subdominant: Option<Complex64>,
    pub gap: Option<f64>,
    pub truncated_mass: f64,
    pub iterations: usize,
}

impl SpectralReport {
    pub fn conformal_measure(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::new(self.nodes.clone(), self.left.clone())
    }

    pub fn invariant_measure(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::new(self.nodes.clone(), self.invariant.clone())
    }
}

pub fn spectral_report(disc: &Discretization, delta: f64, exponent: f64, opts: &PowerOptions) -> Result<SpectralReport> {
    let m = disc.assemble(Complex64::new(exponent, 0.0));
    let sp = leading_spectrum(&m, opts)?;
    let mut left: Vec<f64> = sp.left.iter().map(|z| z.re.max(0.0)).collect();
    let tl: f64 = left.iter().sum();
    if !(tl > 0.0) {
        return Err(Error::Invalid("left eigenvector has no positive mass".into()));
    }
    left.iter_mut().for_each(|x| *x /= tl);
    let mut right: Vec<f64> = sp.right.iter().map(|z| z.re).collect();
    let lf: f64 = left.iter().zip(&right).map(|(a, b)| a * b).sum();
    right.iter_mut().for_each(|x| *x /= lf);
    let invariant: Vec<f64> = left.iter().zip(&right).map(|(a, b)| (a * b).max(0.0)).collect();
    let ti: f64 = invariant.iter().sum();
    Ok(SpectralReport {
        delta_estimate: delta,
        exponent,
        leading_eigenvalue: sp.eigenvalue.re,
        nodes: disc.nodes().to_vec(),
        right,
        left,
        invariant: invariant.into_iter().map(|x| x / ti).collect(),
        subdominant: sp.subdominant,
        gap: sp.gap,
        truncated_mass: disc.truncated_mass(delta),
        iterations: sp.iterations,
    })
}
