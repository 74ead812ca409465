use super::measure::DiscreteMeasure;
use crate::boundary_geometry::{ChartBox, Vect};
use crate::stats::line_fit;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticOptions {
    /// number of sampled centres for the doubling sweep
    #[serde(default = "default_centres")]
    pub centres: usize,
    /// radii r_max 2^-j, j = 0..levels
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_rmax")]
    pub r_max: f64,
    /// cusp-scaling radius window
    #[serde(default = "default_rlo")]
    pub cusp_r_min: f64,
    #[serde(default = "default_rhi")]
    pub cusp_r_max: f64,
    #[serde(default = "default_radii")]
    pub cusp_radii: usize,
    /// epsilon in the boundary ratio mu(N_{eps r}) / mu(N_r)
    #[serde(default = "half")]
    pub boundary_eps: f64,
    #[serde(default = "default_min_nodes")]
    pub min_nodes: usize,
}

fn default_centres() -> usize {
    64
}
fn default_levels() -> usize {
    6
}
fn default_rmax() -> f64 {
    0.25
}
fn default_rlo() -> f64 {
    0.01
}
fn default_rhi() -> f64 {
    0.3
}
fn default_radii() -> usize {
    12
}
fn half() -> f64 {
    0.5
}
fn default_min_nodes() -> usize {
    20
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions {
            centres: default_centres(),
            levels: default_levels(),
            r_max: default_rmax(),
            cusp_r_min: default_rlo(),
            cusp_r_max: default_rhi(),
            cusp_radii: default_radii(),
            boundary_eps: half(),
            min_nodes: default_min_nodes(),
        }
    }
}

/// A parabolic point to test, with the rank of its stabilizer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CuspProbe {
    pub p: Vect,
    pub rank: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CuspScaling {
    pub p: Vect,
    pub slope: f64,
    pub expected: f64,
    pub r2: f64,
    pub radii: Vec<f64>,
    pub masses: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureDiagnostics {
    pub doubling_max: f64,
    pub doubling_samples: usize,
    pub cusp_scaling: Vec<CuspScaling>,
    pub boundary_ratio_sup: f64,
    pub warnings: Vec<String>,
}

/// Doubling, cusp scaling and boundary-mass checks on a discrete conformal measure.
pub fn measure_diagnostics(
    mu: &DiscreteMeasure,
    domain: &ChartBox,
    delta: f64,
    cusps: &[CuspProbe],
    opts: &DiagnosticOptions,
) -> MeasureDiagnostics {
    let mut warnings = vec![];
    let mu = mu.normalized();
    // centres: nodes with mass, evenly strided
    let support: Vec<&Vect> = mu.points.iter().zip(&mu.masses).filter(|(_, m)| **m > 0.0).map(|(p, _)| p).collect();
    let stride = (support.len() / opts.centres.max(1)).max(1);
    let mut doubling_max: f64 = 0.0;
    let mut samples = 0;
    for x in support.iter().step_by(stride) {
        for j in 0..opts.levels {
            let r = opts.r_max / 2f64.powi(j as i32);
            let inner = mu.ball_mass(x, r);
            if inner <= 0.0 || mu.ball_count(x, r) < opts.min_nodes {
                continue;
            }
            doubling_max = doubling_max.max(mu.ball_mass(x, 2.0 * r) / inner);
            samples += 1;
        }
    }
    if samples == 0 {
        warnings.push("doubling: no ball held enough nodes".into());
    }
    let mut cusp_scaling = vec![];
    for c in cusps {
        let k = opts.cusp_radii.max(2);
        let (lr, lm): (Vec<f64>, Vec<f64>) = (0..k)
            .map(|i| {
                let t = i as f64 / (k - 1) as f64;
                opts.cusp_r_min * (opts.cusp_r_max / opts.cusp_r_min).powf(t)
            })
            .map(|r| (r, mu.ball_mass(&c.p, r)))
            .filter(|(_, m)| *m > 0.0)
            .map(|(r, m)| (r.ln(), m.ln()))
            .unzip();
        let smallest = mu.ball_count(&c.p, opts.cusp_r_min);
        if smallest < opts.min_nodes {
            warnings.push(format!(
                "insufficient resolution: {smallest} nodes in B({}, {}) (need {})",
                c.p, opts.cusp_r_min, opts.min_nodes
            ));
        }
        let expected = 2.0 * delta - c.rank as f64;
        if let Some(fit) = line_fit(&lr, &lm) {
            cusp_scaling.push(CuspScaling {
                p: c.p,
                slope: fit.slope,
                expected,
                r2: fit.r2,
                radii: lr.iter().map(|x| x.exp()).collect(),
                masses: lm.iter().map(|x| x.exp()).collect(),
            });
        } else {
            warnings.push(format!("cusp scaling at {}: too few nonempty balls", c.p));
        }
    }
    // boundary neighbourhoods inside the domain
    let dist: Vec<f64> = mu.points.iter().map(|p| domain.dist_to_boundary(p)).collect();
    let nb = |r: f64| -> f64 { dist.iter().zip(&mu.masses).filter(|(d, _)| **d < r).map(|(_, m)| m).sum() };
    let mut boundary_ratio_sup: f64 = 0.0;
    for j in 0..opts.levels {
        let r = opts.r_max / 2f64.powi(j as i32);
        let outer = nb(r);
        if outer > 0.0 {
            boundary_ratio_sup = boundary_ratio_sup.max(nb(opts.boundary_eps * r) / outer);
        }
    }
    MeasureDiagnostics { doubling_max, doubling_samples: samples, cusp_scaling, boundary_ratio_sup, warnings }
}
