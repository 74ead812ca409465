use super::phase::{PhaseSampler, SampleOptions, Suspension};
use crate::boundary_geometry::Vect;
use crate::error::{Error, Result};
use crate::spectral_engine::SpectralReport;
use crate::stats::line_fit;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Lipschitz observables of the forward coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Observable {
    Constant { value: f64 },
    Coordinate { axis: usize },
    Cosine { axis: usize, freq: f64 },
}

impl Observable {
    pub fn eval(&self, x: &Vect) -> f64 {
        match self {
            Observable::Constant { value } => *value,
            Observable::Coordinate { axis } => x.get(*axis),
            Observable::Cosine { axis, freq } => (std::f64::consts::TAU * freq * x.get(*axis)).cos(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Observable::Constant { .. } => 0.0,
            Observable::Coordinate { .. } => 1.0,
            Observable::Cosine { freq, .. } => std::f64::consts::TAU * freq.abs(),
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Observable::Coordinate { axis } | Observable::Cosine { axis, .. } if *axis >= dim => {
                Err(Error::Invalid(format!("observable axis {axis} out of range for dimension {dim}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationOptions {
    pub times: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// window threshold in standard errors
    #[serde(default = "default_window")]
    pub window_se: f64,
    #[serde(default)]
    pub sampling: SampleOptions,
}

fn default_batches() -> usize {
    20
}
fn default_window() -> f64 {
    3.0
}

impl CorrelationOptions {
    pub fn new(times: Vec<f64>, samples: usize, seed: u64) -> Self {
        CorrelationOptions { times, samples, seed, batches: 20, window_se: 3.0, sampling: SampleOptions::default() }
    }

    /// 0, step, 2 step, ..., up to t_max inclusive.
    pub fn grid(t_max: f64, step: f64) -> Result<Vec<f64>> {
        if !(step > 0.0) || !(t_max >= 0.0) {
            return Err(Error::Invalid(format!("bad time grid: t_max {t_max}, step {step}")));
        }
        let n = (t_max / step + 1e-9).floor() as usize;
        Ok((0..=n).map(|k| k as f64 * step).collect())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub stderr: Vec<f64>,
    /// indices of the fit window: the leading run with |rho| above window_se standard errors
    pub window: Vec<usize>,
    pub fitted_eta: Option<f64>,
    pub fit_r2: Option<f64>,
    /// fewer than three points above the noise floor
    pub degenerate: bool,
    pub samples: usize,
    pub escaped: usize,
    pub restarts: usize,
    pub capped: usize,
}

impl CorrelationSeries {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,rho,stderr\n");
        for k in 0..self.times.len() {
            s.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", self.times[k], self.rho[k], self.stderr[k]));
        }
        s
    }
}

#[derive(Clone)]
struct Acc {
    n: f64,
    phi: f64,
    psi: Vec<f64>,
    cross: Vec<f64>,
    escaped: usize,
    restarts: usize,
    capped: usize,
}

impl Acc {
    fn new(m: usize) -> Self {
        Acc { n: 0.0, phi: 0.0, psi: vec![0.0; m], cross: vec![0.0; m], escaped: 0, restarts: 0, capped: 0 }
    }

    fn rho(&self) -> Vec<f64> {
        (0..self.psi.len()).map(|k| self.cross[k] / self.n - (self.phi / self.n) * (self.psi[k] / self.n)).collect()
    }

    fn merge(mut self, o: &Acc) -> Acc {
        self.n += o.n;
        self.phi += o.phi;
        for k in 0..self.psi.len() {
            self.psi[k] += o.psi[k];
            self.cross[k] += o.cross[k];
        }
        self.escaped += o.escaped;
        self.restarts += o.restarts;
        self.capped += o.capped;
        self
    }
}

/// rho(t) = E[phi . psi o T_t] - E phi E psi under the flow-invariant measure, with batch-means
/// standard errors and a log-linear fit of the decay.
pub fn correlation(
    susp: &Suspension,
    report: &SpectralReport,
    phi: &Observable,
    psi: &Observable,
    opts: &CorrelationOptions,
) -> Result<CorrelationSeries> {
    let dim = susp.system.dim;
    phi.validate(dim)?;
    psi.validate(dim)?;
    let times = &opts.times;
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Invalid("times must be nonnegative and nondecreasing".into()));
    }
    if opts.batches < 2 || opts.samples < opts.batches {
        return Err(Error::Invalid(format!("need at least 2 batches and one sample per batch, got {} / {}", opts.batches, opts.samples)));
    }
    let sampler = PhaseSampler::new(susp, report, opts.sampling.clone())?;
    let m = times.len();
    let nb = opts.batches;
    let per = opts.samples as u64;
    let accs: Vec<Acc> = (0..nb)
        .into_par_iter()
        .map(|b| -> Result<Acc> {
            let lo = per * b as u64 / nb as u64;
            let hi = per * (b as u64 + 1) / nb as u64;
            let mut acc = Acc::new(m);
            let mut vals = vec![0.0; m];
            'sample: for i in lo..hi {
                let (mut p, st) = sampler.sample(opts.seed, i)?;
                acc.restarts += st.restarts;
                acc.capped += st.capped;
                let f = phi.eval(&p.x);
                let mut t_prev = 0.0;
                for k in 0..m {
                    match susp.evolve(&p, times[k] - t_prev) {
                        Ok(q) => p = q,
                        Err(Error::Escape(_)) => {
                            acc.escaped += 1;
                            continue 'sample;
                        }
                        Err(e) => return Err(e),
                    }
                    t_prev = times[k];
                    vals[k] = psi.eval(&p.x);
                }
                acc.n += 1.0;
                acc.phi += f;
                for k in 0..m {
                    acc.psi[k] += vals[k];
                    acc.cross[k] += f * vals[k];
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    if accs.iter().any(|a| a.n == 0.0) {
        return Err(Error::Escape("every sample of a batch escaped".into()));
    }
    let total = accs.iter().fold(Acc::new(m), |a, b| a.merge(b));
    let rho = total.rho();
    let per_batch: Vec<Vec<f64>> = accs.iter().map(|a| a.rho()).collect();
    let stderr: Vec<f64> = (0..m)
        .map(|k| {
            let xs: Vec<f64> = per_batch.iter().map(|r| r[k]).collect();
            let mu = xs.iter().sum::<f64>() / nb as f64;
            let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (nb - 1) as f64;
            (var / nb as f64).sqrt()
        })
        .collect();
    let window: Vec<usize> = (0..m).take_while(|k| rho[*k].abs() > opts.window_se * stderr[*k]).collect();
    let fit = if window.len() >= 3 {
        let t: Vec<f64> = window.iter().map(|k| times[*k]).collect();
        let y: Vec<f64> = window.iter().map(|k| rho[*k].abs().ln()).collect();
        line_fit(&t, &y)
    } else {
        None
    };
    if fit.is_none() {
        log::warn!("correlation decay fit is degenerate: {} points above the noise floor", window.len());
    }
    Ok(CorrelationSeries {
        times: times.clone(),
        rho,
        stderr,
        window,
        fitted_eta: fit.as_ref().map(|f| -f.slope),
        fit_r2: fit.as_ref().map(|f| f.r2),
        degenerate: fit.is_none(),
        samples: total.n as usize,
        escaped: total.escaped,
        restarts: total.restarts,
        capped: total.capped,
    })
}
