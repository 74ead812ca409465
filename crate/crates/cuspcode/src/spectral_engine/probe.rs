use super::delta::SpectralReport;
use super::operator::Discretization;
use crate::boundary_geometry::Vect;
use crate::error::{Error, Result};
use crate::stats::line_fit;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProbeReport {
    pub exponent: Complex64,
    /// q_m = sum nu_i |(L~^m v)_i|^2, m = 0..=m_max
    pub series: Vec<f64>,
    /// exp of the fitted slope of log q_m over m >= fit_from
    pub beta: Option<f64>,
    pub fit_r2: Option<f64>,
    pub fit_from: usize,
    /// ||L~^m v||_b / ||v||_b with the node-difference Lipschitz proxy
    pub norm_proxy: Vec<f64>,
    pub norm_proxy_sup: f64,
}

/// Lipschitz proxy from differences between nearby nodes.
pub fn lipschitz_proxy(nodes: &[Vect], u: &[Complex64]) -> f64 {
    let n = nodes.len();
    if n < 2 {
        return 0.0;
    }
    if nodes[0].dim() == 1 {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|a, b| nodes[*a].get(0).total_cmp(&nodes[*b].get(0)));
        return idx
            .windows(2)
            .filter_map(|w| {
                let d = nodes[w[0]].dist(&nodes[w[1]]);
                (d > 0.0).then(|| (u[w[0]] - u[w[1]]).norm() / d)
            })
            .fold(0.0, f64::max);
    }
    // nearest neighbours by brute force
    let mut best: f64 = 0.0;
    for i in 0..n {
        let mut near: Vec<(f64, usize)> = (0..n).filter(|j| *j != i).map(|j| (nodes[i].dist(&nodes[j]), j)).collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (d, j) in near.into_iter().take(2 * nodes[0].dim()) {
            if d > 0.0 {
                best = best.max((u[i] - u[j]).norm() / d);
            }
        }
    }
    best
}

pub fn b_norm(nodes: &[Vect], u: &[Complex64], b: f64) -> f64 {
    let sup = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    sup.max(lipschitz_proxy(nodes, u) / (1.0 + b.abs()))
}

/// Decay of the normalized operator L~ u = (lambda f)^{-1} L_{a+ib}(f u) in L^2 of the invariant
/// masses, where f, lambda are the Perron data at the real exponent a.
pub fn l2_contraction_probe(
    disc: &Discretization,
    report: &SpectralReport,
    b: f64,
    m_max: usize,
    v: &[f64],
    fit_from: usize,
) -> Result<ProbeReport> {
    let n = disc.len();
    if v.len() != n || report.right.len() != n {
        return Err(Error::Dimension(n, v.len()));
    }
    let s = Complex64::new(report.exponent, b);
    let m = disc.assemble(s);
    let f = &report.right;
    if f.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::Invalid("right eigenfunction is not positive on every node".into()));
    }
    let lam = report.leading_eigenvalue;
    let nu = &report.invariant;
    let nodes = disc.nodes();
    let q = |u: &[Complex64]| -> f64 { u.iter().zip(nu).map(|(z, w)| w * z.norm_sqr()).sum() };
    let mut u: Vec<Complex64> = v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let b0 = b_norm(nodes, &u, b).max(1e-300);
    let mut series = vec![q(&u)];
    let mut proxy = vec![1.0];
    for _ in 0..m_max {
        let fu: Vec<Complex64> = u.iter().zip(f).map(|(z, w)| z * w).collect();
        let lu = m.mul(&fu);
        u = lu.iter().zip(f).map(|(z, w)| z / (lam * w)).collect();
        series.push(q(&u));
        proxy.push(b_norm(nodes, &u, b) / b0);
    }
    let (x, y): (Vec<f64>, Vec<f64>) = series
        .iter()
        .enumerate()
        .skip(fit_from)
        .filter(|(_, q)| **q > 0.0)
        .map(|(i, q)| (i as f64, q.ln()))
        .unzip();
    let fit = line_fit(&x, &y);
    Ok(ProbeReport {
        exponent: s,
        beta: fit.map(|f| f.slope.exp()),
        fit_r2: fit.map(|f| f.r2),
        fit_from,
        norm_proxy_sup: proxy.iter().copied().fold(0.0, f64::max),
        norm_proxy: proxy,
        series,
    })
}
