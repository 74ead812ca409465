use super::scheme::Scheme;
use crate::boundary_geometry::Vect;
use crate::coding_builder::{BranchSystem, Expansion};
use crate::error::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use std::sync::Arc;

/// Branch system, truncated at a floor, together with a node scheme on its base domain.
pub struct Discretization {
    pub system: Arc<BranchSystem>,
    pub scheme: Box<dyn Scheme>,
    pub floor: f64,
    pub expansion: Expansion,
    // per row: (log|g'(x)|, stencil column, stencil weight * sample weight)
    rows: Vec<Vec<(f64, usize, f64)>>,
}

impl Discretization {
    pub fn new(system: Arc<BranchSystem>, scheme: Box<dyn Scheme>, floor: f64) -> Result<Self> {
        if !system.is_single_chart() {
            return Err(Error::Invalid("the transfer operator needs a single-chart system".into()));
        }
        if !(floor > 0.0) {
            return Err(Error::Invalid("truncation floor must be positive".into()));
        }
        let expansion = system.expand(floor)?;
        let n = scheme.nodes().len();
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![];
                for (x, w) in scheme.samples(i) {
                    for m in &expansion.members {
                        let (Some(y), Some(d)) = (m.map.apply_vec(&x), m.map.deriv_vec(&x)) else { continue };
                        let ld = d.ln();
                        for (c, sw) in scheme.stencil(&y) {
                            row.push((ld, c, sw * w));
                        }
                    }
                }
                row
            })
            .collect();
        Ok(Discretization { system, scheme, floor, expansion, rows })
    }

    pub fn len(&self) -> usize {
        self.scheme.nodes().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> &[Vect] {
        self.scheme.nodes()
    }

    /// Sum of sup|g'|^exponent over single branches below the floor, plus the system's own
    /// reported truncation.
    pub fn truncated_mass(&self, exponent: f64) -> f64 {
        self.expansion.dropped_mass(exponent) + self.system.truncated_mass
    }

    /// Operator matrix for L_s u(x) = sum |g'(x)|^s u(g x), s complex (real part is the full
    /// exponent, not a shift from delta).
    pub fn assemble(&self, s: Complex64) -> OperatorMatrix {
        let n = self.len();
        let tails = &self.expansion.tails;
        let rows: Vec<Vec<(usize, Complex64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row: Vec<(usize, Complex64)> =
                    self.rows[i].iter().map(|(ld, c, w)| (*c, (s * ld).exp() * w)).collect();
                if !tails.is_empty() {
                    for (x, w) in self.scheme.samples(i) {
                        for t in tails {
                            match self.system.tail_eval(t, &x, s) {
                                Some(te) => {
                                    for (c, sw) in self.scheme.stencil(&te.pos) {
                                        row.push((c, te.weight * sw * w));
                                    }
                                }
                                None => {
                                    // divergent tail: infinite weight
                                    row.push((i, Complex64::new(f64::INFINITY, 0.0)));
                                }
                            }
                        }
                    }
                }
                row.sort_by_key(|e| e.0);
                let mut merged: Vec<(usize, Complex64)> = Vec::with_capacity(row.len());
                for (c, v) in row {
                    match merged.last_mut() {
                        Some(last) if last.0 == c => last.1 += v,
                        _ => merged.push((c, v)),
                    }
                }
                merged
            })
            .collect();
        let mut ptr = Vec::with_capacity(n + 1);
        let mut cols = vec![];
        let mut vals = vec![];
        ptr.push(0);
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            ptr.push(cols.len());
        }
        OperatorMatrix { exponent: s, n, ptr, cols, vals }
    }

    /// Direct evaluation of (L_s u)(x) with the same truncation (tails lumped).
    pub fn apply_direct(&self, s: Complex64, x: &Vect, u: &dyn Fn(&Vect) -> f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in &self.expansion.members {
            if let (Some(y), Some(d)) = (m.map.apply_vec(x), m.map.deriv_vec(x)) {
                acc += (s * d.ln()).exp() * u(&y);
            }
        }
        for t in &self.expansion.tails {
            if let Some(te) = self.system.tail_eval(t, x, s) {
                acc += te.weight * u(&te.pos);
            }
        }
        acc
    }
}

/// Sparse row-compressed complex matrix.
#[derive(Clone, Debug)]
pub struct OperatorMatrix {
    pub exponent: Complex64,
    pub n: usize,
    pub ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<Complex64>,
}

impl OperatorMatrix {
    pub fn is_finite(&self) -> bool {
        self.vals.iter().all(|v| v.is_finite())
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.ptr[i]..self.ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn mul(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .into_par_iter()
            .map(|i| self.row(i).map(|(c, a)| a * v[c]).sum())
            .collect()
    }

    /// v^T M as a column vector.
    pub fn mul_transpose(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n];
        for i in 0..self.n {
            let vi = v[i];
            for (c, a) in self.row(i) {
                out[c] += a * vi;
            }
        }
        out
    }

    pub fn mul_real(&self, v: &[f64]) -> Vec<Complex64> {
        let c: Vec<Complex64> = v.iter().map(|x| Complex64::new(*x, 0.0)).collect();
        self.mul(&c)
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.row(i).find(|(c, _)| *c == j).map_or(Complex64::new(0.0, 0.0), |e| e.1)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<Complex64> {
        let mut m = nalgebra::DMatrix::from_element(self.n, self.n, Complex64::new(0.0, 0.0));
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                m[(i, c)] += v;
            }
        }
        m
    }

    pub fn min_real(&self) -> f64 {
        self.vals.iter().map(|v| v.re).fold(f64::INFINITY, f64::min)
    }
}
