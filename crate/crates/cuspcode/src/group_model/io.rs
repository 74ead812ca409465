use super::{CuspChart, Generator, GroupModel, Word};
use crate::boundary_geometry::{BoundaryPoint, ChartBox, Mat, MobiusMap, Vect, TOL_STRUCTURAL};
use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// One Möbius map written as a real 2x2 matrix (d = 1), a complex 2x2 matrix given as
/// [re, im] pairs (d = 2), or an explicit Bruhat tuple. Exactly one field is set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex: Option<[[[f64; 2]; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bruhat: Option<MobiusMap>,
}

impl MapSpec {
    pub fn to_map(&self, dim: usize) -> Result<MobiusMap> {
        let set = self.real.is_some() as u8 + self.complex.is_some() as u8 + self.bruhat.is_some() as u8;
        if set != 1 {
            return Err(Error::Invalid("map needs exactly one of real, complex, bruhat".into()));
        }
        let m = if let Some(r) = self.real {
            MobiusMap::from_real_matrix(r)?
        } else if let Some(c) = self.complex {
            let z = |p: [f64; 2]| Complex64::new(p[0], p[1]);
            MobiusMap::from_complex_matrix([[z(c[0][0]), z(c[0][1])], [z(c[1][0]), z(c[1][1])]])?
        } else {
            self.bruhat.unwrap()
        };
        if m.dim() != dim {
            return Err(Error::Dimension(dim, m.dim()));
        }
        m.validate(TOL_STRUCTURAL)?;
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub real: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex: Option<[[[f64; 2]; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bruhat: Option<MobiusMap>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspSpec {
    pub point: BoundaryPoint,
    /// chart map; defaults to the identity at infinity and to x -> -(x - p)^*/|x - p|^2 otherwise
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<MapSpec>,
    pub lattice_words: Vec<String>,
    pub origin: Vect,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_radius: Option<f64>,
}

/// Group description file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupFile {
    pub dim: usize,
    #[serde(default)]
    pub free: bool,
    pub t0: f64,
    pub max_elements: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orbit_slack: Option<f64>,
    #[serde(rename = "generator")]
    pub generators: Vec<GeneratorSpec>,
    #[serde(rename = "cusp", default)]
    pub cusps: Vec<CuspSpec>,
}

fn default_chart(p: &BoundaryPoint, dim: usize) -> MobiusMap {
    match p {
        BoundaryPoint::Infinity => MobiusMap::identity(dim),
        BoundaryPoint::Finite(v) => {
            let mut a = Mat::identity(dim);
            a.set(0, 0, -1.0);
            MobiusMap::Inversive { p: Vect::zeros(dim), p_inv: *v, h: 1.0, a }
        }
    }
}

impl GroupFile {
    pub fn parse(text: &str) -> Result<GroupFile> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<GroupFile> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        GroupFile::parse(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn build(self) -> Result<GroupModel> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::Invalid(format!("dim must be 1..=3, got {}", self.dim)));
        }
        let mut gens = vec![];
        for g in &self.generators {
            let spec = MapSpec { real: g.real, complex: g.complex, bruhat: g.bruhat };
            let map = spec
                .to_map(self.dim)
                .map_err(|e| Error::Invalid(format!("generator {}: {e}", g.label)))?;
            gens.push(Generator { label: g.label.clone(), map });
        }
        let labels: Vec<String> = gens.iter().map(|g| g.label.clone()).collect();
        let tmp = GroupModel::assemble(self.clone(), gens.clone(), vec![])?;
        let mut cusps = vec![];
        for (ci, c) in self.cusps.iter().enumerate() {
            let chart = match &c.chart {
                Some(m) => m.to_map(self.dim)?,
                None => default_chart(&c.point, self.dim),
            };
            if !chart.apply(&c.point).is_infinity() {
                return Err(Error::Invalid(format!("cusp {ci}: chart map does not send the cusp point to infinity")));
            }
            let chart_inv = chart.inverse();
            let mut words = vec![];
            let mut lattice = vec![];
            for s in &c.lattice_words {
                let mut w = Word::parse(s, &labels)?;
                let conj = chart.compose_unchecked(&tmp.eval(&w)).compose_unchecked(&chart_inv);
                let MobiusMap::Affine { scale, a, b } = conj else {
                    return Err(Error::Invalid(format!("cusp {ci}: lattice word '{s}' does not fix the cusp")));
                };
                if (scale - 1.0).abs() > 1e-9 || a.max_abs_diff(&Mat::identity(self.dim)) > 1e-9 {
                    return Err(Error::Invalid(format!(
                        "cusp {ci}: lattice word '{s}' is not a pure translation in the chart"
                    )));
                }
                let mut b = b;
                // orient each lattice vector so its first nonzero coordinate is positive
                if b.as_slice().iter().find(|x| x.abs() > 1e-12).is_some_and(|x| *x < 0.0) {
                    b = -b;
                    w = w.inverse();
                }
                words.push(w);
                lattice.push(b);
            }
            let domain = ChartBox::new(c.origin, lattice, c.y_radius.unwrap_or(0.0))
                .map_err(|e| Error::Invalid(format!("cusp {ci}: {e}")))?;
            cusps.push(CuspChart { point: c.point, chart, lattice_words: words, domain });
        }
        GroupModel::assemble(self, gens, cusps)
    }
}

impl GroupModel {
    pub fn load(path: &Path) -> Result<GroupModel> {
        GroupFile::load(path)?.build()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.source().to_toml()?)?;
        Ok(())
    }
}
