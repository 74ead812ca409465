//! Finitely generated groups of boundary isometries with declared cusp charts.

mod enumerate;
mod io;
mod orbit;
mod parabolic;
mod separation;
mod word;

pub use enumerate::{enumerate_words, walk};
pub use io::{CuspSpec, GeneratorSpec, GroupFile, MapSpec};
pub use orbit::{growth_fit, orbit_count, orbit_distances, OrbitCount};
pub use parabolic::{
    chart_bilipschitz, height_ratio_report, parabolic_points, parabolic_points_query, ParabolicPoint,
    ParabolicQuery, RangeReport,
};
pub use separation::{auto_rescale_t0, check_separation, SeparationReport};
pub use word::Word;

use crate::boundary_geometry::{
    hyperbolic_distance, BoundaryPoint, ChartBox, HalfSpacePoint, MobiusMap, Vect,
};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub label: String,
    pub map: MobiusMap,
}

/// Cusp chart: the chart map sends the cusp point to infinity, where its stabilizer acts by
/// the translations `lattice` (images of `lattice_words`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspChart {
    pub point: BoundaryPoint,
    pub chart: MobiusMap,
    pub lattice_words: Vec<Word>,
    pub domain: ChartBox,
}

impl CuspChart {
    pub fn rank(&self) -> usize {
        self.domain.rank()
    }

    pub fn lattice(&self) -> &[Vect] {
        &self.domain.lattice
    }

    /// Group word for the lattice translation with integer coordinates n.
    pub fn lattice_word(&self, n: &[i64]) -> Word {
        let mut w = Word::identity();
        for (j, lw) in self.lattice_words.iter().enumerate() {
            w = w.concat(&lw.pow(n[j]));
        }
        w
    }
}

/// A finitely generated group with cusp charts and a base horoball height t0.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupModel {
    pub dim: usize,
    pub generators: Vec<Generator>,
    pub free: bool,
    pub t0: f64,
    pub max_elements: usize,
    pub orbit_slack: Option<f64>,
    pub cusps: Vec<CuspChart>,
    // letter code l = +-(i+1) -> maps[2i] / maps[2i+1]
    letters: Vec<MobiusMap>,
    source: GroupFile,
}

impl GroupModel {
    pub fn from_file(spec: GroupFile) -> Result<GroupModel> {
        spec.build()
    }

    pub(crate) fn assemble(
        spec: GroupFile,
        generators: Vec<Generator>,
        cusps: Vec<CuspChart>,
    ) -> Result<GroupModel> {
        if generators.is_empty() {
            return Err(Error::Invalid("group needs at least one generator".into()));
        }
        if !(spec.t0 > 0.0) {
            return Err(Error::Invalid(format!("t0 must be positive, got {}", spec.t0)));
        }
        let mut letters = vec![];
        for g in &generators {
            if g.map.dim() != spec.dim {
                return Err(Error::Dimension(spec.dim, g.map.dim()));
            }
            g.map.validate(crate::boundary_geometry::TOL_STRUCTURAL)?;
            letters.push(g.map);
            letters.push(g.map.inverse());
        }
        Ok(GroupModel {
            dim: spec.dim,
            generators,
            free: spec.free,
            t0: spec.t0,
            max_elements: spec.max_elements,
            orbit_slack: spec.orbit_slack,
            cusps,
            letters,
            source: spec,
        })
    }

    pub fn source(&self) -> &GroupFile {
        &self.source
    }

    pub fn labels(&self) -> Vec<String> {
        self.generators.iter().map(|g| g.label.clone()).collect()
    }

    pub fn letter(&self, l: i32) -> &MobiusMap {
        debug_assert!(l != 0);
        let i = (l.unsigned_abs() - 1) as usize;
        &self.letters[2 * i + usize::from(l < 0)]
    }

    pub fn eval(&self, w: &Word) -> MobiusMap {
        let mut m = MobiusMap::identity(self.dim);
        for &l in &w.0 {
            m = m.compose_unchecked(self.letter(l));
        }
        m
    }

    pub fn parse_word(&self, s: &str) -> Result<Word> {
        Word::parse(s, &self.labels())
    }

    pub fn format_word(&self, w: &Word) -> String {
        w.format(&self.labels())
    }

    /// Default pruning slack for orbit searches: twice the largest generator displacement at o.
    pub fn slack(&self) -> f64 {
        self.orbit_slack.unwrap_or_else(|| {
            let o = HalfSpacePoint::origin(self.dim);
            2.0 * self
                .letters
                .iter()
                .map(|m| hyperbolic_distance(&o, &m.apply_half(&o)))
                .fold(0.0, f64::max)
        })
    }

    pub fn with_t0(&self, t0: f64) -> GroupModel {
        let mut g = self.clone();
        g.t0 = t0;
        g.source.t0 = t0;
        g
    }
}
