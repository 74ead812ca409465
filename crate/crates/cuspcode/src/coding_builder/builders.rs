use super::branch::{sup_deriv, BranchFamily, BranchSystem, RayWords};
use super::induce::{induce_first_return, Induced};
use super::procedure::{run_coding, Coding};
use super::CodingParams;
use crate::boundary_geometry::{ChartBox, MobiusMap, Vect};
use crate::error::{Error, Result};
use crate::group_model::{GroupModel, MapSpec, Word};
use crate::registry::Registry;
use crate::spectral_engine::{measure_sources, SourceArgs};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Arguments shared by every branch-system builder.
#[derive(Clone, Default)]
pub struct BuilderArgs {
    pub params: toml::Table,
    pub group: Option<Arc<GroupModel>>,
}

/// A branch system together with whatever produced it.
#[derive(Clone, Debug, Serialize)]
pub struct Built {
    pub system: BranchSystem,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coding: Option<Coding>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub induced: Option<Induced>,
}

impl From<BranchSystem> for Built {
    fn from(system: BranchSystem) -> Self {
        Built { system, coding: None, induced: None }
    }
}

pub trait BranchBuilder: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self) -> Result<Built>;
}

pub fn branch_builders() -> Registry<dyn BranchBuilder, BuilderArgs> {
    let mut r: Registry<dyn BranchBuilder, BuilderArgs> = Registry::new("branch builder");
    r.register("gauss", |a| Ok(Box::new(Gauss::new(a)?)))
        .register("finite-alphabet", |a| Ok(Box::new(FiniteAlphabet::new(a)?)))
        .register("parabolic-jump", |a| Ok(Box::new(ParabolicJump::new(a)?)))
        .register("group-coding", |a| Ok(Box::new(GroupCoding::new(a)?)));
    r
}

fn parse<T: DeserializeOwned>(name: &str, t: &toml::Table) -> Result<T> {
    t.clone().try_into().map_err(|e| Error::Parse(format!("{name}: {e}")))
}

fn digit_map(n: f64) -> MobiusMap {
    MobiusMap::from_real_matrix([[0.0, 1.0], [1.0, n]]).expect("nonsingular")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GaussParams {
    #[serde(default = "one")]
    min_digit: i64,
}

fn one() -> i64 {
    1
}

/// x -> 1/(n + x) on [0,1) for n >= min_digit, as a single ray.
pub struct Gauss {
    min_digit: i64,
}

impl Gauss {
    fn new(a: &BuilderArgs) -> Result<Self> {
        let p: GaussParams = parse("gauss", &a.params)?;
        if p.min_digit < 1 {
            return Err(Error::Invalid("min_digit must be at least 1".into()));
        }
        Ok(Gauss { min_digit: p.min_digit })
    }
}

impl BranchBuilder for Gauss {
    fn name(&self) -> &'static str {
        "gauss"
    }

    fn build(&self) -> Result<Built> {
        let ray = BranchFamily::ray("gauss", digit_map(0.0), Vect::new1(1.0), MobiusMap::identity(1), self.min_digit);
        Ok(BranchSystem::new(1, vec![ChartBox::interval(0.0, 1.0)?], vec![ray])?.into())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AlphabetParams {
    #[serde(default)]
    digits: Option<Vec<i64>>,
    #[serde(default)]
    maps: Option<Vec<MapSpec>>,
    #[serde(default)]
    interval: Option<[f64; 2]>,
    #[serde(default, rename = "box")]
    region: Option<BoxSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxSpec {
    lo: Vec<f64>,
    sides: Vec<f64>,
}

/// Finitely many branches: continued-fraction digits on [0,1), or explicit maps on a box.
pub struct FiniteAlphabet {
    system: BranchSystem,
}

impl FiniteAlphabet {
    fn new(a: &BuilderArgs) -> Result<Self> {
        let p: AlphabetParams = parse("finite-alphabet", &a.params)?;
        let system = match (p.digits, p.maps) {
            (Some(d), None) => {
                if d.is_empty() || d.iter().any(|n| *n < 1) {
                    return Err(Error::Invalid("digits must be positive integers".into()));
                }
                let fams = d.iter().map(|n| BranchFamily::single(format!("d{n}"), digit_map(*n as f64))).collect();
                BranchSystem::new(1, vec![ChartBox::interval(0.0, 1.0)?], fams)?
            }
            (None, Some(m)) => {
                let dom = match (p.interval, p.region) {
                    (Some([lo, hi]), None) => ChartBox::interval(lo, hi)?,
                    (None, Some(b)) => ChartBox::axis_box(&b.lo, &b.sides)?,
                    _ => return Err(Error::Invalid("maps need exactly one of interval, box".into())),
                };
                let dim = dom.dim();
                let fams = m
                    .iter()
                    .enumerate()
                    .map(|(i, s)| Ok(BranchFamily::single(format!("g{i}"), s.to_map(dim)?)))
                    .collect::<Result<Vec<_>>>()?;
                if fams.is_empty() {
                    return Err(Error::Invalid("maps is empty".into()));
                }
                BranchSystem::new(dim, vec![dom], fams)?
            }
            _ => return Err(Error::Invalid("finite-alphabet needs exactly one of digits, maps".into())),
        };
        Ok(FiniteAlphabet { system })
    }
}

impl BranchBuilder for FiniteAlphabet {
    fn name(&self) -> &'static str {
        "finite-alphabet"
    }

    fn build(&self) -> Result<Built> {
        Ok(self.system.clone().into())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JumpParams {
    #[serde(default = "default_cusp")]
    cusp: usize,
    #[serde(default = "default_km")]
    k_max: i64,
    #[serde(default = "default_km")]
    m_max: i64,
    #[serde(default = "default_delta")]
    delta_hint: f64,
}

fn default_cusp() -> usize {
    1
}
fn default_km() -> i64 {
    16
}
fn default_delta() -> f64 {
    1.0
}

/// Two-cusp jump system in d = 1: the domain D is a lattice cell at infinity centred on a second
/// cusp q. Its complement is a fundamental domain for the stabilizer L of q, so
/// D = union over k, m != 0 of L^k tau^{m v} D. Large |m| and |k| are closed as rays; the corner
/// with both large is reported as truncated mass.
pub struct ParabolicJump {
    group: Arc<GroupModel>,
    cusp: usize,
    k_max: i64,
    m_max: i64,
    delta: f64,
}

impl ParabolicJump {
    fn new(a: &BuilderArgs) -> Result<Self> {
        let p: JumpParams = parse("parabolic-jump", &a.params)?;
        let group = a.group.clone().ok_or_else(|| Error::Invalid("parabolic-jump needs a group".into()))?;
        if p.k_max < 1 || p.m_max < 1 {
            return Err(Error::Invalid("k_max and m_max must be positive".into()));
        }
        Ok(ParabolicJump { group, cusp: p.cusp, k_max: p.k_max, m_max: p.m_max, delta: p.delta_hint })
    }
}

impl BranchBuilder for ParabolicJump {
    fn name(&self) -> &'static str {
        "parabolic-jump"
    }

    fn build(&self) -> Result<Built> {
        let g = &self.group;
        if g.dim != 1 {
            return Err(Error::Invalid("parabolic-jump is defined for d = 1".into()));
        }
        let c0 = g.cusps.first().ok_or_else(|| Error::Invalid("group has no cusps".into()))?;
        let c1 = g.cusps.get(self.cusp).ok_or_else(|| Error::Invalid(format!("no cusp {}", self.cusp)))?;
        if !c0.point.is_infinity() || c0.chart.distance(&MobiusMap::identity(1)) > 1e-12 {
            return Err(Error::Invalid("cusp 0 must be infinity with the identity chart".into()));
        }
        let q = c1.point.finite().ok_or_else(|| Error::Invalid("second cusp must be finite".into()))?;
        let v = c0.domain.lattice[0];
        let u = c1.domain.lattice[0];
        let dom = ChartBox::new(q - v.scale(0.5), vec![v], c0.domain.y_radius)?;
        let gi = c1.chart.inverse();
        let lmap = |k: i64| gi.compose_unchecked(&MobiusMap::translation(u.scale(k as f64))).compose_unchecked(&c1.chart);
        let tau = |m: i64| MobiusMap::translation(v.scale(m as f64));
        let lw = &c1.lattice_words[0];
        let vw = &c0.lattice_words[0];
        let mut fams = vec![];
        for k in (-self.k_max..=self.k_max).filter(|k| *k != 0) {
            for m in (-self.m_max..=self.m_max).filter(|m| *m != 0) {
                let map = lmap(k).compose_unchecked(&tau(m));
                fams.push(BranchFamily::Single {
                    name: format!("L{k}t{m}"),
                    word: Some(lw.pow(k).concat(&vw.pow(m))),
                    map,
                    source: 0,
                    target: 0,
                });
            }
            for sgn in [1i64, -1] {
                fams.push(BranchFamily::Ray {
                    name: format!("L{k}t{}", if sgn > 0 { "+" } else { "-" }),
                    words: Some(RayWords { prefix: lw.pow(k), step: vw.pow(sgn), suffix: Word::identity() }),
                    p: lmap(k),
                    step: v.scale(sgn as f64),
                    q: MobiusMap::identity(1),
                    n0: self.m_max + 1,
                    source: 0,
                    target: 0,
                });
            }
        }
        for m in (-self.m_max..=self.m_max).filter(|m| *m != 0) {
            for sgn in [1i64, -1] {
                fams.push(BranchFamily::Ray {
                    name: format!("L{}t{m}", if sgn > 0 { "+" } else { "-" }),
                    words: Some(RayWords { prefix: Word::identity(), step: lw.pow(sgn), suffix: vw.pow(m) }),
                    p: gi,
                    step: u.scale(sgn as f64),
                    q: c1.chart.compose_unchecked(&tau(m)),
                    n0: self.k_max + 1,
                    source: 0,
                    target: 0,
                });
            }
        }
        // corner |k| > K, |m| > M: sum of sup^delta over a window, closed by the r^{-4 delta} decay
        let mut corner = 0.0;
        let (kk, mm) = (self.k_max, self.m_max);
        for k in (kk + 1)..=(4 * kk) {
            for m in (mm + 1)..=(4 * mm) {
                for (sk, sm) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                    let map = lmap(sk * k).compose_unchecked(&tau(sm * m));
                    corner += sup_deriv(&map, &dom).powf(self.delta);
                }
            }
        }
        let mut sys = BranchSystem::new(1, vec![dom], fams)?;
        sys.truncated_mass = corner * 16.0 / 9.0;
        Ok(sys.into())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupCodingParams {
    coding: CodingParams,
    #[serde(default = "default_measure")]
    measure: String,
    #[serde(default)]
    measure_params: toml::Table,
    #[serde(default = "default_cap")]
    excursion_cap: usize,
    #[serde(default = "default_induce_floor")]
    induce_floor: f64,
}

fn default_measure() -> String {
    "lebesgue".into()
}
fn default_cap() -> usize {
    20
}
fn default_induce_floor() -> f64 {
    1e-5
}

/// Runs the flower coding on the group and, with several charts, induces on chart 0.
pub struct GroupCoding {
    group: Arc<GroupModel>,
    p: GroupCodingParams,
}

impl GroupCoding {
    fn new(a: &BuilderArgs) -> Result<Self> {
        let p: GroupCodingParams = parse("group-coding", &a.params)?;
        p.coding.validate()?;
        let group = a.group.clone().ok_or_else(|| Error::Invalid("group-coding needs a group".into()))?;
        Ok(GroupCoding { group, p })
    }
}

impl BranchBuilder for GroupCoding {
    fn name(&self) -> &'static str {
        "group-coding"
    }

    fn build(&self) -> Result<Built> {
        let g = &self.group;
        let args = SourceArgs {
            group: Some(g.clone()),
            domains: g.cusps.iter().map(|c| c.domain.clone()).collect(),
            delta: self.p.coding.delta_hint,
            eigen: None,
            params: self.p.measure_params.clone(),
        };
        let src = measure_sources().create(&self.p.measure, &args)?;
        let coding = run_coding(g, &self.p.coding, src.as_ref())?;
        if coding.system.is_single_chart() {
            return Ok(Built { system: coding.system.clone(), coding: Some(coding), induced: None });
        }
        let ind = induce_first_return(&coding.system, 0, self.p.excursion_cap, self.p.induce_floor, self.p.coding.delta_hint)?;
        Ok(Built { system: ind.system.clone(), coding: Some(coding), induced: Some(ind) })
    }
}
