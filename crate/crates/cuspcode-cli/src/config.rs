use cuspcode::coding_builder::{branch_builders, BranchBuilder, BuilderArgs, UniParams};
use cuspcode::flow_sim::{Observable, SampleOptions};
use cuspcode::group_model::GroupModel;
use cuspcode::spectral_engine::{DeltaOptions, DiagnosticOptions, DiscSpec, PowerOptions};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// A configuration problem, with the line it refers to when one can be found.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub message: String,
    pub line: Option<usize>,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub discretization: DiscSpec,
    #[serde(default)]
    pub spectral: SpectralSection,
    #[serde(default)]
    pub tail: TailSection,
    #[serde(default)]
    pub uni: UniParams,
    #[serde(default)]
    pub probe: ProbeSection,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub orbit: OrbitSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    /// output directory; relative paths resolve against the working directory
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub builder: String,
    /// group file, relative to the config file
    #[serde(default)]
    pub group: Option<PathBuf>,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSection {
    /// exponent for the eigen-data; estimated with `delta` when absent
    #[serde(default)]
    pub exponent: Option<f64>,
    #[serde(default)]
    pub delta: DeltaOptions,
    #[serde(default)]
    pub power: PowerOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailSection {
    /// critical exponent; estimated when absent
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "tail_eps")]
    pub epsilon: f64,
    #[serde(default = "tail_floor")]
    pub floor: f64,
}

fn tail_eps() -> f64 {
    0.4
}
fn tail_floor() -> f64 {
    1e-6
}

impl Default for TailSection {
    fn default() -> Self {
        TailSection { delta: None, epsilon: tail_eps(), floor: tail_floor() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    #[serde(default = "probe_b")]
    pub b: f64,
    #[serde(default = "probe_steps")]
    pub steps: usize,
    #[serde(default = "probe_fit")]
    pub fit_from: usize,
    /// test function, centred against the invariant masses before use
    #[serde(default = "coordinate")]
    pub observable: Observable,
}

fn probe_b() -> f64 {
    20.0
}
fn probe_steps() -> usize {
    100
}
fn probe_fit() -> usize {
    5
}
fn coordinate() -> Observable {
    Observable::Coordinate { axis: 0 }
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection { b: probe_b(), steps: probe_steps(), fit_from: probe_fit(), observable: coordinate() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    #[serde(default = "scan_sigma")]
    pub sigma: [f64; 2],
    #[serde(default = "scan_sigma_step")]
    pub sigma_step: f64,
    #[serde(default = "scan_b")]
    pub b: [f64; 2],
    #[serde(default = "scan_b_step")]
    pub b_step: f64,
    #[serde(default = "scan_threshold")]
    pub threshold: f64,
}

fn scan_sigma() -> [f64; 2] {
    [-0.05, 0.0]
}
fn scan_sigma_step() -> f64 {
    0.05
}
fn scan_b() -> [f64; 2] {
    [-2.0, 2.0]
}
fn scan_b_step() -> f64 {
    0.5
}
fn scan_threshold() -> f64 {
    1e-2
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            sigma: scan_sigma(),
            sigma_step: scan_sigma_step(),
            b: scan_b(),
            b_step: scan_b_step(),
            threshold: scan_threshold(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    #[serde(default = "flow_samples")]
    pub samples: usize,
    #[serde(default = "flow_tmax")]
    pub t_max: f64,
    #[serde(default = "flow_step")]
    pub t_step: f64,
    #[serde(default = "flow_seed")]
    pub seed: u64,
    #[serde(default = "flow_batches")]
    pub batches: usize,
    /// branches whose sup derivative is below this count as escaping
    #[serde(default)]
    pub floor: f64,
    #[serde(default = "coordinate")]
    pub phi: Observable,
    #[serde(default = "coordinate")]
    pub psi: Observable,
    #[serde(default)]
    pub sampling: SampleOptions,
}

fn flow_samples() -> usize {
    100_000
}
fn flow_tmax() -> f64 {
    12.0
}
fn flow_step() -> f64 {
    0.5
}
fn flow_seed() -> u64 {
    1
}
fn flow_batches() -> usize {
    20
}

impl Default for FlowSection {
    fn default() -> Self {
        FlowSection {
            samples: flow_samples(),
            t_max: flow_tmax(),
            t_step: flow_step(),
            seed: flow_seed(),
            batches: flow_batches(),
            floor: 0.0,
            phi: coordinate(),
            psi: coordinate(),
            sampling: SampleOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSection {
    #[serde(default = "ladder")]
    pub ladder: Vec<f64>,
}

fn ladder() -> Vec<f64> {
    vec![8.0, 9.0, 10.0, 11.0, 12.0]
}

impl Default for OrbitSection {
    fn default() -> Self {
        OrbitSection { ladder: ladder() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CuspEntry {
    pub point: Vec<f64>,
    pub rank: usize,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default)]
    pub cusps: Vec<CuspEntry>,
    #[serde(default)]
    pub options: DiagnosticOptions,
}

/// A parsed and checked configuration, with its group loaded and builder instantiated.
pub struct Loaded {
    pub config: RunConfig,
    pub group: Option<Arc<GroupModel>>,
    pub builder: Box<dyn BranchBuilder>,
}

/// Line of the first assignment to `key`, or of the `[section]` header when there is none.
pub fn line_of(text: &str, key: &str) -> Option<usize> {
    let leaf = key.rsplit('.').next().unwrap_or(key);
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(leaf).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .or_else(|| {
            let header = format!("[{}]", key.rsplit_once('.').map(|p| p.0).unwrap_or(key));
            text.lines().position(|l| l.trim() == header)
        })
        .map(|i| i + 1)
}

fn at(text: &str, key: &str, message: String) -> Diagnostic {
    Diagnostic { line: line_of(text, key), message }
}

// serde messages name the offending key in backticks
fn anchor_serde(text: &str, message: String) -> Diagnostic {
    let key = message.split('`').nth(1).map(str::to_string);
    Diagnostic { line: key.and_then(|k| line_of(text, &k)), message }
}

fn range(ok: bool, text: &str, key: &str, what: &str) -> Result<(), Diagnostic> {
    if ok {
        Ok(())
    } else {
        Err(at(text, key, format!("{key} out of range: {what}")))
    }
}

impl RunConfig {
    /// Every numeric bound the commands rely on.
    pub fn check_ranges(&self, text: &str) -> Result<(), Diagnostic> {
        let d = &self.discretization;
        range(d.nodes >= 2, text, "discretization.nodes", "need at least 2")?;
        range(d.truncation_floor > 0.0 && d.truncation_floor < 1.0, text, "discretization.truncation_floor", "must lie in (0, 1)")?;
        let s = &self.spectral;
        if let Some(e) = s.exponent {
            range(e > 0.0 && e.is_finite(), text, "spectral.exponent", "must be positive")?;
        }
        range(s.delta.lo >= 0.0 && s.delta.hi > s.delta.lo, text, "spectral.delta", "need 0 <= lo < hi")?;
        range(s.delta.width > 0.0, text, "spectral.delta.width", "must be positive")?;
        let t = &self.tail;
        if let Some(dl) = t.delta {
            range(dl > 0.0, text, "tail.delta", "must be positive")?;
        }
        range(t.epsilon > 0.0, text, "tail.epsilon", "must be positive")?;
        range(t.floor > 0.0 && t.floor < 1.0, text, "tail.floor", "must lie in (0, 1)")?;
        let p = &self.probe;
        range(p.b.is_finite(), text, "probe.b", "must be finite")?;
        range(p.steps >= 1 && p.fit_from < p.steps, text, "probe.fit_from", "need fit_from < steps")?;
        let c = &self.scan;
        range(c.sigma[0] <= c.sigma[1], text, "scan.sigma", "need sigma[0] <= sigma[1]")?;
        range(c.b[0] <= c.b[1], text, "scan.b", "need b[0] <= b[1]")?;
        range(c.sigma_step >= 0.0, text, "scan.sigma_step", "must be nonnegative")?;
        range(c.b_step >= 0.0, text, "scan.b_step", "must be nonnegative")?;
        range(c.threshold > 0.0, text, "scan.threshold", "must be positive")?;
        let f = &self.flow;
        range(f.batches >= 2, text, "flow.batches", "need at least 2")?;
        range(f.samples >= f.batches, text, "flow.samples", "need at least one sample per batch")?;
        range(f.t_max >= 0.0, text, "flow.t_max", "must be nonnegative")?;
        range(f.t_step > 0.0, text, "flow.t_step", "must be positive")?;
        range(f.floor >= 0.0 && f.floor < 1.0, text, "flow.floor", "must lie in [0, 1)")?;
        range(f.sampling.burn_in >= 1, text, "burn_in", "must be at least 1")?;
        range(f.sampling.roof_cap > 0.0, text, "roof_cap", "must be positive")?;
        range(f.sampling.chain_floor > 0.0 && f.sampling.chain_floor < 1.0, text, "chain_floor", "must lie in (0, 1)")?;
        let o = &self.orbit;
        range(!o.ladder.is_empty() && o.ladder.iter().all(|t| *t > 0.0), text, "orbit.ladder", "radii must be positive")?;
        for cusp in &self.diagnostics.cusps {
            range(cusp.rank >= 1, text, "rank", "must be at least 1")?;
        }
        Ok(())
    }
}

/// Parses, range-checks, loads the group and instantiates the builder. Nothing is computed and
/// nothing is returned unless every check passes.
pub fn validate_config(path: &Path) -> Result<Loaded, Diagnostic> {
    let text = std::fs::read_to_string(path).map_err(|e| Diagnostic { message: format!("{}: {e}", path.display()), line: None })?;
    if text.trim().is_empty() {
        return Err(Diagnostic { message: format!("{}: empty configuration", path.display()), line: Some(1) });
    }
    let config: RunConfig = toml::from_str(&text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        Diagnostic { message: e.message().trim().to_string(), line: line.or_else(|| anchor_serde(&text, e.to_string()).line) }
    })?;
    config.check_ranges(&text)?;
    let group = match &config.system.group {
        Some(g) => {
            let gp = path.parent().unwrap_or(Path::new(".")).join(g);
            let model = GroupModel::load(&gp).map_err(|e| at(&text, "system.group", e.to_string()))?;
            Some(Arc::new(model))
        }
        None => None,
    };
    let args = BuilderArgs { params: config.system.params.clone(), group: group.clone() };
    let builder = branch_builders().create(&config.system.builder, &args).map_err(|e| {
        let msg = e.to_string();
        let d = anchor_serde(&text, msg.clone());
        if d.line.is_some() {
            return d;
        }
        // range messages start with the field name
        let field = msg.split(':').nth(1).unwrap_or("").split_whitespace().next().unwrap_or("").to_string();
        match line_of(&text, &field) {
            Some(l) if !field.is_empty() => Diagnostic { message: msg, line: Some(l) },
            _ => at(&text, "system.builder", msg),
        }
    })?;
    Ok(Loaded { config, group, builder })
}
