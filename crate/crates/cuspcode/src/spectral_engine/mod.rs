//! Discretized transfer operators: critical exponent, Perron data, measure checks, the twisted
//! L^2 probe and the resonance scan.

mod delta;
mod diagnostics;
mod measure;
mod operator;
mod power;
mod probe;
mod scan;
mod scheme;

pub use delta::{estimate_delta, pressure_eigenvalue, spectral_report, DeltaEstimate, DeltaOptions, SpectralReport};
pub use diagnostics::{measure_diagnostics, CuspProbe, CuspScaling, DiagnosticOptions, MeasureDiagnostics};
pub use measure::*;
pub use operator::{Discretization, OperatorMatrix};
pub use power::{leading_spectrum, power_iterate, PowerOptions, Spectrum};
pub use probe::{b_norm, l2_contraction_probe, lipschitz_proxy, ProbeReport};
pub use scan::{resonance_scan, ScanField, ScanGrid, ScanPoint};
pub use scheme::*;

use crate::coding_builder::BranchSystem;
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Discretization parameters as they appear in run configurations.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscSpec {
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    #[serde(default = "default_floor")]
    pub truncation_floor: f64,
    #[serde(default)]
    pub params: toml::Table,
}

fn default_scheme() -> String {
    "collocation-linear".into()
}
fn default_nodes() -> usize {
    400
}
fn default_floor() -> f64 {
    1e-8
}

impl Default for DiscSpec {
    fn default() -> Self {
        DiscSpec { scheme: default_scheme(), nodes: default_nodes(), truncation_floor: default_floor(), params: toml::Table::new() }
    }
}

impl DiscSpec {
    pub fn new(scheme: &str, nodes: usize, floor: f64) -> Self {
        DiscSpec { scheme: scheme.into(), nodes, truncation_floor: floor, params: toml::Table::new() }
    }

    pub fn build(&self, system: Arc<BranchSystem>) -> Result<Discretization> {
        let args = SchemeArgs { domain: system.base().clone(), nodes: self.nodes, params: self.params.clone() };
        let scheme = schemes().create(&self.scheme, &args)?;
        Discretization::new(system, scheme, self.truncation_floor)
    }
}
