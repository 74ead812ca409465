//! Coding of the boundary action: flowers around parabolic points, countable branch systems,
//! first-return inducing across cusps, and the tail, contraction and UNI checks.

mod branch;
mod builders;
mod flower;
mod induce;
mod procedure;
mod reports;

pub use branch::{
    image_ball, sup_deriv, BranchFamily, BranchSystem, Expansion, Member, RayTail, RayWords, TailEval,
};
pub use builders::{branch_builders, BranchBuilder, BuilderArgs, Built};
pub use flower::{build_flower, tile_range, Flower, FlowerRegion};
pub use induce::{induce_first_return, Induced};
pub use procedure::{
    coding_step, decay_fit, eta_diagnostic, family_mass, flower_distance, generation_of, run_coding,
    separation_ratio, system_lambda, Cell, ChartCoding, Coding, CodingContext, CodingState, EtaCheck,
};
pub use reports::{
    contraction_distortion_report, tail_report, uni_search, ContractionReport, TailReport, UniCertificate,
    UniOutcome, UniParams,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parameters of the inductive coding. Generation n uses the scale h_n = e^{-n}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodingParams {
    #[serde(default = "default_eta")]
    pub eta: f64,
    pub max_generation: usize,
    #[serde(default = "default_floor")]
    pub truncation_floor: f64,
    #[serde(default = "default_delta")]
    pub delta_hint: f64,
    /// cusp classes whose points are removed; all when absent
    #[serde(default)]
    pub classes: Option<Vec<usize>>,
    /// charts to code; the coded classes when absent
    #[serde(default)]
    pub base_charts: Option<Vec<usize>>,
    #[serde(default = "default_depth")]
    pub max_depth: usize,
    #[serde(default = "default_bins")]
    pub quadrature_bins: usize,
}

fn default_eta() -> f64 {
    0.05
}
fn default_floor() -> f64 {
    1e-10
}
fn default_delta() -> f64 {
    1.0
}
fn default_depth() -> usize {
    400
}
fn default_bins() -> usize {
    64
}

impl CodingParams {
    pub fn new(eta: f64, max_generation: usize) -> Self {
        CodingParams {
            eta,
            max_generation,
            truncation_floor: default_floor(),
            delta_hint: default_delta(),
            classes: None,
            base_charts: None,
            max_depth: default_depth(),
            quadrature_bins: default_bins(),
        }
    }

    /// h_n = e^{-n}
    pub fn h(&self, n: usize) -> f64 {
        (-(n as f64)).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Invalid(format!("eta must lie in (0,1), got {}", self.eta)));
        }
        if self.max_generation < 1 {
            return Err(Error::Invalid("max_generation must be at least 1".into()));
        }
        if !(self.truncation_floor > 0.0) {
            return Err(Error::Invalid("truncation_floor must be positive".into()));
        }
        if !(self.delta_hint > 0.0) {
            return Err(Error::Invalid("delta_hint must be positive".into()));
        }
        if self.quadrature_bins == 0 {
            return Err(Error::Invalid("quadrature_bins must be positive".into()));
        }
        Ok(())
    }
}
