//! Suspension semiflow over a single-chart branch system, its projection to Hopf coordinates,
//! and Monte Carlo correlation estimates.

mod correlate;
mod phase;
mod project;

pub use correlate::{correlation, CorrelationOptions, CorrelationSeries, Observable};
pub use phase::{Chain, mean_roof, sample_phase, Evolution, PhasePoint, PhaseSampler, SampleOptions, SampleStats, Suspension};
pub use project::{factor_project, geodesic_point, semiconjugacy_residual, time_change, UnitTangent};
