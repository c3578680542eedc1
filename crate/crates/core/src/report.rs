//! Versioned machine-readable report emitted by the analysis pipeline.
//!
//! Every numeric quantity travels with its tolerance or standard error, all
//! collections serialize in a fixed order, and nothing time- or
//! thread-dependent enters the structure, so identical (input, config, seed)
//! produce byte-identical JSON.

use serde::{Deserialize, Serialize};

use crate::diagram::{DecayReport, SearchStats, StabilityReport, VerdictStatus};
use crate::harness::{RatioSeries, TestingSupReport};
use crate::radonmap::HormanderReport;
use crate::vfields::VfReport;

pub const SCHEMA_VERSION: u32 = 1;

/// Analysis-wide configuration. Thread count is deliberately absent: results
/// are thread-count independent and the report must not depend on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub seed: u64,
    /// Orthonormal triples sampled by the verdict search.
    pub samples: usize,
    /// Hill-climb iterations for the smoothed search.
    pub optimizer_iters: usize,
    /// Relative coefficient floor for diagram membership.
    pub eps_coef: f64,
    /// Monte Carlo samples per Knapp scale.
    pub mc_samples: usize,
    /// Largest tau in the Knapp sweep (integer grid 0..=tau_max).
    pub tau_max: f64,
    /// Trace target for the least-decaying direction on nondegenerate maps.
    pub trace_target: f64,
    pub with_harness: bool,
    pub with_testing: bool,
    pub with_vfields: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            samples: 200,
            optimizer_iters: 60,
            eps_coef: 1e-9,
            mc_samples: 100_000,
            tau_max: 6.0,
            trace_target: 0.1,
            with_harness: false,
            with_testing: false,
            with_vfields: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputEcho {
    pub text: String,
    pub n: usize,
    pub d1: usize,
    pub k: usize,
    pub d: usize,
    pub degree: usize,
    pub base_point_x: Vec<f64>,
    pub base_point_t: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentsReport {
    pub p: String,
    pub q: String,
    pub p_dual: String,
    pub q_dual: String,
    pub p_f64: f64,
    pub q_f64: f64,
    pub p_dual_f64: f64,
    pub q_dual_f64: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorReport {
    pub d1: usize,
    pub k: usize,
    pub d: usize,
    pub coeffs: Vec<f64>,
    pub norm: f64,
    /// Kernel basis rows; the stored tensor is relative to this convention.
    pub kernel_basis: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub bases_u: Vec<Vec<f64>>,
    pub bases_v: Vec<Vec<f64>>,
    pub bases_w: Vec<Vec<f64>>,
    pub points: Vec<Vec<u16>>,
    pub weights: Vec<f64>,
    pub coefficient_margins: Vec<f64>,
    pub depth: f64,
    pub weight_tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessReport {
    pub bases_u: Vec<Vec<f64>>,
    pub bases_v: Vec<Vec<f64>>,
    pub bases_w: Vec<Vec<f64>>,
    pub d1_eigenvalues: Vec<f64>,
    pub d2_eigenvalues: Vec<f64>,
    pub d3_eigenvalues: Vec<f64>,
    pub traces: (f64, f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictReport {
    pub status: VerdictStatus,
    pub exit_code: i32,
    pub scaling_exponent: String,
    pub scaling_point: Vec<f64>,
    pub certificate: Vec<EnsembleReport>,
    pub witness: Option<WitnessReport>,
    pub decay: Option<DecayReport>,
    pub least_decaying: Option<WitnessReport>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HarnessReport {
    pub series: RatioSeries,
    /// Slope predicted from the witness decay rate and p_b, when available.
    pub predicted_slope: Option<f64>,
    pub samples_per_tau: usize,
    pub method: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: AnalysisConfig,
    pub input: InputEcho,
    pub exponents: ExponentsReport,
    pub tensor: TensorReport,
    pub verdict: VerdictReport,
    pub hormander: HormanderReport,
    /// Max relative residual of the coarea determinant identity at seeded
    /// sample points (tolerance 1e-9).
    pub coarea_residual: f64,
    pub harness: Option<HarnessReport>,
    pub testing: Option<TestingSupReport>,
    pub vfields: Option<VfReport>,
    pub stability: Option<StabilityReport>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> crate::error::Result<Report> {
        serde_json::from_str(s).map_err(|e| crate::error::Error::Parse(e.to_string()))
    }
}
