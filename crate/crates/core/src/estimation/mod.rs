//! Maximum-likelihood fitting of the soiling model to reflectance differences.
//!
//! Decision variables are `(ln ln hrz0, ln σ_dep)` for the semi-physical model
//! and `(ln μ̃, ln σ_dep)` for the constant-mean model, so every point of the
//! search space maps to admissible parameters.

mod fisher;
mod fit;
mod likelihood;
mod nelder_mead;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

pub use fisher::{fisher_confidence, hessian, FisherSummary};
pub use fit::{fit, FitDiagnostics, FitResult, FitSettings, InitialGuess};
pub use likelihood::{log_likelihood, Likelihood, ModelContext};
pub use nelder_mead::{nelder_mead, NelderMeadOptions, NelderMeadResult};

use crate::loss_model::{IntervalSample, MeasurementGeometry, ModelParams, ModelVariant};
use crate::{Error, Result};

/// One reflectance difference between successive measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Difference {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
    /// r_end − r_start.
    pub delta_r: f64,
    pub sigma_r_start: f64,
    pub sigma_r_end: f64,
    /// Conditions over every model interval in [start, end).
    pub samples: Vec<IntervalSample>,
}

/// Successive differences for one mirror in one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub label: String,
    pub mirror_id: String,
    pub tilt_deg: f64,
    pub geometry: MeasurementGeometry,
    pub differences: Vec<Difference>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDataset {
    pub experiments: Vec<Experiment>,
}

impl FitDataset {
    pub fn n_differences(&self) -> usize {
        self.experiments.iter().map(|e| e.differences.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.experiments {
            for w in e.differences.windows(2) {
                if w[1].start < w[0].end {
                    return Err(Error::Validation(format!(
                        "experiment {}: measurement times are not increasing",
                        e.label
                    )));
                }
            }
            for d in &e.differences {
                if d.end <= d.start || !d.delta_r.is_finite() || d.sigma_r_start < 0.0 || d.sigma_r_end < 0.0 {
                    return Err(Error::Validation(format!(
                        "experiment {}: invalid difference at {}",
                        e.label, d.start
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Map from the unconstrained search space to model parameters.
pub fn from_transformed(variant: ModelVariant, z: [f64; 2]) -> ModelParams {
    match variant {
        ModelVariant::SemiPhysical => ModelParams::SemiPhysical {
            hrz0: z[0].exp().exp(),
            sigma_dep: z[1].exp(),
        },
        ModelVariant::ConstantMean => ModelParams::ConstantMean {
            mu_tilde: z[0].exp(),
            sigma_dep: z[1].exp(),
        },
    }
}

/// Inverse of [`from_transformed`].
pub fn to_transformed(params: &ModelParams) -> [f64; 2] {
    match *params {
        ModelParams::SemiPhysical { hrz0, sigma_dep } => [hrz0.ln().ln(), sigma_dep.ln()],
        ModelParams::ConstantMean { mu_tilde, sigma_dep } => [mu_tilde.ln(), sigma_dep.ln()],
    }
}

/// Parameter names in transformed-vector order.
pub fn parameter_names(variant: ModelVariant) -> [&'static str; 2] {
    match variant {
        ModelVariant::SemiPhysical => ["hrz0", "sigma_dep"],
        ModelVariant::ConstantMean => ["mu_tilde", "sigma_dep"],
    }
}
