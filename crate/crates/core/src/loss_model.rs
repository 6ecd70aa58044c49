//! Reflectance model and Gaussian moments of reflectance changes.
//!
//! Between measurements ℓ < m the soiled area grows by
//! `Σ_j α_j cos θ_j (μ_j + ε_j)` with `ε_j ~ N(0, σ_dep²)`, so the measured
//! change `r_m − r_ℓ` is Gaussian with
//!
//! ```text
//! mean     = [b(φ_ℓ) − b(φ_m)]·A_ℓ − b(φ_m) Σ α_j cos θ_j μ_j
//! variance = σ_dep² b(φ_m)² Σ α_j² cos² θ_j + σ_r,m² + σ_r,ℓ²
//! ```
//!
//! where `b(φ) = ρ₀ g(φ) / A_ref`. In the semi-physical variant μ_j is the
//! deposition kernel μ(w_j, T_j; hrz0); in the constant-mean variant it is a
//! single rate μ̃.

use std::collections::HashMap;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deposition::{critical_diameter, DepositionParams, KernelGrid, PreparedConditions};
use crate::dust::PrototypeDistribution;
use crate::optics::MieTable;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    FirstSurface,
    SecondSurface,
}

/// Multiplier g(φ) on the blocked area at incidence angle `phi_deg`.
pub fn incidence_factor(phi_deg: f64, kind: SurfaceKind) -> Result<f64> {
    if !(0.0..90.0).contains(&phi_deg) {
        return Err(Error::Domain(format!(
            "incidence angle must lie in [0°, 90°), got {phi_deg}°"
        )));
    }
    let phi = phi_deg.to_radians();
    Ok(match kind {
        SurfaceKind::FirstSurface => (1.0 + phi.sin()) / phi.cos(),
        SurfaceKind::SecondSurface => {
            if phi_deg < 1.0 {
                log::warn!("second-surface incidence factor is unreliable below 1° (φ = {phi_deg}°)");
            }
            2.0 / phi.cos()
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MirrorState {
    pub nominal_reflectance: f64,
    pub reference_area: f64,
    pub soiled_area: f64,
    pub surface_kind: SurfaceKind,
}

impl MirrorState {
    pub fn clean(nominal_reflectance: f64, surface_kind: SurfaceKind) -> Self {
        MirrorState {
            nominal_reflectance,
            reference_area: 1.0,
            soiled_area: 0.0,
            surface_kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nominal_reflectance > 0.0 && self.nominal_reflectance <= 1.0) {
            return Err(Error::Domain(format!(
                "nominal reflectance must lie in (0, 1], got {}",
                self.nominal_reflectance
            )));
        }
        if !(self.reference_area > 0.0) || !(self.soiled_area >= 0.0) {
            return Err(Error::Domain("areas must be positive (reference) and non-negative (soiled)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflectance {
    pub value: f64,
    /// Set when the linear model went negative and the value was clipped to 0.
    pub saturated: bool,
}

/// ρ₀·[1 − (A_soil/A_ref)·g(φ)], clipped at zero.
pub fn reflectance(state: &MirrorState, phi_deg: f64) -> Result<Reflectance> {
    state.validate()?;
    let g = incidence_factor(phi_deg, state.surface_kind)?;
    let r = state.nominal_reflectance * (1.0 - state.soiled_area / state.reference_area * g);
    Ok(if r < 0.0 {
        Reflectance {
            value: 0.0,
            saturated: true,
        }
    } else {
        Reflectance {
            value: r,
            saturated: false,
        }
    })
}

/// Gaussian distribution of a reflectance change (signed fraction).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDistribution {
    pub mean: f64,
    pub variance: f64,
}

impl LossDistribution {
    pub fn std(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn scaled(&self, k: f64) -> LossDistribution {
        LossDistribution {
            mean: self.mean * k,
            variance: self.variance * k * k,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    SemiPhysical,
    ConstantMean,
}

impl std::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelVariant::SemiPhysical => "semi-physical",
            ModelVariant::ConstantMean => "constant-mean",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum ModelParams {
    SemiPhysical { hrz0: f64, sigma_dep: f64 },
    ConstantMean { mu_tilde: f64, sigma_dep: f64 },
}

impl ModelParams {
    pub fn variant(&self) -> ModelVariant {
        match self {
            ModelParams::SemiPhysical { .. } => ModelVariant::SemiPhysical,
            ModelParams::ConstantMean { .. } => ModelVariant::ConstantMean,
        }
    }

    pub fn sigma_dep(&self) -> f64 {
        match *self {
            ModelParams::SemiPhysical { sigma_dep, .. } | ModelParams::ConstantMean { sigma_dep, .. } => sigma_dep,
        }
    }

    pub fn with_sigma_dep(self, s: f64) -> Self {
        match self {
            ModelParams::SemiPhysical { hrz0, .. } => ModelParams::SemiPhysical { hrz0, sigma_dep: s },
            ModelParams::ConstantMean { mu_tilde, .. } => ModelParams::ConstantMean { mu_tilde, sigma_dep: s },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ModelParams::SemiPhysical { hrz0, sigma_dep } => hrz0 > 1.0 && hrz0.is_finite() && sigma_dep >= 0.0,
            ModelParams::ConstantMean { mu_tilde, sigma_dep } => {
                mu_tilde > 0.0 && mu_tilde.is_finite() && sigma_dep >= 0.0
            }
        };
        if ok && self.sigma_dep().is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid model parameters {self:?}")))
        }
    }
}

/// Reflectometer and mirror properties shared by a pair of measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementGeometry {
    pub nominal_reflectance: f64,
    pub reference_area: f64,
    pub surface_kind: SurfaceKind,
    pub incidence_start_deg: f64,
    pub incidence_end_deg: f64,
}

impl MeasurementGeometry {
    /// Fixed-incidence reflectometer geometry.
    pub fn fixed(nominal_reflectance: f64, surface_kind: SurfaceKind, incidence_deg: f64) -> Self {
        MeasurementGeometry {
            nominal_reflectance,
            reference_area: 1.0,
            surface_kind,
            incidence_start_deg: incidence_deg,
            incidence_end_deg: incidence_deg,
        }
    }

    /// b(φ) = ρ₀ g(φ) / A_ref.
    pub fn b(&self, phi_deg: f64) -> Result<f64> {
        Ok(self.nominal_reflectance * incidence_factor(phi_deg, self.surface_kind)? / self.reference_area)
    }

    pub fn b_end(&self) -> Result<f64> {
        self.b(self.incidence_end_deg)
    }
}

/// Conditions over one model interval for one mirror.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSample {
    pub alpha: f64,
    pub tilt_deg: f64,
    pub wind_speed: f64,
    pub air_temp_k: f64,
}

impl IntervalSample {
    /// α cos θ.
    pub fn loading(&self) -> f64 {
        self.alpha * self.tilt_deg.to_radians().cos()
    }
}

/// Gaussian moments from pre-summed loadings: `mean_sum = Σ α_j cos θ_j μ_j`
/// and `quad_sum = Σ α_j² cos² θ_j`.
#[allow(clippy::too_many_arguments)]
pub fn gaussian_moments(
    b_start: f64,
    b_end: f64,
    prior_soiled_area: f64,
    mean_sum: f64,
    quad_sum: f64,
    sigma_dep: f64,
    sigma_r_start: f64,
    sigma_r_end: f64,
) -> LossDistribution {
    LossDistribution {
        mean: (b_start - b_end) * prior_soiled_area - b_end * mean_sum,
        variance: sigma_dep * sigma_dep * b_end * b_end * quad_sum
            + sigma_r_end * sigma_r_end
            + sigma_r_start * sigma_r_start,
    }
}

/// Everything the semi-physical kernel needs besides hrz0 and the weather.
#[derive(Debug, Clone, Copy)]
pub struct KernelContext<'a> {
    pub mie: &'a MieTable,
    pub proto: &'a PrototypeDistribution,
    pub deposition: DepositionParams,
    pub dt_s: f64,
}

/// Kernel quadrature prepared for a fixed list of interval samples, so that
/// μ(w_j, T_j; hrz0) can be re-evaluated cheaply for many hrz0 values.
#[derive(Debug, Clone)]
pub struct KernelBank {
    grids: Vec<KernelGrid>,
    entries: Vec<(usize, f64, PreparedConditions)>,
    kappa: f64,
    dt_s: f64,
}

impl KernelBank {
    pub fn new(ctx: &KernelContext<'_>, samples: &[IntervalSample]) -> Result<Self> {
        let mut by_tilt: HashMap<u64, usize> = HashMap::new();
        let mut grids = Vec::new();
        let mut index = Vec::with_capacity(samples.len());
        for s in samples {
            let key = s.tilt_deg.to_bits();
            let gi = match by_tilt.get(&key) {
                Some(&i) => i,
                None => {
                    let dc = critical_diameter(s.tilt_deg, &ctx.deposition);
                    grids.push(KernelGrid::new(ctx.mie, ctx.proto, dc)?);
                    by_tilt.insert(key, grids.len() - 1);
                    grids.len() - 1
                }
            };
            index.push(gi);
        }
        let entries = samples
            .par_iter()
            .zip(index.par_iter())
            .map(|(s, &gi)| (gi, s.wind_speed, PreparedConditions::new(&grids[gi], s.air_temp_k, &ctx.deposition)))
            .collect();
        Ok(KernelBank {
            grids,
            entries,
            kappa: ctx.deposition.von_karman,
            dt_s: ctx.dt_s,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// μ_j for every sample, in sample order. The result does not depend on
    /// how rayon schedules the work.
    pub fn rates(&self, hrz0: f64) -> Vec<f64> {
        let ln_h = hrz0.ln();
        self.entries
            .par_iter()
            .map(|(gi, w, prep)| prep.kernel(&self.grids[*gi], *w, ln_h, self.kappa, self.dt_s))
            .collect()
    }
}

/// Per-sample mean area-loss rates μ_j for `params`.
pub fn mean_rates(
    params: &ModelParams,
    samples: &[IntervalSample],
    ctx: Option<&KernelContext<'_>>,
) -> Result<Vec<f64>> {
    match *params {
        ModelParams::ConstantMean { mu_tilde, .. } => Ok(vec![mu_tilde; samples.len()]),
        ModelParams::SemiPhysical { hrz0, .. } => {
            let ctx = ctx.ok_or_else(|| {
                Error::Config("semi-physical moments need a kernel context (MieTable, prototype)".into())
            })?;
            Ok(KernelBank::new(ctx, samples)?.rates(hrz0))
        }
    }
}

/// Distribution of the measured change `r_m − r_ℓ` over the intervals in
/// `samples`. `prior_soiled_area` is A_soil at ℓ; it only matters when the
/// two incidence angles differ.
pub fn interval_moments(
    params: &ModelParams,
    samples: &[IntervalSample],
    geometry: &MeasurementGeometry,
    sigma_r: (f64, f64),
    prior_soiled_area: f64,
    ctx: Option<&KernelContext<'_>>,
) -> Result<LossDistribution> {
    params.validate()?;
    let b_start = geometry.b(geometry.incidence_start_deg)?;
    let b_end = geometry.b_end()?;
    let rates = mean_rates(params, samples, ctx)?;
    let mut mean_sum = 0.0;
    let mut quad_sum = 0.0;
    for (s, mu) in samples.iter().zip(&rates) {
        let c = s.loading();
        mean_sum += c * mu;
        quad_sum += c * c;
    }
    Ok(gaussian_moments(
        b_start,
        b_end,
        prior_soiled_area,
        mean_sum,
        quad_sum,
        params.sigma_dep(),
        sigma_r.0,
        sigma_r.1,
    ))
}

/// One point of a predicted reflectance trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub timestamp: NaiveDateTime,
    pub mean_reflectance: f64,
    /// Expected loss ρ₀·g(φ)·A_soil/A_ref, before clipping at zero reflectance.
    pub mean_loss: f64,
    pub sigma: f64,
    pub lo2sigma: f64,
    pub hi2sigma: f64,
    pub saturated: bool,
}

/// Predicted reflectance at each of `timestamps` (length n+1) given the
/// conditions over the n intervals between them. `initial_soiled_area` is the
/// known A_soil at the first timestamp and `sigma_r_start` the standard
/// deviation of the reflectance it was inferred from (0 for a known clean
/// start).
pub fn predict_trajectory(
    params: &ModelParams,
    timestamps: &[NaiveDateTime],
    samples: &[Option<IntervalSample>],
    geometry: &MeasurementGeometry,
    initial_soiled_area: f64,
    sigma_r_start: f64,
    ctx: Option<&KernelContext<'_>>,
) -> Result<Vec<TrajectoryPoint>> {
    params.validate()?;
    if timestamps.len() != samples.len() + 1 {
        return Err(Error::Validation(format!(
            "{} timestamps for {} intervals",
            timestamps.len(),
            samples.len()
        )));
    }
    let gaps: Vec<NaiveDateTime> = samples
        .iter()
        .zip(timestamps)
        .filter(|(s, _)| s.is_none())
        .map(|(_, t)| *t)
        .collect();
    if !gaps.is_empty() {
        return Err(Error::WeatherGap(gaps));
    }
    let samples: Vec<IntervalSample> = samples.iter().map(|s| s.expect("gaps rejected")).collect();
    let rates = mean_rates(params, &samples, ctx)?;
    let b = geometry.b_end()?;
    let sigma_dep = params.sigma_dep();
    let mut area = initial_soiled_area;
    let mut quad = 0.0;
    let mut out = Vec::with_capacity(timestamps.len());
    for (k, t) in timestamps.iter().enumerate() {
        if k > 0 {
            let c = samples[k - 1].loading();
            area += c * rates[k - 1];
            quad += c * c;
        }
        let state = MirrorState {
            nominal_reflectance: geometry.nominal_reflectance,
            reference_area: geometry.reference_area,
            soiled_area: area,
            surface_kind: geometry.surface_kind,
        };
        let r = reflectance(&state, geometry.incidence_end_deg)?;
        let g = incidence_factor(geometry.incidence_end_deg, geometry.surface_kind)?;
        let sigma = (b * b * sigma_dep * sigma_dep * quad + sigma_r_start * sigma_r_start).sqrt();
        out.push(TrajectoryPoint {
            timestamp: *t,
            mean_reflectance: r.value,
            mean_loss: geometry.nominal_reflectance * g * area / geometry.reference_area,
            sigma,
            lo2sigma: r.value - 2.0 * sigma,
            hi2sigma: r.value + 2.0 * sigma,
            saturated: r.saturated,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incidence_factors() {
        assert_eq!(incidence_factor(0.0, SurfaceKind::FirstSurface).unwrap(), 1.0);
        assert!((incidence_factor(15.0, SurfaceKind::FirstSurface).unwrap() - 1.3032).abs() < 5e-5);
        assert!((incidence_factor(15.0, SurfaceKind::SecondSurface).unwrap() - 2.0706).abs() < 5e-5);
        assert!(incidence_factor(90.0, SurfaceKind::FirstSurface).is_err());
        assert!(incidence_factor(0.5, SurfaceKind::SecondSurface).is_ok());
    }

    #[test]
    fn reflectance_examples() {
        let mut s = MirrorState::clean(0.95, SurfaceKind::FirstSurface);
        assert_eq!(reflectance(&s, 15.0).unwrap().value, 0.95);
        s.soiled_area = 0.01;
        assert!((reflectance(&s, 0.0).unwrap().value - 0.9405).abs() < 1e-15);
        s.soiled_area = 1.0 / incidence_factor(15.0, SurfaceKind::FirstSurface).unwrap();
        assert!(reflectance(&s, 15.0).unwrap().value.abs() < 1e-15);
        s.soiled_area = 2.0;
        let r = reflectance(&s, 15.0).unwrap();
        assert!(r.saturated && r.value == 0.0);
    }

    #[test]
    fn constant_mean_single_interval() {
        let rho0 = 0.95;
        let geom = MeasurementGeometry::fixed(rho0, SurfaceKind::SecondSurface, 0.0);
        let p = ModelParams::ConstantMean {
            mu_tilde: 1e-4,
            sigma_dep: 0.0,
        };
        let s = IntervalSample {
            alpha: 1.0,
            tilt_deg: 0.0,
            wind_speed: 2.0,
            air_temp_k: 300.0,
        };
        let d = interval_moments(&p, &[s], &geom, (0.0, 0.0), 0.0, None).unwrap();
        assert!((d.mean + 2.0 * rho0 * 1e-4).abs() < 1e-18);
        assert_eq!(d.variance, 0.0);
    }

    #[test]
    fn empty_interval_is_measurement_noise_only() {
        let geom = MeasurementGeometry::fixed(0.95, SurfaceKind::SecondSurface, 15.0);
        let p = ModelParams::ConstantMean {
            mu_tilde: 1e-4,
            sigma_dep: 1e-4,
        };
        let d = interval_moments(&p, &[], &geom, (0.003, 0.004), 0.0, None).unwrap();
        assert_eq!(d.mean, 0.0);
        assert!((d.variance - 25e-6).abs() < 1e-18);
    }

    #[test]
    fn semi_physical_without_context_is_a_config_error() {
        let geom = MeasurementGeometry::fixed(0.95, SurfaceKind::SecondSurface, 15.0);
        let p = ModelParams::SemiPhysical {
            hrz0: 5.0,
            sigma_dep: 1e-4,
        };
        let s = IntervalSample {
            alpha: 1.0,
            tilt_deg: 0.0,
            wind_speed: 2.0,
            air_temp_k: 300.0,
        };
        assert!(matches!(
            interval_moments(&p, &[s], &geom, (0.0, 0.0), 0.0, None),
            Err(Error::Config(_))
        ));
    }
}
