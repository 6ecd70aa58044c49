//! Dry deposition onto a mirror and the resulting area-loss kernel.
//!
//! Deposition velocity follows the three-resistance model
//! `v_d = v_s + 1/(r_a + r_b + r_a r_b v_s)` under neutral stability with
//! friction velocity `u* = κ w / ln(hrz0)`. The kernel
//! `μ(w, T; hrz0) = (π/4) Δt ∫ D² γ(D) n̂(D) v_d dD` is evaluated with a fixed
//! log-spaced Simpson rule on (1 nm, D_c].

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::dust::PrototypeDistribution;
use crate::optics::MieTable;
use crate::quadrature::log_simpson_rule;
use crate::{Error, Result};

const BOLTZMANN: f64 = 1.380_649e-23;
const GAS_CONSTANT: f64 = 8.314_462_618;
const AIR_MOLAR_MASS: f64 = 0.028_964;
const AIR_SPECIFIC_GAS_CONSTANT: f64 = 287.05;

/// Smallest diameter (μm) included in the kernel.
pub const KERNEL_LOWER_UM: f64 = 1e-3;
/// Simpson subintervals in the kernel quadrature.
pub const KERNEL_INTERVALS: usize = 512;

/// Dynamic viscosity of air (Pa·s), Sutherland's law.
pub fn air_viscosity(t_k: f64) -> f64 {
    1.458e-6 * t_k.powf(1.5) / (t_k + 110.4)
}

/// Air density (kg/m³) from the ideal-gas law.
pub fn air_density(t_k: f64, pressure_pa: f64) -> f64 {
    pressure_pa / (AIR_SPECIFIC_GAS_CONSTANT * t_k)
}

/// Mean free path of air molecules (m).
pub fn mean_free_path(t_k: f64, pressure_pa: f64) -> f64 {
    let inverse_speed = (8.0 * AIR_MOLAR_MASS / (std::f64::consts::PI * GAS_CONSTANT * t_k)).sqrt();
    2.0 * air_viscosity(t_k) / (pressure_pa * inverse_speed)
}

/// Cunningham slip correction for diameter `d_m` (m).
pub fn slip_correction(d_m: f64, lambda_m: f64) -> f64 {
    1.0 + 2.0 * lambda_m / d_m * (1.257 + 0.4 * (-1.1 * d_m / (2.0 * lambda_m)).exp())
}

/// Constants for the rolling-removal moment balance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdhesionParams {
    pub hamaker_dust_j: f64,
    pub hamaker_surface_j: f64,
    pub poisson_dust: f64,
    pub poisson_surface: f64,
    pub youngs_dust_pa: f64,
    pub youngs_surface_pa: f64,
    /// Contact separation distance (m).
    pub separation_m: f64,
}

impl Default for AdhesionParams {
    fn default() -> Self {
        AdhesionParams {
            hamaker_dust_j: 8.5e-20,
            hamaker_surface_j: 6.5e-20,
            poisson_dust: 0.17,
            poisson_surface: 0.27,
            youngs_dust_pa: 7.24e10,
            youngs_surface_pa: 8.01e10,
            separation_m: 4e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepositionParams {
    pub hrz0: f64,
    pub von_karman: f64,
    pub gravity: f64,
    pub pressure_pa: f64,
    pub particle_density_kg_m3: f64,
    /// Absolute cap D_c′ (μm): nothing larger deposits.
    pub diameter_cap_um: f64,
    pub adhesion: AdhesionParams,
}

impl Default for DepositionParams {
    fn default() -> Self {
        DepositionParams {
            hrz0: 10.0,
            von_karman: 0.4,
            gravity: 9.81,
            pressure_pa: 101_325.0,
            particle_density_kg_m3: 2000.0,
            diameter_cap_um: 100.0,
            adhesion: AdhesionParams::default(),
        }
    }
}

impl DepositionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hrz0 > 1.0 && self.hrz0.is_finite()) {
            return Err(Error::Domain(format!("hrz0 must exceed 1, got {}", self.hrz0)));
        }
        if !(self.von_karman > 0.3 && self.von_karman < 0.5) {
            return Err(Error::Config(format!(
                "von Kármán constant {} outside (0.3, 0.5)",
                self.von_karman
            )));
        }
        for (name, v) in [
            ("gravity", self.gravity),
            ("pressure", self.pressure_pa),
            ("particle density", self.particle_density_kg_m3),
            ("diameter cap", self.diameter_cap_um),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Time-averaged conditions over one model interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherSample {
    pub timestamp: NaiveDateTime,
    pub wind_speed: f64,
    pub air_temp_k: f64,
    pub dust_ug_m3: f64,
    pub tilt_deg: f64,
}

impl WeatherSample {
    pub fn validate(&self) -> Result<()> {
        let ok = self.wind_speed >= 0.0
            && self.air_temp_k > 0.0
            && self.dust_ug_m3 >= 0.0
            && (0.0..=90.0).contains(&self.tilt_deg);
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid weather sample {self:?}")))
        }
    }
}

fn check_inputs(w: f64, t_k: f64, d_um: f64) -> Result<()> {
    if !(d_um > 0.0) {
        return Err(Error::Domain(format!("diameter must be positive, got {d_um}")));
    }
    if !(w >= 0.0 && w.is_finite()) {
        return Err(Error::Domain(format!("wind speed must be non-negative, got {w}")));
    }
    if !(t_k > 0.0 && t_k.is_finite()) {
        return Err(Error::Domain(format!("temperature must be positive, got {t_k} K")));
    }
    Ok(())
}

/// Stokes settling velocity (m/s) with slip correction.
pub fn settling_velocity(t_k: f64, d_um: f64, params: &DepositionParams) -> Result<f64> {
    check_inputs(0.0, t_k, d_um)?;
    let d = d_um * 1e-6;
    let cc = slip_correction(d, mean_free_path(t_k, params.pressure_pa));
    Ok(params.particle_density_kg_m3 * d * d * params.gravity * cc / (18.0 * air_viscosity(t_k)))
}

/// Deposition velocity (m/s).
pub fn deposition_velocity(w: f64, t_k: f64, d_um: f64, params: &DepositionParams) -> Result<f64> {
    check_inputs(w, t_k, d_um)?;
    let node = NodeProperties::new(t_k, d_um * 1e-6, params);
    Ok(node.velocity(w, params.hrz0.ln(), params.von_karman))
}

/// Temperature-dependent per-diameter quantities that do not involve wind.
#[derive(Debug, Clone, Copy)]
struct NodeProperties {
    settling: f64,
    schmidt_term: f64,
    impaction_scale: f64,
}

impl NodeProperties {
    fn new(t_k: f64, d_m: f64, params: &DepositionParams) -> Self {
        let mu = air_viscosity(t_k);
        let nu = mu / air_density(t_k, params.pressure_pa);
        let cc = slip_correction(d_m, mean_free_path(t_k, params.pressure_pa));
        let settling = params.particle_density_kg_m3 * d_m * d_m * params.gravity * cc / (18.0 * mu);
        let diffusivity = BOLTZMANN * t_k * cc / (3.0 * std::f64::consts::PI * mu * d_m);
        let schmidt = nu / diffusivity;
        NodeProperties {
            settling,
            schmidt_term: schmidt.powf(-2.0 / 3.0),
            // 10^(−3/St) = exp(−impaction_scale / u*²) with St = v_s u*² / (g ν)
            impaction_scale: 3.0 * std::f64::consts::LN_10 * params.gravity * nu / settling,
        }
    }

    #[inline]
    fn velocity(&self, w: f64, ln_hrz0: f64, kappa: f64) -> f64 {
        if w == 0.0 {
            return self.settling;
        }
        let ustar = kappa * w / ln_hrz0;
        let ra = ln_hrz0 / (kappa * ustar);
        let rb = 1.0 / (ustar * (self.schmidt_term + (-self.impaction_scale / (ustar * ustar)).exp()));
        self.settling + 1.0 / (ra + rb + ra * rb * self.settling)
    }
}

/// Smallest diameter (μm) removed by gravity-driven rolling at tilt `tilt_deg`,
/// capped at `params.diameter_cap_um`.
///
/// A particle rolls off when `m g sinθ · D/2 ≥ (F_a + m g cosθ) · a`, with
/// van der Waals pull-off `F_a = A D / (12 z₀²)` and Hertzian contact radius
/// `a = (F_a (D/2) / K)^{1/3}`.
pub fn critical_diameter(tilt_deg: f64, params: &DepositionParams) -> f64 {
    let cap = params.diameter_cap_um;
    let theta = tilt_deg.clamp(0.0, 90.0).to_radians();
    if theta == 0.0 {
        return cap;
    }
    let ad = &params.adhesion;
    let hamaker = (ad.hamaker_dust_j * ad.hamaker_surface_j).sqrt();
    let k_eff = 4.0 / 3.0
        / ((1.0 - ad.poisson_dust.powi(2)) / ad.youngs_dust_pa
            + (1.0 - ad.poisson_surface.powi(2)) / ad.youngs_surface_pa);
    let (s, c) = theta.sin_cos();
    let balance = |d_um: f64| {
        let d = d_um * 1e-6;
        let weight = params.particle_density_kg_m3 * std::f64::consts::PI / 6.0 * d.powi(3) * params.gravity;
        let pull_off = hamaker * d / (12.0 * ad.separation_m.powi(2));
        let contact = (pull_off * 0.5 * d / k_eff).cbrt();
        weight * s * 0.5 * d - (pull_off + weight * c) * contact
    };
    if balance(cap) < 0.0 {
        return cap;
    }
    // first sign change on a coarse log grid, then bisection in ln D
    let lo_bound = KERNEL_LOWER_UM;
    let steps = 400;
    let ratio = (cap / lo_bound).ln() / steps as f64;
    let mut lo = lo_bound;
    let mut hi = cap;
    if balance(lo_bound) >= 0.0 {
        return lo_bound;
    }
    for i in 1..=steps {
        let d = (lo_bound.ln() + ratio * i as f64).exp().min(cap);
        if balance(d) >= 0.0 {
            hi = d;
            break;
        }
        lo = d;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if balance(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Quadrature nodes for the kernel with the wind- and temperature-independent
/// factor `(π/4)·1e-6·w_i D_i² γ(D_i) n̂(D_i)` folded into each weight.
#[derive(Debug, Clone)]
pub struct KernelGrid {
    pub critical_diameter_um: f64,
    diameters_m: Vec<f64>,
    weights: Vec<f64>,
}

impl KernelGrid {
    pub fn new(mie: &MieTable, proto: &PrototypeDistribution, critical_diameter_um: f64) -> Result<Self> {
        if critical_diameter_um <= KERNEL_LOWER_UM {
            return Ok(KernelGrid {
                critical_diameter_um,
                diameters_m: Vec::new(),
                weights: Vec::new(),
            });
        }
        if !mie.covers(KERNEL_LOWER_UM, critical_diameter_um) {
            return Err(Error::Config(format!(
                "MieTable covers [{}, {}] μm but the kernel needs [{KERNEL_LOWER_UM}, {critical_diameter_um}] μm",
                mie.min_diameter(),
                mie.max_diameter()
            )));
        }
        let (nodes, w) = log_simpson_rule(KERNEL_LOWER_UM, critical_diameter_um, KERNEL_INTERVALS);
        let mut weights = Vec::with_capacity(nodes.len());
        for (&d, &wi) in nodes.iter().zip(&w) {
            let gamma = mie.gamma_at(d).expect("coverage checked above");
            weights.push(std::f64::consts::FRAC_PI_4 * 1e-6 * wi * d * d * gamma * proto.density_unchecked(d));
        }
        Ok(KernelGrid {
            critical_diameter_um,
            diameters_m: nodes.iter().map(|d| d * 1e-6).collect(),
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn diameters_um(&self) -> Vec<f64> {
        self.diameters_m.iter().map(|d| d * 1e6).collect()
    }

    /// Folded weights (see type docs), one per node.
    pub fn folded_weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Per-node deposition properties at one air temperature, reusable for any
/// wind speed and hrz0.
#[derive(Debug, Clone)]
pub struct PreparedConditions {
    nodes: Vec<NodeProperties>,
}

impl PreparedConditions {
    pub fn new(grid: &KernelGrid, t_k: f64, params: &DepositionParams) -> Self {
        PreparedConditions {
            nodes: grid
                .diameters_m
                .iter()
                .map(|&d| NodeProperties::new(t_k, d, params))
                .collect(),
        }
    }

    /// μ per unit α for one interval of `dt_s` seconds.
    pub fn kernel(&self, grid: &KernelGrid, w: f64, ln_hrz0: f64, kappa: f64, dt_s: f64) -> f64 {
        let mut acc = 0.0;
        for (node, wt) in self.nodes.iter().zip(&grid.weights) {
            acc += wt * node.velocity(w, ln_hrz0, kappa);
        }
        acc * dt_s
    }
}

/// Area-loss kernel μ(w, T; hrz0) for one interval of `dt_s` seconds on a
/// surface whose critical diameter is `critical_diameter_um`.
pub fn area_loss_kernel(
    w: f64,
    t_k: f64,
    params: &DepositionParams,
    mie: &MieTable,
    proto: &PrototypeDistribution,
    dt_s: f64,
    critical_diameter_um: f64,
) -> Result<f64> {
    params.validate()?;
    check_inputs(w, t_k, 1.0)?;
    if !(dt_s >= 0.0) {
        return Err(Error::Domain(format!("interval length must be non-negative, got {dt_s}")));
    }
    let grid = KernelGrid::new(mie, proto, critical_diameter_um)?;
    let prepared = PreparedConditions::new(&grid, t_k, params);
    Ok(prepared.kernel(&grid, w, params.hrz0.ln(), params.von_karman, dt_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn air_properties_at_room_temperature() {
        let t = 293.15;
        assert!((air_viscosity(t) - 1.81e-5).abs() < 0.02e-5);
        assert!((air_density(t, 101_325.0) - 1.204).abs() < 0.005);
        let lambda = mean_free_path(t, 101_325.0);
        assert!(lambda > 6.0e-8 && lambda < 7.0e-8, "{lambda}");
    }

    #[test]
    fn still_air_leaves_settling() {
        let p = DepositionParams::default();
        for d in [0.01, 1.0, 30.0] {
            let vs = settling_velocity(300.0, d, &p).unwrap();
            assert_eq!(deposition_velocity(0.0, 300.0, d, &p).unwrap(), vs);
        }
    }

    #[test]
    fn horizontal_surface_returns_cap() {
        let p = DepositionParams::default();
        assert_eq!(critical_diameter(0.0, &p), p.diameter_cap_um);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let p = DepositionParams::default();
        assert!(deposition_velocity(1.0, 300.0, 0.0, &p).is_err());
        assert!(deposition_velocity(-1.0, 300.0, 1.0, &p).is_err());
        assert!(deposition_velocity(1.0, 0.0, 1.0, &p).is_err());
        let bad = DepositionParams { hrz0: 1.0, ..p };
        assert!(bad.validate().is_err());
    }
}
