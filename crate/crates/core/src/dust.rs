//! Tri-modal log-normal dust size distributions.
//!
//! Number densities are in particles/(cm³·μm) with diameters in μm; mass
//! concentrations are in μg/m³.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::quadrature::gauss_kronrod;
use crate::{Error, Result};

const URBAN: &str = include_str!("../data/prototypes/urban.json");
const RURAL: &str = include_str!("../data/prototypes/rural.json");

/// Diameters below this contribute nothing measurable to mass integrals.
const MASS_LOWER_UM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNormalMode {
    #[serde(rename = "N_cm3")]
    pub number_cm3: f64,
    #[serde(rename = "mu_um")]
    pub median_um: f64,
    pub sigma_g: f64,
}

impl LogNormalMode {
    pub fn validate(&self) -> Result<()> {
        if !(self.number_cm3 >= 0.0 && self.number_cm3.is_finite()) {
            return Err(Error::Config(format!("mode number concentration {} < 0", self.number_cm3)));
        }
        if !(self.median_um > 0.0 && self.median_um.is_finite()) {
            return Err(Error::Config(format!("mode median diameter {} must be positive", self.median_um)));
        }
        if !(self.sigma_g > 1.0 && self.sigma_g.is_finite()) {
            return Err(Error::Config(format!("geometric standard deviation {} must exceed 1", self.sigma_g)));
        }
        Ok(())
    }

    fn density(&self, d: f64) -> f64 {
        let ls = self.sigma_g.log10();
        let z = (d.log10() - self.median_um.log10()) / ls;
        self.number_cm3 / (std::f64::consts::LN_10 * d * (2.0 * std::f64::consts::PI).sqrt() * ls)
            * (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrototypeLabel {
    Urban,
    Rural,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeDistribution {
    pub label: PrototypeLabel,
    pub density_kg_m3: f64,
    pub modes: [LogNormalMode; 3],
}

impl PrototypeDistribution {
    pub fn urban() -> Self {
        serde_json::from_str(URBAN).expect("bundled urban prototype")
    }

    pub fn rural() -> Self {
        serde_json::from_str(RURAL).expect("bundled rural prototype")
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let p: PrototypeDistribution = serde_json::from_str(&text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.modes {
            m.validate()?;
        }
        if !(self.density_kg_m3 > 0.0 && self.density_kg_m3.is_finite()) {
            return Err(Error::Config(format!(
                "particle density {} must be positive",
                self.density_kg_m3
            )));
        }
        Ok(())
    }

    /// n̂(D) without the domain check, for hot loops with known D > 0.
    pub fn density_unchecked(&self, d_um: f64) -> f64 {
        self.modes.iter().map(|m| m.density(d_um)).sum()
    }
}

/// Tri-modal log-normal number density n̂(D).
pub fn number_density(proto: &PrototypeDistribution, d_um: f64) -> Result<f64> {
    if !(d_um > 0.0) {
        return Err(Error::Domain(format!("diameter must be positive, got {d_um}")));
    }
    Ok(proto.density_unchecked(d_um))
}

/// Size cutoff of a measured mass concentration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DustMeasurementKind {
    /// Particulate matter below the given diameter in μm (PM10 = `Pm(10.0)`).
    Pm(f64),
    /// Total suspended particulates.
    Tsp,
}

impl DustMeasurementKind {
    /// Integration cutoff in μm, with TSP mapped to `tsp_upper_um`.
    pub fn cutoff_um(&self, tsp_upper_um: f64) -> f64 {
        match self {
            DustMeasurementKind::Pm(d) => *d,
            DustMeasurementKind::Tsp => tsp_upper_um,
        }
    }

    /// Parses `tsp`, `pm10`, `pm2.5`, `PM20`, ...
    pub fn parse(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "tsp" {
            return Ok(DustMeasurementKind::Tsp);
        }
        t.strip_prefix("pm")
            .and_then(|rest| rest.parse::<f64>().ok())
            .filter(|d| *d > 0.0 && d.is_finite())
            .map(DustMeasurementKind::Pm)
            .ok_or_else(|| Error::Validation(format!("unknown dust kind '{s}' (expected tsp or pmX)")))
    }

    pub fn label(&self) -> String {
        match self {
            DustMeasurementKind::Pm(d) => format!("pm{d}"),
            DustMeasurementKind::Tsp => "tsp".into(),
        }
    }
}

/// Mass concentration (μg/m³) of prototype particles with D below `cutoff_um`.
pub fn prototype_mass_below(proto: &PrototypeDistribution, cutoff_um: f64) -> Result<f64> {
    if !(cutoff_um > 0.0) {
        return Err(Error::Domain(format!("cutoff diameter must be positive, got {cutoff_um}")));
    }
    if cutoff_um <= MASS_LOWER_UM {
        return Ok(0.0);
    }
    // ∫ D³ n̂ dD = ∫ D⁴ n̂(D) d(ln D)
    let integral = gauss_kronrod(
        |u| {
            let d = u.exp();
            d.powi(4) * proto.density_unchecked(d)
        },
        MASS_LOWER_UM.ln(),
        cutoff_um.ln(),
        1e-10,
        0.0,
        64,
    );
    // kg/m³ · μm³/cm³ → μg/m³: 1 μm³/cm³ = 1e-12 m³/m³, 1 kg = 1e9 μg.
    Ok(proto.density_kg_m3 * std::f64::consts::PI / 6.0 * integral * 1e-3)
}

/// Prototype scaling factor α = c_δ / m_proto(δ).
pub fn alpha(concentration_ug_m3: f64, proto: &PrototypeDistribution, cutoff_um: f64) -> Result<f64> {
    if !(concentration_ug_m3 >= 0.0) {
        return Err(Error::Domain(format!(
            "dust concentration must be non-negative, got {concentration_ug_m3}"
        )));
    }
    let mass = prototype_mass_below(proto, cutoff_um)?;
    if !(mass > 0.0) {
        return Err(Error::Config(format!(
            "prototype mass below {cutoff_um} μm is zero; α undefined"
        )));
    }
    Ok(concentration_ug_m3 / mass)
}
