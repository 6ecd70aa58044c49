use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mie::{mie_efficiencies, RefractiveIndex};
use super::phase::acceptance_factor;
use super::spectrum::Spectrum;
use crate::quadrature::logspace;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    /// Mie-weighted blocking relative to the geometric cross-section.
    Mie,
    /// γ ≡ 1: pure geometric blocking.
    Geometric,
}

/// γ(D, φa) tabulated on an ascending diameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MieTable {
    pub diameters_um: Vec<f64>,
    pub gamma: Vec<f64>,
    pub acceptance_half_angle_mrad: f64,
    pub wavelengths_nm: Vec<f64>,
    pub spectral_weights: Vec<f64>,
    pub refractive_index: RefractiveIndex,
    pub mode: GammaMode,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    refractive_index: RefractiveIndex,
    acceptance_half_angle_mrad: f64,
    wavelengths_nm: Vec<f64>,
    spectral_weights: Vec<f64>,
    mode: GammaMode,
    normalization: String,
}

const NORMALIZATION: &str = "geometric_cross_section";

/// Log-spaced grid from 1 nm to `cap_um` with `points` nodes.
pub fn default_diameter_grid(cap_um: f64, points: usize) -> Vec<f64> {
    logspace(1e-3, cap_um, points.max(2))
}

fn gamma_single(
    d_um: f64,
    m: RefractiveIndex,
    spectrum: &Spectrum,
    half_angle_rad: f64,
) -> Result<f64> {
    let mut g = 0.0;
    for (&lambda, &w) in spectrum.wavelengths_nm.iter().zip(&spectrum.weights) {
        if w == 0.0 {
            continue;
        }
        let x = std::f64::consts::PI * d_um * 1e3 / lambda;
        let mie = mie_efficiencies(x, m).map_err(|e| {
            Error::Numerical(format!("γ at D = {d_um} μm, λ = {lambda} nm: {e}"))
        })?;
        let outside = acceptance_factor(&mie.phase_function, half_angle_rad)?;
        let recovered = mie.q_sca * (1.0 - outside);
        g += w * (mie.q_ext - recovered).max(0.0);
    }
    Ok(g)
}

/// Tabulates γ(D) for every diameter in `diameters_um`.
pub fn build_gamma_table(
    m: RefractiveIndex,
    spectrum: &Spectrum,
    acceptance_half_angle_mrad: f64,
    diameters_um: &[f64],
    mode: GammaMode,
) -> Result<MieTable> {
    m.validate()?;
    spectrum.validate()?;
    if diameters_um.is_empty() {
        return Err(Error::Config("diameter grid is empty".into()));
    }
    if diameters_um.windows(2).any(|w| w[1] <= w[0]) || diameters_um[0] <= 0.0 {
        return Err(Error::Config(
            "diameter grid must be positive and strictly increasing".into(),
        ));
    }
    if !(acceptance_half_angle_mrad > 0.0) {
        return Err(Error::Config("acceptance half-angle must be positive".into()));
    }
    let half_angle = acceptance_half_angle_mrad * 1e-3;
    let gamma = match mode {
        GammaMode::Geometric => vec![1.0; diameters_um.len()],
        GammaMode::Mie => diameters_um
            .par_iter()
            .map(|&d| gamma_single(d, m, spectrum, half_angle))
            .collect::<Result<Vec<f64>>>()?,
    };
    Ok(MieTable {
        diameters_um: diameters_um.to_vec(),
        gamma,
        acceptance_half_angle_mrad,
        wavelengths_nm: spectrum.wavelengths_nm.clone(),
        spectral_weights: spectrum.weights.clone(),
        refractive_index: m,
        mode,
    })
}

impl MieTable {
    pub fn min_diameter(&self) -> f64 {
        self.diameters_um[0]
    }

    pub fn max_diameter(&self) -> f64 {
        self.diameters_um[self.diameters_um.len() - 1]
    }

    /// Whether `[lo, hi]` lies inside the tabulated range.
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let slack = 1e-12;
        lo >= self.min_diameter() * (1.0 - slack) && hi <= self.max_diameter() * (1.0 + slack)
    }

    /// γ at `d_um`, linear in ln D between grid points. `None` outside the grid.
    pub fn gamma_at(&self, d_um: f64) -> Option<f64> {
        if self.mode == GammaMode::Geometric {
            return self.covers(d_um, d_um).then_some(1.0);
        }
        if !self.covers(d_um, d_um) {
            return None;
        }
        let ds = &self.diameters_um;
        let d = d_um.clamp(ds[0], ds[ds.len() - 1]);
        let i = ds.partition_point(|&x| x <= d);
        if i == 0 {
            return Some(self.gamma[0]);
        }
        if i == ds.len() {
            return Some(self.gamma[ds.len() - 1]);
        }
        let t = (d / ds[i - 1]).ln() / (ds[i] / ds[i - 1]).ln();
        Some(self.gamma[i - 1] + t * (self.gamma[i] - self.gamma[i - 1]))
    }

    pub fn validate(&self) -> Result<()> {
        if self.diameters_um.is_empty() || self.diameters_um.len() != self.gamma.len() {
            return Err(Error::Validation("MieTable grid and γ lengths differ".into()));
        }
        if self.diameters_um.windows(2).any(|w| w[1] <= w[0]) || self.diameters_um[0] <= 0.0 {
            return Err(Error::Validation(
                "MieTable diameters must be positive and strictly increasing".into(),
            ));
        }
        if self.gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::Validation("MieTable γ must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Content key identifying a table built from these inputs.
    pub fn cache_key(
        m: RefractiveIndex,
        spectrum: &Spectrum,
        acceptance_half_angle_mrad: f64,
        diameters_um: &[f64],
        mode: GammaMode,
    ) -> String {
        let mut h = Sha256::new();
        let payload = serde_json::json!({
            "m": m,
            "phi_a_mrad": acceptance_half_angle_mrad,
            "wavelengths_nm": spectrum.wavelengths_nm,
            "weights": spectrum.weights,
            "diameters_um": diameters_um,
            "mode": mode,
        });
        h.update(payload.to_string().as_bytes());
        let digest = h.finalize();
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Writes `<stem>.csv` (diameter_um, gamma) and `<stem>.json` sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["diameter_um", "gamma"])?;
        for (d, g) in self.diameters_um.iter().zip(&self.gamma) {
            w.write_record([d.to_string(), g.to_string()])?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", csv_path.display()), e))?;
        let sidecar = Sidecar {
            refractive_index: self.refractive_index,
            acceptance_half_angle_mrad: self.acceptance_half_angle_mrad,
            wavelengths_nm: self.wavelengths_nm.clone(),
            spectral_weights: self.spectral_weights.clone(),
            mode: self.mode,
            normalization: NORMALIZATION.into(),
        };
        let path = sidecar_path(csv_path);
        fs::write(&path, serde_json::to_string_pretty(&sidecar)? + "\n")
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        let side_path = sidecar_path(csv_path);
        let text = fs::read_to_string(&side_path)
            .map_err(|e| Error::io(format!("reading {}", side_path.display()), e))?;
        let sidecar: Sidecar = serde_json::from_str(&text)?;
        if sidecar.normalization != NORMALIZATION {
            return Err(Error::Config(format!(
                "unsupported γ normalization '{}' in {}",
                sidecar.normalization,
                side_path.display()
            )));
        }
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let mut diameters_um = Vec::new();
        let mut gamma = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        path: csv_path.to_path_buf(),
                        line,
                        message: format!("column {} is not a number", i + 1),
                    })
            };
            diameters_um.push(parse(0)?);
            gamma.push(parse(1)?);
        }
        let table = MieTable {
            diameters_um,
            gamma,
            acceptance_half_angle_mrad: sidecar.acceptance_half_angle_mrad,
            wavelengths_nm: sidecar.wavelengths_nm,
            spectral_weights: sidecar.spectral_weights,
            refractive_index: sidecar.refractive_index,
            mode: sidecar.mode,
        };
        table.validate()?;
        Ok(table)
    }

    /// Loads the table for these inputs from `cache_dir` if present, otherwise
    /// builds and stores it there. Without a cache directory it just builds.
    pub fn load_or_build(
        cache_dir: Option<&Path>,
        m: RefractiveIndex,
        spectrum: &Spectrum,
        acceptance_half_angle_mrad: f64,
        diameters_um: &[f64],
        mode: GammaMode,
    ) -> Result<Self> {
        let Some(dir) = cache_dir else {
            return build_gamma_table(m, spectrum, acceptance_half_angle_mrad, diameters_um, mode);
        };
        let key = Self::cache_key(m, spectrum, acceptance_half_angle_mrad, diameters_um, mode);
        let path = dir.join(format!("gamma_{key}.csv"));
        if path.exists() {
            match Self::load(&path) {
                Ok(t) if t.diameters_um == diameters_um => return Ok(t),
                Ok(_) => log::warn!("cached table {} has a different grid; rebuilding", path.display()),
                Err(e) => log::warn!("ignoring unreadable cached table {}: {e}", path.display()),
            }
        }
        let table = build_gamma_table(m, spectrum, acceptance_half_angle_mrad, diameters_um, mode)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        table.save(&path)?;
        Ok(table)
    }
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_mode_is_exactly_one() {
        let grid = default_diameter_grid(100.0, 50);
        let t = build_gamma_table(
            RefractiveIndex::QUARTZ,
            &Spectrum::solar(),
            12.5,
            &grid,
            GammaMode::Geometric,
        )
        .unwrap();
        assert!(t.gamma.iter().all(|&g| g == 1.0));
        assert_eq!(t.gamma_at(3.3), Some(1.0));
        assert_eq!(t.gamma_at(200.0), None);
    }

    #[test]
    fn rejects_unsorted_grid() {
        let spec = Spectrum::monochromatic(650.0).unwrap();
        let r = build_gamma_table(RefractiveIndex::QUARTZ, &spec, 12.5, &[1.0, 0.5], GammaMode::Mie);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn interpolation_is_linear_in_log_diameter() {
        let t = MieTable {
            diameters_um: vec![1.0, 100.0],
            gamma: vec![0.0, 2.0],
            acceptance_half_angle_mrad: 12.5,
            wavelengths_nm: vec![650.0],
            spectral_weights: vec![1.0],
            refractive_index: RefractiveIndex::QUARTZ,
            mode: GammaMode::Mie,
        };
        assert!((t.gamma_at(10.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(t.gamma_at(100.0), Some(2.0));
        assert_eq!(t.gamma_at(0.5), None);
    }
}
