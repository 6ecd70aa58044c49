use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SOLAR_DIRECT: &str = include_str!("../../data/spectra/solar_direct_31.csv");

/// Wavelength grid with normalised weights Ē(λ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub wavelengths_nm: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Spectrum {
    pub fn new(wavelengths_nm: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let s = Spectrum {
            wavelengths_nm,
            weights,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn monochromatic(wavelength_nm: f64) -> Result<Self> {
        Spectrum::new(vec![wavelength_nm], vec![1.0])
    }

    /// Direct-beam solar spectrum on 31 wavelengths from 300 to 1500 nm.
    pub fn solar() -> Self {
        parse_csv(SOLAR_DIRECT, "<bundled solar spectrum>").expect("bundled spectrum is valid")
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        parse_csv(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.wavelengths_nm.is_empty() || self.wavelengths_nm.len() != self.weights.len() {
            return Err(Error::Config(
                "spectrum needs equal, non-zero numbers of wavelengths and weights".into(),
            ));
        }
        if self.wavelengths_nm.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Config("wavelengths must be positive".into()));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::Config("spectral weights must be non-negative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "spectral weights must sum to 1, got {total}"
            )));
        }
        Ok(())
    }
}

fn parse_csv(text: &str, origin: &str) -> Result<Spectrum> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut wavelengths = Vec::new();
    let mut weights = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: origin.into(),
                    line,
                    message: format!("expected a number in column {}", i + 1),
                })
        };
        wavelengths.push(field(0)?);
        weights.push(field(1)?);
    }
    Spectrum::new(wavelengths, weights)
}
