//! Campaign files, site configuration and assembly of fitting datasets.
//!
//! Weather CSV columns: `timestamp, wind_speed_m_s, air_temp_c` (or
//! `air_temp_k`)`, dust_ug_m3, dust_kind`. Reflectance CSV columns:
//! `timestamp, mirror_id, tilt_deg` followed by either `mean_r, sigma_mean,
//! n_pos` or per-position readings `r_pos_1 .. r_pos_n`.
//!
//! Weather is averaged onto a regular grid anchored at the first sample. The
//! slot at `t` describes the interval `[t, t + Δt)`. A reflectance
//! measurement is attached to its nearest slot, and a difference between two
//! measurements spans the slots from the first measurement's slot up to, but
//! excluding, the second's.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::deposition::DepositionParams;
use crate::dust::{prototype_mass_below, DustMeasurementKind, PrototypeDistribution, PrototypeLabel};
use crate::estimation::{Difference, Experiment, FitDataset};
use crate::loss_model::{IntervalSample, MeasurementGeometry, SurfaceKind};
use crate::optics::{default_diameter_grid, GammaMode, MieTable, RefractiveIndex, Spectrum};
use crate::{Error, Result};

const KELVIN_OFFSET: f64 = 273.15;
const TIMESTAMP_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Dust prototype named in a site file: `"urban"`, `"rural"`,
/// `{"file": "path.json"}` or an inline distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrototypeSpec {
    Named(PrototypeLabel),
    File { file: PathBuf },
    Inline(PrototypeDistribution),
}

/// Reflectometer spectrum: a single wavelength unless `spectrum` is set to
/// `"solar"` or `{"file": "weights.csv"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpectrumSpec {
    Named(String),
    File { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiteConfig {
    pub site_id: String,
    pub prototype: PrototypeSpec,
    /// Overrides the prototype's particle density when set.
    pub particle_density_kg_m3: Option<f64>,
    pub refractive_index: RefractiveIndex,
    pub wavelength_nm: f64,
    pub spectrum: Option<SpectrumSpec>,
    pub acceptance_half_angle_mrad: f64,
    pub incidence_angle_deg: f64,
    pub surface_kind: SurfaceKind,
    pub nominal_reflectance: f64,
    pub reference_area: f64,
    pub hrz0_guess: Option<f64>,
    pub diameter_cap_um: f64,
    /// Upper diameter used for TSP concentrations.
    pub tsp_upper_um: f64,
    /// Use γ ≡ 1 instead of Mie-derived blocking factors.
    pub geometric_limit: bool,
    /// Model interval; inferred from the weather spacing when absent.
    pub interval_minutes: Option<f64>,
    /// Longest run of missing slots filled by linear interpolation.
    pub max_fill_slots: usize,
    pub mie_diameter_points: usize,
    pub deposition: DepositionParams,
    #[serde(skip)]
    base_dir: Option<PathBuf>,
}

impl Default for SiteConfig {
    fn default() -> Self {
        SiteConfig {
            site_id: "site".into(),
            prototype: PrototypeSpec::Named(PrototypeLabel::Rural),
            particle_density_kg_m3: None,
            refractive_index: RefractiveIndex::QUARTZ,
            wavelength_nm: 650.0,
            spectrum: None,
            acceptance_half_angle_mrad: 12.5,
            incidence_angle_deg: 15.0,
            surface_kind: SurfaceKind::SecondSurface,
            nominal_reflectance: 0.95,
            reference_area: 1.0,
            hrz0_guess: None,
            diameter_cap_um: 100.0,
            tsp_upper_um: 100.0,
            geometric_limit: false,
            interval_minutes: None,
            max_fill_slots: 1,
            mie_diameter_points: 1000,
            deposition: DepositionParams::default(),
            base_dir: None,
        }
    }
}

impl SiteConfig {
    /// Reads a JSON site file. Relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut cfg: SiteConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength_nm", self.wavelength_nm),
            ("acceptance_half_angle_mrad", self.acceptance_half_angle_mrad),
            ("reference_area", self.reference_area),
            ("diameter_cap_um", self.diameter_cap_um),
            ("tsp_upper_um", self.tsp_upper_um),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.nominal_reflectance > 0.0 && self.nominal_reflectance <= 1.0) {
            return Err(Error::Config(format!(
                "nominal_reflectance must lie in (0, 1], got {}",
                self.nominal_reflectance
            )));
        }
        if !(0.0..90.0).contains(&self.incidence_angle_deg) {
            return Err(Error::Config(format!(
                "incidence_angle_deg must lie in [0, 90), got {}",
                self.incidence_angle_deg
            )));
        }
        if let Some(m) = self.interval_minutes {
            if !(m > 0.0) {
                return Err(Error::Config(format!("interval_minutes must be positive, got {m}")));
            }
        }
        if let Some(h) = self.hrz0_guess {
            if !(h > 1.0) {
                return Err(Error::Config(format!("hrz0_guess must exceed 1, got {h}")));
            }
        }
        if self.mie_diameter_points < 2 {
            return Err(Error::Config("mie_diameter_points must be at least 2".into()));
        }
        self.refractive_index.validate()?;
        self.deposition_params().validate()
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn prototype(&self) -> Result<PrototypeDistribution> {
        let mut proto = match &self.prototype {
            PrototypeSpec::Named(PrototypeLabel::Urban) => PrototypeDistribution::urban(),
            PrototypeSpec::Named(PrototypeLabel::Rural) => PrototypeDistribution::rural(),
            PrototypeSpec::Named(PrototypeLabel::Custom) => {
                return Err(Error::Config("prototype \"custom\" needs a file or inline distribution".into()))
            }
            PrototypeSpec::File { file } => PrototypeDistribution::from_json_file(&self.resolve(file))?,
            PrototypeSpec::Inline(p) => p.clone(),
        };
        if let Some(rho) = self.particle_density_kg_m3 {
            proto.density_kg_m3 = rho;
        }
        proto.validate()?;
        Ok(proto)
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        match &self.spectrum {
            None => Spectrum::monochromatic(self.wavelength_nm),
            Some(SpectrumSpec::Named(n)) if n.eq_ignore_ascii_case("solar") => Ok(Spectrum::solar()),
            Some(SpectrumSpec::Named(n)) => Err(Error::Config(format!(
                "unknown spectrum '{n}' (expected \"solar\" or {{\"file\": ...}})"
            ))),
            Some(SpectrumSpec::File { file }) => Spectrum::from_csv(&self.resolve(file)),
        }
    }

    /// Deposition parameters with the site's particle density and size cap.
    pub fn deposition_params(&self) -> DepositionParams {
        let mut p = self.deposition;
        p.diameter_cap_um = self.diameter_cap_um;
        if let Some(rho) = self.particle_density_kg_m3 {
            p.particle_density_kg_m3 = rho;
        }
        p
    }

    pub fn geometry(&self) -> MeasurementGeometry {
        MeasurementGeometry {
            reference_area: self.reference_area,
            ..MeasurementGeometry::fixed(self.nominal_reflectance, self.surface_kind, self.incidence_angle_deg)
        }
    }

    pub fn gamma_mode(&self) -> GammaMode {
        if self.geometric_limit {
            GammaMode::Geometric
        } else {
            GammaMode::Mie
        }
    }

    /// γ table covering the kernel's diameter range, cached under `cache_dir`.
    pub fn mie_table(&self, cache_dir: Option<&Path>) -> Result<MieTable> {
        let grid = default_diameter_grid(self.diameter_cap_um, self.mie_diameter_points);
        MieTable::load_or_build(
            cache_dir,
            self.refractive_index,
            &self.spectrum()?,
            self.acceptance_half_angle_mrad,
            &grid,
            self.gamma_mode(),
        )
    }

    pub fn interval_seconds(&self) -> Option<f64> {
        self.interval_minutes.map(|m| m * 60.0)
    }
}

/// Weather averaged over one model interval. Temperature is in kelvin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub wind_speed_m_s: f64,
    pub air_temp_k: f64,
    pub dust_ug_m3: f64,
    pub dust_kind: DustMeasurementKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mirror {
    pub mirror_id: String,
    pub tilt_deg: f64,
    pub orientation: String,
    pub surface_kind: SurfaceKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceRecord {
    pub timestamp: NaiveDateTime,
    pub mirror_id: String,
    pub mean_r: f64,
    pub sigma_mean: f64,
    pub n_pos: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub site_id: String,
    pub label: String,
    pub dt_s: f64,
    pub start: NaiveDateTime,
    /// One entry per grid slot; `None` marks an unfilled gap.
    pub slots: Vec<Option<WeatherRecord>>,
    pub mirrors: Vec<Mirror>,
    /// Sorted by (timestamp, mirror_id).
    pub reflectance: Vec<ReflectanceRecord>,
}

impl Campaign {
    pub fn slot_time(&self, k: usize) -> NaiveDateTime {
        self.start + seconds(self.dt_s * k as f64)
    }

    pub fn end(&self) -> NaiveDateTime {
        self.slot_time(self.slots.len())
    }

    pub fn mirror(&self, id: &str) -> Option<&Mirror> {
        self.mirrors.iter().find(|m| m.mirror_id == id)
    }

    /// Timestamps of unfilled slots.
    pub fn gaps(&self) -> Vec<NaiveDateTime> {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(k, _)| self.slot_time(k))
            .collect()
    }

    /// Nearest slot to `t`, if `t` lies within half an interval of the grid
    /// start and no later than the last slot.
    pub fn slot_index(&self, t: NaiveDateTime) -> Option<usize> {
        let offset = (t - self.start).num_milliseconds() as f64 / 1000.0 / self.dt_s;
        if offset < -0.5 || offset > (self.slots.len() - 1) as f64 {
            return None;
        }
        Some((offset.round().max(0.0) as usize).min(self.slots.len() - 1))
    }

    /// Interval samples for a mirror at `tilt_deg`, one per slot.
    pub fn interval_samples(&self, proto: &PrototypeDistribution, tsp_upper_um: f64, tilt_deg: f64) -> Result<Vec<Option<IntervalSample>>> {
        let mut masses: HashMap<u64, f64> = HashMap::new();
        self.slots
            .iter()
            .map(|s| {
                let Some(w) = s else { return Ok(None) };
                let cutoff = w.dust_kind.cutoff_um(tsp_upper_um);
                let mass = match masses.get(&cutoff.to_bits()) {
                    Some(&m) => m,
                    None => {
                        let m = prototype_mass_below(proto, cutoff)?;
                        if !(m > 0.0) {
                            return Err(Error::Config(format!("prototype mass below {cutoff} μm is zero")));
                        }
                        masses.insert(cutoff.to_bits(), m);
                        m
                    }
                };
                Ok(Some(IntervalSample {
                    alpha: w.dust_ug_m3 / mass,
                    tilt_deg,
                    wind_speed: w.wind_speed_m_s,
                    air_temp_k: w.air_temp_k,
                }))
            })
            .collect()
    }

    /// `(slot time, sample)` pairs for daily grouping and prediction.
    pub fn timed_samples(&self, proto: &PrototypeDistribution, tsp_upper_um: f64, tilt_deg: f64) -> Result<Vec<(NaiveDateTime, Option<IntervalSample>)>> {
        let samples = self.interval_samples(proto, tsp_upper_um, tilt_deg)?;
        Ok(samples.into_iter().enumerate().map(|(k, s)| (self.slot_time(k), s)).collect())
    }

    /// Measurements of one mirror in time order.
    pub fn records_for(&self, mirror_id: &str) -> Vec<&ReflectanceRecord> {
        self.reflectance.iter().filter(|r| r.mirror_id == mirror_id).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

fn seconds(s: f64) -> Duration {
    Duration::milliseconds((s * 1000.0).round() as i64)
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    TIMESTAMP_FORMATS.iter().find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct Table {
    path: PathBuf,
    headers: Vec<String>,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::Config(format!("cannot open {}: {e}", path.display())),
                _ => parse_err(path, 1, e.to_string()),
            })?;
        let headers = reader
            .headers()
            .map_err(|e| parse_err(path, 1, e.to_string()))?
            .iter()
            .map(|h| h.to_ascii_lowercase())
            .collect();
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(path, line, e.to_string())
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Table {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn require(&self, name: &str, hint: &str) -> Result<usize> {
        self.column(name).ok_or_else(|| {
            parse_err(
                &self.path,
                1,
                format!("missing required column '{name}'{hint}"),
            )
        })
    }

    fn number(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<f64> {
        let raw = rec.get(col).unwrap_or("");
        if raw.is_empty() || raw.eq_ignore_ascii_case("nan") {
            return Ok(f64::NAN);
        }
        raw.parse::<f64>().map_err(|_| {
            parse_err(
                &self.path,
                line,
                format!("column '{}': cannot parse '{raw}' as a number", self.headers[col]),
            )
        })
    }

    fn timestamp(&self, line: u64, rec: &csv::StringRecord, col: usize) -> Result<NaiveDateTime> {
        let raw = rec.get(col).unwrap_or("");
        parse_timestamp(raw).ok_or_else(|| parse_err(&self.path, line, format!("cannot parse timestamp '{raw}'")))
    }
}

struct RawWeather {
    line: u64,
    t: NaiveDateTime,
    record: Option<WeatherRecord>,
}

fn read_weather(path: &Path) -> Result<Vec<RawWeather>> {
    let table = Table::read(path)?;
    let ts = table.require("timestamp", "")?;
    if table.column("wind_speed_km_h").is_some() || table.column("wind_speed_kmh").is_some() {
        return Err(parse_err(path, 1, "unit mismatch: wind speed must be given in m/s as 'wind_speed_m_s'"));
    }
    if table.column("air_temp_f").is_some() {
        return Err(parse_err(path, 1, "unit mismatch: temperature must be given as 'air_temp_c' or 'air_temp_k'"));
    }
    let wind = table.require("wind_speed_m_s", " (m/s)")?;
    let (temp, kelvin) = match (table.column("air_temp_c"), table.column("air_temp_k")) {
        (Some(c), _) => (c, false),
        (None, Some(k)) => (k, true),
        (None, None) => return Err(parse_err(path, 1, "missing required column 'air_temp_c' (°C) or 'air_temp_k'")),
    };
    let dust = table.require("dust_ug_m3", " (μg/m³)")?;
    let kind = table.require("dust_kind", " (tsp, pm10, ...)")?;

    let mut out = Vec::with_capacity(table.rows.len());
    let mut incomplete = 0usize;
    for (line, rec) in &table.rows {
        let t = table.timestamp(*line, rec, ts)?;
        let w = table.number(*line, rec, wind)?;
        let temp_raw = table.number(*line, rec, temp)?;
        let c = table.number(*line, rec, dust)?;
        let kind_raw = rec.get(kind).unwrap_or("");
        let dust_kind = DustMeasurementKind::parse(kind_raw).map_err(|e| parse_err(path, *line, e.to_string()))?;
        if [w, temp_raw, c].iter().any(|v| v.is_nan()) {
            incomplete += 1;
            out.push(RawWeather { line: *line, t, record: None });
            continue;
        }
        let t_k = if kelvin { temp_raw } else { temp_raw + KELVIN_OFFSET };
        if !(150.0..=350.0).contains(&t_k) {
            return Err(parse_err(
                path,
                *line,
                format!("air temperature {temp_raw} is implausible for the column's unit ({})", if kelvin { "K" } else { "°C" }),
            ));
        }
        if !(w >= 0.0 && w.is_finite()) {
            return Err(parse_err(path, *line, format!("wind speed {w} must be non-negative")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(parse_err(path, *line, format!("dust concentration {c} must be non-negative")));
        }
        out.push(RawWeather {
            line: *line,
            t,
            record: Some(WeatherRecord {
                wind_speed_m_s: w,
                air_temp_k: t_k,
                dust_ug_m3: c,
                dust_kind,
            }),
        });
    }
    if incomplete > 0 {
        log::warn!("{}: {incomplete} weather rows with missing values treated as gaps", path.display());
    }
    out.sort_by_key(|r| r.t);
    for w in out.windows(2) {
        if w[0].t == w[1].t {
            return Err(parse_err(path, w[1].line, format!("duplicate weather timestamp {}", w[1].t)));
        }
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no weather rows"));
    }
    Ok(out)
}

/// Sample mean and standard error of the mean `sqrt(s²/n)` of per-position
/// readings.
pub fn estimate_measurement_noise(readings: &[f64]) -> Result<(f64, f64)> {
    let n = readings.len();
    if n < 2 {
        return Err(Error::Validation(
            "σ_r needs at least two positions; give sigma_mean explicitly for single readings".into(),
        ));
    }
    let mean = readings.iter().sum::<f64>() / n as f64;
    let s2 = readings.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, (s2 / n as f64).sqrt()))
}

fn read_reflectance(path: &Path, surface_kind: SurfaceKind) -> Result<(Vec<Mirror>, Vec<ReflectanceRecord>)> {
    let table = Table::read(path)?;
    let ts = table.require("timestamp", "")?;
    let id = table.require("mirror_id", "")?;
    let tilt = table.require("tilt_deg", " (degrees)")?;
    let orientation = table.column("orientation");
    let mut positions: Vec<(usize, usize)> = table
        .headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("r_pos_").and_then(|k| k.parse().ok()).map(|k: usize| (k, i)))
        .collect();
    positions.sort();
    let summary = match (table.column("mean_r"), table.column("sigma_mean"), table.column("n_pos")) {
        (Some(m), Some(s), Some(n)) => Some((m, s, n)),
        _ => None,
    };
    if summary.is_none() && positions.is_empty() {
        return Err(parse_err(
            path,
            1,
            "missing reflectance columns: need 'mean_r', 'sigma_mean', 'n_pos' or 'r_pos_1'..'r_pos_n'",
        ));
    }

    let mut mirrors: Vec<Mirror> = Vec::new();
    let mut records = Vec::with_capacity(table.rows.len());
    for (line, rec) in &table.rows {
        let t = table.timestamp(*line, rec, ts)?;
        let mirror_id = rec.get(id).unwrap_or("").to_string();
        if mirror_id.is_empty() {
            return Err(parse_err(path, *line, "empty mirror_id"));
        }
        let tilt_deg = table.number(*line, rec, tilt)?;
        if !(0.0..=90.0).contains(&tilt_deg) {
            return Err(parse_err(path, *line, format!("tilt {tilt_deg}° outside [0, 90]")));
        }
        match mirrors.iter().find(|m| m.mirror_id == mirror_id) {
            Some(m) if m.tilt_deg != tilt_deg => {
                return Err(parse_err(
                    path,
                    *line,
                    format!("mirror {mirror_id} changes tilt from {}° to {tilt_deg}°", m.tilt_deg),
                ))
            }
            Some(_) => {}
            None => mirrors.push(Mirror {
                mirror_id: mirror_id.clone(),
                tilt_deg,
                orientation: orientation.and_then(|c| rec.get(c)).unwrap_or("").to_string(),
                surface_kind,
            }),
        }
        let (mean_r, sigma_mean, n_pos) = match summary {
            Some((m, s, n)) => {
                let mean = table.number(*line, rec, m)?;
                let sigma = table.number(*line, rec, s)?;
                let n = table.number(*line, rec, n)?;
                if !(n >= 1.0 && n.fract() == 0.0) {
                    return Err(parse_err(path, *line, format!("n_pos must be a positive integer, got {n}")));
                }
                (mean, sigma, n as u32)
            }
            None => {
                let readings: Vec<f64> = positions
                    .iter()
                    .map(|&(_, c)| table.number(*line, rec, c))
                    .collect::<Result<Vec<_>>>()?
                    .into_iter()
                    .filter(|v| !v.is_nan())
                    .collect();
                let (mean, sigma) =
                    estimate_measurement_noise(&readings).map_err(|e| parse_err(path, *line, e.to_string()))?;
                (mean, sigma, readings.len() as u32)
            }
        };
        if mean_r.is_nan() {
            log::warn!("{}:{line}: missing reflectance for {mirror_id}; row skipped", path.display());
            continue;
        }
        if mean_r > 1.5 {
            return Err(parse_err(
                path,
                *line,
                format!("reflectance {mean_r} looks like a percentage; expected a fraction"),
            ));
        }
        if !(mean_r > 0.0) || !(sigma_mean >= 0.0 && sigma_mean.is_finite()) {
            return Err(parse_err(path, *line, format!("invalid reflectance {mean_r} ± {sigma_mean}")));
        }
        records.push((
            *line,
            ReflectanceRecord {
                timestamp: t,
                mirror_id,
                mean_r,
                sigma_mean,
                n_pos,
            },
        ));
    }
    records.sort_by(|a, b| (a.1.timestamp, &a.1.mirror_id).cmp(&(b.1.timestamp, &b.1.mirror_id)));
    for w in records.windows(2) {
        if w[0].1.timestamp == w[1].1.timestamp && w[0].1.mirror_id == w[1].1.mirror_id {
            return Err(parse_err(
                path,
                w[1].0,
                format!("duplicate measurement of {} at {}", w[1].1.mirror_id, w[1].1.timestamp),
            ));
        }
    }
    mirrors.sort_by(|a, b| a.mirror_id.cmp(&b.mirror_id));
    Ok((mirrors, records.into_iter().map(|(_, r)| r).collect()))
}

fn infer_interval(raw: &[RawWeather]) -> Result<f64> {
    let mut diffs: Vec<i64> = raw.windows(2).map(|w| (w[1].t - w[0].t).num_seconds()).collect();
    if diffs.is_empty() {
        return Err(Error::Config(
            "cannot infer the interval from a single weather row; set interval_minutes".into(),
        ));
    }
    diffs.sort_unstable();
    Ok(diffs[diffs.len() / 2] as f64)
}

/// Averages raw rows into slots of width `dt_s` anchored at `start`; each row
/// goes to its nearest slot.
fn grid_weather(raw: &[RawWeather], start: NaiveDateTime, dt_s: f64, path: &Path) -> Result<Vec<Option<WeatherRecord>>> {
    let last = raw.last().map(|r| r.t).unwrap_or(start);
    let n = ((last - start).num_milliseconds() as f64 / 1000.0 / dt_s).round() as usize + 1;
    let mut sums: Vec<Option<(WeatherRecord, usize)>> = vec![None; n];
    for r in raw {
        let Some(w) = r.record else { continue };
        let k = ((r.t - start).num_milliseconds() as f64 / 1000.0 / dt_s).round() as usize;
        let k = k.min(n - 1);
        match &mut sums[k] {
            None => sums[k] = Some((w, 1)),
            Some((acc, count)) => {
                if acc.dust_kind != w.dust_kind {
                    return Err(parse_err(
                        path,
                        r.line,
                        format!("dust kind changes within one interval ({} vs {})", acc.dust_kind.label(), w.dust_kind.label()),
                    ));
                }
                acc.wind_speed_m_s += w.wind_speed_m_s;
                acc.air_temp_k += w.air_temp_k;
                acc.dust_ug_m3 += w.dust_ug_m3;
                *count += 1;
            }
        }
    }
    Ok(sums
        .into_iter()
        .map(|s| {
            s.map(|(mut w, count)| {
                if count > 1 {
                    let c = count as f64;
                    w.wind_speed_m_s /= c;
                    w.air_temp_k /= c;
                    w.dust_ug_m3 /= c;
                }
                w
            })
        })
        .collect())
}

/// Fills runs of at most `max_fill` missing slots by linear interpolation
/// between the neighbouring slots. Returns the number of slots filled.
fn fill_gaps(slots: &mut [Option<WeatherRecord>], max_fill: usize) -> usize {
    let mut filled = 0;
    let mut k = 0;
    while k < slots.len() {
        if slots[k].is_some() {
            k += 1;
            continue;
        }
        let run_start = k;
        while k < slots.len() && slots[k].is_none() {
            k += 1;
        }
        let run = k - run_start;
        if run_start == 0 || k == slots.len() || run > max_fill {
            continue;
        }
        let (a, b) = (slots[run_start - 1].unwrap(), slots[k].unwrap());
        for (i, slot) in slots[run_start..k].iter_mut().enumerate() {
            let t = (i + 1) as f64 / (run + 1) as f64;
            let lerp = |x: f64, y: f64| x + t * (y - x);
            *slot = Some(WeatherRecord {
                wind_speed_m_s: lerp(a.wind_speed_m_s, b.wind_speed_m_s),
                air_temp_k: lerp(a.air_temp_k, b.air_temp_k),
                dust_ug_m3: lerp(a.dust_ug_m3, b.dust_ug_m3),
                dust_kind: if t < 0.5 { a.dust_kind } else { b.dust_kind },
            });
            filled += 1;
        }
    }
    filled
}

/// Reads a weather file onto the model grid; the campaign has no mirrors.
pub fn load_weather(weather: &Path, site: &SiteConfig) -> Result<Campaign> {
    let raw = read_weather(weather)?;
    let dt_s = match site.interval_seconds() {
        Some(dt) => dt,
        None => infer_interval(&raw)?,
    };
    if !(dt_s > 0.0) {
        return Err(Error::Config(format!("{}: weather interval must be positive", weather.display())));
    }
    let start = raw[0].t;
    let mut slots = grid_weather(&raw, start, dt_s, weather)?;
    let filled = fill_gaps(&mut slots, site.max_fill_slots);
    if filled > 0 {
        log::info!("{}: filled {filled} missing slots by interpolation", weather.display());
    }
    let missing = slots.iter().filter(|s| s.is_none()).count();
    if missing > 0 {
        log::warn!("{}: {missing} weather slots remain missing", weather.display());
    }
    let label = weather
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.trim_end_matches("_weather").to_string())
        .unwrap_or_else(|| "campaign".into());
    Ok(Campaign {
        site_id: site.site_id.clone(),
        label,
        dt_s,
        start,
        slots,
        mirrors: Vec::new(),
        reflectance: Vec::new(),
    })
}

/// Reads one campaign's weather and reflectance files. Measurements outside
/// the weather record are dropped with a warning.
pub fn load_campaign(weather: &Path, reflectance: &Path, site: &SiteConfig) -> Result<Campaign> {
    let mut campaign = load_weather(weather, site)?;
    let (mirrors, records) = read_reflectance(reflectance, site.surface_kind)?;
    campaign.mirrors = mirrors;
    let before = records.len();
    campaign.reflectance = records.into_iter().filter(|r| campaign.slot_index(r.timestamp).is_some()).collect();
    if campaign.reflectance.len() < before {
        log::warn!(
            "{}: {} measurements fall outside the weather record and were dropped",
            reflectance.display(),
            before - campaign.reflectance.len()
        );
    }
    Ok(campaign)
}

fn fmt_ts(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S%.f").to_string()
}

/// Writes the gridded campaign back to the CSV schema (temperature in kelvin,
/// missing slots omitted).
pub fn write_campaign(campaign: &Campaign, weather: &Path, reflectance: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(weather)?;
    w.write_record(["timestamp", "wind_speed_m_s", "air_temp_k", "dust_ug_m3", "dust_kind"])?;
    for (k, slot) in campaign.slots.iter().enumerate() {
        if let Some(s) = slot {
            w.write_record([
                fmt_ts(&campaign.slot_time(k)),
                s.wind_speed_m_s.to_string(),
                s.air_temp_k.to_string(),
                s.dust_ug_m3.to_string(),
                s.dust_kind.label(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", weather.display()), e))?;
    let mut r = csv::Writer::from_path(reflectance)?;
    r.write_record(["timestamp", "mirror_id", "tilt_deg", "orientation", "mean_r", "sigma_mean", "n_pos"])?;
    for rec in &campaign.reflectance {
        let m = campaign
            .mirror(&rec.mirror_id)
            .ok_or_else(|| Error::Validation(format!("unknown mirror {}", rec.mirror_id)))?;
        r.write_record([
            fmt_ts(&rec.timestamp),
            rec.mirror_id.clone(),
            m.tilt_deg.to_string(),
            m.orientation.clone(),
            rec.mean_r.to_string(),
            rec.sigma_mean.to_string(),
            rec.n_pos.to_string(),
        ])?;
    }
    r.flush().map_err(|e| Error::io(format!("writing {}", reflectance.display()), e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MirrorFilter {
    Horizontal,
    All,
    List(Vec<String>),
}

impl MirrorFilter {
    /// `horizontal`, `all`, or a comma-separated list of mirror ids.
    pub fn parse(s: &str) -> Self {
        match s.trim() {
            "horizontal" => MirrorFilter::Horizontal,
            "all" => MirrorFilter::All,
            list => MirrorFilter::List(list.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect()),
        }
    }

    pub fn matches(&self, m: &Mirror) -> bool {
        match self {
            MirrorFilter::Horizontal => m.tilt_deg == 0.0,
            MirrorFilter::All => true,
            MirrorFilter::List(ids) => ids.iter().any(|id| *id == m.mirror_id),
        }
    }
}

/// Portion of a campaign used for fitting: measurements at or before
/// `until` (all of them when `None`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpan {
    pub until: Option<NaiveDateTime>,
}

/// Successive-measurement differences for every selected mirror; one
/// experiment per (campaign, mirror). Differences whose interval touches a
/// weather gap are dropped with a warning.
pub fn build_fit_dataset(
    campaigns: &[(&Campaign, TrainingSpan)],
    site: &SiteConfig,
    proto: &PrototypeDistribution,
    filter: &MirrorFilter,
) -> Result<FitDataset> {
    let geometry = site.geometry();
    let mut experiments = Vec::new();
    let mut matched = HashSet::new();
    for (campaign, span) in campaigns {
        let mut by_tilt: BTreeMap<u64, Vec<Option<IntervalSample>>> = BTreeMap::new();
        for mirror in campaign.mirrors.iter().filter(|m| filter.matches(m)) {
            matched.insert(mirror.mirror_id.clone());
            let samples = match by_tilt.get(&mirror.tilt_deg.to_bits()) {
                Some(s) => s,
                None => {
                    let s = campaign.interval_samples(proto, site.tsp_upper_um, mirror.tilt_deg)?;
                    by_tilt.entry(mirror.tilt_deg.to_bits()).or_insert(s)
                }
            };
            let records: Vec<&ReflectanceRecord> = campaign
                .records_for(&mirror.mirror_id)
                .into_iter()
                .filter(|r| span.until.is_none_or(|u| r.timestamp <= u))
                .collect();
            let mut differences = Vec::new();
            for pair in records.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                let (ka, kb) = match (campaign.slot_index(a.timestamp), campaign.slot_index(b.timestamp)) {
                    (Some(ka), Some(kb)) => (ka, kb),
                    _ => continue,
                };
                let window: Option<Vec<IntervalSample>> = samples[ka..kb].iter().copied().collect();
                let Some(window) = window else {
                    log::warn!(
                        "{}/{}: difference {} → {} spans a weather gap; excluded",
                        campaign.label,
                        mirror.mirror_id,
                        a.timestamp,
                        b.timestamp
                    );
                    continue;
                };
                differences.push(Difference {
                    start: a.timestamp,
                    end: b.timestamp,
                    delta_r: b.mean_r - a.mean_r,
                    sigma_r_start: a.sigma_mean,
                    sigma_r_end: b.sigma_mean,
                    samples: window,
                });
            }
            if !differences.is_empty() {
                experiments.push(Experiment {
                    label: format!("{}/{}", campaign.label, mirror.mirror_id),
                    mirror_id: mirror.mirror_id.clone(),
                    tilt_deg: mirror.tilt_deg,
                    geometry,
                    differences,
                });
            }
        }
    }
    if matched.is_empty() {
        return Err(Error::Config(format!("mirror filter {filter:?} matches no mirror")));
    }
    Ok(FitDataset { experiments })
}

/// Per-mirror offsets that move each mirror's first reflectance to
/// `target`. For reporting only.
pub fn normalization_shifts(campaign: &Campaign, target: f64) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for r in &campaign.reflectance {
        out.entry(r.mirror_id.clone()).or_insert(target - r.mean_r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_from_two_positions() {
        let (mean, sigma) = estimate_measurement_noise(&[0.94, 0.96]).unwrap();
        assert!((mean - 0.95).abs() < 1e-15);
        assert!((sigma * sigma - 1e-4).abs() < 1e-15);
        assert_eq!(estimate_measurement_noise(&[0.9; 5]).unwrap().1, 0.0);
        assert!(estimate_measurement_noise(&[0.9]).is_err());
    }

    #[test]
    fn mirror_filter_parsing() {
        assert_eq!(MirrorFilter::parse("horizontal"), MirrorFilter::Horizontal);
        assert_eq!(MirrorFilter::parse("all"), MirrorFilter::All);
        assert_eq!(
            MirrorFilter::parse("M1, M2"),
            MirrorFilter::List(vec!["M1".into(), "M2".into()])
        );
    }

    #[test]
    fn short_gaps_are_interpolated() {
        let rec = |v: f64| {
            Some(WeatherRecord {
                wind_speed_m_s: v,
                air_temp_k: 300.0,
                dust_ug_m3: v,
                dust_kind: DustMeasurementKind::Tsp,
            })
        };
        let mut slots = vec![rec(1.0), None, rec(3.0), None, None, rec(0.0)];
        assert_eq!(fill_gaps(&mut slots, 1), 1);
        assert_eq!(slots[1].unwrap().wind_speed_m_s, 2.0);
        assert!(slots[3].is_none() && slots[4].is_none());
    }

    #[test]
    fn timestamp_formats() {
        assert!(parse_timestamp("2022-02-23T17:40:00").is_some());
        assert!(parse_timestamp("2022-02-23 17:40").is_some());
        assert!(parse_timestamp("23/02/2022").is_none());
    }
}
