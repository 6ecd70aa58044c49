//! Python bindings for the `soiling` crate.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use soiling::campaign_io::{self, build_fit_dataset, MirrorFilter, TrainingSpan};
use soiling::daily_loss::{
    self, daily_loadings, group_days, loading_percentile_scenarios, DayWeather, LoadingSource, SimulationOptions,
};
use soiling::dust::{self, PrototypeDistribution};
use soiling::estimation::{self, FitSettings, InitialGuess, ModelContext};
use soiling::loss_model::{self, KernelContext, ModelVariant, SurfaceKind};
use soiling::optics::{self, GammaMode, RefractiveIndex, Spectrum};
use soiling::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) | Error::MieFailure { .. } | Error::FitFailure(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn surface_kind(s: &str) -> PyResult<SurfaceKind> {
    match s {
        "first_surface" | "first-surface" => Ok(SurfaceKind::FirstSurface),
        "second_surface" | "second-surface" => Ok(SurfaceKind::SecondSurface),
        _ => Err(PyValueError::new_err(format!("unknown surface kind {s:?}"))),
    }
}

fn prototype(name: &str) -> PyResult<PrototypeDistribution> {
    match name {
        "urban" => Ok(PrototypeDistribution::urban()),
        "rural" => Ok(PrototypeDistribution::rural()),
        path => PrototypeDistribution::from_json_file(path.as_ref()).map_err(to_py),
    }
}

fn model_variant(s: &str) -> PyResult<ModelVariant> {
    match s {
        "semi-physical" | "semi_physical" => Ok(ModelVariant::SemiPhysical),
        "constant-mean" | "constant_mean" => Ok(ModelVariant::ConstantMean),
        _ => Err(PyValueError::new_err(format!("unknown model {s:?}"))),
    }
}

/// Extinction and scattering efficiencies of a homogeneous sphere.
#[pyfunction]
#[pyo3(signature = (x, m_re, m_im = 0.0))]
fn mie_q(x: f64, m_re: f64, m_im: f64) -> PyResult<(f64, f64)> {
    let m = RefractiveIndex::new(m_re, m_im).map_err(to_py)?;
    optics::mie_q(x, m).map_err(to_py)
}

/// γ(D) on the given diameters (μm) for a single wavelength.
#[pyfunction]
#[pyo3(signature = (diameters_um, wavelength_nm, half_angle_mrad, m_re = 1.544, m_im = 0.0, geometric = false))]
fn gamma_table(
    py: Python<'_>,
    diameters_um: Vec<f64>,
    wavelength_nm: f64,
    half_angle_mrad: f64,
    m_re: f64,
    m_im: f64,
    geometric: bool,
) -> PyResult<Vec<f64>> {
    let m = RefractiveIndex::new(m_re, m_im).map_err(to_py)?;
    let spectrum = Spectrum::monochromatic(wavelength_nm).map_err(to_py)?;
    let mode = if geometric { GammaMode::Geometric } else { GammaMode::Mie };
    py.detach(|| optics::build_gamma_table(m, &spectrum, half_angle_mrad, &diameters_um, mode))
        .map(|t| t.gamma)
        .map_err(to_py)
}

/// Scaling α that maps a prototype distribution onto a measured mass
/// concentration below `cutoff_um`.
#[pyfunction]
#[pyo3(signature = (concentration_ug_m3, prototype_name = "rural", cutoff_um = 10.0))]
fn alpha(concentration_ug_m3: f64, prototype_name: &str, cutoff_um: f64) -> PyResult<f64> {
    dust::alpha(concentration_ug_m3, &prototype(prototype_name)?, cutoff_um).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (phi_deg, surface = "second_surface"))]
fn incidence_factor(phi_deg: f64, surface: &str) -> PyResult<f64> {
    loss_model::incidence_factor(phi_deg, surface_kind(surface)?).map_err(to_py)
}

/// Site configuration loaded from JSON.
#[pyclass(name = "SiteConfig", module = "soiling_py", from_py_object)]
#[derive(Clone)]
struct PySite {
    inner: campaign_io::SiteConfig,
}

#[pymethods]
impl PySite {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        campaign_io::SiteConfig::load(&path)
            .map(|inner| PySite { inner })
            .map_err(to_py)
    }

    #[getter]
    fn site_id(&self) -> String {
        self.inner.site_id.clone()
    }

    #[getter]
    fn nominal_reflectance(&self) -> f64 {
        self.inner.nominal_reflectance
    }

    #[getter]
    fn acceptance_half_angle_mrad(&self) -> f64 {
        self.inner.acceptance_half_angle_mrad
    }

    /// `(diameters_um, gamma)` for this site, optionally cached on disk.
    #[pyo3(signature = (cache_dir = None))]
    fn gamma_table(&self, py: Python<'_>, cache_dir: Option<PathBuf>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let t = py
            .detach(|| self.inner.mie_table(cache_dir.as_deref()))
            .map_err(to_py)?;
        Ok((t.diameters_um, t.gamma))
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| to_py(e.into()))
    }
}

/// Gridded weather plus (optionally) mirror reflectance measurements.
#[pyclass(name = "Campaign", module = "soiling_py", from_py_object)]
#[derive(Clone)]
struct PyCampaign {
    inner: campaign_io::Campaign,
}

#[pymethods]
impl PyCampaign {
    #[staticmethod]
    #[pyo3(signature = (site, weather, reflectance = None))]
    fn load(site: &PySite, weather: PathBuf, reflectance: Option<PathBuf>) -> PyResult<Self> {
        let c = match reflectance {
            Some(r) => campaign_io::load_campaign(&weather, &r, &site.inner),
            None => campaign_io::load_weather(&weather, &site.inner),
        };
        c.map(|inner| PyCampaign { inner }).map_err(to_py)
    }

    #[getter]
    fn dt_s(&self) -> f64 {
        self.inner.dt_s
    }

    #[getter]
    fn n_slots(&self) -> usize {
        self.inner.slots.len()
    }

    #[getter]
    fn start(&self) -> String {
        self.inner.start.to_string()
    }

    #[getter]
    fn mirrors(&self) -> Vec<(String, f64)> {
        self.inner
            .mirrors
            .iter()
            .map(|m| (m.mirror_id.clone(), m.tilt_deg))
            .collect()
    }

    #[getter]
    fn n_measurements(&self) -> usize {
        self.inner.reflectance.len()
    }

    /// Timestamps of slots with no weather.
    fn gaps(&self) -> Vec<String> {
        self.inner.gaps().iter().map(|t| t.to_string()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }
}

/// Maximum-likelihood estimates with 95% intervals.
#[pyclass(name = "FitResult", module = "soiling_py", from_py_object)]
#[derive(Clone)]
struct PyFit {
    inner: estimation::FitResult,
}

#[pymethods]
impl PyFit {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: estimation::FitResult = serde_json::from_str(text).map_err(|e| to_py(e.into()))?;
        inner.validate().map_err(to_py)?;
        Ok(PyFit { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        estimation::FitResult::from_json_file(&path)
            .map(|inner| PyFit { inner })
            .map_err(to_py)
    }

    #[getter]
    fn variant(&self) -> String {
        self.inner.variant.to_string()
    }

    #[getter]
    fn params(&self) -> BTreeMap<String, f64> {
        self.inner.params.clone()
    }

    #[getter]
    fn ci95(&self) -> BTreeMap<String, (f64, f64)> {
        self.inner.ci95.iter().map(|(k, v)| (k.clone(), (v[0], v[1]))).collect()
    }

    #[getter]
    fn loglik(&self) -> f64 {
        self.inner.loglik
    }

    #[getter]
    fn degenerate(&self) -> bool {
        self.inner.diagnostics.degenerate
    }

    #[getter]
    fn n_differences(&self) -> usize {
        self.inner.diagnostics.n_differences
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("FitResult({}, {:?})", self.inner.variant, self.inner.params)
    }
}

fn common_dt(campaigns: &[&campaign_io::Campaign]) -> PyResult<f64> {
    let dt = campaigns
        .first()
        .map(|c| c.dt_s)
        .ok_or_else(|| PyValueError::new_err("no campaigns given"))?;
    if campaigns.iter().any(|c| c.dt_s != dt) {
        return Err(PyValueError::new_err("campaigns use different interval lengths"));
    }
    Ok(dt)
}

/// Fits a model to the reflectance differences of the selected mirrors.
#[pyfunction]
#[pyo3(signature = (site, campaigns, model = "constant-mean", mirrors = "horizontal", initial = None, cache_dir = None))]
fn fit(
    py: Python<'_>,
    site: &PySite,
    campaigns: Vec<PyCampaign>,
    model: &str,
    mirrors: &str,
    initial: Option<f64>,
    cache_dir: Option<PathBuf>,
) -> PyResult<PyFit> {
    let variant = model_variant(model)?;
    let site = &site.inner;
    let proto = site.prototype().map_err(to_py)?;
    let selected: Vec<(&campaign_io::Campaign, TrainingSpan)> =
        campaigns.iter().map(|c| (&c.inner, TrainingSpan::default())).collect();
    let data = build_fit_dataset(&selected, site, &proto, &MirrorFilter::parse(mirrors)).map_err(to_py)?;
    let initial = InitialGuess {
        primary: initial.or(match variant {
            ModelVariant::SemiPhysical => site.hrz0_guess,
            ModelVariant::ConstantMean => None,
        }),
        sigma_dep: None,
    };
    let settings = FitSettings::default();
    let result = match variant {
        ModelVariant::ConstantMean => {
            py.detach(|| estimation::fit(&data, &ModelContext::ConstantMean, Some(initial), &settings))
        }
        ModelVariant::SemiPhysical => {
            let dt_s = common_dt(&selected.iter().map(|(c, _)| *c).collect::<Vec<_>>())?;
            py.detach(|| {
                let mie = site.mie_table(cache_dir.as_deref())?;
                let ctx = KernelContext {
                    mie: &mie,
                    proto: &proto,
                    deposition: site.deposition_params(),
                    dt_s,
                };
                estimation::fit(&data, &ModelContext::SemiPhysical(ctx), Some(initial), &settings)
            })
        }
    };
    result.map(|inner| PyFit { inner }).map_err(to_py)
}

fn usable_days(
    site: &campaign_io::SiteConfig,
    campaigns: &[PyCampaign],
    tilt_deg: f64,
    include_partial: bool,
) -> PyResult<Vec<DayWeather>> {
    let proto = site.prototype().map_err(to_py)?;
    let mut days = Vec::new();
    for c in campaigns {
        let series = c
            .inner
            .timed_samples(&proto, site.tsp_upper_um, tilt_deg)
            .map_err(to_py)?;
        days.extend(group_days(&series, c.inner.dt_s));
    }
    Ok(days.into_iter().filter(|d| d.complete || include_partial).collect())
}

/// Per-day loading sums `(day, Σ α cos θ, Σ α² cos² θ, n_intervals)`.
#[pyfunction]
#[pyo3(signature = (site, campaigns, tilt_deg = 0.0, include_partial = false))]
fn dust_loadings(
    site: &PySite,
    campaigns: Vec<PyCampaign>,
    tilt_deg: f64,
    include_partial: bool,
) -> PyResult<Vec<(String, f64, f64, usize)>> {
    let days = usable_days(&site.inner, &campaigns, tilt_deg, include_partial)?;
    Ok(daily_loadings(&days, true)
        .into_iter()
        .map(|l| (l.day.to_string(), l.linear_sum, l.quadratic_sum, l.n_intervals))
        .collect())
}

/// Mean and standard deviation of the daily loss (pp/day, positive for a
/// loss) for a constant-mean fit at the given loading sums.
#[pyfunction]
fn daily_loss_analytic(fit: &PyFit, site: &PySite, linear_sum: f64, quadratic_sum: f64) -> PyResult<(f64, f64)> {
    let loading = daily_loss::DustLoading {
        day: NaiveDate::default(),
        linear_sum,
        quadratic_sum,
        n_intervals: 0,
        max_term: 0.0,
    };
    let d = daily_loss::daily_loss_analytic(&fit.inner, &loading, &site.inner.geometry()).map_err(to_py)?;
    Ok((-d.mean, d.std()))
}

/// Monte Carlo daily losses at loading-percentile scenarios, as
/// `(label, stats)` pairs with losses in pp/day.
#[pyfunction]
#[pyo3(signature = (
    fit, site, campaigns, percentiles = vec![5.0, 50.0, 95.0, 100.0], n_samples = 10_000, seed = 0,
    parameter_uncertainty = true, tilt_deg = 0.0, include_partial = false, cache_dir = None
))]
#[allow(clippy::too_many_arguments)]
fn simulate_daily(
    py: Python<'_>,
    fit: &PyFit,
    site: &PySite,
    campaigns: Vec<PyCampaign>,
    percentiles: Vec<f64>,
    n_samples: usize,
    seed: u64,
    parameter_uncertainty: bool,
    tilt_deg: f64,
    include_partial: bool,
    cache_dir: Option<PathBuf>,
) -> PyResult<Vec<(String, BTreeMap<String, f64>)>> {
    let site = &site.inner;
    let fit = &fit.inner;
    let days = usable_days(site, &campaigns, tilt_deg, include_partial)?;
    let loadings = daily_loadings(&days, true);
    let scenarios = loading_percentile_scenarios(&loadings, &percentiles).map_err(to_py)?;
    let opts = SimulationOptions {
        n_samples,
        seed,
        parameter_uncertainty,
    };
    let geometry = site.geometry();
    let refs: Vec<&campaign_io::Campaign> = campaigns.iter().map(|c| &c.inner).collect();
    let dt_s = common_dt(&refs)?;
    let samples = py
        .detach(|| match fit.variant {
            ModelVariant::ConstantMean => {
                daily_loss::simulate_daily_losses(fit, LoadingSource::Scenarios(&scenarios), &geometry, &opts)
            }
            ModelVariant::SemiPhysical => {
                let proto = site.prototype()?;
                let mie = site.mie_table(cache_dir.as_deref())?;
                let ctx = KernelContext {
                    mie: &mie,
                    proto: &proto,
                    deposition: site.deposition_params(),
                    dt_s,
                };
                let labelled: Vec<(String, DayWeather)> = scenarios
                    .iter()
                    .filter_map(|s| {
                        days.iter()
                            .find(|d| d.day == s.loading.day)
                            .map(|d| (s.label.clone(), d.clone()))
                    })
                    .collect();
                daily_loss::simulate_daily_losses_semi_physical(fit, &labelled, false, &ctx, &geometry, &opts)
            }
        })
        .map_err(to_py)?;
    Ok(daily_loss::summarize(&samples)
        .into_iter()
        .map(|s| {
            let p = scenarios
                .iter()
                .find(|sc| sc.label == s.scenario)
                .map_or(f64::NAN, |sc| sc.percentile);
            let stats = BTreeMap::from([
                ("percentile".to_string(), p),
                ("n".to_string(), s.n as f64),
                ("mean".to_string(), s.mean),
                ("std".to_string(), s.std),
                ("q05".to_string(), s.q05),
                ("q50".to_string(), s.q50),
                ("q95".to_string(), s.q95),
            ]);
            (s.scenario, stats)
        })
        .collect())
}

#[pymodule]
fn soiling_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mie_q, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_table, m)?)?;
    m.add_function(wrap_pyfunction!(alpha, m)?)?;
    m.add_function(wrap_pyfunction!(incidence_factor, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(dust_loadings, m)?)?;
    m.add_function(wrap_pyfunction!(daily_loss_analytic, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_daily, m)?)?;
    m.add_class::<PySite>()?;
    m.add_class::<PyCampaign>()?;
    m.add_class::<PyFit>()?;
    Ok(())
}
