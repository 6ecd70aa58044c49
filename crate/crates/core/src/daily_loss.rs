//! Daily dust loadings and the distribution of daily reflectance losses.
//!
//! Losses are reported as positive percentage points per day: a sample of
//! `0.5` means the reflectance fell by half a point over the day.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimation::{from_transformed, FitResult};
use crate::loss_model::{
    IntervalSample, KernelBank, KernelContext, LossDistribution, MeasurementGeometry, ModelParams, ModelVariant,
};
use crate::{Error, Result};

/// Weather for one calendar day at a fixed interval length.
#[derive(Debug, Clone, PartialEq)]
pub struct DayWeather {
    pub day: NaiveDate,
    pub samples: Vec<IntervalSample>,
    pub complete: bool,
}

/// Groups interval samples (keyed by interval start) into calendar days. A day
/// is complete when all `86400 / dt_s` intervals are present.
pub fn group_days(series: &[(NaiveDateTime, Option<IntervalSample>)], dt_s: f64) -> Vec<DayWeather> {
    let per_day = (86_400.0 / dt_s).round() as usize;
    let mut days: BTreeMap<NaiveDate, (Vec<IntervalSample>, usize)> = BTreeMap::new();
    for (t, s) in series {
        let entry = days.entry(t.date()).or_default();
        entry.1 += 1;
        if let Some(s) = s {
            entry.0.push(*s);
        }
    }
    days.into_iter()
        .map(|(day, (samples, _))| {
            let complete = samples.len() == per_day;
            DayWeather { day, samples, complete }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DustLoading {
    pub day: NaiveDate,
    /// Σ α_j cos θ_j.
    pub linear_sum: f64,
    /// Σ α_j² cos² θ_j.
    pub quadratic_sum: f64,
    pub n_intervals: usize,
    /// Largest single term α_j cos θ_j.
    pub max_term: f64,
}

impl DustLoading {
    pub fn from_samples(day: NaiveDate, samples: &[IntervalSample]) -> Self {
        let mut linear_sum = 0.0;
        let mut quadratic_sum = 0.0;
        let mut max_term: f64 = 0.0;
        for s in samples {
            let c = s.loading();
            linear_sum += c;
            quadratic_sum += c * c;
            max_term = max_term.max(c);
        }
        DustLoading {
            day,
            linear_sum,
            quadratic_sum,
            n_intervals: samples.len(),
            max_term,
        }
    }
}

/// Per-day loading sums. Partial days are skipped with a warning unless
/// `include_partial` is set.
pub fn daily_loadings(days: &[DayWeather], include_partial: bool) -> Vec<DustLoading> {
    days.iter()
        .filter(|d| {
            if !d.complete && !include_partial {
                log::warn!("skipping partial day {} ({} intervals)", d.day, d.samples.len());
                return false;
            }
            true
        })
        .map(|d| DustLoading::from_samples(d.day, &d.samples))
        .collect()
}

/// A loading scenario taken at a percentile of the daily linear sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub label: String,
    pub percentile: f64,
    pub loading: DustLoading,
}

/// Conventional names for the 5/50/95/100 percentiles.
pub fn scenario_label(percentile: f64) -> String {
    match percentile {
        p if p == 5.0 => "low".into(),
        p if p == 50.0 => "medium".into(),
        p if p == 95.0 => "high".into(),
        p if p == 100.0 => "maximum".into(),
        p => format!("p{p}"),
    }
}

/// Nearest-rank percentiles of `linear_sum`; each scenario carries its day's
/// quadratic sum.
pub fn loading_percentile_scenarios(loadings: &[DustLoading], percentiles: &[f64]) -> Result<Vec<Scenario>> {
    if loadings.is_empty() {
        return Err(Error::Validation("no complete days to build scenarios from".into()));
    }
    let mut sorted = loadings.to_vec();
    sorted.sort_by(|a, b| a.linear_sum.total_cmp(&b.linear_sum).then(a.day.cmp(&b.day)));
    let n = sorted.len();
    percentiles
        .iter()
        .map(|&p| {
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::Config(format!("percentile {p} outside [0, 100]")));
            }
            let rank = ((p / 100.0 * n as f64).ceil() as usize).clamp(1, n);
            Ok(Scenario {
                label: scenario_label(p),
                percentile: p,
                loading: sorted[rank - 1],
            })
        })
        .collect()
}

/// Daily reflectance change in percentage points (mean ≤ 0 for a loss) for a
/// constant-mean fit, without measurement noise.
pub fn daily_loss_analytic(
    fit: &FitResult,
    loading: &DustLoading,
    geometry: &MeasurementGeometry,
) -> Result<LossDistribution> {
    match fit.model_params()? {
        ModelParams::ConstantMean { mu_tilde, sigma_dep } => {
            analytic_change(mu_tilde, sigma_dep, loading, geometry.b_end()?)
        }
        ModelParams::SemiPhysical { .. } => Err(Error::Config(
            "analytic daily losses need a constant-mean fit; use the simulation path".into(),
        )),
    }
}

fn analytic_change(mu_tilde: f64, sigma_dep: f64, loading: &DustLoading, b: f64) -> Result<LossDistribution> {
    Ok(LossDistribution {
        mean: -mu_tilde * b * loading.linear_sum,
        variance: sigma_dep * sigma_dep * b * b * loading.quadratic_sum,
    }
    .scaled(100.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyLossSample {
    pub scenario: String,
    pub loss_pp_day: f64,
}

/// Where each Monte Carlo sample's daily loading comes from.
#[derive(Debug, Clone, Copy)]
pub enum LoadingSource<'a> {
    /// `n_samples` draws for every scenario.
    Scenarios(&'a [Scenario]),
    /// `n_samples` draws, each from a uniformly chosen day.
    SampleDays(&'a [DustLoading]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub parameter_uncertainty: bool,
}

/// Draws transformed parameters from the fit's Gaussian approximation.
struct ParameterSampler {
    mean: [f64; 2],
    chol: Option<[[f64; 2]; 2]>,
}

impl ParameterSampler {
    fn new(fit: &FitResult, enabled: bool) -> Self {
        let c = fit.covariance_transformed;
        let chol = if !enabled {
            None
        } else if fit.diagnostics.degenerate || !(c[0][0] > 0.0) {
            log::warn!("fit covariance is degenerate; sampling at the point estimate");
            None
        } else {
            let l00 = c[0][0].sqrt();
            let l10 = c[1][0] / l00;
            let rem = c[1][1] - l10 * l10;
            if rem > 0.0 {
                Some([[l00, 0.0], [l10, rem.sqrt()]])
            } else {
                log::warn!("fit covariance is not positive definite; sampling at the point estimate");
                None
            }
        };
        ParameterSampler {
            mean: fit.params_transformed,
            chol,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> [f64; 2] {
        match self.chol {
            None => self.mean,
            Some(l) => {
                let z0: f64 = StandardNormal.sample(rng);
                let z1: f64 = StandardNormal.sample(rng);
                [
                    self.mean[0] + l[0][0] * z0,
                    self.mean[1] + l[1][0] * z0 + l[1][1] * z1,
                ]
            }
        }
    }
}

/// Independent generator for sample `index` of stream `group`, so results do
/// not depend on how samples are spread over threads.
fn sample_rng(seed: u64, group: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((group << 40) | index);
    rng
}

/// Monte Carlo daily losses for a constant-mean fit.
pub fn simulate_daily_losses(
    fit: &FitResult,
    source: LoadingSource<'_>,
    geometry: &MeasurementGeometry,
    opts: &SimulationOptions,
) -> Result<Vec<DailyLossSample>> {
    fit.validate()?;
    if fit.variant != ModelVariant::ConstantMean {
        return Err(Error::Config(
            "semi-physical fits need daily weather; use simulate_daily_losses_semi_physical".into(),
        ));
    }
    let b = geometry.b_end()?;
    let sampler = ParameterSampler::new(fit, opts.parameter_uncertainty);
    let one = |rng: &mut ChaCha8Rng, loading: &DustLoading| -> f64 {
        let z = sampler.draw(rng);
        let p = from_transformed(ModelVariant::ConstantMean, z);
        let (mu, sigma) = match p {
            ModelParams::ConstantMean { mu_tilde, sigma_dep } => (mu_tilde, sigma_dep),
            ModelParams::SemiPhysical { .. } => unreachable!(),
        };
        let change = -mu * b * loading.linear_sum;
        let sd = sigma * b * loading.quadratic_sum.sqrt();
        let e: f64 = StandardNormal.sample(rng);
        -100.0 * (change + sd * e)
    };
    let out = match source {
        LoadingSource::Scenarios(scenarios) => scenarios
            .iter()
            .enumerate()
            .flat_map(|(g, sc)| {
                (0..opts.n_samples)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = sample_rng(opts.seed, g as u64, i as u64);
                        DailyLossSample {
                            scenario: sc.label.clone(),
                            loss_pp_day: one(&mut rng, &sc.loading),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect(),
        LoadingSource::SampleDays(days) => {
            if days.is_empty() {
                return Err(Error::Validation("no days to sample loadings from".into()));
            }
            (0..opts.n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = sample_rng(opts.seed, 0, i as u64);
                    let day = &days[rng.random_range(0..days.len())];
                    DailyLossSample {
                        scenario: "sampled-day".into(),
                        loss_pp_day: one(&mut rng, day),
                    }
                })
                .collect()
        }
    };
    Ok(out)
}

/// Monte Carlo daily losses for a semi-physical fit: each sample draws
/// (hrz0, σ_dep) and recomputes the kernel over the chosen day's weather.
/// `days` pairs a label with that day's interval samples.
pub fn simulate_daily_losses_semi_physical(
    fit: &FitResult,
    days: &[(String, DayWeather)],
    sample_days: bool,
    ctx: &KernelContext<'_>,
    geometry: &MeasurementGeometry,
    opts: &SimulationOptions,
) -> Result<Vec<DailyLossSample>> {
    fit.validate()?;
    if fit.variant != ModelVariant::SemiPhysical {
        return Err(Error::Config("expected a semi-physical fit".into()));
    }
    if days.is_empty() {
        return Err(Error::Validation("no days to simulate".into()));
    }
    let b = geometry.b_end()?;
    let sampler = ParameterSampler::new(fit, opts.parameter_uncertainty);
    let banks: Vec<(KernelBank, Vec<f64>)> = days
        .iter()
        .map(|(_, d)| {
            let loadings = d.samples.iter().map(|s| s.loading()).collect();
            Ok((KernelBank::new(ctx, &d.samples)?, loadings))
        })
        .collect::<Result<_>>()?;
    let one = |rng: &mut ChaCha8Rng, k: usize| -> f64 {
        let z = sampler.draw(rng);
        let (hrz0, sigma) = match from_transformed(ModelVariant::SemiPhysical, z) {
            ModelParams::SemiPhysical { hrz0, sigma_dep } => (hrz0, sigma_dep),
            ModelParams::ConstantMean { .. } => unreachable!(),
        };
        let (bank, loadings) = &banks[k];
        let rates = bank.rates(hrz0);
        let mut mean_sum = 0.0;
        let mut quad = 0.0;
        for (c, mu) in loadings.iter().zip(&rates) {
            mean_sum += c * mu;
            quad += c * c;
        }
        let e: f64 = StandardNormal.sample(rng);
        -100.0 * (-b * mean_sum + sigma * b * quad.sqrt() * e)
    };
    let out = if sample_days {
        (0..opts.n_samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = sample_rng(opts.seed, 0, i as u64);
                let k = rng.random_range(0..days.len());
                DailyLossSample {
                    scenario: "sampled-day".into(),
                    loss_pp_day: one(&mut rng, k),
                }
            })
            .collect()
    } else {
        (0..days.len())
            .flat_map(|k| {
                (0..opts.n_samples)
                    .into_par_iter()
                    .map(|i| {
                        let mut rng = sample_rng(opts.seed, k as u64, i as u64);
                        DailyLossSample {
                            scenario: days[k].0.clone(),
                            loss_pp_day: one(&mut rng, k),
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
}

/// Per-scenario statistics in order of first appearance.
pub fn summarize(samples: &[DailyLossSample]) -> Vec<ScenarioSummary> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for s in samples {
        if !groups.contains_key(s.scenario.as_str()) {
            order.push(&s.scenario);
        }
        groups.entry(&s.scenario).or_default().push(s.loss_pp_day);
    }
    order
        .into_iter()
        .map(|name| {
            let mut v = groups.remove(name).unwrap_or_default();
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = if n > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            v.sort_by(f64::total_cmp);
            let q = |p: f64| v[((p * n as f64).ceil() as usize).clamp(1, n) - 1];
            ScenarioSummary {
                scenario: name.to_string(),
                n,
                mean,
                std: var.sqrt(),
                q05: q(0.05),
                q50: q(0.50),
                q95: q(0.95),
            }
        })
        .collect()
}
