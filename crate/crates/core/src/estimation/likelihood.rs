use std::collections::HashMap;
use std::ops::Range;
use std::sync::{Arc, Mutex};

use super::FitDataset;
use crate::loss_model::{gaussian_moments, KernelBank, KernelContext, ModelParams, ModelVariant};
use crate::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// What the likelihood needs beyond the data for each model variant.
#[derive(Debug, Clone, Copy)]
pub enum ModelContext<'a> {
    ConstantMean,
    SemiPhysical(KernelContext<'a>),
}

impl ModelContext<'_> {
    pub fn variant(&self) -> ModelVariant {
        match self {
            ModelContext::ConstantMean => ModelVariant::ConstantMean,
            ModelContext::SemiPhysical(_) => ModelVariant::SemiPhysical,
        }
    }
}

#[derive(Debug, Clone)]
struct PreparedDifference {
    delta_r: f64,
    b_start: f64,
    b_end: f64,
    sigma_r_start: f64,
    sigma_r_end: f64,
    linear_sum: f64,
    quad_sum: f64,
    samples: Range<usize>,
}

/// Log-likelihood of a dataset with loadings and kernel quadratures prepared
/// once. Semi-physical kernel rates are cached per exact hrz0 value.
pub struct Likelihood {
    variant: ModelVariant,
    diffs: Vec<PreparedDifference>,
    loadings: Vec<f64>,
    bank: Option<KernelBank>,
    cache: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

impl Likelihood {
    pub fn new(data: &FitDataset, ctx: &ModelContext<'_>) -> Result<Self> {
        data.validate()?;
        let mut diffs = Vec::with_capacity(data.n_differences());
        let mut loadings = Vec::new();
        let mut all_samples = Vec::new();
        for e in &data.experiments {
            let b_start = e.geometry.b(e.geometry.incidence_start_deg)?;
            let b_end = e.geometry.b_end()?;
            if b_start != b_end {
                return Err(Error::Validation(format!(
                    "experiment {}: fitting requires a fixed incidence angle",
                    e.label
                )));
            }
            for d in &e.differences {
                let start = loadings.len();
                let mut linear_sum = 0.0;
                let mut quad_sum = 0.0;
                for s in &d.samples {
                    let c = s.loading();
                    loadings.push(c);
                    linear_sum += c;
                    quad_sum += c * c;
                }
                if matches!(ctx, ModelContext::SemiPhysical(_)) {
                    all_samples.extend_from_slice(&d.samples);
                }
                diffs.push(PreparedDifference {
                    delta_r: d.delta_r,
                    b_start,
                    b_end,
                    sigma_r_start: d.sigma_r_start,
                    sigma_r_end: d.sigma_r_end,
                    linear_sum,
                    quad_sum,
                    samples: start..loadings.len(),
                });
            }
        }
        let bank = match ctx {
            ModelContext::ConstantMean => None,
            ModelContext::SemiPhysical(k) => Some(KernelBank::new(k, &all_samples)?),
        };
        Ok(Likelihood {
            variant: ctx.variant(),
            diffs,
            loadings,
            bank,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn variant(&self) -> ModelVariant {
        self.variant
    }

    pub fn n_differences(&self) -> usize {
        self.diffs.len()
    }

    fn rates(&self, hrz0: f64) -> Arc<Vec<f64>> {
        let key = hrz0.to_bits();
        if let Some(r) = self.cache.lock().expect("cache lock").get(&key) {
            return Arc::clone(r);
        }
        let bank = self.bank.as_ref().expect("semi-physical likelihood has a kernel bank");
        let rates = Arc::new(bank.rates(hrz0));
        let mut cache = self.cache.lock().expect("cache lock");
        if cache.len() > 256 {
            cache.clear();
        }
        cache.insert(key, Arc::clone(&rates));
        rates
    }

    /// Per-difference `(mean, variance)` under `params`.
    pub fn moments(&self, params: &ModelParams) -> Result<Vec<(f64, f64)>> {
        params.validate()?;
        if params.variant() != self.variant {
            return Err(Error::Validation(format!(
                "likelihood prepared for {} but given {} parameters",
                self.variant,
                params.variant()
            )));
        }
        let sigma = params.sigma_dep();
        let out = match *params {
            ModelParams::ConstantMean { mu_tilde, .. } => self
                .diffs
                .iter()
                .map(|d| self.moment(d, mu_tilde * d.linear_sum, sigma))
                .collect(),
            ModelParams::SemiPhysical { hrz0, .. } => {
                let rates = self.rates(hrz0);
                self.diffs
                    .iter()
                    .map(|d| {
                        let mut mean_sum = 0.0;
                        for j in d.samples.clone() {
                            mean_sum += self.loadings[j] * rates[j];
                        }
                        self.moment(d, mean_sum, sigma)
                    })
                    .collect()
            }
        };
        Ok(out)
    }

    fn moment(&self, d: &PreparedDifference, mean_sum: f64, sigma: f64) -> (f64, f64) {
        let m = gaussian_moments(d.b_start, d.b_end, 0.0, mean_sum, d.quad_sum, sigma, d.sigma_r_start, d.sigma_r_end);
        (m.mean, m.variance)
    }

    /// Σ log N(Δr; mean, variance). A zero variance with a non-zero residual
    /// gives −∞.
    pub fn evaluate(&self, params: &ModelParams) -> Result<f64> {
        let moments = self.moments(params)?;
        let mut total = 0.0;
        for (d, (mean, var)) in self.diffs.iter().zip(moments) {
            let r = d.delta_r - mean;
            if var == 0.0 {
                if r != 0.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                return Ok(f64::INFINITY);
            }
            total += -HALF_LN_2PI - 0.5 * var.ln() - r * r / (2.0 * var);
        }
        Ok(total)
    }
}

/// Log-likelihood of `data` under `params`.
pub fn log_likelihood(data: &FitDataset, params: &ModelParams, ctx: &ModelContext<'_>) -> Result<f64> {
    Likelihood::new(data, ctx)?.evaluate(params)
}
