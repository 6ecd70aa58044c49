use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fisher::fisher_confidence;
use super::likelihood::{Likelihood, ModelContext};
use super::nelder_mead::{nelder_mead, NelderMeadOptions};
use super::{from_transformed, parameter_names, to_transformed, FitDataset};
use crate::loss_model::{ModelParams, ModelVariant};
use crate::{Error, Result};

/// Optimiser and Hessian settings for [`fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    /// Points per axis of the coarse multi-start grid.
    pub grid_points: usize,
    /// Half-width of the coarse grid around the initial guess, per transformed
    /// coordinate. `None` picks a variant-specific default.
    pub grid_half_width: Option<[f64; 2]>,
    /// Number of best grid points refined with Nelder–Mead.
    pub refine_top: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    pub max_evaluations: usize,
    pub hessian_step: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            grid_points: 5,
            grid_half_width: None,
            refine_top: 5,
            x_tol: 1e-10,
            f_tol: 1e-12,
            max_evaluations: 2000,
            hessian_step: 1e-4,
        }
    }
}

/// Starting point: hrz0 (semi-physical) or μ̃ (constant-mean), and σ_dep.
/// Missing values come from a moment estimate (hrz0 defaults to 5).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub primary: Option<f64>,
    pub sigma_dep: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Condition number of the observed information; `null` when infinite.
    #[serde(with = "nullable_f64")]
    pub hessian_condition: f64,
    pub degenerate: bool,
    pub n_differences: usize,
}

/// Maximum-likelihood estimates with Fisher-information intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub variant: ModelVariant,
    pub params: BTreeMap<String, f64>,
    pub params_transformed: [f64; 2],
    pub covariance_transformed: [[f64; 2]; 2],
    /// 95% intervals; an unbounded upper limit is written as `null`.
    #[serde(with = "ci_serde")]
    pub ci95: BTreeMap<String, [f64; 2]>,
    pub loglik: f64,
    pub diagnostics: FitDiagnostics,
}

mod nullable_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

mod ci_serde {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &BTreeMap<String, [f64; 2]>, s: S) -> Result<S::Ok, S::Error> {
        let m: BTreeMap<&String, [Option<f64>; 2]> = v
            .iter()
            .map(|(k, [lo, hi])| (k, [Some(*lo), hi.is_finite().then_some(*hi)]))
            .collect();
        m.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, [f64; 2]>, D::Error> {
        let m: BTreeMap<String, [Option<f64>; 2]> = BTreeMap::deserialize(d)?;
        Ok(m.into_iter()
            .map(|(k, [lo, hi])| (k, [lo.unwrap_or(0.0), hi.unwrap_or(f64::INFINITY)]))
            .collect())
    }
}

impl FitResult {
    pub fn model_params(&self) -> Result<ModelParams> {
        let get = |k: &str| {
            self.params
                .get(k)
                .copied()
                .ok_or_else(|| Error::Validation(format!("fit result lacks parameter '{k}'")))
        };
        let p = match self.variant {
            ModelVariant::SemiPhysical => ModelParams::SemiPhysical {
                hrz0: get("hrz0")?,
                sigma_dep: get("sigma_dep")?,
            },
            ModelVariant::ConstantMean => ModelParams::ConstantMean {
                mu_tilde: get("mu_tilde")?,
                sigma_dep: get("sigma_dep")?,
            },
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks internal consistency, e.g. of a fit read back from disk.
    pub fn validate(&self) -> Result<()> {
        let p = self.model_params()?;
        if !(p.sigma_dep() > 0.0) {
            return Err(Error::Validation("σ_dep must be positive".into()));
        }
        let c = &self.covariance_transformed;
        if c.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Validation("covariance has non-finite entries".into()));
        }
        if c[0][0] < 0.0 || c[1][1] < 0.0 {
            return Err(Error::Validation("covariance has a negative variance".into()));
        }
        if (c[0][1] - c[1][0]).abs() > 1e-12 * (c[0][1].abs() + c[1][0].abs()).max(1e-300) {
            return Err(Error::Validation("covariance is not symmetric".into()));
        }
        if c[0][0] * c[1][1] - c[0][1] * c[1][0] < -1e-12 * c[0][0] * c[1][1] {
            return Err(Error::Validation("covariance is not positive semi-definite".into()));
        }
        let z = to_transformed(&p);
        for i in 0..2 {
            if (z[i] - self.params_transformed[i]).abs() > 1e-9 * (1.0 + z[i].abs()) {
                return Err(Error::Validation(
                    "transformed and back-transformed parameters disagree".into(),
                ));
            }
        }
        for (name, value) in &self.params {
            let [lo, hi] = self
                .ci95
                .get(name)
                .copied()
                .ok_or_else(|| Error::Validation(format!("missing interval for '{name}'")))?;
            if !(lo <= *value && *value <= hi) {
                return Err(Error::Validation(format!(
                    "interval [{lo}, {hi}] does not bracket {name} = {value}"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let r: FitResult = serde_json::from_str(&text)?;
        r.validate()?;
        Ok(r)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Builds a result from known parameters and a transformed-space covariance.
    pub fn from_parts(params: ModelParams, covariance_transformed: [[f64; 2]; 2], loglik: f64) -> Result<Self> {
        params.validate()?;
        let variant = params.variant();
        let z = to_transformed(&params);
        let names = parameter_names(variant);
        let r = FitResult {
            variant,
            params: named(variant, &params, &names),
            params_transformed: z,
            covariance_transformed,
            ci95: intervals(variant, z, &covariance_transformed, [false; 2]),
            loglik,
            diagnostics: FitDiagnostics {
                iterations: 0,
                evaluations: 0,
                converged: true,
                hessian_condition: condition(&covariance_transformed),
                degenerate: false,
                n_differences: 0,
            },
        };
        r.validate()?;
        Ok(r)
    }
}

fn condition(c: &[[f64; 2]; 2]) -> f64 {
    let mean = 0.5 * (c[0][0] + c[1][1]);
    let r = (0.25 * (c[0][0] - c[1][1]).powi(2) + c[0][1] * c[1][0]).sqrt();
    if mean - r > 0.0 {
        (mean + r) / (mean - r)
    } else {
        f64::INFINITY
    }
}

fn named(variant: ModelVariant, params: &ModelParams, names: &[&str; 2]) -> BTreeMap<String, f64> {
    let primary = match (*params, variant) {
        (ModelParams::SemiPhysical { hrz0, .. }, _) => hrz0,
        (ModelParams::ConstantMean { mu_tilde, .. }, _) => mu_tilde,
    };
    BTreeMap::from([
        (names[0].to_string(), primary),
        (names[1].to_string(), params.sigma_dep()),
    ])
}

fn back_transform(variant: ModelVariant, i: usize, z: f64) -> f64 {
    match (variant, i) {
        (ModelVariant::SemiPhysical, 0) => z.exp().exp(),
        _ => z.exp(),
    }
}

fn intervals(
    variant: ModelVariant,
    z: [f64; 2],
    cov: &[[f64; 2]; 2],
    unbounded: [bool; 2],
) -> BTreeMap<String, [f64; 2]> {
    let names = parameter_names(variant);
    (0..2)
        .map(|i| {
            let ci = if unbounded[i] {
                let floor = if variant == ModelVariant::SemiPhysical && i == 0 { 1.0 } else { 0.0 };
                [floor, f64::INFINITY]
            } else {
                let half = 1.959_963_984_540_054 * cov[i][i].max(0.0).sqrt();
                [back_transform(variant, i, z[i] - half), back_transform(variant, i, z[i] + half)]
            };
            (names[i].to_string(), ci)
        })
        .collect()
}

/// Moment-based starting values for the constant-mean rate and σ_dep.
fn moment_guess(lik: &Likelihood, data: &FitDataset) -> (f64, f64) {
    let mut loss = 0.0;
    let mut load = 0.0;
    for e in &data.experiments {
        let b = e.geometry.b_end().unwrap_or(1.0);
        for d in &e.differences {
            loss -= d.delta_r;
            load += b * d.samples.iter().map(|s| s.loading()).sum::<f64>();
        }
    }
    let mu = if loss > 0.0 && load > 0.0 { loss / load } else { 1e-6 };
    let mut excess = 0.0;
    let mut quad = 0.0;
    if let Ok(m) = lik.moments(&ModelParams::ConstantMean {
        mu_tilde: mu,
        sigma_dep: 0.0,
    }) {
        for (e, d) in data
            .experiments
            .iter()
            .flat_map(|e| e.differences.iter().map(move |d| (e, d)))
            .zip(m)
        {
            let b = e.0.geometry.b_end().unwrap_or(1.0);
            let r = e.1.delta_r - d.0;
            excess += r * r - d.1;
            quad += b * b * e.1.samples.iter().map(|s| s.loading().powi(2)).sum::<f64>();
        }
    }
    let sigma = if excess > 0.0 && quad > 0.0 { (excess / quad).sqrt() } else { mu };
    (mu, sigma.max(1e-12))
}

/// Maximises the log-likelihood over the two transformed parameters:
/// coarse grid, Nelder–Mead from the best grid points, then Fisher intervals.
pub fn fit(
    data: &FitDataset,
    ctx: &ModelContext<'_>,
    initial: Option<InitialGuess>,
    settings: &FitSettings,
) -> Result<FitResult> {
    let variant = ctx.variant();
    let n = data.n_differences();
    if n < 2 {
        return Err(Error::FitFailure(format!(
            "need at least two reflectance differences, have {n}"
        )));
    }
    let lik = Likelihood::new(data, ctx)?;
    let (mu_guess, sigma_guess) = moment_guess(&lik, data);
    let initial = initial.unwrap_or_default();
    let primary = initial.primary.unwrap_or(match variant {
        ModelVariant::ConstantMean => mu_guess,
        ModelVariant::SemiPhysical => 5.0,
    });
    let sigma_dep = initial.sigma_dep.unwrap_or(sigma_guess);
    let start = match variant {
        ModelVariant::SemiPhysical => ModelParams::SemiPhysical { hrz0: primary, sigma_dep },
        ModelVariant::ConstantMean => ModelParams::ConstantMean { mu_tilde: primary, sigma_dep },
    };
    start
        .validate()
        .map_err(|e| Error::Config(format!("initial guess: {e}")))?;
    let centre = to_transformed(&start);
    let half = settings.grid_half_width.unwrap_or(match variant {
        ModelVariant::SemiPhysical => [1.2, 3.0],
        ModelVariant::ConstantMean => [2.0, 3.0],
    });

    let objective = |z: &[f64; 2]| -> f64 {
        if !(z[0].is_finite() && z[1].is_finite()) {
            return f64::NEG_INFINITY;
        }
        let p = from_transformed(variant, *z);
        if p.validate().is_err() {
            return f64::NEG_INFINITY;
        }
        match lik.evaluate(&p) {
            Ok(v) if v.is_nan() => f64::NEG_INFINITY,
            Ok(v) => v,
            Err(_) => f64::NEG_INFINITY,
        }
    };

    let g = settings.grid_points.max(1);
    let axis = |i: usize, k: usize| {
        if g == 1 {
            centre[i]
        } else {
            centre[i] - half[i] + 2.0 * half[i] * k as f64 / (g - 1) as f64
        }
    };
    let mut grid: Vec<([f64; 2], f64)> = Vec::with_capacity(g * g);
    for a in 0..g {
        for b in 0..g {
            let z = [axis(0, a), axis(1, b)];
            grid.push((z, objective(&z)));
        }
    }
    let mut evaluations = grid.len();
    grid.sort_by(|x, y| y.1.total_cmp(&x.1));
    if !grid[0].1.is_finite() || grid[0].1 == f64::INFINITY {
        return Err(Error::FitFailure(
            "no finite log-likelihood on the starting grid".into(),
        ));
    }

    let step = if g > 1 {
        [half[0] / (g - 1) as f64, half[1] / (g - 1) as f64]
    } else {
        [0.5, 0.5]
    };
    let opts = NelderMeadOptions {
        x_tol: settings.x_tol,
        f_tol: settings.f_tol,
        max_evaluations: settings.max_evaluations,
    };
    let neg = |z: &[f64; 2]| -objective(z);
    let mut best: Option<([f64; 2], f64, bool)> = None;
    let mut iterations = 0;
    for (z0, _) in grid.iter().take(settings.refine_top.max(1)) {
        let first = nelder_mead(neg, *z0, step, opts);
        // restart once from the optimum to guard against a collapsed simplex
        let second = nelder_mead(neg, first.x, [step[0] * 0.1, step[1] * 0.1], opts);
        iterations += first.iterations + second.iterations;
        evaluations += first.evaluations + second.evaluations;
        let (x, v, conv) = if second.value <= first.value {
            (second.x, second.value, second.converged)
        } else {
            (first.x, first.value, first.converged)
        };
        let better = match &best {
            None => true,
            Some((_, bv, _)) => v < *bv,
        };
        if better {
            best = Some((x, v, conv));
        }
    }
    let (z, negll, converged) = best.expect("at least one start");
    let loglik = -negll;
    if !loglik.is_finite() {
        return Err(Error::FitFailure("optimiser ended at a non-finite log-likelihood".into()));
    }

    let fisher = fisher_confidence(&objective, z, settings.hessian_step);
    evaluations += 18;
    if fisher.degenerate {
        log::warn!(
            "observed information is ill-conditioned (condition number {:e}); intervals are unreliable",
            fisher.condition_number
        );
    }
    let params = from_transformed(variant, z);
    let names = parameter_names(variant);
    let result = FitResult {
        variant,
        params: named(variant, &params, &names),
        params_transformed: z,
        covariance_transformed: fisher.covariance,
        ci95: intervals(variant, z, &fisher.covariance, fisher.unbounded),
        loglik,
        diagnostics: FitDiagnostics {
            iterations,
            evaluations,
            converged,
            hessian_condition: fisher.condition_number,
            degenerate: fisher.degenerate,
            n_differences: n,
        },
    };
    Ok(result)
}
