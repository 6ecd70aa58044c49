use crate::quadrature::trapezoid;
use crate::{Error, Result};

/// Tolerance on `∫ p dμ = 1` accepted by [`acceptance_factor`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Phase function tabulated on an ascending grid of scattering-angle cosines.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFunction {
    mu: Vec<f64>,
    p: Vec<f64>,
    raw_integral: f64,
}

impl PhaseFunction {
    /// Takes a tabulated phase function as-is. `mu` must be strictly ascending
    /// within [−1, 1] and `p` non-negative.
    pub fn from_tabulated(mu: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if mu.len() != p.len() || mu.len() < 2 {
            return Err(Error::Validation(
                "phase function needs at least two (μ, p) pairs of equal length".into(),
            ));
        }
        if mu.windows(2).any(|w| w[1] <= w[0]) || mu[0] < -1.0 || mu[mu.len() - 1] > 1.0 {
            return Err(Error::Validation(
                "phase function μ-grid must be strictly ascending within [-1, 1]".into(),
            ));
        }
        if p.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Validation("phase function values must be finite and non-negative".into()));
        }
        let raw_integral = trapezoid(&mu, &p);
        Ok(PhaseFunction { mu, p, raw_integral })
    }

    /// Tabulates and rescales so that the trapezoidal integral is exactly one.
    /// Duplicate cosines (possible when nearby angles round to the same μ) are
    /// merged.
    pub fn normalized(mu: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = mu.into_iter().zip(p).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.dedup_by(|a, b| a.0 == b.0);
        let (mu, p): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let pf = PhaseFunction::from_tabulated(mu, p)?;
        let raw = pf.raw_integral;
        if !(raw > 0.0) {
            return Err(Error::Validation("phase function integrates to zero".into()));
        }
        let p = pf.p.iter().map(|v| v / raw).collect();
        Ok(PhaseFunction {
            mu: pf.mu,
            p,
            raw_integral: raw,
        })
    }

    /// Isotropic density p(μ) = ½ on `n` evenly spaced cosines.
    pub fn isotropic(n: usize) -> Self {
        let n = n.max(2);
        let mu = (0..n)
            .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
            .collect();
        PhaseFunction::from_tabulated(mu, vec![0.5; n]).expect("valid isotropic grid")
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    /// Trapezoidal integral over the tabulated grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.mu, &self.p)
    }

    /// Integral of the analytic density on this grid before rescaling; its
    /// distance from one measures how well the grid resolves the lobe.
    pub fn raw_integral(&self) -> f64 {
        self.raw_integral
    }

    /// Trapezoidal ∫ p dμ from −1 to `upper`, with linear interpolation in the
    /// cell containing `upper`.
    fn cumulative(&self, upper: f64) -> f64 {
        let mu = &self.mu;
        let p = &self.p;
        if upper <= mu[0] {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 1..mu.len() {
            if mu[i] <= upper {
                acc += 0.5 * (mu[i] - mu[i - 1]) * (p[i] + p[i - 1]);
            } else {
                let t = (upper - mu[i - 1]) / (mu[i] - mu[i - 1]);
                let p_up = p[i - 1] + t * (p[i] - p[i - 1]);
                acc += 0.5 * (upper - mu[i - 1]) * (p[i - 1] + p_up);
                break;
            }
        }
        acc
    }
}

/// Fraction of scattered light leaving outside the acceptance cone of
/// half-angle `half_angle` (radians): `∫_{−1}^{cos φa} p(μ) dμ`.
pub fn acceptance_factor(phase: &PhaseFunction, half_angle: f64) -> Result<f64> {
    if !(half_angle > 0.0 && half_angle <= std::f64::consts::PI) {
        return Err(Error::Domain(format!(
            "acceptance half-angle must lie in (0, π], got {half_angle}"
        )));
    }
    let total = phase.integral();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::Validation(format!(
            "phase function integrates to {total}, not 1"
        )));
    }
    Ok(phase.cumulative(half_angle.cos()).clamp(0.0, 1.0))
}
