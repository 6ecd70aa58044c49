use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::phase::PhaseFunction;
use crate::{Error, Result};

/// Complex refractive index `m = n + ik` of the particle relative to air.
/// A positive imaginary part means absorption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefractiveIndex {
    pub real: f64,
    #[serde(default)]
    pub imag: f64,
}

impl RefractiveIndex {
    /// Homogeneous quartz, the default dust optical model.
    pub const QUARTZ: RefractiveIndex = RefractiveIndex {
        real: 1.54,
        imag: 0.0,
    };

    pub fn new(real: f64, imag: f64) -> Result<Self> {
        let m = RefractiveIndex { real, imag };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.real > 0.0 && self.real.is_finite()) {
            return Err(Error::Domain(format!(
                "refractive index real part must be positive, got {}",
                self.real
            )));
        }
        if !(self.imag >= 0.0 && self.imag.is_finite()) {
            return Err(Error::Domain(format!(
                "refractive index imaginary part must be non-negative, got {}",
                self.imag
            )));
        }
        Ok(())
    }

    fn complex(&self) -> Complex64 {
        Complex64::new(self.real, self.imag)
    }
}

/// Extinction and scattering efficiencies with the normalised phase function.
#[derive(Debug, Clone)]
pub struct MieResult {
    pub size_parameter: f64,
    pub q_ext: f64,
    pub q_sca: f64,
    pub phase_function: PhaseFunction,
}

/// Wiscombe-style truncation order.
pub fn n_stop(x: f64) -> usize {
    (x + 4.05 * x.cbrt() + 2.0).ceil() as usize
}

struct Coefficients {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

fn failure(x: f64, m: RefractiveIndex, detail: impl Into<String>) -> Error {
    Error::MieFailure {
        x,
        m_re: m.real,
        m_im: m.imag,
        detail: detail.into(),
    }
}

fn coefficients(x: f64, m: RefractiveIndex) -> Result<Coefficients> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("size parameter must be positive, got {x}")));
    }
    m.validate()?;
    let nstop = n_stop(x);
    let mc = m.complex();
    let mx = mc * x;

    // Logarithmic derivative D_n(mx), downward from well above both x and |mx|.
    let nmx = (nstop as f64).max(mx.norm()).ceil() as usize + 16 + (8.0 * mx.norm().cbrt()).ceil() as usize;
    let mut d = vec![Complex64::new(0.0, 0.0); nmx + 1];
    for n in (1..=nmx).rev() {
        let r = n as f64 / mx;
        d[n - 1] = r - 1.0 / (d[n] + r);
    }

    // ψ_n(x) = x j_n(x) from the downward ratio recurrence, which stays accurate
    // for x ≪ 1 where the upward recurrence cancels catastrophically.
    let nstart = nstop + 16 + (2.0 * x.cbrt()).ceil() as usize;
    let mut ratio = vec![0.0; nstart + 2];
    for n in (1..=nstart).rev() {
        ratio[n] = 1.0 / ((2 * n + 1) as f64 / x - ratio[n + 1]);
    }
    let mut psi = vec![0.0; nstop + 1];
    psi[0] = x.sin();
    for n in 1..=nstop {
        psi[n] = ratio[n] * psi[n - 1];
    }

    let mut a = Vec::with_capacity(nstop);
    let mut b = Vec::with_capacity(nstop);
    let mut chi_prev = -x.sin();
    let mut chi = x.cos();
    let mut xi_prev = Complex64::new(psi[0], -chi);
    for n in 1..=nstop {
        let nf = n as f64;
        let chi_next = (2.0 * nf - 1.0) / x * chi - chi_prev;
        chi_prev = chi;
        chi = chi_next;
        let xi = Complex64::new(psi[n], -chi);
        let da = d[n] / mc + nf / x;
        let db = d[n] * mc + nf / x;
        let an = (da * psi[n] - psi[n - 1]) / (da * xi - xi_prev);
        let bn = (db * psi[n] - psi[n - 1]) / (db * xi - xi_prev);
        if !(an.re.is_finite() && an.im.is_finite() && bn.re.is_finite() && bn.im.is_finite()) {
            return Err(failure(x, m, format!("non-finite coefficient at order {n}")));
        }
        a.push(an);
        b.push(bn);
        xi_prev = xi;
    }
    Ok(Coefficients { a, b })
}

fn efficiencies(x: f64, m: RefractiveIndex, c: &Coefficients) -> Result<(f64, f64)> {
    let mut ext = 0.0;
    let mut sca = 0.0;
    for (i, (an, bn)) in c.a.iter().zip(&c.b).enumerate() {
        let w = (2 * i + 3) as f64;
        ext += w * (an.re + bn.re);
        sca += w * (an.norm_sqr() + bn.norm_sqr());
    }
    let scale = 2.0 / (x * x);
    let q_sca = sca * scale;
    // For a non-absorbing sphere Re(a_n) = |a_n|² exactly; the scattering sum is
    // the better-conditioned of the two, so the identity is applied directly.
    let q_ext = if m.imag == 0.0 { q_sca } else { ext * scale };
    if !(q_ext.is_finite() && q_sca.is_finite()) {
        return Err(failure(x, m, "non-finite efficiency"));
    }
    Ok((q_ext, q_sca.min(q_ext)))
}

/// Extinction and scattering efficiencies only.
pub fn mie_q(x: f64, m: RefractiveIndex) -> Result<(f64, f64)> {
    let c = coefficients(x, m)?;
    efficiencies(x, m, &c)
}

/// Scattering angles (radians, descending) for the tabulated phase function:
/// 1801 uniform points on [0, π] plus a finer forward grid that resolves the
/// diffraction lobe, whose width scales like 1/x.
pub fn scattering_angles(x: f64) -> Vec<f64> {
    const UNIFORM: usize = 1801;
    let step = std::f64::consts::PI / (UNIFORM - 1) as f64;
    let mut theta: Vec<f64> = (0..UNIFORM).map(|i| step * i as f64).collect();
    let fine = 1.0 / (16.0 * x);
    if fine < step {
        let extent = (80.0 / x).min(std::f64::consts::FRAC_PI_2);
        let n = (extent / fine).ceil() as usize;
        theta.extend((1..n).map(|i| fine * i as f64));
    }
    theta.sort_by(|a, b| b.total_cmp(a));
    theta.dedup();
    theta
}

/// Amplitude functions summed to |S1|² + |S2|² at each cosine.
fn intensities(c: &Coefficients, mu: &[f64]) -> Vec<f64> {
    let n = c.a.len();
    let fac: Vec<f64> = (1..=n)
        .map(|k| (2 * k + 1) as f64 / (k * (k + 1)) as f64)
        .collect();
    mu.iter()
        .map(|&u| {
            let mut s1 = Complex64::new(0.0, 0.0);
            let mut s2 = Complex64::new(0.0, 0.0);
            let mut pi_prev = 0.0;
            let mut pi = 1.0;
            for k in 1..=n {
                let kf = k as f64;
                let tau = kf * u * pi - (kf + 1.0) * pi_prev;
                let (an, bn) = (c.a[k - 1], c.b[k - 1]);
                s1 += (an * pi + bn * tau) * fac[k - 1];
                s2 += (an * tau + bn * pi) * fac[k - 1];
                let pi_next = ((2.0 * kf + 1.0) * u * pi - (kf + 1.0) * pi_prev) / kf;
                pi_prev = pi;
                pi = pi_next;
            }
            s1.norm_sqr() + s2.norm_sqr()
        })
        .collect()
}

/// Full Mie solution for a homogeneous sphere of size parameter `x = πD/λ`.
pub fn mie_efficiencies(x: f64, m: RefractiveIndex) -> Result<MieResult> {
    let c = coefficients(x, m)?;
    let (q_ext, q_sca) = efficiencies(x, m, &c)?;
    let mu: Vec<f64> = scattering_angles(x).iter().map(|t| t.cos()).collect();
    let raw = intensities(&c, &mu);
    let scale = x * x * q_sca;
    let p: Vec<f64> = if scale > 0.0 {
        raw.iter().map(|v| v / scale).collect()
    } else {
        vec![0.5; mu.len()]
    };
    if p.iter().any(|v| !v.is_finite()) {
        return Err(failure(x, m, "non-finite phase function"));
    }
    let phase_function = PhaseFunction::normalized(mu, p)?;
    Ok(MieResult {
        size_parameter: x,
        q_ext,
        q_sca,
        phase_function,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_order_matches_formula() {
        assert_eq!(n_stop(1.0), 8);
        assert_eq!(n_stop(1000.0), 1043);
    }

    #[test]
    fn rayleigh_limit() {
        // Q_sca → (8/3) x⁴ |(m²−1)/(m²+2)|² as x → 0.
        let m = RefractiveIndex::QUARTZ;
        let x = 1e-3;
        let (qe, qs) = mie_q(x, m).unwrap();
        let m2 = m.real * m.real;
        let lorentz = (m2 - 1.0) / (m2 + 2.0);
        let rayleigh = 8.0 / 3.0 * x.powi(4) * lorentz * lorentz;
        assert!((qs / rayleigh - 1.0).abs() < 1e-5);
        assert_eq!(qe, qs);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(mie_q(0.0, RefractiveIndex::QUARTZ).is_err());
        assert!(RefractiveIndex::new(1.5, -0.1).is_err());
        assert!(RefractiveIndex::new(0.0, 0.0).is_err());
    }

    #[test]
    fn angle_grid_is_descending_and_spans_range() {
        for x in [0.5, 50.0, 3000.0] {
            let t = scattering_angles(x);
            assert_eq!(t[0], std::f64::consts::PI);
            assert_eq!(*t.last().unwrap(), 0.0);
            assert!(t.windows(2).all(|w| w[0] > w[1]));
        }
    }
}
