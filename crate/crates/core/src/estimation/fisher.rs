/// Condition number of the observed information beyond which the covariance
/// is reported as degenerate.
pub const MAX_CONDITION: f64 = 1e10;

/// Central finite-difference Hessian of `f` at `x` with step `h`.
pub fn hessian<F: Fn(&[f64; 2]) -> f64>(f: &F, x: [f64; 2], h: f64) -> [[f64; 2]; 2] {
    let at = |dx: f64, dy: f64| f(&[x[0] + dx, x[1] + dy]);
    let f0 = f(&x);
    let mut hm = [[0.0; 2]; 2];
    hm[0][0] = (at(h, 0.0) - 2.0 * f0 + at(-h, 0.0)) / (h * h);
    hm[1][1] = (at(0.0, h) - 2.0 * f0 + at(0.0, -h)) / (h * h);
    let off = (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4.0 * h * h);
    hm[0][1] = off;
    hm[1][0] = off;
    hm
}

/// Observed information, covariance and derived quantities at an optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherSummary {
    pub information: [[f64; 2]; 2],
    /// Inverse information, or its pseudo-inverse when degenerate.
    pub covariance: [[f64; 2]; 2],
    pub condition_number: f64,
    pub degenerate: bool,
    /// Per-parameter flag: the parameter is unidentified along a null or
    /// negative-curvature direction, so its interval is unbounded.
    pub unbounded: [bool; 2],
}

fn symmetric_eigen(m: [[f64; 2]; 2]) -> ([f64; 2], [[f64; 2]; 2]) {
    let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let l = [mean + r, mean - r];
    let vecs = if b.abs() > 1e-300 {
        let v1 = [l[0] - d, b];
        let v2 = [l[1] - d, b];
        let n1 = (v1[0] * v1[0] + v1[1] * v1[1]).sqrt();
        let n2 = (v2[0] * v2[0] + v2[1] * v2[1]).sqrt();
        [[v1[0] / n1, v1[1] / n1], [v2[0] / n2, v2[1] / n2]]
    } else if a >= d {
        [[1.0, 0.0], [0.0, 1.0]]
    } else {
        [[0.0, 1.0], [1.0, 0.0]]
    };
    (l, vecs)
}

/// Observed information from a central-difference Hessian of the
/// log-likelihood `f` at `x` (step `h`, one Richardson refinement with `h/2`),
/// and its inverse.
pub fn fisher_confidence<F: Fn(&[f64; 2]) -> f64>(f: &F, x: [f64; 2], h: f64) -> FisherSummary {
    let coarse = hessian(f, x, h);
    let fine = hessian(f, x, 0.5 * h);
    let mut info = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            info[i][j] = -(4.0 * fine[i][j] - coarse[i][j]) / 3.0;
        }
    }
    let sym = 0.5 * (info[0][1] + info[1][0]);
    info[0][1] = sym;
    info[1][0] = sym;

    let finite = info.iter().flatten().all(|v| v.is_finite());
    let (lambda, vecs) = if finite {
        symmetric_eigen(info)
    } else {
        ([f64::NAN; 2], [[1.0, 0.0], [0.0, 1.0]])
    };
    let condition_number = if finite && lambda[1] > 0.0 {
        lambda[0] / lambda[1]
    } else {
        f64::INFINITY
    };
    let degenerate = !(condition_number <= MAX_CONDITION);

    let mut covariance = [[0.0; 2]; 2];
    let mut unbounded = [false; 2];
    if !degenerate {
        let det = info[0][0] * info[1][1] - info[0][1] * info[1][0];
        covariance = [
            [info[1][1] / det, -info[0][1] / det],
            [-info[1][0] / det, info[0][0] / det],
        ];
    } else if finite {
        let cutoff = lambda[0].abs() / MAX_CONDITION;
        for k in 0..2 {
            let v = vecs[k];
            if lambda[k] > cutoff {
                for i in 0..2 {
                    for j in 0..2 {
                        covariance[i][j] += v[i] * v[j] / lambda[k];
                    }
                }
            } else {
                for i in 0..2 {
                    if v[i].abs() > 0.1 {
                        unbounded[i] = true;
                    }
                }
            }
        }
    } else {
        unbounded = [true, true];
    }
    FisherSummary {
        information: info,
        covariance,
        condition_number,
        degenerate,
        unbounded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_covariance_is_recovered() {
        // log-likelihood −½ (x−m)ᵀ A (x−m) has covariance A⁻¹
        let a = [[4.0, 1.2], [1.2, 0.9]];
        let m = [0.3, -2.0];
        let f = |x: &[f64; 2]| {
            let d = [x[0] - m[0], x[1] - m[1]];
            -0.5 * (a[0][0] * d[0] * d[0] + 2.0 * a[0][1] * d[0] * d[1] + a[1][1] * d[1] * d[1])
        };
        let s = fisher_confidence(&f, m, 1e-4);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((s.covariance[i][j] / inv[i][j] - 1.0).abs() < 1e-4);
            }
        }
        assert!(!s.degenerate);
    }

    #[test]
    fn flat_direction_is_degenerate() {
        let f = |x: &[f64; 2]| -(x[0] - 1.0).powi(2);
        let s = fisher_confidence(&f, [1.0, 5.0], 1e-4);
        assert!(s.degenerate);
        assert_eq!(s.unbounded, [false, true]);
        assert!((s.covariance[0][0] - 0.5).abs() < 1e-6);
    }
}
