/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Simplex size (max coordinate distance to the best vertex) at convergence.
    pub x_tol: f64,
    /// Spread of objective values across the simplex at convergence.
    pub f_tol: f64,
    pub max_evaluations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        NelderMeadOptions {
            x_tol: 1e-10,
            f_tol: 1e-12,
            max_evaluations: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult<const N: usize> {
    pub x: [f64; N],
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0` with an axis-aligned initial simplex of edge
/// `step[i]`. Non-finite objective values are treated as +∞.
pub fn nelder_mead<const N: usize, F: FnMut(&[f64; N]) -> f64>(
    mut f: F,
    x0: [f64; N],
    step: [f64; N],
    opts: NelderMeadOptions,
) -> NelderMeadResult<N> {
    let mut evals = 0usize;
    let mut eval = |x: &[f64; N], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    let v0 = eval(&x0, &mut evals);
    simplex.push((x0, v0));
    for i in 0..N {
        let mut x = x0;
        x[i] += step[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }

    let mut iterations = 0;
    let mut converged = false;
    while evals < opts.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0];
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&best.0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let spread = simplex[1..]
            .iter()
            .map(|(_, v)| (v - best.1).abs())
            .fold(0.0, f64::max);
        if size <= opts.x_tol && (spread <= opts.f_tol || !spread.is_finite()) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; N];
        for (x, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += x[i] / N as f64;
            }
        }
        let worst = simplex[N];
        let along = |t: f64| {
            let mut y = [0.0; N];
            for i in 0..N {
                y[i] = centroid[i] + t * (worst.0[i] - centroid[i]);
            }
            y
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst.1 {
            let xc = along(-0.5);
            (xc, eval(&xc, &mut evals))
        } else {
            let xc = along(0.5);
            (xc, eval(&xc, &mut evals))
        };
        if fc < worst.1.min(fr) {
            simplex[N] = (xc, fc);
            continue;
        }
        let b = simplex[0].0;
        for vertex in simplex.iter_mut().skip(1) {
            let mut y = [0.0; N];
            for i in 0..N {
                y[i] = b[i] + 0.5 * (vertex.0[i] - b[i]);
            }
            *vertex = (y, eval(&y, &mut evals));
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NelderMeadResult {
        x: simplex[0].0,
        value: simplex[0].1,
        iterations,
        evaluations: evals,
        converged,
    }
}
