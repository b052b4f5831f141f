//! Derivative-free minimization and finite-difference curvature.

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Relative spread of simplex function values accepted as convergence.
    pub converge_tol: f64,
    /// Iteration stops once the relative spread falls below this.
    pub stop_tol: f64,
    pub max_evals: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions { converge_tol: 1e-8, stop_tol: 1e-13, max_evals: 4000 }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult<const N: usize> {
    pub x: [f64; N],
    pub f: f64,
    pub converged: bool,
    pub evals: usize,
}

fn relative_spread(fmin: f64, fmax: f64) -> f64 {
    if !fmax.is_finite() {
        return f64::INFINITY;
    }
    2.0 * (fmax - fmin) / (fmax.abs() + fmin.abs() + 1e-10)
}

/// Nelder-Mead with standard coefficients (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2). The initial simplex is `x0` plus one vertex
/// per axis offset by `steps[i]`.
pub fn nelder_mead<const N: usize, F>(
    mut f: F,
    x0: [f64; N],
    steps: [f64; N],
    opts: SimplexOptions,
) -> SimplexResult<N>
where
    F: FnMut(&[f64; N]) -> f64,
{
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
    let f0 = eval(&x0, &mut evals);
    simplex.push((x0, f0));
    for i in 0..N {
        let mut x = x0;
        x[i] += steps[i];
        let fx = eval(&x, &mut evals);
        simplex.push((x, fx));
    }

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = relative_spread(simplex[0].1, simplex[N].1);
        if spread <= opts.stop_tol || evals >= opts.max_evals {
            let (x, fx) = simplex[0];
            return SimplexResult { x, f: fx, converged: spread <= opts.converge_tol, evals };
        }

        let mut centroid = [0.0; N];
        for (x, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += x[i] / N as f64;
            }
        }
        let along = |t: f64| {
            let mut p = [0.0; N];
            for i in 0..N {
                p[i] = centroid[i] + t * (simplex[N].0[i] - centroid[i]);
            }
            p
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
        let (xc, fc) = if fr < simplex[N].1 {
            let xc = along(-0.5);
            (xc, eval(&xc, &mut evals))
        } else {
            let xc = along(0.5);
            (xc, eval(&xc, &mut evals))
        };
        if fc < simplex[N].1.min(fr) {
            simplex[N] = (xc, fc);
            continue;
        }
        let best = simplex[0].0;
        for v in simplex.iter_mut().skip(1) {
            for i in 0..N {
                v.0[i] = best[i] + 0.5 * (v.0[i] - best[i]);
            }
            v.1 = eval(&v.0, &mut evals);
        }
    }
}

/// Central-difference Hessian with step `rel_step * max(1, |x_i|)` per axis.
pub fn numerical_hessian<const N: usize, F>(f: F, x: &[f64; N], rel_step: f64) -> [[f64; N]; N]
where
    F: Fn(&[f64; N]) -> f64,
{
    let h: [f64; N] = std::array::from_fn(|i| rel_step * x[i].abs().max(1.0));
    let at = |offsets: &[(usize, f64)]| {
        let mut p = *x;
        for &(i, d) in offsets {
            p[i] += d;
        }
        f(&p)
    };
    let f0 = f(x);
    let mut hess = [[0.0; N]; N];
    for i in 0..N {
        let fp = at(&[(i, h[i])]);
        let fm = at(&[(i, -h[i])]);
        hess[i][i] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let fpp = at(&[(i, h[i]), (j, h[j])]);
            let fpm = at(&[(i, h[i]), (j, -h[j])]);
            let fmp = at(&[(i, -h[i]), (j, h[j])]);
            let fmm = at(&[(i, -h[i]), (j, -h[j])]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}
