#![allow(dead_code)]

use downscale::evd::GevParams;

/// Cluster maxima of every maximal run of `true` in `exceed`, left to right,
/// found by checking all index intervals.
pub fn brute_force_runs(exceed: &[bool], values: &[f64]) -> Vec<f64> {
    let n = exceed.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let all = (i..=j).all(|k| exceed[k]);
            let left = i == 0 || !exceed[i - 1];
            let right = j + 1 == n || !exceed[j + 1];
            if all && left && right {
                out.push((i..=j).map(|k| values[k]).fold(f64::NEG_INFINITY, f64::max));
            }
        }
    }
    out
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// GPD fit of excesses by the one-dimensional profile in `theta = xi / sigma`
/// (Grimshaw's reduction). Returns `(sigma, xi)`.
pub fn gpd_mle(excess: &[f64]) -> (f64, f64) {
    let n = excess.len() as f64;
    let xmax = excess.iter().copied().fold(0.0, f64::max);
    let mean = excess.iter().sum::<f64>() / n;
    let xi_of = |t: f64| excess.iter().map(|x| (t * x).ln_1p()).sum::<f64>() / n;
    let prof = |t: f64| {
        if t.abs() < 1e-12 {
            return -n * mean.ln() - n;
        }
        let xi = xi_of(t);
        let sigma = xi / t;
        if !(sigma > 0.0) {
            return f64::NEG_INFINITY;
        }
        -n * sigma.ln() - (1.0 + 1.0 / xi) * n * xi
    };
    let lo = -1.0 / xmax * (1.0 - 1e-9);
    let hi = 50.0 / mean;
    // coarse scan then golden-section refinement around the best grid point
    let m = 4000;
    let grid: Vec<f64> = (0..=m).map(|i| lo + (hi - lo) * (i as f64 / m as f64).powi(3)).collect();
    let best = (0..=m).max_by(|&a, &b| prof(grid[a]).total_cmp(&prof(grid[b]))).unwrap();
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(m)];
    let t = golden_max(prof, a, b, 1e-15 * (1.0 + a.abs().max(b.abs())));
    let xi = xi_of(t);
    (xi / t, xi)
}

/// Point-process parameters implied by a Poisson rate `lambda` of exceeding
/// `u` per year and GPD `(sigma, xi)` excesses.
pub fn pp_from_gpd(u: f64, lambda: f64, sigma: f64, xi: f64) -> GevParams {
    let lx = lambda.powf(xi);
    GevParams { mu: u - sigma * (1.0 - lx) / xi, psi: sigma * lx, xi }
}

pub fn truth() -> GevParams {
    GevParams { mu: 500.0, psi: 200.0, xi: 0.1 }
}

/// Threshold at the daily 95th percentile of a winter season.
pub fn winter_threshold(p: &GevParams) -> f64 {
    downscale::synth::tail_threshold(p, 0.05 * 90.25)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Log-scale surface used by the regression oracles, as
/// `(term name, exponent of lat, exponent of lon, coefficient)`.
pub const SURFACE: [(&str, i32, i32, f64); 9] = [
    ("lat", 1, 0, 0.03),
    ("lon", 0, 1, -0.02),
    ("lat^2", 2, 0, -0.004),
    ("lat*lon", 1, 1, 0.002),
    ("lon^2", 0, 2, 0.001),
    ("lat^3", 3, 0, 0.0004),
    ("lat^2*lon", 2, 1, -0.0002),
    ("lat*lon^2", 1, 2, 0.0001),
    ("lon^3", 0, 3, -0.00005),
];
pub const SURFACE_INTERCEPT: f64 = 6.0;
pub const SURFACE_GRID: f64 = 0.001;
pub const SURFACE_ELEV: f64 = -1e-4;
pub const SURFACE_CENTER: (f64, f64) = (37.5, -95.0);

/// Expected coefficient for a fitted term name.
pub fn surface_coefficient(term: &str) -> f64 {
    match term {
        "intercept" => SURFACE_INTERCEPT,
        "grid" => SURFACE_GRID,
        "elev" => SURFACE_ELEV,
        _ => SURFACE.iter().find(|s| s.0 == term).map(|s| s.3).unwrap_or_else(|| panic!("unknown term {term}")),
    }
}

pub fn surface_log_mean(x_grid: f64, elev: f64, lat: f64, lon: f64) -> f64 {
    let (dlat, dlon) = (lat - SURFACE_CENTER.0, lon - SURFACE_CENTER.1);
    SURFACE_INTERCEPT
        + SURFACE_GRID * x_grid
        + SURFACE_ELEV * elev
        + SURFACE.iter().map(|&(_, a, b, c)| c * dlat.powi(a) * dlon.powi(b)).sum::<f64>()
}

/// `n` stations scattered over 30-45N, 105-85W with log-normal noise.
pub fn surface_records(n: usize, noise_sd: f64, seed: u64) -> Vec<downscale::regression::PairedRecord> {
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sd).unwrap();
    (0..n)
        .map(|i| {
            let lat = rng.random_range(30.0..45.0);
            let lon = rng.random_range(-105.0..-85.0);
            let x_grid = rng.random_range(300.0..900.0);
            let elev = rng.random_range(0.0..2000.0);
            let mean = surface_log_mean(x_grid, elev, lat, lon);
            downscale::regression::PairedRecord {
                station_id: format!("s{i:04}"),
                cell_id: "c".into(),
                y_point: (mean + noise.sample(&mut rng)).exp(),
                x_grid,
                elev,
                lat,
                lon,
            }
        })
        .collect()
}

/// Random sites over 30-45N, 105-85W with elevations.
pub fn random_sites(n: usize, seed: u64) -> Vec<(downscale::spatial::LatLon, f64)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let loc = downscale::spatial::LatLon::new(rng.random_range(30.0..45.0), rng.random_range(-105.0..-85.0));
            (loc, rng.random_range(0.0..2000.0))
        })
        .collect()
}
