//! Small fitting and quadrature-in-time helpers shared across modules.

/// Least-squares slope of `y` against `x`.
pub fn linear_slope(points: &[(f64, f64)]) -> f64 {
    linear_fit(points).1
}

/// Least-squares `(intercept, slope)` of `y` against `x`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (intercept, slope)
}

/// Fit `E(t) ~ C exp(-beta t)` on `(t, E)` samples with positive energies;
/// returns `(C, beta)`. Samples at or below `floor` are skipped.
pub fn exp_decay_fit(samples: &[(f64, f64)], floor: f64) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, e)| *e > floor)
        .map(|&(t, e)| (t, e.ln()))
        .collect();
    if pts.len() < 2 {
        return (0.0, 0.0);
    }
    let (a, b) = linear_fit(&pts);
    (a.exp(), -b)
}

/// Trapezoid weights on a uniform grid with `len` nodes and step `dt`.
pub fn trapezoid_weights(len: usize, dt: f64) -> Vec<f64> {
    assert!(len >= 2);
    let mut w = vec![dt; len];
    w[0] = 0.5 * dt;
    w[len - 1] = 0.5 * dt;
    w
}

/// Composite Simpson weights on a uniform grid; odd interval counts close
/// with a 3/8 block. Falls back to trapezoid for fewer than 4 nodes.
pub fn simpson_weights(len: usize, dt: f64) -> Vec<f64> {
    assert!(len >= 2);
    if len < 4 {
        return trapezoid_weights(len, dt);
    }
    let intervals = len - 1;
    let mut w = vec![0.0; len];
    let simpson_until = if intervals % 2 == 0 {
        intervals
    } else {
        intervals - 3
    };
    let mut k = 0;
    while k + 2 <= simpson_until {
        w[k] += dt / 3.0;
        w[k + 1] += 4.0 * dt / 3.0;
        w[k + 2] += dt / 3.0;
        k += 2;
    }
    if simpson_until < intervals {
        let base = simpson_until;
        w[base] += 3.0 * dt / 8.0;
        w[base + 1] += 9.0 * dt / 8.0;
        w[base + 2] += 9.0 * dt / 8.0;
        w[base + 3] += 3.0 * dt / 8.0;
    }
    w
}
