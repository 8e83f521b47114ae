use super::feedback::{ExtensionRecord, FeedbackLaw};
use super::space::ControlSpace;
use crate::error::{Error, Result};
use crate::waveop::{PotentialField, TimeGrid};
use nalgebra::{Complex, DMatrix, DVector};

/// Knobs for the backward sweep of the exponentially weighted value
/// problem.
pub struct RiccatiOptions {
    /// Weight exponent of the running cost.
    pub beta: f64,
    /// Span of the emitted law; integration horizons are multiples of it.
    pub horizon: f64,
    /// Node spacing of the emitted law.
    pub dt_store: f64,
    /// Integration step; non-positive selects the stability-bound default.
    pub dt_integrate: f64,
    /// Nodewise convergence threshold between horizon extensions.
    pub riccati_tol: f64,
    /// Extra integration rounds allowed past the first.
    pub max_extensions: usize,
    /// Frobenius ceiling that flags finite-time escape.
    pub blowup_ceiling: f64,
    /// Certified closed-loop decay rate from a concatenated run; admits
    /// any `beta` at or below it. Without one, `beta` must stay below the
    /// damping exponent, the rate the free flow certifies by itself.
    pub decay_certificate: Option<f64>,
    /// Value matrix at the far end of each integration round; None is zero.
    pub terminal: Option<DMatrix<f64>>,
}

impl RiccatiOptions {
    pub fn new(beta: f64, horizon: f64, dt_store: f64) -> RiccatiOptions {
        RiccatiOptions {
            beta,
            horizon,
            dt_store,
            dt_integrate: 0.0,
            riccati_tol: 1e-9,
            max_extensions: 6,
            blowup_ceiling: 1e8,
            decay_certificate: None,
            terminal: None,
        }
    }
}

/// First-order matrices of the drift-shifted problem at time `t`:
/// the shifted dynamics, the actuation column block, and the diagonal of
/// the energy form.
pub fn shifted_matrices(
    space: &ControlSpace,
    potential: &PotentialField,
    t: f64,
    gamma: f64,
    beta: f64,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let basis = space.basis();
    let n = basis.n_modes();
    let m = space.dim();
    let s = 0.5 * beta;
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        a[(j, j)] = s;
        a[(j, n + j)] = 1.0;
        a[(n + j, j)] = -basis.lambda(j);
        a[(n + j, n + j)] = s - gamma;
    }
    if !potential.is_zero() {
        let bm = potential.matrix_at(t);
        for i in 0..n {
            for j in 0..n {
                a[(n + i, j)] -= bm[(i, j)];
            }
        }
    }
    let mut b = DMatrix::zeros(2 * n, m);
    b.view_mut((n, 0), (n, m)).copy_from(space.injection());
    let mut c = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        c[(j, j)] = basis.lambda(j);
        c[(n + j, n + j)] = 1.0;
    }
    (a, b, c)
}

/// Stiffness-plus-potential block `Lambda + B(t)`, cached when the
/// potential does not move.
struct StiffnessCache<'a> {
    potential: &'a PotentialField,
    lambda: DVector<f64>,
    fixed: Option<DMatrix<f64>>,
}

impl<'a> StiffnessCache<'a> {
    fn new(space: &ControlSpace, potential: &'a PotentialField) -> StiffnessCache<'a> {
        let basis = space.basis();
        let n = basis.n_modes();
        let lambda = DVector::from_fn(n, |j, _| basis.lambda(j));
        let fixed = potential.is_time_invariant().then(|| {
            let mut m = if potential.is_zero() {
                DMatrix::zeros(n, n)
            } else {
                potential.matrix_at(0.0)
            };
            for j in 0..n {
                m[(j, j)] += lambda[j];
            }
            m
        });
        StiffnessCache {
            potential,
            lambda,
            fixed,
        }
    }

    fn at(&self, t: f64) -> DMatrix<f64> {
        if let Some(m) = &self.fixed {
            return m.clone();
        }
        let mut m = self.potential.matrix_at(t);
        for j in 0..self.lambda.len() {
            m[(j, j)] += self.lambda[j];
        }
        m
    }
}

/// Backward-sweep derivative of the shifted value matrix with respect to
/// reversed time, evaluated blockwise.
fn sweep_rhs(
    p: &DMatrix<f64>,
    m_mat: &DMatrix<f64>,
    injection: &DMatrix<f64>,
    gamma: f64,
    beta: f64,
    lambda: &DVector<f64>,
) -> DMatrix<f64> {
    let n = m_mat.nrows();
    let s = 0.5 * beta;
    let pt = p.rows(0, n).into_owned();
    let pb = p.rows(n, n).into_owned();
    let l_top = &pt * s - m_mat * &pb;
    let l_bot = &pt + &pb * (s - gamma);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    d.rows_mut(0, n).copy_from(&l_top);
    d.rows_mut(n, n).copy_from(&l_bot);
    let dt = d.transpose();
    d += &dt;
    let y = p.columns(n, n) * injection;
    d.gemm(-1.0, &y, &y.transpose(), 1.0);
    for j in 0..n {
        d[(j, j)] += lambda[j];
        d[(n + j, n + j)] += 1.0;
    }
    d
}

/// Builds the time-dependent feedback law by integrating the matrix value
/// equation backward, re-running from ever larger horizons until the
/// stored nodes stop moving.
///
/// The per-mode flows oscillate at the square roots of the eigenvalues, so
/// the default integration step is held under the fourth-order stability
/// bound for the fastest mode.
pub fn riccati_value(
    potential: &PotentialField,
    space: &ControlSpace,
    gamma: f64,
    opts: &RiccatiOptions,
) -> Result<FeedbackLaw> {
    let basis = space.basis();
    let n = basis.n_modes();
    if !(opts.beta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weight exponent {} must be positive",
            opts.beta
        )));
    }
    match opts.decay_certificate {
        Some(rate) if opts.beta > rate => {
            return Err(Error::Infeasible(format!(
                "weight exponent {} exceeds the certified decay rate {rate}",
                opts.beta
            )));
        }
        None if opts.beta >= gamma => {
            return Err(Error::Infeasible(format!(
                "weight exponent {} not below the damping exponent {gamma}; \
                 pass a decay certificate to go higher",
                opts.beta
            )));
        }
        _ => {}
    }
    if !potential.is_zero() && !potential.basis().same_as(basis) {
        return Err(Error::BasisMismatch);
    }
    if let Some(term) = &opts.terminal {
        if term.nrows() != 2 * n || term.ncols() != 2 * n {
            return Err(Error::InvalidArgument(format!(
                "terminal matrix is {}x{}, expected {}x{}",
                term.nrows(),
                term.ncols(),
                2 * n,
                2 * n
            )));
        }
    }
    if opts.max_extensions == 0 {
        return Err(Error::InvalidArgument(
            "need at least one extension round to certify convergence".into(),
        ));
    }
    let law_grid = TimeGrid::span(0.0, opts.horizon, opts.dt_store)?;
    let dt_target = if opts.dt_integrate > 0.0 {
        opts.dt_integrate
    } else {
        let fastest = basis.lambda(n - 1).sqrt();
        (2.0 / fastest).min(0.02)
    };
    let n_sub = (law_grid.dt / dt_target).ceil().max(1.0) as usize;
    let h = law_grid.dt / n_sub as f64;
    let cache = StiffnessCache::new(space, potential);
    let injection = space.injection();
    let lambda = &cache.lambda;

    let mut stored_prev: Option<Vec<DMatrix<f64>>> = None;
    let mut history = Vec::new();
    let mut converged = false;
    for round in 1..=opts.max_extensions + 1 {
        let horizon = law_grid.end() * round as f64;
        let steps = (law_grid.len - 1) * n_sub * round;
        let mut p = opts
            .terminal
            .clone()
            .unwrap_or_else(|| DMatrix::zeros(2 * n, 2 * n));
        let mut stored: Vec<Option<DMatrix<f64>>> = vec![None; law_grid.len];
        let capture = |stored: &mut Vec<Option<DMatrix<f64>>>, step: usize, p: &DMatrix<f64>| {
            let remaining = steps - step;
            if remaining % n_sub == 0 {
                let k = remaining / n_sub;
                if k < law_grid.len {
                    stored[k] = Some(p.clone());
                }
            }
        };
        capture(&mut stored, 0, &p);
        for step in 0..steps {
            let t = horizon - step as f64 * h;
            let m_here = cache.at(t);
            let m_mid = cache.at(t - 0.5 * h);
            let m_next = cache.at(t - h);
            let k1 = sweep_rhs(&p, &m_here, injection, gamma, opts.beta, lambda);
            let k2 = sweep_rhs(&(&p + &k1 * (0.5 * h)), &m_mid, injection, gamma, opts.beta, lambda);
            let k3 = sweep_rhs(&(&p + &k2 * (0.5 * h)), &m_mid, injection, gamma, opts.beta, lambda);
            let k4 = sweep_rhs(&(&p + &k3 * h), &m_next, injection, gamma, opts.beta, lambda);
            p += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
            let pt = p.transpose();
            p += &pt;
            p *= 0.5;
            let norm = p.norm();
            if !norm.is_finite() || norm > opts.blowup_ceiling {
                return Err(Error::RiccatiBlowUp { t: t - h, norm });
            }
            capture(&mut stored, step + 1, &p);
        }
        let stored: Vec<DMatrix<f64>> = stored
            .into_iter()
            .map(|s| s.expect("every law node is hit by the aligned sweep"))
            .collect();
        let (change, scale) = match &stored_prev {
            None => (f64::INFINITY, 1.0),
            Some(prev) => {
                let mut change: f64 = 0.0;
                let mut scale: f64 = 1.0;
                for (a, b) in prev.iter().zip(stored.iter()) {
                    change = change.max((a - b).norm());
                    scale = scale.max(b.norm());
                }
                (change, scale)
            }
        };
        history.push(ExtensionRecord {
            horizon,
            p0_norm: stored[0].norm(),
            change,
        });
        let done = change <= opts.riccati_tol * scale;
        stored_prev = Some(stored);
        if done {
            converged = true;
            break;
        }
    }
    let stored = stored_prev.expect("at least one round ran");
    if !converged {
        let last = history.last().expect("history non-empty");
        return Err(Error::NotConverged {
            what: "value sweep horizon extension".into(),
            residual: last.change,
            tol: opts.riccati_tol,
        });
    }

    let mut gains = Vec::with_capacity(law_grid.len);
    let mut growth: f64 = 0.0;
    let mut gain_bound: f64 = 0.0;
    for p in &stored {
        let k = -(injection.tr_mul(&p.rows(n, n).into_owned()));
        gain_bound = gain_bound.max(k.norm());
        let eigs = p.clone().symmetric_eigen().eigenvalues;
        growth = growth.max(eigs.iter().fold(0.0f64, |acc, e| acc.max(e.abs())));
        gains.push(k);
    }
    Ok(FeedbackLaw {
        schema_version: 1,
        grid: law_grid,
        beta: opts.beta,
        gamma,
        sigma: space.sigma(),
        m: space.dim(),
        n_modes: n,
        gains,
        value_p: stored,
        value_growth_constant: growth,
        gain_bound,
        extensions: history,
    })
}

/// Stationary solution of the shifted value equation through the invariant
/// subspace of the associated doubled matrix: eigenvalues with negative
/// real part are extracted, their eigenvectors recovered by shifted inverse
/// iteration, and the value matrix read off the subspace basis. Assumes the
/// stable eigenvalues are simple.
pub fn algebraic_riccati_oracle(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let nn = a.nrows();
    if a.ncols() != nn || c.nrows() != nn || c.ncols() != nn || b.nrows() != nn {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    let mut ham = DMatrix::zeros(2 * nn, 2 * nn);
    ham.view_mut((0, 0), (nn, nn)).copy_from(a);
    ham.view_mut((0, nn), (nn, nn)).copy_from(&(-(b * b.transpose())));
    ham.view_mut((nn, 0), (nn, nn)).copy_from(&(-c));
    ham.view_mut((nn, nn), (nn, nn)).copy_from(&(-a.transpose()));
    let eigs = ham.complex_eigenvalues();
    let stable: Vec<Complex<f64>> = eigs.iter().cloned().filter(|e| e.re < 0.0).collect();
    if stable.len() != nn {
        return Err(Error::Singular(format!(
            "{} stable directions for a {}-dimensional state",
            stable.len(),
            nn
        )));
    }
    let scale = ham.amax();
    let hc = ham.map(|x| Complex::new(x, 0.0));
    let eye = DMatrix::<Complex<f64>>::identity(2 * nn, 2 * nn);
    let mut subspace = DMatrix::<Complex<f64>>::zeros(2 * nn, nn);
    for (i, mu) in stable.iter().enumerate() {
        let shift = mu + Complex::new(1e-10 * scale, 1e-10 * scale);
        let lu = (&hc - &eye * shift).lu();
        let mut x = DVector::from_fn(2 * nn, |j, _| {
            Complex::new(
                (0.377 * (i + j + 1) as f64).sin(),
                (0.711 * (2 * i + j + 1) as f64).cos(),
            )
        });
        for _ in 0..5 {
            x = lu
                .solve(&x)
                .ok_or_else(|| Error::Singular("inverse iteration solve failed".into()))?;
            let nrm = x.norm();
            if !(nrm > 0.0) {
                return Err(Error::Singular("inverse iteration collapsed".into()));
            }
            x /= Complex::new(nrm, 0.0);
        }
        let residual = (&hc * &x - &x * *mu).norm();
        if residual > 1e-8 * scale {
            return Err(Error::NotConverged {
                what: format!("inverse iteration at eigenvalue {mu}"),
                residual,
                tol: 1e-8 * scale,
            });
        }
        subspace.set_column(i, &x);
    }
    let x_top = subspace.rows(0, nn).into_owned();
    let y_bot = subspace.rows(nn, nn).into_owned();
    let z = x_top
        .transpose()
        .lu()
        .solve(&y_bot.transpose())
        .ok_or_else(|| Error::Singular("invariant subspace not a graph".into()))?;
    let p_c = z.transpose();
    let imag = p_c.iter().fold(0.0f64, |acc, v| acc.max(v.im.abs()));
    let mut p = p_c.map(|v| v.re);
    let pt = p.transpose();
    p += &pt;
    p *= 0.5;
    let quad = &p * (b * b.transpose()) * &p;
    let res = a.transpose() * &p + &p * a - &quad + c;
    let res_scale = c.norm() + quad.norm() + 2.0 * (a.transpose() * &p).norm();
    let rel = res.norm() / res_scale.max(1e-300);
    if rel > 1e-9 || imag > 1e-9 * p.norm().max(1.0) {
        return Err(Error::NotConverged {
            what: "stationary value equation residual".into(),
            residual: rel.max(imag),
            tol: 1e-9,
        });
    }
    Ok(p)
}
