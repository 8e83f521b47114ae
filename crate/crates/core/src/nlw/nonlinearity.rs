use crate::error::{Error, Result};

type Scalar = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Scalar nonlinearity `f` with its first two derivatives and the
/// antiderivative `F` (normalised to `F(0) = 0`).
///
/// `degree` is the polynomial degree used to size dealiasing checks; for
/// non-polynomial terms it is a hint and the collocation projection is
/// spectrally accurate instead of exact.
pub struct Nonlinearity {
    name: String,
    degree: usize,
    f: Scalar,
    df: Scalar,
    ddf: Scalar,
    anti: Scalar,
}

impl Nonlinearity {
    /// `f(u) = sum_k coeffs[k] u^(k+1)`; the missing constant term keeps
    /// `f(0) = 0` structural.
    pub fn polynomial(name: &str, coeffs: &[f64]) -> Nonlinearity {
        let mut c = coeffs.to_vec();
        while c.last() == Some(&0.0) {
            c.pop();
        }
        let degree = c.len().max(1);
        let horner = |c: &[f64], u: f64| {
            let mut acc = 0.0;
            for &ck in c.iter().rev() {
                acc = acc * u + ck;
            }
            acc * u
        };
        let cf = c.clone();
        let cd: Vec<f64> = c.iter().enumerate().map(|(k, ck)| (k + 1) as f64 * ck).collect();
        let cdd: Vec<f64> = c
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, ck)| ((k + 1) * k) as f64 * ck)
            .collect();
        let ca: Vec<f64> = c.iter().enumerate().map(|(k, ck)| ck / (k + 2) as f64).collect();
        Nonlinearity {
            name: name.into(),
            degree,
            f: Box::new(move |u| horner(&cf, u)),
            // df has a constant term: sum (k+1) c_k u^k.
            df: Box::new(move |u| {
                let mut acc = 0.0;
                for &ck in cd.iter().rev() {
                    acc = acc * u + ck;
                }
                acc
            }),
            ddf: Box::new(move |u| {
                let mut acc = 0.0;
                for &ck in cdd.iter().rev() {
                    acc = acc * u + ck;
                }
                acc
            }),
            // F = sum c_k u^(k+2) / (k+2) = u^2 * horner-like sum.
            anti: Box::new(move |u| {
                let mut acc = 0.0;
                for &ck in ca.iter().rev() {
                    acc = acc * u + ck;
                }
                acc * u * u
            }),
        }
    }

    pub fn cubic() -> Nonlinearity {
        Nonlinearity::polynomial("cubic", &[0.0, 0.0, 1.0])
    }

    pub fn zero() -> Nonlinearity {
        Nonlinearity::polynomial("zero", &[])
    }

    /// Fully custom tables; `degree_hint` sizes the dealiasing check.
    pub fn custom(
        name: &str,
        degree_hint: usize,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
        ddf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        anti: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Nonlinearity {
        Nonlinearity {
            name: name.into(),
            degree: degree_hint.max(1),
            f: Box::new(f),
            df: Box::new(df),
            ddf: Box::new(ddf),
            anti: Box::new(anti),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn eval(&self, u: f64) -> f64 {
        (self.f)(u)
    }

    pub fn derivative(&self, u: f64) -> f64 {
        (self.df)(u)
    }

    pub fn second_derivative(&self, u: f64) -> f64 {
        (self.ddf)(u)
    }

    /// Antiderivative `F(u)`, the potential-energy density.
    pub fn energy_density(&self, u: f64) -> f64 {
        (self.anti)(u)
    }
}

impl std::fmt::Debug for Nonlinearity {
    fn fmt(&self, fo: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fo.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("degree", &self.degree)
            .finish()
    }
}

/// Minimal constants of the structural inequalities on `[-range, range]`,
/// measured by dense sampling.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NonlinearityCertificate {
    pub range: f64,
    pub samples: usize,
    /// `|f'(u)| <= c_growth (1 + u^2)`.
    pub c_growth: f64,
    /// `F(u) >= -c_anti_lower`.
    pub c_anti_lower: f64,
    /// `f(u) u >= c_ratio F(u) - c_sign`; `c_ratio` is fixed at 1.
    pub c_ratio: f64,
    pub c_sign: f64,
    /// `f'(u) >= -c_derivative_lower`.
    pub c_derivative_lower: f64,
    /// `|f''(u)| <= c_second (1 + |u|)`.
    pub c_second: f64,
}

const SAMPLES: usize = 100_000;
/// A constant that grows by more than this factor when the range doubles
/// has not saturated, and the inequality is treated as failing globally.
const SATURATION: f64 = 1.8;

struct Constants {
    growth: (f64, f64),
    anti_lower: (f64, f64),
    sign: (f64, f64),
    d_lower: (f64, f64),
    second: (f64, f64),
}

fn scan(f: &Nonlinearity, range: f64) -> Constants {
    let mut c = Constants {
        growth: (0.0, 0.0),
        anti_lower: (0.0, 0.0),
        sign: (0.0, 0.0),
        d_lower: (0.0, 0.0),
        second: (0.0, 0.0),
    };
    let track = |slot: &mut (f64, f64), value: f64, u: f64| {
        if value > slot.0 {
            *slot = (value, u);
        }
    };
    for i in 0..SAMPLES {
        let u = -range + 2.0 * range * i as f64 / (SAMPLES - 1) as f64;
        let fu = f.eval(u);
        let dfu = f.derivative(u);
        let ddfu = f.second_derivative(u);
        let anti = f.energy_density(u);
        track(&mut c.growth, dfu.abs() / (1.0 + u * u), u);
        track(&mut c.anti_lower, -anti, u);
        track(&mut c.sign, anti - fu * u, u);
        track(&mut c.d_lower, -dfu, u);
        track(&mut c.second, ddfu.abs() / (1.0 + u.abs()), u);
    }
    c
}

fn saturated(near: f64, far: f64) -> bool {
    far <= SATURATION * near + 1e-8 * (1.0 + near)
}

/// Measures the structural constants of `f` on `[-range, range]` and checks
/// that they have saturated, i.e. do not keep growing when the range
/// doubles. A constant still growing marks the corresponding global
/// inequality as unsatisfiable and the nonlinearity is rejected, naming the
/// first failing inequality and its worst sample point.
///
/// Derivative tables are cross-checked against central finite differences
/// before the scan, so an inconsistent `f'`, `f''` or `F` is caught here
/// rather than corrupting downstream linearisations.
pub fn validate_nonlinearity(f: &Nonlinearity, range: f64) -> Result<NonlinearityCertificate> {
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "sampling range {range} must be positive and finite"
        )));
    }
    if f.eval(0.0).abs() > 1e-12 {
        return Err(Error::Infeasible(format!(
            "f(0) = {} violates f(0) = 0",
            f.eval(0.0)
        )));
    }
    for i in 0..21 {
        let u = -range + 2.0 * range * i as f64 / 20.0;
        let h = 1e-5 * (1.0 + u.abs());
        let fd_f = (f.eval(u + h) - f.eval(u - h)) / (2.0 * h);
        let fd_df = (f.derivative(u + h) - f.derivative(u - h)) / (2.0 * h);
        let fd_anti = (f.energy_density(u + h) - f.energy_density(u - h)) / (2.0 * h);
        let checks = [
            (f.derivative(u), fd_f, "f' against f"),
            (f.second_derivative(u), fd_df, "f'' against f'"),
            (f.eval(u), fd_anti, "f against F"),
        ];
        for (claimed, measured, what) in checks {
            if (claimed - measured).abs() > 1e-4 * (1.0 + claimed.abs()) {
                return Err(Error::Infeasible(format!(
                    "derivative table inconsistent: {what} at u = {u} gives {claimed}, \
                     finite difference {measured}"
                )));
            }
        }
    }
    let near = scan(f, range);
    let far = scan(f, 2.0 * range);
    let failures = [
        (
            near.anti_lower,
            far.anti_lower,
            "antiderivative lower bound F(u) >= -C",
        ),
        (near.d_lower, far.d_lower, "derivative lower bound f'(u) >= -C"),
        (near.sign, far.sign, "sign condition f(u) u >= F(u) - C"),
        (near.growth, far.growth, "growth bound |f'(u)| <= C (1 + u^2)"),
        (
            near.second,
            far.second,
            "second-derivative bound |f''(u)| <= C (1 + |u|)",
        ),
    ];
    for (n, f2, label) in failures {
        if !saturated(n.0, f2.0) {
            return Err(Error::Infeasible(format!(
                "{label} fails: constant {} on [-{range}, {range}] grows to {} on the doubled \
                 range (worst at u = {})",
                n.0, f2.0, f2.1
            )));
        }
    }
    Ok(NonlinearityCertificate {
        range,
        samples: SAMPLES,
        c_growth: near.growth.0,
        c_anti_lower: near.anti_lower.0,
        c_ratio: 1.0,
        c_sign: near.sign.0,
        c_derivative_lower: near.d_lower.0,
        c_second: near.second.0,
    })
}
