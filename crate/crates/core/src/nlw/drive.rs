use crate::error::{Error, Result};
use crate::waveop::TimeGrid;
use nalgebra::DVector;

enum DriveData {
    Zero,
    /// Separable `a(t) phi`, with `phi` in modal coefficients.
    Profile {
        coeffs: DVector<f64>,
        amplitude: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    },
    /// Modal samples at grid nodes, linearly interpolated and clamped
    /// outside the grid.
    Sampled {
        grid: TimeGrid,
        frames: Vec<DVector<f64>>,
    },
    TimeFn(Box<dyn Fn(f64) -> DVector<f64> + Send + Sync>),
}

/// External forcing of the velocity equation as a time-dependent modal
/// coefficient vector.
pub struct Drive {
    n: usize,
    data: DriveData,
}

impl Drive {
    pub fn zero(n: usize) -> Drive {
        Drive {
            n,
            data: DriveData::Zero,
        }
    }

    pub fn profile(
        coeffs: DVector<f64>,
        amplitude: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Drive {
        Drive {
            n: coeffs.len(),
            data: DriveData::Profile {
                coeffs,
                amplitude: Box::new(amplitude),
            },
        }
    }

    pub fn constant(coeffs: DVector<f64>) -> Drive {
        Drive::profile(coeffs, |_| 1.0)
    }

    pub fn sampled(grid: TimeGrid, frames: Vec<DVector<f64>>) -> Result<Drive> {
        if frames.len() != grid.len {
            return Err(Error::GridMismatch(format!(
                "{} drive frames for {} grid nodes",
                frames.len(),
                grid.len
            )));
        }
        let n = frames[0].len();
        if frames.iter().any(|f| f.len() != n) {
            return Err(Error::GridMismatch("drive frames differ in length".into()));
        }
        if frames.iter().any(|f| f.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument("drive frames contain non-finite values".into()));
        }
        Ok(Drive {
            n,
            data: DriveData::Sampled { grid, frames },
        })
    }

    /// Arbitrary time dependence; `f(t)` must return vectors of length `n`.
    pub fn time_fn(n: usize, f: impl Fn(f64) -> DVector<f64> + Send + Sync + 'static) -> Drive {
        Drive {
            n,
            data: DriveData::TimeFn(Box::new(f)),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.data, DriveData::Zero)
    }

    pub fn at(&self, t: f64) -> DVector<f64> {
        match &self.data {
            DriveData::Zero => DVector::zeros(self.n),
            DriveData::Profile { coeffs, amplitude } => coeffs * amplitude(t),
            DriveData::Sampled { grid, frames } => {
                let (k, a) = grid.locate(t);
                if a == 0.0 {
                    frames[k].clone()
                } else {
                    &frames[k] * (1.0 - a) + &frames[k + 1] * a
                }
            }
            DriveData::TimeFn(f) => {
                let v = f(t);
                assert_eq!(v.len(), self.n, "drive closure returned a wrong length");
                v
            }
        }
    }
}

impl std::fmt::Debug for Drive {
    fn fmt(&self, fo: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.data {
            DriveData::Zero => "zero",
            DriveData::Profile { .. } => "profile",
            DriveData::Sampled { .. } => "sampled",
            DriveData::TimeFn(_) => "time-fn",
        };
        fo.debug_struct("Drive").field("n", &self.n).field("kind", &kind).finish()
    }
}
