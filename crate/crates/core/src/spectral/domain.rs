use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Geometry of the problem: a box domain, an observation origin `x0`
/// strictly outside its closure, and a collar width `delta`.
///
/// The controlled region is the set of points within `delta` of the part of
/// the boundary illuminated from `x0`, i.e. boundary points `y` with
/// `(y - x0, n_y) > 0` for the outward normal `n_y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainSpec {
    Interval {
        length: f64,
        x0: f64,
        delta: f64,
    },
    Rectangle {
        lengths: [f64; 2],
        x0: [f64; 2],
        delta: f64,
    },
}

impl DomainSpec {
    pub fn interval(length: f64, x0: f64, delta: f64) -> Result<DomainSpec> {
        let d = DomainSpec::Interval { length, x0, delta };
        d.validate()?;
        Ok(d)
    }

    pub fn rectangle(lengths: [f64; 2], x0: [f64; 2], delta: f64) -> Result<DomainSpec> {
        let d = DomainSpec::Rectangle { lengths, x0, delta };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DomainSpec::Interval { length, x0, delta } => {
                if !(length > 0.0) || !length.is_finite() {
                    return Err(Error::InvalidDomain(format!("length {length} must be > 0")));
                }
                if !(delta > 0.0) {
                    return Err(Error::InvalidDomain(format!("delta {delta} must be > 0")));
                }
                if (0.0..=length).contains(&x0) {
                    return Err(Error::InvalidDomain(format!(
                        "x0 = {x0} lies in the closed domain [0, {length}]"
                    )));
                }
            }
            DomainSpec::Rectangle { lengths, x0, delta } => {
                if lengths.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                    return Err(Error::InvalidDomain(format!(
                        "lengths {lengths:?} must be > 0"
                    )));
                }
                if !(delta > 0.0) {
                    return Err(Error::InvalidDomain(format!("delta {delta} must be > 0")));
                }
                let inside = (0.0..=lengths[0]).contains(&x0[0]) //
                    && (0.0..=lengths[1]).contains(&x0[1]);
                if inside {
                    return Err(Error::InvalidDomain(format!(
                        "x0 = {x0:?} lies in the closed domain"
                    )));
                }
            }
        }
        if self.illuminated_sides().is_empty() {
            return Err(Error::InvalidDomain(
                "no boundary face is illuminated from x0".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Rectangle { .. } => 2,
        }
    }

    pub fn delta(&self) -> f64 {
        match *self {
            DomainSpec::Interval { delta, .. } => delta,
            DomainSpec::Rectangle { delta, .. } => delta,
        }
    }

    /// Boundary faces with `(y - x0, n_y) > 0`. Faces of a box are flat, so
    /// each face is either fully illuminated or fully dark.
    ///
    /// Faces are labelled 0/1 for the low/high end of axis 0, then 2/3 for
    /// axis 1 in two dimensions.
    pub fn illuminated_sides(&self) -> Vec<usize> {
        let mut sides = Vec::new();
        match *self {
            DomainSpec::Interval { length, x0, .. } => {
                if x0 > 0.0 {
                    sides.push(0);
                }
                if x0 < length {
                    sides.push(1);
                }
            }
            DomainSpec::Rectangle { lengths, x0, .. } => {
                if x0[0] > 0.0 {
                    sides.push(0);
                }
                if x0[0] < lengths[0] {
                    sides.push(1);
                }
                if x0[1] > 0.0 {
                    sides.push(2);
                }
                if x0[1] < lengths[1] {
                    sides.push(3);
                }
            }
        }
        sides
    }

    /// Distance from an interior point to the illuminated boundary part.
    /// Points are given as `[x]` or `[x, y]`; extra coordinates are ignored.
    pub fn dist_to_illuminated(&self, p: [f64; 2]) -> f64 {
        let mut best = f64::INFINITY;
        for side in self.illuminated_sides() {
            let d = match *self {
                DomainSpec::Interval { length, .. } => match side {
                    0 => p[0],
                    _ => length - p[0],
                },
                DomainSpec::Rectangle { lengths, .. } => match side {
                    0 => p[0],
                    1 => lengths[0] - p[0],
                    2 => p[1],
                    _ => lengths[1] - p[1],
                },
            };
            best = best.min(d.abs());
        }
        best
    }

    /// Largest distance from `x0` to a point of the closed domain; attained
    /// at a corner.
    pub fn sup_dist_from_x0(&self) -> f64 {
        match *self {
            DomainSpec::Interval { length, x0, .. } => x0.abs().max((length - x0).abs()),
            DomainSpec::Rectangle { lengths, x0, .. } => {
                let mut best: f64 = 0.0;
                for cx in [0.0, lengths[0]] {
                    for cy in [0.0, lengths[1]] {
                        best = best.max(((cx - x0[0]).powi(2) + (cy - x0[1]).powi(2)).sqrt());
                    }
                }
                best
            }
        }
    }

    /// Shortest time after which the whole domain is reachable from `x0` at
    /// unit speed, both ways: `2 * sup |x - x0|`.
    pub fn t_min(&self) -> f64 {
        2.0 * self.sup_dist_from_x0()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn collar_sits_at_the_far_end() {
        let d = DomainSpec::interval(PI, -1.0, 0.4).unwrap();
        assert_eq!(d.illuminated_sides(), vec![1]);
        assert!((d.dist_to_illuminated([PI - 0.1, 0.0]) - 0.1).abs() < 1e-15);
        assert!((d.t_min() - 2.0 * (PI + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn x0_past_the_right_end_lights_the_left() {
        let d = DomainSpec::interval(1.0, 2.0, 0.2).unwrap();
        assert_eq!(d.illuminated_sides(), vec![0]);
        assert!((d.dist_to_illuminated([0.3, 0.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn x0_inside_is_rejected() {
        assert!(DomainSpec::interval(PI, 1.0, 0.4).is_err());
        assert!(DomainSpec::interval(PI, 0.0, 0.4).is_err());
        assert!(DomainSpec::interval(PI, PI, 0.4).is_err());
        assert!(DomainSpec::rectangle([1.0, 1.0], [0.5, 0.5], 0.1).is_err());
    }

    #[test]
    fn bad_extents_are_rejected() {
        assert!(DomainSpec::interval(0.0, -1.0, 0.4).is_err());
        assert!(DomainSpec::interval(PI, -1.0, 0.0).is_err());
        assert!(DomainSpec::rectangle([1.0, -2.0], [-1.0, 0.5], 0.1).is_err());
    }

    #[test]
    fn rectangle_illumination_and_tmin() {
        let d = DomainSpec::rectangle([1.0, 2.0], [-0.5, 0.7], 0.1).unwrap();
        // Left of the box, inside the vertical band: right, bottom, top faces.
        assert_eq!(d.illuminated_sides(), vec![1, 2, 3]);
        let far = ((1.0f64 + 0.5).powi(2) + (2.0f64 - 0.7).powi(2)).sqrt();
        assert!((d.t_min() - 2.0 * far).abs() < 1e-14);
        // Distance to the nearest lit face.
        assert!((d.dist_to_illuminated([0.9, 1.0]) - 0.1).abs() < 1e-15);
        assert!((d.dist_to_illuminated([0.5, 0.05]) - 0.05).abs() < 1e-15);
    }
}
