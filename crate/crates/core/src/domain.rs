//! Open rectangular parameter domains with isolated excluded points.
//!
//! A domain is a product of open intervals, minus a finite list of
//! interior points (and, for product domains, points of a factor, which
//! exclude a whole slice). Membership is strict: boundary points are
//! outside, excluded points are matched coordinate for coordinate.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ExcludedPoint {
    /// First coordinate the point constrains.
    pub offset: usize,
    /// Values for coordinates offset .. offset + coords.len().
    pub coords: Vec<f64>,
}

impl ExcludedPoint {
    fn matches(&self, theta: &[f64]) -> bool {
        theta[self.offset..self.offset + self.coords.len()]
            .iter()
            .zip(&self.coords)
            .all(|(a, b)| a == b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
    excluded: Vec<ExcludedPoint>,
}

impl ParameterDomain {
    /// Open rectangle with the given bounds. Infinite endpoints allowed.
    pub fn rectangle(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Domain(format!(
                "bounds must be non-empty and equal length, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo >= hi {
                return Err(Error::Domain(format!(
                    "invalid interval ({lo}, {hi}) at coordinate {i}"
                )));
            }
        }
        Ok(ParameterDomain {
            lower,
            upper,
            excluded: Vec::new(),
        })
    }

    /// One-dimensional open interval.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        ParameterDomain::rectangle(vec![lo], vec![hi])
    }

    /// Remove an interior point from the domain.
    pub fn exclude(mut self, point: Vec<f64>) -> Result<Self> {
        if point.len() != self.dim() {
            return Err(Error::Domain(format!(
                "excluded point has dimension {}, domain has {}",
                point.len(),
                self.dim()
            )));
        }
        if !self.inside_rectangle(&point) {
            return Err(Error::Domain(format!(
                "excluded point {point:?} is not strictly inside the rectangle"
            )));
        }
        self.excluded.push(ExcludedPoint {
            offset: 0,
            coords: point,
        });
        Ok(self)
    }

    /// Remove the slice `coords` starting at coordinate `offset`; points
    /// matching it on that slice are outside the domain.
    pub fn exclude_slice(mut self, offset: usize, coords: Vec<f64>) -> Result<Self> {
        if offset + coords.len() > self.dim() || coords.is_empty() {
            return Err(Error::Domain(format!(
                "excluded slice at offset {offset} with length {} does not fit dimension {}",
                coords.len(),
                self.dim()
            )));
        }
        let inside = coords.iter().enumerate().all(|(k, &c)| {
            c.is_finite() && self.lower[offset + k] < c && c < self.upper[offset + k]
        });
        if !inside {
            return Err(Error::Domain(format!(
                "excluded slice {coords:?} is not strictly inside its coordinate ranges"
            )));
        }
        self.excluded.push(ExcludedPoint { offset, coords });
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn excluded_points(&self) -> &[ExcludedPoint] {
        &self.excluded
    }

    fn inside_rectangle(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&t, (&lo, &hi))| t.is_finite() && lo < t && t < hi)
    }

    /// Strict membership: inside the open rectangle and not excluded.
    pub fn contains(&self, theta: &[f64]) -> bool {
        self.inside_rectangle(theta) && !self.excluded.iter().any(|e| e.matches(theta))
    }

    /// Membership check that reports which precondition failed.
    pub fn check_contains(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::Domain(format!(
                "point has dimension {}, domain has {}",
                theta.len(),
                self.dim()
            )));
        }
        if !self.inside_rectangle(theta) {
            return Err(Error::Domain(format!(
                "point {theta:?} is outside the open rectangle"
            )));
        }
        if self.excluded.iter().any(|e| e.matches(theta)) {
            return Err(Error::Domain(format!("point {theta:?} is excluded")));
        }
        Ok(())
    }

    /// True when theta +- step stays inside along every coordinate.
    pub fn admits_steps(&self, theta: &[f64], steps: &[f64]) -> bool {
        theta
            .iter()
            .zip(steps)
            .zip(self.lower.iter().zip(&self.upper))
            .all(|((&t, &h), (&lo, &hi))| t - h > lo && t + h < hi)
    }

    /// Product domain; excluded points of each factor exclude slices.
    pub fn product(&self, other: &ParameterDomain) -> ParameterDomain {
        let mut lower = self.lower.clone();
        lower.extend_from_slice(&other.lower);
        let mut upper = self.upper.clone();
        upper.extend_from_slice(&other.upper);
        let mut excluded = self.excluded.clone();
        for e in &other.excluded {
            excluded.push(ExcludedPoint {
                offset: e.offset + self.dim(),
                coords: e.coords.clone(),
            });
        }
        ParameterDomain {
            lower,
            upper,
            excluded,
        }
    }

    /// Finite bounds shrunk inward by a relative margin, for bracketing.
    pub fn bracket(&self, margin: f64) -> Result<(f64, f64)> {
        if self.dim() != 1 {
            return Err(Error::Unsupported("bracketing is one-dimensional".into()));
        }
        let (lo, hi) = (self.lower[0], self.upper[0]);
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Domain(format!(
                "bracketing needs finite bounds, domain is ({lo}, {hi})"
            )));
        }
        let width = hi - lo;
        Ok((lo + margin * width, hi - margin * width))
    }
}
