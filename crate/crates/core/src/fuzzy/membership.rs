use serde::{Deserialize, Serialize};

use super::FuzzyError;

/// Piecewise-linear membership function.
///
/// Degrees are linearly interpolated between consecutive vertices and are
/// zero outside the span of the first and last vertex. Two vertices may
/// share an `x` to express a vertical step; at such a point the larger of
/// the two degrees wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFunction {
    vertices: Vec<(f64, f64)>,
}

impl MembershipFunction {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self, FuzzyError> {
        if vertices.len() < 2 {
            return Err(FuzzyError::InvalidMembership(format!(
                "need at least 2 vertices, got {}",
                vertices.len()
            )));
        }
        for (i, &(x, mu)) in vertices.iter().enumerate() {
            if !x.is_finite() || !mu.is_finite() {
                return Err(FuzzyError::InvalidMembership(format!(
                    "vertex {i} is not finite"
                )));
            }
            if !(0.0..=1.0).contains(&mu) {
                return Err(FuzzyError::InvalidMembership(format!(
                    "vertex {i} has degree {mu} outside [0,1]"
                )));
            }
        }
        if vertices.windows(2).any(|w| w[1].0 < w[0].0) {
            return Err(FuzzyError::InvalidMembership(
                "vertex x coordinates must be non-decreasing".into(),
            ));
        }
        if vertices.iter().all(|&(_, mu)| mu == 0.0) {
            return Err(FuzzyError::InvalidMembership(
                "at least one vertex must have a positive degree".into(),
            ));
        }
        Ok(Self { vertices })
    }

    /// Left shoulder: 1 on `[lower, plateau_end]`, falling linearly to 0 at `zero_at`.
    pub fn left_shoulder(lower: f64, plateau_end: f64, zero_at: f64) -> Result<Self, FuzzyError> {
        Self::new(vec![(lower, 1.0), (plateau_end, 1.0), (zero_at, 0.0)])
    }

    /// Triangle with feet at `a` and `b` and apex at `peak`.
    pub fn triangle(a: f64, peak: f64, b: f64) -> Result<Self, FuzzyError> {
        Self::new(vec![(a, 0.0), (peak, 1.0), (b, 0.0)])
    }

    /// Right shoulder: 0 at `zero_at`, rising linearly to 1 at `one_at`, 1 up to `upper`.
    pub fn right_shoulder(zero_at: f64, one_at: f64, upper: f64) -> Result<Self, FuzzyError> {
        Self::new(vec![(zero_at, 0.0), (one_at, 1.0), (upper, 1.0)])
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// `(first x, last x)` of the vertex list.
    pub fn span(&self) -> (f64, f64) {
        (self.vertices[0].0, self.vertices[self.vertices.len() - 1].0)
    }

    pub fn degree(&self, x: f64) -> f64 {
        let (lo, hi) = self.span();
        if x < lo || x > hi {
            return 0.0;
        }
        let mut best = 0.0f64;
        for w in self.vertices.windows(2) {
            let (x0, m0) = w[0];
            let (x1, m1) = w[1];
            if x < x0 || x > x1 {
                continue;
            }
            let mu = if x == x0 {
                m0
            } else if x == x1 {
                m1
            } else {
                m0 + (m1 - m0) * (x - x0) / (x1 - x0)
            };
            best = best.max(mu);
            if x1 == x0 {
                best = best.max(m0.max(m1));
            }
        }
        best
    }
}

/// Degree of membership of `x` in `mf`. Zero outside the vertex span.
pub fn membership_degree(mf: &MembershipFunction, x: f64) -> f64 {
    mf.degree(x)
}
