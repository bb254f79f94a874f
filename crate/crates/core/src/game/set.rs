use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Axis-aligned box `{ z : lower <= z <= upper }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox")]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<RawBox> for BoxSet {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        Self::new(raw.lower, raw.upper)
    }
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("box upper bound", lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidArgument("box must have at least one coordinate".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidArgument(format!(
                    "empty box in coordinate {j}: [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The same interval `[lower, upper]` in every one of `dim` coordinates.
    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
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

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(p, (lo, hi))| *lo <= *p && *p <= *hi)
    }

    /// Euclidean projection onto the box (coordinate-wise clamp).
    pub fn project(&self, point: &[f64]) -> Result<Vec<f64>> {
        check_dim("projected point", self.dim(), point.len())?;
        let mut out = point.to_vec();
        self.project_in_place(&mut out);
        Ok(out)
    }

    /// Clamp `point` into the box. The caller guarantees matching dimensions.
    pub(crate) fn project_in_place(&self, point: &mut [f64]) {
        debug_assert_eq!(point.len(), self.dim());
        for ((p, lo), hi) in point.iter_mut().zip(&self.lower).zip(&self.upper) {
            *p = p.max(*lo).min(*hi);
        }
    }

    /// Euclidean distance from `point` to the box.
    pub fn distance(&self, point: &[f64]) -> Result<f64> {
        check_dim("point", self.dim(), point.len())?;
        Ok(self.distance_unchecked(point))
    }

    pub(crate) fn distance_unchecked(&self, point: &[f64]) -> f64 {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(p, (lo, hi))| {
                let gap = if p < lo {
                    lo - p
                } else if p > hi {
                    p - hi
                } else {
                    0.0
                };
                gap * gap
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Box grown by `radius` in every coordinate. Contains the Minkowski sum
    /// of this box and the Euclidean ball of that radius.
    pub fn enlarged(&self, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "enlargement radius must be nonnegative, got {radius}"
            )));
        }
        Ok(Self {
            lower: self.lower.iter().map(|v| v - radius).collect(),
            upper: self.upper.iter().map(|v| v + radius).collect(),
        })
    }

    /// Cartesian product of boxes, in order.
    pub fn product<'a>(sets: impl IntoIterator<Item = &'a BoxSet>) -> Result<Self> {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for set in sets {
            lower.extend_from_slice(&set.lower);
            upper.extend_from_slice(&set.upper);
        }
        Self::new(lower, upper)
    }

    /// Largest Euclidean norm over the box, attained at a corner.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| lo.abs().max(hi.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}
