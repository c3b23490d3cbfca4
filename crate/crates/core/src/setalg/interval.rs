use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl IntervalBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                op: "IntervalBox::new",
                left: format!("lower of dimension {}", lower.len()),
                right: format!("upper of dimension {}", upper.len()),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidArgument("interval box with lower > upper".into()));
        }
        Ok(Self { lower, upper })
    }

    pub(crate) fn new_unchecked(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Self { lower, upper }
    }

    /// Smallest box containing all points.
    pub fn hull_of_points<'a>(points: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut it = points.into_iter();
        let first = it.next().ok_or(Error::EmptyInput("hull of no points"))?;
        let mut lower = first.to_vec();
        let mut upper = first.to_vec();
        for p in it {
            if p.len() != lower.len() {
                return Err(Error::DimensionMismatch {
                    op: "hull_of_points",
                    left: format!("dimension {}", lower.len()),
                    right: format!("dimension {}", p.len()),
                });
            }
            for i in 0..p.len() {
                lower[i] = lower[i].min(p[i]);
                upper[i] = upper[i].max(p[i]);
            }
        }
        Ok(Self { lower, upper })
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

    pub fn widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    pub fn mean_width(&self) -> f64 {
        let w = self.widths();
        w.iter().sum::<f64>() / w.len() as f64
    }

    pub fn contains(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }

    pub fn contains_box(&self, other: &IntervalBox, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| other.lower[i] >= self.lower[i] - tol && other.upper[i] <= self.upper[i] + tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inverted_bounds() {
        assert!(IntervalBox::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn hull_of_points_is_monotone() {
        let pts = [vec![0.0, 1.0], vec![2.0, -1.0]];
        let small = IntervalBox::hull_of_points(pts.iter().map(Vec::as_slice)).unwrap();
        let more = [vec![0.0, 1.0], vec![2.0, -1.0], vec![3.0, 0.0]];
        let big = IntervalBox::hull_of_points(more.iter().map(Vec::as_slice)).unwrap();
        assert!(big.contains_box(&small, 0.0));
        assert_eq!(small.widths(), vec![2.0, 2.0]);
    }
}
