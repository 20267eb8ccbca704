//! Exhaustive temperature search, used as a gradient-free check on
//! [`optimize`](super::optimize).

use serde::{Deserialize, Serialize};

use super::loss::{objective_loss, Objective};
use super::params::ScalingParams;
use crate::error::{CalibError, Result};
use crate::prob::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub tau_min: f64,
    pub tau_max: f64,
    pub num_points: usize,
    pub log_spaced: bool,
}

impl GridSpec {
    pub fn log(tau_min: f64, tau_max: f64, num_points: usize) -> Self {
        Self {
            tau_min,
            tau_max,
            num_points,
            log_spaced: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min > 0.0) || !self.tau_min.is_finite() {
            return Err(CalibError::config("tau_min", "must be positive"));
        }
        if !(self.tau_max > self.tau_min) || !self.tau_max.is_finite() {
            return Err(CalibError::config("tau_max", "must exceed tau_min"));
        }
        if self.num_points < 2 {
            return Err(CalibError::config("num_points", "need at least 2 points"));
        }
        Ok(())
    }

    /// Grid points in ascending order; both endpoints are included exactly.
    pub fn points(&self) -> Vec<f64> {
        let n = self.num_points;
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| {
                if i == 0 {
                    self.tau_min
                } else if i == n - 1 {
                    self.tau_max
                } else if self.log_spaced {
                    let (a, b) = (self.tau_min.ln(), self.tau_max.ln());
                    (a + (b - a) * i as f64 / last).exp()
                } else {
                    self.tau_min + (self.tau_max - self.tau_min) * i as f64 / last
                }
            })
            .collect()
    }
}

/// Evaluates `objective` at every grid temperature and returns the
/// minimizing `(tau, loss)`. The smallest temperature wins ties.
pub fn grid_search_temperature(
    ds: &Dataset,
    objective: Objective,
    grid: &GridSpec,
) -> Result<(f64, f64)> {
    grid.validate()?;
    let mut best = (f64::NAN, f64::INFINITY);
    for tau in grid.points() {
        let loss = objective_loss(ds, objective, &ScalingParams::Scalar(tau))?;
        if loss < best.1 {
            best = (tau, loss);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::LogitRecord;

    #[test]
    fn points_hit_endpoints() {
        let g = GridSpec::log(0.1, 10.0, 5);
        let p = g.points();
        assert_eq!(p.len(), 5);
        assert_eq!(p[0], 0.1);
        assert_eq!(p[4], 10.0);
        assert!((p[2] - 1.0).abs() < 1e-12);
        let lin = GridSpec {
            log_spaced: false,
            ..g
        }
        .points();
        assert!((lin[1] - 2.575).abs() < 1e-12);
    }

    #[test]
    fn identity_dataset_picks_point_nearest_one() {
        let records = (0..10)
            .map(|i| {
                let z = vec![i as f64 * 0.3, 0.5, -1.0];
                LogitRecord::new(format!("r{i}"), z.clone(), z, None).unwrap()
            })
            .collect();
        let ds = Dataset::new(records).unwrap();
        let grid = GridSpec::log(0.1, 10.0, 500);
        let (tau, loss) = grid_search_temperature(&ds, Objective::Daca, &grid).unwrap();
        // 1.0 is not a grid point; the minimizer must be one of its two
        // neighbours (the loss is not symmetric, so either may win).
        let points = grid.points();
        let above = points.iter().position(|&t| t > 1.0).unwrap();
        assert!(
            tau == points[above] || tau == points[above - 1],
            "tau = {tau}"
        );
        assert!(loss < 1e-4);
    }

    #[test]
    fn rejects_bad_grid() {
        let r = LogitRecord::new("a", vec![1.0, 0.0], vec![1.0, 0.0], None).unwrap();
        let ds = Dataset::new(vec![r]).unwrap();
        assert!(
            grid_search_temperature(&ds, Objective::Naive, &GridSpec::log(0.0, 1.0, 10)).is_err()
        );
        assert!(
            grid_search_temperature(&ds, Objective::Naive, &GridSpec::log(0.1, 1.0, 1)).is_err()
        );
    }
}
