//! Error-probability curves over a noise-variance grid.

use crate::bounds::UnionBoundVariant;
use crate::error::{Error, Result};
use crate::montecarlo::McResult;

/// One grid point. The bound is kept as its natural log because bounds in
/// the exponential regime underflow `f64` long before the grid ends.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub sigma2: f64,
    pub ln_bound: f64,
    pub mc: Option<McResult>,
}

impl CurveRow {
    pub fn bound(&self) -> f64 {
        self.ln_bound.exp()
    }

    /// Monte Carlo estimate above `bound + 3 · ci_half_width`.
    pub fn violates_bound(&self) -> bool {
        self.mc
            .as_ref()
            .is_some_and(|mc| mc.p_hat > self.bound() + 3.0 * mc.ci_half_width)
    }
}

/// Rows for one `(model, M)` configuration, in grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCurve {
    pub m: usize,
    pub variant: UnionBoundVariant,
    pub rows: Vec<CurveRow>,
}

impl ErrorCurve {
    /// `(σ², ln bound)` pairs.
    pub fn bound_points(&self) -> Vec<(f64, f64)> {
        self.rows.iter().map(|r| (r.sigma2, r.ln_bound)).collect()
    }

    /// `(σ², ln p̂)` for rows whose Monte Carlo estimate is at least
    /// `min_p_hat`.
    pub fn mc_points(&self, min_p_hat: f64) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter_map(|r| r.mc.as_ref().map(|mc| (r.sigma2, mc.p_hat)))
            .filter(|&(_, p)| p > 0.0 && p >= min_p_hat)
            .map(|(s, p)| (s, p.ln()))
            .collect()
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violates_bound()).count()
    }
}

/// `points_per_decade` log-spaced values from `10^start_decade` down to
/// `10^stop_decade`, both ends included.
pub fn log_grid(start_decade: i32, stop_decade: i32, points_per_decade: u32) -> Result<Vec<f64>> {
    if start_decade <= stop_decade {
        return Err(Error::InvalidArgument(format!(
            "grid must run from a larger to a smaller decade, got {start_decade} to {stop_decade}"
        )));
    }
    if points_per_decade == 0 {
        return Err(Error::InvalidArgument("points per decade must be positive".into()));
    }
    let steps = (start_decade - stop_decade) as u32 * points_per_decade;
    Ok((0..=steps)
        .map(|k| 10f64.powf(start_decade as f64 - k as f64 / points_per_decade as f64))
        .collect())
}

pub fn check_grid(sigma_grid: &[f64]) -> Result<()> {
    if sigma_grid.is_empty() {
        return Err(Error::InvalidArgument("noise grid is empty".into()));
    }
    if sigma_grid.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidArgument("noise variances must be positive and finite".into()));
    }
    if sigma_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("noise grid must be strictly decreasing".into()));
    }
    Ok(())
}
