//! Parallel, reproducible Monte Carlo estimation of the MAP misclassification
//! probability.
//!
//! Trials are split into fixed-size chunks; chunk `c` draws from a generator
//! seeded by `derive_seed(seed, [c])`, and chunk error counts are summed. The
//! result is therefore identical for any worker count or scheduling order.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bounds::{ProjectedModel, UnionBoundVariant};
use crate::classifier::{log_sum_exp, ClassifierContext};
use crate::curve::{check_grid, CurveRow, ErrorCurve};
use crate::error::{Error, Result};
use crate::gmm::{draw_class, GmmModel};
use crate::measurement::{draw_measurement_matrix, MeasurementSetup};
use crate::seeds::{self, derive_seed, stream};

pub const DEFAULT_CHUNK_SIZE: u64 = 4096;

/// Below this many errors the normal-approximation interval is replaced by
/// the Wilson score interval.
const WILSON_ERROR_THRESHOLD: u64 = 20;
const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    pub trials: u64,
    pub errors: u64,
    pub p_hat: f64,
    /// Half-width of a 95% interval around `p_hat`.
    pub ci_half_width: f64,
    pub seed: u64,
}

impl McResult {
    pub fn from_counts(trials: u64, errors: u64, seed: u64) -> Self {
        assert!(trials > 0 && errors <= trials);
        let p_hat = errors as f64 / trials as f64;
        Self {
            trials,
            errors,
            p_hat,
            ci_half_width: confidence_half_width(trials, errors),
            seed,
        }
    }

    /// Interval `[p̂ − h, p̂ + h]`, clipped to `[0, 1]`.
    pub fn interval(&self) -> (f64, f64) {
        (
            (self.p_hat - self.ci_half_width).max(0.0),
            (self.p_hat + self.ci_half_width).min(1.0),
        )
    }
}

/// 95% half-width: normal approximation, or the Wilson score interval's
/// half-width when fewer than 20 errors were observed.
pub fn confidence_half_width(trials: u64, errors: u64) -> f64 {
    let n = trials as f64;
    let p = errors as f64 / n;
    if errors >= WILSON_ERROR_THRESHOLD {
        Z_95 * (p * (1.0 - p) / n).sqrt()
    } else {
        let z2 = Z_95 * Z_95;
        Z_95 / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt()
    }
}

/// Per-class sampling data pushed through `Φ`: `Φμ_i` and `ΦB_i` where
/// `Σ_i = B_i B_iᵀ`.
struct Simulator<'a> {
    model: &'a GmmModel,
    ctx: ClassifierContext,
    projected_factors: Vec<DMatrix<f64>>,
    noise_sd: f64,
}

impl<'a> Simulator<'a> {
    fn new(model: &'a GmmModel, setup: &MeasurementSetup) -> Result<Self> {
        let ctx = ClassifierContext::build(model, setup)?;
        let projected_factors = model.classes().iter().map(|c| setup.phi() * c.factor()).collect();
        Ok(Self {
            model,
            ctx,
            projected_factors,
            noise_sd: setup.noise_variance().sqrt(),
        })
    }

    /// Draws in the same order as `sample_source` followed by `measure`:
    /// class, then one normal per factor column, then one per measurement.
    fn run_chunk(&self, trials: u64, seed: u64) -> u64 {
        let m = self.ctx.m();
        let mut rng = seeds::rng_from(seed);
        let mut y = vec![0.0; m];
        let mut scratch = vec![0.0; m];
        let mut errors = 0;
        for _ in 0..trials {
            let class = draw_class(self.model, &mut rng);
            y.copy_from_slice(self.ctx.projected_mean(class).as_slice());
            let factor = &self.projected_factors[class];
            for col in 0..factor.ncols() {
                let z: f64 = rng.sample(StandardNormal);
                for (yv, f) in y.iter_mut().zip(factor.column(col).iter()) {
                    *yv += z * f;
                }
            }
            for yv in y.iter_mut() {
                *yv += self.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
            if self.ctx.classify_slice(&y, &mut scratch) != class {
                errors += 1;
            }
        }
        errors
    }
}

/// Estimates `P_err` of the MAP classifier with [`DEFAULT_CHUNK_SIZE`]
/// chunks on the current rayon pool.
pub fn estimate_error(model: &GmmModel, setup: &MeasurementSetup, trials: u64, seed: u64) -> Result<McResult> {
    estimate_error_chunked(model, setup, trials, seed, DEFAULT_CHUNK_SIZE)
}

pub fn estimate_error_chunked(
    model: &GmmModel,
    setup: &MeasurementSetup,
    trials: u64,
    seed: u64,
    chunk_size: u64,
) -> Result<McResult> {
    if trials == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs at least one trial".into()));
    }
    if chunk_size == 0 {
        return Err(Error::InvalidArgument("chunk size must be positive".into()));
    }
    let sim = Simulator::new(model, setup)?;
    let chunks = trials.div_ceil(chunk_size);
    let errors: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = chunk_size.min(trials - c * chunk_size);
            sim.run_chunk(len, derive_seed(seed, &[c]))
        })
        .sum();
    Ok(McResult::from_counts(trials, errors, seed))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    /// Trials per grid point and measurement matrix; 0 skips simulation.
    pub trials: u64,
    pub seed: u64,
    pub variant: UnionBoundVariant,
}

/// Bound and Monte Carlo curve for one `Φ` drawn from `seed`.
pub fn sweep_error_curve(
    model: &GmmModel,
    m: usize,
    sigma_grid: &[f64],
    trials: u64,
    seed: u64,
) -> Result<ErrorCurve> {
    let phi = draw_measurement_matrix(m, model.ambient_dim(), seeds::phi_seed(seed, 0));
    let options = SweepOptions {
        trials,
        seed,
        variant: UnionBoundVariant::default(),
    };
    sweep_with_matrices(model, &[phi], sigma_grid, &options)
}

/// Sweeps the grid with explicit measurement matrices (all with `M` rows).
///
/// With several matrices the bound is averaged and Monte Carlo counts are
/// pooled across them.
pub fn sweep_with_matrices(
    model: &GmmModel,
    phis: &[DMatrix<f64>],
    sigma_grid: &[f64],
    options: &SweepOptions,
) -> Result<ErrorCurve> {
    check_grid(sigma_grid)?;
    let m = match phis.first() {
        Some(phi) => phi.nrows(),
        None => return Err(Error::InvalidArgument("no measurement matrix given".into())),
    };
    if phis.iter().any(|p| p.nrows() != m) {
        return Err(Error::InvalidArgument("measurement matrices differ in row count".into()));
    }
    let projected: Vec<ProjectedModel> = phis
        .iter()
        .map(|phi| ProjectedModel::new(model, phi))
        .collect::<Result<_>>()?;
    let ln_draws = (phis.len() as f64).ln();

    let mut rows = Vec::with_capacity(sigma_grid.len());
    for (g, &sigma2) in sigma_grid.iter().enumerate() {
        let ln_bounds: Vec<f64> = projected
            .iter()
            .map(|p| p.ln_union_bound(sigma2, options.variant))
            .collect::<Result<_>>()?;
        let ln_bound = log_sum_exp(&ln_bounds) - ln_draws;

        let mc = if options.trials > 0 {
            let point_seed = derive_seed(options.seed, &[stream::MONTE_CARLO, m as u64, g as u64]);
            let mut errors = 0;
            for (d, phi) in phis.iter().enumerate() {
                let setup = MeasurementSetup::new(phi.clone(), sigma2)?;
                errors += estimate_error(model, &setup, options.trials, derive_seed(point_seed, &[d as u64]))?.errors;
            }
            Some(McResult::from_counts(options.trials * phis.len() as u64, errors, point_seed))
        } else {
            None
        };
        rows.push(CurveRow { sigma2, ln_bound, mc });
    }
    Ok(ErrorCurve {
        m,
        variant: options.variant,
        rows,
    })
}
