//! Exact MAP classification of compressive measurements, in the log domain.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::linalg::SpdFactor;
use crate::measurement::MeasurementSetup;

/// Per-class Cholesky factors of `ΦΣ_iΦᵀ + σ²I`, projected means `Φμ_i` and
/// log priors for one `(model, setup)` pair.
#[derive(Debug, Clone)]
pub struct ClassifierContext {
    projected_means: Vec<DVector<f64>>,
    factors: Vec<SpdFactor>,
    log_priors: Vec<f64>,
    fingerprint: u64,
}

impl ClassifierContext {
    pub fn build(model: &GmmModel, setup: &MeasurementSetup) -> Result<Self> {
        setup.require_noise()?;
        if model.ambient_dim() != setup.n_ambient() {
            return Err(Error::DimensionMismatch {
                expected: setup.n_ambient(),
                actual: model.ambient_dim(),
            });
        }
        let phi = setup.phi();
        let mut projected_means = Vec::with_capacity(model.num_classes());
        let mut factors = Vec::with_capacity(model.num_classes());
        for class in model.classes() {
            projected_means.push(phi * class.mean());
            let mut cov = phi * class.covariance().matrix() * phi.transpose();
            cov = (&cov + cov.transpose()) * 0.5;
            for i in 0..setup.m() {
                cov[(i, i)] += setup.noise_variance();
            }
            factors.push(SpdFactor::new(&cov)?);
        }
        Ok(Self {
            projected_means,
            factors,
            log_priors: model.priors().iter().map(|p| p.ln()).collect(),
            fingerprint: fingerprint(model, setup),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.factors.len()
    }

    pub fn m(&self) -> usize {
        self.factors[0].dim()
    }

    pub fn factor(&self, i: usize) -> &SpdFactor {
        &self.factors[i]
    }

    pub fn projected_mean(&self, i: usize) -> &DVector<f64> {
        &self.projected_means[i]
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn matches(&self, model: &GmmModel, setup: &MeasurementSetup) -> bool {
        self.fingerprint == fingerprint(model, setup)
    }

    /// `ln p(y | C_i)` for the Gaussian `N(Φμ_i, ΦΣ_iΦᵀ + σ²I)`.
    pub fn log_likelihood(&self, y: &DVector<f64>, i: usize) -> f64 {
        let mut scratch = vec![0.0; self.m()];
        let m = self.m() as f64;
        -0.5 * m * (2.0 * PI).ln() + self.unnormalized(y.as_slice(), i, &mut scratch)
    }

    /// Log-likelihood without the `−(M/2) ln 2π` constant.
    fn unnormalized(&self, y: &[f64], i: usize, scratch: &mut [f64]) -> f64 {
        let mean = self.projected_means[i].as_slice();
        for ((s, yv), mv) in scratch.iter_mut().zip(y).zip(mean) {
            *s = yv - mv;
        }
        let factor = &self.factors[i];
        -0.5 * factor.ln_det() - 0.5 * factor.quad_form_in_place(scratch)
    }

    /// `argmax_i ln p(y | C_i) + ln P_i`; ties go to the smallest index.
    pub fn map_classify(&self, y: &DVector<f64>) -> usize {
        let mut scratch = vec![0.0; self.m()];
        self.classify_slice(y.as_slice(), &mut scratch)
    }

    /// Allocation-free variant of [`Self::map_classify`]; `scratch` must
    /// have length `M`.
    pub fn classify_slice(&self, y: &[f64], scratch: &mut [f64]) -> usize {
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for i in 0..self.num_classes() {
            if self.log_priors[i] == f64::NEG_INFINITY {
                continue;
            }
            let score = self.unnormalized(y, i, scratch) + self.log_priors[i];
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        best
    }

    /// Normalized log posteriors `ln P(C_i | y)`. Diagnostic only.
    pub fn log_posteriors(&self, y: &DVector<f64>) -> Vec<f64> {
        let mut scratch = vec![0.0; self.m()];
        let joint: Vec<f64> = (0..self.num_classes())
            .map(|i| self.unnormalized(y.as_slice(), i, &mut scratch) + self.log_priors[i])
            .collect();
        let norm = log_sum_exp(&joint);
        joint.into_iter().map(|v| v - norm).collect()
    }
}

pub fn build_context(model: &GmmModel, setup: &MeasurementSetup) -> Result<ClassifierContext> {
    ClassifierContext::build(model, setup)
}

pub fn log_likelihood(ctx: &ClassifierContext, y: &DVector<f64>, class_index: usize) -> f64 {
    ctx.log_likelihood(y, class_index)
}

pub fn map_classify(ctx: &ClassifierContext, y: &DVector<f64>) -> usize {
    ctx.map_classify(y)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// FNV-1a over the bit patterns of every number defining the pair.
fn fingerprint(model: &GmmModel, setup: &MeasurementSetup) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |v: f64| {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    };
    for c in model.classes() {
        feed(c.prior());
        c.mean().iter().copied().for_each(&mut feed);
        c.covariance().matrix().iter().copied().for_each(&mut feed);
    }
    setup.phi().iter().copied().for_each(&mut feed);
    feed(setup.noise_variance());
    h
}
