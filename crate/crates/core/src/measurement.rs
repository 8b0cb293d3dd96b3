//! Random Gaussian measurement matrices and the noisy linear measurement
//! model `y = Φx + n`, `n ~ N(0, σ²I)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gmm::GaussianClass;
use crate::linalg::PsdMatrix;
use crate::seeds;

/// `m × n` matrix with i.i.d. `N(0, 1/n)` entries, filled row by row from a
/// stream seeded by `seed`.
///
/// Because the fill is row-major, the first `m'` rows of a draw with `m`
/// rows equal the full draw with `m'` rows for the same seed.
pub fn draw_measurement_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
    assert!(m >= 1 && n >= 1, "measurement matrix needs positive dimensions");
    let mut rng = seeds::rng_from(seed);
    let scale = (n as f64).recip().sqrt();
    let data: Vec<f64> = (0..m * n)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    DMatrix::from_row_slice(m, n, &data)
}

#[derive(Debug, Clone)]
pub struct MeasurementSetup {
    phi: DMatrix<f64>,
    noise_variance: f64,
}

impl MeasurementSetup {
    pub fn new(phi: DMatrix<f64>, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(Error::NonPositiveNoise(noise_variance));
        }
        Self::checked(phi, noise_variance)
    }

    /// The `σ² = 0` limit. Measurements are exactly `Φx`; the classifier
    /// and bounds reject this setup.
    pub fn noiseless(phi: DMatrix<f64>) -> Result<Self> {
        Self::checked(phi, 0.0)
    }

    fn checked(phi: DMatrix<f64>, noise_variance: f64) -> Result<Self> {
        if phi.nrows() == 0 || phi.ncols() == 0 {
            return Err(Error::InvalidArgument("measurement matrix must be non-empty".into()));
        }
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { phi, noise_variance })
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self> {
        Self::new(self.phi.clone(), noise_variance)
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn m(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_ambient(&self) -> usize {
        self.phi.ncols()
    }

    /// `M ≤ N`. Setups with more measurements than dimensions are allowed
    /// but are not compressive.
    pub fn is_compressive(&self) -> bool {
        self.m() <= self.n_ambient()
    }

    pub fn is_noiseless(&self) -> bool {
        self.noise_variance == 0.0
    }

    pub(crate) fn require_noise(&self) -> Result<()> {
        if self.noise_variance > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositiveNoise(self.noise_variance))
        }
    }
}

/// `Φx + n` with fresh noise drawn from `rng`.
pub fn measure<R: Rng + ?Sized>(setup: &MeasurementSetup, x: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
    if x.len() != setup.n_ambient() {
        return Err(Error::DimensionMismatch {
            expected: setup.n_ambient(),
            actual: x.len(),
        });
    }
    let mut y = &setup.phi * x;
    if !setup.is_noiseless() {
        let sd = setup.noise_variance.sqrt();
        for v in y.iter_mut() {
            *v += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(y)
}

/// Mean and covariance of `y` given the class: `(Φμ, ΦΣΦᵀ + σ²I)`.
pub fn induced_class_moments(setup: &MeasurementSetup, class: &GaussianClass) -> Result<(DVector<f64>, PsdMatrix)> {
    if class.dim() != setup.n_ambient() {
        return Err(Error::DimensionMismatch {
            expected: setup.n_ambient(),
            actual: class.dim(),
        });
    }
    let mean = &setup.phi * class.mean();
    let mut cov = &setup.phi * class.covariance().matrix() * setup.phi.transpose();
    for i in 0..setup.m() {
        cov[(i, i)] += setup.noise_variance;
    }
    Ok((mean, PsdMatrix::new(cov)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{synthesize_ensemble, MeanMode, RankSpec};

    #[test]
    fn draws_are_reproducible_and_seed_sensitive() {
        let a = draw_measurement_matrix(1, 1, 42);
        assert_eq!(a, draw_measurement_matrix(1, 1, 42));
        let b = draw_measurement_matrix(3, 4, 1);
        let c = draw_measurement_matrix(3, 4, 2);
        assert!(b.iter().zip(c.iter()).any(|(x, y)| x != y));
    }

    #[test]
    fn smaller_draws_are_leading_rows_of_larger_ones() {
        let big = draw_measurement_matrix(6, 6, 9);
        let small = draw_measurement_matrix(4, 6, 9);
        assert_eq!(big.rows(0, 4), small);
    }

    #[test]
    fn entry_mean_and_variance() {
        let phi = draw_measurement_matrix(100, 100, 7);
        let mean = phi.mean();
        // Entries have standard deviation 1/10; the bound is 4 standard
        // errors of the mean of 10^4 unit-variance entries.
        assert!(mean.abs() <= 4.0 / (1e4f64).sqrt(), "{mean}");
        let var = phi.iter().map(|v| v * v).sum::<f64>() / 1e4;
        assert!((var - 0.01).abs() < 0.001, "{var}");
    }

    #[test]
    fn noiseless_measurement_is_exact() {
        let setup = MeasurementSetup::noiseless(DMatrix::identity(3, 3)).unwrap();
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let mut rng = seeds::rng_from(0);
        assert_eq!(measure(&setup, &e1, &mut rng).unwrap(), e1);
        let phi = draw_measurement_matrix(2, 3, 1);
        let setup = MeasurementSetup::noiseless(phi.clone()).unwrap();
        assert_eq!(measure(&setup, &e1, &mut rng).unwrap(), &phi * &e1);
    }

    #[test]
    fn pure_noise_has_the_noise_variance() {
        let setup = MeasurementSetup::new(draw_measurement_matrix(3, 5, 1), 0.25).unwrap();
        let mut rng = seeds::rng_from(4);
        let x = DVector::zeros(5);
        let draws = 100_000;
        let mut acc = DVector::zeros(3);
        for _ in 0..draws {
            let y = measure(&setup, &x, &mut rng).unwrap();
            acc += y.component_mul(&y);
        }
        for v in (acc / draws as f64).iter() {
            assert!((v - 0.25).abs() <= 0.05 * 0.25, "{v}");
        }
    }

    #[test]
    fn rejects_dimension_mismatch_and_bad_noise() {
        let setup = MeasurementSetup::new(DMatrix::identity(2, 3), 1.0).unwrap();
        let mut rng = seeds::rng_from(0);
        assert!(matches!(
            measure(&setup, &DVector::zeros(2), &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            MeasurementSetup::new(DMatrix::identity(2, 2), 0.0),
            Err(Error::NonPositiveNoise(_))
        ));
        assert!(!MeasurementSetup::new(DMatrix::identity(4, 3), 1.0).unwrap().is_compressive());
    }

    #[test]
    fn projections_preserve_norm_on_average() {
        // E‖Φx‖² = (M/N)‖x‖² under N(0, 1/N) entries; equal to ‖x‖² when M = N.
        let n = 6;
        let x = DVector::from_fn(n, |i, _| i as f64 + 1.0).normalize();
        for m in [3usize, 6] {
            let draws = 10_000;
            let total: f64 = (0..draws)
                .map(|s| (draw_measurement_matrix(m, n, s) * &x).norm_squared())
                .sum();
            let expected = m as f64 / n as f64;
            let mean = total / draws as f64;
            assert!((mean - expected).abs() <= 0.05 * expected, "M={m}: {mean} vs {expected}");
        }
    }

    #[test]
    fn induced_moments() {
        let spec = RankSpec::pair(4, 2, 3, 4, MeanMode::DistinctNonzero).unwrap();
        let model = synthesize_ensemble(&spec, 3).unwrap();
        let class = model.class(0);

        let identity = MeasurementSetup::noiseless(DMatrix::identity(4, 4)).unwrap();
        let (mean, cov) = induced_class_moments(&identity, class).unwrap();
        assert_eq!(&mean, class.mean());
        assert_eq!(cov.matrix(), class.covariance().matrix());

        let point = GaussianClass::new(DVector::zeros(4), PsdMatrix::zeros(4), 1.0).unwrap();
        let setup = MeasurementSetup::new(draw_measurement_matrix(3, 4, 2), 0.3).unwrap();
        let (_, cov) = induced_class_moments(&setup, &point).unwrap();
        assert_eq!(cov.matrix(), &(DMatrix::identity(3, 3) * 0.3));

        // Independent dense oracle: explicit triple loops.
        let (mean, cov) = induced_class_moments(&setup, class).unwrap();
        let phi = setup.phi();
        let sigma = class.covariance().matrix();
        for i in 0..3 {
            let mut mu = 0.0;
            for a in 0..4 {
                mu += phi[(i, a)] * class.mean()[a];
            }
            assert!((mean[i] - mu).abs() < 1e-10);
            for j in 0..3 {
                let mut s = if i == j { 0.3 } else { 0.0 };
                for a in 0..4 {
                    for b in 0..4 {
                        s += phi[(i, a)] * sigma[(a, b)] * phi[(j, b)];
                    }
                }
                assert!((cov.matrix()[(i, j)] - s).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn measurements_follow_the_induced_distribution() {
        let spec = RankSpec::pair(4, 2, 3, 4, MeanMode::DistinctNonzero).unwrap();
        let model = synthesize_ensemble(&spec, 5).unwrap();
        let setup = MeasurementSetup::new(draw_measurement_matrix(3, 4, 3), 0.2).unwrap();
        let class = model.class(1);
        let (mean, cov) = induced_class_moments(&setup, class).unwrap();
        let mut rng = seeds::rng_from(8);
        let draws = 100_000;
        let mut s1 = DVector::zeros(3);
        let mut s2 = DMatrix::zeros(3, 3);
        let one_class = crate::gmm::GmmModel::new(vec![
            GaussianClass::new(class.mean().clone(), class.covariance().clone(), 1.0).unwrap(),
            GaussianClass::new(class.mean().clone(), class.covariance().clone(), 0.0).unwrap(),
        ])
        .unwrap();
        for _ in 0..draws {
            let (_, x) = crate::gmm::sample_source(&one_class, &mut rng);
            let y = measure(&setup, &x, &mut rng).unwrap();
            s1 += &y;
            s2 += &y * y.transpose();
        }
        let emp_mean = s1 / draws as f64;
        let emp_cov = s2 / draws as f64 - &emp_mean * emp_mean.transpose();
        let scale = cov.matrix().amax();
        for (e, t) in emp_cov.iter().zip(cov.matrix().iter()) {
            assert!((e - t).abs() <= 0.05 * scale, "{e} vs {t}");
        }
        let mscale = mean.amax().max(scale.sqrt());
        for (e, t) in emp_mean.iter().zip(mean.iter()) {
            assert!((e - t).abs() <= 0.05 * mscale, "{e} vs {t}");
        }
    }
}
