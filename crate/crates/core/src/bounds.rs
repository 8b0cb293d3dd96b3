//! Bhattacharyya exponents between projected classes and the two-class and
//! multi-class upper bounds on MAP misclassification built from them.
//!
//! The exponent is the Bhattacharyya distance between the two measurement
//! distributions `N(Φμ_i, ΦΣ_iΦᵀ + σ²I)` and `N(Φμ_j, ΦΣ_jΦᵀ + σ²I)`, so the
//! averaged covariance is `(Φ(Σ_i + Σ_j)Φᵀ + 2σ²I) / 2`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::classifier::log_sum_exp;
use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::linalg::SpdFactor;
use crate::measurement::MeasurementSetup;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairExponent {
    /// `K(i, j)` in nats.
    pub k_value: f64,
    /// Mahalanobis part, `⅛ ΔᵀA⁻¹Δ` with `A` the averaged covariance.
    pub mean_term: f64,
    /// `½ ln(det A / sqrt(det B_i det B_j))`.
    pub logdet_term: f64,
}

/// Which multi-class union bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnionBoundVariant {
    /// `Σ_i Σ_{j≠i} sqrt(P_i P_j) e^{-K(i,j)} P_i`, with the trailing `P_i`
    /// weighting every ordered pair.
    #[default]
    AsPrinted,
    /// `Σ_{i<j} 2 sqrt(P_i P_j) e^{-K(i,j)}`.
    StandardUnion,
}

impl UnionBoundVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::AsPrinted => "printed",
            Self::StandardUnion => "standard",
        }
    }
}

impl fmt::Display for UnionBoundVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UnionBoundVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "printed" => Ok(Self::AsPrinted),
            "standard" => Ok(Self::StandardUnion),
            other => Err(Error::InvalidArgument(format!(
                "unknown union bound variant `{other}` (expected `printed` or `standard`)"
            ))),
        }
    }
}

/// Class moments pushed through a fixed `Φ`, reusable across noise levels.
#[derive(Debug, Clone)]
pub struct ProjectedModel {
    means: Vec<DVector<f64>>,
    covariances: Vec<DMatrix<f64>>,
    ln_priors: Vec<f64>,
}

impl ProjectedModel {
    pub fn new(model: &GmmModel, phi: &DMatrix<f64>) -> Result<Self> {
        if phi.ncols() != model.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.ambient_dim(),
                actual: phi.ncols(),
            });
        }
        let means = model.classes().iter().map(|c| phi * c.mean()).collect();
        let covariances = model
            .classes()
            .iter()
            .map(|c| {
                let p = phi * c.covariance().matrix() * phi.transpose();
                (&p + p.transpose()) * 0.5
            })
            .collect();
        Ok(Self {
            means,
            covariances,
            ln_priors: model.priors().iter().map(|p| p.ln()).collect(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn m(&self) -> usize {
        self.means[0].len()
    }

    fn regularized(&self, cov: &DMatrix<f64>, shift: f64) -> Result<SpdFactor> {
        let mut a = cov.clone();
        for k in 0..a.nrows() {
            a[(k, k)] += shift;
        }
        SpdFactor::new(&a)
    }

    pub fn pair_exponent(&self, i: usize, j: usize, noise_variance: f64) -> Result<PairExponent> {
        if !(noise_variance > 0.0) {
            return Err(Error::NonPositiveNoise(noise_variance));
        }
        if i == j {
            return Err(Error::InvalidArgument(format!("pair exponent needs distinct classes, got ({i}, {i})")));
        }
        let l = self.num_classes();
        if i >= l || j >= l {
            return Err(Error::InvalidArgument(format!("class index out of range for {l} classes")));
        }
        let average = (&self.covariances[i] + &self.covariances[j]) * 0.5;
        let avg = self.regularized(&average, noise_variance)?;
        let bi = self.regularized(&self.covariances[i], noise_variance)?;
        let bj = self.regularized(&self.covariances[j], noise_variance)?;

        let diff = &self.means[i] - &self.means[j];
        let mean_term = if diff.iter().all(|v| *v == 0.0) {
            0.0
        } else {
            0.125 * avg.quad_form(&diff)
        };
        let logdet_term = 0.5 * (avg.ln_det() - 0.5 * (bi.ln_det() + bj.ln_det()));
        Ok(PairExponent {
            k_value: mean_term + logdet_term,
            mean_term,
            logdet_term,
        })
    }

    /// `ln(sqrt(P_i P_j) e^{-K(i,j)})` for every pair `i < j`, in
    /// lexicographic order.
    pub fn ln_pair_bounds(&self, noise_variance: f64) -> Result<Vec<((usize, usize), f64)>> {
        let l = self.num_classes();
        let mut out = Vec::with_capacity(l * (l - 1) / 2);
        for i in 0..l {
            for j in (i + 1)..l {
                let k = self.pair_exponent(i, j, noise_variance)?.k_value;
                out.push(((i, j), 0.5 * (self.ln_priors[i] + self.ln_priors[j]) - k));
            }
        }
        Ok(out)
    }

    pub fn ln_union_bound(&self, noise_variance: f64, variant: UnionBoundVariant) -> Result<f64> {
        let pairs = self.ln_pair_bounds(noise_variance)?;
        let terms: Vec<f64> = match variant {
            UnionBoundVariant::AsPrinted => {
                let l = self.num_classes();
                let lookup = |a: usize, b: usize| {
                    let key = (a.min(b), a.max(b));
                    pairs.iter().find(|(p, _)| *p == key).unwrap().1
                };
                let mut terms = Vec::with_capacity(l * (l - 1));
                for i in 0..l {
                    for j in (0..l).filter(|&j| j != i) {
                        terms.push(lookup(i, j) + self.ln_priors[i]);
                    }
                }
                terms
            }
            UnionBoundVariant::StandardUnion => pairs.iter().map(|(_, v)| std::f64::consts::LN_2 + v).collect(),
        };
        Ok(log_sum_exp(&terms))
    }
}

pub fn pair_exponent(model: &GmmModel, setup: &MeasurementSetup, i: usize, j: usize) -> Result<PairExponent> {
    setup.require_noise()?;
    ProjectedModel::new(model, setup.phi())?.pair_exponent(i, j, setup.noise_variance())
}

/// `ln(sqrt(P_1 P_2) e^{-K(1,2)})`.
pub fn ln_two_class_bound(model: &GmmModel, setup: &MeasurementSetup) -> Result<f64> {
    if model.num_classes() != 2 {
        return Err(Error::InvalidArgument(format!(
            "two-class bound needs 2 classes, got {}",
            model.num_classes()
        )));
    }
    setup.require_noise()?;
    let projected = ProjectedModel::new(model, setup.phi())?;
    Ok(projected.ln_pair_bounds(setup.noise_variance())?[0].1)
}

/// `sqrt(P_1 P_2) e^{-K(1,2)}`, not clamped to 1.
pub fn two_class_bound(model: &GmmModel, setup: &MeasurementSetup) -> Result<f64> {
    ln_two_class_bound(model, setup).map(f64::exp)
}

pub fn ln_multiclass_bound(model: &GmmModel, setup: &MeasurementSetup, variant: UnionBoundVariant) -> Result<f64> {
    setup.require_noise()?;
    ProjectedModel::new(model, setup.phi())?.ln_union_bound(setup.noise_variance(), variant)
}

pub fn multiclass_bound(model: &GmmModel, setup: &MeasurementSetup, variant: UnionBoundVariant) -> Result<f64> {
    ln_multiclass_bound(model, setup, variant).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gmm::{synthesize_ensemble, GaussianClass, MeanMode, RankSpec};
    use crate::linalg::PsdMatrix;
    use crate::measurement::draw_measurement_matrix;

    fn scalar_model() -> GmmModel {
        let c = |m: f64| GaussianClass::new(DVector::from_element(1, m), PsdMatrix::zeros(1), 0.5).unwrap();
        GmmModel::new(vec![c(0.0), c(2.0)]).unwrap()
    }

    fn identical(l: usize) -> GmmModel {
        let cov = PsdMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 0.0]))).unwrap();
        let mean = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let classes = (0..l)
            .map(|_| GaussianClass::new(mean.clone(), cov.clone(), 1.0 / l as f64).unwrap())
            .collect();
        GmmModel::new(classes).unwrap()
    }

    fn fig1(seed: u64) -> GmmModel {
        synthesize_ensemble(&RankSpec::pair(6, 2, 3, 4, MeanMode::Zero).unwrap(), seed).unwrap()
    }

    #[test]
    fn identical_classes_have_zero_exponent() {
        let model = identical(2);
        for (m, s2) in [(1, 1.0), (2, 0.01), (3, 1e-6)] {
            let setup = MeasurementSetup::new(draw_measurement_matrix(m, 3, m as u64), s2).unwrap();
            let k = pair_exponent(&model, &setup, 0, 1).unwrap();
            assert!(k.k_value.abs() < 1e-12, "{k:?}");
            assert!((two_class_bound(&model, &setup).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_point_masses() {
        let model = scalar_model();
        let setup = MeasurementSetup::new(DMatrix::identity(1, 1), 1.0).unwrap();
        let k = pair_exponent(&model, &setup, 0, 1).unwrap();
        assert!((k.mean_term - 0.5).abs() < 1e-15);
        assert!(k.logdet_term.abs() < 1e-15);
        assert!((k.k_value - 0.5).abs() < 1e-15);
        let bound = two_class_bound(&model, &setup).unwrap();
        assert!((bound - 0.303_265_329_856_316_7).abs() < 1e-12, "{bound}");
    }

    #[test]
    fn rejects_bad_arguments() {
        let model = scalar_model();
        let noiseless = MeasurementSetup::noiseless(DMatrix::identity(1, 1)).unwrap();
        assert!(matches!(pair_exponent(&model, &noiseless, 0, 1), Err(Error::NonPositiveNoise(_))));
        let setup = MeasurementSetup::new(DMatrix::identity(1, 1), 1.0).unwrap();
        assert!(pair_exponent(&model, &setup, 1, 1).is_err());
        assert!(two_class_bound(&identical(3), &setup_for(3)).is_err());
    }

    fn setup_for(n: usize) -> MeasurementSetup {
        MeasurementSetup::new(DMatrix::identity(n, n), 1.0).unwrap()
    }

    #[test]
    fn bound_shrinks_with_noise_on_a_no_floor_configuration() {
        let model = fig1(1);
        let phi = draw_measurement_matrix(4, 6, 2);
        let lo = two_class_bound(&model, &MeasurementSetup::new(phi.clone(), 1e-4).unwrap()).unwrap();
        let hi = two_class_bound(&model, &MeasurementSetup::new(phi, 1e-1).unwrap()).unwrap();
        assert!(lo <= hi, "{lo} > {hi}");
    }

    #[test]
    fn printed_union_reduces_to_two_class_bound() {
        let model = fig1(3);
        let setup = MeasurementSetup::new(draw_measurement_matrix(3, 6, 4), 0.01).unwrap();
        let two = two_class_bound(&model, &setup).unwrap();
        let printed = multiclass_bound(&model, &setup, UnionBoundVariant::AsPrinted).unwrap();
        assert!((two - printed).abs() <= 1e-14 * two);
        let k = pair_exponent(&model, &setup, 0, 1).unwrap().k_value;
        assert!((printed - 0.5 * (-k).exp()).abs() <= 1e-14);
    }

    #[test]
    fn identical_classes_union_bound() {
        let model = identical(4);
        let setup = MeasurementSetup::new(draw_measurement_matrix(2, 3, 1), 0.1).unwrap();
        let printed = multiclass_bound(&model, &setup, UnionBoundVariant::AsPrinted).unwrap();
        assert!((printed - 0.75).abs() < 1e-12, "{printed}");
        let standard = multiclass_bound(&model, &setup, UnionBoundVariant::StandardUnion).unwrap();
        assert!((standard - 6.0 * 2.0 * 0.25).abs() < 1e-12);
    }

    #[test]
    fn union_dominates_its_largest_term() {
        let spec = RankSpec::new(
            6,
            vec![2, 3, 3, 2],
            [((0, 1), 4), ((0, 2), 5), ((0, 3), 4), ((1, 2), 4), ((1, 3), 5), ((2, 3), 4)],
            MeanMode::Zero,
        )
        .unwrap();
        let model = synthesize_ensemble(&spec, 2).unwrap();
        let setup = MeasurementSetup::new(draw_measurement_matrix(4, 6, 1), 1e-3).unwrap();
        let projected = ProjectedModel::new(&model, setup.phi()).unwrap();
        let total = multiclass_bound(&model, &setup, UnionBoundVariant::AsPrinted).unwrap();
        for i in 0..4 {
            for j in (0..4).filter(|&j| j != i) {
                let k = projected.pair_exponent(i, j, 1e-3).unwrap().k_value;
                let term = (0.25f64 * 0.25).sqrt() * (-k).exp() * 0.25;
                assert!(total >= term);
            }
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [UnionBoundVariant::AsPrinted, UnionBoundVariant::StandardUnion] {
            assert_eq!(v.name().parse::<UnionBoundVariant>().unwrap(), v);
        }
        assert!("union".parse::<UnionBoundVariant>().is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn exponent_is_symmetric_and_nonnegative(
                seed in 0u64..1_000,
                m in 1usize..=6,
                log_noise in -6.0f64..0.0,
                r1 in 1usize..=4,
                r2 in 1usize..=4,
                extra in 0usize..=2,
                nonzero in any::<bool>(),
            ) {
                let r12 = (r1.max(r2) + extra).min(r1 + r2).min(6);
                let mode = if nonzero { MeanMode::DistinctNonzero } else { MeanMode::Zero };
                let spec = RankSpec::pair(6, r1, r2, r12, mode).unwrap();
                let model = synthesize_ensemble(&spec, seed).unwrap();
                let projected = ProjectedModel::new(&model, &draw_measurement_matrix(m, 6, seed)).unwrap();
                let s2 = 10f64.powf(log_noise);
                let a = projected.pair_exponent(0, 1, s2).unwrap();
                let b = projected.pair_exponent(1, 0, s2).unwrap();
                prop_assert!((a.k_value - b.k_value).abs() <= 1e-10 * a.k_value.abs().max(1.0));
                prop_assert!(a.k_value >= -1e-10);
                prop_assert!(a.mean_term >= 0.0);
                prop_assert!(a.logdet_term >= -1e-10);
                prop_assert!((a.k_value - (a.mean_term + a.logdet_term)).abs() <= 1e-15 * a.k_value.abs().max(1.0));
            }
        }
    }
}
