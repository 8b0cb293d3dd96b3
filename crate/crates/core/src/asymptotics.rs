//! Low-noise behaviour of the error bound: closed-form regime prediction from
//! covariance geometry, and empirical diversity order and measurement gain
//! extracted from computed curves.
//!
//! Near `σ² = 0` a polynomially decaying bound behaves as `(g_m / σ²)^(−d)`,
//! with diversity order `d` and measurement gain `g_m`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;

use crate::curve::ErrorCurve;
use crate::error::{Error, Result};
use crate::gmm::{GmmModel, RankSpec};
use crate::linalg::{image_contains, ln_pseudo_det, numerical_rank, PsdMatrix, RankTolerance};

/// Ranks and log-volumes of the projected covariances `ΦΣ_iΦᵀ` and
/// `Φ(Σ_i + Σ_j)Φᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredGeometry {
    m: usize,
    ranks: Vec<usize>,
    ln_volumes: Vec<f64>,
    union_ranks: BTreeMap<(usize, usize), usize>,
    union_ln_volumes: BTreeMap<(usize, usize), f64>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    (i.min(j), i.max(j))
}

impl MeasuredGeometry {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn num_classes(&self) -> usize {
        self.ranks.len()
    }

    pub fn rank(&self, i: usize) -> usize {
        self.ranks[i]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn volume(&self, i: usize) -> f64 {
        self.ln_volumes[i].exp()
    }

    pub fn ln_volume(&self, i: usize) -> f64 {
        self.ln_volumes[i]
    }

    pub fn union_rank(&self, i: usize, j: usize) -> usize {
        self.union_ranks[&key(i, j)]
    }

    pub fn union_volume(&self, i: usize, j: usize) -> f64 {
        self.union_ln_volumes[&key(i, j)].exp()
    }

    pub fn union_ln_volume(&self, i: usize, j: usize) -> f64 {
        self.union_ln_volumes[&key(i, j)]
    }
}

pub fn measured_geometry(model: &GmmModel, phi: &DMatrix<f64>) -> Result<MeasuredGeometry> {
    measured_geometry_with(model, phi, RankTolerance::default())
}

pub fn measured_geometry_with(model: &GmmModel, phi: &DMatrix<f64>, tol: RankTolerance) -> Result<MeasuredGeometry> {
    if phi.ncols() != model.ambient_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.ambient_dim(),
            actual: phi.ncols(),
        });
    }
    let projected: Vec<PsdMatrix> = model
        .classes()
        .iter()
        .map(|c| PsdMatrix::congruence(phi, c.covariance()))
        .collect::<Result<_>>()?;
    let mut geom = MeasuredGeometry {
        m: phi.nrows(),
        ranks: projected.iter().map(|p| numerical_rank(p, tol)).collect(),
        ln_volumes: projected.iter().map(|p| ln_pseudo_det(p, tol)).collect(),
        union_ranks: BTreeMap::new(),
        union_ln_volumes: BTreeMap::new(),
    };
    let l = model.num_classes();
    for i in 0..l {
        for j in (i + 1)..l {
            let union = PsdMatrix::new(projected[i].matrix() + projected[j].matrix())?;
            geom.union_ranks.insert((i, j), numerical_rank(&union, tol));
            geom.union_ln_volumes.insert((i, j), ln_pseudo_det(&union, tol));
        }
    }
    Ok(geom)
}

/// Ranks of the source covariances `Σ_i` and of the pairwise sums.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceGeometry {
    ambient_dim: usize,
    ranks: Vec<usize>,
    union_ranks: BTreeMap<(usize, usize), usize>,
}

impl SourceGeometry {
    pub fn new(
        ambient_dim: usize,
        ranks: Vec<usize>,
        union_ranks: impl IntoIterator<Item = ((usize, usize), usize)>,
    ) -> Result<Self> {
        let union_ranks: BTreeMap<_, _> = union_ranks.into_iter().map(|((i, j), r)| (key(i, j), r)).collect();
        let l = ranks.len();
        for i in 0..l {
            for j in (i + 1)..l {
                let r = *union_ranks.get(&(i, j)).ok_or_else(|| {
                    Error::InfeasibleRanks(format!("missing union rank for pair ({}, {})", i + 1, j + 1))
                })?;
                if r < ranks[i].max(ranks[j]) || r > ambient_dim {
                    return Err(Error::InfeasibleRanks(format!(
                        "pair ({}, {}): union rank {r} violates max({}, {}) <= r <= N = {ambient_dim}",
                        i + 1,
                        j + 1,
                        ranks[i],
                        ranks[j]
                    )));
                }
            }
        }
        Ok(Self {
            ambient_dim,
            ranks,
            union_ranks,
        })
    }

    pub fn from_spec(spec: &RankSpec) -> Self {
        Self {
            ambient_dim: spec.ambient_dim(),
            ranks: spec.class_ranks().to_vec(),
            union_ranks: spec.union_ranks().clone(),
        }
    }

    /// Numerical ranks of the model's covariances.
    pub fn from_model(model: &GmmModel) -> Result<Self> {
        let tol = RankTolerance::default();
        let covs: Vec<&PsdMatrix> = model.classes().iter().map(|c| c.covariance()).collect();
        let ranks = covs.iter().map(|c| numerical_rank(c, tol)).collect();
        let mut union_ranks = BTreeMap::new();
        for i in 0..covs.len() {
            for j in (i + 1)..covs.len() {
                let union = PsdMatrix::new(covs[i].matrix() + covs[j].matrix())?;
                union_ranks.insert((i, j), numerical_rank(&union, tol));
            }
        }
        Self::new(model.ambient_dim(), ranks, union_ranks)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn rank(&self, i: usize) -> usize {
        self.ranks[i]
    }

    pub fn union_rank(&self, i: usize, j: usize) -> usize {
        self.union_ranks[&key(i, j)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    ErrorFloor,
    PolynomialDecay { diversity: f64, measurement_gain: f64 },
    ExponentialDecay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimePrediction {
    pub regime: Regime,
    /// 0-based class pair governing the prediction.
    pub dominating_pair: Option<(usize, usize)>,
    /// Set when differing means leave the bound polynomial: the true curve
    /// is `a` times the zero-mean asymptote for some finite, unknown `a > 1`.
    pub gain_offset_unknown: bool,
}

impl RegimePrediction {
    fn new(regime: Regime, pair: (usize, usize)) -> Self {
        Self {
            regime,
            dominating_pair: Some(pair),
            gain_offset_unknown: false,
        }
    }

    pub fn diversity(&self) -> Option<f64> {
        match self.regime {
            Regime::PolynomialDecay { diversity, .. } => Some(diversity),
            _ => None,
        }
    }

    pub fn measurement_gain(&self) -> Option<f64> {
        match self.regime {
            Regime::PolynomialDecay { measurement_gain, .. } => Some(measurement_gain),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self.regime {
            Regime::ErrorFloor => "floor",
            Regime::PolynomialDecay { .. } => "polynomial",
            Regime::ExponentialDecay => "exponential",
        }
    }
}

impl fmt::Display for RegimePrediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())?;
        if let Regime::PolynomialDecay {
            diversity,
            measurement_gain,
        } = self.regime
        {
            write!(f, " d={diversity} g_m={measurement_gain:e}")?;
            if self.gain_offset_unknown {
                f.write_str(" (offset a>1 unknown)")?;
            }
        }
        if let Some((i, j)) = self.dominating_pair {
            write!(f, " pair=({},{})", i + 1, j + 1)?;
        }
        Ok(())
    }
}

/// `[√(P₁P₂) · (v₁₂ / √(v₁v₂))^(−½)]^(−1/d)`.
pub fn measurement_gain(p1: f64, p2: f64, v1: f64, v2: f64, v12: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("diversity must be positive, got {d}")));
    }
    if !(p1 > 0.0 && p2 > 0.0) {
        return Err(Error::InvalidArgument("measurement gain needs positive priors".into()));
    }
    if !(v1 > 0.0 && v2 > 0.0 && v12 > 0.0) {
        return Err(Error::InvalidArgument("volumes must be positive".into()));
    }
    let g = ((p1 * p2).sqrt() * (v12 / (v1 * v2).sqrt()).powf(-0.5)).powf(-1.0 / d);
    if g.is_finite() && g > 0.0 {
        Ok(g)
    } else {
        Err(Error::NonFinite)
    }
}

/// Gain of pair `(i, j)` at diversity `d`. The pair exponent averages the two
/// covariances, so the union volume enters as the pseudo-determinant of
/// `Φ(Σ_i + Σ_j)Φᵀ / 2`, i.e. `v_ij / 2^r_ij`.
fn pair_gain(geom: &MeasuredGeometry, i: usize, j: usize, pi: f64, pj: f64, d: f64) -> Result<f64> {
    let averaged = geom.union_ln_volume(i, j) - geom.union_rank(i, j) as f64 * std::f64::consts::LN_2;
    measurement_gain(pi, pj, geom.volume(i), geom.volume(j), averaged.exp(), d)
}

fn diversity(r1: usize, r2: usize, r12: usize) -> f64 {
    (2 * r12) as f64 / 4.0 - (r1 + r2) as f64 / 4.0
}

fn measured_pair(geom: &MeasuredGeometry, i: usize, j: usize, pi: f64, pj: f64) -> Result<RegimePrediction> {
    let (r1, r2, r12) = (geom.rank(i), geom.rank(j), geom.union_rank(i, j));
    if r1 + r2 > 2 * r12 {
        return Err(Error::InfeasibleRanks(format!(
            "measured ranks ({r1}, {r2}) exceed twice the union rank {r12}"
        )));
    }
    if r1 + r2 == 2 * r12 {
        return Ok(RegimePrediction::new(Regime::ErrorFloor, (i, j)));
    }
    let d = diversity(r1, r2, r12);
    let measurement_gain = pair_gain(geom, i, j, pi, pj, d)?;
    Ok(RegimePrediction::new(
        Regime::PolynomialDecay {
            diversity: d,
            measurement_gain,
        },
        (i, j),
    ))
}

/// Diversity of a zero-mean pair from source ranks and `M` alone, or `None`
/// for an error floor.
fn source_diversity(rs1: usize, rs2: usize, rs12: usize, m: usize) -> Option<f64> {
    let (rs1, rs2) = (rs1.min(rs2), rs1.max(rs2));
    if m <= rs1 || (rs12 <= m && rs1 + rs2 == 2 * rs12) {
        None
    } else if m <= rs2 {
        Some((m - rs1) as f64 / 4.0)
    } else if m < rs12 {
        Some(diversity(rs1, rs2, m))
    } else {
        Some(diversity(rs1, rs2, rs12))
    }
}

fn source_pair(
    src: &SourceGeometry,
    m: usize,
    i: usize,
    j: usize,
    pi: f64,
    pj: f64,
    geom: &MeasuredGeometry,
) -> Result<RegimePrediction> {
    match source_diversity(src.rank(i), src.rank(j), src.union_rank(i, j), m) {
        None => Ok(RegimePrediction::new(Regime::ErrorFloor, (i, j))),
        Some(d) => {
            let measurement_gain = pair_gain(geom, i, j, pi, pj, d)?;
            Ok(RegimePrediction::new(
                Regime::PolynomialDecay {
                    diversity: d,
                    measurement_gain,
                },
                (i, j),
            ))
        }
    }
}

fn two_priors(priors: &[f64]) -> Result<(f64, f64)> {
    match priors {
        &[p1, p2] => Ok((p1, p2)),
        _ => Err(Error::InvalidArgument(format!("expected 2 priors, got {}", priors.len()))),
    }
}

/// Two zero-mean classes, from the measured geometry.
pub fn predict_two_class_measured(geom: &MeasuredGeometry, priors: &[f64]) -> Result<RegimePrediction> {
    let (p1, p2) = two_priors(priors)?;
    if geom.num_classes() != 2 {
        return Err(Error::InvalidArgument("two-class prediction needs exactly 2 classes".into()));
    }
    measured_pair(geom, 0, 1, p1, p2)
}

/// Two zero-mean classes, from the source ranks and the number of
/// measurements. The gain still needs the measured volumes.
pub fn predict_two_class_source(
    src: &SourceGeometry,
    m: usize,
    priors: &[f64],
    geom_for_gain: &MeasuredGeometry,
) -> Result<RegimePrediction> {
    let (p1, p2) = two_priors(priors)?;
    if src.ranks.len() != 2 || geom_for_gain.num_classes() != 2 {
        return Err(Error::InvalidArgument("two-class prediction needs exactly 2 classes".into()));
    }
    source_pair(src, m, 0, 1, p1, p2, geom_for_gain)
}

fn nonzero_mean_pair(
    model: &GmmModel,
    phi: &DMatrix<f64>,
    src: &SourceGeometry,
    geom: &MeasuredGeometry,
    i: usize,
    j: usize,
) -> Result<RegimePrediction> {
    let (ci, cj) = (model.class(i), model.class(j));
    let delta = phi * (ci.mean() - cj.mean());
    let union = PsdMatrix::congruence(
        phi,
        &PsdMatrix::new(ci.covariance().matrix() + cj.covariance().matrix())?,
    )?;
    if !image_contains(&union, &delta, RankTolerance::default())? {
        return Ok(RegimePrediction::new(Regime::ExponentialDecay, (i, j)));
    }
    let mut prediction = source_pair(src, phi.nrows(), i, j, ci.prior(), cj.prior(), geom)?;
    prediction.gain_offset_unknown = matches!(prediction.regime, Regime::PolynomialDecay { .. });
    Ok(prediction)
}

/// Two classes with distinct means.
pub fn predict_nonzero_mean(
    model: &GmmModel,
    phi: &DMatrix<f64>,
    src: &SourceGeometry,
    geom: &MeasuredGeometry,
) -> Result<RegimePrediction> {
    if model.num_classes() != 2 {
        return Err(Error::InvalidArgument("two-class prediction needs exactly 2 classes".into()));
    }
    if model.class(0).mean() == model.class(1).mean() {
        return Err(Error::InvalidArgument(
            "class means are equal; use the zero-mean predictors".into(),
        ));
    }
    nonzero_mean_pair(model, phi, src, geom, 0, 1)
}

/// Prediction for every pair `i < j` whose priors are both positive. Pairs
/// with a zero prior contribute nothing to the bound and are skipped.
pub fn predict_pairs(model: &GmmModel, phi: &DMatrix<f64>) -> Result<Vec<RegimePrediction>> {
    let src = SourceGeometry::from_model(model)?;
    let geom = measured_geometry(model, phi)?;
    let l = model.num_classes();
    let mut out = Vec::new();
    for i in 0..l {
        for j in (i + 1)..l {
            let (ci, cj) = (model.class(i), model.class(j));
            if ci.prior() == 0.0 || cj.prior() == 0.0 {
                continue;
            }
            out.push(if ci.mean() == cj.mean() {
                source_pair(&src, phi.nrows(), i, j, ci.prior(), cj.prior(), &geom)?
            } else {
                nonzero_mean_pair(model, phi, &src, &geom, i, j)?
            });
        }
    }
    Ok(out)
}

/// Worst pair wins: any floor gives a floor, otherwise the smallest
/// polynomial diversity (first pair on ties) with that pair's gain.
pub fn predict_multiclass(model: &GmmModel, phi: &DMatrix<f64>) -> Result<RegimePrediction> {
    let pairs = predict_pairs(model, phi)?;
    aggregate(&pairs).ok_or_else(|| Error::InvalidModel("no class pair has two positive priors".into()))
}

pub fn aggregate(pairs: &[RegimePrediction]) -> Option<RegimePrediction> {
    if let Some(floor) = pairs.iter().find(|p| p.regime == Regime::ErrorFloor) {
        return Some(*floor);
    }
    let worst = pairs
        .iter()
        .filter_map(|p| p.diversity().map(|d| (d, p)))
        .fold(None::<(f64, &RegimePrediction)>, |best, (d, p)| match best {
            Some((bd, _)) if bd <= d => best,
            _ => Some((d, p)),
        });
    match worst {
        Some((_, p)) => Some(*p),
        None => (!pairs.is_empty()).then_some(RegimePrediction {
            regime: Regime::ExponentialDecay,
            dominating_pair: None,
            gain_offset_unknown: false,
        }),
    }
}

/// Closed range of `log10 σ²` used for fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    pub lo_decade: f64,
    pub hi_decade: f64,
}

impl FitWindow {
    pub fn new(lo_decade: f64, hi_decade: f64) -> Result<Self> {
        if !(lo_decade < hi_decade) || !lo_decade.is_finite() || !hi_decade.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "fit window [{lo_decade}, {hi_decade}] must be a finite increasing range"
            )));
        }
        Ok(Self { lo_decade, hi_decade })
    }

    /// The two lowest decades of a grid.
    pub fn lowest_decades(sigma_grid: &[f64]) -> Result<Self> {
        let min = sigma_grid.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) || !min.is_finite() {
            return Err(Error::InvalidArgument("grid has no positive noise variance".into()));
        }
        let lo = min.log10();
        Self::new(lo, lo + 2.0)
    }

    pub fn contains(&self, sigma2: f64) -> bool {
        let x = sigma2.log10();
        x >= self.lo_decade - 1e-9 && x <= self.hi_decade + 1e-9
    }
}

impl fmt::Display for FitWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[1e{}, 1e{}]", self.lo_decade, self.hi_decade)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiversityFit {
    pub slope: f64,
    pub std_error: f64,
    pub points: usize,
}

fn windowed(points: &[(f64, f64)], window: FitWindow, min_points: usize) -> Result<Vec<(f64, f64)>> {
    let inside: Vec<_> = points.iter().copied().filter(|&(s, _)| window.contains(s)).collect();
    if inside.len() < min_points {
        return Err(Error::InvalidArgument(format!(
            "fit window {window} holds {} points, need at least {min_points}",
            inside.len()
        )));
    }
    if inside.iter().any(|&(_, ln_b)| !ln_b.is_finite()) {
        return Err(Error::InvalidArgument(format!("nonpositive bound value inside fit window {window}")));
    }
    Ok(inside)
}

struct LineFit {
    slope: f64,
    std_error: f64,
    correlation: f64,
}

fn least_squares(xy: &[(f64, f64)]) -> LineFit {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = xy.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    LineFit {
        slope,
        std_error: (ssr / (n - 2.0) / sxx).sqrt(),
        correlation: if syy > 0.0 { sxy / (sxx * syy).sqrt() } else { 0.0 },
    }
}

/// Slope of `ln bound` against `ln σ²` over the window.
pub fn fit_diversity(curve: &ErrorCurve, window: FitWindow) -> Result<DiversityFit> {
    fit_diversity_points(&curve.bound_points(), window)
}

/// As [`fit_diversity`] on `(σ², ln value)` points.
pub fn fit_diversity_points(points: &[(f64, f64)], window: FitWindow) -> Result<DiversityFit> {
    let inside = windowed(points, window, 4)?;
    let xy: Vec<_> = inside.iter().map(|&(s, ln_b)| (s.ln(), ln_b)).collect();
    let fit = least_squares(&xy);
    Ok(DiversityFit {
        slope: fit.slope,
        std_error: fit.std_error,
        points: xy.len(),
    })
}

/// Geometric mean of `σ² · bound^(−1/d)` over the window.
pub fn fit_measurement_gain(curve: &ErrorCurve, d: f64, window: FitWindow) -> Result<f64> {
    fit_measurement_gain_points(&curve.bound_points(), d, window)
}

pub fn fit_measurement_gain_points(points: &[(f64, f64)], d: f64, window: FitWindow) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidArgument(format!("diversity must be positive, got {d}")));
    }
    let inside = windowed(points, window, 1)?;
    let mean = inside.iter().map(|&(s, ln_b)| s.ln() - ln_b / d).sum::<f64>() / inside.len() as f64;
    Ok(mean.exp())
}

/// Correlation of `ln bound` with `1/σ²` over the window; close to −1 for
/// exponential decay.
pub fn exponential_decay_correlation(points: &[(f64, f64)], window: FitWindow) -> Result<f64> {
    let inside = windowed(points, window, 3)?;
    let xy: Vec<_> = inside.iter().map(|&(s, ln_b)| (1.0 / s, ln_b)).collect();
    Ok(least_squares(&xy).correlation)
}
