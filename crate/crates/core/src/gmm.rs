//! Gaussian mixture source models and synthesis of models with prescribed
//! per-class ranks and pairwise union ranks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{image_contains, numerical_rank, PsdMatrix, RankTolerance};
use crate::seeds;
use crate::textio::{self, fmt_f64, fmt_list, fmt_matrix_row_major};

const PRIOR_SUM_TOLERANCE: f64 = 1e-12;
const MAX_MEAN_REDRAWS: u32 = 100;

/// One mixture component.
#[derive(Debug, Clone)]
pub struct GaussianClass {
    mean: DVector<f64>,
    covariance: PsdMatrix,
    prior: f64,
    factor: DMatrix<f64>,
}

impl GaussianClass {
    /// A zero prior is accepted: it describes a class that is never drawn.
    pub fn new(mean: DVector<f64>, covariance: PsdMatrix, prior: f64) -> Result<Self> {
        if mean.len() != covariance.dim() {
            return Err(Error::DimensionMismatch {
                expected: covariance.dim(),
                actual: mean.len(),
            });
        }
        if !(0.0..=1.0).contains(&prior) {
            return Err(Error::InvalidModel(format!("prior {prior} is outside [0, 1]")));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let factor = covariance.range_factor(RankTolerance::default());
        Ok(Self {
            mean,
            covariance,
            prior,
            factor,
        })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &PsdMatrix {
        &self.covariance
    }

    pub fn prior(&self) -> f64 {
        self.prior
    }

    /// `B` with `Σ = B Bᵀ`, one column per nonzero eigenvalue.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// How synthesized means were produced.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelMetadata {
    /// Whether pairwise mean differences were required to leave the union
    /// covariance image (when that image is a proper subspace).
    pub mean_outside_union: bool,
    /// Number of times the means were redrawn to satisfy that requirement.
    pub mean_redraws: u32,
}

#[derive(Debug, Clone)]
pub struct GmmModel {
    classes: Vec<GaussianClass>,
    ambient_dim: usize,
    metadata: ModelMetadata,
}

impl GmmModel {
    pub fn new(classes: Vec<GaussianClass>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "a mixture needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let ambient_dim = classes[0].dim();
        if let Some(c) = classes.iter().find(|c| c.dim() != ambient_dim) {
            return Err(Error::DimensionMismatch {
                expected: ambient_dim,
                actual: c.dim(),
            });
        }
        let total: f64 = classes.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > PRIOR_SUM_TOLERANCE {
            return Err(Error::InvalidModel(format!("priors sum to {total}, not 1")));
        }
        Ok(Self {
            classes,
            ambient_dim,
            metadata: ModelMetadata::default(),
        })
    }

    pub fn with_metadata(mut self, metadata: ModelMetadata) -> Self {
        self.metadata = metadata;
        self
    }

    pub fn classes(&self) -> &[GaussianClass] {
        &self.classes
    }

    pub fn class(&self, i: usize) -> &GaussianClass {
        &self.classes[i]
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn metadata(&self) -> &ModelMetadata {
        &self.metadata
    }

    pub fn priors(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.prior).collect()
    }

    /// Self-describing `key = value` text; see [`GmmModel::from_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "ambient_dim = {}", self.ambient_dim).unwrap();
        writeln!(out, "classes = {}", self.classes.len()).unwrap();
        writeln!(out, "mean_outside_union = {}", self.metadata.mean_outside_union).unwrap();
        writeln!(out, "mean_redraws = {}", self.metadata.mean_redraws).unwrap();
        for (k, c) in self.classes.iter().enumerate() {
            writeln!(out, "[class {}]", k + 1).unwrap();
            writeln!(out, "prior = {}", fmt_f64(c.prior)).unwrap();
            writeln!(out, "mean = {}", fmt_list(c.mean.iter().copied())).unwrap();
            writeln!(out, "covariance = {}", fmt_matrix_row_major(c.covariance.matrix())).unwrap();
        }
        out
    }

    /// Parses the output of [`GmmModel::to_text`]. Line numbers in errors
    /// are offset so that `first_line` is the first line of `text`.
    pub fn from_text(text: &str, first_line: usize) -> Result<Self> {
        // Split into a header block and one block per `[class k]` section.
        let mut blocks: Vec<(usize, String)> = vec![(first_line, String::new())];
        for (k, raw) in text.lines().enumerate() {
            let line = first_line + k;
            let trimmed = raw.trim();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let expected = format!("class {}", blocks.len());
                if name.trim() != expected {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected section [{expected}], got [{name}]"),
                    });
                }
                blocks.push((line + 1, String::new()));
                continue;
            }
            let block = &mut blocks.last_mut().unwrap().1;
            block.push_str(raw);
            block.push('\n');
        }

        let (header_line, header) = &blocks[0];
        let mut ambient_dim = None;
        let mut count = None;
        let mut metadata = ModelMetadata::default();
        for e in textio::entries(header, *header_line)? {
            match e.key {
                "ambient_dim" => ambient_dim = Some(e.usize()?),
                "classes" => count = Some(e.usize()?),
                "mean_redraws" => metadata.mean_redraws = e.u64()? as u32,
                "mean_outside_union" => {
                    metadata.mean_outside_union = match e.value {
                        "true" => true,
                        "false" => false,
                        v => return Err(e.error(format!("expected true or false, got `{v}`"))),
                    }
                }
                other => return Err(e.error(format!("unknown key `{other}`"))),
            }
        }
        let missing = |key: &str| Error::Parse {
            line: first_line,
            message: format!("missing key `{key}`"),
        };
        let n = ambient_dim.ok_or_else(|| missing("ambient_dim"))?;
        let count = count.ok_or_else(|| missing("classes"))?;
        if blocks.len() - 1 != count {
            return Err(Error::Parse {
                line: first_line,
                message: format!("declared {count} classes, found {}", blocks.len() - 1),
            });
        }

        let mut classes = Vec::with_capacity(count);
        for (start, body) in &blocks[1..] {
            let (mut prior, mut mean, mut cov) = (None, None, None);
            for e in textio::entries(body, *start)? {
                match e.key {
                    "prior" => prior = Some(e.f64()?),
                    "mean" => mean = Some(e.vector(n)?),
                    "covariance" => cov = Some(e.matrix_row_major(n, n)?),
                    other => return Err(e.error(format!("unknown key `{other}`"))),
                }
            }
            let section = |key: &str| Error::Parse {
                line: *start,
                message: format!("class section is missing `{key}`"),
            };
            let covariance = PsdMatrix::new(cov.ok_or_else(|| section("covariance"))?)?;
            classes.push(GaussianClass::new(
                mean.ok_or_else(|| section("mean"))?,
                covariance,
                prior.ok_or_else(|| section("prior"))?,
            )?);
        }
        Ok(Self::new(classes)?.with_metadata(metadata))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    Zero,
    DistinctNonzero,
}

/// Prescribed source geometry: per-class ranks `r_Σi` and pairwise union
/// ranks `r_Σij = rank(Σ_i + Σ_j)`. Class indices are 0-based.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSpec {
    ambient_dim: usize,
    class_ranks: Vec<usize>,
    union_ranks: BTreeMap<(usize, usize), usize>,
    mean_mode: MeanMode,
}

impl RankSpec {
    /// `union_ranks` must contain every unordered pair exactly once; keys
    /// may be given in either order.
    pub fn new(
        ambient_dim: usize,
        class_ranks: Vec<usize>,
        union_ranks: impl IntoIterator<Item = ((usize, usize), usize)>,
        mean_mode: MeanMode,
    ) -> Result<Self> {
        let l = class_ranks.len();
        if l < 2 {
            return Err(Error::InfeasibleRanks(format!("need at least 2 classes, got {l}")));
        }
        if ambient_dim == 0 {
            return Err(Error::InfeasibleRanks("ambient dimension must be positive".into()));
        }
        for (i, &r) in class_ranks.iter().enumerate() {
            if r < 1 || r > ambient_dim {
                return Err(Error::InfeasibleRanks(format!(
                    "class {} rank {r} violates 1 <= r <= N = {ambient_dim}",
                    i + 1
                )));
            }
        }
        let mut map = BTreeMap::new();
        for ((a, b), r) in union_ranks {
            let key = (a.min(b), a.max(b));
            if a == b || key.1 >= l {
                return Err(Error::InfeasibleRanks(format!(
                    "union rank given for invalid pair ({}, {})",
                    a + 1,
                    b + 1
                )));
            }
            if map.insert(key, r).is_some() {
                return Err(Error::InfeasibleRanks(format!(
                    "union rank for pair ({}, {}) given twice",
                    key.0 + 1,
                    key.1 + 1
                )));
            }
        }
        for i in 0..l {
            for j in (i + 1)..l {
                let r = *map.get(&(i, j)).ok_or_else(|| {
                    Error::InfeasibleRanks(format!("missing union rank for pair ({}, {})", i + 1, j + 1))
                })?;
                let (ri, rj) = (class_ranks[i], class_ranks[j]);
                let upper = ambient_dim.min(ri + rj);
                if r < ri.max(rj) || r > upper {
                    return Err(Error::InfeasibleRanks(format!(
                        "pair ({}, {}): union rank {r} violates max({ri}, {rj}) <= r <= min(N, {ri} + {rj}) = {upper}",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self {
            ambient_dim,
            class_ranks,
            union_ranks: map,
            mean_mode,
        })
    }

    pub fn pair(ambient_dim: usize, r1: usize, r2: usize, r12: usize, mean_mode: MeanMode) -> Result<Self> {
        Self::new(ambient_dim, vec![r1, r2], [((0, 1), r12)], mean_mode)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_ranks.len()
    }

    pub fn class_ranks(&self) -> &[usize] {
        &self.class_ranks
    }

    pub fn class_rank(&self, i: usize) -> usize {
        self.class_ranks[i]
    }

    pub fn union_rank(&self, i: usize, j: usize) -> usize {
        self.union_ranks[&(i.min(j), i.max(j))]
    }

    pub fn union_ranks(&self) -> &BTreeMap<(usize, usize), usize> {
        &self.union_ranks
    }

    pub fn mean_mode(&self) -> MeanMode {
        self.mean_mode
    }

    /// Dimension shared by the two class subspaces.
    pub fn overlap(&self, i: usize, j: usize) -> usize {
        self.class_ranks[i] + self.class_ranks[j] - self.union_rank(i, j)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    /// Defaults to uniform.
    pub priors: Option<Vec<f64>>,
    /// Covariance eigenvalues are drawn uniformly from this interval.
    pub eigenvalue_range: (f64, f64),
    /// Fresh random bases tried before giving up on rank verification.
    pub max_attempts: u32,
    /// For nonzero means, redraw until every pairwise mean difference lies
    /// outside `im(Σ_i + Σ_j)` (skipped for pairs whose union is all of R^N).
    pub mean_outside_union: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            priors: None,
            eigenvalue_range: (0.5, 1.5),
            max_attempts: 8,
            mean_outside_union: true,
        }
    }
}

pub fn synthesize_class_pair(spec: &RankSpec, seed: u64) -> Result<GmmModel> {
    if spec.num_classes() != 2 {
        return Err(Error::InvalidArgument(format!(
            "class-pair synthesis needs 2 classes, got {}",
            spec.num_classes()
        )));
    }
    synthesize_ensemble(spec, seed)
}

pub fn synthesize_ensemble(spec: &RankSpec, seed: u64) -> Result<GmmModel> {
    synthesize_ensemble_with(spec, &SynthesisOptions::default(), seed)
}

/// Builds a model whose covariances reproduce `spec` exactly.
///
/// Each class subspace is spanned by a subset of one random orthonormal
/// basis of R^N; subsets are chosen so that classes `i` and `j` share
/// exactly `r_Σi + r_Σj − r_Σij` basis vectors.
pub fn synthesize_ensemble_with(spec: &RankSpec, options: &SynthesisOptions, seed: u64) -> Result<GmmModel> {
    let l = spec.num_classes();
    let n = spec.ambient_dim();
    let priors = match &options.priors {
        Some(p) if p.len() != l => {
            return Err(Error::InvalidArgument(format!("{} priors given for {l} classes", p.len())))
        }
        Some(p) => p.clone(),
        None => vec![1.0 / l as f64; l],
    };
    let (lo, hi) = options.eigenvalue_range;
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "eigenvalue range [{lo}, {hi}] must satisfy 0 < lo <= hi"
        )));
    }
    let subsets = allocate_subspaces(spec)?;

    let mut rng = seeds::rng_from(seed);
    let tol = RankTolerance::default();
    let eigen_dist = Uniform::new_inclusive(lo, hi).expect("validated range");
    let mut last_violation = String::new();
    for _attempt in 0..options.max_attempts.max(1) {
        let basis = haar_orthogonal(n, &mut rng);
        let covariances: Vec<PsdMatrix> = subsets
            .iter()
            .map(|subset| {
                let mut cov = DMatrix::zeros(n, n);
                for &v in subset {
                    let q = basis.column(v);
                    let lambda: f64 = rng.sample(eigen_dist);
                    cov += q * q.transpose() * lambda;
                }
                PsdMatrix::new(cov)
            })
            .collect::<Result<_>>()?;

        match verify_ranks(spec, &covariances, tol) {
            Ok(()) => {
                let (means, metadata) = draw_means(spec, &covariances, options, &mut rng)?;
                let classes = covariances
                    .into_iter()
                    .zip(means)
                    .zip(&priors)
                    .map(|((cov, mean), &p)| GaussianClass::new(mean, cov, p))
                    .collect::<Result<Vec<_>>>()?;
                return Ok(GmmModel::new(classes)?.with_metadata(metadata));
            }
            Err(v) => last_violation = v,
        }
    }
    Err(Error::InfeasibleRanks(format!(
        "rank verification failed after {} attempts: {last_violation}",
        options.max_attempts
    )))
}

fn verify_ranks(spec: &RankSpec, covs: &[PsdMatrix], tol: RankTolerance) -> std::result::Result<(), String> {
    for (i, c) in covs.iter().enumerate() {
        let r = numerical_rank(c, tol);
        if r != spec.class_rank(i) {
            return Err(format!("class {} has rank {r}, expected {}", i + 1, spec.class_rank(i)));
        }
    }
    for (&(i, j), &expected) in spec.union_ranks() {
        let sum = PsdMatrix::new(covs[i].matrix() + covs[j].matrix()).map_err(|e| e.to_string())?;
        let r = numerical_rank(&sum, tol);
        if r != expected {
            return Err(format!("pair ({}, {}) has union rank {r}, expected {expected}", i + 1, j + 1));
        }
    }
    Ok(())
}

fn draw_means<R: Rng>(
    spec: &RankSpec,
    covs: &[PsdMatrix],
    options: &SynthesisOptions,
    rng: &mut R,
) -> Result<(Vec<DVector<f64>>, ModelMetadata)> {
    let l = spec.num_classes();
    let n = spec.ambient_dim();
    if spec.mean_mode() == MeanMode::Zero {
        return Ok((vec![DVector::zeros(n); l], ModelMetadata::default()));
    }
    let tol = RankTolerance::default();
    let unions: Vec<((usize, usize), PsdMatrix)> = spec
        .union_ranks()
        .keys()
        .map(|&(i, j)| Ok(((i, j), PsdMatrix::new(covs[i].matrix() + covs[j].matrix())?)))
        .collect::<Result<_>>()?;
    let mut redraws = 0;
    loop {
        let means: Vec<DVector<f64>> = (0..l)
            .map(|_| DVector::from_fn(n, |_, _| rng.sample(StandardNormal)))
            .collect();
        let mut acceptable = true;
        for ((i, j), union) in &unions {
            let diff = &means[*i] - &means[*j];
            if diff.norm() == 0.0 {
                acceptable = false;
                break;
            }
            if options.mean_outside_union
                && spec.union_rank(*i, *j) < n
                && image_contains(union, &diff, tol)?
            {
                acceptable = false;
                break;
            }
        }
        if acceptable {
            let metadata = ModelMetadata {
                mean_outside_union: options.mean_outside_union,
                mean_redraws: redraws,
            };
            return Ok((means, metadata));
        }
        redraws += 1;
        if redraws > MAX_MEAN_REDRAWS {
            return Err(Error::InvalidModel(format!(
                "no admissible means after {MAX_MEAN_REDRAWS} redraws"
            )));
        }
    }
}

/// Uniformly distributed orthogonal matrix (QR of a Gaussian matrix with the
/// sign of `diag(R)` absorbed into `Q`).
fn haar_orthogonal<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for k in 0..n {
        if r[(k, k)] < 0.0 {
            q.column_mut(k).neg_mut();
        }
    }
    q
}

/// Assigns each class a set of basis-vector indices in `0..N` with
/// `|S_i| = r_Σi` and `|S_i ∩ S_j| = r_Σi + r_Σj − r_Σij`, by backtracking.
pub fn allocate_subspaces(spec: &RankSpec) -> Result<Vec<Vec<usize>>> {
    let mut sets = Vec::with_capacity(spec.num_classes());
    if place_class(spec, &mut sets, 0) {
        Ok(sets)
    } else {
        let (i, j) = first_tight_pair(spec);
        Err(Error::InfeasibleRanks(format!(
            "no assignment of shared subspaces fits in N = {} dimensions (first constrained pair: ({}, {}))",
            spec.ambient_dim(),
            i + 1,
            j + 1
        )))
    }
}

fn first_tight_pair(spec: &RankSpec) -> (usize, usize) {
    spec.union_ranks()
        .keys()
        .copied()
        .find(|&(i, j)| spec.overlap(i, j) > 0)
        .unwrap_or((0, 1))
}

fn place_class(spec: &RankSpec, sets: &mut Vec<Vec<usize>>, used: usize) -> bool {
    let k = sets.len();
    if k == spec.num_classes() {
        return true;
    }
    // Group already-used vectors by which earlier classes contain them.
    let mut atoms: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for v in 0..used {
        let mask = sets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.contains(&v))
            .fold(0u64, |m, (j, _)| m | (1 << j));
        atoms.entry(mask).or_default().push(v);
    }
    let atoms: Vec<(u64, Vec<usize>)> = atoms.into_iter().collect();
    let needs: Vec<usize> = (0..k).map(|j| spec.overlap(j, k)).collect();
    let mut counts = vec![0usize; atoms.len()];
    choose_counts(spec, sets, used, &atoms, &mut counts, 0, needs)
}

fn choose_counts(
    spec: &RankSpec,
    sets: &mut Vec<Vec<usize>>,
    used: usize,
    atoms: &[(u64, Vec<usize>)],
    counts: &mut [usize],
    a: usize,
    needs: Vec<usize>,
) -> bool {
    let k = sets.len();
    let rank = spec.class_rank(k);
    let shared: usize = counts[..a].iter().sum();
    if a == atoms.len() {
        if needs.iter().any(|&n| n != 0) {
            return false;
        }
        let fresh = rank - shared;
        if used + fresh > spec.ambient_dim() {
            return false;
        }
        let mut set: Vec<usize> = atoms
            .iter()
            .zip(counts.iter())
            .flat_map(|((_, vs), &c)| vs[..c].iter().copied())
            .collect();
        set.extend(used..used + fresh);
        sets.push(set);
        if place_class(spec, sets, used + fresh) {
            return true;
        }
        sets.pop();
        return false;
    }
    let (mask, vectors) = &atoms[a];
    let members: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
    let cap = members
        .iter()
        .map(|&j| needs[j])
        .min()
        .unwrap_or(0)
        .min(vectors.len())
        .min(rank - shared);
    for c in (0..=cap).rev() {
        let mut next = needs.clone();
        for &j in &members {
            next[j] -= c;
        }
        counts[a] = c;
        if choose_counts(spec, sets, used, atoms, counts, a + 1, next) {
            return true;
        }
    }
    counts[a] = 0;
    false
}

/// Draws a class index according to the priors and a source vector from
/// that class, `x = μ_i + B_i z` with `z` standard normal.
pub fn sample_source<R: Rng + ?Sized>(model: &GmmModel, rng: &mut R) -> (usize, DVector<f64>) {
    let class_index = draw_class(model, rng);
    let class = model.class(class_index);
    let mut x = class.mean.clone();
    let b = class.factor();
    for col in 0..b.ncols() {
        let z: f64 = rng.sample(StandardNormal);
        x.axpy(z, &b.column(col), 1.0);
    }
    (class_index, x)
}

pub(crate) fn draw_class<R: Rng + ?Sized>(model: &GmmModel, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, c) in model.classes.iter().enumerate() {
        if c.prior > 0.0 {
            cumulative += c.prior;
            last_positive = i;
            if u < cumulative {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::pseudo_det;

    fn rank(m: &PsdMatrix) -> usize {
        numerical_rank(m, RankTolerance::default())
    }

    fn union(model: &GmmModel, i: usize, j: usize) -> PsdMatrix {
        PsdMatrix::new(model.class(i).covariance().matrix() + model.class(j).covariance().matrix()).unwrap()
    }

    fn fig3_spec() -> RankSpec {
        RankSpec::new(
            6,
            vec![2, 3, 3, 2],
            [
                ((0, 1), 4),
                ((0, 2), 5),
                ((0, 3), 4),
                ((1, 2), 4),
                ((1, 3), 5),
                ((2, 3), 4),
            ],
            MeanMode::Zero,
        )
        .unwrap()
    }

    #[test]
    fn zero_mean_pair_has_prescribed_ranks() {
        let spec = RankSpec::pair(6, 2, 3, 4, MeanMode::Zero).unwrap();
        let model = synthesize_class_pair(&spec, 1).unwrap();
        assert_eq!(rank(model.class(0).covariance()), 2);
        assert_eq!(rank(model.class(1).covariance()), 3);
        assert_eq!(rank(&union(&model, 0, 1)), 4);
        assert_eq!(model.priors(), vec![0.5, 0.5]);
        assert!(model.classes().iter().all(|c| c.mean().norm() == 0.0));
    }

    #[test]
    fn overlapping_pair_with_distinct_means() {
        let spec = RankSpec::pair(6, 2, 2, 2, MeanMode::DistinctNonzero).unwrap();
        let model = synthesize_class_pair(&spec, 2).unwrap();
        assert_eq!(rank(&union(&model, 0, 1)), 2);
        let diff = model.class(0).mean() - model.class(1).mean();
        assert!(diff.norm() > 0.0);
        assert!(!image_contains(&union(&model, 0, 1), &diff, RankTolerance::default()).unwrap());
        assert!(model.metadata().mean_outside_union);
    }

    #[test]
    fn disjoint_rank_one_classes_fill_the_plane() {
        let spec = RankSpec::pair(2, 1, 1, 2, MeanMode::Zero).unwrap();
        let model = synthesize_class_pair(&spec, 3).unwrap();
        let u = union(&model, 0, 1);
        assert_eq!(rank(&u), 2);
        let inner = (model.class(0).covariance().matrix() * model.class(1).covariance().matrix()).amax();
        assert!(inner < 1e-12, "subspaces should be orthogonal");
        assert!(pseudo_det(&u, RankTolerance::default()) > 0.0);
    }

    #[test]
    fn infeasible_triple_is_rejected_before_sampling() {
        assert!(matches!(
            RankSpec::pair(6, 2, 3, 2, MeanMode::Zero),
            Err(Error::InfeasibleRanks(_))
        ));
        assert!(matches!(
            RankSpec::pair(4, 3, 3, 5, MeanMode::Zero),
            Err(Error::InfeasibleRanks(_))
        ));
        assert!(matches!(
            RankSpec::pair(4, 0, 3, 3, MeanMode::Zero),
            Err(Error::InfeasibleRanks(_))
        ));
    }

    #[test]
    fn four_class_ensemble_matches_all_ten_ranks() {
        let spec = fig3_spec();
        let model = synthesize_ensemble(&spec, 4).unwrap();
        for i in 0..4 {
            assert_eq!(rank(model.class(i).covariance()), spec.class_rank(i));
            for j in (i + 1)..4 {
                assert_eq!(rank(&union(&model, i, j)), spec.union_rank(i, j), "pair {i},{j}");
            }
        }
        assert_eq!(model.priors(), vec![0.25; 4]);
    }

    #[test]
    fn three_orthogonal_lines() {
        let spec = RankSpec::new(3, vec![1, 1, 1], [((0, 1), 2), ((0, 2), 2), ((1, 2), 2)], MeanMode::Zero)
            .unwrap();
        let model = synthesize_ensemble(&spec, 5).unwrap();
        let sum = model.classes().iter().fold(DMatrix::zeros(3, 3), |acc, c| acc + c.covariance().matrix());
        assert_eq!(rank(&PsdMatrix::new(sum).unwrap()), 3);
    }

    #[test]
    fn allocation_reports_unrealizable_configurations() {
        // Three pairwise-disjoint lines do not fit in the plane.
        let spec = RankSpec::new(2, vec![1, 1, 1], [((0, 1), 2), ((0, 2), 2), ((1, 2), 2)], MeanMode::Zero)
            .unwrap();
        let err = synthesize_ensemble(&spec, 0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleRanks(_)), "{err}");
    }

    #[test]
    fn allocation_sets_have_prescribed_overlaps() {
        let spec = fig3_spec();
        let sets = allocate_subspaces(&spec).unwrap();
        for i in 0..4 {
            assert_eq!(sets[i].len(), spec.class_rank(i));
            for j in (i + 1)..4 {
                let shared = sets[i].iter().filter(|v| sets[j].contains(v)).count();
                assert_eq!(shared, spec.overlap(i, j));
            }
        }
    }

    #[test]
    fn degenerate_prior_always_draws_first_class() {
        let spec = RankSpec::pair(3, 1, 1, 2, MeanMode::Zero).unwrap();
        let options = SynthesisOptions {
            priors: Some(vec![1.0, 0.0]),
            ..SynthesisOptions::default()
        };
        let model = synthesize_ensemble_with(&spec, &options, 1).unwrap();
        let mut rng = seeds::rng_from(9);
        for _ in 0..1000 {
            assert_eq!(sample_source(&model, &mut rng).0, 0);
        }
    }

    #[test]
    fn point_mass_class_returns_its_mean() {
        let m = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = GaussianClass::new(m.clone(), PsdMatrix::zeros(3), 0.5).unwrap();
        let b = GaussianClass::new(DVector::zeros(3), PsdMatrix::zeros(3), 0.5).unwrap();
        let model = GmmModel::new(vec![a, b]).unwrap();
        let mut rng = seeds::rng_from(3);
        for _ in 0..100 {
            let (k, x) = sample_source(&model, &mut rng);
            if k == 0 {
                assert_eq!(x, m);
            } else {
                assert_eq!(x, DVector::zeros(3));
            }
        }
    }

    #[test]
    fn empirical_covariance_matches_within_five_percent() {
        let spec = RankSpec::pair(4, 2, 2, 4, MeanMode::Zero).unwrap();
        let options = SynthesisOptions {
            priors: Some(vec![1.0, 0.0]),
            ..SynthesisOptions::default()
        };
        let model = synthesize_ensemble_with(&spec, &options, 8).unwrap();
        let sigma = model.class(0).covariance().matrix().clone();
        let mut rng = seeds::rng_from(10);
        let draws = 100_000;
        let mut acc = DMatrix::zeros(4, 4);
        for _ in 0..draws {
            let (_, x) = sample_source(&model, &mut rng);
            acc += &x * x.transpose();
        }
        let emp = acc / draws as f64;
        // Entrywise comparison relative to the covariance scale; small
        // off-diagonal entries would make a per-entry ratio meaningless.
        let scale = sigma.amax();
        for (e, s) in emp.iter().zip(sigma.iter()) {
            assert!((e - s).abs() <= 0.05 * scale, "{e} vs {s}");
        }
    }

    #[test]
    fn samples_stay_in_the_class_affine_set_and_match_priors() {
        let spec = RankSpec::pair(5, 2, 3, 4, MeanMode::DistinctNonzero).unwrap();
        let options = SynthesisOptions {
            priors: Some(vec![0.3, 0.7]),
            ..SynthesisOptions::default()
        };
        let model = synthesize_ensemble_with(&spec, &options, 6).unwrap();
        let mut rng = seeds::rng_from(12);
        let draws = 100_000;
        let mut first = 0usize;
        for k in 0..draws {
            let (i, x) = sample_source(&model, &mut rng);
            if i == 0 {
                first += 1;
            }
            if k < 2000 {
                let c = model.class(i);
                assert!(image_contains(c.covariance(), &(x - c.mean()), RankTolerance::default()).unwrap());
            }
        }
        let p = 0.3;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((first as f64 - draws as f64 * p).abs() <= 3.0 * sd);
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let spec = fig3_spec();
        let model = synthesize_ensemble(&spec, 11).unwrap();
        let text = model.to_text();
        let back = GmmModel::from_text(&text, 1).unwrap();
        assert_eq!(back.to_text(), text);
        for (a, b) in model.classes().iter().zip(back.classes()) {
            assert_eq!(a.covariance().matrix(), b.covariance().matrix());
            assert_eq!(a.factor(), b.factor());
        }
    }

    #[test]
    fn text_errors_carry_line_numbers() {
        let text = "ambient_dim = 2\nclasses = 2\n[class 1]\nprior = 0.5\nmean = 0 x\ncovariance = 1 0 0 1\n[class 2]\nprior = 0.5\nmean = 0 0\ncovariance = 1 0 0 1\n";
        let err = GmmModel::from_text(text, 1).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err}");
    }

    #[test]
    fn priors_must_sum_to_one() {
        let c = || GaussianClass::new(DVector::zeros(2), PsdMatrix::identity(2), 0.4).unwrap();
        assert!(matches!(GmmModel::new(vec![c(), c()]), Err(Error::InvalidModel(_))));
    }
}
