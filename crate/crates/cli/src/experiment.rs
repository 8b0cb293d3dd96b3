//! Runs a configured sweep: synthesize the model, draw the measurement
//! matrices, compute bound and Monte Carlo curves for every `M`, and check
//! them against the closed-form predictions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use cclass_core::asymptotics::{
    exponential_decay_correlation, fit_diversity_points, fit_measurement_gain, predict_pairs,
};
use cclass_core::gmm::synthesize_ensemble_with;
use cclass_core::seeds::{derive_seed, phi_seed, stream};
use cclass_core::textio::fmt_f64;
use cclass_core::{
    draw_measurement_matrix, fit_diversity, predict_multiclass, DiversityFit, ErrorCurve, GmmModel, ProjectedModel,
    Regime, RegimePrediction, SweepOptions,
};
use nalgebra::DMatrix;

use crate::config::ExperimentConfig;
use crate::{plot, replay, CliError};

/// Largest accepted gap between a fitted slope and the value it is checked
/// against.
pub const SLOPE_TOLERANCE: f64 = 0.05;
/// Exponential decay is accepted when `ln bound` and `1/σ²` correlate at
/// least this negatively.
pub const EXPONENTIAL_CORRELATION: f64 = -0.999;

/// A model together with the measurement matrices for every `M`.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub model: GmmModel,
    pub matrices: BTreeMap<usize, Vec<DMatrix<f64>>>,
}

pub fn prepare(config: ExperimentConfig) -> Result<Prepared, CliError> {
    let model = synthesize_ensemble_with(
        &config.spec,
        &config.synthesis_options(),
        derive_seed(config.seed, &[stream::MODEL]),
    )?;
    let n = config.spec.ambient_dim();
    let matrices = config
        .m_values
        .iter()
        .map(|&m| {
            let draws = (0..config.phi_draws as u64)
                .map(|d| draw_measurement_matrix(m, n, phi_seed(config.seed, d)))
                .collect();
            (m, draws)
        })
        .collect();
    Ok(Prepared {
        config,
        model,
        matrices,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FindingKind {
    /// Monte Carlo estimate above the bound.
    Violation,
    /// Fitted behaviour disagrees with the closed-form prediction.
    Mismatch,
    /// A quoted reference value disagrees with the closed form. Informational.
    Reference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub kind: FindingKind,
    pub message: String,
}

impl Finding {
    pub fn is_failure(&self) -> bool {
        self.kind != FindingKind::Reference
    }

    fn line(&self) -> String {
        let tag = match self.kind {
            FindingKind::Violation => "VIOLATION",
            FindingKind::Mismatch | FindingKind::Reference => "DISCREPANCY",
        };
        format!("{tag} {}", self.message)
    }
}

/// Everything computed for one `M`.
#[derive(Debug, Clone)]
pub struct MeasurementResult {
    pub m: usize,
    pub curve: ErrorCurve,
    pub prediction: RegimePrediction,
    pub pair_predictions: Vec<RegimePrediction>,
    pub fit: DiversityFit,
    pub fitted_gain: Option<f64>,
    pub exponential_correlation: Option<f64>,
    /// Slopes of the individual pair bounds (more than two classes only).
    pub pair_fits: Vec<((usize, usize), DiversityFit)>,
    pub findings: Vec<Finding>,
}

impl MeasurementResult {
    /// Pair with the smallest fitted slope.
    pub fn min_pair_fit(&self) -> Option<((usize, usize), DiversityFit)> {
        self.pair_fits
            .iter()
            .copied()
            .fold(None, |best, (pair, fit)| match best {
                Some((_, b)) if b.slope <= fit.slope => best,
                _ => Some((pair, fit)),
            })
    }
}

fn pair_label((i, j): (usize, usize)) -> String {
    format!("({},{})", i + 1, j + 1)
}

/// Sweeps one `M` on the current rayon pool and evaluates the checks.
pub fn evaluate(prepared: &Prepared, m: usize) -> Result<MeasurementResult, CliError> {
    let config = &prepared.config;
    let model = &prepared.model;
    let phis = prepared
        .matrices
        .get(&m)
        .ok_or_else(|| CliError::Replay(format!("no measurement matrix for M = {m}")))?;
    let grid = config.sigma_grid();
    let window = config.fit_window();
    let options = SweepOptions {
        trials: config.trials,
        seed: config.seed,
        variant: config.union_bound,
    };
    let curve = cclass_core::montecarlo::sweep_with_matrices(model, phis, &grid, &options)?;

    // Predictions and pair curves use the first matrix.
    let phi = &phis[0];
    let prediction = predict_multiclass(model, phi)?;
    let pair_predictions = predict_pairs(model, phi)?;
    let fit = fit_diversity(&curve, window)?;

    let mut findings = Vec::new();
    let violations = curve.violations();
    if violations > 0 {
        findings.push(Finding {
            kind: FindingKind::Violation,
            message: format!("M={m}: {violations} grid points with p_hat > bound + 3 ci"),
        });
    }

    let mut fitted_gain = None;
    let mut exponential_correlation = None;
    match prediction.regime {
        Regime::ErrorFloor => {
            if fit.slope.abs() > SLOPE_TOLERANCE {
                findings.push(Finding {
                    kind: FindingKind::Mismatch,
                    message: format!("M={m}: floor predicted but fitted slope is {:.4}", fit.slope),
                });
            }
        }
        Regime::PolynomialDecay { diversity, .. } => {
            fitted_gain = Some(fit_measurement_gain(&curve, diversity, window)?);
            if (fit.slope - diversity).abs() > SLOPE_TOLERANCE {
                findings.push(Finding {
                    kind: FindingKind::Mismatch,
                    message: format!("M={m}: fitted d_hat = {:.4} differs from closed-form d = {diversity}", fit.slope),
                });
            }
            if let Some(reference) = config.reference_diversity {
                if (reference - diversity).abs() > SLOPE_TOLERANCE {
                    let supported = if (fit.slope - diversity).abs() <= (fit.slope - reference).abs() {
                        diversity
                    } else {
                        reference
                    };
                    findings.push(Finding {
                        kind: FindingKind::Reference,
                        message: format!(
                            "M={m}: reference diversity {reference} differs from closed-form d = {diversity}; fitted d_hat = {:.4} supports {supported}",
                            fit.slope
                        ),
                    });
                }
            }
        }
        Regime::ExponentialDecay => {
            let r = exponential_decay_correlation(&curve.bound_points(), window)?;
            exponential_correlation = Some(r);
            if r > EXPONENTIAL_CORRELATION {
                findings.push(Finding {
                    kind: FindingKind::Mismatch,
                    message: format!("M={m}: exponential decay predicted but corr(ln bound, 1/sigma2) = {r:.6}"),
                });
            }
        }
    }

    let mut pair_fits = Vec::new();
    if model.num_classes() > 2 {
        let projected = ProjectedModel::new(model, phi)?;
        let mut series: BTreeMap<(usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
        for &s in &grid {
            for (pair, ln_b) in projected.ln_pair_bounds(s)? {
                series.entry(pair).or_default().push((s, ln_b));
            }
        }
        for (pair, points) in series {
            pair_fits.push((pair, fit_diversity_points(&points, window)?));
        }
    }

    let mut result = MeasurementResult {
        m,
        curve,
        prediction,
        pair_predictions,
        fit,
        fitted_gain,
        exponential_correlation,
        pair_fits,
        findings,
    };
    if let (Some((pair, min)), Some(_)) = (result.min_pair_fit(), result.prediction.diversity()) {
        if (result.fit.slope - min.slope).abs() > SLOPE_TOLERANCE {
            result.findings.push(Finding {
                kind: FindingKind::Mismatch,
                message: format!(
                    "M={m}: union slope {:.4} differs from the smallest pair slope {:.4} at {}",
                    result.fit.slope,
                    min.slope,
                    pair_label(pair)
                ),
            });
        }
    }
    Ok(result)
}

/// CSV for one curve. Column order is a stable interface.
pub fn render_csv(curve: &ErrorCurve, ambient_dim: usize) -> Result<String, CliError> {
    let mut out = Vec::new();
    out.extend_from_slice(
        format!(
            "# phi entries i.i.d. N(0, 1/N) with N = {ambient_dim}; M = {}; union bound variant {}\n",
            curve.m, curve.variant
        )
        .as_bytes(),
    );
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["sigma2", "inv_sigma2", "bound", "bound_variant", "mc_estimate", "mc_ci", "trials"])?;
        for row in &curve.rows {
            let (p, ci, trials) = match &row.mc {
                Some(mc) => (fmt_f64(mc.p_hat), fmt_f64(mc.ci_half_width), mc.trials.to_string()),
                None => (String::new(), String::new(), "0".to_string()),
            };
            w.write_record([
                fmt_f64(row.sigma2),
                fmt_f64(1.0 / row.sigma2),
                fmt_f64(row.bound()),
                curve.variant.to_string(),
                p,
                ci,
                trials,
            ])?;
        }
        w.flush().map_err(|e| CliError::Io {
            path: PathBuf::from("<csv buffer>"),
            source: e,
        })?;
    }
    Ok(String::from_utf8(out).expect("csv output is ASCII"))
}

pub fn csv_name(m: usize) -> String {
    format!("curve_m{m}.csv")
}

fn render_prediction(out: &mut String, label: &str, p: &RegimePrediction) {
    write!(out, "{label}{}", p.tag()).unwrap();
    if let Regime::PolynomialDecay {
        diversity,
        measurement_gain,
    } = p.regime
    {
        write!(out, " d = {diversity} g_m = {}", fmt_f64(measurement_gain)).unwrap();
        if p.gain_offset_unknown {
            out.push_str(" (finite offset a > 1 unknown)");
        }
    }
    if let Some(pair) = p.dominating_pair {
        write!(out, " pair {}", pair_label(pair)).unwrap();
    }
    out.push('\n');
}

pub fn render_report(config: &ExperimentConfig, results: &[MeasurementResult]) -> String {
    let spec = &config.spec;
    let mut out = String::new();
    writeln!(out, "classes: {}", spec.num_classes()).unwrap();
    writeln!(out, "ambient dimension N: {}", spec.ambient_dim()).unwrap();
    writeln!(out, "source ranks: {:?}", spec.class_ranks()).unwrap();
    let unions: Vec<String> = spec
        .union_ranks()
        .iter()
        .map(|(&pair, r)| format!("{}:{r}", pair_label(pair)))
        .collect();
    writeln!(out, "union ranks: {}", unions.join(" ")).unwrap();
    writeln!(out, "measurement matrix: i.i.d. N(0, 1/N) entries, {} draw(s) per M", config.phi_draws).unwrap();
    writeln!(out, "union bound variant: {}", config.union_bound).unwrap();
    writeln!(out, "trials per grid point: {}", config.trials).unwrap();
    writeln!(out, "seed: {}", config.seed).unwrap();
    writeln!(out, "fit window (sigma2): {}", config.fit_window()).unwrap();

    for r in results {
        writeln!(out, "\nM = {}", r.m).unwrap();
        render_prediction(&mut out, "  predicted: ", &r.prediction);
        if r.pair_predictions.len() > 1 {
            for p in &r.pair_predictions {
                let label = format!("  pair {}: ", pair_label(p.dominating_pair.expect("pair predictions carry their pair")));
                render_prediction(&mut out, &label, p);
            }
        }
        writeln!(
            out,
            "  fitted d_hat = {:.4} +/- {:.4} ({} points)",
            r.fit.slope, r.fit.std_error, r.fit.points
        )
        .unwrap();
        if let Some(g) = r.fitted_gain {
            write!(out, "  fitted g_m_hat = {}", fmt_f64(g)).unwrap();
            if let Some(pred) = r.prediction.measurement_gain() {
                write!(out, " (closed form / fitted = {:.4})", pred / g).unwrap();
            }
            out.push('\n');
        }
        if let Some(c) = r.exponential_correlation {
            writeln!(out, "  corr(ln bound, 1/sigma2) = {c:.6}").unwrap();
        }
        if !r.pair_fits.is_empty() {
            let slopes: Vec<String> = r
                .pair_fits
                .iter()
                .map(|(pair, f)| format!("{} {:.4}", pair_label(*pair), f.slope))
                .collect();
            writeln!(out, "  pair slopes: {}", slopes.join(", ")).unwrap();
            if let Some((pair, f)) = r.min_pair_fit() {
                writeln!(
                    out,
                    "  smallest pair slope {:.4} at {}; union slope {:.4}",
                    f.slope,
                    pair_label(pair),
                    r.fit.slope
                )
                .unwrap();
            }
        }
        if let Some(pair) = r.prediction.dominating_pair {
            if r.prediction.diversity().is_some() && r.pair_predictions.len() > 1 {
                writeln!(out, "  dominating pair: {}", pair_label(pair)).unwrap();
            }
        }
        let points = r.curve.rows.iter().filter(|row| row.mc.is_some()).count();
        writeln!(out, "  bound violations: {} of {points} simulated points", r.curve.violations()).unwrap();
        for f in &r.findings {
            writeln!(out, "  {}", f.line()).unwrap();
        }
    }

    let failures = results.iter().flat_map(|r| &r.findings).filter(|f| f.is_failure()).count();
    writeln!(out, "\nstatus: {}", if failures == 0 { "ok".to_string() } else { format!("{failures} failed check(s)") })
        .unwrap();
    out
}

#[derive(Debug)]
pub struct RunOutcome {
    pub results: Vec<MeasurementResult>,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn failures(&self) -> usize {
        self.results
            .iter()
            .flat_map(|r| &r.findings)
            .filter(|f| f.is_failure())
            .count()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Runs every `M` of the configuration and writes CSVs, `report.txt`,
/// `plot.svg` and `replay.txt` to the configured output directory.
pub fn run_experiment(config: ExperimentConfig) -> Result<RunOutcome, CliError> {
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let prepared = prepare(config)?;
    let n = prepared.config.spec.ambient_dim();
    let mut results = Vec::new();
    let mut files = Vec::new();
    for &m in &prepared.config.m_values {
        let result = evaluate(&prepared, m)?;
        let path = dir.join(csv_name(m));
        write_file(&path, &render_csv(&result.curve, n)?)?;
        files.push(path);
        results.push(result);
    }
    let outputs = [
        ("report.txt", render_report(&prepared.config, &results)),
        ("plot.svg", plot::render_svg(&results)),
        ("replay.txt", replay::to_text(&prepared)),
    ];
    for (name, text) in outputs {
        let path = dir.join(name);
        write_file(&path, &text)?;
        files.push(path);
    }
    Ok(RunOutcome { results, files })
}

/// Closed-form predictions only; no curves are computed.
pub fn render_predictions(config: ExperimentConfig) -> Result<String, CliError> {
    let prepared = prepare(config)?;
    let mut out = String::new();
    for (&m, phis) in &prepared.matrices {
        writeln!(out, "M = {m}").unwrap();
        render_prediction(&mut out, "  predicted: ", &predict_multiclass(&prepared.model, &phis[0])?);
        let pairs = predict_pairs(&prepared.model, &phis[0])?;
        if pairs.len() > 1 {
            for p in &pairs {
                let label = format!("  pair {}: ", pair_label(p.dominating_pair.expect("pair predictions carry their pair")));
                render_prediction(&mut out, &label, p);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub matched: Vec<String>,
    pub mismatched: Vec<String>,
}

/// Recomputes every curve from a replay file and compares it byte for byte
/// with the CSVs in `dir`.
pub fn verify_replay(replay_text: &str, dir: &Path) -> Result<VerifyOutcome, CliError> {
    let prepared = replay::from_text(replay_text)?;
    let n = prepared.config.spec.ambient_dim();
    let mut outcome = VerifyOutcome {
        matched: Vec::new(),
        mismatched: Vec::new(),
    };
    for &m in &prepared.config.m_values {
        let name = csv_name(m);
        let path = dir.join(&name);
        let on_disk = fs::read_to_string(&path).map_err(|source| CliError::Io { path, source })?;
        let result = evaluate(&prepared, m)?;
        if render_csv(&result.curve, n)? == on_disk {
            outcome.matched.push(name);
        } else {
            outcome.mismatched.push(name);
        }
    }
    Ok(outcome)
}
