//! Experiment configuration files.
//!
//! Line-oriented `key = value` pairs grouped under `[section]` headers; `#`
//! starts a comment line. Every key is checked, so a typo is an error rather
//! than a silently ignored setting.
//!
//! ```text
//! [model]
//! ambient_dim = 6
//! ranks = 2 3
//! union_ranks = 1-2:4
//! mean_mode = zero
//!
//! [measurement]
//! m_values = 1 2 3 4 5 6
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use cclass_core::curve::log_grid;
use cclass_core::textio::{self, Entry};
use cclass_core::{Error, FitWindow, MeanMode, RankSpec, Result, SynthesisOptions, UnionBoundVariant};

pub const DEFAULT_TRIALS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: RankSpec,
    pub priors: Option<Vec<f64>>,
    pub eigenvalue_range: (f64, f64),
    pub m_values: Vec<usize>,
    /// Measurement matrices per `M`; bounds are averaged and Monte Carlo
    /// counts pooled over them.
    pub phi_draws: usize,
    pub start_decade: i32,
    pub stop_decade: i32,
    pub points_per_decade: u32,
    /// Monte Carlo trials per grid point and matrix; 0 disables simulation.
    pub trials: u64,
    pub seed: u64,
    pub union_bound: UnionBoundVariant,
    /// `None` fits over the two lowest decades of the grid.
    pub fit_window: Option<FitWindow>,
    /// A diversity order quoted from elsewhere, compared against the
    /// closed form and the fit in the report.
    pub reference_diversity: Option<f64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn sigma_grid(&self) -> Vec<f64> {
        log_grid(self.start_decade, self.stop_decade, self.points_per_decade)
            .expect("decades validated at parse time")
    }

    pub fn fit_window(&self) -> FitWindow {
        self.fit_window.unwrap_or_else(|| {
            FitWindow::lowest_decades(&self.sigma_grid()).expect("grid validated at parse time")
        })
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        SynthesisOptions {
            priors: self.priors.clone(),
            eigenvalue_range: self.eigenvalue_range,
            ..SynthesisOptions::default()
        }
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let spec = &self.spec;
        let mut out = String::new();
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        out.push_str("[model]\n");
        writeln!(out, "ambient_dim = {}", spec.ambient_dim()).unwrap();
        writeln!(out, "ranks = {}", list(spec.class_ranks())).unwrap();
        let unions: Vec<String> = spec
            .union_ranks()
            .iter()
            .map(|(&(i, j), r)| format!("{}-{}:{r}", i + 1, j + 1))
            .collect();
        writeln!(out, "union_ranks = {}", unions.join(" ")).unwrap();
        let mode = match spec.mean_mode() {
            MeanMode::Zero => "zero",
            MeanMode::DistinctNonzero => "nonzero",
        };
        writeln!(out, "mean_mode = {mode}").unwrap();
        if let Some(p) = &self.priors {
            writeln!(out, "priors = {}", textio::fmt_list(p.iter().copied())).unwrap();
        }
        let (lo, hi) = self.eigenvalue_range;
        writeln!(out, "eigenvalue_range = {} {}", textio::fmt_f64(lo), textio::fmt_f64(hi)).unwrap();

        out.push_str("\n[measurement]\n");
        writeln!(out, "m_values = {}", list(&self.m_values)).unwrap();
        writeln!(out, "phi_draws = {}", self.phi_draws).unwrap();

        out.push_str("\n[sweep]\n");
        writeln!(out, "start_decade = {}", self.start_decade).unwrap();
        writeln!(out, "stop_decade = {}", self.stop_decade).unwrap();
        writeln!(out, "points_per_decade = {}", self.points_per_decade).unwrap();

        out.push_str("\n[simulation]\n");
        writeln!(out, "trials = {}", self.trials).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();

        out.push_str("\n[bounds]\n");
        writeln!(out, "union_bound = {}", self.union_bound).unwrap();

        if self.fit_window.is_some() || self.reference_diversity.is_some() {
            out.push_str("\n[fit]\n");
            if let Some(w) = self.fit_window {
                writeln!(out, "window = {} {}", textio::fmt_f64(w.lo_decade), textio::fmt_f64(w.hi_decade)).unwrap();
            }
            if let Some(d) = self.reference_diversity {
                writeln!(out, "reference_diversity = {}", textio::fmt_f64(d)).unwrap();
            }
        }

        out.push_str("\n[output]\n");
        writeln!(out, "dir = {}", self.output_dir.display()).unwrap();
        out
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("model", &["ambient_dim", "ranks", "union_ranks", "mean_mode", "priors", "eigenvalue_range"]),
    ("measurement", &["m_values", "phi_draws"]),
    ("sweep", &["start_decade", "stop_decade", "points_per_decade"]),
    ("simulation", &["trials", "seed"]),
    ("bounds", &["union_bound"]),
    ("fit", &["window", "reference_diversity"]),
    ("output", &["dir"]),
];

struct Section<'a> {
    header_line: usize,
    entries: BTreeMap<&'a str, Entry<'a>>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&Entry<'a>> {
        self.entries.get(key)
    }

    fn require(&self, name: &str, key: &str) -> Result<&Entry<'a>> {
        self.get(key).ok_or_else(|| Error::Parse {
            line: self.header_line,
            message: format!("section [{name}] is missing required key `{key}`"),
        })
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<&str, Section<'_>>> {
    let mut sections: BTreeMap<&str, Section<'_>> = BTreeMap::new();
    let mut current: Option<&str> = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim();
            if !SCHEMA.iter().any(|(s, _)| *s == name) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            if sections.contains_key(name) {
                return Err(Error::Parse {
                    line,
                    message: format!("section [{name}] appears twice"),
                });
            }
            sections.insert(
                name,
                Section {
                    header_line: line,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
            continue;
        }
        for entry in textio::entries(raw, line)? {
            let Some(name) = current else {
                return Err(entry.error(format!("key `{}` appears before any section header", entry.key)));
            };
            let allowed = SCHEMA.iter().find(|(s, _)| *s == name).unwrap().1;
            if !allowed.contains(&entry.key) {
                return Err(entry.error(format!("unknown key `{}` in section [{name}]", entry.key)));
            }
            let section = sections.get_mut(name).unwrap();
            if section.entries.insert(entry.key, entry).is_some() {
                return Err(entry.error(format!("key `{}` given twice in section [{name}]", entry.key)));
            }
        }
    }
    Ok(sections)
}

fn int<T: std::str::FromStr>(e: &Entry<'_>, what: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| e.error(format!("`{}`: expected {what}, got `{}`", e.key, e.value)))
}

/// `1-2:4 1-3:5`, 1-based class indices.
fn union_ranks(e: &Entry<'_>) -> Result<Vec<((usize, usize), usize)>> {
    e.value
        .split_whitespace()
        .map(|token| {
            let bad = || e.error(format!("`union_ranks`: expected `i-j:rank`, got `{token}`"));
            let (pair, rank) = token.split_once(':').ok_or_else(bad)?;
            let (i, j) = pair.split_once('-').ok_or_else(bad)?;
            let i: usize = i.parse().map_err(|_| bad())?;
            let j: usize = j.parse().map_err(|_| bad())?;
            if i == 0 || j == 0 {
                return Err(e.error("`union_ranks`: class indices start at 1"));
            }
            Ok(((i - 1, j - 1), rank.parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let sections = split_sections(text)?;
    let section = |name: &str| {
        sections.get(name).ok_or_else(|| Error::Parse {
            line: 1,
            message: format!("missing section [{name}]"),
        })
    };

    let model = section("model")?;
    let ambient_dim: usize = int(model.require("model", "ambient_dim")?, "a positive integer")?;
    let ranks = model.require("model", "ranks")?.usize_list()?;
    let unions_entry = model.require("model", "union_ranks")?;
    let unions = union_ranks(unions_entry)?;
    let mode_entry = model.require("model", "mean_mode")?;
    let mean_mode = match mode_entry.value {
        "zero" => MeanMode::Zero,
        "nonzero" => MeanMode::DistinctNonzero,
        other => return Err(mode_entry.error(format!("`mean_mode`: expected `zero` or `nonzero`, got `{other}`"))),
    };
    let spec = RankSpec::new(ambient_dim, ranks, unions, mean_mode).map_err(|err| unions_entry.error(err.to_string()))?;

    let priors = match model.get("priors") {
        Some(e) => {
            let p = e.f64_list()?;
            if p.len() != spec.num_classes() {
                return Err(e.error(format!("`priors`: expected {} values, got {}", spec.num_classes(), p.len())));
            }
            if p.iter().any(|v| !(0.0..=1.0).contains(v)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(e.error("`priors`: values must lie in [0, 1] and sum to 1"));
            }
            Some(p)
        }
        None => None,
    };
    let eigenvalue_range = match model.get("eigenvalue_range") {
        Some(e) => match e.f64_list()?.as_slice() {
            &[lo, hi] if 0.0 < lo && lo <= hi && hi.is_finite() => (lo, hi),
            _ => return Err(e.error("`eigenvalue_range`: expected two numbers 0 < lo <= hi")),
        },
        None => SynthesisOptions::default().eigenvalue_range,
    };

    let measurement = section("measurement")?;
    let m_entry = measurement.require("measurement", "m_values")?;
    let m_values = m_entry.usize_list()?;
    if m_values.is_empty() {
        return Err(m_entry.error("`m_values`: need at least one value"));
    }
    if let Some(bad) = m_values.iter().find(|&&m| m < 1 || m > ambient_dim) {
        return Err(m_entry.error(format!(
            "`m_values`: every M must satisfy 1 <= M <= N = {ambient_dim}, got {bad}"
        )));
    }
    let phi_draws = match measurement.get("phi_draws") {
        Some(e) => match int::<usize>(e, "a positive integer")? {
            0 => return Err(e.error("`phi_draws`: must be at least 1")),
            n => n,
        },
        None => 1,
    };

    let empty = Section {
        header_line: 1,
        entries: BTreeMap::new(),
    };
    let optional = |name: &str| sections.get(name).unwrap_or(&empty);

    let sweep = optional("sweep");
    let decade = |key: &str, default: i32| sweep.get(key).map_or(Ok(default), |e| int::<i32>(e, "an integer"));
    let start_decade = decade("start_decade", 0)?;
    let stop_decade = decade("stop_decade", -6)?;
    let points_per_decade = sweep
        .get("points_per_decade")
        .map_or(Ok(10), |e| int::<u32>(e, "a positive integer"))?;
    if start_decade <= stop_decade {
        let line = sweep.get("stop_decade").or(sweep.get("start_decade")).map_or(sweep.header_line, |e| e.line);
        return Err(Error::Parse {
            line,
            message: format!("start_decade ({start_decade}) must exceed stop_decade ({stop_decade})"),
        });
    }
    if points_per_decade == 0 {
        return Err(sweep.get("points_per_decade").unwrap().error("`points_per_decade`: must be positive"));
    }

    let simulation = optional("simulation");
    let trials = simulation.get("trials").map_or(Ok(DEFAULT_TRIALS), |e| e.u64())?;
    let seed = simulation.get("seed").map_or(Ok(0), |e| e.u64())?;

    let union_bound = match optional("bounds").get("union_bound") {
        Some(e) => e.value.parse().map_err(|err: Error| e.error(err.to_string()))?,
        None => UnionBoundVariant::default(),
    };

    let fit = optional("fit");
    let fit_window = match fit.get("window") {
        Some(e) => match e.f64_list()?.as_slice() {
            &[lo, hi] => Some(FitWindow::new(lo, hi).map_err(|err| e.error(err.to_string()))?),
            _ => return Err(e.error("`window`: expected two decades `lo hi`")),
        },
        None => None,
    };
    let reference_diversity = fit.get("reference_diversity").map(|e| e.f64()).transpose()?;

    let output_dir = optional("output")
        .get("dir")
        .map_or_else(|| PathBuf::from("out"), |e| PathBuf::from(e.value));

    let config = ExperimentConfig {
        spec,
        priors,
        eigenvalue_range,
        m_values,
        phi_draws,
        start_decade,
        stop_decade,
        points_per_decade,
        trials,
        seed,
        union_bound,
        fit_window,
        reference_diversity,
        output_dir,
    };
    if let Some(w) = fit_window {
        let grid = config.sigma_grid();
        if grid.iter().filter(|&&s| w.contains(s)).count() < 4 {
            return Err(fit.get("window").unwrap().error(format!("`window`: {w} holds fewer than 4 grid points")));
        }
    }
    Ok(config)
}
