//! Replay files: the effective configuration, the synthesized model and
//! every measurement matrix, enough to recompute a run without reseeding.
//!
//! Blocks start with a line beginning with `@`: `@config`, `@model`, and one
//! `@phi m=<M> draw=<d>` per matrix. Numbers are written in round-trip exact
//! form.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use cclass_core::textio::{matrix_from_text, matrix_to_text};
use cclass_core::GmmModel;

use crate::config::parse_config;
use crate::experiment::Prepared;
use crate::CliError;

const MAGIC: &str = "# cclass replay v1";

pub fn to_text(prepared: &Prepared) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "@config").unwrap();
    out.push_str(&prepared.config.to_text());
    writeln!(out, "@model").unwrap();
    out.push_str(&prepared.model.to_text());
    for (m, draws) in &prepared.matrices {
        for (d, phi) in draws.iter().enumerate() {
            writeln!(out, "@phi m={m} draw={d}").unwrap();
            out.push_str(&matrix_to_text(phi));
        }
    }
    out
}

struct Block {
    header: String,
    first_line: usize,
    body: String,
}

fn blocks(text: &str) -> Result<Vec<Block>, CliError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim() == MAGIC => {}
        _ => return Err(CliError::Replay(format!("line 1: expected `{MAGIC}`"))),
    }
    let mut out: Vec<Block> = Vec::new();
    for (k, raw) in lines {
        if let Some(header) = raw.strip_prefix('@') {
            out.push(Block {
                header: header.trim().to_string(),
                first_line: k + 2,
                body: String::new(),
            });
        } else if let Some(block) = out.last_mut() {
            block.body.push_str(raw);
            block.body.push('\n');
        } else if !raw.trim().is_empty() {
            return Err(CliError::Replay(format!("line {}: content before the first block", k + 1)));
        }
    }
    Ok(out)
}

fn phi_header(header: &str) -> Option<(usize, usize)> {
    let rest = header.strip_prefix("phi ")?;
    let mut m = None;
    let mut d = None;
    for token in rest.split_whitespace() {
        match token.split_once('=')? {
            ("m", v) => m = Some(v.parse().ok()?),
            ("draw", v) => d = Some(v.parse().ok()?),
            _ => return None,
        }
    }
    Some((m?, d?))
}

pub fn from_text(text: &str) -> Result<Prepared, CliError> {
    let mut config = None;
    let mut model = None;
    let mut matrices: BTreeMap<usize, Vec<_>> = BTreeMap::new();
    for block in blocks(text)? {
        let context = |e: cclass_core::Error| CliError::Replay(format!("block `@{}`: {e}", block.header));
        match block.header.as_str() {
            // Config line numbers are relative to the embedded text.
            "config" => config = Some(parse_config(&block.body).map_err(context)?),
            "model" => model = Some(GmmModel::from_text(&block.body, block.first_line).map_err(context)?),
            header => {
                let (m, d) = phi_header(header)
                    .ok_or_else(|| CliError::Replay(format!("line {}: unknown block `@{header}`", block.first_line - 1)))?;
                let draws = matrices.entry(m).or_default();
                if draws.len() != d {
                    return Err(CliError::Replay(format!("line {}: draws for M = {m} out of order", block.first_line - 1)));
                }
                let phi = matrix_from_text(&block.body, block.first_line).map_err(context)?;
                if phi.nrows() != m {
                    return Err(CliError::Replay(format!("block `@{header}`: matrix has {} rows", phi.nrows())));
                }
                draws.push(phi);
            }
        }
    }
    let config = config.ok_or_else(|| CliError::Replay("missing `@config` block".into()))?;
    let model = model.ok_or_else(|| CliError::Replay("missing `@model` block".into()))?;
    if model.ambient_dim() != config.spec.ambient_dim() {
        return Err(CliError::Replay("model dimension differs from the configuration".into()));
    }
    for &m in &config.m_values {
        match matrices.get(&m) {
            Some(draws) if draws.len() == config.phi_draws && draws.iter().all(|p| p.ncols() == model.ambient_dim()) => {}
            _ => {
                return Err(CliError::Replay(format!(
                    "expected {} matrices of size {m}x{} for M = {m}",
                    config.phi_draws,
                    model.ambient_dim()
                )))
            }
        }
    }
    Ok(Prepared {
        config,
        model,
        matrices,
    })
}
