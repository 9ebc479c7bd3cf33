use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{GameKind, SchedKind};
use crate::CliError;

/// Ring sizes as a number, a list, or text such as `"6..14"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sizes {
    One(usize),
    Many(Vec<usize>),
    Text(String),
}

impl Sizes {
    pub fn resolve(&self) -> Result<Vec<usize>, CliError> {
        match self {
            Self::One(n) => Ok(vec![*n]),
            Self::Many(v) if !v.is_empty() => Ok(v.clone()),
            Self::Many(_) => Err(CliError::validation("empty list of ring sizes")),
            Self::Text(s) => parse_sizes(s),
        }
    }
}

/// A count given as an integer or as text in scientific notation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Int(u64),
    Text(String),
}

impl Count {
    pub fn resolve(&self) -> Result<u64, CliError> {
        match self {
            Self::Int(v) => Ok(*v),
            Self::Text(s) => parse_count(s),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equal_middle: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// Bound for brute-force and generator cross-checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosscheck: Option<f64>,
}

/// Keys accepted in a config file; a manifest's `parameters` object uses the
/// same keys, so a manifest can be fed back with `--config`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<Sizes>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheduler: Option<SchedKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turns: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burnin: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicas: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check_conservation: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equal_middle: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub draws: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}: {e}", path.display())))?;
        Self::from_json(&text)
            .map_err(|e| CliError::validation(format!("config {}: {}", path.display(), e.message)))
    }

    /// Accepts a plain config, a sidecar manifest, or a JSON result document.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| CliError::validation(e.to_string()))?;
        let params = value
            .get("manifest")
            .and_then(|m| m.get("parameters"))
            .or_else(|| value.get("parameters"))
            .unwrap_or(&value);
        serde_json::from_value(params.clone()).map_err(|e| CliError::validation(e.to_string()))
    }
}

pub fn parse_p(text: &str) -> Result<[f64; 4], CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::validation(format!(
            "--p needs four comma-separated values, got {text:?}"
        )));
    }
    let mut p = [0.0; 4];
    for (slot, part) in p.iter_mut().zip(parts) {
        *slot = part
            .parse()
            .map_err(|_| CliError::validation(format!("bad probability {part:?}")))?;
    }
    Ok(p)
}

/// `8`, `5,7,9`, or the inclusive range `6..14`.
pub fn parse_sizes(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::validation(format!("bad ring sizes {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (usize, usize) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

/// Integers, with scientific notation such as `1e6` allowed when exact.
pub fn parse_count(text: &str) -> Result<u64, CliError> {
    let text = text.trim();
    if let Ok(v) = text.replace('_', "").parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = text
        .parse()
        .map_err(|_| CliError::validation(format!("bad count {text:?}")))?;
    if v >= 0.0 && v.fract() == 0.0 && v <= 9.007_199_254_740_992e15 {
        Ok(v as u64)
    } else {
        Err(CliError::validation(format!(
            "count {text:?} is not a whole number"
        )))
    }
}
