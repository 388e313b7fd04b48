//! Experiment configuration: one JSON document, parsed strictly, then
//! resolved per experiment into typed parameters.
//!
//! ```json
//! {
//!   "lattice":    { "d": 2, "L": 4, "L_grid": [8, 16, 32], "mode": "torus" },
//!   "model":      { "kappa": 0.02, "N": 16, "N_grid": [16, 32], "kappa_grid": [0.01, 0.02] },
//!   "integrator": { "dt": 0.001, "T": 1.0, "scheme": "euler-maruyama" },
//!   "sampler":    { "burn_in": 100, "thin": 2, "count": 400, "replications": 64 },
//!   "init": "gff",
//!   "seeds":      { "master": 7 },
//!   "output":     { "dir": "runs/chaos", "checkpoint_every": 250 }
//! }
//! ```
//!
//! Every section is optional at parse time; each experiment states which
//! fields it needs and errors name the offending field by its JSON path.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeMode {
    Torus,
    Zd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitLaw {
    Gff,
    Ones,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub d: Option<usize>,
    #[serde(rename = "L")]
    pub side: Option<usize>,
    #[serde(rename = "L_grid")]
    pub side_grid: Option<Vec<usize>>,
    pub mode: Option<LatticeMode>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kappa: Option<f64>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "N_grid")]
    pub n_grid: Option<Vec<usize>>,
    pub kappa_grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub count: Option<usize>,
    pub replications: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    pub master: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub checkpoint_every: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub lattice: LatticeSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub integrator: IntegratorSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    pub init: Option<InitLaw>,
    #[serde(default)]
    pub seeds: SeedsSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            err(if path.is_empty() { "." } else { &path }, e.into_inner().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err(".", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn master_seed(&self) -> Result<u64, ConfigError> {
        self.seeds.master.ok_or_else(|| err("seeds.master", "required"))
    }
}

// Field accessors shared by the per-experiment resolvers.

pub(crate) fn require<T: Copy>(v: Option<T>, path: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| err(path, "required"))
}

pub(crate) fn positive_f64(v: Option<f64>, path: &str) -> Result<f64, ConfigError> {
    let x = require(v, path)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(err(path, format!("must be a finite number > 0, got {x}")));
    }
    Ok(x)
}

pub(crate) fn nonneg_f64(v: Option<f64>, path: &str) -> Result<f64, ConfigError> {
    let x = require(v, path)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(err(path, format!("must be a finite number >= 0, got {x}")));
    }
    Ok(x)
}

pub(crate) fn at_least(v: Option<usize>, min: usize, path: &str) -> Result<usize, ConfigError> {
    let x = require(v, path)?;
    if x < min {
        return Err(err(path, format!("must be >= {min}, got {x}")));
    }
    Ok(x)
}

pub(crate) fn grid<T: Copy + PartialOrd + fmt::Display>(
    v: &Option<Vec<T>>,
    path: &str,
    valid: impl Fn(T) -> bool,
    what: &str,
) -> Result<Vec<T>, ConfigError> {
    let g = v.as_ref().ok_or_else(|| err(path, "required"))?;
    if g.is_empty() {
        return Err(err(path, "must not be empty"));
    }
    for (j, &x) in g.iter().enumerate() {
        if !valid(x) {
            return Err(err(&format!("{path}[{j}]"), format!("{what}, got {x}")));
        }
        if j > 0 && !(g[j - 1] < x) {
            return Err(err(&format!("{path}[{j}]"), "grid must be strictly increasing"));
        }
    }
    Ok(g.clone())
}

pub(crate) fn lattice_dims(cfg: &Config) -> Result<(usize, usize), ConfigError> {
    let d = at_least(cfg.lattice.d, 1, "lattice.d")?;
    let side = at_least(cfg.lattice.side, 3, "lattice.L")?;
    Ok((d, side))
}

pub(crate) fn check_scheme(cfg: &Config) -> Result<(), ConfigError> {
    match cfg.integrator.scheme.as_deref() {
        None | Some("euler-maruyama") => Ok(()),
        Some(other) => Err(err(
            "integrator.scheme",
            format!("only \"euler-maruyama\" is implemented, got {other:?}"),
        )),
    }
}

pub(crate) fn stability_guard(dt: f64, kappa: f64, d: usize) -> Result<(), ConfigError> {
    let g = dt * (1.0 + 8.0 * kappa * d as f64);
    if g >= 0.5 {
        return Err(err("integrator.dt", format!("stability guard dt*(1+8*kappa*d) = {g} must be < 0.5")));
    }
    Ok(())
}

pub(crate) fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    err(path, message)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_document() {
        let cfg = Config::from_json(
            r#"{"lattice":{"d":2,"L":4},"model":{"kappa":0.02,"N_grid":[16,32]},
                "integrator":{"dt":0.001,"T":1.0},"sampler":{"replications":4},
                "init":"ones","seeds":{"master":3},"output":{"checkpoint_every":10}}"#,
        )
        .unwrap();
        assert_eq!(cfg.lattice.side, Some(4));
        assert_eq!(cfg.init, Some(InitLaw::Ones));
        assert_eq!(cfg.master_seed().unwrap(), 3);
    }

    #[test]
    fn errors_carry_field_paths() {
        let e = Config::from_json(r#"{"model":{"kappa":"high"}}"#).unwrap_err();
        assert_eq!(e.path, "model.kappa");
        let e = Config::from_json(r#"{"lattice":{"d":2,"side":4}}"#).unwrap_err();
        assert!(e.path.starts_with("lattice"), "{}", e.path);
        let e = Config::from_json(r#"{"model":{"N_grid":[16,-1]}}"#).unwrap_err();
        assert_eq!(e.path, "model.N_grid[1]");
        let cfg = Config::from_json(r#"{"model":{"N_grid":[16,8]}}"#).unwrap();
        let e = grid(&cfg.model.n_grid, "model.N_grid", |n| n >= 2, "need N >= 2").unwrap_err();
        assert_eq!(e.path, "model.N_grid[1]");
        assert_eq!(Config::default().master_seed().unwrap_err().path, "seeds.master");
    }
}
