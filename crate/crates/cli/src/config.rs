use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use polycube::io::JordanOverride;
use polycube::{Polynomial, ProcessSpec, Tolerances};
use serde::Deserialize;

use crate::Failure;

/// One JSON file describing a run. Subcommand-specific settings live in
/// their own sections; command-line flags override any key.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub process: Option<ProcessSpec>,
    pub n: Option<usize>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    pub points: Option<Vec<Vec<f64>>>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub moments: MomentsSection,
    #[serde(default)]
    pub lift: LiftSection,
    #[serde(default)]
    pub discrete: DiscreteSection,
    #[serde(default)]
    pub validate: ValidateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsSection {
    pub x: Option<Vec<f64>>,
    pub t: Option<f64>,
    /// Multi-time schedule; when present `t` is ignored.
    pub schedule: Option<Vec<ScheduleStep>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleStep {
    pub t: f64,
    pub p: Polynomial,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiftSection {
    pub jordan: Option<JordanOverride>,
    pub base_points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteSection {
    pub gauss: Option<usize>,
    pub candidates: Option<Vec<Vec<f64>>>,
    pub delta_init: Option<f64>,
    pub l_max: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub rule: Option<PathBuf>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub times: Option<Vec<f64>>,
    pub steps: Option<usize>,
    pub start: Option<usize>,
    pub z_crit: Option<f64>,
    pub sde: Option<bool>,
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    pub fn process(&self) -> Result<&ProcessSpec, Failure> {
        self.process
            .as_ref()
            .ok_or_else(|| Failure::usage("config has no \"process\" section"))
    }

    pub fn degree(&self) -> Result<usize, Failure> {
        match self.n {
            Some(0) => Err(Failure::usage("n must be at least 1")),
            Some(n) => Ok(n),
            None => Err(Failure::usage("degree n missing: set \"n\" in the config or pass --n")),
        }
    }

    pub fn tolerances(&self) -> Result<Tolerances, Failure> {
        let mut tol = Tolerances::default();
        for (k, &v) in &self.tolerances {
            tol.set(k, v).map_err(|e| Failure::usage(e.to_string()))?;
        }
        Ok(tol)
    }
}

/// Parses `--tol key=value`.
pub fn parse_tol(arg: &str) -> Result<(String, f64), String> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {arg:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value in {arg:?}: {e}"))?;
    Ok((k.trim().to_string(), v))
}

/// Points given on the command line as a JSON list of lists.
#[derive(Clone, Debug)]
pub struct PointList(pub Vec<Vec<f64>>);

pub fn parse_points(arg: &str) -> Result<PointList, String> {
    serde_json::from_str(arg)
        .map(PointList)
        .map_err(|e| format!("points must be a JSON list of lists: {e}"))
}
