//! Run configuration: a JSON file merged with command-line flags.

use std::path::{Path, PathBuf};

use exposure_lab::library::PredictorSpec;
use exposure_lab::{OverridePolicy, Scenario, ScenarioSpec};
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;
use crate::Args;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OverrideArg {
    /// Same as natural.
    None,
    Natural,
    /// Force every within-group pair, using the scenario's groups.
    Groups,
    /// Force every pair of distinct units.
    All,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EstimatorConfig {
    Ht,
    Hajek,
    Greg {
        #[serde(default)]
        ridge: f64,
    },
    Difference {
        predictor: PredictorSpec,
    },
}

/// Config file contents. A file holding a bare scenario is accepted too.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    /// Inline scenario or a path relative to the config file.
    scenario: Option<Value>,
    a: Option<usize>,
    b: Option<usize>,
    reps: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    level: Option<f64>,
    q: Option<f64>,
    p: Option<f64>,
    #[serde(rename = "override")]
    override_policy: Option<OverrideArg>,
    estimators: Option<Vec<EstimatorConfig>>,
    ns: Option<Vec<usize>>,
    mask: Option<Vec<bool>>,
}

/// Fully resolved settings for one command.
#[derive(Debug)]
pub struct RunConfig {
    pub scenario: Option<ScenarioSpec>,
    pub a: usize,
    pub b: usize,
    pub reps: usize,
    pub seed: Option<u64>,
    pub workers: usize,
    pub level: f64,
    pub q: f64,
    pub p: f64,
    pub override_arg: OverrideArg,
    pub estimators: Option<Vec<EstimatorConfig>>,
    pub ns: Option<Vec<usize>>,
    pub mask: Option<Vec<bool>>,
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn parse_spec(value: Value, origin: &str) -> Result<ScenarioSpec, CliError> {
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{origin}: invalid scenario: {e}")))
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let value = read_json(path)?;
    let origin = path.display().to_string();
    if value.get("design").is_some() {
        return Ok(FileConfig { scenario: Some(value), ..FileConfig::default() });
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

fn resolve_scenario(value: Value, base: &Path) -> Result<ScenarioSpec, CliError> {
    match value {
        Value::String(rel) => {
            let path: PathBuf = base.join(rel);
            parse_spec(read_json(&path)?, &path.display().to_string())
        }
        other => parse_spec(other, "config"),
    }
}

impl RunConfig {
    pub fn resolve(args: &Args) -> Result<Self, CliError> {
        let (file, base) = match &args.config {
            Some(path) => (load_file(path)?, path.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (FileConfig::default(), PathBuf::new()),
        };
        let scenario = file.scenario.map(|v| resolve_scenario(v, &base)).transpose()?;
        let cfg = RunConfig {
            scenario,
            a: args.a.or(file.a).unwrap_or(1),
            b: args.b.or(file.b).unwrap_or(0),
            reps: args.reps.or(file.reps).unwrap_or(1000),
            seed: args.seed.or(file.seed),
            workers: args
                .workers
                .or(file.workers)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            level: args.level.or(file.level).unwrap_or(0.95),
            q: args.q.or(file.q).unwrap_or(1.0),
            p: args.p.or(file.p).unwrap_or(2.0),
            override_arg: args.override_policy.or(file.override_policy).unwrap_or(OverrideArg::Natural),
            estimators: file.estimators,
            ns: args.ns.clone().or(file.ns),
            mask: file.mask,
        };
        if cfg.a == cfg.b {
            return Err(CliError::Config(format!("contrast needs a != b, got a = b = {}", cfg.a)));
        }
        if !(cfg.level > 0.0 && cfg.level < 1.0) {
            return Err(CliError::Config(format!("level {} outside (0,1)", cfg.level)));
        }
        if cfg.workers == 0 {
            return Err(CliError::Config("workers must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required (--seed or \"seed\" in the config)".into()))
    }

    pub fn spec(&self) -> Result<&ScenarioSpec, CliError> {
        self.scenario.as_ref().ok_or_else(|| CliError::Config("no scenario given (--config)".into()))
    }

    pub fn build(&self) -> Result<Scenario, CliError> {
        let s = self.spec()?.clone().build()?;
        for d in [self.a, self.b] {
            if d >= s.labels() {
                return Err(CliError::Config(format!("exposure {d} outside the alphabet of {} labels", s.labels())));
            }
        }
        Ok(s)
    }

    pub fn mask(&self, n: usize) -> Result<Vec<bool>, CliError> {
        match &self.mask {
            None => Ok(vec![true; n]),
            Some(m) if m.len() == n && m.iter().any(|&x| x) => Ok(m.clone()),
            Some(m) => Err(CliError::Config(format!("mask of length {} must cover {n} units and keep one", m.len()))),
        }
    }

    pub fn policy(&self, s: Option<&Scenario>) -> Result<OverridePolicy, CliError> {
        Ok(match self.override_arg {
            OverrideArg::None | OverrideArg::Natural => OverridePolicy::Natural,
            OverrideArg::All => OverridePolicy::AllPairs,
            OverrideArg::Groups => {
                let groups = s
                    .and_then(Scenario::groups)
                    .ok_or_else(|| CliError::Config("groups override needs groups or a groups graph".into()))?;
                OverridePolicy::Groups(groups)
            }
        })
    }
}
