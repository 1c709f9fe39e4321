//! Run configuration: a TOML file merged with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use relay_core::policy::{ActionMode, Encoding};
use relay_core::Scenario;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Baseline,
    External,
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Self::Baseline),
            "external" => Ok(Self::External),
            other => Err(format!("unknown policy {other:?} (baseline | external)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenarios: Vec<Scenario>,
    pub agents: Vec<usize>,
    pub episodes: usize,
    pub seed: u64,
    pub c_time: f64,
    pub policy: PolicyKind,
    /// Shell command line of the external policy.
    pub policy_cmd: Option<String>,
    pub encoding: Encoding,
    pub action_mode: ActionMode,
    pub out: PathBuf,
    /// Directory holding the budget tables.
    pub budgets: PathBuf,
    pub grid_points: usize,
    pub record: bool,
    /// Worker threads; 0 picks the available parallelism.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenarios: vec![Scenario::IsoNoJam],
            agents: vec![1, 3, 5, 7, 9],
            episodes: 1000,
            seed: 0,
            c_time: 1.5,
            policy: PolicyKind::Baseline,
            policy_cmd: None,
            encoding: Encoding::RelativeSorted,
            action_mode: ActionMode::Discrete,
            out: PathBuf::from("out"),
            budgets: PathBuf::from("budgets"),
            grid_points: relay_core::calibration::DEFAULT_GRID_POINTS,
            record: false,
            workers: 0,
        }
    }
}

/// Flag values that replace the corresponding config entries when given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub scenarios: Option<Vec<Scenario>>,
    pub agents: Option<Vec<usize>>,
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    pub c_time: Option<f64>,
    pub policy: Option<PolicyKind>,
    pub policy_cmd: Option<String>,
    pub encoding: Option<Encoding>,
    pub action_mode: Option<ActionMode>,
    pub out: Option<PathBuf>,
    pub budgets: Option<PathBuf>,
    pub record: bool,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn apply(&mut self, o: Overrides) {
        macro_rules! take {
            ($($f:ident),*) => {$(if let Some(v) = o.$f { self.$f = v; })*};
        }
        take!(
            scenarios,
            agents,
            episodes,
            seed,
            c_time,
            policy,
            encoding,
            action_mode,
            out,
            budgets,
            workers
        );
        if o.policy_cmd.is_some() {
            self.policy_cmd = o.policy_cmd;
        }
        self.record |= o.record;
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() {
            bail!("no scenario selected");
        }
        if self.agents.is_empty() || self.agents.contains(&0) {
            bail!("agent counts must be at least 1");
        }
        if self.episodes == 0 {
            bail!("episodes must be at least 1");
        }
        if !(self.c_time > 0.0 && self.c_time.is_finite()) {
            bail!("c_time must be positive, got {}", self.c_time);
        }
        if self.grid_points < 3 {
            bail!("grid_points must be at least 3");
        }
        if self.policy == PolicyKind::External
            && self.policy_cmd.as_deref().is_none_or(str::is_empty)
        {
            bail!("policy = external needs policy_cmd");
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// Parses `all` or a comma-separated list of scenario names.
pub fn parse_scenarios(s: &str) -> Result<Vec<Scenario>, String> {
    if s == "all" {
        return Ok(Scenario::ALL.to_vec());
    }
    s.split(',')
        .map(|p| p.trim().parse::<Scenario>().map_err(|e| e.to_string()))
        .collect()
}

/// Parses `3`, `1,3,5` or a range `1..=5`.
pub fn parse_agents(s: &str) -> Result<Vec<usize>, String> {
    let bad = |_| format!("invalid agent list {s:?}");
    if let Some((a, b)) = s.split_once("..=") {
        let (a, b): (usize, usize) = (
            a.trim().parse().map_err(bad)?,
            b.trim().parse().map_err(bad)?,
        );
        return Ok((a..=b).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(bad))
        .collect()
}
