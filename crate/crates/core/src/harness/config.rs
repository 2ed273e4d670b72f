use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversaries::{cruel_adversary, phase_adversary, random_costs, split_at_saturation, PhasePattern};
use crate::discretizer::{DiscretizerConfig, Search, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::metric::MetricSpace;
use crate::mts::{CostSequence, FractionalTrace};
use crate::strategies::{
    oscillating_trace, random_trace, replay_trace, run_deterministic, run_fractional, BallsAndUrns, Greedy,
    PhaseLedger, UniformFractional,
};

/// Runs longer than this skip the exhaustive necessary-condition scan unless
/// it is requested explicitly.
pub const NECESSARY_SCAN_MAX_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// `uniform:<n>`, `random:<n>:<seed>`, or a metric file.
    pub metric: String,
    /// `phase:<n>:<phases>[:<pattern>]`, `random:<n>:<T>:<seed>[:<scale>]`,
    /// `cruel:greedy:<T>[:<magnitude>]`, or a cost file.
    pub costs: String,
    /// `uniform_fractional`, `balls_urns`, `greedy`, `oscillate`,
    /// `random:<units>:<seed>`, or `replay:<trace file>`.
    pub strategy: String,
    pub k: u64,
    #[serde(default)]
    pub initial: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub require_k_ge_n2: bool,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u128,
    #[serde(default = "default_search")]
    pub search: Search,
    /// Defaults to on for `T ≤ 100`.
    #[serde(default)]
    pub verify_necessary: Option<bool>,
    /// Fixed transaction cost per used lane and unit distance; defaults to `1/n²`.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub output: Outputs,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub agents: Option<PathBuf>,
}

fn default_true() -> bool {
    true
}

fn default_cap() -> u128 {
    DEFAULT_ENUMERATION_CAP
}

fn default_search() -> Search {
    Search::Exhaustive
}

impl RunConfig {
    pub fn new(metric: &str, costs: &str, strategy: &str, k: u64) -> Self {
        RunConfig {
            metric: metric.into(),
            costs: costs.into(),
            strategy: strategy.into(),
            k,
            initial: 0,
            seed: 0,
            require_k_ge_n2: true,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            search: Search::Exhaustive,
            verify_necessary: None,
            tau: None,
            output: Outputs::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for p in [&mut self.output.trace, &mut self.output.report, &mut self.output.agents]
            .into_iter()
            .flatten()
        {
            join(p);
        }
        let resolve_desc = |desc: &mut String, prefix: &str| {
            if let Some(rest) = desc.strip_prefix(prefix) {
                if Path::new(rest).is_relative() {
                    *desc = format!("{prefix}{}", dir.join(rest).display());
                }
            }
        };
        if is_file_desc(&self.metric, &["uniform:", "random:"]) {
            resolve_desc(&mut self.metric, "");
        }
        if is_file_desc(&self.costs, &["phase:", "random:", "cruel:"]) {
            resolve_desc(&mut self.costs, "");
        }
        resolve_desc(&mut self.strategy, "replay:");
    }

    pub fn discretizer(&self) -> DiscretizerConfig {
        DiscretizerConfig {
            k: self.k,
            require_k_ge_n2: self.require_k_ge_n2,
            enumeration_cap: self.enumeration_cap,
            search: self.search,
        }
    }

    pub fn metric_space(&self) -> Result<MetricSpace> {
        MetricSpace::from_desc(&self.metric)
    }

    /// The cost sequence, not yet split at saturation.
    pub fn cost_sequence(&self, m: &MetricSpace) -> Result<CostSequence> {
        let desc = self.costs.as_str();
        let parts: Vec<&str> = desc.split(':').collect();
        let costs = match parts.as_slice() {
            ["phase", n, phases, rest @ ..] => {
                let pattern = match rest {
                    [] => PhasePattern::RoundRobin,
                    [p] => PhasePattern::from_str(p)?,
                    _ => return Err(bad_desc(desc)),
                };
                phase_adversary(num(n, desc)?, num(phases, desc)?, pattern)?
            }
            ["random", n, steps, seed, rest @ ..] => {
                let scale = match rest {
                    [] => 1.0,
                    [s] => num(s, desc)?,
                    _ => return Err(bad_desc(desc)),
                };
                random_costs(num(n, desc)?, num(steps, desc)?, num(seed, desc)?, scale)?
            }
            ["cruel", alg, steps, rest @ ..] => {
                let magnitude = match rest {
                    [] => 1.0,
                    [s] => num(s, desc)?,
                    _ => return Err(bad_desc(desc)),
                };
                match *alg {
                    "greedy" => cruel_adversary(m, &mut Greedy::new(self.initial), num(steps, desc)?, magnitude)?,
                    other => return Err(Error::Config(format!("unknown algorithm `{other}` in `{desc}`"))),
                }
            }
            _ if is_file_desc(desc, &["phase:", "random:", "cruel:"]) => CostSequence::read(desc, m.len())?,
            _ => return Err(bad_desc(desc)),
        };
        if costs.points() != m.len() {
            return Err(Error::Config(format!(
                "cost source `{desc}` has {} points but the metric has {}",
                costs.points(),
                m.len()
            )));
        }
        Ok(costs)
    }

    /// Whether the strategy follows the uniform-metric phase structure, in
    /// which case costs are split at saturation first.
    pub fn splits_costs(&self) -> bool {
        matches!(self.strategy.as_str(), "uniform_fractional" | "balls_urns")
    }

    /// Costs as the pipeline sees them (split at saturation for phase strategies).
    pub fn effective_costs(&self, m: &MetricSpace) -> Result<CostSequence> {
        let costs = self.cost_sequence(m)?;
        Ok(if self.splits_costs() {
            split_at_saturation(&costs, PhaseLedger::new(m.len()))
        } else {
            costs
        })
    }

    /// The fractional trace `y` driven by `costs`.
    pub fn target_trace(&self, m: &MetricSpace, costs: &CostSequence) -> Result<FractionalTrace> {
        let n = m.len();
        if self.initial >= n {
            return Err(Error::Config(format!("initial point {} out of range", self.initial)));
        }
        let desc = self.strategy.as_str();
        let parts: Vec<&str> = desc.splitn(3, ':').collect();
        let trace = match parts.as_slice() {
            ["uniform_fractional"] => run_fractional(&mut UniformFractional::new(m, self.initial)?, costs)?,
            ["balls_urns"] => run_fractional(&mut BallsAndUrns::new(m, self.initial)?, costs)?,
            ["greedy"] => run_deterministic(&mut Greedy::new(self.initial), m, costs),
            ["oscillate"] => oscillating_trace(n, costs.len(), self.initial, (self.initial + n - 1) % n.max(1))?,
            ["random", units, seed] => random_trace(n, costs.len(), num(units, desc)?, self.initial, num(seed, desc)?)?,
            ["replay", path] => replay_trace(path)?,
            _ => return Err(bad_desc(desc)),
        };
        if trace.points() != n || trace.len() != costs.len() {
            return Err(Error::Config(format!(
                "strategy `{desc}` produced {} steps over {} points; costs have {} steps over {n}",
                trace.len(),
                trace.points(),
                costs.len()
            )));
        }
        Ok(trace)
    }

    pub fn tau_for(&self, n: usize) -> f64 {
        self.tau.unwrap_or(1.0 / (n * n) as f64)
    }

    pub fn necessary_for(&self, steps: usize) -> bool {
        self.verify_necessary.unwrap_or(steps <= NECESSARY_SCAN_MAX_STEPS)
    }
}

fn is_file_desc(desc: &str, generators: &[&str]) -> bool {
    !generators.iter().any(|g| desc.starts_with(g))
}

fn bad_desc(desc: &str) -> Error {
    Error::Config(format!("unrecognized source `{desc}`"))
}

fn num<T: FromStr>(s: &str, desc: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Config(format!("bad number `{s}` in `{desc}`")))
}
