//! Benchmark sweeps: runtime profiles and per-configuration summaries.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use thiserror::Error;

use crate::engine::{solve, SolveStatus, SolverOptions};
use crate::io::load_instance;
use crate::model::Sense;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad configuration file: {0}")]
    Config(String),
}

/// Named option sets, in file order. The file is a JSON object mapping a
/// name to (possibly partial) solver options.
pub fn load_configs(path: &Path) -> Result<IndexMap<String, SolverOptions>, BenchError> {
    let text = fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_configs(&text)
}

pub fn parse_configs(text: &str) -> Result<IndexMap<String, SolverOptions>, BenchError> {
    let configs: IndexMap<String, SolverOptions> =
        serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
    if configs.is_empty() {
        return Err(BenchError::Config("no configurations".into()));
    }
    for (name, o) in &configs {
        o.validate().map_err(|e| BenchError::Config(format!("{name}: {e}")))?;
    }
    Ok(configs)
}

/// `*.json` files of `dir`, sorted by name.
pub fn instance_paths(dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let entries = fs::read_dir(dir).map_err(|source| BenchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths)
}

/// One (instance, configuration) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub instance: String,
    pub config: String,
    /// `None` when the instance could not be loaded.
    pub status: Option<SolveStatus>,
    pub sense: Sense,
    /// Objective in the instance's sense.
    pub objective: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl Run {
    /// Solved to the gap tolerance. Proven-infeasible runs do not count, so
    /// a profile never exceeds the feasible fraction.
    pub fn solved(&self) -> bool {
        self.status == Some(SolveStatus::Optimal)
    }

    pub fn feasible(&self) -> bool {
        self.objective.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileTable {
    pub configs: Vec<String>,
    pub instances: Vec<String>,
    pub runs: Vec<Run>,
}

/// Runs every configuration on every instance, one at a time. Instances
/// that fail to load are recorded as failed runs for every configuration.
pub fn run_suite(paths: &[PathBuf], configs: &IndexMap<String, SolverOptions>) -> ProfileTable {
    let mut table = ProfileTable {
        configs: configs.keys().cloned().collect(),
        ..ProfileTable::default()
    };
    for path in paths {
        let name = path
            .file_stem()
            .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        table.instances.push(name.clone());
        let model = load_instance(path);
        for (config, options) in configs {
            let run = match &model {
                Ok(m) => {
                    let r = solve(m, options);
                    Run {
                        instance: name.clone(),
                        config: config.clone(),
                        status: Some(r.status),
                        sense: m.sense(),
                        objective: r.objective(),
                        seconds: r.wall_time,
                        error: None,
                    }
                }
                Err(e) => Run {
                    instance: name.clone(),
                    config: config.clone(),
                    status: None,
                    sense: Sense::Minimize,
                    objective: None,
                    seconds: 0.0,
                    error: Some(e.to_string()),
                },
            };
            table.runs.push(run);
        }
    }
    table
}

/// `{1, 2, 5} × 10^k` seconds from 1 ms up to `horizon`, then `horizon`.
pub fn time_grid(horizon: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    'outer: for k in -3..=9 {
        for m in [1, 2, 5] {
            // Parsed from decimal text so grid points print exactly.
            let t: f64 = format!("{m}e{k}").parse().unwrap();
            if t > horizon {
                break 'outer;
            }
            grid.push(t);
        }
    }
    if grid.last().is_none_or(|&t| t < horizon) && horizon.is_finite() {
        grid.push(horizon);
    }
    grid
}

/// Relative distance to the best objective, in percent.
pub fn gap_percent(objective: f64, best: f64) -> f64 {
    (objective - best).abs() / best.abs().max(1e-10) * 100.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub config: String,
    pub feasible: usize,
    pub timelimit: usize,
    /// Mean gap over instances this configuration found feasible.
    pub mean_gap_self: f64,
    /// Mean gap over instances every configuration found feasible.
    pub mean_gap_common: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

impl ProfileTable {
    fn runs_of<'a>(&'a self, config: &'a str) -> impl Iterator<Item = &'a Run> + 'a {
        self.runs.iter().filter(move |r| r.config == config)
    }

    /// Best objective per instance across configurations.
    fn best(&self, instance: &str) -> Option<f64> {
        let mut feasible = self
            .runs
            .iter()
            .filter(|r| r.instance == instance && r.feasible())
            .peekable();
        let maximize = feasible.peek()?.sense == Sense::Maximize;
        feasible
            .filter_map(|r| r.objective)
            .reduce(|a, b| if maximize { a.max(b) } else { a.min(b) })
    }

    /// Largest time limit among the configurations, or the longest run when
    /// every limit is infinite.
    pub fn horizon(&self, configs: &IndexMap<String, SolverOptions>) -> f64 {
        let limit = configs
            .values()
            .map(|o| o.time_limit)
            .filter(|t| t.is_finite())
            .fold(0.0, f64::max);
        if limit > 0.0 {
            limit
        } else {
            self.runs.iter().map(|r| r.seconds).fold(1e-3, f64::max)
        }
    }

    /// Fraction of instances the configuration solved within each `t`.
    pub fn curve(&self, config: &str, grid: &[f64]) -> Vec<f64> {
        let n = self.instances.len().max(1) as f64;
        grid.iter()
            .map(|&t| self.runs_of(config).filter(|r| r.solved() && r.seconds <= t).count() as f64 / n)
            .collect()
    }

    pub fn profile_csv(&self, grid: &[f64]) -> String {
        let mut out = String::from("config,t,fraction\n");
        for config in &self.configs {
            for (t, f) in grid.iter().zip(self.curve(config, grid)) {
                out.push_str(&format!("{config},{t},{f}\n"));
            }
        }
        out
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        let common: Vec<&String> = self
            .instances
            .iter()
            .filter(|i| {
                self.configs.iter().all(|c| {
                    self.runs
                        .iter()
                        .any(|r| &r.instance == *i && &r.config == c && r.feasible())
                })
            })
            .collect();
        self.configs
            .iter()
            .map(|config| {
                let runs: Vec<&Run> = self.runs_of(config).collect();
                let gap_of = |r: &Run| gap_percent(r.objective.unwrap(), self.best(&r.instance).unwrap());
                SummaryRow {
                    config: config.clone(),
                    feasible: runs.iter().filter(|r| r.feasible()).count(),
                    timelimit: runs
                        .iter()
                        .filter(|r| r.status.is_some_and(SolveStatus::has_time_limit))
                        .count(),
                    mean_gap_self: mean(runs.iter().filter(|r| r.feasible()).map(|r| gap_of(r))),
                    mean_gap_common: mean(runs.iter().filter(|r| common.contains(&&r.instance)).map(|r| gap_of(r))),
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("config,feasible,timelimit,mean_gap_self,mean_gap_common\n");
        for row in self.summary() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.config, row.feasible, row.timelimit, row.mean_gap_self, row.mean_gap_common
            ));
        }
        out
    }
}
