//! Structure learners: correlation baselines, a greedy BIC hill-climber, and an
//! adapter for arbitrary external programs.

mod correlation;
mod external;
mod greedy;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, MultiRegimeDataset};
use crate::graph::{GraphError, MixedGraph};
use crate::scalar::Scalar;

pub use correlation::{abs_correlation_ranking, AbsCorrelation, LargestCorrelation};
pub use external::ExternalLearner;
pub use greedy::{GreedyBic, GreedyBicFit};

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("{0}")]
    Failed(String),
    #[error("learner needs at least {min} observational rows, got {found}")]
    TooFewRows { min: usize, found: usize },
    #[error("learner needs at least 2 variables")]
    TooFewVariables,
    #[error("no pair of variables has a defined correlation")]
    NoDefinedCorrelation,
    #[error("acor needs the oracle expected neighbourhood size")]
    MissingEns,
    #[error("external learner needs a command")]
    MissingCommand,
    #[error("could not start `{command}`: {source}")]
    Spawn {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("external learner exited with {status}; stderr: {stderr}")]
    NonZeroExit { status: String, stderr: String },
    #[error("external learner timed out after {secs} s; stderr: {stderr}")]
    Timeout { secs: f64, stderr: String },
    #[error("external learner wrote an unusable graph ({source}); stderr: {stderr}")]
    Malformed {
        #[source]
        source: GraphError,
        stderr: String,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A causal structure learning algorithm: data in, (partially directed) graph out.
///
/// `fit` must be deterministic given the dataset and the learner's configuration,
/// and safe to call from several threads at once.
pub trait Learner<T: Scalar>: Send + Sync {
    fn id(&self) -> String;
    fn fit(&self, data: &MultiRegimeDataset<T>) -> Result<MixedGraph, LearnerError>;
}

/// Ignores the data and returns a fixed graph.
#[derive(Clone, Debug)]
pub struct FixedGraph {
    id: String,
    graph: MixedGraph,
}

impl FixedGraph {
    pub fn new(id: impl Into<String>, graph: MixedGraph) -> Self {
        Self {
            id: id.into(),
            graph,
        }
    }
}

impl<T: Scalar> Learner<T> for FixedGraph {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn fit(&self, _: &MultiRegimeDataset<T>) -> Result<MixedGraph, LearnerError> {
        Ok(self.graph.clone())
    }
}

pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_MAX_PARENTS: usize = 10;
pub const DEFAULT_TIMEOUT_SECS: f64 = 600.0;

/// Learner selection as written in grid configs and on the command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerConfig {
    Empty,
    Acor {
        #[serde(default)]
        ens_oracle: Option<f64>,
    },
    GreedyBic {
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default = "default_penalty")]
        score_penalty: f64,
        #[serde(default = "default_max_parents")]
        max_parents: usize,
    },
    External {
        command: Vec<String>,
        #[serde(default)]
        timeout_secs: Option<f64>,
    },
}

fn default_max_iters() -> usize {
    DEFAULT_MAX_ITERS
}

fn default_penalty() -> f64 {
    1.0
}

fn default_max_parents() -> usize {
    DEFAULT_MAX_PARENTS
}

impl LearnerConfig {
    pub fn greedy_bic() -> Self {
        LearnerConfig::GreedyBic {
            max_iters: DEFAULT_MAX_ITERS,
            score_penalty: 1.0,
            max_parents: DEFAULT_MAX_PARENTS,
        }
    }

    /// Instantiates the learner. `ens_hint` supplies ACor's oracle sparsity when
    /// the config leaves it open (the grid passes the setting's ENS);
    /// `default_timeout` applies to external learners without their own.
    pub fn build<T: Scalar>(
        &self,
        ens_hint: Option<f64>,
        default_timeout: Option<Duration>,
    ) -> Result<Box<dyn Learner<T>>, LearnerError> {
        Ok(match self {
            LearnerConfig::Empty => Box::new(LargestCorrelation),
            LearnerConfig::Acor { ens_oracle } => {
                let ens = ens_oracle.or(ens_hint).ok_or(LearnerError::MissingEns)?;
                Box::new(AbsCorrelation::new(ens))
            }
            LearnerConfig::GreedyBic {
                max_iters,
                score_penalty,
                max_parents,
            } => Box::new(GreedyBic {
                max_iters: *max_iters,
                penalty: *score_penalty,
                max_parents: *max_parents,
            }),
            LearnerConfig::External {
                command,
                timeout_secs,
            } => {
                if command.is_empty() {
                    return Err(LearnerError::MissingCommand);
                }
                let timeout = timeout_secs
                    .map(Duration::from_secs_f64)
                    .or(default_timeout)
                    .unwrap_or(Duration::from_secs_f64(DEFAULT_TIMEOUT_SECS));
                Box::new(ExternalLearner::new(command.clone(), timeout))
            }
        })
    }

    /// Short name used as the learner id in results.
    pub fn name(&self) -> String {
        match self {
            LearnerConfig::Empty => "empty".into(),
            LearnerConfig::Acor { .. } => "acor".into(),
            LearnerConfig::GreedyBic { .. } => "greedy-bic".into(),
            LearnerConfig::External { command, .. } => format!("external:{}", command.join(" ")),
        }
    }
}

impl fmt::Display for LearnerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnerConfig::Acor {
                ens_oracle: Some(ens),
            } => write!(f, "acor:{ens}"),
            other => f.write_str(&other.name()),
        }
    }
}

/// Parses `empty`, `acor`, `acor:<ens>`, `greedy-bic`, or `external:<path> [args...]`.
impl FromStr for LearnerConfig {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (head, rest) = match s.split_once(':') {
            Some((h, r)) => (h, Some(r)),
            None => (s, None),
        };
        match (head.to_ascii_lowercase().as_str(), rest) {
            ("empty", None) => Ok(LearnerConfig::Empty),
            ("acor", None) => Ok(LearnerConfig::Acor { ens_oracle: None }),
            ("acor", Some(ens)) => ens
                .parse()
                .map(|e| LearnerConfig::Acor {
                    ens_oracle: Some(e),
                })
                .map_err(|_| format!("bad ENS in {s:?}")),
            ("greedy-bic" | "greedybic" | "ges", None) => Ok(LearnerConfig::greedy_bic()),
            ("external", Some(cmd)) => {
                let command: Vec<String> = cmd.split_whitespace().map(String::from).collect();
                if command.is_empty() {
                    Err("external learner needs a command".into())
                } else {
                    Ok(LearnerConfig::External {
                        command,
                        timeout_secs: None,
                    })
                }
            }
            _ => Err(format!(
                "unknown learner {s:?}; expected empty, acor[:ens], greedy-bic or external:<path>"
            )),
        }
    }
}
