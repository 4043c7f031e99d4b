//! Decision-theoretic evaluation of causal structure learners.
//!
//! Learners are scored by the Jaccard distance between true and implied
//! descendant sets. Without the true graph, descendants are estimated from
//! interventional data, and the risk is approximated either in-sample (naive)
//! or by leaving each intervention out (cross-validated).

pub mod dataset;
pub mod descend;
pub mod graph;
pub mod harness;
pub mod learners;
pub mod risk;
pub mod scalar;
pub mod sem;

pub use dataset::{MultiRegimeDataset, Regime};
pub use descend::{DescendConfig, DescendantEstimate};
pub use graph::{Dag, MixedGraph, NodeSet};
pub use learners::{Learner, LearnerConfig, LearnerError};
pub use risk::{RiskKind, RiskReport, RiskValue};
pub use scalar::Scalar;
pub use sem::{InterventionKind, InterventionSpec, Link, NoiseKind, Sem};

pub type Sem64 = Sem<f64>;
pub type Dataset64 = MultiRegimeDataset<f64>;
pub type Estimate64 = DescendantEstimate<f64>;
pub type Risk64 = RiskValue<f64>;
pub type Report64 = RiskReport<f64>;
pub type Sem32 = Sem<f32>;
pub type Dataset32 = MultiRegimeDataset<f32>;
