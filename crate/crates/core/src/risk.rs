//! Jaccard descendant loss and the per-dataset risk quantities.
//!
//! All four quantities average node-wise Jaccard distances between a reference
//! descendant set and the learner's possible-descendant set:
//!
//! | kind        | reference                 | learner fit on          | nodes   |
//! |-------------|---------------------------|-------------------------|---------|
//! | `OracleHat` | true descendants in `G*`  | all regimes             | all `p` |
//! | `Naive`     | estimated descendants     | all regimes             | `iota`  |
//! | `Cv`        | estimated descendants     | all regimes except `i`  | `iota`  |
//! | `Weighted`  | `|iota|/p * Naive + (p - |iota|)/p * Cv`             | | |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, MultiRegimeDataset};
use crate::descend::DescendantEstimate;
use crate::graph::{Dag, GraphError, MixedGraph, NodeSet};
use crate::learners::{Learner, LearnerError};
use crate::scalar::{format_exact, Scalar};

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("graphs disagree on node count: expected {expected}, learner returned {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no descendant estimate for intervened node {}", .0 + 1)]
    MissingEstimate(usize),
    #[error("descendant estimate for node {} which is not intervened", .0 + 1)]
    UnexpectedEstimate(usize),
    #[error("cross-validation needs at least 2 interventions, got {0}")]
    TooFewInterventions(usize),
    #[error("learner failed on the fold holding out node {}: {source}", .node + 1)]
    Fold {
        node: usize,
        #[source]
        source: LearnerError,
    },
    #[error("learner failed on the full dataset: {0}")]
    FullFit(#[source] LearnerError),
    #[error("weights need 1 <= |iota| <= p, got |iota| = {iota_size}, p = {p}")]
    BadWeights { iota_size: usize, p: usize },
    #[error("expected a {expected} risk, got {found}")]
    KindMismatch { expected: RiskKind, found: RiskKind },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    OracleHat,
    Naive,
    Cv,
    Weighted,
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskKind::OracleHat => "oracle_hat",
            RiskKind::Naive => "naive",
            RiskKind::Cv => "cv",
            RiskKind::Weighted => "weighted",
        })
    }
}

/// One risk quantity with its node-wise losses; `value` is their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskValue<T> {
    pub kind: RiskKind,
    pub value: T,
    pub learner_id: String,
    pub per_node_losses: BTreeMap<usize, T>,
    /// For cross-validation: held-out node -> regime labels the fold was fit on.
    pub folds: BTreeMap<usize, Vec<usize>>,
}

impl<T: Scalar> RiskValue<T> {
    fn from_losses(kind: RiskKind, per_node_losses: BTreeMap<usize, T>) -> Self {
        Self {
            kind,
            value: mean(per_node_losses.values().copied()),
            learner_id: String::new(),
            per_node_losses,
            folds: BTreeMap::new(),
        }
    }

    pub fn with_learner(mut self, id: impl Into<String>) -> Self {
        self.learner_id = id.into();
        self
    }

    pub fn to_record(&self) -> RiskRecord {
        RiskRecord {
            kind: self.kind,
            value: self.value.f64(),
            learner: self.learner_id.clone(),
            per_node_losses: self
                .per_node_losses
                .iter()
                .map(|(&i, &l)| (i + 1, l.f64()))
                .collect(),
            folds: self
                .folds
                .iter()
                .map(|(&i, regimes)| (i + 1, regimes.clone()))
                .collect(),
            value_exact: format_exact(self.value),
        }
    }
}

/// JSON form of a [`RiskValue`]; node keys are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskRecord {
    pub kind: RiskKind,
    pub learner: String,
    pub value: f64,
    pub value_exact: String,
    pub per_node_losses: BTreeMap<usize, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty", default)]
    pub folds: BTreeMap<usize, Vec<usize>>,
}

/// Sum in key order divided by the count; empty input gives 0.
fn mean<T: Scalar>(xs: impl Iterator<Item = T>) -> T {
    let (sum, n) = xs.fold((T::zero(), 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        T::zero()
    } else {
        sum / T::of_usize(n)
    }
}

/// Jaccard distance `1 - |a ∩ b| / |a ∪ b|`, and 0 when both sets are empty.
pub fn jaccard<T: Scalar>(a: &NodeSet, b: &NodeSet) -> T {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        T::zero()
    } else {
        T::one() - T::of_usize(inter) / T::of_usize(union)
    }
}

fn check_p(expected: usize, h: &MixedGraph) -> Result<(), RiskError> {
    if h.p() == expected {
        Ok(())
    } else {
        Err(RiskError::DimensionMismatch {
            expected,
            found: h.p(),
        })
    }
}

fn check_estimates<T>(
    d: &MultiRegimeDataset<T>,
    est: &BTreeMap<usize, DescendantEstimate<T>>,
) -> Result<Vec<usize>, RiskError>
where
    T: Scalar,
{
    let iota = d.iota();
    if let Some(&missing) = iota.iter().find(|i| !est.contains_key(i)) {
        return Err(RiskError::MissingEstimate(missing));
    }
    let iota_set: BTreeSet<usize> = iota.iter().copied().collect();
    if let Some(&extra) = est.keys().find(|i| !iota_set.contains(i)) {
        return Err(RiskError::UnexpectedEstimate(extra));
    }
    Ok(iota)
}

/// Mean over all nodes of `J(Des(G*, i), PossDes(h, i))`.
pub fn oracle_hat<T: Scalar>(g_star: &Dag, h: &MixedGraph) -> Result<RiskValue<T>, RiskError> {
    check_p(g_star.p(), h)?;
    let losses = (0..g_star.p())
        .map(|i| {
            Ok((
                i,
                jaccard(&g_star.descendants(i)?, &h.possible_descendants(i)?),
            ))
        })
        .collect::<Result<_, GraphError>>()?;
    Ok(RiskValue::from_losses(RiskKind::OracleHat, losses))
}

/// Mean over intervened nodes of `J(est_i, PossDes(h, i))`, with `h` fit on all
/// regimes.
pub fn naive_risk<T: Scalar>(
    d: &MultiRegimeDataset<T>,
    h: &MixedGraph,
    est: &BTreeMap<usize, DescendantEstimate<T>>,
) -> Result<RiskValue<T>, RiskError> {
    check_p(d.p(), h)?;
    let iota = check_estimates(d, est)?;
    if iota.is_empty() {
        return Err(RiskError::TooFewInterventions(0));
    }
    let losses = iota
        .into_iter()
        .map(|i| Ok((i, jaccard(&est[&i].members, &h.possible_descendants(i)?))))
        .collect::<Result<_, GraphError>>()?;
    Ok(RiskValue::from_losses(RiskKind::Naive, losses))
}

/// Leave-one-intervention-out risk: for each intervened `i`, the learner is fit
/// on every regime except `i` and scored on `i`. The learner runs exactly
/// `|iota|` times; folds run in parallel and fail with the held-out node.
pub fn cv_risk<T: Scalar>(
    d: &MultiRegimeDataset<T>,
    learner: &dyn Learner<T>,
    est: &BTreeMap<usize, DescendantEstimate<T>>,
) -> Result<RiskValue<T>, RiskError> {
    let iota = check_estimates(d, est)?;
    if iota.len() < 2 {
        return Err(RiskError::TooFewInterventions(iota.len()));
    }
    let folds: Vec<(usize, T, Vec<usize>)> = iota
        .par_iter()
        .map(|&i| {
            let train = d.without_intervention(i)?;
            let h = learner
                .fit(&train)
                .map_err(|source| RiskError::Fold { node: i, source })?;
            check_p(d.p(), &h)?;
            let loss = jaccard(&est[&i].members, &h.possible_descendants(i)?);
            Ok((i, loss, train.regimes().map(|r| r.label()).collect()))
        })
        .collect::<Result<_, RiskError>>()?;

    let mut provenance = BTreeMap::new();
    let mut losses = BTreeMap::new();
    for (i, loss, regimes) in folds {
        losses.insert(i, loss);
        provenance.insert(i, regimes);
    }
    let mut out = RiskValue::from_losses(RiskKind::Cv, losses);
    out.folds = provenance;
    Ok(out.with_learner(learner.id()))
}

/// `(|iota|/p) naive + ((p - |iota|)/p) cv`.
pub fn weighted_risk<T: Scalar>(
    naive: &RiskValue<T>,
    cv: &RiskValue<T>,
    p: usize,
    iota_size: usize,
) -> Result<RiskValue<T>, RiskError> {
    if naive.kind != RiskKind::Naive {
        return Err(RiskError::KindMismatch {
            expected: RiskKind::Naive,
            found: naive.kind,
        });
    }
    if cv.kind != RiskKind::Cv {
        return Err(RiskError::KindMismatch {
            expected: RiskKind::Cv,
            found: cv.kind,
        });
    }
    if iota_size == 0 || iota_size > p {
        return Err(RiskError::BadWeights { iota_size, p });
    }
    let w_naive = T::of_usize(iota_size) / T::of_usize(p);
    let w_cv = T::of_usize(p - iota_size) / T::of_usize(p);
    let value = w_naive * naive.value + w_cv * cv.value;

    let same_nodes = naive.per_node_losses.keys().eq(cv.per_node_losses.keys());
    let per_node_losses = if same_nodes {
        naive
            .per_node_losses
            .iter()
            .map(|(&i, &l)| (i, w_naive * l + w_cv * cv.per_node_losses[&i]))
            .collect()
    } else {
        BTreeMap::new()
    };
    Ok(RiskValue {
        kind: RiskKind::Weighted,
        value,
        learner_id: naive.learner_id.clone(),
        per_node_losses,
        folds: BTreeMap::new(),
    })
}

/// The four risk quantities of one learner on one dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct RiskReport<T> {
    pub learner_id: String,
    pub oracle_hat: Option<RiskValue<T>>,
    pub naive: RiskValue<T>,
    pub cv: RiskValue<T>,
    pub weighted: RiskValue<T>,
}

/// Fits `learner` on all of `d` and computes naive, CV, and weighted risk, plus
/// `oracle_hat` when the true DAG is supplied. The learner runs `1 + |iota|`
/// times.
pub fn evaluate_learner<T: Scalar>(
    d: &MultiRegimeDataset<T>,
    learner: &dyn Learner<T>,
    est: &BTreeMap<usize, DescendantEstimate<T>>,
    truth: Option<&Dag>,
) -> Result<RiskReport<T>, RiskError> {
    let id = learner.id();
    let iota_size = d.iota_size();
    if iota_size < 2 {
        return Err(RiskError::TooFewInterventions(iota_size));
    }
    let full = learner.fit(d).map_err(RiskError::FullFit)?;
    check_p(d.p(), &full)?;
    let oracle_hat = truth
        .map(|g| oracle_hat(g, &full).map(|r| r.with_learner(&id)))
        .transpose()?;
    let naive = naive_risk(d, &full, est)?.with_learner(&id);
    let cv = cv_risk(d, learner, est)?;
    let weighted = weighted_risk(&naive, &cv, d.p(), iota_size)?;
    Ok(RiskReport {
        learner_id: id,
        oracle_hat,
        naive,
        cv,
        weighted,
    })
}
