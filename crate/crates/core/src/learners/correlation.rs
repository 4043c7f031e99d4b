//! Learners that only look at marginal correlations in the observational block.

use std::cmp::Ordering;

use ndarray::ArrayView2;

use super::{Learner, LearnerError};
use crate::dataset::MultiRegimeDataset;
use crate::graph::MixedGraph;
use crate::scalar::Scalar;

/// Unordered pairs `(i, j)`, `i < j`, sorted by decreasing absolute Pearson
/// correlation, ties by `(i, j)`. Pairs with a constant column are left out.
pub fn abs_correlation_ranking<T: Scalar>(
    x: ArrayView2<'_, T>,
) -> Result<Vec<((usize, usize), f64)>, LearnerError> {
    let (n, p) = x.dim();
    if p < 2 {
        return Err(LearnerError::TooFewVariables);
    }
    if n < 3 {
        return Err(LearnerError::TooFewRows { min: 3, found: n });
    }
    let centred: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let col: Vec<f64> = x.column(j).iter().map(|v| v.f64()).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            col.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centred
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();

    let mut pairs = Vec::with_capacity(p * (p - 1) / 2);
    for i in 0..p {
        for j in i + 1..p {
            let denom = norms[i] * norms[j];
            if !(denom > 0.0) || !denom.is_finite() {
                continue;
            }
            let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
            let r = (dot / denom).abs().min(1.0);
            if r.is_finite() {
                pairs.push(((i, j), r));
            }
        }
    }
    if pairs.is_empty() {
        return Err(LearnerError::NoDefinedCorrelation);
    }
    pairs.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(pairs)
}

/// The `empty` baseline: a single undirected edge between the most correlated pair.
#[derive(Clone, Copy, Debug, Default)]
pub struct LargestCorrelation;

impl<T: Scalar> Learner<T> for LargestCorrelation {
    fn id(&self) -> String {
        "empty".into()
    }

    fn fit(&self, data: &MultiRegimeDataset<T>) -> Result<MixedGraph, LearnerError> {
        let ranking = abs_correlation_ranking(data.observational())?;
        let (pair, _) = ranking[0];
        Ok(MixedGraph::new(data.p(), [], [pair]).expect("pair is in range"))
    }
}

/// The `acor` baseline: undirected edges between the `round(p * ens / 2)` most
/// correlated pairs, where `ens` is the true expected neighbourhood size.
#[derive(Clone, Copy, Debug)]
pub struct AbsCorrelation {
    ens: f64,
}

impl AbsCorrelation {
    pub fn new(ens: f64) -> Self {
        Self { ens }
    }

    pub fn edge_budget(&self, p: usize) -> usize {
        let k = (p as f64 * self.ens / 2.0).round();
        if k.is_finite() && k > 0.0 {
            (k as usize).min(p * p.saturating_sub(1) / 2)
        } else {
            0
        }
    }
}

impl<T: Scalar> Learner<T> for AbsCorrelation {
    fn id(&self) -> String {
        "acor".into()
    }

    fn fit(&self, data: &MultiRegimeDataset<T>) -> Result<MixedGraph, LearnerError> {
        let ranking = abs_correlation_ranking(data.observational())?;
        let k = self.edge_budget(data.p());
        let edges = ranking.into_iter().take(k).map(|(pair, _)| pair);
        Ok(MixedGraph::new(data.p(), [], edges).expect("pairs are in range"))
    }
}
