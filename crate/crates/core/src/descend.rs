//! Descendant estimation from interventional data.
//!
//! For an intervention on node `i`, every other column of the interventional
//! block is compared with the same column of the observational block by a
//! two-sample mean test. A node whose statistic exceeds a multiplicity-corrected
//! normal cutoff is declared a descendant of `i`.

use std::collections::BTreeMap;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::dataset::{DatasetError, MultiRegimeDataset, Regime};
use crate::graph::{Dag, NodeSet};
use crate::scalar::{format_exact, Scalar};

#[derive(Debug, Error)]
pub enum DescendError {
    #[error("two-sample test needs at least 2 observations per sample, got {0} and {1}")]
    TooFewSamples(usize, usize),
    #[error("descendant estimation needs at least 2 variables")]
    TooFewVariables,
    #[error("alpha must lie in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

/// A two-sample statistic with its degeneracy flag.
///
/// `degenerate` is set when both samples are constant; the value is then 0 for
/// equal constants and `±inf` (sign of the mean difference) otherwise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Statistic<T> {
    pub value: T,
    pub degenerate: bool,
}

fn moments<T: Scalar>(xs: ArrayView1<'_, T>) -> (T, T, T) {
    let n = T::of_usize(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let ss = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>();
    (n, mean, ss / (n - T::one()))
}

fn guard(nx: usize, ny: usize) -> Result<(), DescendError> {
    if nx < 2 || ny < 2 {
        Err(DescendError::TooFewSamples(nx, ny))
    } else {
        Ok(())
    }
}

fn ratio<T: Scalar>(diff: T, se: T) -> Statistic<T> {
    if se > T::zero() {
        Statistic {
            value: diff / se,
            degenerate: false,
        }
    } else if diff == T::zero() {
        Statistic {
            value: T::zero(),
            degenerate: true,
        }
    } else {
        Statistic {
            value: T::infinity() * diff.signum(),
            degenerate: true,
        }
    }
}

/// Welch statistic `(mean(x) - mean(y)) / sqrt(s_x²/n_x + s_y²/n_y)` with
/// unbiased sample variances.
pub fn welch_t<T: Scalar>(x: ArrayView1<'_, T>, y: ArrayView1<'_, T>) -> Result<Statistic<T>, DescendError> {
    guard(x.len(), y.len())?;
    let (nx, mx, vx) = moments(x);
    let (ny, my, vy) = moments(y);
    Ok(ratio(mx - my, (vx / nx + vy / ny).sqrt()))
}

/// Mean shift of `x` measured on the scale of the reference sample:
/// `(mean(x) - mean(r)) / (s_r sqrt(1/n_x + 1/n_r))`.
///
/// Equivalent to centring and scaling every column by the reference
/// (observational) mean and standard deviation, then testing the mean of the
/// transformed sample against the null variance estimated from the reference.
pub fn reference_scaled_shift<T: Scalar>(
    x: ArrayView1<'_, T>,
    reference: ArrayView1<'_, T>,
) -> Result<Statistic<T>, DescendError> {
    guard(x.len(), reference.len())?;
    let (nx, mx, _) = moments(x);
    let (nr, mr, vr) = moments(reference);
    Ok(ratio(
        mx - mr,
        vr.sqrt() * (T::one() / nx + T::one() / nr).sqrt(),
    ))
}

/// Pluggable two-sample mean-difference statistic. `sample` is the
/// interventional column, `reference` the observational one.
pub trait TwoSampleTest<T: Scalar>: Send + Sync {
    fn statistic(
        &self,
        sample: ArrayView1<'_, T>,
        reference: ArrayView1<'_, T>,
    ) -> Result<Statistic<T>, DescendError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WelchTest;

impl<T: Scalar> TwoSampleTest<T> for WelchTest {
    fn statistic(&self, sample: ArrayView1<'_, T>, reference: ArrayView1<'_, T>) -> Result<Statistic<T>, DescendError> {
        welch_t(sample, reference)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ReferenceScaledTest;

impl<T: Scalar> TwoSampleTest<T> for ReferenceScaledTest {
    fn statistic(&self, sample: ArrayView1<'_, T>, reference: ArrayView1<'_, T>) -> Result<Statistic<T>, DescendError> {
        reference_scaled_shift(sample, reference)
    }
}

/// Which tests share the family-wise level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionScope {
    /// Bonferroni over the `p - 1` tests of each intervention.
    #[default]
    PerIntervention,
    /// Bonferroni over all `|iota| (p - 1)` tests.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffDistribution {
    #[default]
    Normal,
    /// Student t with `min(n_0, n_i) - 1` degrees of freedom.
    StudentT,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescendConfig {
    pub alpha: f64,
    pub scope: CorrectionScope,
    pub cutoff: CutoffDistribution,
    /// Use [`reference_scaled_shift`] instead of [`welch_t`].
    pub center_on_observational: bool,
}

impl Default for DescendConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            scope: CorrectionScope::PerIntervention,
            cutoff: CutoffDistribution::Normal,
            center_on_observational: false,
        }
    }
}

/// Estimated descendant set of one intervened node.
#[derive(Clone, Debug, PartialEq)]
pub struct DescendantEstimate<T> {
    pub source: usize,
    pub members: NodeSet,
    pub statistics: BTreeMap<usize, T>,
    pub cutoff: T,
    /// Nodes whose statistic came from constant samples.
    pub degenerate: NodeSet,
}

impl<T: Scalar> DescendantEstimate<T> {
    /// Builds an estimate from statistics; members are exactly the nodes with
    /// `|statistic| > cutoff`.
    pub fn from_statistics(source: usize, statistics: BTreeMap<usize, T>, cutoff: T) -> Self {
        let members = statistics
            .iter()
            .filter(|(_, s)| s.abs() > cutoff)
            .map(|(&j, _)| j)
            .collect();
        Self {
            source,
            members,
            statistics,
            cutoff,
            degenerate: NodeSet::new(),
        }
    }

    /// Estimate that reproduces the true descendants of `source` in `dag`.
    pub fn oracle(dag: &Dag, source: usize) -> Self {
        let truth = dag.descendants(source).expect("source in range");
        let statistics = (0..dag.p())
            .filter(|&j| j != source)
            .map(|j| (j, if truth.contains(&j) { T::infinity() } else { T::zero() }))
            .collect();
        Self::from_statistics(source, statistics, T::zero())
    }

    pub fn to_record(&self) -> DescendantRecord {
        DescendantRecord {
            source: self.source + 1,
            members: self.members.iter().map(|j| j + 1).collect(),
            statistics: self
                .statistics
                .iter()
                .map(|(&j, &s)| (j + 1, format_exact(s)))
                .collect(),
            cutoff: self.cutoff.f64(),
            degenerate: self.degenerate.iter().map(|j| j + 1).collect(),
        }
    }
}

/// JSON audit form of an estimate, 1-based. Statistics are strings so that
/// infinite values survive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescendantRecord {
    pub source: usize,
    pub members: Vec<usize>,
    pub statistics: BTreeMap<usize, String>,
    pub cutoff: f64,
    pub degenerate: Vec<usize>,
}

/// Two-sided standard-normal (or t) cutoff at per-test level `level`.
pub fn two_sided_cutoff(level: f64, dist: CutoffDistribution, df: f64) -> f64 {
    let q = 1.0 - level / 2.0;
    match dist {
        CutoffDistribution::Normal => Normal::standard().inverse_cdf(q),
        CutoffDistribution::StudentT => StudentsT::new(0.0, 1.0, df.max(1.0))
            .expect("valid t parameters")
            .inverse_cdf(q),
    }
}

/// Estimates the descendants of intervened node `node` from blocks 0 and
/// `node` only.
pub fn estimate_descendants<T: Scalar>(
    d: &MultiRegimeDataset<T>,
    node: usize,
    cfg: &DescendConfig,
) -> Result<DescendantEstimate<T>, DescendError> {
    let p = d.p();
    if p < 2 {
        return Err(DescendError::TooFewVariables);
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(DescendError::BadAlpha(cfg.alpha));
    }
    let obs = d.observational();
    let int = d.block(Regime::Intervention(node))?;
    let tests = match cfg.scope {
        CorrectionScope::PerIntervention => p - 1,
        CorrectionScope::Global => d.iota_size().max(1) * (p - 1),
    };
    let df = (obs.nrows().min(int.nrows()) as f64) - 1.0;
    let cutoff = T::of(two_sided_cutoff(cfg.alpha / tests as f64, cfg.cutoff, df));

    let test: &dyn TwoSampleTest<T> = if cfg.center_on_observational {
        &ReferenceScaledTest
    } else {
        &WelchTest
    };
    let mut statistics = BTreeMap::new();
    let mut degenerate = NodeSet::new();
    for j in (0..p).filter(|&j| j != node) {
        let s = test.statistic(int.column(j), obs.column(j))?;
        if s.degenerate {
            degenerate.insert(j);
        }
        statistics.insert(j, s.value);
    }
    let mut est = DescendantEstimate::from_statistics(node, statistics, cutoff);
    est.degenerate = degenerate;
    Ok(est)
}

/// Estimates for every intervened node of `d`.
pub fn estimate_all<T: Scalar>(
    d: &MultiRegimeDataset<T>,
    cfg: &DescendConfig,
) -> Result<BTreeMap<usize, DescendantEstimate<T>>, DescendError> {
    d.iota()
        .into_iter()
        .map(|i| Ok((i, estimate_descendants(d, i, cfg)?)))
        .collect()
}

/// True descendant sets for every intervened node of `d`.
pub fn oracle_all<T: Scalar>(dag: &Dag, iota: &[usize]) -> BTreeMap<usize, DescendantEstimate<T>> {
    iota.iter().map(|&i| (i, DescendantEstimate::oracle(dag, i))).collect()
}
