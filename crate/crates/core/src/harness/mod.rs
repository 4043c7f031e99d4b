//! Simulation harness: sample data-generating settings, evaluate learners on
//! them, and summarize how often estimated risk differences get the sign of the
//! true difference right.

mod grid;
mod report;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, MultiRegimeDataset};
use crate::descend::{estimate_all, oracle_all, DescendConfig, DescendError, DescendantEstimate};
use crate::graph::{random_er_dag, Dag, GraphError};
use crate::learners::{Learner, LearnerError};
use crate::risk::{evaluate_learner, RiskError};
use crate::scalar::Scalar;
use crate::sem::{InterventionKind, Link, NoiseKind, Sem, SemError};

pub use grid::{
    read_results, run_grid, settings_for, write_results, DiscardedSetting, GridConfig, GridMode, GridOutput,
    ResultRow,
};
pub use report::{aggregate_report, render_svg, CellKey, CellReport, SignAgreementCell};

pub const DEFAULT_MAX_RETRIES: usize = 1000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no admissible interventions after {0} attempts")]
    RetriesExhausted(usize),
    #[error("setting space axis `{0}` is empty")]
    EmptyAxis(&'static str),
    #[error("learner {0:?} does not appear in the results")]
    UnknownLearner(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Descend(#[from] DescendError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Discrete axes the settings are drawn from. The defaults are the full
/// simulation grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SettingSpace {
    pub p: Vec<usize>,
    pub ens: Vec<f64>,
    pub link: Vec<Link>,
    pub noise: Vec<NoiseKind>,
    pub p_iota: Vec<f64>,
    pub kind: Vec<InterventionKind>,
    pub n_int: Vec<usize>,
    pub shift: f64,
    pub snr: f64,
    /// Observational sample size is `max(n_int, min_n_obs)`.
    pub min_n_obs: usize,
}

impl Default for SettingSpace {
    fn default() -> Self {
        Self {
            p: vec![25, 50, 100, 200],
            ens: vec![1.5, 2.5],
            link: vec![Link::Linear, Link::Sigmoidal],
            noise: vec![NoiseKind::Gaussian, NoiseKind::Lognormal],
            p_iota: vec![0.1, 0.2, 0.5, 1.0],
            kind: vec![InterventionKind::Shift, InterventionKind::DoAndShift],
            n_int: vec![10, 100, 1000],
            shift: 5.0,
            snr: 5.0,
            min_n_obs: 100,
        }
    }
}

impl SettingSpace {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let axes = [
            ("p", self.p.is_empty()),
            ("ens", self.ens.is_empty()),
            ("link", self.link.is_empty()),
            ("noise", self.noise.is_empty()),
            ("p_iota", self.p_iota.is_empty()),
            ("kind", self.kind.is_empty()),
            ("n_int", self.n_int.is_empty()),
        ];
        if let Some((name, _)) = axes.iter().find(|(_, empty)| *empty) {
            return Err(HarnessError::EmptyAxis(name));
        }
        if let Some(&p) = self.p.iter().find(|&&p| p < 2) {
            return Err(HarnessError::Config(format!("p = {p} is below 2")));
        }
        if let Some(&q) = self.p_iota.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
            return Err(HarnessError::Config(format!("p_iota = {q} is outside (0, 1]")));
        }
        if self.n_int.contains(&0) {
            return Err(HarnessError::Config("n_int must be positive".into()));
        }
        if !self.shift.is_finite() {
            return Err(HarnessError::Config("shift must be finite".into()));
        }
        Ok(())
    }

    /// One uniform draw from every axis.
    pub fn sample_params<R: Rng + ?Sized>(&self, rng: &mut R) -> SettingParams {
        SettingParams {
            p: *self.p.choose(rng).expect("validated"),
            ens: *self.ens.choose(rng).expect("validated"),
            link: *self.link.choose(rng).expect("validated"),
            noise: *self.noise.choose(rng).expect("validated"),
            p_iota: *self.p_iota.choose(rng).expect("validated"),
            kind: *self.kind.choose(rng).expect("validated"),
            n_int: *self.n_int.choose(rng).expect("validated"),
            shift: self.shift,
            snr: self.snr,
            n_obs: 0,
        }
        .with_n_obs(self.min_n_obs)
    }
}

/// Parameters of one data-generating setting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingParams {
    pub p: usize,
    pub ens: f64,
    pub link: Link,
    pub noise: NoiseKind,
    pub p_iota: f64,
    pub kind: InterventionKind,
    pub n_int: usize,
    pub n_obs: usize,
    pub shift: f64,
    pub snr: f64,
}

impl SettingParams {
    pub fn with_n_obs(mut self, min_n_obs: usize) -> Self {
        self.n_obs = self.n_int.max(min_n_obs);
        self
    }
}

/// Each node independently with probability `p_iota`, redrawn until at least
/// two nodes are chosen.
pub fn sample_iota<R: Rng + ?Sized>(
    p: usize,
    p_iota: f64,
    rng: &mut R,
    max_retries: usize,
) -> Result<BTreeSet<usize>, HarnessError> {
    for _ in 0..max_retries.max(1) {
        let iota: BTreeSet<usize> = (0..p).filter(|_| rng.random_bool(p_iota.clamp(0.0, 1.0))).collect();
        if iota.len() >= 2 {
            return Ok(iota);
        }
    }
    Err(HarnessError::RetriesExhausted(max_retries))
}

/// A realized setting: parameters, true DAG, intervention targets, and the seeds
/// for the SEM weights and the data replicates.
#[derive(Clone, Debug, PartialEq)]
pub struct Setting {
    pub index: usize,
    pub params: SettingParams,
    pub dag: Dag,
    pub iota: BTreeSet<usize>,
    pub sem_seed: u64,
    pub data_seed: u64,
    /// Graph and target draws needed to pass the filters.
    pub attempts: usize,
}

/// Random stream of setting `index` under `root_seed`; independent of how many
/// settings there are or the order they run in.
pub fn setting_rng(root_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(index as u64);
    rng
}

impl Setting {
    /// Draws the DAG and the targets from `rng` until `|iota| >= 2` and the
    /// targets have at least three true descendants in total.
    pub fn realize<R: Rng + ?Sized>(
        index: usize,
        params: SettingParams,
        rng: &mut R,
        max_retries: usize,
    ) -> Result<Self, HarnessError> {
        let sem_seed = rng.random();
        let data_seed = rng.random();
        for attempt in 1..=max_retries.max(1) {
            let dag = random_er_dag(params.p, params.ens, rng)?;
            let Ok(iota) = sample_iota(params.p, params.p_iota, rng, 1) else {
                continue;
            };
            if total_descendants(&dag, &iota) >= 3 {
                return Ok(Self {
                    index,
                    params,
                    dag,
                    iota,
                    sem_seed,
                    data_seed,
                    attempts: attempt,
                });
            }
        }
        Err(HarnessError::RetriesExhausted(max_retries))
    }

    pub fn sem<T: Scalar>(&self) -> Result<Sem<T>, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.sem_seed);
        Ok(Sem::build(
            self.dag.clone(),
            self.params.link,
            self.params.noise,
            self.params.snr,
            &mut rng,
        )?)
    }

    /// Dataset replicate `rep`; replicates share the SEM and targets.
    pub fn dataset<T: Scalar>(&self, sem: &Sem<T>, rep: usize) -> Result<MultiRegimeDataset<T>, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.data_seed);
        rng.set_stream(rep as u64);
        Ok(MultiRegimeDataset::generate(
            sem,
            &self.iota,
            self.params.kind,
            T::of(self.params.shift),
            self.params.n_int,
            self.params.n_obs,
            &mut rng,
        )?)
    }

    pub fn total_descendants(&self) -> usize {
        total_descendants(&self.dag, &self.iota)
    }
}

fn total_descendants(dag: &Dag, iota: &BTreeSet<usize>) -> usize {
    iota.iter()
        .map(|&i| dag.descendants(i).map(|d| d.len()).unwrap_or(0))
        .sum()
}

/// Draws a setting from `space` on the stream of `index`.
pub fn sample_setting(
    space: &SettingSpace,
    root_seed: u64,
    index: usize,
    max_retries: usize,
) -> Result<Setting, HarnessError> {
    space.validate()?;
    let mut rng = setting_rng(root_seed, index);
    let params = space.sample_params(&mut rng);
    Setting::realize(index, params, &mut rng, max_retries)
}

/// How descendant sets are obtained when scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub descend: DescendConfig,
    /// Use the true descendant sets instead of testing for them.
    pub oracle_descendants: bool,
}

/// Descendant estimation quality against the truth, summed over targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DescendantDiagnostics {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl DescendantDiagnostics {
    pub fn compare<T: Scalar>(dag: &Dag, est: &BTreeMap<usize, DescendantEstimate<T>>) -> Self {
        let mut out = Self::default();
        for (&i, e) in est {
            let truth = dag.descendants(i).unwrap_or_default();
            out.true_positives += e.members.intersection(&truth).count();
            out.false_positives += e.members.difference(&truth).count();
            out.false_negatives += truth.difference(&e.members).count();
        }
        out
    }
}

/// The four risks of one learner, as f64.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskQuad {
    pub oracle_hat: f64,
    pub naive: f64,
    pub cv: f64,
    pub weighted: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnerOutcome {
    pub learner: String,
    pub result: Result<RiskQuad, String>,
}

/// Everything one dataset replicate of a setting produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SettingOutcome {
    pub index: usize,
    pub rep: usize,
    pub diagnostics: DescendantDiagnostics,
    pub learners: Vec<LearnerOutcome>,
}

fn descendant_sets<T: Scalar>(
    setting: &Setting,
    data: &MultiRegimeDataset<T>,
    opts: &RunOptions,
) -> Result<BTreeMap<usize, DescendantEstimate<T>>, HarnessError> {
    Ok(if opts.oracle_descendants {
        oracle_all(&setting.dag, &data.iota())
    } else {
        estimate_all(data, &opts.descend)?
    })
}

fn score<T: Scalar>(
    setting: &Setting,
    data: &MultiRegimeDataset<T>,
    learner: &dyn Learner<T>,
    est: &BTreeMap<usize, DescendantEstimate<T>>,
) -> Result<RiskQuad, RiskError> {
    let r = evaluate_learner(data, learner, est, Some(&setting.dag))?;
    Ok(RiskQuad {
        oracle_hat: r.oracle_hat.expect("truth supplied").value.f64(),
        naive: r.naive.value.f64(),
        cv: r.cv.value.f64(),
        weighted: r.weighted.value.f64(),
    })
}

/// Generates replicate `rep` of `setting` and scores every learner on it. A
/// failing learner is recorded and does not stop the others.
pub fn run_replicate<T: Scalar>(
    setting: &Setting,
    sem: &Sem<T>,
    learners: &[Box<dyn Learner<T>>],
    opts: &RunOptions,
    rep: usize,
) -> Result<SettingOutcome, HarnessError> {
    let data = setting.dataset(sem, rep)?;
    let est = descendant_sets(setting, &data, opts)?;
    let outcomes = learners
        .iter()
        .map(|l| LearnerOutcome {
            learner: l.id(),
            result: score(setting, &data, l.as_ref(), &est).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(SettingOutcome {
        index: setting.index,
        rep,
        diagnostics: DescendantDiagnostics::compare(&setting.dag, &est),
        learners: outcomes,
    })
}

/// Scores every learner on the setting's first dataset replicate.
pub fn run_setting<T: Scalar>(
    setting: &Setting,
    learners: &[Box<dyn Learner<T>>],
    opts: &RunOptions,
) -> Result<SettingOutcome, HarnessError> {
    let sem = setting.sem()?;
    run_replicate(setting, &sem, learners, opts, 0)
}

/// Monte Carlo estimate of a learner's expected oracle risk.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleRiskEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
    pub failures: Vec<(usize, String)>,
}

/// Mean and standard error of `oracle_hat` over `reps` fresh datasets from the
/// setting's SEM. Replicate `r` uses the same data as [`run_replicate`] with
/// `rep = r`.
pub fn estimate_oracle_risk<T: Scalar>(
    setting: &Setting,
    learner: &dyn Learner<T>,
    reps: usize,
) -> Result<OracleRiskEstimate, HarnessError> {
    if reps == 0 {
        return Err(HarnessError::Config("reps must be at least 1".into()));
    }
    let sem = setting.sem()?;
    let mut values = Vec::with_capacity(reps);
    let mut failures = Vec::new();
    for rep in 0..reps {
        let data = setting.dataset(&sem, rep)?;
        match learner.fit(&data) {
            Ok(h) => match crate::risk::oracle_hat::<T>(&setting.dag, &h) {
                Ok(r) => values.push(r.value.f64()),
                Err(e) => failures.push((rep, e.to_string())),
            },
            Err(e) => failures.push((rep, e.to_string())),
        }
    }
    let n = values.len();
    let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
    let std_error = if n < 2 {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    };
    Ok(OracleRiskEstimate {
        mean,
        std_error,
        reps: n,
        failures,
    })
}
