//! Grid runs: many settings in parallel, flattened to one CSV row per
//! setting and learner.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Duration;

use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    run_setting, setting_rng, HarnessError, RunOptions, Setting, SettingParams, SettingSpace,
    DEFAULT_MAX_RETRIES,
};
use crate::learners::{Learner, LearnerConfig};
use crate::sem::{InterventionKind, Link, NoiseKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridMode {
    /// Every combination of p, n_int, link, noise, kind and p_iota, each
    /// `replicates` times; ENS is drawn per setting.
    Exhaustive { replicates: usize },
    /// `settings` independent uniform draws from the space.
    Sample { settings: usize },
}

impl Default for GridMode {
    fn default() -> Self {
        GridMode::Sample { settings: 24 }
    }
}

fn default_learners() -> Vec<LearnerConfig> {
    vec![LearnerConfig::greedy_bic(), LearnerConfig::Empty]
}

fn default_max_retries() -> usize {
    DEFAULT_MAX_RETRIES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub space: SettingSpace,
    #[serde(default)]
    pub mode: GridMode,
    #[serde(default = "default_learners")]
    pub learners: Vec<LearnerConfig>,
    #[serde(default)]
    pub options: RunOptions,
    #[serde(default = "default_max_retries")]
    pub max_retries: usize,
    /// Default wall-clock limit for external learners.
    #[serde(default)]
    pub timeout_secs: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            space: SettingSpace::default(),
            mode: GridMode::default(),
            learners: default_learners(),
            options: RunOptions::default(),
            max_retries: DEFAULT_MAX_RETRIES,
            timeout_secs: None,
        }
    }
}

impl GridConfig {
    /// Parses TOML when the path ends in `.toml`, JSON otherwise.
    pub fn from_path(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let cfg = if is_toml {
            Self::from_toml(&text)
        } else {
            Self::from_json(&text)
        }
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.space.validate()?;
        if self.learners.is_empty() {
            return Err(HarnessError::Config("at least one learner is required".into()));
        }
        for l in &self.learners {
            l.build::<f64>(Some(1.0), None)?;
        }
        Ok(())
    }

    pub fn setting_count(&self) -> usize {
        match self.mode {
            GridMode::Sample { settings } => settings,
            GridMode::Exhaustive { replicates } => self.cells().len() * replicates,
        }
    }

    fn cells(&self) -> Vec<(usize, usize, Link, NoiseKind, InterventionKind, f64)> {
        let s = &self.space;
        let mut out = Vec::new();
        for &p in &s.p {
            for &n_int in &s.n_int {
                for &link in &s.link {
                    for &noise in &s.noise {
                        for &kind in &s.kind {
                            for &p_iota in &s.p_iota {
                                out.push((p, n_int, link, noise, kind, p_iota));
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn realize(&self, root_seed: u64, index: usize) -> Result<Setting, HarnessError> {
        let mut rng = setting_rng(root_seed, index);
        let params = match self.mode {
            GridMode::Sample { .. } => self.space.sample_params(&mut rng),
            GridMode::Exhaustive { replicates } => {
                let (p, n_int, link, noise, kind, p_iota) = self.cells()[index / replicates.max(1)];
                SettingParams {
                    p,
                    ens: *self.space.ens.choose(&mut rng).expect("validated"),
                    link,
                    noise,
                    p_iota,
                    kind,
                    n_int,
                    n_obs: 0,
                    shift: self.space.shift,
                    snr: self.space.snr,
                }
                .with_n_obs(self.space.min_n_obs)
            }
        };
        Setting::realize(index, params, &mut rng, self.max_retries)
    }
}

/// The settings a grid run would evaluate, in index order.
pub fn settings_for(cfg: &GridConfig, root_seed: u64) -> Vec<Result<Setting, HarnessError>> {
    (0..cfg.setting_count()).map(|i| cfg.realize(root_seed, i)).collect()
}

/// One setting and learner. Risks are blank when the learner failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub setting: usize,
    pub root_seed: u64,
    pub p: usize,
    pub ens: f64,
    pub link: Link,
    pub noise: NoiseKind,
    pub kind: InterventionKind,
    pub p_iota: f64,
    pub n_int: usize,
    pub n_obs: usize,
    pub iota_size: usize,
    pub total_descendants: usize,
    pub learner: String,
    pub oracle_hat: Option<f64>,
    pub naive: Option<f64>,
    pub cv: Option<f64>,
    pub weighted: Option<f64>,
    pub desc_tp: usize,
    pub desc_fp: usize,
    pub desc_fn: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscardedSetting {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridOutput {
    pub rows: Vec<ResultRow>,
    pub discarded: Vec<DiscardedSetting>,
}

fn run_one(cfg: &GridConfig, root_seed: u64, index: usize) -> Result<Vec<ResultRow>, HarnessError> {
    let setting = cfg.realize(root_seed, index)?;
    let timeout = cfg.timeout_secs.map(Duration::from_secs_f64);
    let learners = cfg
        .learners
        .iter()
        .map(|l| l.build::<f64>(Some(setting.params.ens), timeout))
        .collect::<Result<Vec<Box<dyn Learner<f64>>>, _>>()?;
    let outcome = run_setting(&setting, &learners, &cfg.options)?;
    let sp = &setting.params;
    Ok(outcome
        .learners
        .into_iter()
        .map(|o| {
            let (risks, error) = match o.result {
                Ok(r) => (Some(r), String::new()),
                Err(e) => (None, e),
            };
            ResultRow {
                setting: index,
                root_seed,
                p: sp.p,
                ens: sp.ens,
                link: sp.link,
                noise: sp.noise,
                kind: sp.kind,
                p_iota: sp.p_iota,
                n_int: sp.n_int,
                n_obs: sp.n_obs,
                iota_size: setting.iota.len(),
                total_descendants: setting.total_descendants(),
                learner: o.learner,
                oracle_hat: risks.map(|r| r.oracle_hat),
                naive: risks.map(|r| r.naive),
                cv: risks.map(|r| r.cv),
                weighted: risks.map(|r| r.weighted),
                desc_tp: outcome.diagnostics.true_positives,
                desc_fp: outcome.diagnostics.false_positives,
                desc_fn: outcome.diagnostics.false_negatives,
                error,
            }
        })
        .collect())
}

/// Runs every setting of the grid on `jobs` worker threads (0 picks the number
/// of CPUs). Output order and content do not depend on `jobs`.
pub fn run_grid(cfg: &GridConfig, root_seed: u64, jobs: usize) -> Result<GridOutput, HarnessError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let n = cfg.setting_count();
    let results: Vec<_> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let r = run_one(cfg, root_seed, i);
                match &r {
                    Ok(_) => log::debug!("setting {i} done"),
                    Err(e) => log::warn!("setting {i} discarded: {e}"),
                }
                (i, r)
            })
            .collect()
    });
    let mut out = GridOutput::default();
    for (index, r) in results {
        match r {
            Ok(rows) => out.rows.extend(rows),
            Err(e) => out.discarded.push(DiscardedSetting {
                index,
                reason: e.to_string(),
            }),
        }
    }
    Ok(out)
}

pub fn write_results<W: Write>(rows: &[ResultRow], w: W) -> Result<(), HarnessError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(RESULT_HEADER)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(r: R) -> Result<Vec<ResultRow>, HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    let rows = rdr.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

const RESULT_HEADER: [&str; 21] = [
    "setting",
    "root_seed",
    "p",
    "ens",
    "link",
    "noise",
    "kind",
    "p_iota",
    "n_int",
    "n_obs",
    "iota_size",
    "total_descendants",
    "learner",
    "oracle_hat",
    "naive",
    "cv",
    "weighted",
    "desc_tp",
    "desc_fp",
    "desc_fn",
    "error",
];
