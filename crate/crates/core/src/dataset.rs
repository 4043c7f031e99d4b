//! Observational plus single-intervention data, grouped by regime.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{format_exact, parse_exact, Scalar};
use crate::sem::{InterventionKind, InterventionSpec, Sem, SemError};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("observational regime 0 is required")]
    MissingObservational,
    #[error("regime {0} is not present in the dataset")]
    AbsentRegime(Regime),
    #[error("block for regime {regime} has {found} columns, expected {expected}")]
    ColumnMismatch {
        regime: Regime,
        expected: usize,
        found: usize,
    },
    #[error("regime {0} has no intervention spec")]
    MissingSpec(Regime),
    #[error("intervention spec for node {spec_node} filed under regime {regime}")]
    SpecMismatch { regime: Regime, spec_node: usize },
    #[error("regime {0} has an empty block")]
    EmptyBlock(Regime),
    #[error("at least one intervention is required")]
    NoInterventions,
    #[error("data file: {0}")]
    Format(String),
    #[error(transparent)]
    Sem(#[from] SemError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Data regime: `0` is observational, `i >= 1` the single intervention on node `i`
/// (1-based in its label, 0-based in the variant payload).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Regime {
    Observational,
    Intervention(usize),
}

impl Regime {
    pub fn label(self) -> usize {
        match self {
            Regime::Observational => 0,
            Regime::Intervention(node) => node + 1,
        }
    }

    pub fn from_label(label: usize) -> Self {
        match label {
            0 => Regime::Observational,
            l => Regime::Intervention(l - 1),
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// Blocks of i.i.d. rows, one per regime, all with `p` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiRegimeDataset<T> {
    p: usize,
    blocks: BTreeMap<Regime, Array2<T>>,
    specs: BTreeMap<usize, InterventionSpec<T>>,
}

impl<T: Scalar> MultiRegimeDataset<T> {
    pub fn new(
        observational: Array2<T>,
        interventional: impl IntoIterator<Item = (InterventionSpec<T>, Array2<T>)>,
    ) -> Result<Self, DatasetError> {
        let p = observational.ncols();
        let mut blocks = BTreeMap::new();
        let mut specs = BTreeMap::new();
        blocks.insert(Regime::Observational, observational);
        for (spec, block) in interventional {
            if spec.node >= p {
                return Err(DatasetError::Format(format!(
                    "intervention on node {} of a {p}-variable dataset",
                    spec.node + 1
                )));
            }
            blocks.insert(Regime::Intervention(spec.node), block);
            specs.insert(spec.node, spec);
        }
        let d = Self { p, blocks, specs };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if !self.blocks.contains_key(&Regime::Observational) {
            return Err(DatasetError::MissingObservational);
        }
        for (&regime, block) in &self.blocks {
            if block.ncols() != self.p {
                return Err(DatasetError::ColumnMismatch {
                    regime,
                    expected: self.p,
                    found: block.ncols(),
                });
            }
            if block.nrows() == 0 {
                return Err(DatasetError::EmptyBlock(regime));
            }
            if let Regime::Intervention(node) = regime {
                let spec = self.specs.get(&node).ok_or(DatasetError::MissingSpec(regime))?;
                if spec.node != node {
                    return Err(DatasetError::SpecMismatch {
                        regime,
                        spec_node: spec.node,
                    });
                }
            }
        }
        Ok(())
    }

    /// Samples block 0 from `sem` and one block per node in `iota` from the
    /// correspondingly intervened model, in ascending node order.
    #[allow(clippy::too_many_arguments)]
    pub fn generate<R: Rng + ?Sized>(
        sem: &Sem<T>,
        iota: &BTreeSet<usize>,
        kind: InterventionKind,
        shift: T,
        n_int: usize,
        n_obs: usize,
        rng: &mut R,
    ) -> Result<Self, DatasetError> {
        if iota.is_empty() {
            return Err(DatasetError::NoInterventions);
        }
        if n_int == 0 || n_obs == 0 {
            return Err(DatasetError::EmptyBlock(Regime::Observational));
        }
        let observational = sem.sample(n_obs, rng);
        let mut interventional = Vec::with_capacity(iota.len());
        for &node in iota {
            let spec = InterventionSpec::new(node, kind, shift)?;
            let block = sem.apply_intervention(&spec)?.sample(n_int, rng);
            interventional.push((spec, block));
        }
        Self::new(observational, interventional)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn regimes(&self) -> impl Iterator<Item = Regime> + '_ {
        self.blocks.keys().copied()
    }

    /// Intervened nodes (0-based), ascending.
    pub fn iota(&self) -> Vec<usize> {
        self.specs.keys().copied().collect()
    }

    pub fn iota_size(&self) -> usize {
        self.specs.len()
    }

    pub fn spec(&self, node: usize) -> Option<&InterventionSpec<T>> {
        self.specs.get(&node)
    }

    pub fn specs(&self) -> impl Iterator<Item = &InterventionSpec<T>> {
        self.specs.values()
    }

    pub fn block(&self, regime: Regime) -> Result<ArrayView2<'_, T>, DatasetError> {
        self.blocks
            .get(&regime)
            .map(|b| b.view())
            .ok_or(DatasetError::AbsentRegime(regime))
    }

    pub fn observational(&self) -> ArrayView2<'_, T> {
        self.blocks[&Regime::Observational].view()
    }

    pub fn n(&self, regime: Regime) -> Option<usize> {
        self.blocks.get(&regime).map(|b| b.nrows())
    }

    /// Total sample size over all regimes.
    pub fn total_n(&self) -> usize {
        self.blocks.values().map(|b| b.nrows()).sum()
    }

    /// Restriction to whole blocks of the listed regimes, which must include the
    /// observational one.
    pub fn subset(&self, regimes: &BTreeSet<Regime>) -> Result<Self, DatasetError> {
        if !regimes.contains(&Regime::Observational) {
            return Err(DatasetError::MissingObservational);
        }
        let mut blocks = BTreeMap::new();
        let mut specs = BTreeMap::new();
        for &r in regimes {
            let block = self.blocks.get(&r).ok_or(DatasetError::AbsentRegime(r))?;
            blocks.insert(r, block.clone());
            if let Regime::Intervention(node) = r {
                specs.insert(node, self.specs[&node]);
            }
        }
        Ok(Self {
            p: self.p,
            blocks,
            specs,
        })
    }

    /// Every regime except the intervention on `node`.
    pub fn without_intervention(&self, node: usize) -> Result<Self, DatasetError> {
        let target = Regime::Intervention(node);
        if !self.blocks.contains_key(&target) {
            return Err(DatasetError::AbsentRegime(target));
        }
        let keep = self.regimes().filter(|&r| r != target).collect();
        self.subset(&keep)
    }

    /// All rows stacked in regime order, with the regime of each row.
    pub fn stacked(&self) -> (Vec<Regime>, Array2<T>) {
        let labels = self
            .blocks
            .iter()
            .flat_map(|(&r, b)| std::iter::repeat_n(r, b.nrows()))
            .collect();
        let views: Vec<_> = self.blocks.values().map(|b| b.view()).collect();
        let all = concatenate(Axis(0), &views).expect("blocks share column count");
        (labels, all)
    }

    /// Writes the flat CSV: a `regime` column followed by `X1..Xp`, values with
    /// 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["regime".to_string()];
        header.extend((1..=self.p).map(|j| format!("X{j}")));
        out.write_record(&header)?;
        for (&regime, block) in &self.blocks {
            for row in block.rows() {
                let mut rec = Vec::with_capacity(self.p + 1);
                rec.push(regime.label().to_string());
                rec.extend(row.iter().map(|&v| format_exact(v)));
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn specs_file(&self) -> SpecsFile {
        SpecsFile {
            p: self.p,
            interventions: self
                .specs
                .values()
                .map(|s| SpecRecord {
                    node: s.node + 1,
                    kind: s.kind,
                    shift: s.shift.f64(),
                })
                .collect(),
        }
    }

    pub fn write_specs<W: Write>(&self, w: W) -> Result<(), DatasetError> {
        serde_json::to_writer_pretty(w, &self.specs_file())?;
        Ok(())
    }

    pub fn read<R1: Read, R2: Read>(csv_in: R1, specs_in: R2) -> Result<Self, DatasetError> {
        let specs: SpecsFile = serde_json::from_reader(specs_in)?;
        Self::read_csv(csv_in, &specs)
    }

    pub fn read_csv<R: Read>(csv_in: R, specs: &SpecsFile) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(csv_in);
        let header = rdr.headers()?.clone();
        let p = header.len().saturating_sub(1);
        if header.get(0) != Some("regime") {
            return Err(DatasetError::Format("first column must be `regime`".into()));
        }
        for (j, name) in header.iter().skip(1).enumerate() {
            if name != format!("X{}", j + 1) {
                return Err(DatasetError::Format(format!(
                    "column {} is {name:?}, expected X{}",
                    j + 2,
                    j + 1
                )));
            }
        }
        if specs.p != p {
            return Err(DatasetError::Format(format!(
                "specs describe {} variables, data has {p}",
                specs.p
            )));
        }

        let mut rows: BTreeMap<Regime, Vec<T>> = BTreeMap::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| DatasetError::Format(format!("data row {}: {what}", line + 1));
            let label: usize = rec
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad("regime is not a non-negative integer"))?;
            if label > p {
                return Err(bad("regime label exceeds the variable count"));
            }
            let buf = rows.entry(Regime::from_label(label)).or_default();
            for field in rec.iter().skip(1) {
                buf.push(parse_exact(field).ok_or_else(|| bad(&format!("unparsable value {field:?}")))?);
            }
        }

        let mut spec_map = BTreeMap::new();
        for s in &specs.interventions {
            if s.node == 0 || s.node > p {
                return Err(DatasetError::Format(format!("spec for node {} out of range", s.node)));
            }
            spec_map.insert(s.node - 1, InterventionSpec::new(s.node - 1, s.kind, T::of(s.shift))?);
        }
        let obs = rows
            .remove(&Regime::Observational)
            .ok_or(DatasetError::MissingObservational)?;
        let to_block = |v: Vec<T>| {
            let n = v.len() / p.max(1);
            Array2::from_shape_vec((n, p), v).expect("row lengths checked by csv reader")
        };
        let mut interventional = Vec::new();
        for (regime, v) in rows {
            let Regime::Intervention(node) = regime else { unreachable!() };
            let spec = spec_map.remove(&node).ok_or(DatasetError::MissingSpec(regime))?;
            interventional.push((spec, to_block(v)));
        }
        if let Some((&node, _)) = spec_map.iter().next() {
            return Err(DatasetError::Format(format!(
                "spec for node {} has no data rows",
                node + 1
            )));
        }
        Self::new(to_block(obs), interventional)
    }

    pub fn write_files(&self, csv_path: &Path, specs_path: &Path) -> Result<(), DatasetError> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(csv_path)?))?;
        self.write_specs(std::io::BufWriter::new(std::fs::File::create(specs_path)?))?;
        Ok(())
    }

    pub fn read_files(csv_path: &Path, specs_path: &Path) -> Result<Self, DatasetError> {
        Self::read(
            std::io::BufReader::new(std::fs::File::open(csv_path)?),
            std::io::BufReader::new(std::fs::File::open(specs_path)?),
        )
    }
}

/// Sidecar JSON listing the interventions; nodes are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecsFile {
    pub p: usize,
    pub interventions: Vec<SpecRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecRecord {
    pub node: usize,
    pub kind: InterventionKind,
    pub shift: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{random_er_dag, Dag};
    use crate::sem::{Link, NoiseKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(seed: u64, iota: &[usize]) -> MultiRegimeDataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dag = random_er_dag(6, 2.0, &mut rng).unwrap();
        let sem = Sem::build(dag, Link::Linear, NoiseKind::Gaussian, 5.0, &mut rng).unwrap();
        let iota = iota.iter().copied().collect();
        MultiRegimeDataset::generate(&sem, &iota, InterventionKind::Shift, 5.0, 10, 100, &mut rng).unwrap()
    }

    fn regimes(labels: &[usize]) -> BTreeSet<Regime> {
        labels.iter().map(|&l| Regime::from_label(l)).collect()
    }

    #[test]
    fn full_subset_is_identity() {
        let d = toy(1, &[1, 4]);
        assert_eq!(d.subset(&regimes(&[0, 2, 5])).unwrap(), d);
    }

    #[test]
    fn subset_drops_whole_blocks() {
        let d = toy(1, &[1, 4]);
        let s = d.subset(&regimes(&[0, 5])).unwrap();
        assert_eq!(s.iota(), vec![4]);
        assert_eq!(s.total_n(), 100 + 10);
        assert_eq!(d.without_intervention(1).unwrap(), s);
        assert!(matches!(
            d.subset(&regimes(&[2, 5])),
            Err(DatasetError::MissingObservational)
        ));
        assert!(matches!(
            d.subset(&regimes(&[0, 3])),
            Err(DatasetError::AbsentRegime(Regime::Intervention(2)))
        ));
    }

    #[test]
    fn nested_subsets_compose() {
        let d = toy(2, &[0, 1, 2, 5]);
        let a = regimes(&[0, 1, 2, 6]);
        let b = regimes(&[0, 6]);
        assert_eq!(d.subset(&a).unwrap().subset(&b).unwrap(), d.subset(&b).unwrap());
    }

    #[test]
    fn sizes_add_up() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dag = Dag::from_edges(4, [(0, 1), (1, 2)]).unwrap();
        let sem = Sem::<f64>::build(dag, Link::Linear, NoiseKind::Gaussian, 5.0, &mut rng).unwrap();
        let iota = (0..4).collect();
        let d = MultiRegimeDataset::generate(&sem, &iota, InterventionKind::DoAndShift, 5.0, 1000, 1000, &mut rng)
            .unwrap();
        assert_eq!(d.total_n(), 1000 * 5);
        let (labels, all) = d.stacked();
        assert_eq!(labels.len(), all.nrows());
        assert_eq!(all.nrows(), d.total_n());
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(toy(9, &[0, 3]), toy(9, &[0, 3]));
        assert_ne!(toy(9, &[0, 3]), toy(10, &[0, 3]));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = toy(4, &[0, 2, 5]);
        let mut data = Vec::new();
        let mut specs = Vec::new();
        d.write_csv(&mut data).unwrap();
        d.write_specs(&mut specs).unwrap();
        let text = String::from_utf8(data.clone()).unwrap();
        assert!(text.starts_with("regime,X1,X2,X3,X4,X5,X6\n0,"));
        let back = MultiRegimeDataset::<f64>::read(&data[..], &specs[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let specs = SpecsFile {
            p: 2,
            interventions: vec![SpecRecord { node: 1, kind: InterventionKind::Shift, shift: 5.0 }],
        };
        let ok = "regime,X1,X2\n0,1,2\n0,3,4\n1,5,6\n";
        assert!(MultiRegimeDataset::<f64>::read_csv(ok.as_bytes(), &specs).is_ok());
        for bad in [
            "reg,X1,X2\n0,1,2\n",
            "regime,X1,Y\n0,1,2\n",
            "regime,X1,X2\n1,5,6\n",
            "regime,X1,X2\n0,1,2\n2,1,2\n",
            "regime,X1,X2\n0,1,x\n1,1,2\n",
            "regime,X1,X2\n0,1,2\n",
        ] {
            assert!(
                MultiRegimeDataset::<f64>::read_csv(bad.as_bytes(), &specs).is_err(),
                "{bad:?} accepted"
            );
        }
    }
}
