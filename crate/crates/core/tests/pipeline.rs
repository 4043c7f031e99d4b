use causal_risk::descend::{estimate_all, DescendConfig};
use causal_risk::harness::{run_setting, sample_setting, RunOptions, SettingSpace};
use causal_risk::learners::{Learner, LearnerConfig};
use causal_risk::risk::evaluate_learner;
use causal_risk::{Dataset32, Dataset64, InterventionKind, Link, NoiseKind};

fn small_space() -> SettingSpace {
    SettingSpace {
        p: vec![8],
        ens: vec![2.5],
        link: vec![Link::Linear],
        noise: vec![NoiseKind::Gaussian],
        p_iota: vec![0.5],
        kind: vec![InterventionKind::DoAndShift],
        n_int: vec![100],
        ..SettingSpace::default()
    }
}

fn learners<T: causal_risk::Scalar>() -> Vec<Box<dyn Learner<T>>> {
    [LearnerConfig::greedy_bic(), LearnerConfig::Empty, LearnerConfig::Acor { ens_oracle: Some(2.5) }]
        .iter()
        .map(|c| c.build::<T>(None, None).unwrap())
        .collect()
}

#[test]
fn files_round_trip_to_identical_risks() {
    let setting = sample_setting(&small_space(), 3, 0, 1000).unwrap();
    let sem = setting.sem::<f64>().unwrap();
    let data = setting.dataset(&sem, 0).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let (csv, specs) = (dir.path().join("data.csv"), dir.path().join("specs.json"));
    data.write_files(&csv, &specs).unwrap();
    let back = Dataset64::read_files(&csv, &specs).unwrap();
    assert_eq!(back, data);

    let cfg = DescendConfig::default();
    let est = estimate_all(&data, &cfg).unwrap();
    assert_eq!(estimate_all(&back, &cfg).unwrap(), est);
    for l in learners::<f64>() {
        let a = evaluate_learner(&data, l.as_ref(), &est, Some(&setting.dag)).unwrap();
        let b = evaluate_learner(&back, l.as_ref(), &est, Some(&setting.dag)).unwrap();
        assert_eq!(a, b, "{}", l.id());
    }
}

#[test]
fn single_precision_pipeline_runs() {
    let setting = sample_setting(&small_space(), 4, 0, 1000).unwrap();
    let opts = RunOptions::default();
    let out32 = run_setting::<f32>(&setting, &learners(), &opts).unwrap();
    let out64 = run_setting::<f64>(&setting, &learners(), &opts).unwrap();
    assert_eq!(out32.learners.len(), 3);
    for (a, b) in out32.learners.iter().zip(&out64.learners) {
        assert_eq!(a.learner, b.learner);
        let q = a.result.as_ref().unwrap();
        for v in [q.oracle_hat, q.naive, q.cv, q.weighted] {
            assert!((0.0..=1.0).contains(&v), "{}: {v}", a.learner);
        }
    }
    // The most correlated pair does not change with precision.
    let empty32 = &out32.learners[1].result.as_ref().unwrap();
    let empty64 = &out64.learners[1].result.as_ref().unwrap();
    assert!((empty32.oracle_hat - empty64.oracle_hat).abs() < 1e-6);

    let data: Dataset32 = setting.dataset(&setting.sem().unwrap(), 0).unwrap();
    assert_eq!(data.iota(), setting.iota.iter().copied().collect::<Vec<_>>());
}
