use thz_hybrid::harness::{run_experiment, ExperimentSpec, Scheme, SweepAxis};
use thz_hybrid::SystemConfig;

fn means(spec: &ExperimentSpec, scheme: Scheme) -> Vec<f64> {
    let result = run_experiment(spec).unwrap();
    result.summary.iter().filter(|s| s.scheme == scheme).map(|s| s.mean_rate.unwrap()).collect()
}

#[test]
fn fully_digital_rate_rises_with_snr() {
    let spec = ExperimentSpec::new(SystemConfig::desk(), SweepAxis::SnrDb, vec![0.0, 10.0, 20.0], vec![Scheme::FullyDigital], 3);
    let result = run_experiment(&spec).unwrap();
    for seed in spec.seeds() {
        let rates: Vec<f64> = result.rows.iter().filter(|r| r.seed == seed).map(|r| r.avg_rate.unwrap()).collect();
        assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");
    }
}

#[test]
fn bits_sweep_saturates_from_three_bits() {
    let spec = ExperimentSpec::new(SystemConfig::desk(), SweepAxis::Bits, vec![1.0, 2.0, 3.0, 4.0], vec![Scheme::AlterOptFC], 10);
    let result = run_experiment(&spec).unwrap();
    let summary: Vec<_> = result.summary.iter().filter(|s| s.scheme == Scheme::AlterOptFC).collect();
    let noise = summary.iter().filter_map(|s| s.std_err).fold(0.0, f64::max);
    let m: Vec<f64> = summary.iter().map(|s| s.mean_rate.unwrap()).collect();
    assert!(m.windows(2).all(|w| w[1] >= w[0] - noise), "{m:?} (se {noise})");
    assert!((m[3] - m[2]).abs() <= 0.1 * m[2], "{m:?}");
}

#[test]
fn identical_specs_give_identical_files() {
    let spec = ExperimentSpec::new(
        SystemConfig::desk(),
        SweepAxis::SnrDb,
        vec![0.0, 10.0],
        vec![Scheme::AlterOptFC, Scheme::DSWB, Scheme::FullyDigital],
        2,
    );
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        thz_hybrid::harness::write_experiment(dir.path(), &spec, &run_experiment(&spec).unwrap()).unwrap();
    }
    for name in ["results.csv", "summary.csv"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    assert_eq!(means(&spec, Scheme::FullyDigital).len(), 2);
}
