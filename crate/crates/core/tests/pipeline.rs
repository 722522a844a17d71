use std::path::PathBuf;

use levelgas::config::{CouplingConfig, ModelConfig, RunConfig};
use levelgas::ensemble::run_ensemble;
use levelgas::integrator::simulate;
use levelgas::noise::{stream_rng, NoiseKind, NoiseProcess};
use levelgas::output::{read_trajectory_csv, write_ensemble_csv, write_trajectory_csv};

fn short(t1: f64) -> RunConfig {
    let mut cfg = RunConfig::ising_default();
    cfg.schedule.t1 = t1;
    cfg.integrator.stride = 50;
    cfg
}

fn gaussian_j(mut cfg: RunConfig) -> RunConfig {
    if let ModelConfig::TwoQubitIsing { j, .. } = &mut cfg.model {
        *j = CouplingConfig::Gaussian { mean: 0.0, std: 1.0 };
    }
    cfg
}

fn csv_bytes(cfg: &RunConfig) -> Vec<u8> {
    let traj = simulate(&cfg.simulation().unwrap()).unwrap();
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, &mut buf).unwrap();
    buf
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn split_seeds_give_uncorrelated_noise() {
    let mut cfg = RunConfig::ising_default();
    cfg.noise.kind = NoiseKind::Wiener;
    cfg.noise.sigma = 0.05;
    let draws = |i: u64| -> Vec<f64> {
        let mut noise = cfg.resolve(42, i).unwrap().noise;
        (0..1000).map(|_| noise.step(1e-4).unwrap().d_dh.matrix()[(0, 0)].re).collect()
    };
    let streams: Vec<Vec<f64>> = (0..4).map(draws).collect();
    let bound = 4.0 / 1000f64.sqrt();
    for a in 0..4 {
        for b in (a + 1)..4 {
            let r = correlation(&streams[a], &streams[b]);
            assert!(r.abs() < bound, "realizations {a} and {b}: correlation {r}");
        }
    }
    // the coupling stream of a realization is not its noise stream either
    let mut j_stream = NoiseProcess::wiener(4, 0.05, stream_rng(42, 0)).unwrap();
    let js: Vec<f64> = (0..1000).map(|_| j_stream.step(1e-4).unwrap().d_dh.matrix()[(0, 0)].re).collect();
    assert!(correlation(&js, &streams[0]).abs() < bound);
}

#[test]
fn single_realization_ensemble_is_the_trajectory() {
    let cfg = gaussian_j(short(12.0));
    let stats = run_ensemble(&cfg, 1, 9).unwrap();
    let traj = simulate(&cfg.resolve(9, 0).unwrap()).unwrap();
    assert_eq!(stats.completed, 1);
    for (k, s) in traj.samples.iter().enumerate() {
        assert_eq!(stats.mean_occupations[k], s.occupations());
        assert!(stats.std_occupations[k].iter().all(|&v| v == 0.0));
        assert_eq!(stats.mean_purity[k], s.purity);
        assert_eq!(stats.std_purity[k], 0.0);
    }
}

fn check_conservation(r: usize, t1: f64) {
    let stats = run_ensemble(&gaussian_j(short(t1)), r, 2024).unwrap();
    assert_eq!(stats.completed + stats.failures.len(), r);
    assert_eq!(stats.purity_drift.len(), stats.completed);
    for f in &stats.failures {
        assert!(f.coupling_j.is_some() && !f.message.is_empty());
    }
    for (k, occ) in stats.mean_occupations.iter().enumerate() {
        let sum: f64 = occ.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-9, "t = {}: sum {sum}", stats.times[k]);
        assert!(stats.std_occupations[k].iter().all(|&s| s >= 0.0));
        assert!(stats.std_purity[k] >= 0.0);
    }
}

#[test]
fn ensemble_occupations_sum_to_one() {
    check_conservation(1, 15.0);
    check_conservation(16, 15.0);
    check_conservation(256, 10.6);
}

#[test]
fn ensemble_bytes_do_not_depend_on_thread_count() {
    let mut cfg = gaussian_j(short(10.6));
    cfg.noise.kind = NoiseKind::Wiener;
    cfg.noise.sigma = 0.05;
    let bytes = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let stats = pool.install(|| run_ensemble(&cfg, 40, 5)).unwrap();
        let mut buf = Vec::new();
        write_ensemble_csv(&stats, &mut buf).unwrap();
        buf
    };
    assert_eq!(bytes(1), bytes(4));
}

#[test]
fn reruns_are_byte_identical() {
    let mut cfg = short(11.0);
    cfg.noise.kind = NoiseKind::Wiener;
    cfg.noise.sigma = 0.05;
    cfg.seed = 77;
    assert_eq!(csv_bytes(&cfg), csv_bytes(&cfg));
    let mut other = cfg.clone();
    other.seed = 78;
    assert_ne!(csv_bytes(&cfg), csv_bytes(&other));
}

#[test]
fn metadata_reproduces_the_run() {
    let mut cfg = gaussian_j(short(11.0));
    cfg.noise.kind = NoiseKind::Wiener;
    cfg.noise.sigma = 0.05;
    let sim = cfg.resolve(31, 3).unwrap();
    let traj = simulate(&sim).unwrap();
    let meta = &traj.metadata;
    assert_eq!((meta.seed, meta.realization), (31, 3));
    let again = RunConfig::from_metadata(meta).unwrap();
    let rerun = simulate(&again.resolve(meta.seed, meta.realization).unwrap()).unwrap();
    assert_eq!(rerun.metadata, traj.metadata);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    write_trajectory_csv(&traj, &mut a).unwrap();
    write_trajectory_csv(&rerun, &mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn csv_matches_golden_file() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/ising_short.csv");
    let mut cfg = short(10.6);
    cfg.integrator.stride = 100;
    let bytes = csv_bytes(&cfg);
    if std::env::var_os("LEVELGAS_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &bytes).unwrap();
    }
    let golden = std::fs::read(&path).expect("golden file missing; rerun with LEVELGAS_BLESS=1");
    assert_eq!(String::from_utf8(bytes).unwrap(), String::from_utf8(golden.clone()).unwrap());
    let table = read_trajectory_csv(golden.as_slice()).unwrap();
    assert_eq!((table.n, table.rows.len()), (4, 6));
}

#[test]
fn ou_reaches_its_stationary_variance() {
    let (gamma, sigma, dl) = (2.0, 1.0, 1e-3);
    let mut ou = NoiseProcess::ornstein_uhlenbeck(4, gamma, sigma, stream_rng(3, 0)).unwrap();
    for _ in 0..5000 {
        ou.step(dl).unwrap();
    }
    let mut sum_sq = 0.0;
    let mut count = 0.0;
    for _ in 0..400_000 {
        ou.step(dl).unwrap();
        for k in 0..4 {
            sum_sq += ou.current().matrix()[(k, k)].re.powi(2);
            count += 1.0;
        }
    }
    // exact stationary variance of the Euler-Maruyama recursion
    let expected = sigma * sigma * dl / (1.0 - (1.0 - gamma * dl).powi(2));
    let var = sum_sq / count;
    assert!((var / expected - 1.0).abs() < 0.08, "variance {var}, expected {expected}");
}
