//! Randomised property checks shared by the property tests and the
//! acceptance run. Each returns a description of the first counterexample.

use mmimo_iot::channel::{
    complex_gaussian_vector, correlation_spectrum, draw_paths, realize_channel, realize_iid, ArrayConfig, CVector, ClusterModel,
};
use mmimo_iot::estimation::{fdd_train_feedback, ls_estimate, ChannelEstimate, LinkBudget, LsSynthesis, TrainingConfig};
use mmimo_iot::harness::{self, ExperimentConfig};
use mmimo_iot::mc::substream;
use mmimo_iot::precoding::{fdd_precoder, mrt, sv_precoder, zf_pair};
use mmimo_iot::stats::Moments;
use mmimo_iot::urllc::{rate_for, FrameConfig, SubcarrierSpacing};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn cluster() -> impl Strategy<Value = (usize, usize, f64, u64)> {
    (1usize..=24, 1usize..=12, 0.0f64..=20.0, any::<u64>())
}

pub fn unit_norm_precoders(cases: u32) -> Result<(), String> {
    check(cases, (cluster(), 1usize..=4, -5.0f64..=15.0), |((m, np, decay, seed), t, snr_db)| {
        let array = ArrayConfig::ula(m).unwrap();
        let mut rng = substream(seed, 0, 0);
        let paths = draw_paths(&ClusterModel::new(np, decay).unwrap(), &array, &mut rng).unwrap();
        let spec = correlation_spectrum(&paths);
        let h = realize_channel(&paths, &mut rng);
        let budget = LinkBudget::from_snr_db(snr_db).unwrap();
        let est = ls_estimate(&h, &TrainingConfig::uplink(t).unwrap(), &budget, LsSynthesis::NoiseShortcut, &mut rng).unwrap();
        let mut ws = vec![mrt(&est).unwrap(), mrt(&ChannelEstimate::perfect(&h)).unwrap()];
        if let Ok(w) = sv_precoder(&est, &spec) {
            ws.push(w);
        }
        let ns = 1 + (seed as usize) % spec.rank();
        if let Ok(w) = fdd_precoder(&fdd_train_feedback(&h, &spec, ns, &budget, &mut rng).unwrap(), &spec) {
            ws.push(w);
        }
        if m >= 2 {
            let other = ChannelEstimate {
                h_hat: complex_gaussian_vector(&mut rng, m, 1.0),
                per_coeff_noise_var: 0.0,
            };
            if let Ok((a, b)) = zf_pair(&est, &other) {
                ws.extend([a, b]);
            }
        }
        for w in &ws {
            prop_assert!((w.w.norm() - 1.0).abs() < 1e-9, "{:?} precoder has norm {}", w.scheme, w.w.norm());
        }
        Ok(())
    })
}

pub fn projection_idempotence(cases: u32) -> Result<(), String> {
    check(cases, cluster(), |(m, np, decay, seed)| {
        let array = ArrayConfig::ula(m).unwrap();
        let mut rng = substream(seed, 1, 0);
        let paths = draw_paths(&ClusterModel::new(np, decay).unwrap(), &array, &mut rng).unwrap();
        let spec = correlation_spectrum(&paths);
        let p = spec.projector();
        let scale = p.norm().max(1.0);
        prop_assert!((&p * &p - &p).norm() < 1e-9 * scale, "P² ≠ P");
        prop_assert!((p.adjoint() - &p).norm() < 1e-9 * scale, "P not Hermitian");
        prop_assert!(((p.trace().re) - spec.rank() as f64).abs() < 1e-8, "trace(P) ≠ rank");
        let x: CVector = complex_gaussian_vector(&mut rng, m, 1.0);
        let once = spec.project(&x);
        prop_assert!((spec.project(&once) - &once).norm() < 1e-9 * x.norm(), "projection not idempotent");
        Ok(())
    })
}

pub fn zf_exact_nulling(cases: u32) -> Result<(), String> {
    check(cases, (2usize..=32, any::<u64>()), |(m, seed)| {
        let mut rng = substream(seed, 2, 0);
        let e1 = ChannelEstimate {
            h_hat: complex_gaussian_vector(&mut rng, m, 1.0),
            per_coeff_noise_var: 0.1,
        };
        let e2 = ChannelEstimate {
            h_hat: complex_gaussian_vector(&mut rng, m, 1.0),
            per_coeff_noise_var: 0.1,
        };
        let Ok((w1, w2)) = zf_pair(&e1, &e2) else {
            return Ok(());
        };
        let leak12 = e2.h_hat.dot(&w1.w).norm() / e2.h_hat.norm();
        let leak21 = e1.h_hat.dot(&w2.w).norm() / e1.h_hat.norm();
        prop_assert!(leak12 < 1e-9 && leak21 < 1e-9, "cross-channel leakage {leak12:e}, {leak21:e}");
        Ok(())
    })
}

pub fn gamma_th_exact(cases: u32) -> Result<(), String> {
    check(cases, (2usize..=400, 1u32..=4000, 0usize..400), |(n, b, o)| {
        let frame = FrameConfig::new(n, b, SubcarrierSpacing::Khz60, 1).unwrap();
        let spec = rate_for(&frame, o);
        if o >= n {
            prop_assert!(spec.is_err());
            return Ok(());
        }
        let spec = spec.unwrap();
        let rate = f64::from(b) / (n - o) as f64;
        prop_assert_eq!(spec.data_symbols, n - o);
        prop_assert_eq!(spec.rate, rate);
        prop_assert_eq!(spec.gamma_th, rate.exp2() - 1.0);
        if spec.gamma_th.is_finite() {
            prop_assert!(((1.0 + spec.gamma_th).log2() - rate).abs() <= 1e-12 * rate.max(1.0));
        }
        Ok(())
    })
}

pub fn mean_channel_energy(cases: u32) -> Result<(), String> {
    check(cases, cluster(), |(m, np, decay, seed)| {
        let array = ArrayConfig::ula(m).unwrap();
        let model = ClusterModel::new(np, decay).unwrap();
        let q: f64 = model.path_powers(m as f64).iter().sum();
        prop_assert!((q - m as f64).abs() < 1e-9 * m as f64, "path powers sum to {q}");
        let mut energy = Moments::default();
        for i in 0..2000 {
            let mut rng = substream(seed, 3, i);
            let paths = draw_paths(&model, &array, &mut rng).unwrap();
            energy.push(realize_channel(&paths, &mut rng).norm_sqr());
        }
        let z = (energy.mean() - m as f64) / energy.std_err();
        prop_assert!(z.abs() < 5.0, "E‖h‖² = {} for M = {m} ({z:.1} standard errors)", energy.mean());
        Ok(())
    })
}

/// RSD of `‖h‖²` under i.i.d. fading for M = 1, 2, 4, ..., 64 must decrease.
pub fn hardening_rsd_monotone(cases: u32) -> Result<(), String> {
    check(cases, any::<u64>(), |seed| {
        let mut last = f64::INFINITY;
        for m in [1usize, 2, 4, 8, 16, 32, 64] {
            let array = ArrayConfig::ula(m).unwrap();
            let mut e = Moments::default();
            let mut rng = substream(seed, 4, m as u64);
            for _ in 0..4000 {
                e.push(realize_iid(&array, &mut rng).norm_sqr());
            }
            prop_assert!(e.rsd() < last, "RSD {} at M = {m} is not below {last}", e.rsd());
            last = e.rsd();
        }
        Ok(())
    })
}

fn small_configs() -> Vec<ExperimentConfig> {
    let docs = [
        "experiment = \"outage-training\"\ntrials = 600\nnum_antennas = 16\n[sweep]\ntraining = [1, 2, 3]\n",
        "experiment = \"latency-reliability\"\ntrials = 300\nnum_antennas = 16\n[channel]\nnum_paths = 6\n[frame]\npayload_bits = 60\n[sweep]\nschemes = [\"tdd-sv\", \"fdd\"]\nlengths = [12, 16]\n",
        "experiment = \"tdm-vs-sdm\"\ntrials = 300\nnum_antennas = 16\n[sweep]\ntraining = [1]\nlengths = [16, 24]\n",
        "experiment = \"ra-crowded\"\nnum_antennas = 16\n[population]\ntotal_devices = 500\n[ra]\nblocks = 200\nwarmup_blocks = 10\nbatches = 10\n",
        "experiment = \"coded-ra\"\ntrials = 500\n[population]\ntotal_devices = 200\n[coded]\nslots = [2, 3]\nactive_devices = 6.0\n",
    ];
    docs.iter().map(|d| ExperimentConfig::from_toml_str(d).unwrap()).collect()
}

/// The CSV of a run must not depend on the worker count.
pub fn worker_count_determinism(cases: u32) -> Result<(), String> {
    let configs = small_configs();
    check(cases, (0..configs.len(), 0u64..1000, 2usize..=4), |(i, seed, workers)| {
        let mut cfg = configs[i].clone();
        cfg.seed = seed;
        let mut one = cfg.clone();
        one.workers = mmimo_iot::mc::Workers::Fixed(1);
        let mut many = cfg;
        many.workers = mmimo_iot::mc::Workers::Fixed(workers);
        let a = harness::run(&one).map_err(|e| TestCaseError::fail(e.to_string()))?.to_csv();
        let b = harness::run(&many).map_err(|e| TestCaseError::fail(e.to_string()))?.to_csv();
        prop_assert!(a == b, "{} differs between 1 and {workers} workers", one.experiment.name());
        Ok(())
    })
}

pub type Property = (&'static str, fn(u32) -> Result<(), String>, u32);

/// Every property with the case count used by the acceptance run.
pub fn all() -> Vec<Property> {
    vec![
        ("unit-norm precoders", unit_norm_precoders, 256),
        ("projection idempotence", projection_idempotence, 256),
        ("ZF exact nulling on estimates", zf_exact_nulling, 512),
        ("gamma_th = 2^R - 1 exactness", gamma_th_exact, 2048),
        ("E|h|^2 = M", mean_channel_energy, 24),
        ("hardening RSD monotone in M", hardening_rsd_monotone, 8),
        ("determinism across worker counts", worker_count_determinism, 10),
    ]
}
