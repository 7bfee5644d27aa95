//! Experiment dispatch.

use rand::seq::index;
use rand_distr::{Binomial, Distribution};

use super::config::{ExperimentConfig, ExperimentKind};
use super::table::{Cell, Column, ResultTable};
use crate::error::{Error, Result};
use crate::estimation::LinkBudget;
use crate::mc::{run_trials, stream_id, substream, Accumulator, TrialPlan};
use crate::mmtc::{self, RaPopulation, RaSimConfig, SucreSetup};
use crate::stats::{linear_to_db, wilson, Z95};
use crate::urllc::{self, LinkExperiment, LinkScheme, OutageResult};

/// Validates `config` and runs the experiment it describes.
///
/// The rows depend only on the config (worker count excluded), so reruns are
/// byte-identical.
pub fn run(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let mut table = match config.experiment {
        ExperimentKind::SnrTraining => snr_training(config)?,
        ExperimentKind::OutageTraining => outage_training(config)?,
        ExperimentKind::FddNsSweep => fdd_ns_sweep(config)?,
        ExperimentKind::LatencyReliability => latency_reliability(config)?,
        ExperimentKind::TdmVsSdm => tdm_vs_sdm(config)?,
        ExperimentKind::RaCrowded => ra_crowded(config)?,
        ExperimentKind::CodedRa => coded_ra(config)?,
    };
    let extra = std::mem::take(&mut table.metadata);
    table.metadata = [
        ("tool", env!("CARGO_PKG_NAME").to_string()),
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("experiment", config.experiment.name().to_string()),
        ("config_hash", config.hash()),
        ("seed", config.seed.to_string()),
        ("trials", config.trials.to_string()),
        ("config", config.canonical_json()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .chain(extra)
    .collect();
    Ok(table)
}

fn cols(spec: &[(&str, &str)]) -> Vec<Column> {
    spec.iter().map(|(n, u)| Column::new(n, u)).collect()
}

fn link_experiment(cfg: &ExperimentConfig, num_paths: usize) -> Result<LinkExperiment> {
    let mut exp = LinkExperiment::new(cfg.channel_config(num_paths)?, cfg.budget()?, cfg.trials, cfg.seed)
        .with_workers(cfg.workers)
        .with_max_trials(cfg.max_trials.unwrap_or(cfg.trials));
    exp.synthesis = cfg.link.synthesis;
    Ok(exp)
}

fn outage_cells(o: &OutageResult) -> [Cell; 3] {
    [o.p_outage.into(), o.ci95.0.into(), o.ci95.1.into()]
}

fn snr_training(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let exp = link_experiment(cfg, cfg.channel.num_paths)?;
    let frame = cfg.frame_config(cfg.frame.total_symbols)?;
    let points = urllc::sweep_training(&exp, &cfg.sweep.schemes, &frame, &cfg.sweep.training)?;
    let mut t = ResultTable::new(cols(&[
        ("scheme", ""),
        ("t", "symbols"),
        ("mean_snr_db", "dB"),
        ("rsd_snr", ""),
        ("p_outage", ""),
        ("ci_lo", ""),
        ("ci_hi", ""),
    ]));
    for p in &points {
        let mut row = vec![p.scheme.name().into(), p.param.into(), linear_to_db(p.mean_gamma).into(), p.rsd_gamma.into()];
        row.extend(outage_cells(&p.outage));
        t.push(row);
    }
    Ok(t)
}

fn outage_training(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let exp = link_experiment(cfg, cfg.channel.num_paths)?;
    let frame = cfg.frame_config(cfg.frame.total_symbols)?;
    let points = urllc::sweep_training(&exp, &cfg.sweep.schemes, &frame, &cfg.sweep.training)?;
    let mut t = ResultTable::new(cols(&[("t", "symbols"), ("scheme", ""), ("p_outage", ""), ("ci_lo", ""), ("ci_hi", "")]));
    for p in &points {
        let mut row = vec![p.param.into(), p.scheme.name().into()];
        row.extend(outage_cells(&p.outage));
        t.push(row);
    }
    Ok(t)
}

fn fdd_ns_sweep(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let frame = cfg.frame_config(cfg.frame.total_symbols)?;
    let mut t = ResultTable::new(cols(&[
        ("num_paths", ""),
        ("n_s", "vectors"),
        ("overhead", "symbols"),
        ("p_outage", ""),
        ("ci_lo", ""),
        ("ci_hi", ""),
        ("optimal", ""),
    ]));
    for &np in &cfg.sweep.num_paths {
        let exp = link_experiment(cfg, np)?;
        let params: Vec<usize> = (1..=urllc::max_training(LinkScheme::Fdd, &frame, &exp.channel)).collect();
        let points = urllc::sweep_training(&exp, &[LinkScheme::Fdd], &frame, &params)?;
        // Ties go to the smaller N_s.
        let best = points
            .iter()
            .min_by_key(|p| (p.outage.outages, p.param))
            .map(|p| p.param)
            .expect("at least one N_s");
        for p in &points {
            let mut row = vec![np.into(), p.param.into(), LinkScheme::Fdd.overhead(p.param, 0).into()];
            row.extend(outage_cells(&p.outage));
            row.push(usize::from(p.param == best).into());
            t.push(row);
        }
    }
    Ok(t)
}

fn latency_reliability(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let exp = link_experiment(cfg, cfg.channel.num_paths)?;
    let frame = cfg.frame_config(cfg.frame.total_symbols)?;
    let points = urllc::latency_reliability_curve(&exp, &cfg.sweep.schemes, &frame, &cfg.sweep.lengths)?;
    let mut t = ResultTable::new(cols(&[
        ("scheme", ""),
        ("N", "symbols"),
        ("latency_ms", "ms"),
        ("best_param", "symbols"),
        ("reliability", ""),
        ("p_outage", ""),
        ("ci_lo", ""),
        ("ci_hi", ""),
    ]));
    for p in &points {
        let mut row = vec![
            p.scheme.name().into(),
            p.total_symbols.into(),
            p.latency_ms.into(),
            p.best_param.into(),
            p.reliability.into(),
        ];
        row.extend(outage_cells(&p.outage));
        t.push(row);
    }
    Ok(t)
}

fn tdm_vs_sdm(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let exp = link_experiment(cfg, cfg.channel.num_paths)?;
    let frame = cfg.frame_config(cfg.frame.total_symbols)?;
    let rows = urllc::tdm_vs_sdm(&exp, &frame, cfg.sweep.training[0], &cfg.sweep.lengths)?;
    let mut t = ResultTable::new(cols(&[
        ("scheme", ""),
        ("N", "symbols"),
        ("device", ""),
        ("latency_symbols", "symbols"),
        ("p_outage", ""),
        ("ci_lo", ""),
        ("ci_hi", ""),
        ("avg_device_latency", "symbols"),
    ]));
    for r in &rows {
        let mut row = vec![r.scheme.name().into(), r.total_symbols.into(), r.device.into(), r.latency_symbols.into()];
        row.extend(outage_cells(&r.outage));
        row.push(r.avg_device_latency.into());
        t.push(row);
    }
    Ok(t)
}

fn population(cfg: &ExperimentConfig, activation_prob: f64) -> Result<RaPopulation> {
    let p = &cfg.population;
    let mut rng = substream(cfg.seed, stream_id("population"), 0);
    RaPopulation::annulus(p.total_devices, activation_prob, &p.annulus(), p.edge_snr_db, &mut rng)
}

fn ra_crowded(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let pool = cfg.pool()?;
    let r = &cfg.ra;
    let dl = LinkBudget::from_snr_db(r.dl_snr_db).map_err(|_| Error::invalid("ra.dl_snr_db", "must be finite"))?;
    let setup = SucreSetup {
        num_antennas: cfg.num_antennas,
        budget: dl,
        mode: r.mode,
    };
    let sim = RaSimConfig {
        max_attempts: r.max_attempts,
        blocks: r.blocks,
        warmup_blocks: r.warmup_blocks,
        batches: r.batches,
        soft_eta: r.soft_eta,
        setup,
    };
    let mut t = ResultTable::new(cols(&[
        ("protocol", ""),
        ("K0", "devices"),
        ("Pa", ""),
        ("Pp", "pilots"),
        ("M", "antennas"),
        ("avg_attempts", "attempts"),
        ("failure_prob", ""),
        ("resolved_frac", ""),
        ("seed", ""),
        ("load", ""),
        ("avg_attempts_se", "attempts"),
        ("failure_prob_se", ""),
        ("dropped_frac", ""),
        ("fresh_resolved_frac", ""),
    ]));
    for &load in &cfg.population.loads {
        let pa = cfg.population.activation_prob(load);
        let pop = population(cfg, pa)?;
        for &proto in &r.protocols {
            let m = mmtc::simulate_ra(&pop, &pool, proto, &sim, cfg.seed)?;
            let fresh = mmtc::one_shot_resolution(&pop, &pool, &setup, proto.decision(r.soft_eta), r.blocks, cfg.seed)?;
            t.push(vec![
                proto.name().into(),
                pop.total_devices().into(),
                pa.into(),
                pool.size().into(),
                cfg.num_antennas.into(),
                m.avg_attempts.into(),
                m.failure_prob.into(),
                m.resolved_collision_frac.into(),
                cfg.seed.into(),
                load.into(),
                m.avg_attempts_se.into(),
                m.failure_prob_se.into(),
                m.dropped_frac.into(),
                fresh.resolved_frac.into(),
            ]);
        }
    }
    Ok(t)
}

#[derive(Default)]
struct CodedAcc {
    active: u64,
    decoded: u64,
    frames: u64,
    error: Option<Error>,
}

impl Accumulator for CodedAcc {
    fn merge(&mut self, o: Self) {
        self.active += o.active;
        self.decoded += o.decoded;
        self.frames += o.frames;
        if self.error.is_none() {
            self.error = o.error;
        }
    }
}

fn coded_ra(cfg: &ExperimentConfig) -> Result<ResultTable> {
    let pool = cfg.pool()?;
    let budget = cfg.budget()?;
    let k0 = cfg.population.total_devices;
    let pop = population(cfg, 0.0)?;
    let activity = Binomial::new(k0 as u64, cfg.coded.active_devices / k0 as f64)
        .map_err(|e| Error::invalid("coded.active_devices", e.to_string()))?;
    let mut t = ResultTable::new(cols(&[
        ("num_slots", "slots"),
        ("decode_model", ""),
        ("frames", ""),
        ("mean_active", "devices"),
        ("decoded_frac", ""),
        ("ci_lo", ""),
        ("ci_hi", ""),
        ("throughput", "devices/slot"),
    ]));
    let decode_name = match cfg.coded.decode_model {
        super::config::CodedDecode::GenieSingleton => "genie-singleton",
        super::config::CodedDecode::SinrThreshold => "sinr-threshold",
    };
    for &slots in &cfg.coded.slots {
        let coded = cfg.coded.config(slots);
        let plan = TrialPlan::new(cfg.seed, stream_id(&format!("coded-ra/{slots}")), cfg.trials);
        let acc = run_trials(plan, cfg.workers, CodedAcc::default, |acc, rng, _| {
            let n = activity.sample(rng) as usize;
            let active: Vec<_> = index::sample(rng, k0, n).into_iter().map(|i| pop.devices()[i]).collect();
            match mmtc::coded_ra_frame(&active, &pool, &coded, cfg.num_antennas, &budget, rng) {
                Ok(f) => {
                    acc.active += n as u64;
                    acc.decoded += f.num_decoded() as u64;
                }
                Err(e) => acc.error = acc.error.take().or(Some(e)),
            }
            acc.frames += 1;
        })?;
        if let Some(e) = acc.error {
            return Err(e);
        }
        let (lo, hi) = wilson(acc.decoded, acc.active, Z95);
        let frac = if acc.active == 0 { 0.0 } else { acc.decoded as f64 / acc.active as f64 };
        t.push(vec![
            slots.into(),
            decode_name.into(),
            acc.frames.into(),
            (acc.active as f64 / acc.frames as f64).into(),
            frac.into(),
            lo.into(),
            hi.into(),
            (acc.decoded as f64 / (acc.frames * slots as u64) as f64).into(),
        ]);
    }
    Ok(t)
}
