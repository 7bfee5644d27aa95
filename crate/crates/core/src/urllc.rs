//! Outage, latency and reliability of short downlink packets.
//!
//! A packet of `b` bits must be delivered within a frame of `N` symbols. Any
//! symbols spent on channel training (and the TDD guard period) are
//! unavailable for data, so the rate on the remaining `N_d` data symbols is
//! `R = b / N_d` bits per complex symbol and the packet is lost whenever the
//! post-processing SNR falls below `γ_th = 2^R − 1`.
//!
//! Every Monte-Carlo trial draws one propagation environment and evaluates all
//! requested (scheme, training length) points on it with common random
//! numbers, so curves over training length or frame length are smooth and
//! comparisons between schemes are paired.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{
    correlation_spectrum, draw_paths, realize_channel, realize_iid, ArrayConfig, CMatrix, ChannelRealization, ClusterModel,
    CorrelationSpectrum, PathSet,
};
use crate::error::{Error, Result};
use crate::estimation::{fdd_train_feedback, ls_estimate, ChannelEstimate, LinkBudget, LsSynthesis, TrainingConfig};
use crate::mc::{run_trials, stream_id, substream, Accumulator, SimRng, TrialPlan, Workers};
use crate::precoding::{fdd_precoder, mrt, sinr_two_user, snr_dl, sv_precoder, zf_pair};
use crate::stats::{wilson, Moments, Z95};

/// OFDM subcarrier spacing. A 14-symbol slot lasts `1 ms · 15 kHz / scs`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum SubcarrierSpacing {
    Khz15,
    Khz30,
    Khz60,
    Khz120,
}

impl SubcarrierSpacing {
    pub fn khz(self) -> u32 {
        match self {
            SubcarrierSpacing::Khz15 => 15,
            SubcarrierSpacing::Khz30 => 30,
            SubcarrierSpacing::Khz60 => 60,
            SubcarrierSpacing::Khz120 => 120,
        }
    }

    pub fn slots_per_ms(self) -> f64 {
        f64::from(self.khz()) / 15.0
    }
}

impl TryFrom<u32> for SubcarrierSpacing {
    type Error = String;
    fn try_from(khz: u32) -> std::result::Result<Self, String> {
        match khz {
            15 => Ok(SubcarrierSpacing::Khz15),
            30 => Ok(SubcarrierSpacing::Khz30),
            60 => Ok(SubcarrierSpacing::Khz60),
            120 => Ok(SubcarrierSpacing::Khz120),
            other => Err(format!("unsupported subcarrier spacing {other} kHz (use 15, 30, 60 or 120)")),
        }
    }
}

impl From<SubcarrierSpacing> for u32 {
    fn from(s: SubcarrierSpacing) -> u32 {
        s.khz()
    }
}

pub const SYMBOLS_PER_SLOT: usize = 14;

/// Latency budget and payload of one downlink packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    total_symbols: usize,
    payload_bits: u32,
    scs: SubcarrierSpacing,
    guard_symbols: usize,
}

impl FrameConfig {
    pub fn new(total_symbols: usize, payload_bits: u32, scs: SubcarrierSpacing, guard_symbols: usize) -> Result<Self> {
        if total_symbols < 1 {
            return Err(Error::invalid("frame.total_symbols", "must be at least 1"));
        }
        if payload_bits < 1 {
            return Err(Error::invalid("frame.payload_bits", "must be at least 1"));
        }
        Ok(FrameConfig {
            total_symbols,
            payload_bits,
            scs,
            guard_symbols,
        })
    }

    pub fn total_symbols(&self) -> usize {
        self.total_symbols
    }

    pub fn payload_bits(&self) -> u32 {
        self.payload_bits
    }

    pub fn scs(&self) -> SubcarrierSpacing {
        self.scs
    }

    pub fn guard_symbols(&self) -> usize {
        self.guard_symbols
    }

    pub fn symbols_per_slot(&self) -> usize {
        SYMBOLS_PER_SLOT
    }

    /// Same frame with a different length.
    pub fn with_total_symbols(&self, total_symbols: usize) -> Result<Self> {
        Self::new(total_symbols, self.payload_bits, self.scs, self.guard_symbols)
    }

    /// Frame duration in milliseconds.
    pub fn latency_ms(&self) -> f64 {
        symbols_to_ms(self.total_symbols, self.scs)
    }
}

pub fn symbols_to_ms(symbols: usize, scs: SubcarrierSpacing) -> f64 {
    symbols as f64 / (SYMBOLS_PER_SLOT as f64 * scs.slots_per_ms())
}

/// Transmission rate and the SNR needed to decode it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    pub rate: f64,
    pub gamma_th: f64,
    pub data_symbols: usize,
}

/// `R = b / N_d` with `N_d = N − overhead`, and `γ_th = 2^R − 1`.
pub fn rate_for(frame: &FrameConfig, overhead_symbols: usize) -> Result<RateSpec> {
    rate_for_symbols(frame.payload_bits, frame.total_symbols, overhead_symbols)
}

fn rate_for_symbols(payload_bits: u32, total: usize, overhead: usize) -> Result<RateSpec> {
    if overhead >= total {
        return Err(Error::invalid(
            "overhead_symbols",
            format!("{overhead} overhead symbols leave no data symbols in a {total}-symbol frame"),
        ));
    }
    let data_symbols = total - overhead;
    let rate = f64::from(payload_bits) / data_symbols as f64;
    Ok(RateSpec {
        rate,
        gamma_th: rate.exp2() - 1.0,
        data_symbols,
    })
}

/// CSI acquisition and precoding pipeline of a single-device downlink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkScheme {
    /// UL pilots, LS estimate, MRT.
    TddMrt,
    /// UL pilots, LS estimate projected on the correlation eigenspace, matched filter.
    TddSv,
    /// DL pilots on `N_s` singular vectors, analog feedback, matched filter.
    Fdd,
    /// Genie CSI, MRT, no overhead.
    PerfectCsi,
}

impl LinkScheme {
    pub fn name(self) -> &'static str {
        match self {
            LinkScheme::TddMrt => "tdd-mrt",
            LinkScheme::TddSv => "tdd-sv",
            LinkScheme::Fdd => "fdd",
            LinkScheme::PerfectCsi => "perfect-csi",
        }
    }

    /// Frame symbols consumed before data for training parameter `param`
    /// (pilot length `t` for TDD, number of singular vectors `N_s` for FDD).
    pub fn overhead(self, param: usize, guard_symbols: usize) -> usize {
        match self {
            LinkScheme::TddMrt | LinkScheme::TddSv => param + guard_symbols,
            LinkScheme::Fdd => 2 * param,
            LinkScheme::PerfectCsi => 0,
        }
    }

    fn uses_training(self) -> bool {
        !matches!(self, LinkScheme::PerfectCsi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    Iid,
    Cluster(ClusterModel),
}

/// Array, propagation model and whether the path set is drawn once for the whole experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub array: ArrayConfig,
    pub model: ChannelModel,
    pub freeze_paths: bool,
}

impl ChannelConfig {
    pub fn iid(array: ArrayConfig) -> Self {
        ChannelConfig {
            array,
            model: ChannelModel::Iid,
            freeze_paths: false,
        }
    }

    pub fn cluster(array: ArrayConfig, model: ClusterModel) -> Self {
        ChannelConfig {
            array,
            model: ChannelModel::Cluster(model),
            freeze_paths: false,
        }
    }

    /// Upper bound on the correlation rank.
    pub fn max_rank(&self) -> usize {
        let m = self.array.num_antennas();
        match self.model {
            ChannelModel::Iid => m,
            ChannelModel::Cluster(c) => c.num_paths().min(m),
        }
    }
}

/// Outage estimate with its 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutageResult {
    pub p_outage: f64,
    pub outages: u64,
    pub trials: u64,
    pub ci95: (f64, f64),
}

impl OutageResult {
    pub fn from_counts(outages: u64, trials: u64) -> Self {
        let p_outage = if trials == 0 { 0.0 } else { outages as f64 / trials as f64 };
        OutageResult {
            p_outage,
            outages,
            trials,
            ci95: wilson(outages, trials, Z95),
        }
    }

    pub fn reliability(&self) -> f64 {
        1.0 - self.p_outage
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci95.1 - self.ci95.0)
    }

    /// Precision target used when escalating trial counts.
    pub fn is_precise(&self) -> bool {
        self.half_width() < (0.1 * self.p_outage).max(1e-5)
    }
}

/// Shared Monte-Carlo settings for link-level experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkExperiment {
    pub channel: ChannelConfig,
    pub budget: LinkBudget,
    pub synthesis: LsSynthesis,
    pub trials: u64,
    /// When larger than `trials`, trial counts double until every reported
    /// estimate meets [`OutageResult::is_precise`] or this cap is reached.
    pub max_trials: u64,
    pub seed: u64,
    pub workers: Workers,
}

impl LinkExperiment {
    pub fn new(channel: ChannelConfig, budget: LinkBudget, trials: u64, seed: u64) -> Self {
        LinkExperiment {
            channel,
            budget,
            synthesis: LsSynthesis::NoiseShortcut,
            trials,
            max_trials: trials,
            seed,
            workers: Workers::Auto,
        }
    }

    pub fn with_workers(mut self, workers: Workers) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_max_trials(mut self, max_trials: u64) -> Self {
        self.max_trials = max_trials;
        self
    }

    fn check(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::invalid("trials", "must be at least 1"));
        }
        Ok(())
    }

    fn frozen_paths(&self) -> Result<Option<PathSet>> {
        match (self.channel.freeze_paths, self.channel.model) {
            (true, ChannelModel::Cluster(c)) => {
                let mut rng = substream(self.seed, stream_id("frozen-paths"), 0);
                Ok(Some(draw_paths(&c, &self.channel.array, &mut rng)?))
            }
            _ => Ok(None),
        }
    }
}

/// One propagation environment: a channel and the statistics the BS knows.
#[derive(Debug, Clone)]
pub struct Environment {
    pub channel: ChannelRealization,
    pub spectrum: CorrelationSpectrum,
}

fn identity_spectrum(m: usize) -> CorrelationSpectrum {
    CorrelationSpectrum::from_parts(CMatrix::identity(m, m), vec![1.0; m]).expect("square identity")
}

/// Draws the environment of one device for one trial.
pub fn draw_environment<R: Rng + ?Sized>(cfg: &ChannelConfig, frozen: Option<&PathSet>, rng: &mut R) -> Result<Environment> {
    match cfg.model {
        ChannelModel::Iid => Ok(Environment {
            channel: realize_iid(&cfg.array, rng),
            spectrum: identity_spectrum(cfg.array.num_antennas()),
        }),
        ChannelModel::Cluster(model) => {
            let drawn;
            let paths = match frozen {
                Some(p) => p,
                None => {
                    drawn = draw_paths(&model, &cfg.array, rng)?;
                    &drawn
                }
            };
            let channel = realize_channel(paths, rng);
            Ok(Environment {
                channel,
                spectrum: correlation_spectrum(paths),
            })
        }
    }
}

/// Post-processing SNR of `scheme` with training parameter `param` on `env`.
///
/// `noise` supplies the estimation noise; callers pass clones of one stream so
/// that all training lengths see the same normalised noise. FDD requests for
/// more singular vectors than the environment's rank use the full rank.
/// Degenerate estimates count as `γ = 0`.
pub fn scheme_snr(env: &Environment, scheme: LinkScheme, param: usize, exp: &LinkExperiment, noise: &mut SimRng) -> Result<f64> {
    let b = &exp.budget;
    let h = &env.channel;
    let precoder = match scheme {
        LinkScheme::PerfectCsi => mrt(&ChannelEstimate::perfect(h)),
        LinkScheme::TddMrt | LinkScheme::TddSv => {
            let est = ls_estimate(h, &TrainingConfig::uplink(param)?, b, exp.synthesis, noise)?;
            if scheme == LinkScheme::TddMrt {
                mrt(&est)
            } else {
                sv_precoder(&est, &env.spectrum)
            }
        }
        LinkScheme::Fdd => {
            let ns = param.min(env.spectrum.rank());
            let fb = fdd_train_feedback(h, &env.spectrum, ns, b, noise)?;
            fdd_precoder(&fb, &env.spectrum)
        }
    };
    match precoder {
        Ok(w) => Ok(snr_dl(h, &w, b).gamma),
        Err(Error::DegenerateInput(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct EvalPoint {
    scheme: LinkScheme,
    param: usize,
}

/// Per evaluation point: SNR moments and outage counts against each threshold.
#[derive(Debug, Clone)]
struct GridAcc {
    moments: Vec<Moments>,
    outages: Vec<Vec<u64>>,
    trials: u64,
    error: Option<Error>,
}

impl Accumulator for GridAcc {
    fn merge(&mut self, o: Self) {
        for (a, b) in self.moments.iter_mut().zip(&o.moments) {
            a.merge(b);
        }
        for (a, b) in self.outages.iter_mut().zip(&o.outages) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.trials += o.trials;
        if self.error.is_none() {
            self.error = o.error;
        }
    }
}

struct Grid {
    points: Vec<EvalPoint>,
    /// `thresholds[i]` lists the SNR thresholds evaluated for point `i`.
    thresholds: Vec<Vec<f64>>,
}

const LINK_STREAM: &str = "urllc-link";

impl Grid {
    fn empty_acc(&self) -> GridAcc {
        GridAcc {
            moments: vec![Moments::default(); self.points.len()],
            outages: self.thresholds.iter().map(|t| vec![0; t.len()]).collect(),
            trials: 0,
            error: None,
        }
    }

    fn run(&self, exp: &LinkExperiment) -> Result<GridAcc> {
        exp.check()?;
        let frozen = exp.frozen_paths()?;
        let plan = TrialPlan::new(exp.seed, stream_id(LINK_STREAM), exp.trials);
        let trial = |acc: &mut GridAcc, rng: &mut SimRng, _idx: u64| {
            if let Err(e) = self.trial(acc, exp, frozen.as_ref(), rng) {
                acc.error.get_or_insert(e);
            }
        };
        let mut acc = run_trials(plan, exp.workers, || self.empty_acc(), trial)?;
        let mut last = plan;
        while acc.error.is_none() && acc.trials < exp.max_trials && !self.precise(&acc) {
            let more = acc.trials.min(exp.max_trials - acc.trials);
            last = last.continuation(more);
            acc.merge(run_trials(last, exp.workers, || self.empty_acc(), trial)?);
        }
        match acc.error.take() {
            Some(e) => Err(e),
            None => Ok(acc),
        }
    }

    fn precise(&self, acc: &GridAcc) -> bool {
        acc.outages
            .iter()
            .flatten()
            .all(|&k| OutageResult::from_counts(k, acc.trials).is_precise())
    }

    fn trial(&self, acc: &mut GridAcc, exp: &LinkExperiment, frozen: Option<&PathSet>, rng: &mut SimRng) -> Result<()> {
        let env = draw_environment(&exp.channel, frozen, rng)?;
        let noise = rng.clone();
        for (i, p) in self.points.iter().enumerate() {
            let gamma = scheme_snr(&env, p.scheme, p.param, exp, &mut noise.clone())?;
            acc.moments[i].push(gamma);
            for (j, th) in self.thresholds[i].iter().enumerate() {
                if gamma < *th {
                    acc.outages[i][j] += 1;
                }
            }
        }
        acc.trials += 1;
        Ok(())
    }
}

/// Largest training parameter that leaves at least one data symbol.
pub fn max_training(scheme: LinkScheme, frame: &FrameConfig, channel: &ChannelConfig) -> usize {
    let n = frame.total_symbols;
    match scheme {
        LinkScheme::TddMrt | LinkScheme::TddSv => n.saturating_sub(frame.guard_symbols + 1),
        LinkScheme::Fdd => ((n.saturating_sub(1)) / 2).min(channel.max_rank()),
        LinkScheme::PerfectCsi => 0,
    }
}

fn feasible_params(scheme: LinkScheme, frame: &FrameConfig, channel: &ChannelConfig) -> Vec<usize> {
    if scheme.uses_training() {
        (1..=max_training(scheme, frame, channel)).collect()
    } else {
        vec![0]
    }
}

fn threshold(scheme: LinkScheme, frame: &FrameConfig, param: usize) -> Result<f64> {
    Ok(rate_for(frame, scheme.overhead(param, frame.guard_symbols))?.gamma_th)
}

/// Outage probability of one scheme at one training parameter.
///
/// `param` is the pilot length `t` for TDD schemes, `N_s` for FDD and ignored
/// for perfect CSI.
pub fn outage_mc(exp: &LinkExperiment, scheme: LinkScheme, frame: &FrameConfig, param: usize) -> Result<OutageResult> {
    if scheme.uses_training() && param < 1 {
        return Err(Error::invalid("training", "need at least one training symbol"));
    }
    if scheme == LinkScheme::Fdd && param > exp.channel.max_rank() {
        return Err(Error::invalid(
            "num_svs",
            format!("{param} exceeds the correlation rank {}", exp.channel.max_rank()),
        ));
    }
    let param = if scheme.uses_training() { param } else { 0 };
    let grid = Grid {
        points: vec![EvalPoint { scheme, param }],
        thresholds: vec![vec![threshold(scheme, frame, param)?]],
    };
    let acc = grid.run(exp)?;
    Ok(OutageResult::from_counts(acc.outages[0][0], acc.trials))
}

/// Statistics at one training length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub scheme: LinkScheme,
    pub param: usize,
    pub mean_gamma: f64,
    pub rsd_gamma: f64,
    pub outage: OutageResult,
}

/// SNR statistics and outage over a range of training lengths (common random numbers).
pub fn sweep_training(
    exp: &LinkExperiment,
    schemes: &[LinkScheme],
    frame: &FrameConfig,
    params: &[usize],
) -> Result<Vec<TrainingPoint>> {
    if params.is_empty() || schemes.is_empty() {
        return Err(Error::invalid("sweep", "empty training range"));
    }
    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    for &scheme in schemes {
        for &p in params {
            if scheme.uses_training() && p < 1 {
                return Err(Error::invalid("sweep", "training lengths start at 1"));
            }
            points.push(EvalPoint { scheme, param: p });
            thresholds.push(vec![threshold(scheme, frame, p)?]);
        }
    }
    let grid = Grid { points, thresholds };
    let acc = grid.run(exp)?;
    Ok(grid
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| TrainingPoint {
            scheme: p.scheme,
            param: p.param,
            mean_gamma: acc.moments[i].mean(),
            rsd_gamma: acc.moments[i].rsd(),
            outage: OutageResult::from_counts(acc.outages[i][0], acc.trials),
        })
        .collect())
}

/// Training parameter minimising outage, ties going to the shorter training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestTraining {
    pub param: usize,
    pub outage: OutageResult,
}

fn argmin(candidates: impl IntoIterator<Item = (usize, OutageResult)>) -> Option<BestTraining> {
    let mut best: Option<BestTraining> = None;
    for (param, outage) in candidates {
        let better = match &best {
            None => true,
            Some(b) => outage.outages < b.outage.outages || (outage.outages == b.outage.outages && param < b.param),
        };
        if better {
            best = Some(BestTraining { param, outage });
        }
    }
    best
}

/// Exhaustive scan of the training parameter over `params` (or every feasible value).
pub fn best_training(
    exp: &LinkExperiment,
    scheme: LinkScheme,
    frame: &FrameConfig,
    params: Option<&[usize]>,
) -> Result<BestTraining> {
    let all = feasible_params(scheme, frame, &exp.channel);
    let params: Vec<usize> = match params {
        Some(p) => p.iter().copied().filter(|x| all.contains(x)).collect(),
        None => all,
    };
    if params.is_empty() {
        return Err(Error::invalid("frame.total_symbols", "no feasible training length for this frame"));
    }
    let sweep = sweep_training(exp, &[scheme], frame, &params)?;
    Ok(argmin(sweep.iter().map(|p| (p.param, p.outage))).expect("non-empty"))
}

/// One point of a latency-reliability curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyPoint {
    pub scheme: LinkScheme,
    pub total_symbols: usize,
    pub latency_ms: f64,
    pub best_param: usize,
    pub reliability: f64,
    pub outage: OutageResult,
}

/// Reliability at each frame length with the training optimised per length.
///
/// All schemes and frame lengths share the same channel draws.
pub fn latency_reliability_curve(
    exp: &LinkExperiment,
    schemes: &[LinkScheme],
    frame: &FrameConfig,
    lengths: &[usize],
) -> Result<Vec<LatencyPoint>> {
    if lengths.is_empty() || schemes.is_empty() {
        return Err(Error::invalid("lengths", "need at least one frame length and scheme"));
    }
    let frames: Vec<FrameConfig> = lengths.iter().map(|&n| frame.with_total_symbols(n)).collect::<Result<_>>()?;
    let mut points = Vec::new();
    let mut thresholds = Vec::new();
    // For each (scheme, param): thresholds for every frame length where the param is feasible.
    let mut index: Vec<(EvalPoint, Vec<(usize, usize)>)> = Vec::new();
    for &scheme in schemes {
        let params: BTreeSet<usize> = frames
            .iter()
            .flat_map(|f| feasible_params(scheme, f, &exp.channel))
            .collect();
        if frames.iter().any(|f| feasible_params(scheme, f, &exp.channel).is_empty()) {
            return Err(Error::invalid("lengths", format!("{} has no feasible training in some frame", scheme.name())));
        }
        for p in params {
            let mut ths = Vec::new();
            let mut slots = Vec::new();
            for (fi, f) in frames.iter().enumerate() {
                if feasible_params(scheme, f, &exp.channel).contains(&p) {
                    slots.push((fi, ths.len()));
                    ths.push(threshold(scheme, f, p)?);
                }
            }
            let pt = EvalPoint { scheme, param: p };
            points.push(pt);
            thresholds.push(ths);
            index.push((pt, slots));
        }
    }
    let grid = Grid { points, thresholds };
    let acc = grid.run(exp)?;

    let mut out = Vec::new();
    for &scheme in schemes {
        for (fi, f) in frames.iter().enumerate() {
            let candidates = index.iter().enumerate().filter(|(_, (pt, _))| pt.scheme == scheme).filter_map(|(i, (pt, slots))| {
                slots
                    .iter()
                    .find(|(frame_idx, _)| *frame_idx == fi)
                    .map(|&(_, j)| (pt.param, OutageResult::from_counts(acc.outages[i][j], acc.trials)))
            });
            let best = argmin(candidates).expect("feasible parameters checked above");
            out.push(LatencyPoint {
                scheme,
                total_symbols: f.total_symbols,
                latency_ms: f.latency_ms(),
                best_param: best.param,
                reliability: best.outage.reliability(),
                outage: best.outage,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Multiplexing {
    /// Both devices in the same symbols, zero-forcing on LS estimates, power split equally.
    Sdm,
    /// Device 1 in the first half of the frame, device 2 in the second, SV precoding at full power.
    Tdm,
}

impl Multiplexing {
    pub fn name(self) -> &'static str {
        match self {
            Multiplexing::Sdm => "sdm",
            Multiplexing::Tdm => "tdm",
        }
    }
}

/// Per-device outage of one multiplexing scheme at one system latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuxRow {
    pub scheme: Multiplexing,
    pub total_symbols: usize,
    /// 1 or 2.
    pub device: usize,
    pub latency_symbols: usize,
    pub outage: OutageResult,
    pub avg_device_latency: f64,
    pub system_latency: usize,
}

/// Latency needed by a scheme to serve both devices at a target outage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuxLatency {
    pub system_latency: usize,
    pub avg_device_latency: f64,
}

/// Smallest frame length at which every device of `scheme` meets `target`.
pub fn latency_at_outage(rows: &[MuxRow], scheme: Multiplexing, target: f64) -> Option<MuxLatency> {
    let mut lengths: Vec<usize> = rows.iter().filter(|r| r.scheme == scheme).map(|r| r.total_symbols).collect();
    lengths.sort_unstable();
    lengths.dedup();
    lengths.into_iter().find_map(|n| {
        let at: Vec<&MuxRow> = rows.iter().filter(|r| r.scheme == scheme && r.total_symbols == n).collect();
        at.iter().all(|r| r.outage.p_outage <= target).then(|| MuxLatency {
            system_latency: n,
            avg_device_latency: at[0].avg_device_latency,
        })
    })
}

/// Sub-frame lengths under TDM: device 1 gets `⌈N/2⌉`, device 2 the rest.
pub fn tdm_split(total: usize) -> (usize, usize) {
    (total.div_ceil(2), total / 2)
}

#[derive(Debug, Clone)]
struct MuxAcc {
    /// `[scheme][device][length]`
    outages: [[Vec<u64>; 2]; 2],
    trials: u64,
    error: Option<Error>,
}

impl Accumulator for MuxAcc {
    fn merge(&mut self, o: Self) {
        for s in 0..2 {
            for d in 0..2 {
                for (a, b) in self.outages[s][d].iter_mut().zip(&o.outages[s][d]) {
                    *a += b;
                }
            }
        }
        self.trials += o.trials;
        if self.error.is_none() {
            self.error = o.error;
        }
    }
}

/// Two-device downlink: SDM with ZF against TDM with SV precoding.
///
/// Each device trains with `training` UL pilot symbols. SDM trains both
/// devices on orthogonal pilots (`2t` symbols) plus one guard period and then
/// serves both over the remaining symbols; TDM repeats training, guard and data
/// for each device inside its half of the frame.
pub fn tdm_vs_sdm(exp: &LinkExperiment, frame: &FrameConfig, training: usize, lengths: &[usize]) -> Result<Vec<MuxRow>> {
    exp.check()?;
    if training < 1 {
        return Err(Error::invalid("training", "need at least one training symbol"));
    }
    if lengths.is_empty() {
        return Err(Error::invalid("lengths", "need at least one frame length"));
    }
    let g = frame.guard_symbols;
    let b = frame.payload_bits;
    // Infeasible lengths get an unreachable threshold: every trial is an outage.
    let th = |total: usize, overhead: usize| rate_for_symbols(b, total, overhead).map_or(f64::INFINITY, |r| r.gamma_th);
    let sdm_th: Vec<f64> = lengths.iter().map(|&n| th(n, 2 * training + g)).collect();
    let tdm_th: [Vec<f64>; 2] = [
        lengths.iter().map(|&n| th(tdm_split(n).0, training + g)).collect(),
        lengths.iter().map(|&n| th(tdm_split(n).1, training + g)).collect(),
    ];
    let frozen = exp.frozen_paths()?;
    let empty = || MuxAcc {
        outages: [[vec![0; lengths.len()], vec![0; lengths.len()]], [vec![0; lengths.len()], vec![0; lengths.len()]]],
        trials: 0,
        error: None,
    };
    let cfg = TrainingConfig::uplink(training)?;
    let one = |acc: &mut MuxAcc, rng: &mut SimRng| -> Result<()> {
        let envs = [
            draw_environment(&exp.channel, frozen.as_ref(), rng)?,
            draw_environment(&exp.channel, frozen.as_ref(), rng)?,
        ];
        let mut est = Vec::with_capacity(2);
        for env in &envs {
            est.push(ls_estimate(&env.channel, &cfg, &exp.budget, exp.synthesis, rng)?);
        }
        let sdm = match zf_pair(&est[0], &est[1]) {
            Ok((w1, w2)) => [
                sinr_two_user(&envs[0].channel, &w1, &w2, &exp.budget, 0.5).gamma,
                sinr_two_user(&envs[1].channel, &w2, &w1, &exp.budget, 0.5).gamma,
            ],
            Err(Error::IllConditioned { .. }) | Err(Error::DegenerateInput(_)) => [0.0, 0.0],
            Err(e) => return Err(e),
        };
        // TDM trains each device again inside its own sub-frame.
        let mut tdm = [0.0; 2];
        for (d, env) in envs.iter().enumerate() {
            let e = ls_estimate(&env.channel, &cfg, &exp.budget, exp.synthesis, rng)?;
            tdm[d] = match sv_precoder(&e, &env.spectrum) {
                Ok(w) => snr_dl(&env.channel, &w, &exp.budget).gamma,
                Err(Error::DegenerateInput(_)) => 0.0,
                Err(e) => return Err(e),
            };
        }
        for d in 0..2 {
            for (k, t) in sdm_th.iter().enumerate() {
                acc.outages[0][d][k] += u64::from(sdm[d] < *t);
            }
            for (k, t) in tdm_th[d].iter().enumerate() {
                acc.outages[1][d][k] += u64::from(tdm[d] < *t);
            }
        }
        acc.trials += 1;
        Ok(())
    };
    let plan = TrialPlan::new(exp.seed, stream_id("urllc-mux"), exp.trials);
    let mut acc = run_trials(plan, exp.workers, empty, |acc, rng, _| {
        if let Err(e) = one(acc, rng) {
            acc.error.get_or_insert(e);
        }
    })?;
    if let Some(e) = acc.error.take() {
        return Err(e);
    }

    let mut rows = Vec::new();
    for (si, scheme) in [Multiplexing::Sdm, Multiplexing::Tdm].into_iter().enumerate() {
        for (k, &n) in lengths.iter().enumerate() {
            let lat = match scheme {
                Multiplexing::Sdm => [n, n],
                Multiplexing::Tdm => [tdm_split(n).0, n],
            };
            let avg = 0.5 * (lat[0] + lat[1]) as f64;
            for d in 0..2 {
                rows.push(MuxRow {
                    scheme,
                    total_symbols: n,
                    device: d + 1,
                    latency_symbols: lat[d],
                    outage: OutageResult::from_counts(acc.outages[si][d][k], acc.trials),
                    avg_device_latency: avg,
                    system_latency: n,
                });
            }
        }
    }
    Ok(rows)
}
