//! Strongest-user collision resolution and the retry baseline.
//!
//! In each access block every contending device sends a random pilot. The BS
//! answers each pilot with a precoded DL pilot, from which a device learns the
//! total power `α` of all devices that chose the same pilot. Under the hard
//! rule a device repeats its request only if its own received power `ρβ`
//! exceeds `α̂/2`, which at most one device per pilot can satisfy. A pilot is
//! resolved when exactly one device repeats.

use rand::Rng;
use rand_distr::{Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::LinkBudget;
use crate::mc::{stream_id, substream};
use crate::stats::Moments;

use super::{PilotPool, RaPopulation};

/// How a device knows the total power on its pilot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SucreMode {
    /// Channel hardening makes `α̂ = α`.
    Asymptotic,
    /// `α̂ = α(1 + |ε|)` with `ε ~ N(0, (1 + σ²/ρ)/M)`.
    ///
    /// The estimate errs on the high side so that the strict-majority property
    /// of the hard rule survives estimation error.
    FiniteM,
}

/// Retransmission rule applied in phase 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    /// Repeat iff `ρβ > α̂/2`.
    Hard,
    /// Repeat with probability `min(1, (ρβ/(α̂/2))^η)`; `η → ∞` recovers the hard rule.
    Soft { eta: f64 },
    /// Everyone repeats, so only uncontended pilots succeed.
    Always,
}

impl Decision {
    fn retransmits<R: Rng + ?Sized>(self, own: f64, alpha_hat: f64, rng: &mut R) -> bool {
        let x = own / (0.5 * alpha_hat);
        match self {
            Decision::Hard => x > 1.0,
            Decision::Soft { eta } => rng.random::<f64>() < x.powf(eta).min(1.0),
            Decision::Always => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SucreSetup {
    pub num_antennas: usize,
    /// DL pilot budget; only its SNR matters, and only in finite-M mode.
    pub budget: LinkBudget,
    pub mode: SucreMode,
}

impl SucreSetup {
    pub fn asymptotic(num_antennas: usize, budget: LinkBudget) -> Self {
        SucreSetup {
            num_antennas,
            budget,
            mode: SucreMode::Asymptotic,
        }
    }

    fn alpha_hat<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R) -> f64 {
        match self.mode {
            SucreMode::Asymptotic => alpha,
            SucreMode::FiniteM => {
                let var = (1.0 + 1.0 / self.budget.snr()) / self.num_antennas as f64;
                let e: f64 = rng.sample(StandardNormal);
                alpha * (1.0 + var.sqrt() * e.abs())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviceOutcome {
    /// Sole device repeating on its pilot.
    Granted,
    Lost,
    /// Strongest device on its pilot that stayed silent.
    FalseNegative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SucreBlock {
    pub pilots: Vec<usize>,
    pub retransmitted: Vec<bool>,
    pub outcomes: Vec<DeviceOutcome>,
    /// Pilots chosen by two or more devices.
    pub collisions: u64,
    /// Collided pilots on which exactly one device repeated.
    pub resolved: u64,
}

/// One access block for devices with received powers `rx_powers` (`ρ_k β_k`).
pub fn sucre_block<R: Rng + ?Sized>(
    rx_powers: &[f64],
    pool: &PilotPool,
    setup: &SucreSetup,
    decision: Decision,
    rng: &mut R,
) -> SucreBlock {
    let n = rx_powers.len();
    let pilots: Vec<usize> = (0..n).map(|_| pool.pick(rng)).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); pool.size()];
    for (k, &p) in pilots.iter().enumerate() {
        members[p].push(k);
    }
    let mut retransmitted = vec![false; n];
    let mut outcomes = vec![DeviceOutcome::Lost; n];
    let (mut collisions, mut resolved) = (0, 0);
    for devs in members.iter().filter(|d| !d.is_empty()) {
        let alpha: f64 = devs.iter().map(|&k| rx_powers[k]).sum();
        for &k in devs {
            let alpha_hat = setup.alpha_hat(alpha, rng);
            retransmitted[k] = decision.retransmits(rx_powers[k], alpha_hat, rng);
        }
        let repeaters: Vec<usize> = devs.iter().copied().filter(|&k| retransmitted[k]).collect();
        if repeaters.len() == 1 {
            outcomes[repeaters[0]] = DeviceOutcome::Granted;
        }
        let strongest = devs
            .iter()
            .copied()
            .max_by(|&a, &b| rx_powers[a].total_cmp(&rx_powers[b]))
            .expect("non-empty");
        if !retransmitted[strongest] {
            outcomes[strongest] = DeviceOutcome::FalseNegative;
        }
        if devs.len() >= 2 {
            collisions += 1;
            resolved += u64::from(repeaters.len() == 1);
        }
    }
    SucreBlock {
        pilots,
        retransmitted,
        outcomes,
        collisions,
        resolved,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaProtocol {
    /// Collided pilots fail and their devices retry in a later block.
    Baseline,
    SucreHard,
    SucreSoft,
}

impl RaProtocol {
    pub fn name(self) -> &'static str {
        match self {
            RaProtocol::Baseline => "baseline",
            RaProtocol::SucreHard => "sucre-hard",
            RaProtocol::SucreSoft => "sucre-soft",
        }
    }

    pub fn decision(self, soft_eta: f64) -> Decision {
        match self {
            RaProtocol::Baseline => Decision::Always,
            RaProtocol::SucreHard => Decision::Hard,
            RaProtocol::SucreSoft => Decision::Soft { eta: soft_eta },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaSimConfig {
    pub max_attempts: u32,
    pub blocks: u64,
    /// Blocks simulated before statistics are collected, so the retry backlog can build up.
    pub warmup_blocks: u64,
    /// Contiguous batches used for batch-means standard errors.
    pub batches: u64,
    pub soft_eta: f64,
    pub setup: SucreSetup,
}

impl RaSimConfig {
    pub fn new(blocks: u64, setup: SucreSetup) -> Self {
        RaSimConfig {
            max_attempts: 10,
            blocks,
            warmup_blocks: 100,
            batches: 20,
            soft_eta: 3.0,
            setup,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_attempts < 1 {
            return Err(Error::invalid("max_attempts", "must be at least 1"));
        }
        if self.batches < 2 {
            return Err(Error::invalid("batches", "need at least two batches"));
        }
        if self.blocks < self.batches {
            return Err(Error::invalid("blocks", format!("need at least {} blocks (one per batch)", self.batches)));
        }
        if !(self.soft_eta > 0.0 && self.soft_eta.is_finite()) {
            return Err(Error::invalid("soft_eta", "must be positive"));
        }
        if self.setup.num_antennas < 1 {
            return Err(Error::invalid("num_antennas", "must be at least 1"));
        }
        Ok(())
    }
}

/// Access statistics over the measured blocks.
///
/// Ratios are 0 when their denominator is empty (no device ever became active).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaMetrics {
    /// Attempts per device until it was granted or gave up.
    pub avg_attempts: f64,
    pub avg_attempts_se: f64,
    /// Fraction of access attempts that did not end in a grant.
    pub failure_prob: f64,
    pub failure_prob_se: f64,
    pub resolved_collision_frac: f64,
    /// Devices that gave up after `max_attempts`, per finished device.
    pub dropped_frac: f64,
    pub attempts: u64,
    pub finished: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    finished_attempts: u64,
    finished: u64,
    dropped: u64,
    attempts: u64,
    failed: u64,
    collisions: u64,
    resolved: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.finished_attempts += o.finished_attempts;
        self.finished += o.finished;
        self.dropped += o.dropped;
        self.attempts += o.attempts;
        self.failed += o.failed;
        self.collisions += o.collisions;
        self.resolved += o.resolved;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn activation_sampler(pop: &RaPopulation) -> Result<Option<Geometric>> {
    (pop.activation_prob() > 0.0)
        .then(|| Geometric::new(pop.activation_prob()).map_err(|e| Error::invalid("population.activation_prob", e.to_string())))
        .transpose()
}

/// Calls `f` for each of `n` devices that activates, skipping geometrically between them.
fn activate<R: Rng + ?Sized>(geo: &Geometric, n: usize, rng: &mut R, mut f: impl FnMut(usize)) {
    let mut k = geo.sample(rng);
    while let Ok(idx) = usize::try_from(k) {
        if idx >= n {
            break;
        }
        f(idx);
        k = k.saturating_add(1).saturating_add(geo.sample(rng));
    }
}

/// Pilot collisions in isolated blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionStats {
    pub collisions: u64,
    pub resolved: u64,
    pub resolved_frac: f64,
    pub ci95: (f64, f64),
}

/// Fraction of pilot collisions resolved when every block draws a fresh set
/// of active devices and nobody retries.
pub fn one_shot_resolution(
    pop: &RaPopulation,
    pool: &PilotPool,
    setup: &SucreSetup,
    decision: Decision,
    blocks: u64,
    seed: u64,
) -> Result<ResolutionStats> {
    let devices = pop.devices();
    let activation = activation_sampler(pop)?;
    let stream = stream_id("one-shot-resolution");
    let (mut collisions, mut resolved) = (0, 0);
    let mut rx = Vec::new();
    for block in 0..blocks {
        let mut rng = substream(seed, stream, block);
        rx.clear();
        if let Some(geo) = &activation {
            activate(geo, devices.len(), &mut rng, |idx| rx.push(devices[idx].rx_power()));
        }
        let out = sucre_block(&rx, pool, setup, decision, &mut rng);
        collisions += out.collisions;
        resolved += out.resolved;
    }
    Ok(ResolutionStats {
        collisions,
        resolved,
        resolved_frac: ratio(resolved, collisions),
        ci95: crate::stats::wilson(resolved, collisions, crate::stats::Z95),
    })
}

/// Multi-block access with retries.
///
/// Idle devices activate independently with probability `P_a` per block;
/// devices that fail try again in the next block with a fresh pilot until
/// they are granted or reach `max_attempts`. Block `i` draws from its own
/// substream of `seed`.
pub fn simulate_ra(
    pop: &RaPopulation,
    pool: &PilotPool,
    protocol: RaProtocol,
    cfg: &RaSimConfig,
    seed: u64,
) -> Result<RaMetrics> {
    cfg.validate()?;
    let decision = protocol.decision(cfg.soft_eta);
    let devices = pop.devices();
    let stream = stream_id("random-access");
    let activation = activation_sampler(pop)?;

    let mut busy = vec![false; devices.len()];
    let mut backlog: Vec<(usize, u32)> = Vec::new();
    let mut batches = vec![Tally::default(); cfg.batches as usize];
    let per_batch = cfg.blocks.div_ceil(cfg.batches);
    let mut rx = Vec::new();

    for block in 0..cfg.warmup_blocks + cfg.blocks {
        let mut rng = substream(seed, stream, block);
        if let Some(geo) = &activation {
            activate(geo, devices.len(), &mut rng, |idx| {
                if !busy[idx] {
                    busy[idx] = true;
                    backlog.push((idx, 0));
                }
            });
        }
        rx.clear();
        rx.extend(backlog.iter().map(|&(i, _)| devices[i].rx_power()));
        let out = sucre_block(&rx, pool, &cfg.setup, decision, &mut rng);

        let mut t = Tally {
            attempts: backlog.len() as u64,
            collisions: out.collisions,
            resolved: out.resolved,
            ..Tally::default()
        };
        let mut next = Vec::with_capacity(backlog.len());
        for (&(idx, tries), outcome) in backlog.iter().zip(&out.outcomes) {
            let tries = tries + 1;
            let granted = *outcome == DeviceOutcome::Granted;
            if !granted {
                t.failed += 1;
            }
            if granted || tries >= cfg.max_attempts {
                busy[idx] = false;
                t.finished += 1;
                t.finished_attempts += u64::from(tries);
                t.dropped += u64::from(!granted);
            } else {
                next.push((idx, tries));
            }
        }
        backlog = next;
        if block >= cfg.warmup_blocks {
            batches[((block - cfg.warmup_blocks) / per_batch) as usize].add(&t);
        }
    }

    let mut total = Tally::default();
    let (mut att, mut fail) = (Moments::default(), Moments::default());
    for b in &batches {
        total.add(b);
        if b.finished > 0 {
            att.push(ratio(b.finished_attempts, b.finished));
        }
        if b.attempts > 0 {
            fail.push(ratio(b.failed, b.attempts));
        }
    }
    let se = |m: &Moments| if m.count >= 2 { m.std_err() } else { 0.0 };
    Ok(RaMetrics {
        avg_attempts: ratio(total.finished_attempts, total.finished),
        avg_attempts_se: se(&att),
        failure_prob: ratio(total.failed, total.attempts),
        failure_prob_se: se(&fail),
        resolved_collision_frac: ratio(total.resolved, total.collisions),
        dropped_frac: ratio(total.dropped, total.finished),
        attempts: total.attempts,
        finished: total.finished,
    })
}
