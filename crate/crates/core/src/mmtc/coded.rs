//! Coded random access with successive interference cancellation.
//!
//! Each active device repeats its packet in a random subset of the `L` slots
//! of a frame, on a random pilot. A (slot, pilot) resource that can be decoded
//! reveals a device; its copies are then cancelled from every other slot,
//! which may make further resources decodable. Decoding stops at the fixed
//! point.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::LinkBudget;

use super::pilot_ra::hardened_sinr;
use super::{PilotPool, RaDevice};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeModel {
    /// A resource decodes iff exactly one undecoded device is on it.
    GenieSingleton,
    /// A device decodes iff its hardened SINR against the undecoded devices on its resource reaches `gamma_th`.
    SinrThreshold { gamma_th: f64 },
}

/// Whether a device keeps one pilot for the whole frame or draws one per transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoppingPattern {
    #[default]
    PerSlot,
    PerFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodedRaConfig {
    pub num_slots: usize,
    pub slot_activation_prob: f64,
    pub decode_model: DecodeModel,
    #[serde(default)]
    pub pattern: HoppingPattern,
}

impl CodedRaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_slots < 1 {
            return Err(Error::invalid("coded.num_slots", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.slot_activation_prob) {
            return Err(Error::invalid("coded.slot_activation_prob", "must lie in [0, 1]"));
        }
        if let DecodeModel::SinrThreshold { gamma_th } = self.decode_model {
            if !(gamma_th > 0.0 && gamma_th.is_finite()) {
                return Err(Error::invalid("coded.gamma_th", "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Transmission {
    pub slot: usize,
    pub pilot: usize,
}

/// One decoding event: in pass `iteration`, `device` was decoded on (`slot`, `pilot`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SicStep {
    pub iteration: usize,
    pub slot: usize,
    pub pilot: usize,
    pub device: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodedRaFrame {
    /// Per device, its transmissions in slot order.
    pub transmissions: Vec<Vec<Transmission>>,
    pub decoded: Vec<bool>,
    pub trace: Vec<SicStep>,
}

impl CodedRaFrame {
    pub fn num_decoded(&self) -> usize {
        self.decoded.iter().filter(|&&d| d).count()
    }
}

fn resources(transmissions: &[Vec<Transmission>], num_slots: usize, num_pilots: usize) -> Result<Vec<Vec<usize>>> {
    let mut res = vec![Vec::new(); num_slots * num_pilots];
    for (k, txs) in transmissions.iter().enumerate() {
        for t in txs {
            if t.slot >= num_slots || t.pilot >= num_pilots {
                return Err(Error::invalid("transmissions", format!("device {k} uses slot {} pilot {} outside the frame", t.slot, t.pilot)));
            }
            res[t.slot * num_pilots + t.pilot].push(k);
        }
    }
    Ok(res)
}

/// Runs SIC to its fixed point.
///
/// `decodable(k, undecoded)` says whether device `k` can be decoded on a
/// resource whose undecoded occupants are `undecoded` (which contains `k`).
/// Resources are visited slot by slot, pilot by pilot, and a device decoded
/// early in a pass is already cancelled for the rest of that pass.
pub fn peel<F>(
    transmissions: &[Vec<Transmission>],
    num_slots: usize,
    num_pilots: usize,
    decodable: F,
) -> Result<(Vec<bool>, Vec<SicStep>)>
where
    F: Fn(usize, &[usize]) -> bool,
{
    let res = resources(transmissions, num_slots, num_pilots)?;
    let mut decoded = vec![false; transmissions.len()];
    let mut trace = Vec::new();
    let mut open = Vec::new();
    for iteration in 1.. {
        let before = trace.len();
        for (r, members) in res.iter().enumerate() {
            loop {
                open.clear();
                open.extend(members.iter().copied().filter(|&k| !decoded[k]));
                let Some(k) = open.iter().copied().find(|&k| decodable(k, &open)) else {
                    break;
                };
                decoded[k] = true;
                trace.push(SicStep {
                    iteration,
                    slot: r / num_pilots,
                    pilot: r % num_pilots,
                    device: k,
                });
            }
        }
        if trace.len() == before {
            break;
        }
    }
    Ok((decoded, trace))
}

/// Re-applies a SIC trace from scratch, checking every step was legal when taken.
pub fn replay_sic<F>(
    transmissions: &[Vec<Transmission>],
    num_slots: usize,
    num_pilots: usize,
    trace: &[SicStep],
    decodable: F,
) -> Result<Vec<bool>>
where
    F: Fn(usize, &[usize]) -> bool,
{
    let res = resources(transmissions, num_slots, num_pilots)?;
    let mut decoded = vec![false; transmissions.len()];
    for (i, s) in trace.iter().enumerate() {
        let bad = |why: &str| Error::DegenerateInput(format!("trace step {i} ({s:?}): {why}"));
        if s.slot >= num_slots || s.pilot >= num_pilots || s.device >= decoded.len() {
            return Err(bad("out of range"));
        }
        if decoded[s.device] {
            return Err(bad("device already decoded"));
        }
        let members = &res[s.slot * num_pilots + s.pilot];
        if !members.contains(&s.device) {
            return Err(bad("device does not transmit on this resource"));
        }
        let open: Vec<usize> = members.iter().copied().filter(|&k| !decoded[k]).collect();
        if !decodable(s.device, &open) {
            return Err(bad("resource not decodable at this point"));
        }
        decoded[s.device] = true;
    }
    Ok(decoded)
}

pub fn genie_singleton(_k: usize, open: &[usize]) -> bool {
    open.len() == 1
}

/// Draws one frame for `devices` and decodes it.
pub fn coded_ra_frame<R: Rng + ?Sized>(
    devices: &[RaDevice],
    pool: &PilotPool,
    cfg: &CodedRaConfig,
    num_antennas: usize,
    budget: &LinkBudget,
    rng: &mut R,
) -> Result<CodedRaFrame> {
    cfg.validate()?;
    let transmissions: Vec<Vec<Transmission>> = devices
        .iter()
        .map(|_| {
            let frame_pilot = pool.pick(rng);
            (0..cfg.num_slots)
                .filter_map(|slot| {
                    let active = rng.random::<f64>() < cfg.slot_activation_prob;
                    let pilot = match cfg.pattern {
                        HoppingPattern::PerSlot => pool.pick(rng),
                        HoppingPattern::PerFrame => frame_pilot,
                    };
                    active.then_some(Transmission { slot, pilot })
                })
                .collect()
        })
        .collect();
    let (decoded, trace) = match cfg.decode_model {
        DecodeModel::GenieSingleton => peel(&transmissions, cfg.num_slots, pool.size(), genie_singleton)?,
        DecodeModel::SinrThreshold { gamma_th } => {
            let rule = |k: usize, open: &[usize]| {
                let interference: f64 = open.iter().filter(|&&j| j != k).map(|&j| devices[j].coherent_power()).sum();
                hardened_sinr(&devices[k], interference, num_antennas, budget) >= gamma_th
            };
            peel(&transmissions, cfg.num_slots, pool.size(), rule)?
        }
    };
    Ok(CodedRaFrame {
        transmissions,
        decoded,
        trace,
    })
}
