//! Pilot-hopping random access: a codeword is split over `L` slots and each
//! part uses a freshly drawn pilot, so the pilot contamination a device sees
//! is averaged over `L` independent draws.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimation::LinkBudget;

use super::{PilotPool, RaDevice};

/// Large-`M` SINR of a device on a pilot shared with `interference` (`Σ ρ_j β_j²`).
///
/// Without contamination the SINR is capped at the array-gain value `ρβM/σ²`.
pub fn hardened_sinr(device: &RaDevice, interference: f64, num_antennas: usize, budget: &LinkBudget) -> f64 {
    if interference > 0.0 {
        device.coherent_power() / interference
    } else {
        device.rx_power() * num_antennas as f64 / budget.noise_var()
    }
}

/// Achievable rate `(1/L) Σ_l log₂(1 + SINR_{k,l})` of every device.
pub fn pilot_ra_rate<R: Rng + ?Sized>(
    devices: &[RaDevice],
    pool: &PilotPool,
    num_slots: usize,
    num_antennas: usize,
    budget: &LinkBudget,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if num_slots < 1 {
        return Err(Error::invalid("num_slots", "must be at least 1"));
    }
    let mut rates = vec![0.0; devices.len()];
    let mut pilot = vec![0; devices.len()];
    let mut load = vec![0.0; pool.size()];
    for _ in 0..num_slots {
        load.iter_mut().for_each(|x| *x = 0.0);
        for (k, d) in devices.iter().enumerate() {
            pilot[k] = pool.pick(rng);
            load[pilot[k]] += d.coherent_power();
        }
        for (k, d) in devices.iter().enumerate() {
            let interference = (load[pilot[k]] - d.coherent_power()).max(0.0);
            rates[k] += hardened_sinr(d, interference, num_antennas, budget).ln_1p() / std::f64::consts::LN_2;
        }
    }
    rates.iter_mut().for_each(|r| *r /= num_slots as f64);
    Ok(rates)
}
