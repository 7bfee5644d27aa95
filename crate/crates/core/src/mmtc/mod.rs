//! Crowded random access for massive machine-type traffic.
//!
//! [`sucre`] covers grant-based access with strongest-user collision
//! resolution and the plain retry baseline, [`pilot_ra`] the rate of devices
//! that hop pilots across the slots of a codeword, and [`coded`] coded random
//! access decoded by successive interference cancellation.

pub mod coded;
pub mod pilot_ra;
pub mod sucre;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use coded::{coded_ra_frame, genie_singleton, peel, replay_sic, CodedRaConfig, CodedRaFrame, DecodeModel, HoppingPattern, SicStep, Transmission};
pub use pilot_ra::pilot_ra_rate;
pub use sucre::{
    one_shot_resolution, simulate_ra, sucre_block, Decision, DeviceOutcome, RaMetrics, RaProtocol, RaSimConfig, ResolutionStats, SucreBlock, SucreMode, SucreSetup,
};

/// Orthogonal pilot sequences shared by all devices of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotPool {
    size: usize,
}

impl PilotPool {
    pub fn new(size: usize) -> Result<Self> {
        if size < 1 {
            return Err(Error::invalid("pilots", "need at least one pilot"));
        }
        Ok(PilotPool { size })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.size)
    }
}

/// Large-scale gain `β` and UL transmit power `ρ` of one device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaDevice {
    pub pathloss: f64,
    pub ul_power: f64,
}

impl RaDevice {
    /// `ρβ`, the power a device contributes to a pilot after channel hardening.
    pub fn rx_power(&self) -> f64 {
        self.ul_power * self.pathloss
    }

    /// `ρβ²`, the coherent power seen by MRC in a contaminated estimate.
    pub fn coherent_power(&self) -> f64 {
        self.ul_power * self.pathloss * self.pathloss
    }
}

/// Devices spread uniformly over an annulus around the BS.
///
/// The gain is normalised to 1 at the outer radius, `β = (d / r_out)^(−κ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub inner_m: f64,
    pub outer_m: f64,
    pub pathloss_exponent: f64,
}

impl Default for Annulus {
    fn default() -> Self {
        Annulus {
            inner_m: 35.0,
            outer_m: 250.0,
            pathloss_exponent: 3.8,
        }
    }
}

impl Annulus {
    pub fn validate(&self) -> Result<()> {
        if !(self.inner_m > 0.0 && self.outer_m > self.inner_m && self.outer_m.is_finite()) {
            return Err(Error::invalid("population.annulus", "need 0 < inner radius < outer radius"));
        }
        if !(self.pathloss_exponent > 0.0 && self.pathloss_exponent.is_finite()) {
            return Err(Error::invalid("population.annulus.pathloss_exponent", "must be positive"));
        }
        Ok(())
    }

    pub fn sample_pathloss<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (a, b) = (self.inner_m * self.inner_m, self.outer_m * self.outer_m);
        let d = rng.random_range(a..b).sqrt();
        (d / self.outer_m).powf(-self.pathloss_exponent)
    }
}

/// Devices that may become active, each independently per access block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaPopulation {
    activation_prob: f64,
    devices: Vec<RaDevice>,
}

impl RaPopulation {
    pub fn new(activation_prob: f64, devices: Vec<RaDevice>) -> Result<Self> {
        if !(0.0..=1.0).contains(&activation_prob) {
            return Err(Error::invalid("population.activation_prob", "must lie in [0, 1]"));
        }
        if devices.is_empty() {
            return Err(Error::invalid("population.devices", "need at least one device"));
        }
        if devices
            .iter()
            .any(|d| !(d.pathloss > 0.0 && d.pathloss.is_finite() && d.ul_power > 0.0 && d.ul_power.is_finite()))
        {
            return Err(Error::invalid("population.devices", "path loss and UL power must be positive"));
        }
        Ok(RaPopulation {
            activation_prob,
            devices,
        })
    }

    /// `k0` devices on `geometry`, all transmitting with the power that gives a
    /// cell-edge device the received SNR `edge_snr_db` (unit noise).
    pub fn annulus<R: Rng + ?Sized>(
        k0: usize,
        activation_prob: f64,
        geometry: &Annulus,
        edge_snr_db: f64,
        rng: &mut R,
    ) -> Result<Self> {
        geometry.validate()?;
        if k0 < 1 {
            return Err(Error::invalid("population.total_devices", "need at least one device"));
        }
        let ul_power = crate::stats::db_to_linear(edge_snr_db);
        let devices = (0..k0)
            .map(|_| RaDevice {
                pathloss: geometry.sample_pathloss(rng),
                ul_power,
            })
            .collect();
        Self::new(activation_prob, devices)
    }

    pub fn total_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn activation_prob(&self) -> f64 {
        self.activation_prob
    }

    pub fn devices(&self) -> &[RaDevice] {
        &self.devices
    }

    /// Offered load `K₀·P_a / P_p`.
    pub fn load(&self, pool: &PilotPool) -> f64 {
        self.total_devices() as f64 * self.activation_prob / pool.size() as f64
    }
}
