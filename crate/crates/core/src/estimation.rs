//! Channel state acquisition: uplink least-squares training (TDD), subspace
//! refinement with second-order statistics, and downlink training with analog
//! feedback (FDD).

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_gaussian, complex_gaussian_vector, CMatrix, CVector, ChannelRealization, CorrelationSpectrum};
use crate::error::{Error, Result};
use crate::stats::db_to_linear;

/// Transmit power and receiver noise variance. Their ratio is the pre-processing SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    tx_power: f64,
    noise_var: f64,
}

impl LinkBudget {
    pub fn new(tx_power: f64, noise_var: f64) -> Result<Self> {
        if !(tx_power > 0.0 && tx_power.is_finite()) {
            return Err(Error::invalid("tx_power", "must be positive and finite"));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::invalid("noise_var", "must be positive and finite"));
        }
        Ok(LinkBudget { tx_power, noise_var })
    }

    /// Unit noise variance and `tx_power = 10^(snr_db/10)`.
    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::new(db_to_linear(snr_db), 1.0)
    }

    pub fn tx_power(&self) -> f64 {
        self.tx_power
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Pre-processing SNR `ρ / σ_n²` (linear).
    pub fn snr(&self) -> f64 {
        self.tx_power / self.noise_var
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    UlTdd,
    DlFdd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingConfig {
    length: usize,
    mode: TrainingMode,
}

impl TrainingConfig {
    pub fn new(length: usize, mode: TrainingMode) -> Result<Self> {
        if length < 1 {
            return Err(Error::invalid("training.length", "need at least one pilot symbol"));
        }
        Ok(TrainingConfig { length, mode })
    }

    pub fn uplink(length: usize) -> Result<Self> {
        Self::new(length, TrainingMode::UlTdd)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn mode(&self) -> TrainingMode {
        self.mode
    }
}

/// How the least-squares estimate is simulated. Both produce identically
/// distributed estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LsSynthesis {
    /// Add `CN(0, σ_n²/(tρ))` noise to each antenna directly.
    #[default]
    NoiseShortcut,
    /// Build the received pilot block `Y_t` and correlate it with the pilot.
    ExplicitPilots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub h_hat: CVector,
    /// Variance of the estimation error on each antenna coefficient.
    pub per_coeff_noise_var: f64,
}

impl ChannelEstimate {
    /// An estimate known to be exact.
    pub fn perfect(h: &ChannelRealization) -> Self {
        ChannelEstimate {
            h_hat: h.h.clone(),
            per_coeff_noise_var: 0.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ChannelEstimate {
            h_hat: self.h_hat.scale(factor),
            per_coeff_noise_var: self.per_coeff_noise_var * factor * factor,
        }
    }
}

/// Constant-modulus pilot of length `t` with `p pᴴ = t` (a Zadoff-Chu style chirp).
pub fn pilot_sequence(t: usize) -> Vec<Complex64> {
    let t_f = t as f64;
    (0..t)
        .map(|k| Complex64::from_polar(1.0, -std::f64::consts::PI * (k * k) as f64 / t_f))
        .collect()
}

/// Uplink least-squares estimate from `t` pilot symbols at power `ρ`.
///
/// The estimate is `ĥ = h + e` with `e ~ CN(0, σ_n²/(tρ) I)`.
pub fn ls_estimate<R: Rng + ?Sized>(
    h: &ChannelRealization,
    cfg: &TrainingConfig,
    budget: &LinkBudget,
    synthesis: LsSynthesis,
    rng: &mut R,
) -> Result<ChannelEstimate> {
    if cfg.mode != TrainingMode::UlTdd {
        return Err(Error::invalid("training.mode", "least-squares estimation needs uplink TDD training"));
    }
    let t = cfg.length;
    if t < 1 {
        return Err(Error::invalid("training.length", "need at least one pilot symbol"));
    }
    let err_var = budget.noise_var() / (t as f64 * budget.tx_power());
    let h_hat = match synthesis {
        LsSynthesis::NoiseShortcut => &h.h + complex_gaussian_vector(rng, h.num_antennas(), err_var),
        LsSynthesis::ExplicitPilots => {
            let p = pilot_sequence(t);
            let m = h.num_antennas();
            let amp = budget.tx_power().sqrt();
            // Y_t = √ρ h p + N, then ĥ = Y_t pᴴ / (t √ρ).
            let mut y = CMatrix::zeros(m, t);
            for (j, pj) in p.iter().enumerate() {
                for i in 0..m {
                    y[(i, j)] = h.h[i] * pj * amp + complex_gaussian(rng, budget.noise_var());
                }
            }
            let p_h = CVector::from_iterator(t, p.iter().map(|z| z.conj()));
            (y * p_h).unscale(t as f64 * amp)
        }
    };
    Ok(ChannelEstimate {
        h_hat,
        per_coeff_noise_var: err_var,
    })
}

/// Projects an estimate onto the channel subspace `span(V)`, discarding the
/// noise that lies outside it.
pub fn sv_refine(est: &ChannelEstimate, spec: &CorrelationSpectrum) -> Result<ChannelEstimate> {
    if spec.rank() == 0 {
        return Err(Error::invalid("spectrum", "correlation spectrum has rank 0"));
    }
    Ok(ChannelEstimate {
        h_hat: spec.project(&est.h_hat),
        per_coeff_noise_var: est.per_coeff_noise_var,
    })
}

/// Coefficients of the downlink channel on the `N_s` strongest eigen-directions,
/// as seen by the base station after DL training and analog UL feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct FddFeedback {
    pub beta_hat: CVector,
    num_svs: usize,
}

impl FddFeedback {
    pub fn num_svs(&self) -> usize {
        self.num_svs
    }

    /// Symbols consumed: one DL pilot and one UL feedback symbol per coefficient.
    pub fn overhead_symbols(&self) -> usize {
        2 * self.num_svs
    }

    /// Reconstructed channel `V_{N_s} β̂`.
    pub fn reconstruct(&self, spec: &CorrelationSpectrum) -> CVector {
        spec.basis().columns(0, self.num_svs) * &self.beta_hat
    }
}

/// DL pilots along the `N_s` strongest singular vectors followed by analog feedback.
///
/// The true coefficients are `β = V_{N_s}ᴴ h`. Each fed-back coefficient carries
/// independent DL estimation noise and UL feedback noise, both `CN(0, σ_n²/ρ)`.
pub fn fdd_train_feedback<R: Rng + ?Sized>(
    h_dl: &ChannelRealization,
    spec: &CorrelationSpectrum,
    num_svs: usize,
    budget: &LinkBudget,
    rng: &mut R,
) -> Result<FddFeedback> {
    if num_svs < 1 {
        return Err(Error::invalid("num_svs", "need at least one singular vector"));
    }
    if num_svs > spec.rank() {
        return Err(Error::invalid(
            "num_svs",
            format!("{num_svs} exceeds the correlation rank {}", spec.rank()),
        ));
    }
    let v = spec.basis().columns(0, num_svs);
    let mut beta_hat = v.ad_mul(&h_dl.h);
    let per_source = budget.noise_var() / budget.tx_power();
    for b in beta_hat.iter_mut() {
        let e_dl = complex_gaussian(rng, per_source);
        let e_fb = complex_gaussian(rng, per_source);
        *b += e_dl + e_fb;
    }
    Ok(FddFeedback { beta_hat, num_svs })
}
