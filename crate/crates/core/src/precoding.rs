//! Downlink beamformers and the post-processing SNR/SINR they deliver.
//!
//! All precoders are unit norm and reported with their first non-negligible
//! entry rotated onto the positive real axis; the global phase never affects
//! `|hᵀ w|`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, CVector, ChannelRealization, CorrelationSpectrum};
use crate::error::{Error, Result};
use crate::estimation::{ChannelEstimate, FddFeedback, LinkBudget};

/// Gram matrices with a larger condition number are rejected by [`zf_pair`].
pub const ZF_CONDITION_LIMIT: f64 = 1e10;

const DEGENERATE_NORM: f64 = 1e-150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PrecoderScheme {
    Mrt,
    Sv,
    Zf,
    Fdd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub w: CVector,
    pub scheme: PrecoderScheme,
}

/// Linear post-processing SNR or SINR.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrSample {
    pub gamma: f64,
}

impl SnrSample {
    pub fn db(&self) -> f64 {
        10.0 * self.gamma.log10()
    }
}

fn canonical_phase(mut w: CVector) -> CVector {
    let peak = w.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(first) = w.iter().find(|z| z.norm() > 1e-12 * peak).copied() {
        let rot = first.conj() / first.norm();
        w.iter_mut().for_each(|z| *z *= rot);
    }
    w
}

/// Unit-norm matched filter `conj(x) / ‖x‖`.
fn matched(x: &CVector, scheme: PrecoderScheme) -> Result<Precoder> {
    let n = x.norm();
    if !(n > DEGENERATE_NORM) || !n.is_finite() {
        return Err(Error::DegenerateInput(format!("{scheme:?} precoder built from a zero-norm channel")));
    }
    Ok(Precoder {
        w: canonical_phase(x.map(|z| z.conj()).unscale(n)),
        scheme,
    })
}

/// Maximum-ratio transmission on the raw estimate.
pub fn mrt(est: &ChannelEstimate) -> Result<Precoder> {
    matched(&est.h_hat, PrecoderScheme::Mrt)
}

/// Matched filter on the estimate projected onto the channel subspace.
pub fn sv_precoder(est: &ChannelEstimate, spec: &CorrelationSpectrum) -> Result<Precoder> {
    if spec.rank() == 0 {
        return Err(Error::invalid("spectrum", "correlation spectrum has rank 0"));
    }
    let projected = spec.project(&est.h_hat);
    if projected.norm() <= 1e-12 * est.h_hat.norm() {
        return Err(Error::DegenerateInput("estimate is orthogonal to the channel subspace".into()));
    }
    matched(&projected, PrecoderScheme::Sv)
}

/// Matched filter on the channel reconstructed from fed-back coefficients.
pub fn fdd_precoder(fb: &FddFeedback, spec: &CorrelationSpectrum) -> Result<Precoder> {
    matched(&fb.reconstruct(spec), PrecoderScheme::Fdd)
}

/// `γ = (ρ/σ_n²) |hᵀ w|²`.
pub fn snr_dl(h: &ChannelRealization, w: &Precoder, budget: &LinkBudget) -> SnrSample {
    SnrSample {
        gamma: budget.snr() * h.h.dot(&w.w).norm_sqr(),
    }
}

/// Zero-forcing pair: `W = Ĥ* (Ĥᵀ Ĥ*)⁻¹` with `Ĥ = [ĥ₁ ĥ₂]`, columns normalised.
///
/// Each precoder is orthogonal to the other device's estimated channel,
/// `ĥ₂ᵀ w₁ = ĥ₁ᵀ w₂ = 0`.
pub fn zf_pair(est1: &ChannelEstimate, est2: &ChannelEstimate) -> Result<(Precoder, Precoder)> {
    let m = est1.h_hat.len();
    if est2.h_hat.len() != m {
        return Err(Error::invalid("estimates", "antenna counts differ"));
    }
    let mut h = CMatrix::zeros(m, 2);
    h.set_column(0, &est1.h_hat);
    h.set_column(1, &est2.h_hat);
    let h_conj = h.map(|z| z.conj());
    let gram = h.transpose() * &h_conj;

    // 2x2 Hermitian: eigenvalues from trace and determinant.
    let a = gram[(0, 0)].re;
    let d = gram[(1, 1)].re;
    let b = gram[(0, 1)];
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    let (lmax, lmin) = (mean + radius, mean - radius);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition <= ZF_CONDITION_LIMIT) {
        return Err(Error::IllConditioned {
            condition,
            limit: ZF_CONDITION_LIMIT,
        });
    }
    let det = gram[(0, 0)] * gram[(1, 1)] - gram[(0, 1)] * gram[(1, 0)];
    let inv = CMatrix::from_row_slice(2, 2, &[gram[(1, 1)], -gram[(0, 1)], -gram[(1, 0)], gram[(0, 0)]]).unscale(1.0) * (Complex64::new(1.0, 0.0) / det);
    let w = h_conj * inv;
    let col = |i: usize| -> Result<Precoder> {
        let c = w.column(i).into_owned();
        let n = c.norm();
        if !(n > DEGENERATE_NORM) {
            return Err(Error::DegenerateInput("zero-forcing column vanished".into()));
        }
        Ok(Precoder {
            w: canonical_phase(c.unscale(n)),
            scheme: PrecoderScheme::Zf,
        })
    };
    Ok((col(0)?, col(1)?))
}

/// SINR of device 1 when both streams are sent with power `split · ρ`:
/// `γ₁ = split ρ |h₁ᵀ w₁|² / (σ_n² + split ρ |h₁ᵀ w₂|²)`.
pub fn sinr_two_user(h1: &ChannelRealization, w1: &Precoder, w2: &Precoder, budget: &LinkBudget, power_split: f64) -> SnrSample {
    let p = power_split * budget.tx_power();
    let signal = p * h1.h.dot(&w1.w).norm_sqr();
    let interference = p * h1.h.dot(&w2.w).norm_sqr();
    SnrSample {
        gamma: signal / (budget.noise_var() + interference),
    }
}
