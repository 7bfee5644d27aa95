//! Sparse cluster channels and i.i.d. Rayleigh channels for a uniform linear array.
//!
//! A cluster channel is a sum of `N_P` propagation paths,
//! `h = Σ α_i s_i`, where `s_i` is the unit-norm steering vector of path `i`
//! and `α_i ~ CN(0, q_i)`. Path powers decay exponentially from the strongest
//! to the weakest path and are normalised so that `Σ q_i = M`, which makes
//! `E‖h‖² = M` exactly as for an i.i.d. Rayleigh channel.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Eigenvalues below this fraction of the largest one are treated as zero.
pub const EIGEN_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Draws one `CN(0, var)` sample.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Vector of independent `CN(0, var)` entries.
pub fn complex_gaussian_vector<R: Rng + ?Sized>(rng: &mut R, len: usize, var: f64) -> CVector {
    CVector::from_iterator(len, (0..len).map(|_| complex_gaussian(rng, var)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArrayGeometry {
    /// Uniform linear array with half-wavelength element spacing.
    #[default]
    UniformLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayConfig {
    num_antennas: usize,
    geometry: ArrayGeometry,
}

impl ArrayConfig {
    pub fn ula(num_antennas: usize) -> Result<Self> {
        if num_antennas == 0 {
            return Err(Error::invalid("num_antennas", "must be at least 1"));
        }
        Ok(ArrayConfig {
            num_antennas,
            geometry: ArrayGeometry::UniformLinear,
        })
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn geometry(&self) -> ArrayGeometry {
        self.geometry
    }

    /// Unit-norm steering vector towards `angle` (radians from broadside).
    ///
    /// Entry `m` is `exp(jπ m sin θ) / √M`.
    pub fn steering(&self, angle: f64) -> CVector {
        let m = self.num_antennas;
        let scale = 1.0 / (m as f64).sqrt();
        let step = Complex64::from_polar(1.0, PI * angle.sin());
        let mut entry = Complex64::new(scale, 0.0);
        CVector::from_iterator(
            m,
            (0..m).map(|_| {
                let e = entry;
                entry *= step;
                e
            }),
        )
    }
}

/// Sparse propagation environment: number of paths, power decay and angular support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    num_paths: usize,
    decay_db: f64,
    angle_range: (f64, f64),
}

impl ClusterModel {
    /// Paths with angles uniform on `[-π/2, π/2)`.
    pub fn new(num_paths: usize, decay_db: f64) -> Result<Self> {
        Self::with_angle_range(num_paths, decay_db, (-PI / 2.0, PI / 2.0))
    }

    pub fn with_angle_range(num_paths: usize, decay_db: f64, angle_range: (f64, f64)) -> Result<Self> {
        if num_paths == 0 {
            return Err(Error::invalid("num_paths", "must be at least 1"));
        }
        if !(decay_db >= 0.0 && decay_db.is_finite()) {
            return Err(Error::invalid("decay_db", format!("must be a finite value >= 0, got {decay_db}")));
        }
        let (lo, hi) = angle_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid("angle_range", format!("need lo < hi, got ({lo}, {hi})")));
        }
        Ok(ClusterModel {
            num_paths,
            decay_db,
            angle_range,
        })
    }

    pub fn num_paths(&self) -> usize {
        self.num_paths
    }

    pub fn decay_db(&self) -> f64 {
        self.decay_db
    }

    pub fn angle_range(&self) -> (f64, f64) {
        self.angle_range
    }

    /// True when there are more paths than antennas; the path steering vectors
    /// then cannot be linearly independent and the correlation rank saturates at `M`.
    pub fn exceeds_array(&self, array: &ArrayConfig) -> bool {
        self.num_paths > array.num_antennas()
    }

    /// Per-path mean powers: `q_i ∝ exp(-c (i-1))` with `q_1 / q_{N_P} = 10^(decay_db/10)`,
    /// scaled so that `Σ q_i = total`.
    pub fn path_powers(&self, total: f64) -> Vec<f64> {
        let n = self.num_paths;
        if n == 1 {
            return vec![total];
        }
        let c = self.decay_db / 10.0 * std::f64::consts::LN_10 / (n - 1) as f64;
        let raw: Vec<f64> = (0..n).map(|i| (-c * i as f64).exp()).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|q| q * total / sum).collect()
    }
}

/// One draw of the propagation paths: angles, mean powers and steering vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    angles: Vec<f64>,
    powers: Vec<f64>,
    /// `M × N_P`, column `i` is `s_i`.
    steering: CMatrix,
}

impl PathSet {
    /// Builds a path set from explicit angles and powers (sorted by the caller).
    pub fn from_parts(array: &ArrayConfig, angles: Vec<f64>, powers: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::invalid("num_paths", "must be at least 1"));
        }
        if angles.len() != powers.len() {
            return Err(Error::invalid("powers", "need one power per path"));
        }
        if powers.iter().any(|&q| !(q > 0.0 && q.is_finite())) {
            return Err(Error::invalid("powers", "path powers must be positive and finite"));
        }
        let m = array.num_antennas();
        let mut steering = CMatrix::zeros(m, angles.len());
        for (i, &a) in angles.iter().enumerate() {
            steering.set_column(i, &array.steering(a));
        }
        Ok(PathSet {
            angles,
            powers,
            steering,
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn steering(&self) -> &CMatrix {
        &self.steering
    }

    pub fn num_paths(&self) -> usize {
        self.angles.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.steering.nrows()
    }

    /// Channel for explicit fading coefficients: `h = Σ α_i s_i`.
    pub fn synthesize(&self, gains: &[Complex64]) -> ChannelRealization {
        assert_eq!(gains.len(), self.num_paths(), "one gain per path");
        let alpha = CVector::from_column_slice(gains);
        ChannelRealization {
            h: &self.steering * alpha,
        }
    }

    /// Analytic correlation matrix `R = Σ q_i s_i s_iᴴ`.
    pub fn correlation_matrix(&self) -> CMatrix {
        let a = self.weighted_steering();
        a.clone() * a.adjoint()
    }

    fn weighted_steering(&self) -> CMatrix {
        let mut a = self.steering.clone();
        for (i, q) in self.powers.iter().enumerate() {
            a.column_mut(i).scale_mut(q.sqrt());
        }
        a
    }
}

/// Draws path angles and assigns the exponentially decaying powers.
pub fn draw_paths<R: Rng + ?Sized>(model: &ClusterModel, array: &ArrayConfig, rng: &mut R) -> Result<PathSet> {
    if model.num_paths == 0 {
        return Err(Error::invalid("num_paths", "must be at least 1"));
    }
    let (lo, hi) = model.angle_range;
    let angles: Vec<f64> = (0..model.num_paths).map(|_| rng.random_range(lo..hi)).collect();
    let powers = model.path_powers(array.num_antennas() as f64);
    PathSet::from_parts(array, angles, powers)
}

/// One channel vector for a single-antenna device.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: CVector,
}

impl ChannelRealization {
    pub fn new(h: CVector) -> Self {
        ChannelRealization { h }
    }

    pub fn num_antennas(&self) -> usize {
        self.h.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.h.norm_squared()
    }
}

/// `h = Σ α_i s_i` with independent `α_i ~ CN(0, q_i)`.
pub fn realize_channel<R: Rng + ?Sized>(paths: &PathSet, rng: &mut R) -> ChannelRealization {
    let gains: Vec<Complex64> = paths.powers.iter().map(|&q| complex_gaussian(rng, q)).collect();
    paths.synthesize(&gains)
}

/// Channel with i.i.d. `CN(0, 1)` entries.
pub fn realize_iid<R: Rng + ?Sized>(array: &ArrayConfig, rng: &mut R) -> ChannelRealization {
    ChannelRealization {
        h: complex_gaussian_vector(rng, array.num_antennas(), 1.0),
    }
}

/// Eigen-structure `R = V Λ Vᴴ` of a path set's correlation matrix.
///
/// Columns of `V` are ordered by non-increasing eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSpectrum {
    basis: CMatrix,
    eigenvalues: Vec<f64>,
}

impl CorrelationSpectrum {
    /// Builds a spectrum from an orthonormal basis and matching eigenvalues.
    pub fn from_parts(basis: CMatrix, eigenvalues: Vec<f64>) -> Result<Self> {
        if basis.ncols() != eigenvalues.len() {
            return Err(Error::invalid("eigenvalues", "need one eigenvalue per basis column"));
        }
        Ok(CorrelationSpectrum { basis, eigenvalues })
    }

    /// Orthonormal `M × r` basis `V`.
    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn num_antennas(&self) -> usize {
        self.basis.nrows()
    }

    /// `V Λ Vᴴ`.
    pub fn correlation(&self) -> CMatrix {
        let mut scaled = self.basis.clone();
        for (i, &l) in self.eigenvalues.iter().enumerate() {
            scaled.column_mut(i).scale_mut(l);
        }
        scaled * self.basis.adjoint()
    }

    /// Orthogonal projector `V Vᴴ` onto the channel subspace.
    pub fn projector(&self) -> CMatrix {
        &self.basis * self.basis.adjoint()
    }

    /// Coefficients `Vᴴ x` of `x` in the eigenbasis.
    pub fn coefficients(&self, x: &CVector) -> CVector {
        self.basis.ad_mul(x)
    }

    /// `V Vᴴ x`.
    pub fn project(&self, x: &CVector) -> CVector {
        &self.basis * self.coefficients(x)
    }

    /// The `n` strongest eigen-directions (all of them if `n >= rank`).
    pub fn leading(&self, n: usize) -> CorrelationSpectrum {
        let n = n.min(self.rank());
        CorrelationSpectrum {
            basis: self.basis.columns(0, n).into_owned(),
            eigenvalues: self.eigenvalues[..n].to_vec(),
        }
    }
}

/// Exact second-order statistics of a path set.
///
/// The correlation matrix is `S Q Sᴴ` with `S` the steering matrix, so its
/// range lies in `span(S)`. With the thin QR factorisation `S = Q_s T`, the
/// eigenproblem reduces to the `N_P × N_P` Hermitian matrix `T Q Tᴴ`, whose
/// eigenvectors are mapped back through `Q_s`. The basis stays orthonormal to
/// machine precision even when some eigenvalues are tiny.
pub fn correlation_spectrum(paths: &PathSet) -> CorrelationSpectrum {
    let s = &paths.steering;
    let m = s.nrows();
    let p = s.ncols();
    if p <= m {
        if let Some(spec) = gram_spectrum(paths) {
            return spec;
        }
    }
    let (q_s, t) = if p <= m {
        let qr = s.clone().qr();
        (qr.q(), qr.r())
    } else {
        // More paths than antennas: the subspace is all of C^M.
        (CMatrix::identity(m, m), s.clone())
    };
    let mut tq = t.clone();
    for (i, q) in paths.powers.iter().enumerate() {
        tq.column_mut(i).scale_mut(*q);
    }
    let (u, eigenvalues) = sorted_eigen(&tq * t.adjoint());
    CorrelationSpectrum {
        basis: q_s * u,
        eigenvalues,
    }
}

/// Eigenvectors of a Hermitian matrix with eigenvalues above tolerance, largest first.
fn sorted_eigen(mut small: CMatrix) -> (CMatrix, Vec<f64>) {
    // Enforce exact Hermitian symmetry before the eigensolver.
    small = (&small + small.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let max = order.first().map_or(0.0, |&i| eig.eigenvalues[i]).max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > EIGEN_RELATIVE_TOLERANCE * max && eig.eigenvalues[i] > 0.0)
        .collect();
    let mut u = CMatrix::zeros(eig.eigenvectors.nrows(), kept.len());
    for (j, &i) in kept.iter().enumerate() {
        u.set_column(j, &eig.eigenvectors.column(i));
    }
    (u, kept.iter().map(|&i| eig.eigenvalues[i]).collect())
}

/// Fast path through the `N_P × N_P` Gram matrix `AᴴA` with `A = S·diag(√q)`.
///
/// Eigenvectors of `AAᴴ` are `A u / √λ`. When the kept spectrum spans more
/// than three decades the result is re-orthonormalised with one Cholesky pass;
/// `None` when that fails and the QR route is needed.
fn gram_spectrum(paths: &PathSet) -> Option<CorrelationSpectrum> {
    let m = paths.num_antennas();
    let p = paths.num_paths();
    let sines: Vec<f64> = paths.angles.iter().map(|a| a.sin()).collect();
    let mut gram = CMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let dot = if i == j { Complex64::new(1.0, 0.0) } else { ula_inner(m, PI * (sines[j] - sines[i])) };
            gram[(i, j)] = dot * (paths.powers[i] * paths.powers[j]).sqrt();
        }
    }
    let (mut u, eigenvalues) = sorted_eigen(gram);
    for (i, q) in paths.powers.iter().enumerate() {
        u.row_mut(i).scale_mut(q.sqrt());
    }
    for (j, l) in eigenvalues.iter().enumerate() {
        u.column_mut(j).unscale_mut(l.sqrt());
    }
    let mut v = &paths.steering * u;
    let spread = eigenvalues.last()? / eigenvalues[0];
    if spread < 1e-3 {
        let chol = (v.adjoint() * &v).cholesky()?;
        v = chol.l().solve_lower_triangular(&v.adjoint())?.adjoint();
    }
    Some(CorrelationSpectrum { basis: v, eigenvalues })
}

/// `s(u₁)ᴴ s(u₂)` for ULA steering vectors with phase step `d = π(u₂ − u₁)`.
fn ula_inner(m: usize, d: f64) -> Complex64 {
    let half = (0.5 * d).sin();
    if half.abs() < 1e-6 {
        // Near the aliasing points the Dirichlet ratio loses precision.
        return (0..m).map(|k| Complex64::from_polar(1.0, d * k as f64)).sum::<Complex64>() / m as f64;
    }
    let mf = m as f64;
    Complex64::from_polar((0.5 * mf * d).sin() / (mf * half), 0.5 * (mf - 1.0) * d)
}
