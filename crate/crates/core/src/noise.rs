//! Quasi-static noise models: optical spectral diffusion and ground-state
//! spin dephasing.
//!
//! Both are zero-mean Gaussian detunings frozen within a shot and resampled
//! between shots. Averages can be taken deterministically (Gauss-Hermite)
//! or by seeded Monte Carlo; per-realization counter streams make the
//! realization -> sample mapping order-independent.

use crate::quad::{self, QuadError};
use crate::rng::RngStream;

/// Domain tags keeping optical and spin noise streams disjoint.
const DOMAIN_OPTICAL: u64 = 1;
const DOMAIN_SPIN: u64 = 2;

/// Slow spectral diffusion of the optical transition frequency.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct GaussianDiffusion {
    /// Standard deviation of the optical detuning (rad/ns). Quoted
    /// user-facing as sigma/2pi in MHz.
    pub sigma: f64,
    pub seed: u64,
}

impl GaussianDiffusion {
    pub fn new(sigma: f64, seed: u64) -> Result<Self, QuadError> {
        if sigma < 0.0 {
            return Err(QuadError::NegativeSigma(sigma));
        }
        Ok(Self { sigma, seed })
    }

    /// The frozen detuning of realization `k` (rad/ns).
    pub fn detuning(&self, k: u64) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        self.sigma * RngStream::with_domain(self.seed, k, DOMAIN_OPTICAL).normal()
    }

    /// The first `n` realizations.
    pub fn sample_detunings(&self, n: usize) -> Vec<f64> {
        (0..n as u64).map(|k| self.detuning(k)).collect()
    }
}

/// Quasi-static fluctuation of the ground-state splitting (Overhauser-like).
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SpinNoise {
    /// Standard deviation of the splitting fluctuation (rad/ns).
    pub sigma_spin: f64,
    pub seed: u64,
}

impl SpinNoise {
    pub fn new(sigma_spin: f64, seed: u64) -> Result<Self, QuadError> {
        if sigma_spin < 0.0 {
            return Err(QuadError::NegativeSigma(sigma_spin));
        }
        Ok(Self { sigma_spin, seed })
    }

    pub fn detuning(&self, k: u64) -> f64 {
        if self.sigma_spin == 0.0 {
            return 0.0;
        }
        self.sigma_spin * RngStream::with_domain(self.seed, k, DOMAIN_SPIN).normal()
    }

    /// Dephasing time T2* = sqrt(2)/sigma_spin implied by the quasi-static
    /// Gaussian model.
    pub fn t2_star(&self) -> f64 {
        t2_star_from_sigma(self.sigma_spin)
    }
}

/// T2* = sqrt(2)/sigma for quasi-static Gaussian detuning noise.
pub fn t2_star_from_sigma(sigma_spin: f64) -> f64 {
    if sigma_spin == 0.0 {
        f64::INFINITY
    } else {
        std::f64::consts::SQRT_2 / sigma_spin
    }
}

/// Inverse of [`t2_star_from_sigma`].
pub fn sigma_from_t2_star(t2_star: f64) -> f64 {
    std::f64::consts::SQRT_2 / t2_star
}

/// Average of `f` over the Gaussian detuning distribution, by `nodes`-point
/// Gauss-Hermite quadrature (64 is plenty for the rates used here).
pub fn gauss_average(
    f: impl FnMut(f64) -> f64,
    sigma: f64,
    nodes: usize,
) -> Result<f64, QuadError> {
    quad::gaussian_average(f, sigma, nodes)
}

/// Ramsey fringe envelope exp(-(tau/T2*)^2): the exact average of
/// cos(delta tau) over quasi-static Gaussian delta with std sigma_spin,
/// since E[cos(d tau)] = exp(-sigma^2 tau^2 / 2) and T2* = sqrt(2)/sigma.
pub fn ramsey_dephasing_envelope(sigma_spin: f64, tau: f64) -> f64 {
    if sigma_spin == 0.0 {
        return 1.0;
    }
    (-(sigma_spin * tau).powi(2) / 2.0).exp()
}
