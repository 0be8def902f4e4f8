//! Correlated channel and estimation-error sampling (Kronecker model).
//!
//! The estimation error of hop `k` is `ΔH = σ_e · Σ^{1/2} W Ψ^{1/2}` with `W`
//! i.i.d. `CN(0, 1)`, `Σ` the receive-side (row) correlation and `Ψ` the
//! transmit-side (column) correlation, both unit-diagonal. Estimated channels
//! are drawn with the same Kronecker shape scaled by `1 − σ_e²`, so every entry
//! of `H = H̄ + ΔH` has unit variance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, c, CMatrix};
use crate::{Error, Result};

/// Exponential correlation profile `[R]_{i,j} = rho^{|i-j|}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationSpec {
    pub rho: f64,
    pub dim: usize,
}

impl CorrelationSpec {
    pub fn new(rho: f64, dim: usize) -> Self {
        Self { rho, dim }
    }
}

pub fn exponential_correlation(spec: CorrelationSpec) -> Result<CMatrix> {
    if !(0.0..1.0).contains(&spec.rho) {
        return Err(Error::Parameter(format!(
            "correlation decay {} outside [0, 1)",
            spec.rho
        )));
    }
    if spec.dim == 0 {
        return Err(Error::Parameter("correlation dimension must be positive".into()));
    }
    // powi(0) == 1 also for rho == 0, giving the identity.
    Ok(DMatrix::from_fn(spec.dim, spec.dim, |i, j| {
        linalg::cr(spec.rho.powi(i.abs_diff(j) as i32))
    }))
}

/// Error statistics of one hop. `sigma` is `M x M`, `psi` is `N x N`.
#[derive(Clone, Debug)]
pub struct HopErrorModel {
    sigma: CMatrix,
    psi: CMatrix,
    sigma_e_sq: f64,
    sigma_sqrt: CMatrix,
    psi_sqrt: CMatrix,
}

impl HopErrorModel {
    pub fn new(sigma: CMatrix, psi: CMatrix, sigma_e_sq: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&sigma_e_sq) {
            return Err(Error::Parameter(format!(
                "estimation error variance {sigma_e_sq} outside [0, 1)"
            )));
        }
        for (name, m) in [("row correlation", &sigma), ("column correlation", &psi)] {
            if !m.is_square() || m.nrows() == 0 {
                return Err(Error::Dimension(format!("{name} must be square and non-empty")));
            }
            if !linalg::is_psd(m, 1e-10) {
                return Err(Error::Parameter(format!("{name} is not Hermitian PSD")));
            }
            if m.diagonal().iter().any(|d| (d.re - 1.0).abs() > 1e-12 || d.im.abs() > 1e-12) {
                return Err(Error::Parameter(format!("{name} must have unit diagonal")));
            }
        }
        let sigma_sqrt = linalg::psd_sqrt(&sigma);
        let psi_sqrt = linalg::psd_sqrt(&psi);
        Ok(Self {
            sigma,
            psi,
            sigma_e_sq,
            sigma_sqrt,
            psi_sqrt,
        })
    }

    /// Model built from exponential profiles (`beta` on the receive side,
    /// `alpha` on the transmit side).
    pub fn exponential(m_rx: usize, n_tx: usize, beta: f64, alpha: f64, sigma_e_sq: f64) -> Result<Self> {
        Self::new(
            exponential_correlation(CorrelationSpec::new(beta, m_rx))?,
            exponential_correlation(CorrelationSpec::new(alpha, n_tx))?,
            sigma_e_sq,
        )
    }

    pub fn sigma(&self) -> &CMatrix {
        &self.sigma
    }

    pub fn psi(&self) -> &CMatrix {
        &self.psi
    }

    pub fn sigma_e_sq(&self) -> f64 {
        self.sigma_e_sq
    }

    pub fn m_rx(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn n_tx(&self) -> usize {
        self.psi.nrows()
    }

    /// Receive-side error covariance handed to the designer, `σ_e² Σ`.
    pub fn effective_sigma(&self) -> CMatrix {
        &self.sigma * linalg::cr(self.sigma_e_sq)
    }
}

/// `CN(0, 1)` entries: real and imaginary parts i.i.d. `N(0, 1/2)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(s * re, s * im)
    })
}

/// `scale · L W R` with `W` i.i.d. `CN(0, 1)`; `L` and `R` are Hermitian roots.
pub fn kronecker_sample<R: Rng + ?Sized>(
    left_sqrt: &CMatrix,
    right_sqrt: &CMatrix,
    scale: f64,
    rng: &mut R,
) -> CMatrix {
    let w = complex_gaussian(left_sqrt.ncols(), right_sqrt.nrows(), rng);
    left_sqrt * w * right_sqrt * linalg::cr(scale)
}

pub fn sample_error<R: Rng + ?Sized>(model: &HopErrorModel, rng: &mut R) -> CMatrix {
    kronecker_sample(&model.sigma_sqrt, &model.psi_sqrt, model.sigma_e_sq.sqrt(), rng)
}

/// Estimated channel with entry covariance `(1 − σ_e²) Σ ⊗ Ψᵀ`.
pub fn sample_estimated_channel<R: Rng + ?Sized>(model: &HopErrorModel, rng: &mut R) -> CMatrix {
    kronecker_sample(
        &model.sigma_sqrt,
        &model.psi_sqrt,
        (1.0 - model.sigma_e_sq).sqrt(),
        rng,
    )
}

pub fn draw_true_channel<R: Rng + ?Sized>(
    hbar: &CMatrix,
    model: &HopErrorModel,
    rng: &mut R,
) -> Result<CMatrix> {
    linalg::expect_shape(hbar, model.m_rx(), model.n_tx(), "estimated channel")?;
    Ok(hbar + sample_error(model, rng))
}

/// Independent random stream for a work item identified by `ids` under a
/// master `seed`. Streams for distinct id tuples do not overlap.
pub fn stream_rng(seed: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(mix_ids(ids));
    rng
}

fn mix_ids(ids: &[u64]) -> u64 {
    // splitmix64 folding
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &id in ids {
        h ^= id.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h = z ^ (z >> 31);
    }
    h
}
