//! Exact second-order statistics of the relay chain.
//!
//! For precoders `P_1..P_K` the received covariances obey
//!
//! ```text
//! R_0 = I_N
//! R_k = H̄_k P_k R_{k-1} P_kᴴ H̄_kᴴ + Tr(P_k R_{k-1} P_kᴴ Ψ_k) Σ_k + σ_k² I
//! ```
//!
//! where `Σ_k`, `Ψ_k` are the effective error covariances of hop `k` (the
//! receive side already scaled by `σ_e²`). The MSE matrix of an equalizer `G`
//! averages over data, estimation errors and noise:
//!
//! ```text
//! Φ(G) = G R_K Gᴴ + I − Tᴴ Gᴴ − G T,    T = H̄_K P_K ⋯ H̄_1 P_1
//! ```

use serde::{Deserialize, Serialize};

use crate::linalg::{self, cr, CMatrix};
use crate::{Error, Result};

/// One hop: estimated channel `H̄` (`m_rx x n_tx`), effective error
/// covariances, receiver noise variance and transmit power budget.
#[derive(Clone, Debug, PartialEq)]
pub struct HopModel {
    pub m_rx: usize,
    pub n_tx: usize,
    pub hbar: CMatrix,
    pub err_sigma: CMatrix,
    pub err_psi: CMatrix,
    pub noise_var: f64,
    pub power_budget: f64,
}

impl HopModel {
    pub fn new(
        hbar: CMatrix,
        err_sigma: CMatrix,
        err_psi: CMatrix,
        noise_var: f64,
        power_budget: f64,
    ) -> Result<Self> {
        let (m_rx, n_tx) = hbar.shape();
        linalg::expect_shape(&err_sigma, m_rx, m_rx, "receive error covariance")?;
        linalg::expect_shape(&err_psi, n_tx, n_tx, "transmit error covariance")?;
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::Parameter(format!("noise variance {noise_var} must be positive")));
        }
        if !(power_budget > 0.0 && power_budget.is_finite()) {
            return Err(Error::Parameter(format!("power budget {power_budget} must be positive")));
        }
        for (name, m) in [("receive error covariance", &err_sigma), ("transmit error covariance", &err_psi)] {
            if !linalg::is_psd(m, 1e-10) {
                return Err(Error::Parameter(format!("{name} is not Hermitian PSD")));
            }
        }
        Ok(Self {
            m_rx,
            n_tx,
            hbar,
            err_sigma,
            err_psi,
            noise_var,
            power_budget,
        })
    }

    /// Perfect-CSI hop with the same estimate.
    pub fn new_perfect(hbar: CMatrix, noise_var: f64, power_budget: f64) -> Result<Self> {
        let (m, n) = hbar.shape();
        Self::new(hbar, linalg::zeros(m, m), linalg::zeros(n, n), noise_var, power_budget)
    }

    /// The same hop with the estimation error ignored.
    pub fn without_errors(&self) -> Self {
        Self {
            err_sigma: linalg::zeros(self.m_rx, self.m_rx),
            err_psi: linalg::zeros(self.n_tx, self.n_tx),
            ..self.clone()
        }
    }

    pub fn is_perfect_csi(&self) -> bool {
        linalg::max_abs(&self.err_sigma) == 0.0 || linalg::max_abs(&self.err_psi) == 0.0
    }
}

/// Ordered hops from source to destination carrying `n_streams` data streams.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainModel {
    hops: Vec<HopModel>,
    n_streams: usize,
}

impl ChainModel {
    pub fn new(hops: Vec<HopModel>, n_streams: usize) -> Result<Self> {
        if hops.is_empty() {
            return Err(Error::Parameter("a chain needs at least one hop".into()));
        }
        if n_streams == 0 {
            return Err(Error::Parameter("stream count must be positive".into()));
        }
        for (k, hop) in hops.iter().enumerate() {
            if hop.m_rx < n_streams || hop.n_tx < n_streams {
                return Err(Error::Dimension(format!(
                    "hop {}: {}x{} antennas cannot carry {n_streams} streams",
                    k + 1,
                    hop.m_rx,
                    hop.n_tx
                )));
            }
        }
        Ok(Self { hops, n_streams })
    }

    pub fn hops(&self) -> &[HopModel] {
        &self.hops
    }

    pub fn hop(&self, k: usize) -> &HopModel {
        &self.hops[k]
    }

    pub fn num_hops(&self) -> usize {
        self.hops.len()
    }

    pub fn n_streams(&self) -> usize {
        self.n_streams
    }

    /// Columns of the precoder of hop `k` (0-based): `N` for the source,
    /// otherwise the receive antennas of the previous node.
    pub fn input_dim(&self, k: usize) -> usize {
        if k == 0 {
            self.n_streams
        } else {
            self.hops[k - 1].m_rx
        }
    }

    pub fn output_dim(&self) -> usize {
        self.hops.last().map(|h| h.m_rx).unwrap_or(0)
    }

    /// The estimated-CSI-only view of the chain.
    pub fn without_errors(&self) -> Self {
        Self {
            hops: self.hops.iter().map(HopModel::without_errors).collect(),
            n_streams: self.n_streams,
        }
    }

    pub fn is_perfect_csi(&self) -> bool {
        self.hops.iter().all(HopModel::is_perfect_csi)
    }
}

/// Precoder of the source followed by the relay forwarding matrices.
/// `p[k]` is `n_tx(k) x input_dim(k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecoderSet {
    pub p: Vec<CMatrix>,
}

impl PrecoderSet {
    pub fn new(p: Vec<CMatrix>) -> Self {
        Self { p }
    }

    pub fn zeros(chain: &ChainModel) -> Self {
        Self {
            p: (0..chain.num_hops())
                .map(|k| linalg::zeros(chain.hop(k).n_tx, chain.input_dim(k)))
                .collect(),
        }
    }

    pub fn validate(&self, chain: &ChainModel) -> Result<()> {
        if self.p.len() != chain.num_hops() {
            return Err(Error::Dimension(format!(
                "{} precoders for {} hops",
                self.p.len(),
                chain.num_hops()
            )));
        }
        for (k, p) in self.p.iter().enumerate() {
            linalg::expect_shape(p, chain.hop(k).n_tx, chain.input_dim(k), &format!("precoder {}", k + 1))?;
        }
        Ok(())
    }

    /// Largest entry-wise modulus difference.
    pub fn max_difference(&self, other: &Self) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| if a.shape() == b.shape() { linalg::max_abs(&(a - b)) } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }
}

/// MSE matrix with its diagonal and (descending) spectrum.
#[derive(Clone, Debug)]
pub struct MseReport {
    pub phi: CMatrix,
    pub diag: Vec<f64>,
    pub eigs: Vec<f64>,
}

impl MseReport {
    pub fn from_phi(phi: &CMatrix) -> Self {
        let phi = linalg::hermitize(phi);
        let diag = linalg::real_diagonal(&phi);
        let eigs = linalg::herm_eigenvalues(&phi);
        Self { phi, diag, eigs }
    }

    pub fn trace(&self) -> f64 {
        self.diag.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchurClass {
    /// Balances streams; optimal `Θ` has a constant diagonal.
    Convex,
    /// Favors strong streams; optimal `Θ` is diagonal.
    Concave,
}

/// Design criterion. Every value is minimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    MaxMse,
    SumMse,
    MutualInfo,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::MaxMse, Objective::SumMse, Objective::MutualInfo];

    pub fn schur_class(self) -> SchurClass {
        match self {
            Objective::MaxMse => SchurClass::Convex,
            // Sum-MSE does not depend on the rotation; it takes the diagonal route.
            Objective::SumMse | Objective::MutualInfo => SchurClass::Concave,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Objective::MaxMse => "max-mse",
            Objective::SumMse => "sum-mse",
            Objective::MutualInfo => "mutual-info",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }

    /// Objective as a function of the gains `γ_i ∈ [0, 1)` of `Θ = I − Φ_MSE`,
    /// assuming the rotation matching the objective's Schur class.
    pub fn reduced_value(self, gamma: &[f64]) -> f64 {
        let n = gamma.len() as f64;
        let sum: f64 = gamma.iter().sum();
        match self {
            Objective::MaxMse => 1.0 - sum / n,
            Objective::SumMse => n - sum,
            Objective::MutualInfo => gamma.iter().map(|g| (1.0 - g).ln()).sum(),
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `R_0, R_1, …, R_K` (`R_0 = I_N`).
pub fn rx_covariances(chain: &ChainModel, precoders: &PrecoderSet) -> Result<Vec<CMatrix>> {
    precoders.validate(chain)?;
    let mut out = Vec::with_capacity(chain.num_hops() + 1);
    out.push(linalg::identity(chain.n_streams()));
    for (hop, p) in chain.hops().iter().zip(&precoders.p) {
        let prev = out.last().expect("seeded with R_0");
        let tx = p * prev * p.adjoint();
        let hp = &hop.hbar * &tx * hop.hbar.adjoint();
        let leak = linalg::trace_re(&(&tx * &hop.err_psi));
        let r = hp + &hop.err_sigma * cr(leak) + linalg::identity(hop.m_rx) * cr(hop.noise_var);
        out.push(linalg::hermitize(&r));
    }
    Ok(out)
}

/// Transmit power of every hop, `Tr(P_k R_{k-1} P_kᴴ)`.
pub fn transmit_powers(chain: &ChainModel, precoders: &PrecoderSet) -> Result<Vec<f64>> {
    let r = rx_covariances(chain, precoders)?;
    Ok(precoders
        .p
        .iter()
        .zip(&r)
        .map(|(p, r_prev)| linalg::trace_re(&(p * r_prev * p.adjoint())))
        .collect())
}

/// `T = H̄_K P_K ⋯ H̄_1 P_1`.
pub fn chain_product(chain: &ChainModel, precoders: &PrecoderSet) -> Result<CMatrix> {
    precoders.validate(chain)?;
    let mut t = linalg::identity(chain.n_streams());
    for (hop, p) in chain.hops().iter().zip(&precoders.p) {
        t = &hop.hbar * p * t;
    }
    Ok(t)
}

pub fn mse_matrix(chain: &ChainModel, precoders: &PrecoderSet, g: &CMatrix) -> Result<MseReport> {
    linalg::expect_shape(g, chain.n_streams(), chain.output_dim(), "equalizer")?;
    let r = rx_covariances(chain, precoders)?;
    let t = chain_product(chain, precoders)?;
    let gt = g * &t;
    let phi = g * &r[chain.num_hops()] * g.adjoint() + linalg::identity(chain.n_streams())
        - gt.adjoint()
        - gt;
    Ok(MseReport::from_phi(&phi))
}

/// `G = Tᴴ R_K^{-1}`.
/// Scales every precoder, in hop order, so that `Tr(P_k R_{k-1} P_kᴴ) = P_k`.
pub fn scale_to_budgets(chain: &ChainModel, precoders: &PrecoderSet) -> Result<PrecoderSet> {
    precoders.validate(chain)?;
    let mut r_prev = linalg::identity(chain.n_streams());
    let mut out = Vec::with_capacity(chain.num_hops());
    for (hop, p) in chain.hops().iter().zip(&precoders.p) {
        let used = linalg::trace_re(&(p * &r_prev * p.adjoint()));
        if !(used > 0.0 && used.is_finite()) {
            return Err(Error::Numerical("precoder carries no power".into()));
        }
        let scaled = p * cr((hop.power_budget / used).sqrt());
        let tx = &scaled * &r_prev * scaled.adjoint();
        let leak = linalg::trace_re(&(&tx * &hop.err_psi));
        r_prev = linalg::hermitize(
            &(&hop.hbar * tx * hop.hbar.adjoint()
                + &hop.err_sigma * cr(leak)
                + linalg::identity(hop.m_rx) * cr(hop.noise_var)),
        );
        out.push(scaled);
    }
    Ok(PrecoderSet::new(out))
}

pub fn lmmse_equalizer(chain: &ChainModel, precoders: &PrecoderSet) -> Result<CMatrix> {
    let r = rx_covariances(chain, precoders)?;
    let t = chain_product(chain, precoders)?;
    let r_inv = linalg::pd_inverse(&r[chain.num_hops()])?;
    Ok(t.adjoint() * r_inv)
}

/// `Φ_MSE = I − Tᴴ R_K^{-1} T`, the MSE matrix at the LMMSE equalizer.
pub fn mse_matrix_lmmse(chain: &ChainModel, precoders: &PrecoderSet) -> Result<MseReport> {
    let r = rx_covariances(chain, precoders)?;
    let t = chain_product(chain, precoders)?;
    let r_inv = linalg::pd_inverse(&r[chain.num_hops()])?;
    let phi = linalg::identity(chain.n_streams()) - t.adjoint() * r_inv * &t;
    Ok(MseReport::from_phi(&phi))
}

/// Objective value (lower is better). Mutual information is reported as
/// `log det Φ`, the negated information rate.
pub fn objective_value(obj: Objective, report: &MseReport) -> Result<f64> {
    match obj {
        Objective::MaxMse => Ok(report.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        Objective::SumMse => Ok(report.diag.iter().sum()),
        Objective::MutualInfo => {
            if report.eigs.iter().any(|&e| e <= 0.0) {
                return Err(Error::Numerical(
                    "log-det objective needs a positive definite MSE matrix".into(),
                ));
            }
            Ok(report.eigs.iter().map(|e| e.ln()).sum())
        }
    }
}
