//! Closed-form structure of the robust transceiver.
//!
//! The precoders are reparametrized hop by hop,
//!
//! ```text
//! F_1 = P_1,   F_k = P_k K_{k-1}^{1/2} Π_{k-1}^{1/2} Q_{k-1}ᴴ
//! K_k = Tr(F_k F_kᴴ Ψ_k) Σ_k + σ_k² I
//! Π_k = K_k^{-1/2} H̄_k F_k F_kᴴ H̄_kᴴ K_k^{-1/2} + I
//! A_k = Q_k Π_k^{-1/2} K_k^{-1/2} H̄_k F_k
//! ```
//!
//! which decouples the power constraints (`Tr(F_k F_kᴴ) ≤ P_k`) and turns the
//! LMMSE error matrix into `I − A_1ᴴ⋯A_Kᴴ A_K⋯A_1`. When `Σ_k ∝ I` or
//! `Ψ_k ∝ I` the optimum is
//!
//! ```text
//! F_k = √ξ_k B_k^{-1/2} V_{k,N} Λ_{F_k} U_{k-1,N}ᴴ,   B_k = α_k P_k Ψ_k + σ_k² I
//! ```
//!
//! with `U_k, V_k` from the SVD of `(K_k/η_k)^{-1/2} H̄_k B_k^{-1/2}`,
//! `U_0 = U_Ω` and `Q_k = I`. Only the diagonal `Λ_{F_k}` is left open; it is
//! found by [`crate::power`].

use std::f64::consts::PI;

use crate::linalg::{self, c, cr, CMatrix};
use crate::mse::{self, ChainModel, HopModel, Objective, PrecoderSet, SchurClass};
use crate::power::{self, AllocationProblem, AllocationResult};
use crate::{Error, Result};

/// Relative Frobenius deviation below which a correlation counts as a
/// multiple of the identity.
pub const PROPORTIONALITY_TOL: f64 = 1e-9;

/// The reparametrized chain for a given precoder set (`Q_k = I`).
#[derive(Clone, Debug)]
pub struct TransformState {
    pub f: Vec<CMatrix>,
    pub k_f: Vec<CMatrix>,
    pub pi: Vec<CMatrix>,
    pub q: Vec<CMatrix>,
    pub a: Vec<CMatrix>,
}

impl TransformState {
    /// `Θ = A_1ᴴ⋯A_Kᴴ A_K⋯A_1`.
    pub fn theta(&self) -> CMatrix {
        let mut m = linalg::identity(self.a[0].ncols());
        for a in &self.a {
            m = a * m;
        }
        linalg::hermitize(&(m.adjoint() * m))
    }
}

/// Forward map `P_k → F_k` together with the derived `K`, `Π`, `A`.
pub fn transform_state(chain: &ChainModel, precoders: &PrecoderSet) -> Result<TransformState> {
    precoders.validate(chain)?;
    let k_hops = chain.num_hops();
    let mut state = TransformState {
        f: Vec::with_capacity(k_hops),
        k_f: Vec::with_capacity(k_hops),
        pi: Vec::with_capacity(k_hops),
        q: Vec::with_capacity(k_hops),
        a: Vec::with_capacity(k_hops),
    };
    // K_0^{1/2} Π_0^{1/2} = I_N
    let mut carry = linalg::identity(chain.n_streams());
    for (hop, p) in chain.hops().iter().zip(&precoders.p) {
        let f = p * &carry;
        let k_f = noise_plus_leak(hop, &f);
        let k_inv_sqrt = linalg::pd_inv_sqrt(&k_f)?;
        let whitened = &k_inv_sqrt * &hop.hbar * &f;
        let pi = linalg::hermitize(&(&whitened * whitened.adjoint() + linalg::identity(hop.m_rx)));
        let a = linalg::pd_inv_sqrt(&pi)? * &whitened;
        carry = linalg::psd_sqrt(&k_f) * linalg::psd_sqrt(&pi);
        state.f.push(f);
        state.k_f.push(k_f);
        state.pi.push(pi);
        state.q.push(linalg::identity(hop.m_rx));
        state.a.push(a);
    }
    Ok(state)
}

/// `K = Tr(F Fᴴ Ψ) Σ + σ² I`.
fn noise_plus_leak(hop: &HopModel, f: &CMatrix) -> CMatrix {
    let leak = linalg::trace_re(&(f * f.adjoint() * &hop.err_psi));
    linalg::hermitize(&(&hop.err_sigma * cr(leak) + linalg::identity(hop.m_rx) * cr(hop.noise_var)))
}

/// Inverse map `F_k → P_k` (with `Q_k = I`).
pub fn precoders_from_f(chain: &ChainModel, f: &[CMatrix]) -> Result<PrecoderSet> {
    if f.len() != chain.num_hops() {
        return Err(Error::Dimension(format!("{} F matrices for {} hops", f.len(), chain.num_hops())));
    }
    let mut p = Vec::with_capacity(f.len());
    let mut uncarry = linalg::identity(chain.n_streams());
    for (hop, fk) in chain.hops().iter().zip(f) {
        p.push(fk * &uncarry);
        let k_f = noise_plus_leak(hop, fk);
        let k_inv_sqrt = linalg::pd_inv_sqrt(&k_f)?;
        let whitened = &k_inv_sqrt * &hop.hbar * fk;
        let pi = linalg::hermitize(&(&whitened * whitened.adjoint() + linalg::identity(hop.m_rx)));
        uncarry = linalg::pd_inv_sqrt(&pi)? * k_inv_sqrt;
    }
    let set = PrecoderSet::new(p);
    set.validate(chain)?;
    Ok(set)
}

/// `α_k = Tr(Σ_k) / M_k`.
pub fn alpha_k(hop: &HopModel) -> f64 {
    linalg::trace_re(&hop.err_sigma) / hop.m_rx as f64
}

/// SVD of the whitened estimated channel of one hop.
#[derive(Clone, Debug)]
pub struct EffectiveHop {
    pub u: CMatrix,
    pub v: CMatrix,
    /// Singular values, descending.
    pub gains: Vec<f64>,
    pub alpha: f64,
    /// `B^{-1/2}`, `B = α P Ψ + σ² I`.
    pub b_inv_sqrt: CMatrix,
    /// `K / η` at the power boundary.
    pub k_over_eta: CMatrix,
}

impl EffectiveHop {
    pub fn leading_gains(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.gains.get(i).copied().unwrap_or(0.0)).collect()
    }
}

/// `B = α P Ψ + σ² I`.
pub fn transmit_weighting(hop: &HopModel) -> CMatrix {
    &hop.err_psi * cr(alpha_k(hop) * hop.power_budget) + linalg::identity(hop.n_tx) * cr(hop.noise_var)
}

/// `K/η` when it does not depend on the unknown allocation, i.e. when the
/// receive- or transmit-side error correlation is a multiple of the identity.
pub fn normalized_noise(hop: &HopModel) -> Result<CMatrix> {
    if linalg::identity_multiple(&hop.err_sigma, PROPORTIONALITY_TOL).is_some() {
        return Ok(linalg::identity(hop.m_rx));
    }
    if let Some(psi) = linalg::identity_multiple(&hop.err_psi, PROPORTIONALITY_TOL) {
        // Tr(F Fᴴ Ψ) = ψ P on the power boundary.
        let leak = psi * hop.power_budget;
        let eta = leak * alpha_k(hop) + hop.noise_var;
        let k = &hop.err_sigma * cr(leak) + linalg::identity(hop.m_rx) * cr(hop.noise_var);
        return Ok(k * cr(1.0 / eta));
    }
    Err(Error::StructureUnsupported {
        context: "error correlations are not proportional to identity on either side".into(),
    })
}

pub fn effective_hop_svd(hop: &HopModel) -> Result<EffectiveHop> {
    let k_over_eta = normalized_noise(hop)?;
    let b_inv_sqrt = linalg::pd_inv_sqrt(&transmit_weighting(hop))?;
    let whitened = linalg::pd_inv_sqrt(&k_over_eta)? * &hop.hbar * &b_inv_sqrt;
    let svd = linalg::svd_sorted(&whitened);
    Ok(EffectiveHop {
        u: svd.u,
        v: svd.v,
        gains: svd.s,
        alpha: alpha_k(hop),
        b_inv_sqrt,
        k_over_eta,
    })
}

/// Unitary with all entries of modulus `1/√n`: normalized Sylvester–Hadamard
/// for powers of two, otherwise the unitary DFT.
pub fn q_f_matrix(n: usize) -> CMatrix {
    assert!(n >= 1, "dimension must be positive");
    let scale = 1.0 / (n as f64).sqrt();
    if n.is_power_of_two() {
        CMatrix::from_fn(n, n, |i, j| {
            let sign = if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            cr(sign * scale)
        })
    } else {
        CMatrix::from_fn(n, n, |i, j| {
            let angle = -2.0 * PI * ((i * j) % n) as f64 / n as f64;
            c(scale * angle.cos(), scale * angle.sin())
        })
    }
}

/// Left rotation of `Θ`: equalizing for Schur-convex criteria, identity otherwise.
pub fn u_omega(obj: Objective, n: usize) -> CMatrix {
    match obj.schur_class() {
        SchurClass::Convex => q_f_matrix(n),
        SchurClass::Concave => linalg::identity(n),
    }
}

/// `ξ_k = σ² / (1 − α Tr[V_Nᴴ B^{-1/2} Ψ B^{-1/2} V_N Λ_F²])`.
pub fn xi_k(hop: &HopModel, eff: &EffectiveHop, lambda_f_k: &[f64]) -> Result<f64> {
    let n = lambda_f_k.len();
    let v_n = linalg::leading_columns(&eff.v, n);
    let shaped = v_n.adjoint() * &eff.b_inv_sqrt * &hop.err_psi * &eff.b_inv_sqrt * &v_n;
    let tau: f64 = lambda_f_k.iter().enumerate().map(|(i, f)| f * f * shaped[(i, i)].re).sum();
    let denominator = 1.0 - eff.alpha * tau;
    if !(denominator > 1e-12) {
        return Err(Error::InfeasibleScaling { denominator });
    }
    Ok(hop.noise_var / denominator)
}

/// `γ_i = Π_k f_{k,i}² h_{k,i}² / Π_k (f_{k,i}² h_{k,i}² + 1)`.
pub fn gamma_from_gains(f: &[Vec<f64>], h: &[Vec<f64>]) -> Vec<f64> {
    let powers: Vec<Vec<f64>> = f.iter().map(|fk| fk.iter().map(|v| v * v).collect()).collect();
    power::gamma_from_powers(&powers, h)
}

/// A complete structured transceiver.
#[derive(Clone, Debug)]
pub struct StructuredSolution {
    pub objective: Objective,
    /// `f_{k,i}`.
    pub lambda_f: Vec<Vec<f64>>,
    /// `h_{k,i}` for the first `N` modes of each hop.
    pub gains: Vec<Vec<f64>>,
    pub xi: Vec<f64>,
    pub u_omega: CMatrix,
    pub f: Vec<CMatrix>,
    pub precoders: PrecoderSet,
    pub equalizer: CMatrix,
    /// `γ_i`, index-aligned with the streams (not sorted).
    pub theta_spectrum: Vec<f64>,
    pub allocation: Option<AllocationSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationSummary {
    pub iterations: usize,
    pub converged: bool,
    pub reduced_objective: f64,
}

impl From<&AllocationResult> for AllocationSummary {
    fn from(r: &AllocationResult) -> Self {
        Self {
            iterations: r.iterations,
            converged: r.converged,
            reduced_objective: r.objective_value,
        }
    }
}

impl StructuredSolution {
    /// Objective evaluated through the exact MSE matrix of the recovered
    /// precoders.
    pub fn objective_value(&self, chain: &ChainModel) -> Result<f64> {
        mse::objective_value(self.objective, &mse::mse_matrix_lmmse(chain, &self.precoders)?)
    }

    /// Objective from the stream gains alone.
    pub fn reduced_objective(&self) -> f64 {
        self.objective.reduced_value(&self.theta_spectrum)
    }
}

fn hop_context(k: usize, err: Error) -> Error {
    match err {
        Error::StructureUnsupported { context } => Error::StructureUnsupported {
            context: format!("hop {}: {context}", k + 1),
        },
        other => other,
    }
}

pub fn effective_hops(chain: &ChainModel) -> Result<Vec<EffectiveHop>> {
    chain
        .hops()
        .iter()
        .enumerate()
        .map(|(k, hop)| effective_hop_svd(hop).map_err(|e| hop_context(k, e)))
        .collect()
}

pub fn assemble_solution(chain: &ChainModel, obj: Objective, lambda_f: &[Vec<f64>]) -> Result<StructuredSolution> {
    let effs = effective_hops(chain)?;
    assemble_with(chain, obj, &effs, lambda_f, None)
}

fn assemble_with(
    chain: &ChainModel,
    obj: Objective,
    effs: &[EffectiveHop],
    lambda_f: &[Vec<f64>],
    allocation: Option<AllocationSummary>,
) -> Result<StructuredSolution> {
    let n = chain.n_streams();
    if lambda_f.len() != chain.num_hops() || lambda_f.iter().any(|l| l.len() != n) {
        return Err(Error::Dimension(format!(
            "allocation must hold {} vectors of length {n}",
            chain.num_hops()
        )));
    }
    for (k, (lam, hop)) in lambda_f.iter().zip(chain.hops()).enumerate() {
        let used: f64 = lam.iter().map(|f| f * f).sum();
        if (used - hop.power_budget).abs() > 1e-8 * hop.power_budget.max(1.0) || lam.iter().any(|f| *f < 0.0) {
            return Err(Error::Parameter(format!(
                "hop {}: allocation uses {used} of budget {}",
                k + 1,
                hop.power_budget
            )));
        }
    }

    let u_om = u_omega(obj, n);
    let mut prev_u_n = u_om.clone();
    let mut f = Vec::with_capacity(chain.num_hops());
    let mut xi = Vec::with_capacity(chain.num_hops());
    for (k, (hop, eff)) in chain.hops().iter().zip(effs).enumerate() {
        let xi_k = xi_k(hop, eff, &lambda_f[k]).map_err(|e| hop_context(k, e))?;
        let v_n = linalg::leading_columns(&eff.v, n);
        let fk = &eff.b_inv_sqrt * v_n * linalg::diag_real(&lambda_f[k]) * prev_u_n.adjoint() * cr(xi_k.sqrt());
        prev_u_n = linalg::leading_columns(&eff.u, n);
        f.push(fk);
        xi.push(xi_k);
    }
    let precoders = precoders_from_f(chain, &f)?;
    let equalizer = mse::lmmse_equalizer(chain, &precoders)?;
    let gains: Vec<Vec<f64>> = effs.iter().map(|e| e.leading_gains(n)).collect();
    let theta_spectrum = gamma_from_gains(lambda_f, &gains);
    Ok(StructuredSolution {
        objective: obj,
        lambda_f: lambda_f.to_vec(),
        gains,
        xi,
        u_omega: u_om,
        f,
        precoders,
        equalizer,
        theta_spectrum,
        allocation,
    })
}

/// Full pipeline: per-hop SVDs, power allocation, assembly.
pub fn design(chain: &ChainModel, obj: Objective) -> Result<StructuredSolution> {
    let effs = effective_hops(chain)?;
    let n = chain.n_streams();
    let problem = AllocationProblem::new(
        effs.iter().map(|e| e.leading_gains(n)).collect(),
        chain.hops().iter().map(|h| h.power_budget).collect(),
        obj,
    )?;
    let alloc = power::solve(&problem)?;
    assemble_with(chain, obj, &effs, &alloc.f, Some(AllocationSummary::from(&alloc)))
}

/// Design that ignores estimation errors (`Σ_k = Ψ_k = 0`).
pub fn design_estimated_only(chain: &ChainModel, obj: Objective) -> Result<StructuredSolution> {
    design(&chain.without_errors(), obj)
}
