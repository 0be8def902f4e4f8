//! General-purpose optimizer over raw precoder matrices.
//!
//! This path shares nothing with [`crate::design`] or [`crate::power`]: it
//! evaluates the objective through [`crate::mse`] only, differentiates it by
//! central differences, and keeps iterates feasible by rescaling the
//! precoders onto the power boundary in hop order. Rescaling hop `k` leaves
//! the earlier hops feasible because `R_{k-1}` depends only on `P_1..P_{k-1}`.
//! The objective is evaluated at the rescaled point, so it is invariant to
//! positive scaling of any single hop's block and its gradient is tangent to
//! the boundary.

use rand::Rng;

use crate::channel;
use crate::linalg::{self, cr, CMatrix};
use crate::mse::{self, ChainModel, Objective, PrecoderSet};
use crate::par::{self, Execution};
use crate::{Error, Result};

/// Desk-scale guard on the number of complex precoder entries.
pub const MAX_COMPLEX_ENTRIES: usize = 64;

#[derive(Clone, Debug)]
pub struct OracleProblem {
    pub chain: ChainModel,
    pub objective: Objective,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop when a step improves the objective by less than this (relative).
    pub tol: f64,
    /// Central-difference step.
    pub fd_step: f64,
    pub exec: Execution,
}

impl OracleProblem {
    pub fn new(chain: ChainModel, objective: Objective) -> Result<Self> {
        let entries: usize = (0..chain.num_hops())
            .map(|k| chain.hop(k).n_tx * chain.input_dim(k))
            .sum();
        if entries > MAX_COMPLEX_ENTRIES {
            return Err(Error::TooLarge(format!(
                "{entries} complex precoder entries exceed the oracle limit of {MAX_COMPLEX_ENTRIES}"
            )));
        }
        Ok(Self {
            chain,
            objective,
            restarts: 20,
            max_iters: 3000,
            tol: 1e-13,
            fd_step: 1e-6,
            exec: Execution::Parallel,
        })
    }

    fn shapes(&self) -> Vec<(usize, usize)> {
        (0..self.chain.num_hops())
            .map(|k| (self.chain.hop(k).n_tx, self.chain.input_dim(k)))
            .collect()
    }

    pub fn pack(&self, precoders: &PrecoderSet) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &precoders.p {
            linalg::to_real_params(p, &mut out);
        }
        out
    }

    pub fn unpack(&self, params: &[f64]) -> PrecoderSet {
        let mut offset = 0;
        let p = self
            .shapes()
            .into_iter()
            .map(|(r, c)| {
                let len = 2 * r * c;
                let m = linalg::from_real_params(r, c, &params[offset..offset + len]);
                offset += len;
                m
            })
            .collect();
        PrecoderSet::new(p)
    }

    /// Objective at the rescaled point; `+∞` where it is undefined.
    pub fn value(&self, params: &[f64]) -> f64 {
        mse::scale_to_budgets(&self.chain, &self.unpack(params))
            .and_then(|p| mse::mse_matrix_lmmse(&self.chain, &p))
            .and_then(|report| mse::objective_value(self.objective, &report))
            .ok()
            .filter(|v| v.is_finite())
            .unwrap_or(f64::INFINITY)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        central_gradient(&|x: &[f64]| self.value(x), params, self.fd_step)
    }

    /// Norm of the objective gradient at a precoder set (after rescaling).
    pub fn gradient_norm(&self, precoders: &PrecoderSet) -> Result<f64> {
        let feasible = mse::scale_to_budgets(&self.chain, precoders)?;
        Ok(norm(&self.gradient(&self.pack(&feasible))))
    }
}

/// Random precoders with i.i.d. `CN(0, 1)` entries, rescaled to the boundary.
pub fn random_feasible_precoders<R: Rng + ?Sized>(chain: &ChainModel, rng: &mut R) -> Result<PrecoderSet> {
    let raw = PrecoderSet::new(
        (0..chain.num_hops())
            .map(|k| channel::complex_gaussian(chain.hop(k).n_tx, chain.input_dim(k), rng))
            .collect(),
    );
    mse::scale_to_budgets(chain, &raw)
}

/// Lowest objective among `count` random feasible precoder sets.
pub fn best_random_objective(chain: &ChainModel, obj: Objective, count: usize, seed: u64, exec: Execution) -> f64 {
    par::map_indexed(exec, count, |i| {
        let mut rng = channel::stream_rng(seed, &[i as u64]);
        random_feasible_precoders(chain, &mut rng)
            .and_then(|p| mse::mse_matrix_lmmse(chain, &p))
            .and_then(|r| mse::objective_value(obj, &r))
            .unwrap_or(f64::INFINITY)
    })
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central-difference gradient.
pub fn central_gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Largest deviation between the central-difference gradient projected on
/// each direction and an independent five-point directional difference,
/// relative to the gradient norm. Zero directions contribute nothing.
pub fn numeric_gradient_check<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], directions: &[Vec<f64>]) -> f64 {
    let grad = central_gradient(f, x, 1e-6);
    let scale = norm(&grad).max(1e-12);
    let h = 1e-4;
    let at = |d: &[f64], t: f64| -> f64 {
        let shifted: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + t * di).collect();
        f(&shifted)
    };
    directions
        .iter()
        .filter_map(|d| {
            let len = norm(d);
            if len == 0.0 {
                return None;
            }
            let unit: Vec<f64> = d.iter().map(|v| v / len).collect();
            let internal: f64 = grad.iter().zip(&unit).map(|(g, u)| g * u).sum();
            let independent = (8.0 * (at(&unit, h) - at(&unit, -h)) - (at(&unit, 2.0 * h) - at(&unit, -2.0 * h))) / (12.0 * h);
            Some((internal - independent).abs() / scale)
        })
        .fold(0.0, f64::max)
}

/// [`numeric_gradient_check`] along 10 random Gaussian directions.
pub fn random_gradient_check<F: Fn(&[f64]) -> f64, R: Rng + ?Sized>(f: &F, x: &[f64], rng: &mut R) -> f64 {
    let dirs: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..x.len()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect())
        .collect();
    numeric_gradient_check(f, x, &dirs)
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub precoders: PrecoderSet,
    pub objective_value: f64,
    /// Restarts that produced a finite objective.
    pub restarts_used: usize,
}

/// Projected gradient descent with Armijo backtracking from `start`.
pub fn descend(problem: &OracleProblem, start: &PrecoderSet) -> Result<(PrecoderSet, f64)> {
    let mut x = problem.pack(&mse::scale_to_budgets(&problem.chain, start)?);
    let mut value = problem.value(&x);
    if !value.is_finite() {
        return Err(Error::Numerical("non-finite objective at start".into()));
    }
    let mut step = 1.0;
    let mut stalls = 0;
    for _ in 0..problem.max_iters {
        let grad = problem.gradient(&x);
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if !(gnorm2 > 1e-24) {
            break;
        }
        let mut t = step;
        let mut accepted = None;
        while t > 1e-14 {
            let moved: Vec<f64> = x.iter().zip(&grad).map(|(xi, g)| xi - t * g).collect();
            let cand = match mse::scale_to_budgets(&problem.chain, &problem.unpack(&moved)) {
                Ok(p) => problem.pack(&p),
                Err(_) => {
                    t *= 0.5;
                    continue;
                }
            };
            let v = problem.value(&cand);
            let decrease: f64 = grad.iter().zip(&x).zip(&cand).map(|((g, a), b)| g * (a - b)).sum();
            if v.is_finite() && v <= value - 1e-4 * decrease.max(0.0) && v <= value {
                accepted = Some((cand, v));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, v)) = accepted else { break };
        let gain = value - v;
        x = cand;
        value = v;
        step = (t * 2.0).min(1e3);
        if gain <= problem.tol * value.abs().max(1e-12) {
            stalls += 1;
            if stalls >= 5 {
                break;
            }
        } else {
            stalls = 0;
        }
    }
    Ok((problem.unpack(&x), value))
}

/// Best of `problem.restarts` descents from random feasible starts, each
/// with its own stream derived from `seed`. Restarts that hit a non-finite
/// objective are discarded.
pub fn optimize_precoders(problem: &OracleProblem, seed: u64) -> Result<OracleResult> {
    let runs = par::map_indexed(problem.exec, problem.restarts, |r| {
        let mut rng = channel::stream_rng(seed, &[r as u64]);
        random_feasible_precoders(&problem.chain, &mut rng).and_then(|start| descend(problem, &start))
    });
    let mut used = 0;
    let mut best: Option<(PrecoderSet, f64)> = None;
    for (p, v) in runs.into_iter().flatten() {
        if !v.is_finite() {
            continue;
        }
        used += 1;
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((p, v));
        }
    }
    let (precoders, objective_value) =
        best.ok_or_else(|| Error::Numerical("every oracle restart was discarded".into()))?;
    Ok(OracleResult {
        precoders,
        objective_value,
        restarts_used: used,
    })
}

/// Power-constraint residual `max_k |Tr(P_k R_{k-1} P_kᴴ) − P_k| / P_k`.
pub fn power_residual(chain: &ChainModel, precoders: &PrecoderSet) -> Result<f64> {
    Ok(mse::transmit_powers(chain, precoders)?
        .iter()
        .zip(chain.hops())
        .map(|(used, hop)| (used - hop.power_budget).abs() / hop.power_budget)
        .fold(0.0, f64::max))
}

/// Convenience for tests: the matrix `P` whose entries are all `value`.
pub fn constant_precoders(chain: &ChainModel, value: f64) -> PrecoderSet {
    PrecoderSet::new(
        (0..chain.num_hops())
            .map(|k| CMatrix::from_element(chain.hop(k).n_tx, chain.input_dim(k), cr(value)))
            .collect(),
    )
}
