//! Built-in invariant corpus.
//!
//! Each check is self-contained and reports pass/fail with a short detail
//! line. The corpus backs the `verify` subcommand of the CLI and is reused by
//! the acceptance suite.

use std::fmt;

use crate::channel::{self, CorrelationSpec};
use crate::design;
use crate::linalg::{self, cr, CMatrix};
use crate::mse::{self, ChainModel, HopModel, Objective};
use crate::oracle::{self, OracleProblem};
use crate::par::Execution;
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        write!(f, "{} checks, {} failed", self.checks.len(), self.failures())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CorpusOptions {
    pub majorization_trials: usize,
    pub oracle_restarts: usize,
    pub random_samples: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            majorization_trials: 1000,
            oracle_restarts: 20,
            random_samples: 10_000,
            seed: 0x5eed,
            exec: Execution::Parallel,
        }
    }
}

/// `true` if `a` majorizes `b`: equal totals and every descending partial
/// sum of `a` at least that of `b`.
pub fn majorizes(a: &[f64], b: &[f64], tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let sorted = |v: &[f64]| {
        let mut s = v.to_vec();
        s.sort_by(|x, y| y.total_cmp(x));
        s
    };
    let (a, b) = (sorted(a), sorted(b));
    let (mut sa, mut sb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(&b) {
        sa += x;
        sb += y;
        if sa < sb - tol {
            return false;
        }
    }
    (sa - sb).abs() <= tol
}

/// Haar-like random unitary from the QR factor of a complex Gaussian matrix.
pub fn random_unitary<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    channel::complex_gaussian(n, n, rng).qr().q()
}

/// `d(I − Θ)` majorizes `(1 − Σλ(Θ)/N)·1` for random `Θ` with spectrum in
/// `[0, 1]`, and equality holds when `Θ` is rotated by `Q_F`.
pub fn majorization_check(trials: usize, seed: u64) -> Check {
    use rand::Rng;
    let mut rng = channel::stream_rng(seed, &[0xa1]);
    let mut worst_gap = f64::INFINITY;
    let mut worst_equality = 0.0_f64;
    let mut violations = 0;
    for t in 0..trials {
        let n = 2 + t % 5;
        let lambda: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mean = lambda.iter().sum::<f64>() / n as f64;
        let target = vec![1.0 - mean; n];

        let u = random_unitary(n, &mut rng);
        let theta = &u * linalg::diag_real(&lambda) * u.adjoint();
        let d = linalg::real_diagonal(&(linalg::identity(n) - theta));
        if !majorizes(&d, &target, 1e-12) {
            violations += 1;
        }
        let mut ds = d.clone();
        ds.sort_by(|x, y| y.total_cmp(x));
        let mut slack = f64::INFINITY;
        let mut acc = 0.0;
        for (i, x) in ds.iter().enumerate() {
            acc += x;
            slack = slack.min(acc - (i + 1) as f64 * (1.0 - mean));
        }
        worst_gap = worst_gap.min(slack);

        let q = design::q_f_matrix(n);
        let rotated = &q * linalg::diag_real(&lambda) * q.adjoint();
        let d_eq = linalg::real_diagonal(&(linalg::identity(n) - rotated));
        let dev = d_eq.iter().map(|x| (x - (1.0 - mean)).abs()).fold(0.0, f64::max);
        worst_equality = worst_equality.max(dev);
    }
    let passed = violations == 0 && worst_equality < 1e-12;
    Check::new(
        "majorization",
        passed,
        format!(
            "{trials} spectra, {violations} violations, min partial-sum slack {worst_gap:.3e}, \
             equality-case deviation {worst_equality:.3e}"
        ),
    )
}

#[derive(Clone, Debug)]
pub struct CannedInstance {
    pub name: &'static str,
    pub chain: ChainModel,
    pub objective: Objective,
}

fn two_hop(seed: u64, err_scale: f64, psi_rho: f64, budgets: [f64; 2]) -> ChainModel {
    let mut rng = channel::stream_rng(seed, &[0xca]);
    let psi = channel::exponential_correlation(CorrelationSpec::new(psi_rho, 2)).expect("valid decay");
    let hops = budgets
        .iter()
        .map(|&p| {
            HopModel::new(
                channel::complex_gaussian(2, 2, &mut rng),
                linalg::identity(2) * cr(err_scale),
                psi.clone(),
                1.0,
                p,
            )
            .expect("valid hop")
        })
        .collect();
    ChainModel::new(hops, 2).expect("valid chain")
}

/// Five `N = 2`, `K = 2` instances with `Σ_k ∝ I`.
pub fn canned_instances() -> Vec<CannedInstance> {
    vec![
        CannedInstance {
            name: "sum-mse/moderate-error",
            chain: two_hop(11, 0.05, 0.5, [10.0, 10.0]),
            objective: Objective::SumMse,
        },
        CannedInstance {
            name: "mutual-info/low-snr",
            chain: two_hop(12, 0.02, 0.3, [5.0, 5.0]),
            objective: Objective::MutualInfo,
        },
        CannedInstance {
            name: "max-mse/moderate-error",
            chain: two_hop(13, 0.05, 0.5, [10.0, 10.0]),
            objective: Objective::MaxMse,
        },
        CannedInstance {
            name: "sum-mse/unequal-budgets",
            chain: two_hop(14, 0.1, 0.7, [20.0, 8.0]),
            objective: Objective::SumMse,
        },
        CannedInstance {
            name: "mutual-info/small-error",
            chain: two_hop(15, 0.004, 0.4, [31.6, 31.6]),
            objective: Objective::MutualInfo,
        },
    ]
}

#[derive(Clone, Debug)]
pub struct Certification {
    pub structured: f64,
    pub oracle: f64,
    pub random_best: f64,
    /// Largest `|λ_i(Θ) − γ_i|` over the streams.
    pub spectrum_error: f64,
}

impl Certification {
    /// Structured objective not beaten by the oracle beyond `1e-3` relative
    /// nor by any random feasible point.
    pub fn passed(&self) -> bool {
        let scale = self.structured.abs().max(1e-12);
        self.structured <= self.oracle + 1e-3 * scale
            && self.structured <= self.random_best + 1e-9 * scale
            && self.spectrum_error < 1e-8
    }
}

pub fn certify(instance: &CannedInstance, opts: &CorpusOptions) -> Result<Certification> {
    let sol = design::design(&instance.chain, instance.objective)?;
    let structured = sol.objective_value(&instance.chain)?;
    let mut problem = OracleProblem::new(instance.chain.clone(), instance.objective)?;
    problem.restarts = opts.oracle_restarts;
    problem.exec = opts.exec;
    let oracle = oracle::optimize_precoders(&problem, opts.seed)?.objective_value;
    let random_best = oracle::best_random_objective(
        &instance.chain,
        instance.objective,
        opts.random_samples,
        opts.seed ^ 0x7a,
        opts.exec,
    );
    Ok(Certification {
        structured,
        oracle,
        random_best,
        spectrum_error: spectrum_error(&instance.chain, &sol)?,
    })
}

/// Largest deviation between the sorted eigenvalues of `I − Φ_MSE` and the
/// sorted `γ_i` of a structured solution.
pub fn spectrum_error(chain: &ChainModel, sol: &design::StructuredSolution) -> Result<f64> {
    let report = mse::mse_matrix_lmmse(chain, &sol.precoders)?;
    let n = chain.n_streams();
    let mut theta = linalg::herm_eigenvalues(&(linalg::identity(n) - &report.phi));
    let mut gamma = sol.theta_spectrum.clone();
    theta.sort_by(|a, b| b.total_cmp(a));
    gamma.sort_by(|a, b| b.total_cmp(a));
    Ok(theta.iter().zip(&gamma).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn certification_check(instance: &CannedInstance, opts: &CorpusOptions) -> Check {
    let name = format!("oracle/{}", instance.name);
    Check::from_result(
        &name,
        certify(instance, opts).map(|c| {
            (
                c.passed(),
                format!(
                    "structured {:.9} oracle {:.9} random-best {:.9} spectrum-error {:.1e}",
                    c.structured, c.oracle, c.random_best, c.spectrum_error
                ),
            )
        }),
    )
}

/// Classical single-link water-filling `x_i = (μ − 1/h_i²)⁺`, `Σx = P`.
pub fn classical_water_filling(gains: &[f64], budget: f64) -> Vec<f64> {
    let inv: Vec<f64> = gains
        .iter()
        .map(|h| if *h > 0.0 { 1.0 / (h * h) } else { f64::INFINITY })
        .collect();
    let mut order: Vec<usize> = (0..gains.len()).collect();
    order.sort_by(|&a, &b| inv[a].total_cmp(&inv[b]));
    let mut level = 0.0;
    for active in (1..=order.len()).rev() {
        let used: f64 = order[..active].iter().map(|&i| inv[i]).sum();
        level = (budget + used) / active as f64;
        if level > inv[order[active - 1]] {
            break;
        }
    }
    inv.iter().map(|v| (level - v).max(0.0)).collect()
}

/// Single-hop perfect-CSI mutual-information design against eigen-beamforming
/// `P = V_N diag(√x)` with classically water-filled `x`.
pub fn eigen_beamforming_error(hbar: &CMatrix, noise_var: f64, budget: f64, n: usize) -> Result<f64> {
    let hop = HopModel::new_perfect(hbar.clone(), noise_var, budget)?;
    let chain = ChainModel::new(vec![hop], n)?;
    let sol = design::design(&chain, Objective::MutualInfo)?;
    let svd = linalg::svd_sorted(hbar);
    let gains: Vec<f64> = svd.s[..n].iter().map(|s| s / noise_var.sqrt()).collect();
    let x = classical_water_filling(&gains, budget);
    let sqrt_x: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
    let expected = linalg::leading_columns(&svd.v, n) * linalg::diag_real(&sqrt_x);
    Ok(linalg::max_abs(&(&sol.precoders.p[0] - expected)))
}

/// `σ_e² = 0`: robust and estimated-only designs coincide on a two-hop
/// chain, and a single hop reduces to eigen-beamforming.
pub fn degeneration_check(seed: u64) -> Check {
    let run = || -> Result<(bool, String)> {
        let mut rng = channel::stream_rng(seed, &[0xde]);
        let hops = (0..2)
            .map(|_| {
                let model = channel::HopErrorModel::exponential(3, 3, 0.3, 0.5, 0.0)?;
                HopModel::new(
                    channel::sample_estimated_channel(&model, &mut rng),
                    model.effective_sigma(),
                    model.psi().clone(),
                    1.0,
                    10.0,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let chain = ChainModel::new(hops, 2)?;
        let mut worst_diff = 0.0_f64;
        for obj in Objective::ALL {
            let robust = design::design(&chain, obj)?;
            let baseline = design::design_estimated_only(&chain, obj)?;
            worst_diff = worst_diff.max(robust.precoders.max_difference(&baseline.precoders));
        }
        let hbar = channel::complex_gaussian(3, 3, &mut rng);
        let beam = eigen_beamforming_error(&hbar, 0.5, 4.0, 3)?;
        Ok((
            worst_diff < 1e-10 && beam < 1e-8,
            format!("robust vs baseline {worst_diff:.1e}, eigen-beamforming {beam:.1e}"),
        ))
    };
    Check::from_result("degeneration", run())
}

/// Equal MSE diagonal for the Schur-convex objective, diagonal `Φ_MSE` for
/// the Schur-concave ones.
pub fn rotation_check(instances: &[CannedInstance]) -> Check {
    let run = || -> Result<(bool, String)> {
        let mut worst = 0.0_f64;
        for inst in instances {
            for obj in Objective::ALL {
                let sol = design::design(&inst.chain, obj)?;
                let phi = mse::mse_matrix_lmmse(&inst.chain, &sol.precoders)?.phi;
                let dev = match obj.schur_class() {
                    mse::SchurClass::Convex => {
                        let d = linalg::real_diagonal(&phi);
                        let mean = d.iter().sum::<f64>() / d.len() as f64;
                        d.iter().map(|x| (x - mean).abs()).fold(0.0, f64::max)
                    }
                    mse::SchurClass::Concave => {
                        let mut off = phi.clone();
                        off.fill_diagonal(cr(0.0));
                        linalg::max_abs(&off)
                    }
                };
                worst = worst.max(dev);
            }
        }
        Ok((worst < 1e-8, format!("worst deviation {worst:.1e}")))
    };
    Check::from_result("rotation", run())
}

pub fn run_corpus(opts: &CorpusOptions) -> Report {
    let instances = canned_instances();
    let mut checks = vec![majorization_check(opts.majorization_trials, opts.seed)];
    checks.extend(instances.iter().map(|inst| certification_check(inst, opts)));
    checks.push(rotation_check(&instances));
    checks.push(degeneration_check(opts.seed));
    Report { checks }
}
