//! Power allocation over the per-hop stream gains.
//!
//! With the transceiver structure fixed, stream `i` of hop `k` sees the
//! normalized gain `h_{k,i}` and carries power `x_{k,i} = f_{k,i}²`. The
//! end-to-end gain of stream `i` is
//!
//! ```text
//! γ_i = Π_k u_{k,i} / Π_k (u_{k,i} + 1),   u_{k,i} = x_{k,i} h_{k,i}²
//! ```
//!
//! and every objective is a decreasing function of `γ`. The solver is block
//! coordinate descent over hops: with the other hops fixed, hop `k` faces a
//! separable concave (MSE objectives) or convex (log-det) single-ratio problem
//! that is solved exactly by water-filling, i.e. bisection on the multiplier
//! of `Σ_i x_{k,i} = P_k`.

use crate::mse::Objective;
use crate::par::{self, Execution};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 500;
const BISECTION_STEPS: usize = 100;
const FALLBACK_STEPS: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationProblem {
    /// `gains[k][i] = h_{k,i}`; all hops carry the same number of streams.
    pub gains: Vec<Vec<f64>>,
    pub budgets: Vec<f64>,
    pub objective: Objective,
    pub tol: f64,
    pub max_iters: usize,
}

impl AllocationProblem {
    pub fn new(gains: Vec<Vec<f64>>, budgets: Vec<f64>, objective: Objective) -> Result<Self> {
        let problem = Self {
            gains,
            budgets,
            objective,
            tol: DEFAULT_TOL,
            max_iters: DEFAULT_MAX_ITERS,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        if self.gains.is_empty() || self.gains.len() != self.budgets.len() {
            return Err(Error::Dimension(format!(
                "{} gain vectors for {} budgets",
                self.gains.len(),
                self.budgets.len()
            )));
        }
        let n = self.gains[0].len();
        if n == 0 || self.gains.iter().any(|g| g.len() != n) {
            return Err(Error::Dimension("every hop needs the same positive stream count".into()));
        }
        if self.gains.iter().flatten().any(|&h| !(h >= 0.0 && h.is_finite())) {
            return Err(Error::Parameter("gains must be finite and nonnegative".into()));
        }
        if self.budgets.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Parameter("power budgets must be positive".into()));
        }
        if !(self.tol >= 0.0) || self.max_iters == 0 {
            return Err(Error::Parameter("invalid convergence controls".into()));
        }
        Ok(())
    }

    pub fn num_hops(&self) -> usize {
        self.gains.len()
    }

    pub fn num_streams(&self) -> usize {
        self.gains[0].len()
    }

    /// Objective at per-hop powers `x[k][i] = f_{k,i}²`.
    pub fn value_at_powers(&self, x: &[Vec<f64>]) -> f64 {
        self.objective.reduced_value(&gamma_from_powers(x, &self.gains))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AllocationResult {
    /// `f[k][i] = f_{k,i} ≥ 0`.
    pub f: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after initialization and after every full pass over the hops.
    pub history: Vec<f64>,
}

impl AllocationResult {
    pub fn powers(&self) -> Vec<Vec<f64>> {
        self.f.iter().map(|fk| fk.iter().map(|f| f * f).collect()).collect()
    }
}

/// `γ_i` from per-hop powers `x_{k,i}` and gains `h_{k,i}`.
pub fn gamma_from_powers(x: &[Vec<f64>], gains: &[Vec<f64>]) -> Vec<f64> {
    let n = gains.first().map_or(0, Vec::len);
    (0..n)
        .map(|i| {
            x.iter().zip(gains).fold(1.0, |acc, (xk, hk)| {
                let u = xk[i] * hk[i] * hk[i];
                acc * (u / (u + 1.0))
            })
        })
        .collect()
}

/// Product of the other hops' factors `u/(u+1)` for every stream.
fn others_factor(x: &[Vec<f64>], gains: &[Vec<f64>], hop: usize) -> Vec<f64> {
    let n = gains[hop].len();
    (0..n)
        .map(|i| {
            (0..gains.len()).filter(|&l| l != hop).fold(1.0, |acc, l| {
                let u = x[l][i] * gains[l][i] * gains[l][i];
                acc * (u / (u + 1.0))
            })
        })
        .collect()
}

/// Per-stream data of hop `k`'s subproblem with the other hops fixed.
struct HopSubproblem {
    objective: Objective,
    /// Power gains `h²`.
    w: Vec<f64>,
    /// Other-hop factors `a_i`.
    a: Vec<f64>,
    scale: f64,
}

impl HopSubproblem {
    fn new(problem: &AllocationProblem, x: &[Vec<f64>], hop: usize) -> Self {
        let scale = match problem.objective {
            Objective::MaxMse => 1.0 / problem.num_streams() as f64,
            Objective::SumMse | Objective::MutualInfo => 1.0,
        };
        Self {
            objective: problem.objective,
            w: problem.gains[hop].iter().map(|h| h * h).collect(),
            a: others_factor(x, &problem.gains, hop),
            scale,
        }
    }

    /// `∂g/∂x_i` (nonpositive).
    fn derivative(&self, i: usize, x: f64) -> f64 {
        let (a, w) = (self.a[i], self.w[i]);
        let u = w * x;
        match self.objective {
            Objective::MaxMse | Objective::SumMse => -self.scale * a * w / ((1.0 + u) * (1.0 + u)),
            Objective::MutualInfo => -a * w / ((1.0 + u) * (1.0 + (1.0 - a) * u)),
        }
    }

    /// Marginal utility at zero power.
    fn marginal_at_zero(&self, i: usize) -> f64 {
        -self.derivative(i, 0.0)
    }

    /// Power of stream `i` at water level `mu` (marginal utility equals `mu`).
    fn power_at_level(&self, i: usize, mu: f64) -> f64 {
        let c = self.marginal_at_zero(i);
        if c <= mu || self.w[i] == 0.0 {
            return 0.0;
        }
        let q = c / mu;
        let u = match self.objective {
            Objective::MaxMse | Objective::SumMse => q.sqrt() - 1.0,
            Objective::MutualInfo => {
                let b = 1.0 - self.a[i];
                2.0 * (q - 1.0) / ((1.0 + b) + ((1.0 + b) * (1.0 + b) + 4.0 * b * (q - 1.0)).sqrt())
            }
        };
        u / self.w[i]
    }

    fn total_at_level(&self, mu: f64) -> f64 {
        (0..self.w.len()).map(|i| self.power_at_level(i, mu)).sum()
    }

    /// Exact minimizer over `{x ≥ 0, Σx = budget}`; `None` when no stream
    /// has positive marginal utility.
    fn water_fill(&self, budget: f64) -> Option<Vec<f64>> {
        let n = self.w.len();
        let top = (0..n).map(|i| self.marginal_at_zero(i)).fold(0.0, f64::max);
        if !(top > 0.0) {
            return None;
        }
        let mut hi = top;
        let mut lo = top * 0.5;
        let mut grow = 0;
        while self.total_at_level(lo) < budget {
            lo *= 0.1;
            grow += 1;
            if grow > 400 || lo == 0.0 {
                return None;
            }
        }
        for _ in 0..BISECTION_STEPS {
            let mid = (lo * hi).sqrt();
            if mid <= lo || mid >= hi {
                break;
            }
            if self.total_at_level(mid) >= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut x: Vec<f64> = (0..n).map(|i| self.power_at_level(i, lo)).collect();
        let total: f64 = x.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let fix = budget / total;
        x.iter_mut().for_each(|v| *v *= fix);
        Some(x)
    }
}

/// Euclidean projection onto `{x ≥ 0, Σx = budget}`.
fn project_simplex(v: &[f64], budget: f64) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - budget) / (j + 1) as f64;
        if s - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projected gradient with Armijo step halving on a single hop block.
fn fallback_descent(problem: &AllocationProblem, x: &mut [Vec<f64>], hop: usize) {
    let budget = problem.budgets[hop];
    let mut value = problem.value_at_powers(x);
    let mut step = budget;
    for _ in 0..FALLBACK_STEPS {
        let sub = HopSubproblem::new(problem, x, hop);
        let grad: Vec<f64> = (0..x[hop].len()).map(|i| sub.derivative(i, x[hop][i])).collect();
        let current = x[hop].clone();
        let mut accepted = false;
        let mut trial_step = step;
        while trial_step > budget * 1e-16 {
            let moved: Vec<f64> = current.iter().zip(&grad).map(|(xi, g)| xi - trial_step * g).collect();
            let cand = project_simplex(&moved, budget);
            let decrease: f64 = grad.iter().zip(&cand).zip(&current).map(|((g, c), o)| g * (o - c)).sum();
            x[hop] = cand;
            let new_value = problem.value_at_powers(x);
            if new_value <= value - 1e-4 * decrease && new_value < value {
                value = new_value;
                accepted = true;
                break;
            }
            trial_step *= 0.5;
        }
        if !accepted {
            x[hop] = current;
            break;
        }
        step = trial_step * 2.0;
    }
}

pub fn solve(problem: &AllocationProblem) -> Result<AllocationResult> {
    problem.validate()?;
    let n = problem.num_streams();
    let mut x: Vec<Vec<f64>> = problem.budgets.iter().map(|&p| vec![p / n as f64; n]).collect();
    let mut value = problem.value_at_powers(&x);
    let mut history = vec![value];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < problem.max_iters {
        iterations += 1;
        let before = value;
        for hop in 0..problem.num_hops() {
            let block_start = value;
            let previous = x[hop].clone();
            let sub = HopSubproblem::new(problem, &x, hop);
            if let Some(filled) = sub.water_fill(problem.budgets[hop]) {
                x[hop] = filled;
            }
            value = problem.value_at_powers(&x);
            if value > block_start {
                // The block optimum should never lose; recover by direct descent.
                x[hop] = previous;
                fallback_descent(problem, &mut x, hop);
                value = problem.value_at_powers(&x);
            }
        }
        history.push(value);
        if before - value < problem.tol {
            converged = true;
            break;
        }
    }

    Ok(AllocationResult {
        f: x.iter().map(|xk| xk.iter().map(|v| v.max(0.0).sqrt()).collect()).collect(),
        objective_value: value,
        iterations,
        converged,
        history,
    })
}

/// Stationarity residual `max_k max_{i active} |∂g/∂x_{k,i} + μ_k|`, with
/// `μ_k` the hop multiplier estimated as the mean marginal utility of the
/// active streams. Streams without power or without gain are excluded.
pub fn kkt_residual(problem: &AllocationProblem, result: &AllocationResult) -> f64 {
    let x = result.powers();
    let mut worst: f64 = 0.0;
    for hop in 0..problem.num_hops() {
        let sub = HopSubproblem::new(problem, &x, hop);
        let threshold = 1e-12 * problem.budgets[hop];
        let grads: Vec<f64> = (0..problem.num_streams())
            .filter(|&i| x[hop][i] > threshold && problem.gains[hop][i] > 0.0)
            .map(|i| sub.derivative(i, x[hop][i]))
            .collect();
        if grads.is_empty() {
            continue;
        }
        let mu = -grads.iter().sum::<f64>() / grads.len() as f64;
        for g in grads {
            worst = worst.max((g + mu).abs());
        }
    }
    worst
}

/// Largest number of power variables the grid oracle accepts.
pub const GRID_MAX_DIMS: usize = 6;
const GRID_MAX_POINTS: f64 = 5e8;

/// Per-hop power splits on a grid of spacing `step`; the last stream takes
/// the remainder of the budget.
fn simplex_grid(n: usize, budget: f64, step: f64) -> Vec<Vec<f64>> {
    let levels = (budget / step + 1e-9).floor() as usize;
    let mut out = Vec::new();
    let mut idx = vec![0usize; n.saturating_sub(1)];
    loop {
        let used: usize = idx.iter().sum();
        if used <= levels {
            let mut point: Vec<f64> = idx.iter().map(|&j| j as f64 * step).collect();
            point.push((budget - used as f64 * step).max(0.0));
            out.push(point);
        }
        // odometer over the first n-1 coordinates
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return out;
            }
            idx[pos] += 1;
            if idx.iter().sum::<usize>() <= levels {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Exhaustive search over per-hop simplex grids. Refuses instances with more
/// than [`GRID_MAX_DIMS`] power variables.
pub fn grid_oracle(problem: &AllocationProblem, step: f64) -> Result<AllocationResult> {
    problem.validate()?;
    let (k, n) = (problem.num_hops(), problem.num_streams());
    if n * k > GRID_MAX_DIMS {
        return Err(Error::TooLarge(format!(
            "grid oracle supports at most {GRID_MAX_DIMS} power variables, got {}",
            n * k
        )));
    }
    if !(step > 0.0) {
        return Err(Error::Parameter("grid step must be positive".into()));
    }
    let estimate: f64 = problem
        .budgets
        .iter()
        .map(|p| (p / step + 1.0).powi(n as i32 - 1))
        .product();
    if estimate > GRID_MAX_POINTS {
        return Err(Error::TooLarge(format!("grid of ~{estimate:.0} points is too large")));
    }
    let grids: Vec<Vec<Vec<f64>>> = problem
        .budgets
        .iter()
        .map(|&p| simplex_grid(n, p, step))
        .collect();
    let inner: usize = grids[1..].iter().map(Vec::len).product();

    // Parallel over the first hop's splits; each worker scans the rest.
    let best_per_first = par::map_indexed(Execution::Parallel, grids[0].len(), |first| {
        let mut x: Vec<Vec<f64>> = grids.iter().map(|g| g[0].clone()).collect();
        x[0] = grids[0][first].clone();
        let mut best = (f64::INFINITY, 0usize);
        for flat in 0..inner {
            let mut rem = flat;
            for hop in 1..k {
                let len = grids[hop].len();
                x[hop].clone_from(&grids[hop][rem % len]);
                rem /= len;
            }
            let v = problem.value_at_powers(&x);
            if v < best.0 {
                best = (v, flat);
            }
        }
        best
    });
    let (first, (value, flat)) = best_per_first
        .into_iter()
        .enumerate()
        .fold((0, (f64::INFINITY, 0)), |acc, (i, b)| if b.0 < acc.1 .0 { (i, b) } else { acc });

    let mut x = vec![grids[0][first].clone()];
    let mut rem = flat;
    for grid in &grids[1..] {
        x.push(grid[rem % grid.len()].clone());
        rem /= grid.len();
    }
    Ok(AllocationResult {
        f: x.iter().map(|xk| xk.iter().map(|v| v.sqrt()).collect()).collect(),
        objective_value: value,
        iterations: grids[0].len() * inner,
        converged: true,
        history: vec![value],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budgets_hold(problem: &AllocationProblem, result: &AllocationResult) {
        for (xk, p) in result.powers().iter().zip(&problem.budgets) {
            assert!((xk.iter().sum::<f64>() - p).abs() < 1e-9 * p.max(1.0));
        }
    }

    #[test]
    fn symmetric_single_hop_splits_evenly() {
        let problem = AllocationProblem::new(vec![vec![1.0, 1.0]], vec![2.0], Objective::MutualInfo).unwrap();
        let res = solve(&problem).unwrap();
        assert!(res.converged);
        for x in &res.powers()[0] {
            assert!((x - 1.0).abs() < 1e-9);
        }
        assert!(kkt_residual(&problem, &res) < 1e-6);
    }

    #[test]
    fn gamma_worked_values() {
        // u = 3 on one hop: 3/4
        assert!((gamma_from_powers(&[vec![3.0]], &[vec![1.0]])[0] - 0.75).abs() < 1e-15);
        // u = 1 on two hops: 1/4
        assert!((gamma_from_powers(&[vec![1.0], vec![1.0]], &[vec![1.0], vec![1.0]])[0] - 0.25).abs() < 1e-15);
        assert_eq!(gamma_from_powers(&[vec![0.0], vec![5.0]], &[vec![1.0], vec![1.0]])[0], 0.0);
    }

    #[test]
    fn single_stream_takes_full_power() {
        for k in 1..4 {
            let problem = AllocationProblem::new(vec![vec![0.7]; k], vec![1.5; k], Objective::SumMse).unwrap();
            let grid = grid_oracle(&problem, 0.01).unwrap();
            for xk in grid.powers() {
                assert!((xk[0] - 1.5).abs() < 1e-12);
            }
            budgets_hold(&problem, &solve(&problem).unwrap());
        }
    }

    #[test]
    fn zero_gain_stream_is_switched_off_and_ignored_by_kkt() {
        let problem = AllocationProblem::new(vec![vec![1.2, 0.0]], vec![3.0], Objective::SumMse).unwrap();
        let res = solve(&problem).unwrap();
        assert_eq!(res.f[0][1], 0.0);
        budgets_hold(&problem, &res);
        assert!(kkt_residual(&problem, &res) < 1e-12);
    }

    #[test]
    fn history_is_monotone() {
        let problem = AllocationProblem::new(
            vec![vec![1.3, 0.9, 0.2], vec![1.1, 0.8, 0.5], vec![2.0, 0.3, 0.1]],
            vec![4.0, 2.0, 8.0],
            Objective::MaxMse,
        )
        .unwrap();
        let res = solve(&problem).unwrap();
        assert!(res.converged);
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        budgets_hold(&problem, &res);
    }

    #[test]
    fn grid_oracle_refuses_large_instances() {
        let problem = AllocationProblem::new(vec![vec![1.0; 4]; 2], vec![1.0; 2], Objective::SumMse).unwrap();
        assert!(matches!(grid_oracle(&problem, 0.1), Err(Error::TooLarge(_))));
    }

    #[test]
    fn grid_points_cover_simplex() {
        let pts = simplex_grid(3, 1.0, 0.5);
        assert_eq!(pts.len(), 6);
        for p in &pts {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 2.0, -1.0], 1.0);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let q = project_simplex(&[0.4, 0.4], 1.0);
        assert!((q[0] - 0.5).abs() < 1e-15 && (q[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fallback_descent_improves_a_block() {
        let problem = AllocationProblem::new(vec![vec![1.5, 0.4], vec![1.0, 0.9]], vec![2.0, 2.0], Objective::SumMse).unwrap();
        let mut x = vec![vec![0.1, 1.9], vec![1.0, 1.0]];
        let before = problem.value_at_powers(&x);
        fallback_descent(&problem, &mut x, 0);
        assert!(problem.value_at_powers(&x) < before);
        assert!((x[0].iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_problems() {
        assert!(AllocationProblem::new(vec![], vec![], Objective::SumMse).is_err());
        assert!(AllocationProblem::new(vec![vec![1.0]], vec![0.0], Objective::SumMse).is_err());
        assert!(AllocationProblem::new(vec![vec![1.0], vec![1.0, 2.0]], vec![1.0, 1.0], Objective::SumMse).is_err());
        assert!(AllocationProblem::new(vec![vec![-1.0]], vec![1.0], Objective::SumMse).is_err());
    }
}
