//! Link-level Monte Carlo for relay-chain transceivers.
//!
//! Each trial draws fresh estimated channels, designs every compared
//! transceiver on them, then draws one true channel per hop (block fading) and
//! pushes a block of QPSK symbol vectors through the chain with fresh noise on
//! every symbol. All designs in a trial share the same channel, data and noise
//! draws. Every trial derives its random streams from `(seed, snr index,
//! trial index)`, so results do not depend on scheduling.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, HopErrorModel};
use crate::design;
use crate::linalg::{self, c, CMatrix};
use crate::mse::{self, ChainModel, HopModel, Objective, PrecoderSet};
use crate::par::{self, Execution};
use crate::{Error, Result};

const QPSK_AMP: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Gray-mapped unit-energy QPSK: the first bit of each pair selects the sign
/// of the real part, the second the sign of the imaginary part (`0 → +`).
pub fn qpsk_modulate(bits: &[bool]) -> Result<Vec<linalg::C64>> {
    if !bits.len().is_multiple_of(2) {
        return Err(Error::Parameter(format!("QPSK needs an even bit count, got {}", bits.len())));
    }
    Ok(bits
        .chunks_exact(2)
        .map(|b| {
            let re = if b[0] { -QPSK_AMP } else { QPSK_AMP };
            let im = if b[1] { -QPSK_AMP } else { QPSK_AMP };
            c(re, im)
        })
        .collect())
}

pub fn qpsk_demodulate(symbols: &[linalg::C64]) -> Vec<bool> {
    symbols.iter().flat_map(|z| [z.re < 0.0, z.im < 0.0]).collect()
}

/// Signals of one block: `s` is `N x T`, `x[k]` is the signal received at
/// node `k+1`, `n[k]` its noise, `y` the destination signal.
#[derive(Clone, Debug)]
pub struct LinkSignals {
    pub s: CMatrix,
    pub x: Vec<CMatrix>,
    pub n: Vec<CMatrix>,
    pub y: CMatrix,
}

/// `x_k = H_k P_k x_{k-1} + n_k` for a block of symbol vectors.
pub fn propagate<R: Rng + ?Sized>(
    true_channels: &[CMatrix],
    chain: &ChainModel,
    precoders: &PrecoderSet,
    s: CMatrix,
    rng: &mut R,
) -> LinkSignals {
    let cols = s.ncols();
    let mut x = Vec::with_capacity(chain.num_hops());
    let mut n = Vec::with_capacity(chain.num_hops());
    let mut current = s.clone();
    for ((h, p), hop) in true_channels.iter().zip(&precoders.p).zip(chain.hops()) {
        let noise = channel::complex_gaussian(hop.m_rx, cols, rng) * linalg::cr(hop.noise_var.sqrt());
        current = h * (p * current) + &noise;
        x.push(current.clone());
        n.push(noise);
    }
    LinkSignals { s, x, n, y: current }
}

/// True channels `H_k = H̄_k + ΔH_k`, with `ΔH_k` drawn from the chain's
/// effective error covariances.
pub fn draw_true_channels<R: Rng + ?Sized>(chain: &ChainModel, rng: &mut R) -> Vec<CMatrix> {
    chain
        .hops()
        .iter()
        .map(|hop| {
            let err = channel::kronecker_sample(
                &linalg::psd_sqrt(&hop.err_sigma),
                &linalg::psd_sqrt(&hop.err_psi),
                1.0,
                rng,
            );
            &hop.hbar + err
        })
        .collect()
}

fn random_bits<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<bool> {
    (0..count).map(|_| rng.random::<bool>()).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErrorCount {
    pub errors: u64,
    pub bits: u64,
}

impl std::ops::AddAssign for ErrorCount {
    fn add_assign(&mut self, rhs: Self) {
        self.errors += rhs.errors;
        self.bits += rhs.bits;
    }
}

/// One trial: draw the true channels from `truth`, send `symbols` QPSK
/// symbol vectors through `precoders`, equalize with `equalizer`, count bit
/// errors.
pub fn run_trial<R: Rng + ?Sized>(
    truth: &ChainModel,
    precoders: &PrecoderSet,
    equalizer: &CMatrix,
    symbols: usize,
    rng: &mut R,
) -> Result<ErrorCount> {
    precoders.validate(truth)?;
    linalg::expect_shape(equalizer, truth.n_streams(), truth.output_dim(), "equalizer")?;
    let n = truth.n_streams();
    let channels = draw_true_channels(truth, rng);
    let bits = random_bits(2 * n * symbols, rng);
    let s = CMatrix::from_column_slice(n, symbols, &qpsk_modulate(&bits)?);
    let link = propagate(&channels, truth, precoders, s, rng);
    let estimate = equalizer * link.y;
    let decided = qpsk_demodulate(estimate.as_slice());
    let errors = decided.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
    Ok(ErrorCount {
        errors,
        bits: bits.len() as u64,
    })
}

/// Mean and standard error of `‖G y − s‖²` over `draws` independent symbol
/// vectors, each with its own channel-error and noise realization.
pub fn empirical_mse<R: Rng + ?Sized>(
    truth: &ChainModel,
    precoders: &PrecoderSet,
    equalizer: &CMatrix,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    precoders.validate(truth)?;
    let n = truth.n_streams();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let channels = draw_true_channels(truth, rng);
        let bits = random_bits(2 * n, rng);
        let s = CMatrix::from_column_slice(n, 1, &qpsk_modulate(&bits)?);
        let link = propagate(&channels, truth, precoders, s.clone(), rng);
        let e = (equalizer * link.y - s).norm_squared();
        sum += e;
        sum_sq += e * e;
    }
    let d = draws as f64;
    let mean = sum / d;
    let var = (sum_sq / d - mean * mean).max(0.0) * d / (d - 1.0).max(1.0);
    Ok((mean, (var / d).sqrt()))
}

/// 95% two-sided normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score interval `(low, high)` at 95%.
pub fn wilson_interval(errors: u64, bits: u64) -> (f64, f64) {
    if bits == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = bits as f64;
    let p = errors as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let low = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let high = if errors == bits { 1.0 } else { (center + half).min(1.0) };
    (low, high)
}

/// Which channel knowledge a design uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignKind {
    /// Accounts for the estimation-error statistics.
    Robust,
    /// Treats the estimate as the true channel.
    EstimatedOnly,
}

impl DesignKind {
    pub fn name(self) -> &'static str {
        match self {
            DesignKind::Robust => "robust",
            DesignKind::EstimatedOnly => "estimated-only",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub objective: Objective,
}

impl DesignSpec {
    pub fn new(kind: DesignKind, objective: Objective) -> Self {
        Self { kind, objective }
    }

    pub fn design(&self, truth: &ChainModel) -> Result<design::StructuredSolution> {
        match self.kind {
            DesignKind::Robust => design::design(truth, self.objective),
            DesignKind::EstimatedOnly => design::design_estimated_only(truth, self.objective),
        }
    }

    /// Precoders and equalizer deployed on the link.
    ///
    /// The estimated-only design ignores the error terms, so under the true
    /// statistics its relays would exceed their budgets. Its precoders are
    /// rescaled hop by hop onto the budgets and its receiver is the LMMSE
    /// equalizer of the error-free model for those precoders.
    pub fn transceiver(&self, truth: &ChainModel) -> Result<(PrecoderSet, CMatrix)> {
        let sol = self.design(truth)?;
        match self.kind {
            DesignKind::Robust => Ok((sol.precoders, sol.equalizer)),
            DesignKind::EstimatedOnly => {
                let p = mse::scale_to_budgets(truth, &sol.precoders)?;
                let g = mse::lmmse_equalizer(&truth.without_errors(), &p)?;
                Ok((p, g))
            }
        }
    }
}

/// Antenna counts, correlation profiles and error level of a chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainTemplate {
    /// Antennas of every node, source first (`K + 1` entries).
    pub antennas: Vec<usize>,
    pub n_streams: usize,
    /// Transmit-side exponential decay per hop.
    pub corr_alpha: Vec<f64>,
    /// Receive-side exponential decay per hop.
    pub corr_beta: Vec<f64>,
    pub sigma_e_sq: f64,
    pub noise_var: f64,
}

impl ChainTemplate {
    /// All hops share the same correlation profile.
    pub fn uniform(antennas: Vec<usize>, n_streams: usize, alpha: f64, beta: f64, sigma_e_sq: f64) -> Self {
        let hops = antennas.len().saturating_sub(1);
        Self {
            antennas,
            n_streams,
            corr_alpha: vec![alpha; hops],
            corr_beta: vec![beta; hops],
            sigma_e_sq,
            noise_var: 1.0,
        }
    }

    pub fn num_hops(&self) -> usize {
        self.antennas.len().saturating_sub(1)
    }

    pub fn error_models(&self) -> Result<Vec<HopErrorModel>> {
        let k = self.num_hops();
        if k == 0 || self.corr_alpha.len() != k || self.corr_beta.len() != k {
            return Err(Error::Dimension(format!(
                "{} nodes need {} per-hop correlation entries",
                self.antennas.len(),
                k
            )));
        }
        (0..k)
            .map(|h| {
                HopErrorModel::exponential(
                    self.antennas[h + 1],
                    self.antennas[h],
                    self.corr_beta[h],
                    self.corr_alpha[h],
                    self.sigma_e_sq,
                )
            })
            .collect()
    }

    /// Draws estimated channels and returns the chain at per-hop SNR
    /// `P_k / σ² = 10^{snr_db/10}`.
    pub fn draw_chain<R: Rng + ?Sized>(&self, models: &[HopErrorModel], snr_db: f64, rng: &mut R) -> Result<ChainModel> {
        let budget = self.noise_var * 10f64.powf(snr_db / 10.0);
        let hops = models
            .iter()
            .map(|m| {
                HopModel::new(
                    channel::sample_estimated_channel(m, rng),
                    m.effective_sigma(),
                    m.psi().clone(),
                    self.noise_var,
                    budget,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        ChainModel::new(hops, self.n_streams)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub template: ChainTemplate,
    pub snr_grid_db: Vec<f64>,
    pub trials: usize,
    /// Payload bits per stream per trial, i.e. twice the number of QPSK
    /// symbols each stream sends in one trial.
    pub symbols_per_trial: usize,
    pub seed: u64,
    pub designs: Vec<DesignSpec>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Parameter("trials must be at least 1".into()));
        }
        if self.symbols_per_trial == 0 || !self.symbols_per_trial.is_multiple_of(2) {
            return Err(Error::Parameter("symbols per trial must be positive and even".into()));
        }
        if self.designs.is_empty() || self.snr_grid_db.is_empty() {
            return Err(Error::Parameter("need at least one design and one SNR point".into()));
        }
        if !(self.template.noise_var > 0.0) || self.template.n_streams == 0 {
            return Err(Error::Parameter("noise variance and stream count must be positive".into()));
        }
        self.template.error_models().map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PointStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimPoint {
    pub design: DesignSpec,
    pub snr_db: f64,
    pub errors: u64,
    pub bits: u64,
    pub status: PointStatus,
}

impl SimPoint {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            f64::NAN
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    pub fn wilson(&self) -> (f64, f64) {
        wilson_interval(self.errors, self.bits)
    }

    pub fn wilson_halfwidth(&self) -> f64 {
        let (lo, hi) = self.wilson();
        (hi - lo) / 2.0
    }

    pub fn is_ok(&self) -> bool {
        self.status == PointStatus::Ok
    }

    /// Lower BER than `other` with disjoint 95% Wilson intervals.
    pub fn separated_below(&self, other: &SimPoint) -> bool {
        self.is_ok() && other.is_ok() && self.wilson().1 < other.wilson().0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub points: Vec<SimPoint>,
}

pub const CSV_HEADER: &str = "design,objective,snr_db,ber,bits,errors,ci95,status";

impl SimResult {
    pub fn point(&self, design: DesignSpec, snr_db: f64) -> Option<&SimPoint> {
        self.points.iter().find(|p| p.design == design && p.snr_db == snr_db)
    }

    pub fn curve(&self, design: DesignSpec) -> Vec<&SimPoint> {
        self.points.iter().filter(|p| p.design == design).collect()
    }

    /// One row per (design, SNR), designs in configuration order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            let status = match &p.status {
                PointStatus::Ok => "ok".to_string(),
                PointStatus::Failed(msg) => format!("failed: {}", msg.replace([',', '\n', '"'], ";")),
            };
            let _ = writeln!(
                out,
                "{},{},{},{:.6e},{},{},{:.6e},{}",
                p.design.kind.name(),
                p.design.objective.name(),
                p.snr_db,
                p.ber(),
                p.bits,
                p.errors,
                p.wilson_halfwidth(),
                status
            );
        }
        out
    }
}

type TrialOutcome = Vec<std::result::Result<ErrorCount, String>>;

fn sweep_trial(config: &SimConfig, models: &[HopErrorModel], snr_idx: usize, trial: usize) -> TrialOutcome {
    let ids = [snr_idx as u64, trial as u64];
    let mut chan_rng = channel::stream_rng(config.seed, &[ids[0], ids[1], 0]);
    let truth = match config.template.draw_chain(models, config.snr_grid_db[snr_idx], &mut chan_rng) {
        Ok(chain) => chain,
        Err(e) => return vec![Err(e.to_string()); config.designs.len()],
    };
    config
        .designs
        .iter()
        .map(|spec| {
            let (p, g) = spec.transceiver(&truth).map_err(|e| e.to_string())?;
            let mut link_rng = channel::stream_rng(config.seed, &[ids[0], ids[1], 1]);
            run_trial(&truth, &p, &g, config.symbols_per_trial / 2, &mut link_rng)
                .map_err(|e| e.to_string())
        })
        .collect()
}

pub fn run_sweep(config: &SimConfig, exec: Execution) -> Result<SimResult> {
    config.validate()?;
    let models = config.template.error_models()?;
    let n_snr = config.snr_grid_db.len();
    let outcomes = par::map_indexed(exec, n_snr * config.trials, |idx| {
        sweep_trial(config, &models, idx / config.trials, idx % config.trials)
    });

    let mut points = Vec::with_capacity(config.designs.len() * n_snr);
    for (d, spec) in config.designs.iter().enumerate() {
        for (s, &snr_db) in config.snr_grid_db.iter().enumerate() {
            let mut total = ErrorCount::default();
            let mut failure = None;
            for outcome in &outcomes[s * config.trials..(s + 1) * config.trials] {
                match &outcome[d] {
                    Ok(count) => total += *count,
                    Err(msg) => {
                        failure.get_or_insert_with(|| msg.clone());
                    }
                }
            }
            points.push(match failure {
                None => SimPoint {
                    design: *spec,
                    snr_db,
                    errors: total.errors,
                    bits: total.bits,
                    status: PointStatus::Ok,
                },
                Some(msg) => SimPoint {
                    design: *spec,
                    snr_db,
                    errors: 0,
                    bits: 0,
                    status: PointStatus::Failed(msg),
                },
            });
        }
    }
    Ok(SimResult { points })
}
