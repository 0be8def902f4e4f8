//! Shared fixtures and an independent link simulator for the integration
//! tests. The simulator is written against the signal model directly and
//! does not go through `af_relay::sim`.
#![allow(dead_code)]

use af_relay::channel;
use af_relay::linalg::{self, cr, CMatrix, CVector};
use af_relay::mse::{ChainModel, HopModel, PrecoderSet};
use rand::Rng;

/// Random PSD matrix `c · A Aᴴ / n` with `A` complex Gaussian.
pub fn random_psd<R: Rng + ?Sized>(n: usize, c: f64, rng: &mut R) -> CMatrix {
    let a = channel::complex_gaussian(n, n, rng);
    linalg::hermitize(&(&a * a.adjoint() * cr(c / n as f64)))
}

/// Chain through nodes with the given antenna counts (source first) and
/// general (non-proportional) error correlations.
pub fn random_chain<R: Rng + ?Sized>(antennas: &[usize], n: usize, err: f64, budget: f64, rng: &mut R) -> ChainModel {
    let hops = antennas
        .windows(2)
        .map(|w| {
            let (tx, rx) = (w[0], w[1]);
            HopModel::new(
                channel::complex_gaussian(rx, tx, rng),
                random_psd(rx, err, rng),
                random_psd(tx, 1.0, rng),
                0.5 + rng.random::<f64>(),
                budget * (0.5 + rng.random::<f64>()),
            )
            .unwrap()
        })
        .collect();
    ChainModel::new(hops, n).unwrap()
}

/// Random precoders at their power budgets.
pub fn random_precoders<R: Rng + ?Sized>(chain: &ChainModel, rng: &mut R) -> PrecoderSet {
    let raw = PrecoderSet::new(
        (0..chain.num_hops())
            .map(|k| channel::complex_gaussian(chain.hop(k).n_tx, chain.input_dim(k), rng))
            .collect(),
    );
    af_relay::mse::scale_to_budgets(chain, &raw).unwrap()
}

pub struct Realization {
    pub s: CVector,
    /// Received vectors `x_1..x_K`; the last one is `y`.
    pub x: Vec<CVector>,
}

/// One symbol vector through freshly drawn channel errors and noise.
pub fn simulate_once<R: Rng + ?Sized>(chain: &ChainModel, p: &PrecoderSet, rng: &mut R) -> Realization {
    let n = chain.n_streams();
    let s = channel::complex_gaussian(n, 1, rng).column(0).into_owned();
    let mut prev = s.clone();
    let mut x = Vec::with_capacity(chain.num_hops());
    for (hop, pk) in chain.hops().iter().zip(&p.p) {
        let dh = channel::kronecker_sample(
            &linalg::psd_sqrt(&hop.err_sigma),
            &linalg::psd_sqrt(&hop.err_psi),
            1.0,
            rng,
        );
        let noise = channel::complex_gaussian(hop.m_rx, 1, rng).column(0) * cr(hop.noise_var.sqrt());
        let xk = (&hop.hbar + dh) * (pk * &prev) + noise;
        x.push(xk.clone());
        prev = xk;
    }
    Realization { s, x }
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn within_3se(xs: &[f64], expected: f64) -> bool {
    let (mean, se) = mean_and_se(xs);
    (mean - expected).abs() <= 3.0 * se
}
