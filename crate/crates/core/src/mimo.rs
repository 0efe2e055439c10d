//! Transmit beamformer, power and receive combiner design for a fixed
//! allocation.
//!
//! The communication demand is bounded by `P * sum_n I_n / R_n` and the
//! resulting harmonic-rate problem is handled through its weighted MMSE
//! equivalent: MMSE combiners, closed-form weights `w = 1 / (e ln^2 e)`,
//! and a sum-power constrained quadratic program for the beamformers solved
//! through its KKT conditions with a bisection on the multiplier.

use nalgebra::linalg::SymmetricEigen;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alloc::dominant_singular_vectors;
use crate::model::{self, Allocation, BeamformingState, CMatrix, CVector, ChannelSet, NetworkInstance};

/// Logarithm used in the weight formula. The beamformers do not depend on
/// the choice; it only rescales every weight by the same constant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightLog {
    #[default]
    Natural,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WmmseConfig {
    /// Stop once `|sum log2 w - sum log2 w'|` drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relative accuracy of the total power when the budget binds.
    pub bisection_tolerance: f64,
    /// MSE values are clamped to `[floor, 1 - floor]` before weighting.
    pub mse_floor: f64,
    /// Links below this rate (bits/s) are reported back to the caller.
    pub rate_floor: f64,
    pub weight_log: WeightLog,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            max_iterations: 100,
            bisection_tolerance: 1e-12,
            mse_floor: 1e-12,
            rate_floor: 1.0,
            weight_log: WeightLog::Natural,
        }
    }
}

impl WmmseConfig {
    fn weight_scale(&self) -> f64 {
        match self.weight_log {
            WeightLog::Natural => 1.0,
            WeightLog::Binary => std::f64::consts::LN_2.powi(2),
        }
    }
}

/// Iterate of the weighted MMSE loop, indexed by link.
#[derive(Debug, Clone, PartialEq)]
pub struct WmmseState {
    pub beamformers: Vec<CVector>,
    /// Unnormalized MMSE combiners.
    pub combiners: Vec<CVector>,
    pub weights: Vec<f64>,
    pub mse: Vec<f64>,
    pub surrogate_value: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseOutcome {
    /// Input state with every allocated link's beamformer and unit-norm
    /// combiner replaced.
    pub state: BeamformingState,
    pub iterate: WmmseState,
    pub converged: bool,
    pub iterations: usize,
    /// Weighted MMSE objective after each full round.
    pub surrogate_trace: Vec<f64>,
    /// Per-link transmit powers `||g_n||^2`.
    pub powers: Vec<f64>,
    /// Links whose final rate is below the configured floor.
    pub low_rate_links: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSolution {
    pub beamformers: Vec<CVector>,
    /// KKT multiplier of the sum-power constraint.
    pub multiplier: f64,
}

fn cross(alloc: &Allocation, ch: &ChannelSet, from: usize, to: usize) -> CMatrix {
    ch.get(alloc.links()[from].tx, alloc.links()[to].rx).clone()
}

fn co_channel(alloc: &Allocation, n: usize) -> impl Iterator<Item = usize> + '_ {
    let sub = alloc.links()[n].subchannel;
    alloc
        .links()
        .iter()
        .enumerate()
        .filter(move |(_, l)| l.subchannel == sub)
        .map(|(m, _)| m)
}

fn inner(a: &CVector, b: &CVector) -> Complex64 {
    a.dotc(b)
}

/// Receive covariance `J_n`: co-channel signal covariance (own link
/// included) plus `sigma^2 I`.
pub fn receive_covariance(n: usize, g: &[CVector], alloc: &Allocation, ch: &ChannelSet, noise: f64) -> CMatrix {
    let dim = ch.get(alloc.links()[n].tx, alloc.links()[n].rx).nrows();
    let mut j = CMatrix::identity(dim, dim) * Complex64::from(noise);
    for m in co_channel(alloc, n) {
        let a = cross(alloc, ch, m, n) * &g[m];
        j += &a * a.adjoint();
    }
    j
}

/// MMSE combiner `J_n^{-1} H_nn g_n`, which also maximizes the link's SINR.
pub fn mmse_combiner(n: usize, g: &[CVector], alloc: &Allocation, ch: &ChannelSet, noise: f64) -> CVector {
    let j = receive_covariance(n, g, alloc, ch, noise);
    let a = cross(alloc, ch, n, n) * &g[n];
    j.cholesky()
        .expect("receive covariance is positive definite")
        .solve(&a)
}

/// Mean square error of link `n` with combiner `z`; the noise term scales
/// with `||z||^2`.
pub fn link_mse(n: usize, z: &CVector, g: &[CVector], alloc: &Allocation, ch: &ChannelSet, noise: f64) -> f64 {
    let desired = inner(z, &(cross(alloc, ch, n, n) * &g[n]));
    let mut e = (Complex64::from(1.0) - desired).norm_sqr() + noise * z.norm_squared();
    for m in co_channel(alloc, n) {
        if m != n {
            e += inner(z, &(cross(alloc, ch, m, n) * &g[m])).norm_sqr();
        }
    }
    e
}

fn clamp_mse(e: f64, cfg: &WmmseConfig) -> f64 {
    e.clamp(cfg.mse_floor, 1.0 - cfg.mse_floor)
}

/// `w = 1 / (e log^2 e)` after clamping `e` into `(0, 1)`.
pub fn update_weight(e: f64, cfg: &WmmseConfig) -> f64 {
    let e = clamp_mse(e, cfg);
    let log = match cfg.weight_log {
        WeightLog::Natural => e.ln(),
        WeightLog::Binary => e.log2(),
    };
    1.0 / (e * log * log)
}

/// `c(x) = -1 / ln x`.
fn harmonic_cost(x: f64) -> f64 {
    -1.0 / x.ln()
}

struct LinkQuadratic {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
    /// Coordinates of the linear term in the eigenbasis.
    projected: Vec<Complex64>,
}

impl LinkQuadratic {
    fn power(&self, mu: f64, pseudo: bool) -> f64 {
        let top = self.eigenvalues.iter().cloned().fold(0.0, f64::max);
        self.eigenvalues
            .iter()
            .zip(&self.projected)
            .filter(|(l, _)| !(pseudo && **l <= 1e-12 * top))
            .map(|(l, c)| c.norm_sqr() / (l + mu).powi(2))
            .sum()
    }

    fn solve(&self, mu: f64, pseudo: bool) -> CVector {
        let top = self.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let coords = CVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().zip(&self.projected).map(|(l, c)| {
                if pseudo && *l <= 1e-12 * top {
                    Complex64::from(0.0)
                } else {
                    c / (l + mu)
                }
            }),
        );
        &self.eigenvectors * coords
    }
}

/// Quadratic `A_n` and linear term `b_n` of the beamformer subproblem for
/// link `n`.
fn link_quadratic(n: usize, z: &[CVector], w: &[f64], data: &[f64], alloc: &Allocation, ch: &ChannelSet) -> (CMatrix, CVector) {
    let h = cross(alloc, ch, n, n);
    let dim = h.ncols();
    let mut a = CMatrix::zeros(dim, dim);
    for m in co_channel(alloc, n) {
        // Leakage of link n's transmitter into receiver m, seen through z_m.
        let hz = cross(alloc, ch, n, m).adjoint() * &z[m];
        a += (&hz * hz.adjoint()) * Complex64::from(data[m] * w[m]);
    }
    let b = h.adjoint() * &z[n] * Complex64::from(data[n] * w[n]);
    let a = (&a + a.adjoint()) * Complex64::from(0.5);
    (a, b)
}

/// Objective of the beamformer subproblem (terms independent of `g`
/// dropped).
pub fn beamformer_objective(
    g: &[CVector],
    z: &[CVector],
    w: &[f64],
    data: &[f64],
    alloc: &Allocation,
    ch: &ChannelSet,
) -> f64 {
    let mut total = 0.0;
    for n in 0..alloc.len() {
        let desired = inner(&z[n], &(cross(alloc, ch, n, n) * &g[n]));
        total += data[n] * w[n] * (Complex64::from(1.0) - desired).norm_sqr();
        for m in co_channel(alloc, n) {
            if m != n {
                let leak = inner(&z[m], &(cross(alloc, ch, n, m) * &g[n]));
                total += data[m] * w[m] * leak.norm_sqr();
            }
        }
    }
    total
}

/// Minimizes the weighted MSE over beamformers subject to
/// `sum ||g_n||^2 <= P`. With multiplier `mu`, `g_n = (A_n + mu I)^{-1} b_n`;
/// `mu = 0` when the unconstrained minimizer fits the budget, otherwise the
/// total power is strictly decreasing in `mu` and bisection finds the root.
/// The returned point never exceeds the budget.
pub fn solve_beamformers(
    z: &[CVector],
    w: &[f64],
    data: &[f64],
    alloc: &Allocation,
    ch: &ChannelSet,
    net: &NetworkInstance,
    bisection_tolerance: f64,
) -> BeamformerSolution {
    let budget = net.power_budget;
    let links: Vec<LinkQuadratic> = (0..alloc.len())
        .map(|n| {
            let (a, b) = link_quadratic(n, z, w, data, alloc, ch);
            let eig = SymmetricEigen::new(a);
            let projected = (eig.eigenvectors.adjoint() * &b).iter().cloned().collect();
            LinkQuadratic {
                eigenvalues: eig.eigenvalues.iter().map(|l| l.max(0.0)).collect(),
                eigenvectors: eig.eigenvectors,
                projected,
            }
        })
        .collect();
    let total = |mu: f64, pseudo: bool| links.iter().map(|q| q.power(mu, pseudo)).sum::<f64>();

    if total(0.0, true) <= budget {
        return BeamformerSolution {
            beamformers: links.iter().map(|q| q.solve(0.0, true)).collect(),
            multiplier: 0.0,
        };
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while total(hi, false) > budget {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..1000 {
        let p_hi = total(hi, false);
        if budget - p_hi <= bisection_tolerance * budget || hi - lo <= f64::EPSILON * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if total(mid, false) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    BeamformerSolution {
        beamformers: links.iter().map(|q| q.solve(hi, false)).collect(),
        multiplier: hi,
    }
}

/// Weighted MMSE objective of a round: `sum I_n (w_n e_n + c(x_n) - w_n x_n)`
/// with `x_n` the MSE the weight was computed from.
fn surrogate(data: &[f64], weights: &[f64], mse_now: &[f64], mse_weighted: &[f64], scale: f64) -> f64 {
    (0..data.len())
        .map(|n| data[n] * (weights[n] * mse_now[n] + scale * harmonic_cost(mse_weighted[n]) - weights[n] * mse_weighted[n]))
        .sum()
}

fn initial_beamformers(alloc: &Allocation, ch: &ChannelSet, net: &NetworkInstance, init: &BeamformingState) -> Vec<CVector> {
    let fallback_power = net.power_budget / alloc.len() as f64;
    alloc
        .links()
        .iter()
        .map(|l| {
            let dim = net.nodes[l.tx].tx_antennas;
            match init.beamformer(l.tx) {
                Some(g) if g.len() == dim && g.norm() > 0.0 => g.clone(),
                _ => dominant_singular_vectors(ch.get(l.tx, l.rx)).1 * Complex64::from(fallback_power.sqrt()),
            }
        })
        .collect()
}

/// Alternates MMSE combiners, weights and the beamformer QP until the sum of
/// log-weights settles. Without convergence the iterate with the lowest
/// surrogate value is returned. Exported combiners are the MMSE receivers of
/// the exported beamformers, normalized.
pub fn wmmse_optimize(
    alloc: &Allocation,
    ch: &ChannelSet,
    net: &NetworkInstance,
    cfg: &WmmseConfig,
    init: &BeamformingState,
) -> WmmseOutcome {
    let num_links = alloc.len();
    if num_links == 0 {
        return WmmseOutcome {
            state: init.clone(),
            iterate: WmmseState {
                beamformers: Vec::new(),
                combiners: Vec::new(),
                weights: Vec::new(),
                mse: Vec::new(),
                surrogate_value: 0.0,
                iteration: 0,
            },
            converged: true,
            iterations: 0,
            surrogate_trace: Vec::new(),
            powers: Vec::new(),
            low_rate_links: Vec::new(),
        };
    }
    let noise = net.noise_power;
    let scale = cfg.weight_scale();
    let data: Vec<f64> = alloc.links().iter().map(|l| net.nodes[l.tx].data_length).collect();

    let mut g = initial_beamformers(alloc, ch, net, init);
    let mut weights = vec![2.0; num_links];
    let mut trace = Vec::new();
    let mut best: Option<WmmseState> = None;
    let mut last: Option<WmmseState> = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iterations {
        iterations += 1;
        let z: Vec<CVector> = (0..num_links).map(|n| mmse_combiner(n, &g, alloc, ch, noise)).collect();
        let previous = std::mem::take(&mut weights);
        let weighted_mse: Vec<f64> = (0..num_links)
            .map(|n| clamp_mse(link_mse(n, &z[n], &g, alloc, ch, noise), cfg))
            .collect();
        weights = weighted_mse.iter().map(|&e| update_weight(e, cfg)).collect();
        g = solve_beamformers(&z, &weights, &data, alloc, ch, net, cfg.bisection_tolerance).beamformers;

        let mse: Vec<f64> = (0..num_links).map(|n| link_mse(n, &z[n], &g, alloc, ch, noise)).collect();
        let value = surrogate(&data, &weights, &mse, &weighted_mse, scale);
        trace.push(value);
        let state = WmmseState {
            beamformers: g.clone(),
            combiners: z,
            weights: weights.clone(),
            mse,
            surrogate_value: value,
            iteration: iterations,
        };
        if best.as_ref().map_or(true, |b| value < b.surrogate_value) {
            best = Some(state.clone());
        }
        last = Some(state);

        let change: f64 = weights.iter().map(|w| w.log2()).sum::<f64>() - previous.iter().map(|w| w.log2()).sum::<f64>();
        if change.abs() < cfg.tolerance {
            converged = true;
            break;
        }
    }

    let iterate = if converged { last } else { best }.expect("at least one round ran");
    let mut state = init.clone();
    let mut powers = Vec::with_capacity(num_links);
    for (n, l) in alloc.links().iter().enumerate() {
        let z = mmse_combiner(n, &iterate.beamformers, alloc, ch, noise);
        let z_norm = z.norm();
        state.beamformers[l.tx] = Some(iterate.beamformers[n].clone());
        if z_norm > 0.0 {
            state.combiners[l.rx] = Some(z / Complex64::from(z_norm));
        }
        powers.push(iterate.beamformers[n].norm_squared());
    }
    let low_rate_links = (0..num_links)
        .filter(|&n| model::link_rate(n, alloc, &state, ch, net).map_or(true, |r| r < cfg.rate_floor))
        .collect();

    WmmseOutcome {
        state,
        iterate,
        converged,
        iterations,
        surrogate_trace: trace,
        powers,
        low_rate_links,
    }
}
