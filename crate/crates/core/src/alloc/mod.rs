//! Link selection and subchannel assignment with the signal design held
//! fixed: an exact enumerative solver for small networks and a greedy
//! sequential allocator.

mod exact;
mod greedy;

use std::time::Duration;

use num_complex::Complex64;

use crate::error::Result;
use crate::model::{
    self, local_energy, offload_energy, rate_from_sinr, Allocation, BeamformingState, CMatrix, CVector, ChannelSet,
    EnergyBreakdown, Link, NetworkInstance,
};

pub use exact::{exact_allocate, exact_allocate_with, DEFAULT_EXACT_NODE_CAP};
pub use greedy::{greedy_allocate, greedy_allocate_with};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocOptions {
    /// Upper bound on accepted links, below the structural `floor(K/2)`.
    pub max_links: Option<usize>,
    /// Largest network the exact solver will enumerate.
    pub max_nodes: usize,
}

impl Default for AllocOptions {
    fn default() -> Self {
        Self {
            max_links: None,
            max_nodes: DEFAULT_EXACT_NODE_CAP,
        }
    }
}

impl AllocOptions {
    pub fn with_max_links(max_links: Option<usize>) -> Self {
        Self {
            max_links,
            ..Self::default()
        }
    }

    fn link_cap(&self, net: &NetworkInstance) -> usize {
        self.max_links.map_or(net.max_links(), |m| m.min(net.max_links()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SavedEnergy {
    pub tx: usize,
    pub rx: usize,
    pub subchannel: Option<usize>,
    /// Local energy of `tx` minus the energy of offloading its task to `rx`.
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverStats {
    pub nodes_explored: u64,
    pub candidates_evaluated: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocResult {
    pub allocation: Allocation,
    pub energy: EnergyBreakdown,
    pub stats: SolverStats,
}

/// Signals used for each candidate pair while the allocation is searched.
///
/// A pair `(k, k')` transmits with node `k`'s stored beamformer and receives
/// with node `k'`'s stored combiner. Missing entries fall back to the
/// dominant singular vectors of `H_{k,k'}`, with the beamformer carrying
/// power `P / floor(K/2)`. Combiners are normalized so rates use `sigma^2`
/// as the noise term.
#[derive(Debug, Clone)]
pub struct SignalPlan<'a> {
    net: &'a NetworkInstance,
    pairs: Vec<(usize, usize)>,
    slot: Vec<Option<usize>>,
    beamformers: Vec<CVector>,
    combiners: Vec<CVector>,
    signal: Vec<f64>,
    /// `cross[n * P + m]`: power leaked by pair `m`'s transmitter into pair
    /// `n`'s receiver; zero for pairs that can never coexist.
    cross: Vec<f64>,
}

/// Dominant left and right singular vectors of `h`.
pub fn dominant_singular_vectors(h: &CMatrix) -> (CVector, CVector) {
    let svd = h.clone().svd(true, true);
    let best = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map_or(0, |(i, _)| i);
    let u = svd.u.expect("requested U").column(best).into_owned();
    let v = svd.v_t.expect("requested V^H").row(best).adjoint();
    (u, v)
}

fn gain(z: &CVector, h: &CMatrix, g: &CVector) -> f64 {
    (z.adjoint() * h * g)[(0, 0)].norm_sqr()
}

impl<'a> SignalPlan<'a> {
    pub fn new(net: &'a NetworkInstance, ch: &ChannelSet, bf: &BeamformingState, pairs: &[(usize, usize)]) -> Self {
        let k = net.num_nodes();
        let default_power = net.power_budget / net.max_links().max(1) as f64;
        let mut slot = vec![None; k * k];
        let mut uniq: Vec<(usize, usize)> = Vec::with_capacity(pairs.len());
        for &(tx, rx) in pairs {
            if slot[tx * k + rx].is_none() {
                slot[tx * k + rx] = Some(uniq.len());
                uniq.push((tx, rx));
            }
        }
        let mut beamformers = Vec::with_capacity(uniq.len());
        let mut combiners = Vec::with_capacity(uniq.len());
        for &(tx, rx) in &uniq {
            let stored_g = bf.beamformer(tx).cloned();
            let stored_z = bf.combiner(rx).filter(|z| z.norm() > 0.0).cloned();
            let (g, z) = match (stored_g, stored_z) {
                (Some(g), Some(z)) => (g, z),
                (g, z) => {
                    let (u, v) = dominant_singular_vectors(ch.get(tx, rx));
                    (
                        g.unwrap_or_else(|| v * Complex64::from(default_power.sqrt())),
                        z.unwrap_or(u),
                    )
                }
            };
            let z_norm = z.norm();
            beamformers.push(g);
            combiners.push(z / Complex64::from(z_norm));
        }
        let n_pairs = uniq.len();
        let signal = (0..n_pairs)
            .map(|p| gain(&combiners[p], ch.get(uniq[p].0, uniq[p].1), &beamformers[p]))
            .collect();
        let mut cross = vec![0.0; n_pairs * n_pairs];
        for n in 0..n_pairs {
            let (tx_n, rx_n) = uniq[n];
            for m in 0..n_pairs {
                let (tx_m, rx_m) = uniq[m];
                if m == n || tx_m == tx_n || tx_m == rx_n || rx_m == rx_n || rx_m == tx_n {
                    continue;
                }
                cross[n * n_pairs + m] = gain(&combiners[n], ch.get(tx_m, rx_n), &beamformers[m]);
            }
        }
        Self {
            net,
            pairs: uniq,
            slot,
            beamformers,
            combiners,
            signal,
            cross,
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_index(&self, tx: usize, rx: usize) -> Option<usize> {
        self.slot[tx * self.net.num_nodes() + rx]
    }

    /// Provisioned `(beamformer, unit combiner)` for pair index `p`.
    pub fn signals(&self, p: usize) -> (&CVector, &CVector) {
        (&self.beamformers[p], &self.combiners[p])
    }

    pub fn tx_power(&self, p: usize) -> f64 {
        self.beamformers[p].norm_squared()
    }

    /// Rate of pair `p` with interference from the listed pairs.
    pub fn rate_with<I>(&self, p: usize, interferers: I) -> f64
    where
        I: IntoIterator<Item = usize>,
    {
        let n = self.pairs.len();
        let interference: f64 = interferers.into_iter().map(|m| self.cross[p * n + m]).sum();
        rate_from_sinr(self.net.bandwidth, self.signal[p] / (interference + self.net.noise_power))
    }

    pub fn free_rate(&self, p: usize) -> f64 {
        self.rate_with(p, std::iter::empty())
    }

    fn link_pair(&self, link: &Link) -> usize {
        self.pair_index(link.tx, link.rx)
            .expect("allocation only uses pairs known to the plan")
    }

    /// Rates of every link in `alloc` under full mutual co-channel
    /// interference.
    pub fn link_rates(&self, alloc: &Allocation) -> Vec<f64> {
        let idx: Vec<usize> = alloc.links().iter().map(|l| self.link_pair(l)).collect();
        alloc
            .links()
            .iter()
            .enumerate()
            .map(|(n, l)| {
                let others = alloc
                    .links()
                    .iter()
                    .enumerate()
                    .filter(move |(m, o)| *m != n && o.subchannel == l.subchannel)
                    .map(|(m, _)| idx[m]);
                self.rate_with(idx[n], others)
            })
            .collect()
    }

    pub fn energy(&self, alloc: &Allocation) -> Result<EnergyBreakdown> {
        let rates = self.link_rates(alloc);
        let powers: Vec<f64> = alloc.links().iter().map(|l| self.tx_power(self.link_pair(l))).collect();
        model::total_energy(self.net, alloc, &rates, &powers)
    }

    /// Saved energy of pair `p` at the given rate.
    pub fn saved_at_rate(&self, p: usize, rate: f64) -> Result<f64> {
        let (tx, rx) = self.pairs[p];
        Ok(local_energy(tx, self.net) - offload_energy(tx, rx, rate, self.tx_power(p), self.net)?)
    }

    /// Copies `base` and installs the provisioned signals of every link in
    /// `alloc`, so that `model::evaluate` on the result reproduces
    /// [`SignalPlan::energy`].
    pub fn materialize(&self, alloc: &Allocation, base: &BeamformingState) -> BeamformingState {
        let mut out = base.clone();
        for l in alloc.links() {
            let p = self.link_pair(l);
            out.beamformers[l.tx] = Some(self.beamformers[p].clone());
            out.combiners[l.rx] = Some(self.combiners[p].clone());
        }
        out
    }
}

/// Energy saved by offloading `tx`'s task to `rx`. Without a subchannel the
/// rate is interference-free; with one, it includes interference from the
/// links of `partial` already on that subchannel.
pub fn saved_energy(
    tx: usize,
    rx: usize,
    subchannel: Option<usize>,
    partial: &Allocation,
    bf: &BeamformingState,
    ch: &ChannelSet,
    net: &NetworkInstance,
) -> Result<SavedEnergy> {
    let mut pairs: Vec<(usize, usize)> = partial.links().iter().map(Link::pair).collect();
    pairs.push((tx, rx));
    let plan = SignalPlan::new(net, ch, bf, &pairs);
    let p = plan.pair_index(tx, rx).expect("pair registered");
    let rate = match subchannel {
        None => plan.free_rate(p),
        Some(i) => plan.rate_with(
            p,
            partial
                .links()
                .iter()
                .filter(|l| l.subchannel == i)
                .map(|l| plan.link_pair(l)),
        ),
    };
    Ok(SavedEnergy {
        tx,
        rx,
        subchannel,
        value: plan.saved_at_rate(p, rate)?,
    })
}

/// Relative tolerance under which two energies count as tied.
pub(crate) const TIE_TOLERANCE: f64 = 1e-12;

/// Whether `(value, alloc)` beats the incumbent: strictly lower energy, or a
/// tie broken by fewer links and then lexicographic link order.
pub(crate) fn improves(value: f64, alloc: &Allocation, best_value: f64, best: &Allocation) -> bool {
    let tol = TIE_TOLERANCE * best_value.abs().max(1.0);
    if value < best_value - tol {
        return true;
    }
    if value > best_value + tol {
        return false;
    }
    (alloc.len(), alloc.links()) < (best.len(), best.links())
}
