//! Alternating decomposition: resource allocation with signals fixed, then
//! signal design with the allocation fixed, from several random starts.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alloc::{exact_allocate_with, greedy_allocate_with, AllocOptions, SignalPlan, DEFAULT_EXACT_NODE_CAP};
use crate::error::{Error, Result};
use crate::mimo::{wmmse_optimize, WmmseConfig};
use crate::model::{
    self, candidate_links, local_baseline, Allocation, BeamformingState, CVector, ChannelSet, EnergyBreakdown, Link,
    NetworkInstance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocatorKind {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Report {
    #[default]
    Best,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub num_restarts: usize,
    /// Cap on allocation/signal-design alternations per restart.
    pub alternations: usize,
    pub allocator: AllocatorKind,
    pub rng_seed: u64,
    pub report: Report,
    pub max_links: Option<usize>,
    /// Relative change in total energy below which a restart stops.
    pub convergence_tolerance: f64,
    pub wmmse: WmmseConfig,
    pub exact_node_cap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_restarts: 10,
            alternations: 10,
            allocator: AllocatorKind::Greedy,
            rng_seed: 0,
            report: Report::Best,
            max_links: None,
            convergence_tolerance: 1e-6,
            wmmse: WmmseConfig::default(),
            exact_node_cap: DEFAULT_EXACT_NODE_CAP,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_restarts == 0 || self.alternations == 0 {
            return Err(Error::Config("restarts and alternations must be at least 1".into()));
        }
        if self.wmmse.max_iterations == 0 {
            return Err(Error::Config("max WMMSE iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub energy: EnergyBreakdown,
    pub num_links: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub allocation: Allocation,
    pub beamforming: BeamformingState,
    pub energy: EnergyBreakdown,
    /// Starting point followed by one entry per alternation.
    pub trajectory: Vec<IterationRecord>,
    pub restart_index: usize,
    pub alternations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub best: Solution,
    pub restart_energies: Vec<EnergyBreakdown>,
    pub mean_energy: EnergyBreakdown,
    /// Per-alternation mean over restarts; shorter trajectories are padded
    /// with their final value.
    pub mean_trajectory: Vec<EnergyBreakdown>,
}

impl RunOutcome {
    pub fn reported(&self, report: Report) -> EnergyBreakdown {
        match report {
            Report::Best => self.best.energy,
            Report::Mean => self.mean_energy,
        }
    }
}

/// SplitMix64 finalizer; keys independent RNG streams by `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const RANDOM_BASELINE_STREAM: u64 = 0xB45E_11AE;

/// Uniform sample from the unit sphere in `C^dim`.
pub fn unit_sphere<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CVector {
    loop {
        let v = CVector::from_fn(dim, |_, _| {
            Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
        });
        let norm = v.norm();
        if norm > 0.0 {
            return v / Complex64::from(norm);
        }
    }
}

fn random_signals<R: Rng + ?Sized>(rng: &mut R, net: &NetworkInstance) -> BeamformingState {
    let amplitude = Complex64::from((net.power_budget / net.max_links() as f64).sqrt());
    let mut bf = BeamformingState::empty(net.num_nodes());
    for (k, node) in net.nodes.iter().enumerate() {
        bf.beamformers[k] = Some(unit_sphere(rng, node.tx_antennas) * amplitude);
        bf.combiners[k] = Some(unit_sphere(rng, node.rx_antennas));
    }
    bf
}

/// Random starting point: node-disjoint candidate links up to `floor(K/2)`
/// with random subchannels, and for every node a random transmit direction
/// at power `P / floor(K/2)` and a random unit combiner.
pub fn initialize(net: &NetworkInstance, seed: u64) -> (Allocation, BeamformingState) {
    let mut candidates = candidate_links(net);
    if candidates.is_empty() {
        return (Allocation::empty(), BeamformingState::empty(net.num_nodes()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    let mut alloc = Allocation::empty();
    for (tx, rx) in candidates {
        if alloc.len() == net.max_links() {
            break;
        }
        if !alloc.uses_node(tx) && !alloc.uses_node(rx) {
            alloc.push(Link::new(tx, rx, rng.random_range(0..net.num_subchannels)));
        }
    }
    let bf = random_signals(&mut rng, net);
    (alloc, bf)
}

/// Evaluates the configuration, dropping links whose rate is zero until the
/// remainder is feasible.
fn settle(
    net: &NetworkInstance,
    mut alloc: Allocation,
    bf: &BeamformingState,
    ch: &ChannelSet,
) -> Result<(Allocation, EnergyBreakdown)> {
    loop {
        match model::evaluate(net, &alloc, bf, ch) {
            Ok(e) => return Ok((alloc, e)),
            Err(Error::DegenerateSignal { link }) => {
                alloc = Allocation::new(alloc.links().iter().enumerate().filter(|(n, _)| *n != link).map(|(_, l)| *l).collect());
            }
            Err(Error::MissingSignal { node, .. }) => {
                alloc = Allocation::new(alloc.links().iter().filter(|l| !l.touches(node)).copied().collect());
            }
            Err(Error::InfeasibleLink { tx, rx, .. }) => {
                alloc = Allocation::new(alloc.links().iter().filter(|l| (l.tx, l.rx) != (tx, rx)).copied().collect());
            }
            Err(e) => return Err(e),
        }
    }
}

/// Keeps only the signals the allocation uses. Idle nodes lose theirs, so the
/// next allocation step scores their links on the dominant eigenmode instead
/// of a stale random start.
fn retain_active(bf: &BeamformingState, alloc: &Allocation) -> BeamformingState {
    let mut kept = BeamformingState::empty(bf.beamformers.len());
    for l in alloc.links() {
        kept.beamformers[l.tx] = bf.beamformers[l.tx].clone();
        kept.combiners[l.rx] = bf.combiners[l.rx].clone();
    }
    kept
}

pub fn local_solution(net: &NetworkInstance) -> Solution {
    let energy = local_baseline(net);
    Solution {
        allocation: Allocation::empty(),
        beamforming: BeamformingState::empty(net.num_nodes()),
        energy,
        trajectory: vec![IterationRecord { energy, num_links: 0 }],
        restart_index: 0,
        alternations: 0,
    }
}

fn run_restart(net: &NetworkInstance, ch: &ChannelSet, cfg: &RunConfig, restart: usize) -> Result<Solution> {
    let local = local_baseline(net);
    if candidate_links(net).is_empty() {
        return Ok(Solution {
            restart_index: restart,
            ..local_solution(net)
        });
    }
    let (init_alloc, mut bf) = initialize(net, derive_seed(cfg.rng_seed, restart as u64));
    let (alloc, energy) = settle(net, init_alloc, &bf, ch)?;
    let mut trajectory = vec![IterationRecord {
        energy,
        num_links: alloc.len(),
    }];
    let mut best = (energy, alloc, bf.clone());
    let mut previous = energy.total;
    let mut alternations = 0;
    let opts = AllocOptions {
        max_links: cfg.max_links,
        max_nodes: cfg.exact_node_cap,
    };

    for step in 1..=cfg.alternations {
        alternations = step;
        let chosen = match cfg.allocator {
            AllocatorKind::Greedy => greedy_allocate_with(net, &bf, ch, &opts)?,
            AllocatorKind::Exact => exact_allocate_with(net, &bf, ch, &opts)?,
        }
        .allocation;
        let pairs: Vec<(usize, usize)> = chosen.links().iter().map(Link::pair).collect();
        bf = SignalPlan::new(net, ch, &bf, &pairs).materialize(&chosen, &bf);
        bf = wmmse_optimize(&chosen, ch, net, &cfg.wmmse, &bf).state;
        let (alloc, energy) = settle(net, chosen, &bf, ch)?;
        bf = retain_active(&bf, &alloc);
        trajectory.push(IterationRecord {
            energy,
            num_links: alloc.len(),
        });
        if energy.total < best.0.total {
            best = (energy, alloc, bf.clone());
        }
        let converged = (previous - energy.total).abs() < cfg.convergence_tolerance * previous.abs();
        previous = energy.total;
        if converged {
            break;
        }
    }

    let (energy, allocation, beamforming) = if best.0.total > local.total {
        (local, Allocation::empty(), BeamformingState::empty(net.num_nodes()))
    } else {
        best
    };
    Ok(Solution {
        allocation,
        beamforming,
        energy,
        trajectory,
        restart_index: restart,
        alternations,
    })
}

fn mean_breakdown<'a, I: Iterator<Item = &'a EnergyBreakdown>>(items: I) -> EnergyBreakdown {
    let mut count = 0usize;
    let mut sum = EnergyBreakdown {
        total: 0.0,
        communication: 0.0,
        computation: 0.0,
    };
    for e in items {
        count += 1;
        sum.communication += e.communication;
        sum.computation += e.computation;
    }
    let n = count.max(1) as f64;
    let communication = sum.communication / n;
    let computation = sum.computation / n;
    EnergyBreakdown {
        total: communication + computation,
        communication,
        computation,
    }
}

/// Runs every restart and keeps the one with the lowest total energy
/// (lowest restart index on ties), plus mean statistics.
pub fn alternate(net: &NetworkInstance, ch: &ChannelSet, cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    if cfg.allocator == AllocatorKind::Exact && net.num_nodes() > cfg.exact_node_cap {
        return Err(Error::TooLarge {
            nodes: net.num_nodes(),
            cap: cfg.exact_node_cap,
        });
    }
    let restarts = (0..cfg.num_restarts)
        .into_par_iter()
        .map(|r| run_restart(net, ch, cfg, r))
        .collect::<Result<Vec<_>>>()?;

    let restart_energies: Vec<EnergyBreakdown> = restarts.iter().map(|s| s.energy).collect();
    let mean_energy = mean_breakdown(restart_energies.iter());
    let horizon = restarts.iter().map(|s| s.trajectory.len()).max().unwrap_or(1);
    let mean_trajectory = (0..horizon)
        .map(|i| {
            let points: Vec<EnergyBreakdown> = restarts
                .iter()
                .map(|s| s.trajectory[i.min(s.trajectory.len() - 1)].energy)
                .collect();
            mean_breakdown(points.iter())
        })
        .collect();
    let best = restarts
        .into_iter()
        .reduce(|a, b| if b.energy.total < a.energy.total { b } else { a })
        .expect("at least one restart");
    Ok(RunOutcome {
        best,
        restart_energies,
        mean_energy,
        mean_trajectory,
    })
}

/// Partially optimized reference: `floor(K/2)` random disjoint pairs (not
/// restricted to candidates), the slower node of each pair sending to the
/// faster one (lower index on equal speed), random subchannels, then signal
/// design. The energy is reported as is, even above local processing.
pub fn random_wmmse_baseline(net: &NetworkInstance, ch: &ChannelSet, seed: u64, wmmse: &WmmseConfig) -> Result<Solution> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, RANDOM_BASELINE_STREAM));
    let mut order: Vec<usize> = (0..net.num_nodes()).collect();
    order.shuffle(&mut rng);
    let mut alloc = Allocation::empty();
    for pair in order.chunks_exact(2) {
        let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        let (tx, rx) = if net.nodes[b].compute_speed < net.nodes[a].compute_speed {
            (b, a)
        } else {
            (a, b)
        };
        alloc.push(Link::new(tx, rx, rng.random_range(0..net.num_subchannels)));
    }
    let init = random_signals(&mut rng, net);
    let bf = wmmse_optimize(&alloc, ch, net, wmmse, &init).state;
    let (allocation, energy) = settle(net, alloc, &bf, ch)?;
    Ok(Solution {
        allocation,
        beamforming: bf,
        energy,
        trajectory: vec![IterationRecord {
            energy,
            num_links: net.max_links(),
        }],
        restart_index: 0,
        alternations: 1,
    })
}
