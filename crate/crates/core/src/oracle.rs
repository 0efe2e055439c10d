//! Brute-force reference solvers used to check the allocators and the full
//! pipeline on small instances. They share no search code with `alloc`.

use std::collections::BTreeSet;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alloc::dominant_singular_vectors;
use crate::mimo::{wmmse_optimize, WmmseConfig};
use crate::model::{self, Allocation, BeamformingState, ChannelSet, EnergyBreakdown, Link, NetworkInstance};
use crate::optimizer::{derive_seed, unit_sphere};

/// Relative tolerance under which two energies count as equal.
const TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub energy: EnergyBreakdown,
    pub allocations_checked: usize,
}

fn canonical_links(mut links: Vec<(usize, usize, usize)>) -> Vec<(usize, usize, usize)> {
    links.sort_by_key(|&(tx, rx, _)| (tx, rx));
    let mut seen: Vec<usize> = Vec::new();
    for l in &mut links {
        let label = match seen.iter().position(|&s| s == l.2) {
            Some(i) => i,
            None => {
                seen.push(l.2);
                seen.len() - 1
            }
        };
        l.2 = label;
    }
    links
}

fn disjoint_subsets(pairs: &[(usize, usize)], start: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, cap: usize, out: &mut Vec<Vec<(usize, usize)>>) {
    out.push(cur.clone());
    if cur.len() == cap {
        return;
    }
    for i in start..pairs.len() {
        let (a, b) = pairs[i];
        if used[a] || used[b] {
            continue;
        }
        used[a] = true;
        used[b] = true;
        cur.push((a, b));
        disjoint_subsets(pairs, i + 1, used, cur, cap, out);
        cur.pop();
        used[a] = false;
        used[b] = false;
    }
}

/// Every distinct allocation over candidate pairs with at most `cap` links, up
/// to subchannel relabeling, in canonical form and sorted order. The empty
/// allocation comes first.
pub fn enumerate_allocations(net: &NetworkInstance, cap: usize) -> Vec<Allocation> {
    let pairs = model::candidate_links(net);
    let mut subsets = Vec::new();
    disjoint_subsets(&pairs, 0, &mut vec![false; net.num_nodes()], &mut Vec::new(), cap, &mut subsets);
    let s = net.num_subchannels;
    let mut all = BTreeSet::new();
    for subset in subsets {
        let n = subset.len();
        let total = s.pow(n as u32);
        for code in 0..total {
            let mut c = code;
            let links = subset
                .iter()
                .map(|&(tx, rx)| {
                    let sub = c % s;
                    c /= s;
                    (tx, rx, sub)
                })
                .collect();
            all.insert((n, canonical_links(links)));
        }
    }
    all.into_iter()
        .map(|(_, links)| Allocation::new(links.into_iter().map(|(tx, rx, sub)| Link::new(tx, rx, sub)).collect()))
        .collect()
}

fn gain(z: &model::CVector, h: &model::CMatrix, g: &model::CVector) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..h.nrows() {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..h.ncols() {
            row += h[(i, j)] * g[j];
        }
        acc += z[i].conj() * row;
    }
    acc.norm_sqr()
}

/// Total energy computed directly from the node signals, or `None` when some
/// link has no usable rate.
pub fn direct_energy(net: &NetworkInstance, alloc: &Allocation, bf: &BeamformingState, ch: &ChannelSet) -> Option<EnergyBreakdown> {
    let links = alloc.links();
    let mut communication = 0.0;
    let mut computation = 0.0;
    let mut sends = vec![false; net.num_nodes()];
    for l in links {
        let z = bf.combiners.get(l.rx)?.as_ref()?;
        let g = bf.beamformers.get(l.tx)?.as_ref()?;
        let signal = gain(z, ch.get(l.tx, l.rx), g);
        let mut denom = net.noise_power * z.iter().map(|c| c.norm_sqr()).sum::<f64>();
        for o in links {
            if o != l && o.subchannel == l.subchannel {
                let go = bf.beamformers.get(o.tx)?.as_ref()?;
                denom += gain(z, ch.get(o.tx, l.rx), go);
            }
        }
        if !(denom > 0.0) {
            return None;
        }
        let rate = net.bandwidth * (1.0 + signal / denom).log2();
        if !(rate > 0.0) || !rate.is_finite() {
            return None;
        }
        let power: f64 = g.iter().map(|c| c.norm_sqr()).sum();
        let data = net.nodes[l.tx].data_length;
        communication += power * data / rate;
        computation += net.nodes[l.rx].compute_power * data / net.nodes[l.rx].compute_speed;
        sends[l.tx] = true;
    }
    for (k, node) in net.nodes.iter().enumerate() {
        if !sends[k] {
            computation += node.compute_power * node.data_length / node.compute_speed;
        }
    }
    Some(EnergyBreakdown {
        total: communication + computation,
        communication,
        computation,
    })
}

fn better(value: f64, alloc: &Allocation, best_value: f64, best: &Allocation) -> bool {
    let tol = TIE * best_value.abs().max(1.0);
    if (value - best_value).abs() > tol {
        return value < best_value;
    }
    if alloc.len() != best.len() {
        return alloc.len() < best.len();
    }
    alloc.links() < best.links()
}

/// Minimum total energy over every allocation with the node signals held
/// fixed. Ties within a relative `1e-12` go to fewer links, then to the
/// lexicographically smaller link list.
pub fn brute_force_allocation(net: &NetworkInstance, bf: &BeamformingState, ch: &ChannelSet, cap: usize) -> OracleResult {
    let all = enumerate_allocations(net, cap);
    let mut best = Allocation::empty();
    let mut best_energy = direct_energy(net, &best, bf, ch).expect("local processing is always feasible");
    for alloc in &all {
        if let Some(e) = direct_energy(net, alloc, bf, ch) {
            if better(e.total, alloc, best_energy.total, &best) {
                best = alloc.clone();
                best_energy = e;
            }
        }
    }
    OracleResult {
        allocation: best,
        energy: best_energy,
        allocations_checked: all.len(),
    }
}

/// Signal state with each link's transmitter on the dominant right singular
/// vector of its channel at an equal power share.
pub fn svd_start(net: &NetworkInstance, alloc: &Allocation, ch: &ChannelSet) -> BeamformingState {
    let mut bf = BeamformingState::empty(net.num_nodes());
    let amplitude = Complex64::from((net.power_budget / alloc.len().max(1) as f64).sqrt());
    for l in alloc.links() {
        let (u, v) = dominant_singular_vectors(ch.get(l.tx, l.rx));
        bf.beamformers[l.tx] = Some(v * amplitude);
        bf.combiners[l.rx] = Some(u);
    }
    bf
}

/// Joint reference: every allocation, each optimized by the signal design
/// loop from the singular-vector start and `random_starts` random starts.
pub fn brute_force_joint(
    net: &NetworkInstance,
    ch: &ChannelSet,
    cap: usize,
    wmmse: &WmmseConfig,
    random_starts: usize,
    seed: u64,
) -> OracleResult {
    let all = enumerate_allocations(net, cap);
    let mut best = Allocation::empty();
    let mut best_energy = model::local_baseline(net);
    for (i, alloc) in all.iter().enumerate().filter(|(_, a)| !a.is_empty()) {
        let mut starts = vec![svd_start(net, alloc, ch)];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        for _ in 0..random_starts {
            let mut bf = BeamformingState::empty(net.num_nodes());
            let amplitude = Complex64::from((net.power_budget / alloc.len() as f64).sqrt());
            for l in alloc.links() {
                bf.beamformers[l.tx] = Some(unit_sphere(&mut rng, net.nodes[l.tx].tx_antennas) * amplitude);
                bf.combiners[l.rx] = Some(unit_sphere(&mut rng, net.nodes[l.rx].rx_antennas));
            }
            starts.push(bf);
        }
        for init in starts {
            let out = wmmse_optimize(alloc, ch, net, wmmse, &init);
            if let Some(e) = direct_energy(net, alloc, &out.state, ch) {
                if better(e.total, alloc, best_energy.total, &best) {
                    best = alloc.clone();
                    best_energy = e;
                }
            }
        }
    }
    OracleResult {
        allocation: best,
        energy: best_energy,
        allocations_checked: all.len(),
    }
}
