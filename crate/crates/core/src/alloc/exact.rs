use std::time::Instant;

use super::{improves, AllocOptions, AllocResult, SignalPlan, SolverStats, TIE_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::{
    candidate_links, local_baseline, local_energy, offload_energy, Allocation, BeamformingState, ChannelSet, Link,
    NetworkInstance,
};

pub const DEFAULT_EXACT_NODE_CAP: usize = 8;

pub fn exact_allocate(net: &NetworkInstance, bf: &BeamformingState, ch: &ChannelSet) -> Result<AllocResult> {
    exact_allocate_with(net, bf, ch, &AllocOptions::default())
}

/// Globally minimal total energy over all node-disjoint candidate link sets
/// and subchannel assignments, by depth-first enumeration.
///
/// Nodes are visited in index order; the lowest undecided node either stays
/// out of every link or is paired with a higher undecided node in one of the
/// two directions. Subchannels are opened in canonical order, which removes
/// relabeling symmetry. A branch is cut once its partial energy, with each
/// undecided node at its most optimistic cost, exceeds the incumbent.
/// Co-channel interference only grows with further links, so the bound is
/// valid.
pub fn exact_allocate_with(
    net: &NetworkInstance,
    bf: &BeamformingState,
    ch: &ChannelSet,
    opts: &AllocOptions,
) -> Result<AllocResult> {
    let k = net.num_nodes();
    if k > opts.max_nodes {
        return Err(Error::TooLarge {
            nodes: k,
            cap: opts.max_nodes,
        });
    }
    let started = Instant::now();
    let candidates = candidate_links(net);
    let plan = SignalPlan::new(net, ch, bf, &candidates);

    let local: Vec<f64> = (0..k).map(|u| local_energy(u, net)).collect();
    let mut usable = vec![None; k * k];
    let mut best_case = local.clone();
    for (p, &(tx, rx)) in plan.pairs().iter().enumerate() {
        if let Ok(e) = offload_energy(tx, rx, plan.free_rate(p), plan.tx_power(p), net) {
            usable[tx * k + rx] = Some(p);
            best_case[tx] = best_case[tx].min(e);
        }
    }

    let mut search = Search {
        plan: &plan,
        net,
        k,
        cap: opts.link_cap(net),
        usable,
        local,
        best_case,
        used: vec![false; k],
        links: Vec::new(),
        link_pairs: Vec::new(),
        best_value: local_baseline(net).total,
        best: Allocation::empty(),
        stats: SolverStats::default(),
    };
    search.descend(0, 0)?;

    let allocation = search.best;
    let energy = plan.energy(&allocation)?;
    let mut stats = search.stats;
    stats.wall_time = started.elapsed();
    Ok(AllocResult {
        allocation,
        energy,
        stats,
    })
}

struct Search<'a> {
    plan: &'a SignalPlan<'a>,
    net: &'a NetworkInstance,
    k: usize,
    cap: usize,
    usable: Vec<Option<usize>>,
    local: Vec<f64>,
    best_case: Vec<f64>,
    used: Vec<bool>,
    links: Vec<Link>,
    link_pairs: Vec<usize>,
    best_value: f64,
    best: Allocation,
    stats: SolverStats,
}

impl Search<'_> {
    fn lower_bound(&self, cursor: usize) -> Result<f64> {
        let mut bound = 0.0;
        let mut transmits = vec![false; self.k];
        for (n, l) in self.links.iter().enumerate() {
            let p = self.link_pairs[n];
            let interferers = self
                .links
                .iter()
                .zip(&self.link_pairs)
                .enumerate()
                .filter(|(m, (o, _))| *m != n && o.subchannel == l.subchannel)
                .map(|(_, (_, &q))| q);
            let rate = self.plan.rate_with(p, interferers);
            bound += offload_energy(l.tx, l.rx, rate, self.plan.tx_power(p), self.net)?;
            transmits[l.tx] = true;
        }
        for u in 0..self.k {
            if transmits[u] {
                continue;
            }
            bound += if u < cursor || self.used[u] {
                self.local[u]
            } else {
                self.best_case[u]
            };
        }
        Ok(bound)
    }

    fn descend(&mut self, mut cursor: usize, opened: usize) -> Result<()> {
        self.stats.nodes_explored += 1;
        let bound = self.lower_bound(cursor)?;
        if bound > self.best_value + TIE_TOLERANCE * self.best_value.abs().max(1.0) {
            return Ok(());
        }
        while cursor < self.k && self.used[cursor] {
            cursor += 1;
        }
        if cursor == self.k {
            self.stats.candidates_evaluated += 1;
            let alloc = Allocation::new(self.links.clone()).canonical();
            let value = self.plan.energy(&alloc)?.total;
            if improves(value, &alloc, self.best_value, &self.best) {
                self.best_value = value;
                self.best = alloc;
            }
            return Ok(());
        }

        if self.links.len() < self.cap {
            for other in cursor + 1..self.k {
                if self.used[other] {
                    continue;
                }
                for (tx, rx) in [(cursor, other), (other, cursor)] {
                    let Some(p) = self.usable[tx * self.k + rx] else { continue };
                    self.used[cursor] = true;
                    self.used[other] = true;
                    for sub in 0..(opened + 1).min(self.net.num_subchannels) {
                        self.links.push(Link::new(tx, rx, sub));
                        self.link_pairs.push(p);
                        self.descend(cursor + 1, opened.max(sub + 1))?;
                        self.links.pop();
                        self.link_pairs.pop();
                    }
                    self.used[cursor] = false;
                    self.used[other] = false;
                }
            }
        }
        self.descend(cursor + 1, opened)
    }
}
