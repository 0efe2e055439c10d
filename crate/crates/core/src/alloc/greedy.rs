use std::time::Instant;

use super::{AllocOptions, AllocResult, SignalPlan, SolverStats};
use crate::error::Result;
use crate::model::{candidate_links, local_baseline, Allocation, BeamformingState, ChannelSet, Link, NetworkInstance};

pub fn greedy_allocate(net: &NetworkInstance, bf: &BeamformingState, ch: &ChannelSet) -> Result<AllocResult> {
    greedy_allocate_with(net, bf, ch, &AllocOptions::default())
}

/// Sequential greedy link and subchannel selection.
///
/// While fresh subchannels remain, the candidate with the largest
/// interference-free saved energy takes the next one. Afterwards every
/// (candidate, used subchannel) combination is scored against the links
/// already on that subchannel. Selection stops once the best saving is not
/// positive, the candidate set is exhausted or the link cap is reached; each
/// selection removes every candidate sharing a node with it.
///
/// Scores ignore the degradation a new link causes to earlier ones, so the
/// selection prefixes are re-evaluated under full mutual interference and the
/// cheapest prefix is returned. The empty prefix guarantees the result never
/// exceeds local-only processing.
pub fn greedy_allocate_with(
    net: &NetworkInstance,
    bf: &BeamformingState,
    ch: &ChannelSet,
    opts: &AllocOptions,
) -> Result<AllocResult> {
    let started = Instant::now();
    let candidates = candidate_links(net);
    let plan = SignalPlan::new(net, ch, bf, &candidates);
    let cap = opts.link_cap(net);
    let num_subchannels = net.num_subchannels;

    let mut stats = SolverStats::default();
    let mut open: Vec<usize> = (0..plan.pairs().len()).collect();
    let mut selected: Vec<Link> = Vec::new();
    let mut selected_pairs: Vec<usize> = Vec::new();
    let mut fresh = 0usize;

    while !open.is_empty() && selected.len() < cap {
        let mut best: Option<(f64, usize, usize)> = None;
        let consider = |value: f64, p: usize, sub: usize, best: &mut Option<(f64, usize, usize)>| {
            if best.map_or(true, |(v, _, _)| value > v) {
                *best = Some((value, p, sub));
            }
        };
        if fresh < num_subchannels {
            for &p in &open {
                stats.candidates_evaluated += 1;
                if let Ok(d) = plan.saved_at_rate(p, plan.free_rate(p)) {
                    consider(d, p, fresh, &mut best);
                }
            }
        } else {
            for &p in &open {
                for sub in 0..num_subchannels {
                    stats.candidates_evaluated += 1;
                    let interferers = selected
                        .iter()
                        .zip(&selected_pairs)
                        .filter(|(l, _)| l.subchannel == sub)
                        .map(|(_, &q)| q);
                    if let Ok(d) = plan.saved_at_rate(p, plan.rate_with(p, interferers)) {
                        consider(d, p, sub, &mut best);
                    }
                }
            }
        }
        let Some((value, p, sub)) = best else { break };
        if value <= 0.0 {
            break;
        }
        let (tx, rx) = plan.pairs()[p];
        selected.push(Link::new(tx, rx, sub));
        selected_pairs.push(p);
        if sub == fresh {
            fresh += 1;
        }
        stats.nodes_explored += 1;
        open.retain(|&q| {
            let (a, b) = plan.pairs()[q];
            a != tx && a != rx && b != tx && b != rx
        });
    }

    let mut best_alloc = Allocation::empty();
    let mut best_energy = local_baseline(net);
    for len in 1..=selected.len() {
        let prefix = Allocation::new(selected[..len].to_vec()).canonical();
        let energy = plan.energy(&prefix)?;
        if energy.total < best_energy.total {
            best_alloc = prefix;
            best_energy = energy;
        }
    }
    stats.wall_time = started.elapsed();
    Ok(AllocResult {
        allocation: best_alloc,
        energy: best_energy,
        stats,
    })
}
