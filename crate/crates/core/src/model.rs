//! Network model: node profiles, channels, allocations and the closed-form
//! rate and energy evaluators everything else is built on.
//!
//! All quantities are SI: bits, bits/s, watts, joules, hertz. Node and
//! subchannel indices are zero-based.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Bits per megabit, used when reading configuration values.
pub const MBIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeProfile {
    /// Task size in bits.
    pub data_length: f64,
    /// Processing speed in bits per second.
    pub compute_speed: f64,
    /// Processing power draw in watts.
    pub compute_power: f64,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
}

impl NodeProfile {
    pub fn with_antennas(data_length: f64, compute_speed: f64, compute_power: f64, antennas: usize) -> Self {
        Self {
            data_length,
            compute_speed,
            compute_power,
            tx_antennas: antennas,
            rx_antennas: antennas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub nodes: Vec<NodeProfile>,
    /// Network-wide transmit power budget in watts.
    pub power_budget: f64,
    /// Bandwidth of one subchannel in hertz.
    pub bandwidth: f64,
    pub noise_power: f64,
    pub num_subchannels: usize,
}

impl NetworkInstance {
    pub fn new(
        nodes: Vec<NodeProfile>,
        power_budget: f64,
        bandwidth: f64,
        noise_power: f64,
        num_subchannels: usize,
    ) -> Result<Self> {
        let net = Self {
            nodes,
            power_budget,
            bandwidth,
            noise_power,
            num_subchannels,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInstance(msg));
        if self.nodes.len() < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.nodes.len()));
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return bad(format!("power budget must be positive, got {}", self.power_budget));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth must be positive, got {}", self.bandwidth));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return bad(format!("noise power must be positive, got {}", self.noise_power));
        }
        if self.num_subchannels == 0 {
            return bad("need at least one subchannel".into());
        }
        for (k, node) in self.nodes.iter().enumerate() {
            let positive = |v: f64| v > 0.0 && v.is_finite();
            if !positive(node.data_length) || !positive(node.compute_speed) || !positive(node.compute_power) {
                return bad(format!("node {k}: data length, speed and power must be positive"));
            }
            if node.tx_antennas == 0 || node.rx_antennas == 0 {
                return bad(format!("node {k}: antenna counts must be positive"));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Largest number of simultaneous node-disjoint links, `floor(K / 2)`.
    pub fn max_links(&self) -> usize {
        self.nodes.len() / 2
    }
}

/// Channel matrices for every ordered pair of distinct nodes. The matrix for
/// `(tx, rx)` has shape `rx_antennas(rx) x tx_antennas(tx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    num_nodes: usize,
    matrices: Vec<Option<CMatrix>>,
}

impl ChannelSet {
    /// Builds the set by calling `f(tx, rx)` for every ordered pair in
    /// row-major order, then checks shapes against `net`.
    pub fn from_fn<F>(net: &NetworkInstance, mut f: F) -> Result<Self>
    where
        F: FnMut(usize, usize) -> CMatrix,
    {
        let k = net.num_nodes();
        let mut matrices = Vec::with_capacity(k * k);
        for tx in 0..k {
            for rx in 0..k {
                matrices.push(if tx == rx { None } else { Some(f(tx, rx)) });
            }
        }
        let set = Self { num_nodes: k, matrices };
        set.validate(net)?;
        Ok(set)
    }

    pub fn validate(&self, net: &NetworkInstance) -> Result<()> {
        if self.num_nodes != net.num_nodes() {
            return Err(Error::InvalidInstance(format!(
                "channel set covers {} nodes, instance has {}",
                self.num_nodes,
                net.num_nodes()
            )));
        }
        for tx in 0..self.num_nodes {
            for rx in 0..self.num_nodes {
                if tx == rx {
                    continue;
                }
                let h = self.matrices[tx * self.num_nodes + rx]
                    .as_ref()
                    .ok_or_else(|| Error::InvalidInstance(format!("missing channel {tx} -> {rx}")))?;
                let shape = (net.nodes[rx].rx_antennas, net.nodes[tx].tx_antennas);
                if h.shape() != shape {
                    return Err(Error::InvalidInstance(format!(
                        "channel {tx} -> {rx} has shape {:?}, expected {:?}",
                        h.shape(),
                        shape
                    )));
                }
                if h.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                    return Err(Error::InvalidInstance(format!("channel {tx} -> {rx} has non-finite entries")));
                }
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Channel from `tx` to `rx`. Panics on `tx == rx` or out-of-range nodes.
    pub fn get(&self, tx: usize, rx: usize) -> &CMatrix {
        assert!(tx != rx, "no channel from node {tx} to itself");
        self.matrices[tx * self.num_nodes + rx]
            .as_ref()
            .expect("channel set is complete")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Link {
    pub tx: usize,
    pub rx: usize,
    pub subchannel: usize,
}

impl Link {
    pub fn new(tx: usize, rx: usize, subchannel: usize) -> Self {
        Self { tx, rx, subchannel }
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.tx, self.rx)
    }

    pub fn touches(&self, node: usize) -> bool {
        self.tx == node || self.rx == node
    }
}

/// The selected directed links with their subchannels.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    links: Vec<Link>,
}

impl Allocation {
    pub fn new(links: Vec<Link>) -> Self {
        Self { links }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn push(&mut self, link: Link) {
        self.links.push(link);
    }

    pub fn uses_node(&self, node: usize) -> bool {
        self.links.iter().any(|l| l.touches(node))
    }

    /// Index of the link transmitting from `node`, if any.
    pub fn link_from(&self, node: usize) -> Option<usize> {
        self.links.iter().position(|l| l.tx == node)
    }

    /// Checks node-disjointness, absence of self-links, subchannel range and
    /// the `floor(K/2)` link bound.
    pub fn validate(&self, net: &NetworkInstance) -> Result<()> {
        let k = net.num_nodes();
        let mut seen = vec![false; k];
        for (n, l) in self.links.iter().enumerate() {
            if l.tx >= k || l.rx >= k {
                return Err(Error::InvalidAllocation(format!("link {n} references a node outside 0..{k}")));
            }
            if l.tx == l.rx {
                return Err(Error::InvalidAllocation(format!("link {n} is a self-link on node {}", l.tx)));
            }
            if l.subchannel >= net.num_subchannels {
                return Err(Error::InvalidAllocation(format!(
                    "link {n} uses subchannel {} of {}",
                    l.subchannel, net.num_subchannels
                )));
            }
            for node in [l.tx, l.rx] {
                if seen[node] {
                    return Err(Error::InvalidAllocation(format!("node {node} appears in more than one link")));
                }
                seen[node] = true;
            }
        }
        if self.links.len() > net.max_links() {
            return Err(Error::InvalidAllocation(format!(
                "{} links exceed the bound {}",
                self.links.len(),
                net.max_links()
            )));
        }
        Ok(())
    }

    /// Representative of this allocation's equivalence class under subchannel
    /// relabeling: links sorted by `(tx, rx)` and subchannels renumbered in
    /// order of first appearance.
    pub fn canonical(&self) -> Allocation {
        let mut links = self.links.clone();
        links.sort_by_key(|l| (l.tx, l.rx));
        let mut relabel: Vec<(usize, usize)> = Vec::new();
        for l in &mut links {
            let next = relabel.len();
            let label = match relabel.iter().find(|(old, _)| *old == l.subchannel) {
                Some(&(_, new)) => new,
                None => {
                    relabel.push((l.subchannel, next));
                    next
                }
            };
            l.subchannel = label;
        }
        Allocation { links }
    }
}

/// Per-node transmit beamformers (power folded in, `g = sqrt(P) f`) and
/// receive combiners. A node only uses its beamformer when it transmits and
/// its combiner when it receives, so one slot of each per node suffices.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingState {
    pub beamformers: Vec<Option<CVector>>,
    pub combiners: Vec<Option<CVector>>,
}

impl BeamformingState {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            beamformers: vec![None; num_nodes],
            combiners: vec![None; num_nodes],
        }
    }

    pub fn beamformer(&self, node: usize) -> Option<&CVector> {
        self.beamformers.get(node).and_then(Option::as_ref)
    }

    pub fn combiner(&self, node: usize) -> Option<&CVector> {
        self.combiners.get(node).and_then(Option::as_ref)
    }

    /// `||g||^2` of the node's beamformer, zero if it has none.
    pub fn tx_power(&self, node: usize) -> f64 {
        self.beamformer(node).map_or(0.0, |g| g.norm_squared())
    }

    /// Unit-norm transmit direction `f = g / ||g||`.
    pub fn direction(&self, node: usize) -> Option<CVector> {
        self.beamformer(node).filter(|g| g.norm() > 0.0).map(|g| g / Complex64::from(g.norm()))
    }

    /// Total transmit power of the links in `alloc`.
    pub fn total_power(&self, alloc: &Allocation) -> f64 {
        alloc.links().iter().map(|l| self.tx_power(l.tx)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub communication: f64,
    pub computation: f64,
}

impl EnergyBreakdown {
    pub fn local_only(computation: f64) -> Self {
        Self {
            total: computation,
            communication: 0.0,
            computation,
        }
    }
}

/// Binary subchannel co-occurrence matrix: entry `(n, m)` is 1 iff links `n`
/// and `m` share a subchannel. The diagonal is always 1.
pub fn cooccurrence(alloc: &Allocation) -> DMatrix<u8> {
    let links = alloc.links();
    DMatrix::from_fn(links.len(), links.len(), |n, m| {
        u8::from(links[n].subchannel == links[m].subchannel)
    })
}

/// `|z^H H g|^2` for a unit-normalized combiner.
fn projected_gain(z: &CVector, h: &CMatrix, g: &CVector) -> f64 {
    (z.adjoint() * h * g)[(0, 0)].norm_sqr()
}

/// Shannon rate `W log2(1 + sinr)`.
pub fn rate_from_sinr(bandwidth: f64, sinr: f64) -> f64 {
    bandwidth * (1.0 + sinr).log2()
}

/// Signal-to-interference-plus-noise ratio of link `n`, with interference from
/// every other co-channel link. The noise term is `sigma^2 ||z||^2`, which
/// makes the ratio invariant to combiner scaling.
pub fn link_sinr(
    n: usize,
    alloc: &Allocation,
    bf: &BeamformingState,
    ch: &ChannelSet,
    net: &NetworkInstance,
) -> Result<f64> {
    let link = alloc.links()[n];
    let g = bf
        .beamformer(link.tx)
        .ok_or(Error::MissingSignal { what: "beamformer", node: link.tx })?;
    let z = bf
        .combiner(link.rx)
        .ok_or(Error::MissingSignal { what: "combiner", node: link.rx })?;
    let z_norm2 = z.norm_squared();
    let signal = projected_gain(z, ch.get(link.tx, link.rx), g);
    if signal <= 0.0 || z_norm2 <= 0.0 {
        return Err(Error::DegenerateSignal { link: n });
    }
    let mut interference = 0.0;
    for (m, other) in alloc.links().iter().enumerate() {
        if m == n || other.subchannel != link.subchannel {
            continue;
        }
        let g_m = bf
            .beamformer(other.tx)
            .ok_or(Error::MissingSignal { what: "beamformer", node: other.tx })?;
        interference += projected_gain(z, ch.get(other.tx, link.rx), g_m);
    }
    Ok(signal / (interference + net.noise_power * z_norm2))
}

/// Achievable rate of link `n` in bits/s.
pub fn link_rate(
    n: usize,
    alloc: &Allocation,
    bf: &BeamformingState,
    ch: &ChannelSet,
    net: &NetworkInstance,
) -> Result<f64> {
    Ok(rate_from_sinr(net.bandwidth, link_sinr(n, alloc, bf, ch, net)?))
}

/// Energy for node `k` to process its own task.
pub fn local_energy(k: usize, net: &NetworkInstance) -> f64 {
    let node = &net.nodes[k];
    if node.data_length == 0.0 {
        return 0.0;
    }
    node.compute_power * node.data_length / node.compute_speed
}

/// Energy for `k` to ship its task to `k_rx` at `rate` with `tx_power`, plus
/// the receiver's energy to process the sender's data.
pub fn offload_energy(k: usize, k_rx: usize, rate: f64, tx_power: f64, net: &NetworkInstance) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::InfeasibleLink { tx: k, rx: k_rx, rate });
    }
    let data = net.nodes[k].data_length;
    let receiver = &net.nodes[k_rx];
    Ok(tx_power * data / rate + receiver.compute_power * data / receiver.compute_speed)
}

/// Total energy of a configuration given per-link rates and transmit powers
/// (both indexed like `alloc.links()`).
pub fn total_energy(
    net: &NetworkInstance,
    alloc: &Allocation,
    rates: &[f64],
    tx_powers: &[f64],
) -> Result<EnergyBreakdown> {
    assert_eq!(rates.len(), alloc.len(), "one rate per link");
    assert_eq!(tx_powers.len(), alloc.len(), "one power per link");
    let mut communication = 0.0;
    let mut computation = 0.0;
    let mut transmits = vec![false; net.num_nodes()];
    for (n, l) in alloc.links().iter().enumerate() {
        let rate = rates[n];
        if !(rate > 0.0) {
            return Err(Error::InfeasibleLink { tx: l.tx, rx: l.rx, rate });
        }
        let data = net.nodes[l.tx].data_length;
        let receiver = &net.nodes[l.rx];
        communication += tx_powers[n] * data / rate;
        computation += receiver.compute_power * data / receiver.compute_speed;
        transmits[l.tx] = true;
    }
    for k in 0..net.num_nodes() {
        if !transmits[k] {
            computation += local_energy(k, net);
        }
    }
    Ok(EnergyBreakdown {
        total: communication + computation,
        communication,
        computation,
    })
}

/// Evaluates the configuration end to end: rates from the signals, powers from
/// the beamformer norms.
pub fn evaluate(
    net: &NetworkInstance,
    alloc: &Allocation,
    bf: &BeamformingState,
    ch: &ChannelSet,
) -> Result<EnergyBreakdown> {
    let rates = (0..alloc.len())
        .map(|n| link_rate(n, alloc, bf, ch, net))
        .collect::<Result<Vec<_>>>()?;
    let powers: Vec<f64> = alloc.links().iter().map(|l| bf.tx_power(l.tx)).collect();
    total_energy(net, alloc, &rates, &powers)
}

/// Ordered pairs `(k, k')` for which processing `k`'s task at `k'` costs
/// strictly less computation energy than processing it locally. Returned in
/// lexicographic order.
pub fn candidate_links(net: &NetworkInstance) -> Vec<(usize, usize)> {
    let k = net.num_nodes();
    let mut pairs = Vec::new();
    for tx in 0..k {
        let data = net.nodes[tx].data_length;
        let local = local_energy(tx, net);
        for rx in 0..k {
            if rx == tx {
                continue;
            }
            let remote = net.nodes[rx].compute_power * data / net.nodes[rx].compute_speed;
            if local > remote {
                pairs.push((tx, rx));
            }
        }
    }
    pairs
}

/// Energy with every node processing its own task.
pub fn local_baseline(net: &NetworkInstance) -> EnergyBreakdown {
    EnergyBreakdown::local_only((0..net.num_nodes()).map(|k| local_energy(k, net)).sum())
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    fn scalar_net(k: usize, bandwidth: f64) -> NetworkInstance {
        let nodes = (0..k).map(|_| NodeProfile::with_antennas(1.0, 1.0, 1.0, 1)).collect();
        NetworkInstance::new(nodes, 1.0, bandwidth, 1.0, 2).unwrap()
    }

    fn scalar_channels(net: &NetworkInstance, h: f64) -> ChannelSet {
        ChannelSet::from_fn(net, |_, _| CMatrix::from_element(1, 1, Complex64::from(h))).unwrap()
    }

    #[test]
    fn cooccurrence_of_three_links_on_two_subchannels() {
        let alloc = Allocation::new(vec![Link::new(0, 1, 0), Link::new(2, 3, 1), Link::new(4, 5, 1)]);
        let m = cooccurrence(&alloc);
        let expected = DMatrix::from_row_slice(3, 3, &[1, 0, 0, 0, 1, 1, 0, 1, 1]);
        assert_eq!(m, expected);
    }

    #[test]
    fn cooccurrence_trivial_cases() {
        assert_eq!(cooccurrence(&Allocation::new(vec![Link::new(0, 1, 0)])), DMatrix::from_element(1, 1, 1));
        let distinct = Allocation::new(vec![Link::new(0, 1, 0), Link::new(2, 3, 1), Link::new(4, 5, 2)]);
        assert_eq!(cooccurrence(&distinct), DMatrix::identity(3, 3));
    }

    /// `M = sum_i m_i m_i^T` built from indicator vectors, for every subchannel
    /// labeling of up to four links over three subchannels.
    #[test]
    fn cooccurrence_matches_indicator_outer_products() {
        let s: usize = 3;
        for l in 1..=4usize {
            for code in 0..s.pow(l as u32) {
                let mut c = code;
                let subs: Vec<usize> = (0..l)
                    .map(|_| {
                        let v = c % s;
                        c /= s;
                        v
                    })
                    .collect();
                let alloc = Allocation::new(subs.iter().enumerate().map(|(n, &i)| Link::new(2 * n, 2 * n + 1, i)).collect());
                let mut brute = DMatrix::<u8>::zeros(l, l);
                for i in 0..s {
                    let m_i = DVector::from_fn(l, |n, _| u8::from(subs[n] == i));
                    brute += &m_i * m_i.transpose();
                }
                assert_eq!(cooccurrence(&alloc), brute, "labels {subs:?}");
            }
        }
    }

    #[test]
    fn single_link_unit_gain_rate_is_one_bit() {
        let net = scalar_net(2, 1.0);
        let ch = scalar_channels(&net, 1.0);
        let alloc = Allocation::new(vec![Link::new(0, 1, 0)]);
        let rate = link_rate(0, &alloc, &unit_signals(2), &ch, &net).unwrap();
        assert!((rate - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shared_subchannel_rate_with_unit_interference() {
        let net = scalar_net(4, 1.0);
        let ch = scalar_channels(&net, 1.0);
        let alloc = Allocation::new(vec![Link::new(0, 1, 0), Link::new(2, 3, 0)]);
        let rate = link_rate(0, &alloc, &unit_signals(4), &ch, &net).unwrap();
        assert!((rate - 1.5f64.log2()).abs() < 1e-12);
        assert!((rate - 0.584_962_500_721_156).abs() < 1e-12);

        let separate = Allocation::new(vec![Link::new(0, 1, 0), Link::new(2, 3, 1)]);
        let rate = link_rate(0, &separate, &unit_signals(4), &ch, &net).unwrap();
        assert!((rate - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_beamformer_is_degenerate() {
        let net = scalar_net(2, 1.0);
        let ch = scalar_channels(&net, 1.0);
        let mut bf = unit_signals(2);
        bf.beamformers[0] = Some(CVector::zeros(1));
        let alloc = Allocation::new(vec![Link::new(0, 1, 0)]);
        assert!(matches!(link_rate(0, &alloc, &bf, &ch, &net), Err(Error::DegenerateSignal { link: 0 })));
        assert!(evaluate(&net, &alloc, &bf, &ch).is_err());
    }

    #[test]
    fn local_energy_examples() {
        let (net, _) = worked_example();
        assert!((local_energy(0, &net) - 1.0).abs() < 1e-12);
        assert!((local_energy(2, &net) - 10.0).abs() < 1e-12);
        let mut degenerate = net.clone();
        degenerate.nodes[0].data_length = 0.0;
        assert_eq!(local_energy(0, &degenerate), 0.0);
    }

    #[test]
    fn offload_energy_examples() {
        let (net, _) = worked_example();
        let r = 2.0 * MBIT;
        assert!((offload_energy(2, 0, r, 1.0, &net).unwrap() - 6.0).abs() < 1e-12);
        assert!((offload_energy(1, 0, r, 1.0, &net).unwrap() - 6.0).abs() < 1e-12);
        assert!((offload_energy(2, 0, f64::INFINITY, 1.0, &net).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(offload_energy(2, 0, 0.0, 1.0, &net), Err(Error::InfeasibleLink { .. })));
    }

    #[test]
    fn worked_example_total_energies() {
        let (net, _) = worked_example();
        let r = [2.0 * MBIT];
        let p = [1.0];
        let local = total_energy(&net, &Allocation::empty(), &[], &[]).unwrap();
        assert!((local.total - 16.0).abs() < 1e-9);
        assert_eq!(local.communication, 0.0);
        let e31 = total_energy(&net, &Allocation::new(vec![Link::new(2, 0, 0)]), &r, &p).unwrap();
        assert!((e31.total - 12.0).abs() < 1e-9);
        assert!((e31.communication - 5.0).abs() < 1e-9);
        let e21 = total_energy(&net, &Allocation::new(vec![Link::new(1, 0, 0)]), &r, &p).unwrap();
        assert!((e21.total - 17.0).abs() < 1e-9);
    }

    #[test]
    fn worked_example_channel_gives_two_megabits() {
        let (net, ch) = worked_example();
        let alloc = Allocation::new(vec![Link::new(2, 0, 0)]);
        let rate = link_rate(0, &alloc, &unit_signals(3), &ch, &net).unwrap();
        assert!((rate - 2.0 * MBIT).abs() < 1e-6);
        let e = evaluate(&net, &alloc, &unit_signals(3), &ch).unwrap();
        assert!((e.total - 12.0).abs() < 1e-9);
    }

    #[test]
    fn candidate_links_examples() {
        let (net, _) = worked_example();
        // Energy per bit 0.1, 0.5 and 1 J/Mbit: offloading only ever helps
        // towards a cheaper node.
        assert_eq!(candidate_links(&net), vec![(1, 0), (2, 0), (2, 1)]);

        let homogeneous = scalar_net(4, 1.0);
        assert!(candidate_links(&homogeneous).is_empty());

        let mut two = scalar_net(2, 1.0);
        two.nodes[0].compute_power = 2.0;
        assert_eq!(candidate_links(&two), vec![(0, 1)]);
    }

    #[test]
    fn allocation_validation() {
        let (net, _) = worked_example();
        assert!(Allocation::new(vec![Link::new(2, 0, 0)]).validate(&net).is_ok());
        assert!(Allocation::new(vec![Link::new(1, 1, 0)]).validate(&net).is_err());
        assert!(Allocation::new(vec![Link::new(2, 0, 1)]).validate(&net).is_err());
        assert!(Allocation::new(vec![Link::new(2, 0, 0), Link::new(0, 1, 0)]).validate(&net).is_err());
    }

    #[test]
    fn canonical_relabels_by_first_use() {
        let alloc = Allocation::new(vec![Link::new(4, 5, 0), Link::new(0, 1, 2), Link::new(3, 2, 2)]);
        let canon = alloc.canonical();
        assert_eq!(canon.links(), &[Link::new(0, 1, 0), Link::new(3, 2, 0), Link::new(4, 5, 1)]);
    }

    #[test]
    fn instance_validation_rejects_bad_values() {
        let node = NodeProfile::with_antennas(1.0, 1.0, 1.0, 1);
        assert!(NetworkInstance::new(vec![node.clone()], 1.0, 1.0, 1.0, 1).is_err());
        assert!(NetworkInstance::new(vec![node.clone(); 2], 0.0, 1.0, 1.0, 1).is_err());
        assert!(NetworkInstance::new(vec![node.clone(); 2], 1.0, 1.0, 1.0, 0).is_err());
        let mut bad = node.clone();
        bad.compute_speed = -1.0;
        assert!(NetworkInstance::new(vec![node, bad], 1.0, 1.0, 1.0, 1).is_err());
    }

    fn arb_complex() -> impl Strategy<Value = Complex64> {
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
    }

    fn arb_vec(n: usize) -> impl Strategy<Value = CVector> {
        prop::collection::vec(arb_complex(), n).prop_map(CVector::from_vec)
    }

    fn two_link_setup(
        h: Vec<Complex64>,
        g: Vec<CVector>,
        z: Vec<CVector>,
    ) -> (NetworkInstance, ChannelSet, BeamformingState) {
        let nodes = (0..4).map(|_| NodeProfile::with_antennas(1e6, 1e6, 1.0, 2)).collect();
        let net = NetworkInstance::new(nodes, 1.0, 1e6, 1.0, 2).unwrap();
        let mut idx = 0;
        let ch = ChannelSet::from_fn(&net, |_, _| {
            let m = CMatrix::from_fn(2, 2, |r, c| h[(idx * 4 + r * 2 + c) % h.len()] * Complex64::from(1.0 + idx as f64 * 0.1));
            idx += 1;
            m
        })
        .unwrap();
        let bf = BeamformingState {
            beamformers: vec![Some(g[0].clone()), None, Some(g[1].clone()), None],
            combiners: vec![None, Some(z[0].clone()), None, Some(z[1].clone())],
        };
        (net, ch, bf)
    }

    proptest! {
        #[test]
        fn rate_invariant_to_unit_modulus_combiner_phase(
            h in prop::collection::vec(arb_complex(), 8),
            g0 in arb_vec(2), g1 in arb_vec(2), z0 in arb_vec(2), z1 in arb_vec(2),
            phase in 0.0..std::f64::consts::TAU,
        ) {
            let (net, ch, mut bf) = two_link_setup(h, vec![g0, g1], vec![z0, z1]);
            let alloc = Allocation::new(vec![Link::new(0, 1, 0), Link::new(2, 3, 0)]);
            if let Ok(r) = link_rate(0, &alloc, &bf, &ch, &net) {
                let z = bf.combiners[1].take().unwrap();
                let z = z.normalize() * Complex64::from_polar(1.0, phase);
                bf.combiners[1] = Some(z);
                let r2 = link_rate(0, &alloc, &bf, &ch, &net).unwrap();
                prop_assert!((r - r2).abs() <= 1e-9 * r.max(1.0));
            }
        }

        #[test]
        fn rate_decreases_with_interferer_power(
            h in prop::collection::vec(arb_complex(), 8),
            g0 in arb_vec(2), g1 in arb_vec(2), z0 in arb_vec(2), z1 in arb_vec(2),
            scale in 1.1..4.0f64,
        ) {
            let (net, ch, mut bf) = two_link_setup(h, vec![g0, g1], vec![z0, z1]);
            let shared = Allocation::new(vec![Link::new(0, 1, 0), Link::new(2, 3, 0)]);
            let separate = Allocation::new(vec![Link::new(0, 1, 0), Link::new(2, 3, 1)]);
            if let (Ok(r), Ok(free)) = (link_rate(0, &shared, &bf, &ch, &net), link_rate(0, &separate, &bf, &ch, &net)) {
                prop_assert!(free >= r);
                let z = bf.combiners[1].clone().unwrap();
                let leak = (z.adjoint() * ch.get(2, 1) * bf.beamformers[2].as_ref().unwrap())[(0, 0)].norm_sqr();
                let g1 = bf.beamformers[2].take().unwrap();
                bf.beamformers[2] = Some(g1 * Complex64::from(scale));
                let louder = link_rate(0, &shared, &bf, &ch, &net).unwrap();
                if leak > 1e-9 {
                    prop_assert!(louder < r);
                }
            }
        }

        #[test]
        fn breakdown_sums_and_candidates_match_direct_comparison(
            speeds in prop::collection::vec(0.1..2.0f64, 2..7),
            powers in prop::collection::vec(0.5..1.0f64, 7),
            data in prop::collection::vec(1.0..20.0f64, 7),
            rate in 0.1..10.0f64,
        ) {
            let nodes: Vec<NodeProfile> = speeds.iter().enumerate()
                .map(|(k, c)| NodeProfile::with_antennas(data[k] * MBIT, c * MBIT, powers[k], 1))
                .collect();
            let net = NetworkInstance::new(nodes, 5.0, 1e6, 1.0, 1).unwrap();
            let cands = candidate_links(&net);
            for tx in 0..net.num_nodes() {
                for rx in 0..net.num_nodes() {
                    if tx == rx { continue; }
                    let remote = net.nodes[rx].compute_power * net.nodes[tx].data_length / net.nodes[rx].compute_speed;
                    prop_assert_eq!(cands.contains(&(tx, rx)), local_energy(tx, &net) > remote);
                }
            }
            if let Some(&(tx, rx)) = cands.first() {
                let alloc = Allocation::new(vec![Link::new(tx, rx, 0)]);
                let e = total_energy(&net, &alloc, &[rate * MBIT], &[1.0]).unwrap();
                prop_assert!((e.total - (e.communication + e.computation)).abs() <= 1e-9 * e.total);
                prop_assert!(e.communication >= 0.0 && e.computation >= 0.0);
            }
        }
    }
}
