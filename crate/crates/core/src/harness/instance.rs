use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{Distributions, ScenarioConfig, Shape};
use crate::error::{Error, Result};
use crate::model::{CMatrix, ChannelSet, NetworkInstance, NodeProfile, MBIT};
use crate::optimizer::derive_seed;

const NODE_STREAM: u64 = 1 << 40;
const CHANNEL_STREAM: u64 = 2 << 40;

/// Everything needed to draw one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSpec {
    pub shape: Shape,
    pub power_budget: f64,
    pub bandwidth: f64,
    pub noise_power: f64,
    pub distributions: Distributions,
}

impl InstanceSpec {
    pub fn from_config(cfg: &ScenarioConfig, shape: Shape) -> Self {
        Self {
            shape,
            power_budget: cfg.power_budget,
            bandwidth: cfg.bandwidth,
            noise_power: cfg.noise_power,
            distributions: cfg.distributions,
        }
    }
}

/// Draws node parameters and i.i.d. unit-variance circularly-symmetric
/// complex Gaussian channels. Node `k` and pair `(tx, rx)` each get their own
/// RNG stream, so a node keeps its parameters and a pair its channel when the
/// node or subchannel count changes.
pub fn generate_instance(spec: &InstanceSpec, seed: u64) -> Result<(NetworkInstance, ChannelSet)> {
    let Shape {
        nodes: k,
        antennas,
        subchannels,
    } = spec.shape;
    let d = &spec.distributions;
    let nodes = (0..k)
        .map(|node| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, NODE_STREAM + node as u64));
            let data = rng.random_range(d.data_mbit.min..=d.data_mbit.max) * MBIT;
            let speed = rng.random_range(d.speed_mbps.min..=d.speed_mbps.max) * MBIT;
            let power = rng.random_range(d.power_w.min..=d.power_w.max);
            NodeProfile::with_antennas(data, speed, power, antennas)
        })
        .collect();
    let net = NetworkInstance::new(nodes, spec.power_budget, spec.bandwidth, spec.noise_power, subchannels)?;
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid deviation");
    let ch = ChannelSet::from_fn(&net, |tx, rx| {
        let stream = CHANNEL_STREAM + ((tx as u64) << 20) + rx as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
        CMatrix::from_fn(antennas, antennas, |_, _| {
            Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))
        })
    })?;
    Ok((net, ch))
}

pub const INSTANCE_SCHEMA: &str = "d2d-instance/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChannelRecord {
    tx: usize,
    rx: usize,
    rows: usize,
    cols: usize,
    /// Row-major `[re, im]` pairs.
    entries: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    schema: String,
    network: NetworkInstance,
    channels: Vec<ChannelRecord>,
}

/// Pretty-printed JSON dump. Floats are written in shortest round-trip form,
/// so [`restore_instance`] reproduces every field bit for bit.
pub fn dump_instance(net: &NetworkInstance, ch: &ChannelSet) -> String {
    let k = net.num_nodes();
    let mut channels = Vec::with_capacity(k * k.saturating_sub(1));
    for tx in 0..k {
        for rx in 0..k {
            if tx == rx {
                continue;
            }
            let h = ch.get(tx, rx);
            let mut entries = Vec::with_capacity(h.len());
            for i in 0..h.nrows() {
                for j in 0..h.ncols() {
                    entries.push([h[(i, j)].re, h[(i, j)].im]);
                }
            }
            channels.push(ChannelRecord {
                tx,
                rx,
                rows: h.nrows(),
                cols: h.ncols(),
                entries,
            });
        }
    }
    let file = InstanceFile {
        schema: INSTANCE_SCHEMA.to_string(),
        network: net.clone(),
        channels,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("instance serializes");
    text.push('\n');
    text
}

pub fn restore_instance(text: &str) -> Result<(NetworkInstance, ChannelSet)> {
    let file: InstanceFile = serde_json::from_str(text)?;
    if file.schema != INSTANCE_SCHEMA {
        return Err(Error::Format(format!("unsupported schema `{}`", file.schema)));
    }
    let net = file.network;
    net.validate()?;
    let k = net.num_nodes();
    let mut slots: Vec<Option<CMatrix>> = vec![None; k * k];
    for c in file.channels {
        if c.tx >= k || c.rx >= k || c.tx == c.rx {
            return Err(Error::Format(format!("channel {} -> {} out of range", c.tx, c.rx)));
        }
        if c.entries.len() != c.rows * c.cols {
            return Err(Error::Format(format!(
                "channel {} -> {}: {} entries for a {}x{} matrix",
                c.tx,
                c.rx,
                c.entries.len(),
                c.rows,
                c.cols
            )));
        }
        let slot = &mut slots[c.tx * k + c.rx];
        if slot.is_some() {
            return Err(Error::Format(format!("duplicate channel {} -> {}", c.tx, c.rx)));
        }
        *slot = Some(CMatrix::from_fn(c.rows, c.cols, |i, j| {
            let [re, im] = c.entries[i * c.cols + j];
            Complex64::new(re, im)
        }));
    }
    let mut missing = None;
    let ch = ChannelSet::from_fn(&net, |tx, rx| match slots[tx * k + rx].take() {
        Some(h) => h,
        None => {
            missing.get_or_insert((tx, rx));
            CMatrix::zeros(0, 0)
        }
    });
    if let Some((tx, rx)) = missing {
        return Err(Error::Format(format!("missing channel {tx} -> {rx}")));
    }
    Ok((net, ch?))
}
