use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mimo::WmmseConfig;
use crate::optimizer::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Greedy link cap swept over `0..=floor(K/2)`.
    LinksSweep,
    /// One row per alternation of the reported trajectory.
    Iterations,
    SubchannelsSweep,
    NodesSweep,
    Single,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::LinksSweep => "links_sweep",
            Scenario::Iterations => "iterations",
            Scenario::SubchannelsSweep => "subchannels_sweep",
            Scenario::NodesSweep => "nodes_sweep",
            Scenario::Single => "single",
        }
    }

    pub fn sweep_var(self) -> &'static str {
        match self {
            Scenario::LinksSweep => "max_links",
            Scenario::Iterations => "alternation",
            Scenario::SubchannelsSweep => "subchannels",
            Scenario::NodesSweep => "nodes",
            Scenario::Single => "none",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Greedy,
    Random,
    Local,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Greedy => "greedy",
            Method::Random => "random",
            Method::Local => "local",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Closed interval a parameter is drawn uniformly from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn check(&self, what: &str) -> Result<()> {
        if !(self.min > 0.0 && self.min.is_finite() && self.max.is_finite() && self.min <= self.max) {
            return Err(Error::Config(format!(
                "{what}: need 0 < min <= max, got [{}, {}]",
                self.min, self.max
            )));
        }
        Ok(())
    }
}

/// Node parameter ranges in configuration units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Distributions {
    pub data_mbit: Range,
    pub speed_mbps: Range,
    pub power_w: Range,
}

impl Default for Distributions {
    fn default() -> Self {
        Self {
            data_mbit: Range::new(1.0, 20.0),
            speed_mbps: Range::new(0.1, 2.0),
            power_w: Range::new(0.5, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub nodes: usize,
    pub antennas: usize,
    pub subchannels: usize,
    /// Watts.
    pub power_budget: f64,
    /// Hertz per subchannel.
    pub bandwidth: f64,
    pub noise_power: f64,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub restarts: usize,
    pub alternations: usize,
    pub report: Report,
    /// Treat improper antenna counts as an error instead of a warning.
    pub strict_properness: bool,
    /// Points of the swept variable; defaults depend on the scenario.
    pub sweep_values: Option<Vec<usize>>,
    /// Record wall-clock time per row. Off by default so output is reproducible.
    pub timing: bool,
    pub output: Option<String>,
    pub distributions: Distributions,
    pub wmmse: WmmseConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Single,
            nodes: 10,
            antennas: 6,
            subchannels: 3,
            power_budget: 5.0,
            bandwidth: 1e6,
            noise_power: 1.0,
            seeds: (0..10).collect(),
            methods: vec![Method::Greedy, Method::Random, Method::Local],
            restarts: 10,
            alternations: 10,
            report: Report::Best,
            strict_properness: false,
            sweep_values: None,
            timing: false,
            output: None,
            distributions: Distributions::default(),
            wmmse: WmmseConfig::default(),
        }
    }
}

/// Antenna properness `2N >= floor(K/2) + 1`.
pub fn is_proper(nodes: usize, antennas: usize) -> bool {
    2 * antennas > nodes / 2
}

/// Instance shape at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub nodes: usize,
    pub antennas: usize,
    pub subchannels: usize,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn sweep_points(&self) -> Vec<usize> {
        if let Some(v) = &self.sweep_values {
            return v.clone();
        }
        match self.scenario {
            Scenario::LinksSweep => (0..=self.nodes / 2).collect(),
            Scenario::Iterations => (0..=self.alternations).collect(),
            Scenario::SubchannelsSweep => vec![1, 2, 3, 4],
            Scenario::NodesSweep => vec![4, 6, 8, 10, 12],
            Scenario::Single => vec![0],
        }
    }

    /// Instance shape used at `point`. Scenarios whose sweep does not change
    /// the instance share one shape across points.
    pub fn shape_at(&self, point: usize) -> Shape {
        let base = Shape {
            nodes: self.nodes,
            antennas: self.antennas,
            subchannels: self.subchannels,
        };
        match self.scenario {
            Scenario::SubchannelsSweep => Shape {
                subchannels: point,
                ..base
            },
            Scenario::NodesSweep => Shape { nodes: point, ..base },
            _ => base,
        }
    }

    /// Distinct instance shapes the run will generate.
    pub fn shapes(&self) -> Vec<Shape> {
        let mut shapes = Vec::new();
        for p in self.instance_points() {
            let s = self.shape_at(p);
            if !shapes.contains(&s) {
                shapes.push(s);
            }
        }
        shapes
    }

    /// Points that get their own optimizer runs. The iterations scenario runs
    /// once and reads every point off the trajectory.
    pub fn instance_points(&self) -> Vec<usize> {
        match self.scenario {
            Scenario::Iterations => vec![0],
            _ => self.sweep_points(),
        }
    }

    pub fn properness_violations(&self) -> Vec<String> {
        self.shapes()
            .into_iter()
            .filter(|s| !is_proper(s.nodes, s.antennas))
            .map(|s| {
                format!(
                    "antenna properness violated: 2N = {} < floor(K/2) + 1 = {} (K = {}, N = {})",
                    2 * s.antennas,
                    s.nodes / 2 + 1,
                    s.nodes,
                    s.antennas
                )
            })
            .collect()
    }

    /// Checks every field; returns properness warnings when they are not
    /// promoted to errors.
    pub fn validate(&self) -> Result<Vec<String>> {
        let bad = |m: String| Err(Error::Config(m));
        if self.antennas == 0 {
            return bad("antennas must be at least 1".into());
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return bad(format!("power_budget must be positive, got {}", self.power_budget));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad(format!("bandwidth must be positive, got {}", self.bandwidth));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return bad(format!("noise_power must be positive, got {}", self.noise_power));
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.restarts == 0 || self.alternations == 0 {
            return bad("restarts and alternations must be at least 1".into());
        }
        self.distributions.data_mbit.check("data_mbit")?;
        self.distributions.speed_mbps.check("speed_mbps")?;
        self.distributions.power_w.check("power_w")?;
        let points = self.sweep_points();
        if points.is_empty() {
            return bad("sweep_values must not be empty".into());
        }
        for s in self.shapes() {
            if s.nodes < 2 {
                return bad(format!("need at least 2 nodes, got {}", s.nodes));
            }
            if s.subchannels == 0 {
                return bad("need at least one subchannel".into());
            }
        }
        if self.scenario == Scenario::Iterations && points.iter().any(|&p| p > self.alternations) {
            return bad("iteration points cannot exceed the alternation cap".into());
        }
        let warnings = self.properness_violations();
        if self.strict_properness && !warnings.is_empty() {
            return bad(warnings.join("; "));
        }
        Ok(warnings)
    }

    /// SHA-256 of the configuration with the output path cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
