//! Experiment configuration: a flat key = value file format, command-line
//! overrides, validation, and derived graph specs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dataset::Normalization;
use crate::mixing::{MixingScheme, StepSizeSchedule};
use crate::protocol::AlgorithmKind;
use crate::topology::{GraphKind, GraphSpec};
use crate::{rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionScheme {
    Iid,
    PathologicalNonIid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GraphFamily {
    Complete,
    Star,
    Cycle,
    Grid2d,
    Empty,
    Rgg3d,
    ErdosRenyi,
    WattsStrogatz,
    RandomTree,
}

impl GraphFamily {
    pub fn name(self) -> &'static str {
        match self {
            GraphFamily::Complete => "complete",
            GraphFamily::Star => "star",
            GraphFamily::Cycle => "cycle",
            GraphFamily::Grid2d => "grid2d",
            GraphFamily::Empty => "empty",
            GraphFamily::Rgg3d => "rgg3d",
            GraphFamily::ErdosRenyi => "erdos_renyi",
            GraphFamily::WattsStrogatz => "watts_strogatz",
            GraphFamily::RandomTree => "random_tree",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "complete" => GraphFamily::Complete,
            "star" => GraphFamily::Star,
            "cycle" => GraphFamily::Cycle,
            "grid2d" => GraphFamily::Grid2d,
            "empty" => GraphFamily::Empty,
            "rgg3d" => GraphFamily::Rgg3d,
            "erdos_renyi" => GraphFamily::ErdosRenyi,
            "watts_strogatz" => GraphFamily::WattsStrogatz,
            "random_tree" => GraphFamily::RandomTree,
            _ => return None,
        })
    }
}

/// Everything a run needs; field defaults follow the reference experiment
/// setup (100 devices, B = 10, eta = 0.01, mu = 0.5, eps = 1, threshold
/// 0.97, budget 10,000 rounds).
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmKind,
    pub devices: usize,
    pub graph: GraphFamily,
    pub rgg_radius: Option<f64>,
    pub rgg_target_degree: f64,
    pub er_edge_prob: Option<f64>,
    pub ws_neighbors: usize,
    pub ws_rewire_prob: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub mixing: MixingScheme,
    pub step_size_kind: StepSizeKind,
    pub epsilon: f64,
    pub channel_success_prob: f64,
    pub partition: PartitionScheme,
    pub shards_per_device: usize,
    pub normalization: Normalization,
    pub reshuffle_each_epoch: bool,
    pub seed: u64,
    pub budget: u64,
    pub threshold: f64,
    pub eval_stride: u64,
    pub data_dir: PathBuf,
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepSizeKind {
    Constant,
    CfaFormula,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            algorithm: AlgorithmKind::P2pl,
            devices: 100,
            graph: GraphFamily::Complete,
            rgg_radius: None,
            rgg_target_degree: 4.0,
            er_edge_prob: None,
            ws_neighbors: 4,
            ws_rewire_prob: 0.05,
            batch_size: 10,
            learning_rate: 0.01,
            momentum: 0.5,
            mixing: MixingScheme::DatasetSize,
            step_size_kind: StepSizeKind::Constant,
            epsilon: 1.0,
            channel_success_prob: 1.0,
            partition: PartitionScheme::Iid,
            shards_per_device: 2,
            normalization: Normalization::Standardize,
            reshuffle_each_epoch: true,
            seed: 42,
            budget: 10_000,
            threshold: 0.97,
            eval_stride: 1,
            data_dir: PathBuf::from("./data"),
            output: PathBuf::from("./metrics.csv"),
        }
    }
}

impl ExperimentConfig {
    /// Parse a flat `key = value` file ('#' starts a comment) over defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::default();
        let mut problems = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((key, value)) => {
                    if let Err(e) = cfg.set(key.trim(), value.trim()) {
                        problems.push(format!("line {}: {e}", i + 1));
                    }
                }
                None => problems.push(format!("line {}: expected 'key = value', got '{line}'", i + 1)),
            }
        }
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Apply `key=value` override pairs (the CLI's `--set`).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, pairs: &[S]) -> Result<()> {
        let mut problems = Vec::new();
        for pair in pairs {
            let pair = pair.as_ref();
            match pair.split_once('=') {
                Some((key, value)) => {
                    if let Err(e) = self.set(key.trim(), value.trim()) {
                        problems.push(e.to_string());
                    }
                }
                None => problems.push(format!("override '{pair}' is not of the form key=value")),
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Set one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| format!("{key}: cannot parse '{value}': {e}"))
        }
        match key {
            "algorithm" => {
                self.algorithm = AlgorithmKind::parse(value)
                    .ok_or_else(|| format!("algorithm: unknown value '{value}'"))?;
            }
            "devices" => self.devices = num(key, value)?,
            "graph" => {
                self.graph =
                    GraphFamily::parse(value).ok_or_else(|| format!("graph: unknown kind '{value}'"))?;
            }
            "rgg_radius" => {
                self.rgg_radius = if value == "auto" { None } else { Some(num(key, value)?) };
            }
            "rgg_target_degree" => self.rgg_target_degree = num(key, value)?,
            "er_edge_prob" => {
                self.er_edge_prob = if value == "auto" { None } else { Some(num(key, value)?) };
            }
            "ws_neighbors" => self.ws_neighbors = num(key, value)?,
            "ws_rewire_prob" => self.ws_rewire_prob = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "mixing" => {
                self.mixing = match value {
                    "dataset_size" => MixingScheme::DatasetSize,
                    "metropolis_hastings" => MixingScheme::MetropolisHastings,
                    _ => return Err(format!("mixing: unknown scheme '{value}'")),
                };
            }
            "step_size" => {
                self.step_size_kind = match value {
                    "constant" => StepSizeKind::Constant,
                    "cfa_formula" => StepSizeKind::CfaFormula,
                    _ => return Err(format!("step_size: unknown schedule '{value}'")),
                };
            }
            "epsilon" => self.epsilon = num(key, value)?,
            "channel_success_prob" => self.channel_success_prob = num(key, value)?,
            "partition" => {
                self.partition = match value {
                    "iid" => PartitionScheme::Iid,
                    "pathological_noniid" => PartitionScheme::PathologicalNonIid,
                    _ => return Err(format!("partition: unknown scheme '{value}'")),
                };
            }
            "shards_per_device" => self.shards_per_device = num(key, value)?,
            "normalization" => {
                self.normalization = match value {
                    "standardize" => Normalization::Standardize,
                    "unit_range" => Normalization::UnitRange,
                    _ => return Err(format!("normalization: unknown mode '{value}'")),
                };
            }
            "reshuffle_each_epoch" => self.reshuffle_each_epoch = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "budget" => self.budget = num(key, value)?,
            "threshold" => self.threshold = num(key, value)?,
            "eval_stride" => self.eval_stride = num(key, value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "output" => self.output = PathBuf::from(value),
            _ => return Err(format!("unknown configuration key '{key}'")),
        }
        Ok(())
    }

    /// Check every field, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.devices == 0 {
            problems.push("devices: must be at least 1".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size: must be a positive integer".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            problems.push(format!("learning_rate: must be positive, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            problems.push(format!("momentum: must lie in [0, 1), got {}", self.momentum));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            problems.push(format!("epsilon: must lie in [0, 1], got {}", self.epsilon));
        }
        if !(self.channel_success_prob > 0.0 && self.channel_success_prob <= 1.0) {
            problems.push(format!(
                "channel_success_prob: must lie in (0, 1], got {}",
                self.channel_success_prob
            ));
        }
        if self.channel_success_prob < 1.0
            && !matches!(self.algorithm, AlgorithmKind::P2pl | AlgorithmKind::P2plNoSync)
        {
            problems.push(format!(
                "channel_success_prob: link failures are only modeled for p2pl variants, not {}",
                self.algorithm
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            problems.push(format!("threshold: must lie in (0, 1), got {}", self.threshold));
        }
        if self.budget == 0 {
            problems.push("budget: must be at least 1 round".into());
        }
        if self.eval_stride == 0 {
            problems.push("eval_stride: must be at least 1".into());
        }
        if self.shards_per_device == 0 {
            problems.push("shards_per_device: must be at least 1".into());
        }
        if self.algorithm == AlgorithmKind::Centralized && self.devices != 1 {
            problems.push(format!(
                "devices: centralized training uses a single device, got {}",
                self.devices
            ));
        }
        if self.graph == GraphFamily::Grid2d {
            let side = (self.devices as f64).sqrt().round() as usize;
            if side * side != self.devices {
                problems.push(format!("devices: grid2d needs a square device count, got {}", self.devices));
            }
        }
        if self.graph == GraphFamily::WattsStrogatz
            && (self.ws_neighbors == 0 || self.ws_neighbors % 2 != 0 || self.ws_neighbors >= self.devices)
        {
            problems.push(format!(
                "ws_neighbors: must be even and in [2, devices), got {}",
                self.ws_neighbors
            ));
        }
        if self.graph == GraphFamily::Rgg3d && self.rgg_radius.is_none() && !(self.rgg_target_degree > 0.0) {
            problems.push(format!(
                "rgg_target_degree: must be positive for automatic radius calibration, got {}",
                self.rgg_target_degree
            ));
        }
        if let Some(p) = self.er_edge_prob {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("er_edge_prob: must lie in [0, 1], got {p}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems))
        }
    }

    /// Seed for graph construction, derived from the master seed.
    pub fn graph_seed(&self) -> u64 {
        rng::stream_seed(self.seed, "graph-spec", 0)
    }

    /// The concrete graph spec; the caller supplies the RGG radius when the
    /// config asks for automatic calibration.
    pub fn graph_spec(&self, calibrated_rgg_radius: Option<f64>) -> Result<GraphSpec> {
        let kind = match self.graph {
            GraphFamily::Complete => GraphKind::Complete,
            GraphFamily::Star => GraphKind::Star,
            GraphFamily::Cycle => GraphKind::Cycle,
            GraphFamily::Grid2d => GraphKind::Grid2d,
            GraphFamily::Empty => GraphKind::Empty,
            GraphFamily::Rgg3d => {
                let radius = self
                    .rgg_radius
                    .or(calibrated_rgg_radius)
                    .ok_or_else(|| Error::GraphSpec("rgg3d radius not yet calibrated".into()))?;
                GraphKind::Rgg3d { radius }
            }
            GraphFamily::ErdosRenyi => GraphKind::ErdosRenyi {
                edge_prob: self.er_edge_prob.unwrap_or(4.653 / (self.devices as f64 - 1.0)),
            },
            GraphFamily::WattsStrogatz => GraphKind::WattsStrogatz {
                neighbors: self.ws_neighbors,
                rewire_prob: self.ws_rewire_prob,
            },
            GraphFamily::RandomTree => GraphKind::RandomTree,
        };
        Ok(GraphSpec {
            kind,
            vertices: self.devices,
            seed: self.graph_seed(),
        })
    }

    pub fn schedule(&self) -> StepSizeSchedule {
        match self.step_size_kind {
            StepSizeKind::Constant => StepSizeSchedule::Constant(self.epsilon),
            StepSizeKind::CfaFormula => StepSizeSchedule::CfaFormula,
        }
    }

    /// Render as the flat key = value format.
    pub fn to_key_values(&self) -> BTreeMap<&'static str, String> {
        let mut m = BTreeMap::new();
        m.insert("algorithm", self.algorithm.name().to_string());
        m.insert("devices", self.devices.to_string());
        m.insert("graph", self.graph.name().to_string());
        m.insert(
            "rgg_radius",
            self.rgg_radius.map_or("auto".into(), |r| r.to_string()),
        );
        m.insert("rgg_target_degree", self.rgg_target_degree.to_string());
        m.insert(
            "er_edge_prob",
            self.er_edge_prob.map_or("auto".into(), |p| p.to_string()),
        );
        m.insert("ws_neighbors", self.ws_neighbors.to_string());
        m.insert("ws_rewire_prob", self.ws_rewire_prob.to_string());
        m.insert("batch_size", self.batch_size.to_string());
        m.insert("learning_rate", self.learning_rate.to_string());
        m.insert("momentum", self.momentum.to_string());
        m.insert(
            "mixing",
            match self.mixing {
                MixingScheme::DatasetSize => "dataset_size",
                MixingScheme::MetropolisHastings => "metropolis_hastings",
            }
            .to_string(),
        );
        m.insert(
            "step_size",
            match self.step_size_kind {
                StepSizeKind::Constant => "constant",
                StepSizeKind::CfaFormula => "cfa_formula",
            }
            .to_string(),
        );
        m.insert("epsilon", self.epsilon.to_string());
        m.insert("channel_success_prob", self.channel_success_prob.to_string());
        m.insert(
            "partition",
            match self.partition {
                PartitionScheme::Iid => "iid",
                PartitionScheme::PathologicalNonIid => "pathological_noniid",
            }
            .to_string(),
        );
        m.insert("shards_per_device", self.shards_per_device.to_string());
        m.insert(
            "normalization",
            match self.normalization {
                Normalization::Standardize => "standardize",
                Normalization::UnitRange => "unit_range",
            }
            .to_string(),
        );
        m.insert("reshuffle_each_epoch", self.reshuffle_each_epoch.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("budget", self.budget.to_string());
        m.insert("threshold", self.threshold.to_string());
        m.insert("eval_stride", self.eval_stride.to_string());
        m.insert("data_dir", self.data_dir.display().to_string());
        m.insert("output", self.output.display().to_string());
        m
    }
}
