//! The round engine: max norm synchronization, training and consensus
//! phases with the link-failure channel model, and the baseline algorithms
//! built on the same machinery.
//!
//! Phases follow snapshot semantics: within an iteration every device reads
//! the previous iteration's parameters and all devices commit
//! simultaneously, so results do not depend on processing order.

use std::fmt;

use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{self, DevicePartition, Normalization};
use crate::mixing::{self, MixingScheme, NeighborInfo, StepSizeSchedule};
use crate::model::{self, GradientVector, Hyperparams, ModelParams, OptimizerState, PARAM_COUNT};
use crate::topology::Graph;
use crate::{rng, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlgorithmKind {
    P2pl,
    P2plNoSync,
    FedAvg,
    Centralized,
    Cfa,
    CfaMomentum,
}

impl AlgorithmKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmKind::P2pl => "p2pl",
            AlgorithmKind::P2plNoSync => "p2pl_no_sync",
            AlgorithmKind::FedAvg => "fedavg",
            AlgorithmKind::Centralized => "centralized",
            AlgorithmKind::Cfa => "cfa",
            AlgorithmKind::CfaMomentum => "cfa_momentum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "p2pl" => AlgorithmKind::P2pl,
            "p2pl_no_sync" => AlgorithmKind::P2plNoSync,
            "fedavg" => AlgorithmKind::FedAvg,
            "centralized" => AlgorithmKind::Centralized,
            "cfa" => AlgorithmKind::Cfa,
            "cfa_momentum" => AlgorithmKind::CfaMomentum,
            _ => return None,
        })
    }

    /// Gossip algorithms exchange parameters over the graph each round.
    pub fn uses_consensus(self) -> bool {
        !matches!(self, AlgorithmKind::FedAvg | AlgorithmKind::Centralized)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One device: model, optimizer, local data indices, and a private batch
/// stream derived from (master seed, device id).
#[derive(Clone, Debug)]
pub struct DeviceState {
    pub id: usize,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub local_indices: Vec<u32>,
    pub data_size: usize,
    batch_rng: ChaCha8Rng,
}

/// Per-directed-message Bernoulli delivery with success probability C.
#[derive(Clone, Debug)]
pub struct ChannelModel {
    success_prob: f64,
    rng: ChaCha8Rng,
}

impl ChannelModel {
    pub fn new(success_prob: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(success_prob > 0.0 && success_prob <= 1.0) {
            return Err(Error::InvalidConfig(vec![format!(
                "channel success probability must lie in (0, 1], got {success_prob}"
            )]));
        }
        Ok(ChannelModel { success_prob, rng })
    }

    pub fn success_prob(&self) -> f64 {
        self.success_prob
    }

    /// Senders whose message reached each receiver this phase. Directed
    /// edges are visited in (sender, receiver) order so draws are
    /// reproducible; with C = 1 no randomness is consumed.
    fn deliveries(&mut self, graph: &Graph) -> Vec<Vec<u32>> {
        let k = graph.vertex_count();
        let mut delivered = vec![Vec::new(); k];
        if self.success_prob >= 1.0 {
            for receiver in 0..k {
                delivered[receiver] = graph.neighbors(receiver).to_vec();
            }
            return delivered;
        }
        for sender in 0..k {
            for &receiver in graph.neighbors(sender) {
                if self.rng.random::<f64>() < self.success_prob {
                    delivered[receiver as usize].push(sender as u32);
                }
            }
        }
        delivered
    }
}

/// Normalized training inputs shared read-only by all devices.
#[derive(Clone, Copy)]
pub struct TrainingData<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub labels: &'a [u8],
}

/// Repeated neighborhood argmax-by-norm adoption: after Diameter(G)
/// synchronous iterations every device holds the globally largest-norm
/// parameter set (norm ties break to the lower device id).
pub fn max_norm_sync(devices: &mut [DeviceState], graph: &Graph) -> Result<()> {
    let iterations = graph.diameter().map_err(|_| Error::Disconnected { op: "max_norm_sync" })?;
    let mut norms: Vec<f64> = devices.iter().map(|d| model::param_norm(&d.params)).collect();
    for _ in 0..iterations {
        sync_step(devices, graph, &mut norms);
    }
    Ok(())
}

fn sync_step(devices: &mut [DeviceState], graph: &Graph, norms: &mut [f64]) {
    let winners: Vec<usize> = (0..devices.len())
        .map(|k| {
            let mut best = k;
            for &i in graph.neighbors(k) {
                let i = i as usize;
                if norms[i] > norms[best] || (norms[i] == norms[best] && i < best) {
                    best = i;
                }
            }
            best
        })
        .collect();
    let adopted: Vec<Option<ModelParams>> = winners
        .iter()
        .enumerate()
        .map(|(k, &w)| (w != k).then(|| devices[w].params.clone()))
        .collect();
    let new_norms: Vec<f64> = winners.iter().map(|&w| norms[w]).collect();
    for (k, (dev, new)) in devices.iter_mut().zip(adopted).enumerate() {
        if let Some(p) = new {
            dev.params = p;
        }
        norms[k] = new_norms[k];
    }
}

/// One local epoch of momentum mini-batch gradient descent. The optimizer
/// velocity persists across rounds; an empty local dataset is skipped with
/// a warning.
pub fn train_phase(
    device: &mut DeviceState,
    data: &TrainingData<'_>,
    hp: &Hyperparams,
    reshuffle_each_epoch: bool,
) -> Result<()> {
    if device.local_indices.is_empty() {
        log::warn!("device {} has no local data; skipping training phase", device.id);
        return Ok(());
    }
    let batches = if reshuffle_each_epoch {
        dataset::epoch_batches(&device.local_indices, hp.batch_size, &mut device.batch_rng)
    } else {
        dataset::fixed_batches(&device.local_indices, hp.batch_size)
    };
    for batch in batches {
        let inputs = dataset::gather_rows(data.inputs, &batch, Normalization::UnitRange);
        let labels: Vec<u8> = batch.iter().map(|&i| data.labels[i as usize]).collect();
        let (_, grad): (f64, GradientVector) = model::loss_and_grad(&device.params, inputs.view(), &labels)?;
        model::momentum_step(&mut device.params, &mut device.optimizer, &grad, hp);
    }
    Ok(())
}

/// One synchronous consensus phase: every device combines its parameters
/// with the neighbor parameters that survived the channel,
/// w_k <- w_k - eps_k * sum_i a_ki (w_k - w_i), reading a snapshot of all
/// post-training parameters.
pub fn consensus_phase(
    devices: &mut [DeviceState],
    graph: &Graph,
    scheme: MixingScheme,
    schedule: &StepSizeSchedule,
    channel: &mut Option<ChannelModel>,
    round: u64,
) -> Result<()> {
    let k = devices.len();
    if graph.vertex_count() != k {
        return Err(Error::Shape {
            op: "consensus_phase",
            expected: format!("{} devices", graph.vertex_count()),
            got: k.to_string(),
        });
    }
    let sizes: Vec<usize> = devices.iter().map(|d| d.data_size).collect();
    let degrees: Vec<usize> = (0..k).map(|v| graph.degree(v)).collect();
    let delivered: Option<Vec<Vec<u32>>> = channel.as_mut().map(|ch| ch.deliveries(graph));

    let devs: &[DeviceState] = devices;
    let new_params: Vec<Option<ModelParams>> = (0..k)
        .into_par_iter()
        .map(|v| {
            let received_from: &[u32] = delivered
                .as_ref()
                .map_or(graph.neighbors(v), |d| &d[v]);
            if received_from.is_empty() {
                return None;
            }
            let received: Vec<NeighborInfo> = received_from
                .iter()
                .map(|&i| NeighborInfo {
                    device: i as usize,
                    data_size: sizes[i as usize],
                    degree: degrees[i as usize],
                })
                .collect();
            let weights = mixing::neighbor_weights(scheme, &received, sizes[v], degrees[v]);
            let static_sizes: Vec<usize> =
                graph.neighbors(v).iter().map(|&j| sizes[j as usize]).collect();
            let eps = mixing::step_size(schedule, round, sizes[v], &static_sizes);

            let wk = devs[v].params.as_slice();
            let mut acc = vec![0.0f64; PARAM_COUNT];
            for (i, alpha) in &weights {
                let wi = devs[*i].params.as_slice();
                for j in 0..PARAM_COUNT {
                    acc[j] += alpha * (wk[j] - wi[j]);
                }
            }
            let mut out = devs[v].params.clone();
            let o = out.as_mut_slice();
            for j in 0..PARAM_COUNT {
                o[j] -= eps * acc[j];
            }
            Some(out)
        })
        .collect();

    for (dev, np) in devices.iter_mut().zip(new_params) {
        if let Some(p) = np {
            dev.params = p;
        }
    }
    Ok(())
}

/// Everything fixed at experiment start.
#[derive(Clone, Debug)]
pub struct SimulationSetup {
    pub algorithm: AlgorithmKind,
    pub graph: Graph,
    pub scheme: MixingScheme,
    pub schedule: StepSizeSchedule,
    pub hyperparams: Hyperparams,
    pub channel_success_prob: f64,
    pub reshuffle_each_epoch: bool,
    pub master_seed: u64,
}

/// The running experiment: devices plus per-algorithm server state.
pub struct Simulation<'a> {
    setup: SimulationSetup,
    data: TrainingData<'a>,
    devices: Vec<DeviceState>,
    channel: Option<ChannelModel>,
    /// Aggregated model between rounds (federated averaging only).
    global: Option<ModelParams>,
    round: u64,
}

impl<'a> Simulation<'a> {
    pub fn new(setup: SimulationSetup, data: TrainingData<'a>, partition: &DevicePartition) -> Result<Self> {
        setup.hyperparams.validate()?;
        let k = partition.num_devices();
        let mut problems = Vec::new();
        if setup.graph.vertex_count() != k {
            problems.push(format!(
                "graph has {} vertices but the partition has {k} devices",
                setup.graph.vertex_count()
            ));
        }
        if !(setup.channel_success_prob > 0.0 && setup.channel_success_prob <= 1.0) {
            problems.push(format!(
                "channel success probability must lie in (0, 1], got {}",
                setup.channel_success_prob
            ));
        }
        if setup.channel_success_prob < 1.0 && !setup.algorithm.uses_consensus() {
            problems.push(format!(
                "link failures apply to consensus exchanges; {} does not use them",
                setup.algorithm
            ));
        }
        if setup.algorithm == AlgorithmKind::Centralized && k != 1 {
            problems.push(format!("centralized training uses a single device, got {k}"));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems));
        }

        let devices: Vec<DeviceState> = (0..k)
            .map(|id| {
                let mut init_rng = rng::indexed_stream(setup.master_seed, "init", id as u64);
                DeviceState {
                    id,
                    params: model::init_params(&mut init_rng),
                    optimizer: OptimizerState::new(),
                    local_indices: partition.indices(id).to_vec(),
                    data_size: partition.indices(id).len(),
                    batch_rng: rng::indexed_stream(setup.master_seed, "batch", id as u64),
                }
            })
            .collect();
        let channel = if setup.channel_success_prob < 1.0 {
            Some(ChannelModel::new(
                setup.channel_success_prob,
                rng::stream(setup.master_seed, "channel"),
            )?)
        } else {
            None
        };
        Ok(Simulation {
            setup,
            data,
            devices,
            channel,
            global: None,
            round: 0,
        })
    }

    /// Pre-round phase: max norm synchronization for the full protocol, the
    /// initial broadcast for federated averaging. The edgeless graph skips
    /// synchronization entirely.
    pub fn setup_phase(&mut self) -> Result<()> {
        match self.setup.algorithm {
            AlgorithmKind::P2pl => {
                if self.setup.graph.edge_count() > 0 {
                    max_norm_sync(&mut self.devices, &self.setup.graph)?;
                }
                Ok(())
            }
            AlgorithmKind::FedAvg => {
                // The server holds no data; it starts from the largest-norm
                // device initialization (ties to the lower id), mirroring
                // what one max-norm synchronization would select.
                let norms: Vec<f64> = self.devices.iter().map(|d| model::param_norm(&d.params)).collect();
                let mut best = 0;
                for i in 1..norms.len() {
                    if norms[i] > norms[best] {
                        best = i;
                    }
                }
                let global = self.devices[best].params.clone();
                self.broadcast(&global);
                self.global = Some(global);
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn broadcast(&mut self, global: &ModelParams) {
        for dev in &mut self.devices {
            dev.params.clone_from(global);
        }
    }

    fn train_all(&mut self) -> Result<()> {
        let data = self.data;
        let hp = self.setup.hyperparams;
        let reshuffle = self.setup.reshuffle_each_epoch;
        self.devices
            .par_iter_mut()
            .map(|dev| train_phase(dev, &data, &hp, reshuffle))
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    }

    /// Advance one synchronous round.
    pub fn step_round(&mut self) -> Result<()> {
        self.round += 1;
        match self.setup.algorithm {
            AlgorithmKind::P2pl | AlgorithmKind::P2plNoSync => {
                self.train_all()?;
                consensus_phase(
                    &mut self.devices,
                    &self.setup.graph,
                    self.setup.scheme,
                    &self.setup.schedule,
                    &mut self.channel,
                    self.round,
                )
            }
            AlgorithmKind::Cfa | AlgorithmKind::CfaMomentum => {
                consensus_phase(
                    &mut self.devices,
                    &self.setup.graph,
                    self.setup.scheme,
                    &self.setup.schedule,
                    &mut self.channel,
                    self.round,
                )?;
                self.train_all()
            }
            AlgorithmKind::Centralized => self.train_all(),
            AlgorithmKind::FedAvg => {
                self.train_all()?;
                let n: usize = self.devices.iter().map(|d| d.data_size).sum();
                let terms: Vec<(f64, &ModelParams)> = self
                    .devices
                    .iter()
                    .map(|d| (d.data_size as f64 / n as f64, &d.params))
                    .collect();
                let global = model::combine(&terms)?;
                self.broadcast(&global);
                self.global = Some(global);
                Ok(())
            }
        }
    }

    pub fn devices(&self) -> &[DeviceState] {
        &self.devices
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn graph(&self) -> &Graph {
        &self.setup.graph
    }

    pub fn algorithm(&self) -> AlgorithmKind {
        self.setup.algorithm
    }
}
