//! Experiment orchestration: configuration, dataset staging, the run loop
//! with per-round metrics, run summaries, and validation commands.

pub mod config;
pub mod metrics;
pub mod presets;
pub mod verify;

pub use config::{ExperimentConfig, GraphFamily, PartitionScheme, StepSizeKind};
pub use metrics::{
    read_metrics, rounds_to_threshold, summarize, write_series, MetricWriter, RoundMetrics, Summary,
};
pub use presets::{preset, preset_names};

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};

use crate::dataset::{self, Dataset, DevicePartition};
use crate::model::{self, Hyperparams, ModelParams};
use crate::protocol::{AlgorithmKind, DeviceState, Simulation, SimulationSetup, TrainingData};
use crate::topology::{self, Graph};
use crate::{rng, Error, Result};

/// Environment variable overriding the configured dataset directory.
pub const DATA_DIR_ENV: &str = "P2PL_DATA_DIR";

/// Outcome of one experiment run.
#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// First evaluated round whose minimum device accuracy reached the
    /// threshold.
    pub rounds_to_threshold: Option<u64>,
    pub rounds_run: u64,
    pub wall_time: Duration,
    pub eval_stride: u64,
    pub final_metrics: Option<RoundMetrics>,
}

impl std::fmt::Display for ConvergenceReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.rounds_to_threshold {
            Some(r) => writeln!(f, "converged: yes, minimum accuracy crossed the threshold at round {r}")?,
            None => writeln!(f, "converged: no crossing within {} rounds", self.rounds_run)?,
        }
        writeln!(f, "rounds run: {}", self.rounds_run)?;
        writeln!(f, "wall time: {:.1}s", self.wall_time.as_secs_f64())?;
        if self.eval_stride > 1 {
            writeln!(
                f,
                "evaluation stride: {} (crossings are detected at evaluated rounds only)",
                self.eval_stride
            )?;
        }
        if let Some(m) = &self.final_metrics {
            writeln!(
                f,
                "final round {}: min {:.4} avg {:.4} max {:.4} objective {:.4} dispersion {:.3e}",
                m.round, m.min_acc, m.avg_acc, m.max_acc, m.objective, m.dispersion
            )?;
        }
        Ok(())
    }
}

/// The configured dataset directory, unless `P2PL_DATA_DIR` overrides it.
pub fn resolve_data_dir(cfg: &ExperimentConfig) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| cfg.data_dir.clone())
}

fn find_idx_file(dir: &Path, base: &str) -> Result<PathBuf> {
    let plain = dir.join(base);
    if plain.exists() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{base}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    Err(Error::io(
        plain,
        std::io::Error::new(
            std::io::ErrorKind::NotFound,
            "dataset file not found (also tried the .gz variant)",
        ),
    ))
}

/// Load the training and test sets from a directory holding the four
/// standard IDX files (optionally gzip-compressed).
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = dataset::load_idx(
        &find_idx_file(dir, "train-images-idx3-ubyte")?,
        &find_idx_file(dir, "train-labels-idx1-ubyte")?,
    )?;
    let test = dataset::load_idx(
        &find_idx_file(dir, "t10k-images-idx3-ubyte")?,
        &find_idx_file(dir, "t10k-labels-idx1-ubyte")?,
    )?;
    Ok((train, test))
}

/// Run-scoped staging: normalized input matrices plus the device partition.
pub struct PreparedData {
    pub train_inputs: Array2<f64>,
    pub train_labels: Vec<u8>,
    pub test_inputs: Array2<f64>,
    pub test_labels: Vec<u8>,
    pub partition: DevicePartition,
}

impl PreparedData {
    pub fn training_data(&self) -> TrainingData<'_> {
        TrainingData {
            inputs: self.train_inputs.view(),
            labels: &self.train_labels,
        }
    }
}

pub fn prepare_data(cfg: &ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<PreparedData> {
    let mut partition_rng = rng::stream(cfg.seed, "partition");
    let partition = match cfg.partition {
        PartitionScheme::Iid => dataset::partition_iid(train, cfg.devices, &mut partition_rng)?,
        PartitionScheme::PathologicalNonIid => dataset::partition_pathological_noniid(
            train,
            cfg.devices,
            cfg.shards_per_device,
            &mut partition_rng,
        )?,
    };
    Ok(PreparedData {
        train_inputs: train.input_matrix(cfg.normalization),
        train_labels: train.labels().to_vec(),
        test_inputs: test.input_matrix(cfg.normalization),
        test_labels: test.labels().to_vec(),
        partition,
    })
}

/// Build the communication graph, calibrating the RGG radius when the
/// config requests it.
pub fn build_graph(cfg: &ExperimentConfig) -> Result<Graph> {
    let calibrated = if cfg.graph == GraphFamily::Rgg3d && cfg.rgg_radius.is_none() {
        let radius = topology::calibrate_rgg_radius(cfg.devices, cfg.rgg_target_degree, cfg.graph_seed())?;
        log::info!("calibrated rgg3d radius to {radius:.4} for mean degree {}", cfg.rgg_target_degree);
        Some(radius)
    } else {
        None
    };
    topology::build(&cfg.graph_spec(calibrated)?)
}

/// Assemble the simulation for a validated config.
pub fn build_simulation<'a>(cfg: &ExperimentConfig, data: &'a PreparedData) -> Result<Simulation<'a>> {
    let graph = build_graph(cfg)?;
    let mut hyperparams = Hyperparams {
        batch_size: cfg.batch_size,
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
    };
    // The plain consensus-first baseline trains without momentum.
    if cfg.algorithm == AlgorithmKind::Cfa {
        hyperparams.momentum = 0.0;
    }
    Simulation::new(
        SimulationSetup {
            algorithm: cfg.algorithm,
            graph,
            scheme: cfg.mixing,
            schedule: cfg.schedule(),
            hyperparams,
            channel_success_prob: cfg.channel_success_prob,
            reshuffle_each_epoch: cfg.reshuffle_each_epoch,
            master_seed: cfg.seed,
        },
        data.training_data(),
        &data.partition,
    )
}

/// Test accuracy of every device. Devices holding bitwise-identical
/// parameters share one evaluation (accuracy is a pure function of the
/// parameters, so this changes nothing observable).
pub fn evaluate_devices(
    devices: &[DeviceState],
    test_inputs: ArrayView2<'_, f64>,
    test_labels: &[u8],
) -> Result<Vec<f64>> {
    let k = devices.len();
    let mut group_of = vec![0usize; k];
    let mut representatives: Vec<usize> = Vec::new();
    for v in 0..k {
        match representatives
            .iter()
            .position(|&r| devices[v].params.bits_eq(&devices[r].params))
        {
            Some(g) => group_of[v] = g,
            None => {
                group_of[v] = representatives.len();
                representatives.push(v);
            }
        }
    }
    let rep_accs: Vec<f64> = representatives
        .iter()
        .map(|&r| model::evaluate_accuracy(&devices[r].params, test_inputs, test_labels))
        .collect::<Result<_>>()?;
    Ok(group_of.into_iter().map(|g| rep_accs[g]).collect())
}

fn l2_distance(a: &ModelParams, b: &ModelParams) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Accuracy spread, the global objective at the average parameters, and the
/// parameter dispersion for one evaluated round.
pub fn compute_round_metrics(round: u64, devices: &[DeviceState], data: &PreparedData) -> Result<RoundMetrics> {
    let accs = evaluate_devices(devices, data.test_inputs.view(), &data.test_labels)?;
    let k = accs.len() as f64;
    let min_acc = accs.iter().copied().fold(f64::INFINITY, f64::min);
    let max_acc = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let avg_acc = accs.iter().sum::<f64>() / k;

    let terms: Vec<(f64, &ModelParams)> = devices.iter().map(|d| (1.0 / k, &d.params)).collect();
    let mean_params = model::combine(&terms)?;
    let objective = model::mean_loss(&mean_params, data.train_inputs.view(), &data.train_labels)?;
    let dispersion = devices
        .iter()
        .map(|d| l2_distance(&d.params, &mean_params))
        .fold(0.0, f64::max);
    Ok(RoundMetrics {
        round,
        min_acc,
        avg_acc,
        max_acc,
        objective,
        dispersion,
    })
}

/// Execute the configured experiment: run rounds until the minimum device
/// accuracy crosses the threshold or the budget runs out, appending one
/// metric record per evaluated round.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(PathBuf, ConvergenceReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let data_dir = resolve_data_dir(cfg);
    let (train, test) = load_mnist(&data_dir)?;
    let prepared = prepare_data(cfg, &train, &test)?;
    drop(train);
    drop(test);

    let mut sim = build_simulation(cfg, &prepared)?;
    sim.setup_phase()?;

    let mut writer = MetricWriter::create(&cfg.output)?;
    let mut final_metrics = None;
    let mut rounds_to_threshold = None;
    let mut rounds_run = 0;
    for t in 1..=cfg.budget {
        sim.step_round()?;
        rounds_run = t;
        if t % cfg.eval_stride == 0 {
            let m = compute_round_metrics(t, sim.devices(), &prepared)?;
            log::info!(
                "round {t}: min {:.4} avg {:.4} max {:.4} objective {:.4} dispersion {:.3e}",
                m.min_acc,
                m.avg_acc,
                m.max_acc,
                m.objective,
                m.dispersion
            );
            writer.append(&m)?;
            final_metrics = Some(m);
            if m.min_acc >= cfg.threshold {
                rounds_to_threshold = Some(t);
                break;
            }
        }
    }
    writer.finish()?;
    let report = ConvergenceReport {
        converged: rounds_to_threshold.is_some(),
        rounds_to_threshold,
        rounds_run,
        wall_time: start.elapsed(),
        eval_stride: cfg.eval_stride,
        final_metrics,
    };
    Ok((cfg.output.clone(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::fixtures::write_idx_pair;
    use tempfile::tempdir;

    /// Tiny synthetic MNIST-shaped corpus on disk: 80 train / 40 test
    /// samples of 28x28 bytes.
    fn tiny_data_dir() -> tempfile::TempDir {
        let dir = tempdir().unwrap();
        let mk = |n: usize, offset: usize| -> (Vec<Vec<u8>>, Vec<u8>) {
            let images: Vec<Vec<u8>> = (0..n)
                .map(|i| (0..784).map(|j| ((i * 31 + j * 7 + offset) % 256) as u8).collect())
                .collect();
            let labels: Vec<u8> = (0..n).map(|i| ((i + offset) % 10) as u8).collect();
            (images, labels)
        };
        let (ti, tl) = mk(80, 0);
        write_idx_pair(dir.path(), "train", &ti, &tl, 28, 28, false);
        let (si, sl) = mk(40, 3);
        write_idx_pair(dir.path(), "t10k", &si, &sl, 28, 28, true);
        dir
    }

    fn tiny_config(dir: &Path, out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.devices = 4;
        cfg.budget = 3;
        cfg.threshold = 0.97;
        cfg.data_dir = dir.to_path_buf();
        cfg.output = out.to_path_buf();
        cfg
    }

    #[test]
    fn run_experiment_respects_budget_and_is_reproducible() {
        let data = tiny_data_dir();
        let out_dir = tempdir().unwrap();
        let out_a = out_dir.path().join("a.csv");
        let cfg = tiny_config(data.path(), &out_a);
        let (path, report) = run_experiment(&cfg).unwrap();
        assert!(!report.converged);
        assert_eq!(report.rounds_run, 3);
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 3);
        // Contiguous round indices from 1.
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.round, i as u64 + 1);
            assert!(r.min_acc <= r.avg_acc && r.avg_acc <= r.max_acc);
            assert!(r.dispersion >= 0.0);
        }

        let out_b = out_dir.path().join("b.csv");
        let mut cfg2 = tiny_config(data.path(), &out_b);
        cfg2.output = out_b.clone();
        run_experiment(&cfg2).unwrap();
        let a = std::fs::read_to_string(&out_a).unwrap();
        let b = std::fs::read_to_string(&out_b).unwrap();
        let a_body = a;
        let b_body = b;
        assert_eq!(a_body, b_body, "identical configs must produce identical metric files");
    }

    #[test]
    fn zero_threshold_is_impossible_but_tiny_threshold_converges_immediately() {
        let data = tiny_data_dir();
        let out_dir = tempdir().unwrap();
        let mut cfg = tiny_config(data.path(), &out_dir.path().join("c.csv"));
        cfg.threshold = 0.0;
        // Zero is outside the valid open interval; the validator says so.
        assert!(cfg.validate().is_err());
        cfg.threshold = 1e-9;
        let (_, report) = run_experiment(&cfg).unwrap();
        assert_eq!(report.rounds_to_threshold, Some(1));
    }

    #[test]
    fn eval_stride_skips_rounds_and_is_flagged() {
        let data = tiny_data_dir();
        let out_dir = tempdir().unwrap();
        let mut cfg = tiny_config(data.path(), &out_dir.path().join("d.csv"));
        cfg.budget = 4;
        cfg.eval_stride = 2;
        let (path, report) = run_experiment(&cfg).unwrap();
        assert_eq!(report.eval_stride, 2);
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.iter().map(|r| r.round).collect::<Vec<_>>(), vec![2, 4]);
        assert!(report.to_string().contains("stride"));
    }

    #[test]
    fn missing_dataset_is_a_clean_error() {
        let out_dir = tempdir().unwrap();
        let cfg = tiny_config(out_dir.path(), &out_dir.path().join("e.csv"));
        match run_experiment(&cfg) {
            Err(Error::Io { path, .. }) => {
                assert!(path.display().to_string().contains("train-images"));
            }
            other => panic!("expected missing-file error, got {other:?}"),
        }
    }

    #[test]
    fn fedavg_devices_share_one_evaluation() {
        let data = tiny_data_dir();
        let (train, test) = load_mnist(data.path()).unwrap();
        let mut cfg = tiny_config(data.path(), Path::new("unused.csv"));
        cfg.algorithm = AlgorithmKind::FedAvg;
        let prepared = prepare_data(&cfg, &train, &test).unwrap();
        let mut sim = build_simulation(&cfg, &prepared).unwrap();
        sim.setup_phase().unwrap();
        sim.step_round().unwrap();
        let accs = evaluate_devices(sim.devices(), prepared.test_inputs.view(), &prepared.test_labels).unwrap();
        assert!(accs.windows(2).all(|w| w[0] == w[1]));
    }
}
