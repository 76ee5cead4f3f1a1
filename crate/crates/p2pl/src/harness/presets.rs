//! Named experiment presets covering the reference experiment grid:
//! the complete-graph algorithm comparison, the topology sweep, the
//! doubly-stochastic and pathological non-IID variants, and the
//! link-failure series. All presets use master seed 42.

use std::path::PathBuf;

use crate::harness::config::{ExperimentConfig, GraphFamily, PartitionScheme, StepSizeKind};
use crate::mixing::MixingScheme;
use crate::protocol::AlgorithmKind;
use crate::{Error, Result};

const TOPOLOGIES: [GraphFamily; 9] = [
    GraphFamily::Complete,
    GraphFamily::Star,
    GraphFamily::Cycle,
    GraphFamily::Grid2d,
    GraphFamily::Empty,
    GraphFamily::Rgg3d,
    GraphFamily::ErdosRenyi,
    GraphFamily::WattsStrogatz,
    GraphFamily::RandomTree,
];

/// Every documented preset name.
pub fn preset_names() -> Vec<String> {
    let mut names = vec![
        "centralized".to_string(),
        "table1_fedavg".to_string(),
        "table1_p2pl_complete".to_string(),
        "table1_p2pl_no_sync".to_string(),
        "table1_cfa".to_string(),
        "table1_cfa_momentum".to_string(),
    ];
    for t in TOPOLOGIES {
        names.push(format!("fig2_{}", t.name()));
    }
    for t in TOPOLOGIES.iter().filter(|t| **t != GraphFamily::Empty) {
        names.push(format!("table2_mh_{}", t.name()));
    }
    for t in TOPOLOGIES.iter().filter(|t| **t != GraphFamily::Empty) {
        names.push(format!("table2_noniid_{}", t.name()));
    }
    names.push("table2_noniid_fedavg".to_string());
    names.push("table2_noniid_centralized".to_string());
    for c in ["1", "0.5", "0.25", "0.125"] {
        names.push(format!("table3_linkfail_{c}"));
    }
    names
}

/// Expand a preset name into its full configuration.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    cfg.output = PathBuf::from(format!("{name}.csv"));

    let unknown = || Error::UnknownPreset {
        name: name.to_string(),
        available: preset_names(),
    };

    match name {
        "centralized" => {
            cfg.algorithm = AlgorithmKind::Centralized;
            cfg.devices = 1;
            return Ok(cfg);
        }
        "table1_fedavg" => {
            cfg.algorithm = AlgorithmKind::FedAvg;
            return Ok(cfg);
        }
        "table1_p2pl_complete" => return Ok(cfg),
        "table1_p2pl_no_sync" => {
            cfg.algorithm = AlgorithmKind::P2plNoSync;
            return Ok(cfg);
        }
        "table1_cfa" | "table1_cfa_momentum" => {
            cfg.algorithm = if name == "table1_cfa" {
                AlgorithmKind::Cfa
            } else {
                AlgorithmKind::CfaMomentum
            };
            cfg.step_size_kind = StepSizeKind::CfaFormula;
            return Ok(cfg);
        }
        "table2_noniid_fedavg" => {
            cfg.algorithm = AlgorithmKind::FedAvg;
            cfg.partition = PartitionScheme::PathologicalNonIid;
            return Ok(cfg);
        }
        "table2_noniid_centralized" => {
            cfg.algorithm = AlgorithmKind::Centralized;
            cfg.devices = 1;
            cfg.partition = PartitionScheme::PathologicalNonIid;
            return Ok(cfg);
        }
        _ => {}
    }

    if let Some(topology) = name.strip_prefix("fig2_") {
        cfg.graph = GraphFamily::parse(topology).ok_or_else(unknown)?;
        return Ok(cfg);
    }
    if let Some(topology) = name.strip_prefix("table2_mh_") {
        cfg.graph = GraphFamily::parse(topology).ok_or_else(unknown)?;
        if cfg.graph == GraphFamily::Empty {
            return Err(unknown());
        }
        cfg.mixing = MixingScheme::MetropolisHastings;
        return Ok(cfg);
    }
    if let Some(topology) = name.strip_prefix("table2_noniid_") {
        cfg.graph = GraphFamily::parse(topology).ok_or_else(unknown)?;
        if cfg.graph == GraphFamily::Empty {
            return Err(unknown());
        }
        cfg.partition = PartitionScheme::PathologicalNonIid;
        return Ok(cfg);
    }
    if let Some(c) = name.strip_prefix("table3_linkfail_") {
        let prob: f64 = match c {
            "1" => 1.0,
            "0.5" => 0.5,
            "0.25" => 0.25,
            "0.125" => 0.125,
            _ => return Err(unknown()),
        };
        cfg.graph = GraphFamily::ErdosRenyi;
        cfg.channel_success_prob = prob;
        return Ok(cfg);
    }
    Err(unknown())
}
