//! Consensus mixing weights, step-size schedules, and stochasticity checks
//! for the effective mixing matrix.

use ndarray::Array2;

use crate::topology::Graph;

/// Rule producing the consensus coefficients a device assigns to neighbors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MixingScheme {
    /// Weight neighbors by local dataset size: a_ki = n_i / (n_k + sum_j n_j),
    /// with the sum over the received set (row stochastic).
    DatasetSize,
    /// Degree-based symmetric weights: a_ki = 1 / (1 + max(deg_k, deg_i))
    /// using static graph degrees (doubly stochastic on undirected graphs).
    MetropolisHastings,
}

/// Per-round, per-device consensus step size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSizeSchedule {
    Constant(f64),
    /// sum_j n_j / (n_k + sum_j n_j) over static neighbors.
    CfaFormula,
}

/// One successfully received neighbor message.
#[derive(Clone, Copy, Debug)]
pub struct NeighborInfo {
    pub device: usize,
    pub data_size: usize,
    pub degree: usize,
}

/// Mixing weight per received neighbor, in `received` order. An empty
/// received set yields an empty map (the device keeps its parameters).
pub fn neighbor_weights(
    scheme: MixingScheme,
    received: &[NeighborInfo],
    own_size: usize,
    own_degree: usize,
) -> Vec<(usize, f64)> {
    match scheme {
        MixingScheme::DatasetSize => {
            let denom = (own_size + received.iter().map(|r| r.data_size).sum::<usize>()) as f64;
            received
                .iter()
                .map(|r| (r.device, r.data_size as f64 / denom))
                .collect()
        }
        MixingScheme::MetropolisHastings => received
            .iter()
            .map(|r| (r.device, 1.0 / (1.0 + own_degree.max(r.degree) as f64)))
            .collect(),
    }
}

/// Evaluate the schedule for one device at round `round` (the round index
/// only matters for time-varying schedules; both built-ins are static).
pub fn step_size(schedule: &StepSizeSchedule, _round: u64, own_size: usize, neighbor_sizes: &[usize]) -> f64 {
    match schedule {
        StepSizeSchedule::Constant(eps) => *eps,
        StepSizeSchedule::CfaFormula => {
            let s: usize = neighbor_sizes.iter().sum();
            if s == 0 {
                0.0
            } else {
                s as f64 / (own_size + s) as f64
            }
        }
    }
}

/// The K x K matrix M with M[k][i] = eps_k * a_ki for i in N(k) and
/// M[k][k] = 1 - eps_k * sum_i a_ki, assuming no message drops.
pub fn effective_mixing_matrix(
    graph: &Graph,
    scheme: MixingScheme,
    schedule: &StepSizeSchedule,
    sizes: &[usize],
) -> Array2<f64> {
    let k = graph.vertex_count();
    assert_eq!(sizes.len(), k, "one dataset size per vertex");
    let mut m = Array2::zeros((k, k));
    for v in 0..k {
        let received: Vec<NeighborInfo> = graph
            .neighbors(v)
            .iter()
            .map(|&u| NeighborInfo {
                device: u as usize,
                data_size: sizes[u as usize],
                degree: graph.degree(u as usize),
            })
            .collect();
        let neighbor_sizes: Vec<usize> = received.iter().map(|r| r.data_size).collect();
        let eps = step_size(schedule, 0, sizes[v], &neighbor_sizes);
        let weights = neighbor_weights(scheme, &received, sizes[v], graph.degree(v));
        let mut total = 0.0;
        for (i, a) in weights {
            m[(v, i)] = eps * a;
            total += eps * a;
        }
        m[(v, v)] = 1.0 - total;
    }
    m
}

/// Row sums, column sums, and symmetry of the effective mixing matrix.
#[derive(Clone, Debug)]
pub struct StochasticityReport {
    pub row_sums: Vec<f64>,
    pub col_sums: Vec<f64>,
    pub max_row_deviation: f64,
    pub max_col_deviation: f64,
    pub max_asymmetry: f64,
    pub min_entry: f64,
}

impl StochasticityReport {
    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.max_row_deviation <= tol && self.min_entry >= -tol
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        self.is_row_stochastic(tol) && self.max_col_deviation <= tol
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.max_asymmetry <= tol
    }
}

pub fn verify_stochasticity(
    graph: &Graph,
    scheme: MixingScheme,
    schedule: &StepSizeSchedule,
    sizes: &[usize],
) -> StochasticityReport {
    let m = effective_mixing_matrix(graph, scheme, schedule, sizes);
    let k = graph.vertex_count();
    let row_sums: Vec<f64> = (0..k).map(|r| m.row(r).sum()).collect();
    let col_sums: Vec<f64> = (0..k).map(|c| m.column(c).sum()).collect();
    let max_row_deviation = row_sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let max_col_deviation = col_sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max);
    let mut max_asymmetry = 0.0f64;
    let mut min_entry = f64::INFINITY;
    for r in 0..k {
        for c in 0..k {
            max_asymmetry = max_asymmetry.max((m[(r, c)] - m[(c, r)]).abs());
            min_entry = min_entry.min(m[(r, c)]);
        }
    }
    StochasticityReport {
        row_sums,
        col_sums,
        max_row_deviation,
        max_col_deviation,
        max_asymmetry,
        min_entry,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build, GraphKind, GraphSpec};
    use proptest::prelude::*;

    fn complete(k: usize) -> Graph {
        build(&GraphSpec {
            kind: GraphKind::Complete,
            vertices: k,
            seed: 0,
        })
        .unwrap()
    }

    fn info(device: usize, data_size: usize, degree: usize) -> NeighborInfo {
        NeighborInfo {
            device,
            data_size,
            degree,
        }
    }

    #[test]
    fn dataset_size_uniform_complete_graph() {
        let received: Vec<NeighborInfo> = (1..100).map(|i| info(i, 600, 99)).collect();
        let w = neighbor_weights(MixingScheme::DatasetSize, &received, 600, 99);
        assert_eq!(w.len(), 99);
        for (_, a) in w {
            assert!((a - 0.01).abs() < 1e-15);
        }
    }

    #[test]
    fn dataset_size_two_neighbors_split() {
        let w = neighbor_weights(MixingScheme::DatasetSize, &[info(1, 300, 1)], 100, 1);
        assert_eq!(w, vec![(1, 0.75)]);
    }

    #[test]
    fn metropolis_hastings_star_weight() {
        // Peripheral device (degree 1) weighting the center (degree 99).
        let w = neighbor_weights(MixingScheme::MetropolisHastings, &[info(0, 600, 99)], 600, 1);
        assert_eq!(w, vec![(0, 0.01)]);
    }

    #[test]
    fn empty_received_set_keeps_parameters() {
        assert!(neighbor_weights(MixingScheme::DatasetSize, &[], 600, 0).is_empty());
        assert!(neighbor_weights(MixingScheme::MetropolisHastings, &[], 600, 0).is_empty());
    }

    #[test]
    fn step_size_constant_and_cfa() {
        assert_eq!(step_size(&StepSizeSchedule::Constant(1.0), 3, 600, &[1, 2]), 1.0);
        let uniform = vec![600usize; 99];
        let eps = step_size(&StepSizeSchedule::CfaFormula, 0, 600, &uniform);
        assert!((eps - 0.99).abs() < 1e-15);
        assert_eq!(step_size(&StepSizeSchedule::CfaFormula, 0, 600, &[]), 0.0);
    }

    #[test]
    fn dataset_size_complete_graph_reproduces_global_weighted_average() {
        let sizes: Vec<usize> = (0..10).map(|i| 100 + 37 * i).collect();
        let n: usize = sizes.iter().sum();
        let m = effective_mixing_matrix(
            &complete(10),
            MixingScheme::DatasetSize,
            &StepSizeSchedule::Constant(1.0),
            &sizes,
        );
        for k in 0..10 {
            for i in 0..10 {
                let expected = sizes[i] as f64 / n as f64;
                assert!((m[(k, i)] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dataset_size_rows_sum_to_one() {
        let g = build(&GraphSpec {
            kind: GraphKind::WattsStrogatz {
                neighbors: 4,
                rewire_prob: 0.2,
            },
            vertices: 40,
            seed: 5,
        })
        .unwrap();
        let sizes: Vec<usize> = (0..40).map(|i| 50 + i * 13).collect();
        let rep = verify_stochasticity(&g, MixingScheme::DatasetSize, &StepSizeSchedule::Constant(1.0), &sizes);
        assert!(rep.is_row_stochastic(1e-12), "row dev {}", rep.max_row_deviation);
    }

    #[test]
    fn metropolis_hastings_is_symmetric_doubly_stochastic() {
        for seed in 0..5 {
            let g = build(&GraphSpec {
                kind: GraphKind::ErdosRenyi { edge_prob: 0.2 },
                vertices: 30,
                seed,
            })
            .unwrap();
            let sizes = vec![600usize; 30];
            let rep = verify_stochasticity(
                &g,
                MixingScheme::MetropolisHastings,
                &StepSizeSchedule::Constant(1.0),
                &sizes,
            );
            assert!(rep.is_doubly_stochastic(1e-12), "col dev {}", rep.max_col_deviation);
            assert!(rep.is_symmetric(1e-12));
        }
    }

    #[test]
    fn dataset_size_star_with_unequal_sizes_is_only_singly_stochastic() {
        let g = build(&GraphSpec {
            kind: GraphKind::Star,
            vertices: 3,
            seed: 0,
        })
        .unwrap();
        let m = effective_mixing_matrix(
            &g,
            MixingScheme::DatasetSize,
            &StepSizeSchedule::Constant(1.0),
            &[100, 200, 300],
        );
        // Hand-derived: center row (1/6, 1/3, 1/2); leaf rows (1/3, 2/3, 0)
        // and (1/4, 0, 3/4); columns sum to (3/4, 1, 5/4).
        let expected = [
            [1.0 / 6.0, 1.0 / 3.0, 1.0 / 2.0],
            [1.0 / 3.0, 2.0 / 3.0, 0.0],
            [1.0 / 4.0, 0.0, 3.0 / 4.0],
        ];
        for r in 0..3 {
            for c in 0..3 {
                assert!((m[(r, c)] - expected[r][c]).abs() < 1e-12);
            }
        }
        let rep = verify_stochasticity(
            &g,
            MixingScheme::DatasetSize,
            &StepSizeSchedule::Constant(1.0),
            &[100, 200, 300],
        );
        assert!(rep.is_row_stochastic(1e-12));
        assert!(!rep.is_doubly_stochastic(1e-12));
        assert!((rep.col_sums[0] - 0.75).abs() < 1e-12);
        assert!((rep.col_sums[2] - 1.25).abs() < 1e-12);
    }

    proptest! {
        /// Weights stay nonnegative with effective self weight in [0, 1]
        /// for both schemes on arbitrary connected graphs and sizes.
        #[test]
        fn effective_self_weight_stays_nonnegative(seed in 0u64..500, k in 3usize..16) {
            let g = build(&GraphSpec { kind: GraphKind::ErdosRenyi { edge_prob: 0.4 }, vertices: k, seed }).unwrap();
            let sizes: Vec<usize> = (0..k).map(|i| 1 + ((seed as usize + i * 97) % 1000)).collect();
            for scheme in [MixingScheme::DatasetSize, MixingScheme::MetropolisHastings] {
                for schedule in [StepSizeSchedule::Constant(1.0), StepSizeSchedule::Constant(0.3), StepSizeSchedule::CfaFormula] {
                    let m = effective_mixing_matrix(&g, scheme, &schedule, &sizes);
                    for r in 0..k {
                        for c in 0..k {
                            prop_assert!(m[(r, c)] >= -1e-15, "negative entry at ({}, {})", r, c);
                        }
                        prop_assert!(m[(r, r)] <= 1.0 + 1e-15);
                    }
                }
            }
        }
    }
}
