//! Property tests for the structural invariants of the graph algebra,
//! preprocessing, tensors, and schedules.

use proptest::prelude::*;

use skelact_core::data::{self, SkeletonSequence};
use skelact_core::skelgraph::{
    build_adjacency, hop_distance, k_adjacency, normalize_adjacency, AdjacencyMatrix,
    SkeletonTopology,
};
use skelact_core::skelgraph::builtin;
use skelact_core::tensor::{ops, Tensor};
use skelact_core::training::ScheduleConfig;

/// Random undirected graph on up to 8 nodes as a flat upper-triangle mask.
fn arb_graph() -> impl Strategy<Value = AdjacencyMatrix> {
    (2usize..=8).prop_flat_map(|m| {
        let pairs = m * (m - 1) / 2;
        proptest::collection::vec(proptest::bool::ANY, pairs).prop_map(move |bits| {
            let mut entries = vec![0u8; m * m];
            let mut bit = 0;
            for i in 0..m {
                for j in (i + 1)..m {
                    if bits[bit] {
                        entries[i * m + j] = 1;
                        entries[j * m + i] = 1;
                    }
                    bit += 1;
                }
            }
            AdjacencyMatrix::from_raw(m, entries)
        })
    })
}

/// Random spanning tree topology on 2..=8 joints.
fn arb_topology() -> impl Strategy<Value = SkeletonTopology> {
    (2usize..=8).prop_flat_map(|m| {
        proptest::collection::vec(0usize..usize::MAX, m - 1).prop_map(move |parents| {
            let edges: Vec<(usize, usize)> =
                (1..m).map(|j| (parents[j - 1] % j, j)).collect();
            SkeletonTopology::new(m, edges, 0).expect("tree is connected")
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalized_adjacency_is_symmetric(adj in arb_graph()) {
        for self_loops in [false, true] {
            let norm = normalize_adjacency(&adj, self_loops);
            let m = norm.size();
            for i in 0..m {
                for j in 0..m {
                    prop_assert!((norm.get(i, j) - norm.get(j, i)).abs() < 1e-12);
                    prop_assert!(norm.get(i, j).is_finite());
                }
            }
        }
    }

    #[test]
    fn k_adjacency_shells_partition_reachable_pairs(adj in arb_graph()) {
        let m = adj.size();
        let hops = hop_distance(&adj);
        let scales: Vec<AdjacencyMatrix> = (1..=hops.diameter().max(1))
            .map(|k| k_adjacency(&adj, k))
            .collect();
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                let hits: usize = scales.iter().map(|s| usize::from(s.get(i, j))).sum();
                prop_assert_eq!(hits, usize::from(hops.is_reachable(i, j)));
            }
        }
    }

    #[test]
    fn k_adjacency_one_is_a_plus_identity(adj in arb_graph()) {
        let m = adj.size();
        let k1 = k_adjacency(&adj, 1);
        for i in 0..m {
            for j in 0..m {
                let expect = if i == j { 1 } else { adj.get(i, j) };
                prop_assert_eq!(k1.get(i, j), expect);
            }
        }
    }

    #[test]
    fn hop_distance_satisfies_triangle_inequality(adj in arb_graph()) {
        let m = adj.size();
        let hops = hop_distance(&adj);
        for i in 0..m {
            for j in 0..m {
                for l in 0..m {
                    prop_assert!(hops.get(i, j) <= hops.get(i, l) + hops.get(l, j));
                }
            }
        }
    }

    #[test]
    fn pad_replay_places_every_frame_at_its_replay_positions(
        frames in 1usize..40,
        target in 40usize..80,
        seed in 0u64..1000,
    ) {
        let mut seq = SkeletonSequence::new(frames, 1, 4).unwrap();
        for t in 0..frames {
            for j in 0..4 {
                let v = (seed as f64) + (t * 4 + j) as f64 * 0.5;
                seq.set_position(t, 0, j, [v, -v, v * 0.25]);
            }
        }
        let out = data::pad_replay(&seq, target).unwrap();
        prop_assert_eq!(out.frames(), target);
        for t in 0..target {
            for j in 0..4 {
                prop_assert_eq!(out.position(t, 0, j), seq.position(t % frames, 0, j));
            }
        }
    }

    #[test]
    fn joint_expansion_round_trips(seed in 0u64..500, frames in 1usize..6) {
        let mut seq = SkeletonSequence::new(frames, 1, 20).unwrap();
        for t in 0..frames {
            for j in 0..20 {
                let v = seed as f64 * 0.01 + (t * 20 + j) as f64;
                seq.set_position(t, 0, j, [v, v + 0.5, v - 0.25]);
            }
        }
        let expanded = data::expand_20_to_25(&seq).unwrap();
        prop_assert_eq!(expanded.joints(), 25);
        let back = data::project_25_to_20(&expanded).unwrap();
        prop_assert_eq!(back, seq);
    }

    #[test]
    fn normalize_translate_is_idempotent(seed in 0u64..500) {
        let topo = builtin::kinect_v1();
        let mut seq = SkeletonSequence::new(3, 1, 20).unwrap();
        for t in 0..3 {
            for j in 0..20 {
                let v = (seed as f64 * 0.37 + (t * 20 + j) as f64 * 0.11).sin();
                seq.set_position(t, 0, j, [v, v * 0.5 + 1.0, 2.0 + v * 0.2]);
            }
        }
        let once = data::normalize_translate(&seq, &topo).unwrap();
        let twice = data::normalize_translate(&once, &topo).unwrap();
        for (a, b) in once.raw().iter().zip(twice.raw()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_lanes_are_probability_vectors(
        values in proptest::collection::vec(-30.0f64..30.0, 12),
    ) {
        let x = Tensor::from_vec(vec![3, 4], values).unwrap();
        let y = ops::softmax(&x, 1).unwrap();
        for row in 0..3 {
            let lane = &y.data()[row * 4..(row + 1) * 4];
            let sum: f64 = lane.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(lane.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn bone_vectors_match_a_per_frame_loop(topo in arb_topology(), seed in 0u64..300) {
        let m = topo.joint_count();
        let mut seq = SkeletonSequence::new(2, 1, m).unwrap();
        for t in 0..2 {
            for j in 0..m {
                let v = (seed as f64 + (t * m + j) as f64).cos();
                seq.set_position(t, 0, j, [v, 2.0 * v, -v]);
            }
        }
        let bones = skelact_core::skelgraph::bone_vectors(&seq, &topo).unwrap();
        for t in 0..2 {
            for j in 0..m {
                let expect = match topo.parent_of(j) {
                    None => [0.0, 0.0, 0.0],
                    Some(p) => {
                        let a = seq.position(t, 0, j);
                        let b = seq.position(t, 0, p);
                        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
                    }
                };
                prop_assert_eq!(bones.position(t, 0, j), expect);
            }
        }
    }

    #[test]
    fn learning_rate_is_non_increasing(
        initial in 0.001f64..1.0,
        factor in 0.05f64..1.0,
        interval in 1usize..30,
        start in 0usize..30,
    ) {
        let s = ScheduleConfig {
            initial_lr: initial,
            decay_factor: factor,
            interval_epochs: interval,
            start_epoch: start,
        };
        let mut last = f64::INFINITY;
        for epoch in 0..100 {
            let lr = s.lr_at_epoch(epoch);
            prop_assert!(lr <= last + 1e-18);
            last = lr;
        }
    }

    #[test]
    fn adjacency_of_tree_topologies_is_symmetric_with_zero_diagonal(topo in arb_topology()) {
        let adj = build_adjacency(&topo);
        let m = adj.size();
        prop_assert_eq!(adj.nonzero_count(), 2 * (m - 1));
        for i in 0..m {
            prop_assert_eq!(adj.get(i, i), 0);
            for j in 0..m {
                prop_assert_eq!(adj.get(i, j), adj.get(j, i));
            }
        }
    }
}
