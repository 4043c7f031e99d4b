use std::collections::BTreeSet;

use causal_risk::graph::{random_er_dag, Dag, MixedGraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Pair codes: 0 none, 1 a->b, 2 b->a, 3 a-b, 4 both directions.
fn graph_with_codes(codes: u8) -> impl Strategy<Value = MixedGraph> {
    (2usize..=7).prop_flat_map(move |p| {
        prop::collection::vec(0..codes, p * (p - 1) / 2).prop_map(move |codes| {
            let mut directed = Vec::new();
            let mut undirected = Vec::new();
            let pairs = (0..p).flat_map(|a| (a + 1..p).map(move |b| (a, b)));
            for ((a, b), c) in pairs.zip(codes) {
                match c {
                    1 => directed.push((a, b)),
                    2 => directed.push((b, a)),
                    3 => undirected.push((a, b)),
                    4 => directed.extend([(a, b), (b, a)]),
                    _ => {}
                }
            }
            MixedGraph::new(p, directed, undirected).unwrap()
        })
    })
}

fn mixed_graph() -> impl Strategy<Value = MixedGraph> {
    graph_with_codes(5)
}

/// Ends of simple paths out of `start`, by depth-first enumeration.
fn path_ends(h: &MixedGraph, start: usize, through_undirected: bool) -> BTreeSet<usize> {
    fn go(h: &MixedGraph, start: usize, v: usize, und: bool, on: &mut Vec<bool>, out: &mut BTreeSet<usize>) {
        let mut next: Vec<(usize, bool)> = h.children(v).iter().map(|&w| (w, true)).collect();
        if und {
            next.extend(h.neighbours(v).iter().map(|&w| (w, false)));
        }
        for (w, directed) in next {
            if w == start {
                if directed {
                    out.insert(start);
                }
            } else if !on[w] {
                out.insert(w);
                on[w] = true;
                go(h, start, w, und, on, out);
                on[w] = false;
            }
        }
    }
    let mut on = vec![false; h.p()];
    on[start] = true;
    let mut out = BTreeSet::new();
    go(h, start, start, through_undirected, &mut on, &mut out);
    out
}

#[test]
fn random_dags_are_acyclic_with_consistent_order() {
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = 2 + (seed as usize % 30);
        let ens = [0.5f64, 1.5, 2.5][seed as usize % 3].min((p - 1) as f64);
        let dag = random_er_dag(p, ens, &mut rng).unwrap();
        for &(a, b) in dag.graph().directed_edges() {
            assert!(dag.position(a) < dag.position(b), "seed {seed}: {a}->{b} against the order");
        }
        for i in 0..p {
            assert!(!dag.descendants(i).unwrap().contains(&i), "seed {seed}: cycle through {i}");
        }
        let rebuilt = Dag::new(dag.graph().clone(), dag.order().to_vec()).unwrap();
        assert_eq!(rebuilt, dag);
    }
}

#[test]
fn expected_degree_matches_ens() {
    let (p, ens, draws) = (40, 2.5, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let edges: usize = (0..draws).map(|_| random_er_dag(p, ens, &mut rng).unwrap().edge_count()).sum();
    let mean_degree = 2.0 * edges as f64 / (draws * p) as f64;
    assert!((mean_degree - ens).abs() < 0.05, "{mean_degree}");
}

#[test]
fn two_cycle_contains_both_ends() {
    let h = MixedGraph::new(3, [(0, 1), (1, 0)], [(1, 2)]).unwrap();
    assert_eq!(h.possible_descendants(0).unwrap(), [0, 1, 2].into());
    assert_eq!(h.possible_descendants(2).unwrap(), [0, 1].into());
}

#[test]
fn undirected_edge_back_does_not_count() {
    let h = MixedGraph::new(2, [], [(0, 1)]).unwrap();
    assert_eq!(h.possible_descendants(0).unwrap(), [1].into());
    assert!(h.descendants(0).is_err());
}

#[test]
fn adjacency_matrix_reads_two_cycle_as_undirected() {
    let h = MixedGraph::new(2, [(0, 1), (1, 0)], []).unwrap();
    let back = MixedGraph::read_adjacency(h.to_adjacency_string().as_bytes(), Some(2)).unwrap();
    assert_eq!(back, MixedGraph::new(2, [], [(0, 1)]).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn possible_descendants_match_path_enumeration(h in mixed_graph()) {
        for i in 0..h.p() {
            prop_assert_eq!(h.possible_descendants(i).unwrap(), path_ends(&h, i, true));
        }
    }

    #[test]
    fn descendants_match_path_enumeration_on_directed_graphs(h in mixed_graph()) {
        let directed = MixedGraph::new(h.p(), h.directed_edges().iter().copied(), []).unwrap();
        for i in 0..h.p() {
            let enumerated = path_ends(&directed, i, false);
            prop_assert_eq!(directed.descendants(i).unwrap(), enumerated.clone());
            prop_assert_eq!(directed.possible_descendants(i).unwrap(), enumerated);
        }
    }

    #[test]
    fn adjacency_text_round_trips(h in graph_with_codes(4)) {
        let text = h.to_adjacency_string();
        let back = MixedGraph::read_adjacency(text.as_bytes(), Some(h.p())).unwrap();
        prop_assert_eq!(back, h);
    }

    #[test]
    fn orienting_an_undirected_edge_never_adds_possible_descendants(h in mixed_graph(), pick in any::<prop::sample::Index>()) {
        let und: Vec<_> = h.undirected_edges().iter().copied().collect();
        prop_assume!(!und.is_empty());
        let (a, b) = und[pick.index(und.len())];
        let rest = und.iter().copied().filter(|&e| e != (a, b));
        let oriented = MixedGraph::new(h.p(), h.directed_edges().iter().copied().chain([(a, b)]), rest).unwrap();
        for i in 0..h.p() {
            let before = h.possible_descendants(i).unwrap();
            let after = oriented.possible_descendants(i).unwrap();
            prop_assert!(after.iter().all(|j| before.contains(j) || *j == i), "node {} gained {:?}", i, after);
        }
    }
}
