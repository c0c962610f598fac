use atlas_lab::ranks::{factorial, permutation_chunks, PermutationIter};
use atlas_lab::{enumerate_permutations, gaps, rank_permutation, ranked_values, Error, Permutation};
use proptest::prelude::*;
use std::collections::HashSet;

#[test]
fn indicator_map_examples() {
    assert_eq!(rank_permutation(&[1.0, 2.0, 3.0]).unwrap().rank_to_name(), vec![3, 2, 1]);
    assert_eq!(rank_permutation(&[5.0, 5.0, 1.0]).unwrap().rank_to_name(), vec![1, 2, 3]);
    assert_eq!(rank_permutation(&[0.0, 0.0, 0.0]).unwrap().rank_to_name(), vec![1, 2, 3]);
    assert_eq!(rank_permutation(&[1.0, 7.0, 7.0]).unwrap().rank_to_name(), vec![2, 3, 1]);
    assert!(matches!(rank_permutation(&[1.0, f64::INFINITY]), Err(Error::NonFinite(_))));
}

#[test]
fn ranked_values_and_gaps_examples() {
    assert_eq!(ranked_values(&[1.0, 3.0, 2.0]).unwrap(), vec![3.0, 2.0, 1.0]);
    assert_eq!(ranked_values(&[-1.0, -1.0, 4.0]).unwrap(), vec![4.0, -1.0, -1.0]);
    let z = [4.0, 2.5, 2.5, -1.0];
    assert_eq!(ranked_values(&z).unwrap(), z.to_vec());
    assert_eq!(gaps(&[1.0, 3.0, 2.0]).unwrap(), vec![1.0, 1.0]);
    assert_eq!(gaps(&[0.4, 0.4, 0.4]).unwrap(), vec![0.0, 0.0]);
}

#[test]
fn small_enumerations_are_lexicographic() {
    let two: Vec<Vec<usize>> = enumerate_permutations(2).unwrap().map(|p| p.rank_to_name()).collect();
    assert_eq!(two, vec![vec![1, 2], vec![2, 1]]);
    let three: Vec<Vec<usize>> = enumerate_permutations(3).unwrap().map(|p| p.rank_to_name()).collect();
    let mut sorted = three.clone();
    sorted.sort();
    assert_eq!(three, sorted);
    assert_eq!(three.len(), 6);
}

#[test]
fn ten_factorial() {
    assert_eq!(enumerate_permutations(10).unwrap().count(), 3_628_800);
}

#[test]
fn enumeration_above_cap_is_refused() {
    assert!(matches!(enumerate_permutations(12), Err(Error::Capacity { n: 12, cap: 11 })));
}

#[test]
fn distinct_bijections_up_to_seven() {
    for n in 1..=7 {
        let set: HashSet<Vec<usize>> = enumerate_permutations(n).unwrap().map(|p| p.rank_to_name()).collect();
        assert_eq!(set.len() as u64, factorial(n).unwrap());
        for v in &set {
            let mut s = v.clone();
            s.sort();
            assert_eq!(s, (1..=n).collect::<Vec<_>>());
        }
    }
}

#[test]
fn chunks_cover_the_enumeration_in_order() {
    let full: Vec<Permutation> = enumerate_permutations(6).unwrap().collect();
    let chunked: Vec<Permutation> = permutation_chunks(6, 37)
        .unwrap()
        .into_iter()
        .flat_map(|r| PermutationIter::over_range(6, r))
        .collect();
    assert_eq!(full, chunked);
}

#[test]
fn lex_index_round_trips() {
    for (i, p) in enumerate_permutations(5).unwrap().enumerate() {
        assert_eq!(p.lex_index(), i as u64);
        assert_eq!(Permutation::from_lex_index(5, i as u64).unwrap(), p);
    }
}

proptest! {
    #[test]
    fn rank_then_values_sorts_descending(y in proptest::collection::vec(-1e3f64..1e3, 1..12)) {
        let mut sorted = y.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert_eq!(ranked_values(&y).unwrap(), sorted);
    }

    #[test]
    fn ranking_preserves_the_sum(y in proptest::collection::vec(-1e3f64..1e3, 1..12)) {
        let a: f64 = y.iter().sum();
        let b: f64 = ranked_values(&y).unwrap().iter().sum();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn inverse_maps_compose_to_identity(y in proptest::collection::vec(-5i32..5, 2..10)) {
        let y: Vec<f64> = y.into_iter().map(f64::from).collect();
        let p = rank_permutation(&y).unwrap();
        let names = p.rank_to_name();
        let ranks = p.name_to_rank();
        for k in 1..=y.len() {
            prop_assert_eq!(ranks[names[k - 1] - 1], k);
        }
        // ties resolved toward the lower name
        for k in 1..y.len() {
            let (a, b) = (names[k - 1], names[k]);
            prop_assert!(y[a - 1] > y[b - 1] || (y[a - 1] == y[b - 1] && a < b));
        }
    }

    #[test]
    fn gaps_are_shuffle_invariant(y in proptest::collection::vec(-10f64..10.0, 2..9), seed in any::<u64>()) {
        let mut s = y.clone();
        let len = s.len();
        s.rotate_left(seed as usize % len);
        s.swap(0, (seed as usize / 7) % len);
        let g = gaps(&y).unwrap();
        prop_assert_eq!(&g, &gaps(&s).unwrap());
        prop_assert!(g.iter().all(|x| *x >= 0.0));
    }
}
