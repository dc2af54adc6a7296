mod support;

use panoda_core::attention::{position_attention, query_attention_map, region_construction};
use panoda_core::tensor::{Array, Var};
use proptest::prelude::*;
use support::*;

#[test]
fn finite_difference_gradients() {
    println!("{}", gradient_suite().unwrap());
}

#[test]
fn row_stochastic_and_permutation_equivariant() {
    println!("{}", attention_invariants().unwrap());
}

#[test]
fn loop_oracles_on_random_inputs() {
    let mut r = rng(8);
    for _ in 0..20 {
        let f = uniform(&[2, 3, 2, 3], -1.5, 1.5, &mut r);
        let gamma = 0.37;
        let g = Var::constant(Array::scalar(gamma));
        let (out, pa) = position_attention(&Var::constant(f.clone()), &g);
        let (w, o) = position_oracle(&f, gamma);
        assert!(pa.weights.data().iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(out.value().data().iter().zip(&o).all(|(a, b)| (a - b).abs() < 1e-10));
        let (out, ca) = panoda_core::attention::channel_attention(&Var::constant(f.clone()), &g);
        let (w, o) = channel_oracle(&f, gamma);
        assert!(ca.weights.data().iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(out.value().data().iter().zip(&o).all(|(a, b)| (a - b).abs() < 1e-10));
    }
}

#[test]
fn query_maps_sum_to_one() {
    let mut r = rng(9);
    let f = uniform(&[1, 4, 3, 5], -1.0, 1.0, &mut r);
    let (_, pa) = position_attention(&Var::constant(f), &Var::constant(Array::scalar(0.0)));
    for y in 0..3 {
        for x in 0..5 {
            let m = query_attention_map(&pa, 0, y, x).unwrap();
            assert_eq!(m.shape(), &[3, 5]);
            assert!((m.sum() - 1.0).abs() < 1e-12);
        }
    }
    assert!(query_attention_map(&pa, 0, 3, 0).is_err());
}

/// Components of equal class among non-boundary pixels, by recursive fill.
fn flood_fill_count(sem: &[usize], boundary: &[bool], h: usize, w: usize) -> usize {
    fn fill(i: usize, class: usize, sem: &[usize], boundary: &[bool], seen: &mut [bool], h: usize, w: usize) {
        if seen[i] || boundary[i] || sem[i] != class {
            return;
        }
        seen[i] = true;
        let (y, x) = (i / w, i % w);
        if y > 0 {
            fill(i - w, class, sem, boundary, seen, h, w);
        }
        if y + 1 < h {
            fill(i + w, class, sem, boundary, seen, h, w);
        }
        if x > 0 {
            fill(i - 1, class, sem, boundary, seen, h, w);
        }
        if x + 1 < w {
            fill(i + 1, class, sem, boundary, seen, h, w);
        }
    }
    let mut seen = vec![false; h * w];
    let mut count = 0;
    for i in 0..h * w {
        if !seen[i] && !boundary[i] {
            fill(i, sem[i], sem, boundary, &mut seen, h, w);
            count += 1;
        }
    }
    count.max(1)
}

proptest! {
    #[test]
    fn region_count_matches_flood_fill(seed in any::<u64>()) {
        let (h, w, k) = (8, 8, 3);
        let mut r = rng(seed);
        let b1 = uniform(&[h, w], -3.0, 1.0, &mut r);
        let c1 = uniform(&[k, h, w], -1.0, 1.0, &mut r);
        let feats = uniform(&[2, h, w], -1.0, 1.0, &mut r);
        let rdm = region_construction(&b1, &c1, &feats).unwrap();
        let sem: Vec<usize> = c1.argmax_axis(0);
        let boundary: Vec<bool> = b1.data().iter().map(|&v| 1.0 / (1.0 + (-v).exp()) > 0.5).collect();
        prop_assert_eq!(rdm.num_regions(), flood_fill_count(&sem, &boundary, h, w));
        // A true partition: every pixel in exactly one region, ids contiguous.
        prop_assert_eq!(rdm.region_ids.len(), h * w);
        let sizes = rdm.region_sizes();
        prop_assert!(sizes.iter().all(|&s| s > 0));
        prop_assert_eq!(sizes.iter().sum::<usize>(), h * w);
        prop_assert_eq!(rdm.representatives.len(), rdm.num_regions());
    }
}
