mod support;

use panoda_core::datapipe::{LabelMap, IGNORE, NUM_CLASSES};
use panoda_core::evalkit::{directional_report, format_gap_table, iou_report, miou_gap, sector_of_column, ConfusionMatrix};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use support::*;

#[test]
fn iou_matches_set_oracle_and_sectors_add_up() {
    println!("{}", metric_oracles().unwrap());
}

#[test]
fn published_gaps_reproduce() {
    println!("{}", gap_table().unwrap());
    assert_eq!(miou_gap(79.3, 28.5), -50.8);
    assert_eq!(miou_gap(79.3, 42.0), -37.3);
    let rows: Vec<(String, f64, f64)> = GAP_TABLE.iter().map(|&(n, s, t, _)| (n.to_string(), s, t)).collect();
    let text = format_gap_table(&rows);
    assert!(text.contains("-50.80") || text.contains("-50.8"));
}

#[test]
fn sectors_partition_columns_and_images_add() {
    let w = 64;
    let mut counts = [0; 8];
    for x in 0..w {
        counts[sector_of_column(x, w, 8)] += 1;
    }
    assert!(counts.iter().all(|&c| c == w / 8));

    let mut r = rng(3);
    let maps = |r: &mut rand_chacha::ChaCha8Rng| LabelMap {
        height: 4,
        width: w,
        data: random_labels(4 * w, 6, 0.1, r),
    };
    let preds: Vec<LabelMap> = (0..3).map(|_| maps(&mut r)).collect();
    let gts: Vec<LabelMap> = (0..3).map(|_| maps(&mut r)).collect();
    let preds: Vec<LabelMap> = preds
        .into_iter()
        .map(|mut p| {
            p.data.iter_mut().for_each(|v| *v = if *v == IGNORE { 0 } else { *v });
            p
        })
        .collect();
    let all = directional_report(&preds, &gts, 8).unwrap();
    let mut summed = ConfusionMatrix::default();
    for (p, g) in preds.iter().zip(&gts) {
        summed.merge(&directional_report(std::slice::from_ref(p), std::slice::from_ref(g), 8).unwrap().global());
    }
    assert_eq!(all.global(), summed);
}

proptest! {
    #[test]
    fn miou_invariant_under_class_relabeling(seed in any::<u64>()) {
        let mut r = rng(seed);
        let gt = random_labels(256, NUM_CLASSES as u8, 0.1, &mut r);
        let pred: Vec<u8> = (0..256).map(|_| r.gen_range(0..NUM_CLASSES as u8)).collect();
        let mut perm: Vec<u8> = (0..NUM_CLASSES as u8).collect();
        perm.shuffle(&mut r);
        let relabel = |v: &[u8]| -> Vec<u8> { v.iter().map(|&l| if l == IGNORE { IGNORE } else { perm[l as usize] }).collect() };
        let mut a = ConfusionMatrix::default();
        a.update(&pred, &gt).unwrap();
        let mut b = ConfusionMatrix::default();
        b.update(&relabel(&pred), &relabel(&gt)).unwrap();
        let (ra, rb) = (iou_report(&a).unwrap(), iou_report(&b).unwrap());
        prop_assert!((ra.miou - rb.miou).abs() < 1e-12);
        prop_assert_eq!(ra.pixel_acc, rb.pixel_acc);
    }
}
