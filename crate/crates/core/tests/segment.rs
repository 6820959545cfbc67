mod common;

use aitv_core::metrics::{dice_table, match_labels, region_dice, MatchMode};
use aitv_core::phantom;
use aitv_core::segment::{
    kmeans, piecewise_constant, sat_pipeline, slat_pipeline, threshold_grayscale, KmeansConfig, MultiChannelImage,
    Segmentation,
};
use aitv_core::spectral::identity_kernel;
use aitv_core::{AdmmConfig, ImageGrid};
use common::kmeans_1d_exhaustive;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn separated_groups_reach_the_optimum(
        groups in prop::collection::vec(prop::collection::vec(0.0..0.05f64, 1..7), 2..=4),
        seed in any::<u64>(),
    ) {
        let k = groups.len();
        let values: Vec<f64> = groups
            .iter()
            .enumerate()
            .flat_map(|(g, xs)| xs.iter().map(move |x| g as f64 + x))
            .collect();
        let r = kmeans(&values, 1, k, &KmeansConfig::with_seed(seed)).unwrap();
        prop_assert!(r.wcss <= kmeans_1d_exhaustive(&values, k) * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn wcss_never_beats_the_oracle(values in prop::collection::vec(0.0..1.0f64, 6..18), k in 2usize..=3, seed in any::<u64>()) {
        let mut distinct = values.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assume!(distinct.len() >= k);
        let r = kmeans(&values, 1, k, &KmeansConfig::with_seed(seed)).unwrap();
        prop_assert!(r.wcss >= kmeans_1d_exhaustive(&values, k) * (1.0 - 1e-9) - 1e-12);
    }

    #[test]
    fn relabeling_is_ascending(values in prop::collection::vec(0.0..1.0f64, 12), k in 2usize..=4, seed in any::<u64>()) {
        let mut distinct = values.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        prop_assume!(distinct.len() >= k);
        let u = ImageGrid::new(3, 4, values).unwrap();
        let s = threshold_grayscale(&u, k, &KmeansConfig::with_seed(seed)).unwrap();
        for w in s.centroids().windows(2) {
            prop_assert!(w[0][0] < w[1][0]);
        }
    }

    #[test]
    fn matching_is_a_bijection(labels in prop::collection::vec(0usize..4, 30), truth in prop::collection::vec(0usize..4, 30)) {
        let a = Segmentation::from_labels(5, 6, labels, 4).unwrap();
        let b = Segmentation::from_labels(5, 6, truth, 4).unwrap();
        let mut perm = match_labels(&a, &b, MatchMode::GreedyDice).unwrap();
        perm.sort();
        prop_assert_eq!(perm, vec![0, 1, 2, 3]);
    }
}

#[test]
fn two_clusters_merge_the_nearest_groups() {
    let values = [0.0, 0.01, 0.02, 0.30, 0.31, 0.32, 1.0, 1.01, 1.02];
    let opt = kmeans_1d_exhaustive(&values, 2);
    let r = kmeans(&values, 1, 2, &KmeansConfig::default()).unwrap();
    assert!((r.wcss - opt).abs() <= 1e-12);
    let low = r.labels[0];
    assert!(r.labels[..6].iter().all(|&l| l == low) && r.labels[6..].iter().all(|&l| l != low));
}

#[test]
fn three_way_tie_breaks_to_lowest_labels() {
    // every predicted region overlaps every true region equally, so all
    // 3! assignments tie; the documented answer is the identity
    let truth = Segmentation::from_labels(3, 3, vec![0, 1, 2, 0, 1, 2, 0, 1, 2], 3).unwrap();
    let pred = Segmentation::from_labels(3, 3, vec![0, 0, 0, 1, 1, 1, 2, 2, 2], 3).unwrap();
    let table = dice_table(&pred, &truth);
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let totals: Vec<f64> = perms.iter().map(|p| (0..3).map(|i| table[i][p[i]]).sum()).collect();
    assert!(totals.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(
        match_labels(&pred, &truth, MatchMode::GreedyDice).unwrap(),
        vec![0, 1, 2]
    );
}

#[test]
fn greedy_matching_agrees_with_enumeration() {
    // region 0 is unambiguous; 1 and 2 overlap their partners strongly
    let truth = Segmentation::from_labels(1, 10, vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2], 3).unwrap();
    let pred = Segmentation::from_labels(1, 10, vec![2, 2, 2, 2, 0, 0, 1, 1, 1, 1], 3).unwrap();
    let table = dice_table(&pred, &truth);
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let best = perms
        .iter()
        .max_by(|a, b| {
            let s = |p: &[usize; 3]| (0..3).map(|i| table[i][p[i]]).sum::<f64>();
            s(a).total_cmp(&s(b))
        })
        .unwrap();
    assert_eq!(
        match_labels(&pred, &truth, MatchMode::GreedyDice).unwrap(),
        best.to_vec()
    );
}

#[test]
fn noiseless_two_value_phantom_is_exact() {
    let p = phantom::disk(48, 40, 0.2, 0.8);
    let config = AdmmConfig {
        lambda: 20.0,
        mu: 0.5,
        alpha: 0.5,
        ..Default::default()
    };
    let out = sat_pipeline(
        p.image.channel(0),
        &identity_kernel(),
        &config,
        2,
        &KmeansConfig::default(),
    )
    .unwrap();
    let d = region_dice(&out.segmentation, &p.truth, MatchMode::Identity).unwrap();
    assert_eq!(d, vec![1.0, 1.0]);
    let again = sat_pipeline(
        p.image.channel(0),
        &identity_kernel(),
        &config,
        2,
        &KmeansConfig::default(),
    )
    .unwrap();
    assert_eq!(out.segmentation, again.segmentation);
}

#[test]
fn all_brain_phases_on_clean_input() {
    let p = phantom::brain_like(0);
    let f = p.image.channel(0).map(|v| v / 154.0);
    let config = AdmmConfig {
        lambda: 50.0,
        mu: 0.1,
        alpha: 0.6,
        ..Default::default()
    };
    let out = sat_pipeline(&f, &identity_kernel(), &config, 4, &KmeansConfig::default()).unwrap();
    let d = region_dice(&out.segmentation, &p.truth, MatchMode::Identity).unwrap();
    assert!(d.iter().all(|&v| v > 0.97), "{d:?}");
}

#[test]
fn two_color_phantom_is_exact() {
    let rgb = |c: [f64; 3]| {
        MultiChannelImage::new(
            (0..3)
                .map(|l| ImageGrid::from_fn(30, 36, |_, j| if j < 18 { c[l] } else { 0.9 - c[l] }))
                .collect(),
        )
        .unwrap()
    };
    let img = rgb([0.8, 0.2, 0.1]);
    let config = AdmmConfig {
        lambda: 20.0,
        mu: 0.05,
        alpha: 0.6,
        beta0: 2.0,
        ..Default::default()
    };
    let out = slat_pipeline(&img, &identity_kernel(), &config, 2, &KmeansConfig::default()).unwrap();
    let truth =
        Segmentation::from_labels(30, 36, (0..30 * 36).map(|k| usize::from(k % 36 >= 18)).collect(), 2).unwrap();
    let d = region_dice(&out.segmentation, &truth, MatchMode::GreedyDice).unwrap();
    assert_eq!(d, vec![1.0, 1.0]);
    assert_eq!(out.reconstruction.depth(), 3);
}

#[test]
fn single_region_color_image() {
    let img = MultiChannelImage::new(vec![
        ImageGrid::filled(10, 12, 0.3),
        ImageGrid::filled(10, 12, 0.6),
        ImageGrid::filled(10, 12, 0.1),
    ])
    .unwrap();
    let config = AdmmConfig {
        lambda: 2.0,
        mu: 0.05,
        ..Default::default()
    };
    let out = slat_pipeline(&img, &identity_kernel(), &config, 1, &KmeansConfig::default()).unwrap();
    assert!(out.segmentation.labels().iter().all(|&l| l == 0));
    for (l, c) in [0.3, 0.6, 0.1].iter().enumerate() {
        assert!(out
            .reconstruction
            .channel(l)
            .as_slice()
            .iter()
            .all(|v| (v - c).abs() < 1e-3));
    }
}

#[test]
fn single_cluster_paints_the_mean() {
    let u = ImageGrid::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
    let r = kmeans(u.as_slice(), 1, 1, &KmeansConfig::default()).unwrap();
    let seg = Segmentation::new(4, 4, r.labels, r.centroids).unwrap();
    let painted = piecewise_constant(&seg).unwrap();
    assert!(painted.channel(0).as_slice().iter().all(|&v| v == 7.5));
}
