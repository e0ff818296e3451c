use coronary_pcat::classifier::auc;
use coronary_pcat::geometry::{classify_tree, ClassifyOptions, Side, Vec3};
use coronary_pcat::io::to_canonical_json;
use coronary_pcat::pcat::{percentile, rasterize_tube, BinaryMask, Grid, RoiKind, TubeRoi};
use coronary_pcat::phantom::{gen_coronary_tree, TreeSpec, TreeTemplate};
use coronary_pcat::pipeline::PipelineConfig;
use coronary_pcat::stats::mann_whitney_u;
use coronary_pcat::stenosis::{healthy_radius, stenosis_degree, RadiusProfile, RegressionParams};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = RegressionParams> {
    (1.0..20.0f64, 2.0..50.0f64, 0.25..0.6f64, 0.0..1.0f64).prop_map(|(sigma_x, sigma_max, sigma_r, kappa)| {
        RegressionParams {
            sigma_x,
            sigma_max,
            sigma_r,
            kappa,
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn healthy_radius_stays_within_observed_range(r in prop::collection::vec(0.5..3.0f64, 5..120), p in params()) {
        let s = (0..r.len()).map(|k| k as f64 * 0.5).collect();
        let prof = RadiusProfile::new(s, r.clone()).unwrap();
        let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rh = healthy_radius(&prof, &p).unwrap().r_h;
        for v in &rh {
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
        let sd = stenosis_degree(&prof, &rh).unwrap();
        prop_assert!(sd.sd.iter().all(|v| *v < 1.0));
    }

    #[test]
    fn auc_ignores_monotone_rescaling(
        pairs in prop::collection::vec((0u8..2, -5.0..5.0f64), 2..80),
        a in 0.1..10.0f64,
        b in -3.0..3.0f64,
    ) {
        let y: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let s: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let t: Vec<f64> = s.iter().map(|v| (a * v + b).exp()).collect();
        let (x, z) = (auc(&y, &s), auc(&y, &t));
        prop_assert_eq!(x.is_some(), z.is_some());
        if let (Some(x), Some(z)) = (x, z) {
            prop_assert!((x - z).abs() < 1e-12);
            let flipped: Vec<f64> = s.iter().map(|v| -v).collect();
            prop_assert!((auc(&y, &flipped).unwrap() - (1.0 - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn mann_whitney_u_is_antisymmetric(
        x in prop::collection::vec(-10.0..10.0f64, 1..12),
        y in prop::collection::vec(-10.0..10.0f64, 1..12),
    ) {
        let a = mann_whitney_u(&x, &y).unwrap();
        let b = mann_whitney_u(&y, &x).unwrap();
        prop_assert!((a.statistic + b.statistic - (x.len() * y.len()) as f64).abs() < 1e-9);
        prop_assert!((a.p_value - b.p_value).abs() < 1e-12);
        prop_assert!(a.p_value > 0.0 && a.p_value <= 1.0);
    }

    #[test]
    fn percentiles_are_monotone(mut v in prop::collection::vec(-300.0..100.0f64, 1..200), q in 0.0..100.0f64) {
        v.sort_by(f64::total_cmp);
        let p = percentile(&v, q);
        prop_assert!(p >= v[0] && p <= v[v.len() - 1]);
        prop_assert!(percentile(&v, (q + 1.0).min(100.0)) >= p);
    }

    #[test]
    fn config_hash_survives_canonical_round_trip(seed in any::<u64>(), lo in -300i16..-100) {
        let mut cfg = PipelineConfig::default().with_seed(seed);
        cfg.window.lo = lo;
        let back: PipelineConfig = serde_json::from_str(&to_canonical_json(&cfg).unwrap()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tree_labels_survive_rigid_translation(seed in 0u64..10_000, right in any::<bool>(), t in prop::array::uniform3(-50.0..50.0f64)) {
        let side = if right { Side::Right } else { Side::Left };
        let (tree, truth) = gen_coronary_tree(&TreeSpec::new(seed, side, TreeTemplate::RightDominant)).unwrap();
        let offset = Vec3::from(t);
        let moved = tree.mapped(|p| p + offset).unwrap();
        let opts = ClassifyOptions::default();
        let a = classify_tree(&tree, &opts).unwrap();
        let b = classify_tree(&moved, &opts).unwrap();
        prop_assert_eq!(&a.labels, &truth.labels);
        prop_assert_eq!(&a.labels, &b.labels);
        prop_assert_eq!(a.dominance, b.dominance);
    }

    #[test]
    fn raster_count_is_translation_invariant_on_grid_steps(shift in prop::array::uniform3(-4i32..4), r in 1.0..3.0f64) {
        let h = 0.5;
        let grid = Grid::axis_aligned([40, 40, 60], [h; 3], Vec3::new(-10.0, -10.0, -5.0)).unwrap();
        let roi = TubeRoi {
            kind: RoiKind::Vessel,
            branch: coronary_pcat::geometry::BranchLabel::Rca,
            lesion_id: None,
            points: vec![Vec3::new(0.1, 0.2, 0.0), Vec3::new(0.6, -0.3, 10.0), Vec3::new(1.1, 0.4, 18.0)],
            outer_radius: vec![r, r * 1.1, r],
            lumen_radius: vec![0.5; 3],
            start_mm: 0.0,
            end_mm: 18.0,
            truncated: false,
        };
        let empty = BinaryMask::empty(grid.clone());
        let base = rasterize_tube(&roi, &grid, &empty).unwrap().count();
        let offset = Vec3::new(shift[0] as f64, shift[1] as f64, shift[2] as f64) * h;
        let moved = rasterize_tube(&roi.translated(&offset), &grid, &empty).unwrap().count();
        prop_assert_eq!(base, moved);
        prop_assert!(base > 0);
    }
}
