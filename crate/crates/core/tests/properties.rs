use proptest::prelude::*;
use strata_bounds::estimation::{imbens_manski_critical, imbens_manski_interval, ratio_estimate};
use strata_bounds::identification::{conditional_dominance_bound, conditional_sharp_bound, RowNuisance};
use strata_bounds::influence::InfluenceRow;
use strata_bounds::io::{read_observations, write_observations, ObservationOptions};
use strata_bounds::law::{DiscreteLaw, OutcomeLaw, Tail};
use strata_bounds::smoothing::{smooth_conditional_bound, GFamily};
use strata_bounds::{classify_partition, ObservationTable, Partition, Side, Stratum, StratumSpec};

fn law_strategy() -> impl Strategy<Value = OutcomeLaw> {
    prop::collection::vec((-5.0f64..5.0, 0.01f64..1.0), 1..12)
        .prop_map(|pts| OutcomeLaw::Discrete(DiscreteLaw::new(&pts).unwrap()))
}

proptest! {
    #[test]
    fn partition_follows_sign(s0 in 0.01f64..0.99, s1 in 0.01f64..0.99, eps in 0.0f64..0.05) {
        let l = classify_partition(s0, s1, eps).unwrap();
        let expected = if (s1 - s0).abs() <= eps {
            Partition::Xzero
        } else if s1 > s0 {
            Partition::Xplus
        } else {
            Partition::Xminus
        };
        prop_assert_eq!(l.label, expected);
        prop_assert!((l.p0 - s0 / s1).abs() < 1e-15);
    }

    #[test]
    fn partition_rejects_boundary(s in prop_oneof![Just(0.0f64), Just(1.0), -1.0f64..0.0, 1.0f64..2.0]) {
        prop_assert!(classify_partition(s, 0.5, 0.0).is_err());
        prop_assert!(classify_partition(0.5, s, 0.0).is_err());
    }

    #[test]
    fn im_interval_contains_estimated_set(
        lo in -1.0f64..1.0,
        width in 0.0f64..1.0,
        se_l in 0.001f64..0.5,
        se_u in 0.001f64..0.5,
        alpha in 0.01f64..0.2,
    ) {
        let hi = lo + width;
        let ci = imbens_manski_interval(lo, hi, se_l, se_u, alpha);
        prop_assert!(ci[0] <= lo && ci[1] >= hi);
        let c = imbens_manski_critical(width, se_l.max(se_u), alpha);
        let one = normal_quantile(1.0 - alpha);
        let two = normal_quantile(1.0 - alpha / 2.0);
        prop_assert!(c >= one - 1e-9 && c <= two + 1e-9, "c={} not in [{}, {}]", c, one, two);
    }

    #[test]
    fn ratio_moment_is_solved(
        rows in prop::collection::vec((-5.0f64..5.0, 0.1f64..2.0, 0.1f64..3.0), 2..50),
    ) {
        let psi: Vec<InfluenceRow> = rows.iter().map(|&(b, s, _)| InfluenceRow { psi_b: b, psi_s: s }).collect();
        let w: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let est = ratio_estimate(&psi, &w, 0.0).unwrap();
        let resid: f64 = psi.iter().zip(&w).map(|(r, w)| w * r.psi(est.estimate)).sum();
        let scale: f64 = psi.iter().zip(&w).map(|(r, w)| w * r.psi_b.abs()).sum::<f64>().max(1.0);
        prop_assert!(resid.abs() / scale < 1e-12);
        prop_assert!(est.se >= 0.0);
    }

    #[test]
    fn tail_means_are_ordered(law in law_strategy(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (small, large) = if a < b { (a, b) } else { (b, a) };
        let m = law.mean();
        let lo_s = law.tail_mean(Tail::Lower, small);
        let lo_l = law.tail_mean(Tail::Lower, large);
        let hi_s = law.tail_mean(Tail::Upper, small);
        let hi_l = law.tail_mean(Tail::Upper, large);
        let tol = 1e-12;
        prop_assert!(lo_s <= lo_l + tol && lo_l <= m + tol);
        prop_assert!(hi_s + tol >= hi_l && hi_l + tol >= m);
        prop_assert!(law.quantile(small) <= law.quantile(large));
    }

    #[test]
    fn g_family_sandwich(h in 1e-6f64..5.0, z in -20.0f64..20.0) {
        let f = GFamily::new(h).unwrap();
        let tol = 1e-12 * z.abs().max(1.0);
        prop_assert!(f.g1(z) <= z.min(1.0) + tol && z.min(1.0) <= f.g3(z) + tol);
        prop_assert!(f.g4(z) <= z.max(0.0) + tol && z.max(0.0) <= f.g2(z) + tol);
        for i in 1..=6u8 {
            prop_assert!((f.eval(i, z) - GFamily::limit(i, z)).abs() <= h * std::f64::consts::LN_2 + tol);
            let d = f.derivative(i, z);
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }

    #[test]
    fn smooth_bounds_widen_with_h(
        l0 in law_strategy(),
        l1 in law_strategy(),
        s0 in 0.1f64..0.9,
        s1 in 0.1f64..0.9,
        h in 0.001f64..0.1,
    ) {
        let row = RowNuisance { m: 0.5, s0, s1, laws: [&l0, &l1], support: None };
        let sharp_l = conditional_sharp_bound(&row, &StratumSpec::new(Stratum::At, Side::Lower));
        let sharp_u = conditional_sharp_bound(&row, &StratumSpec::new(Stratum::At, Side::Upper));
        let fine = GFamily::new(h).unwrap();
        let coarse = GFamily::new(2.0 * h).unwrap();
        let (fl, cl) = (
            smooth_conditional_bound(&row, Side::Lower, &fine).unwrap(),
            smooth_conditional_bound(&row, Side::Lower, &coarse).unwrap(),
        );
        let (fu, cu) = (
            smooth_conditional_bound(&row, Side::Upper, &fine).unwrap(),
            smooth_conditional_bound(&row, Side::Upper, &coarse).unwrap(),
        );
        let tol = 1e-12;
        prop_assert!(cl <= fl + tol && fl <= sharp_l + tol, "lower {} {} {}", cl, fl, sharp_l);
        prop_assert!(cu + tol >= fu && fu + tol >= sharp_u, "upper {} {} {}", cu, fu, sharp_u);
    }

    #[test]
    fn dominance_tightens(
        l0 in law_strategy(),
        l1 in law_strategy(),
        s0 in 0.1f64..0.9,
        s1 in 0.1f64..0.9,
    ) {
        let row = RowNuisance { m: 0.5, s0, s1, laws: [&l0, &l1], support: None };
        let lo = StratumSpec::new(Stratum::At, Side::Lower);
        let up = StratumSpec::new(Stratum::At, Side::Upper);
        prop_assert!(conditional_dominance_bound(&row, &lo) + 1e-12 >= conditional_sharp_bound(&row, &lo));
        prop_assert!(conditional_dominance_bound(&row, &up) <= conditional_sharp_bound(&row, &up) + 1e-12);
        prop_assert!(conditional_sharp_bound(&row, &lo) <= conditional_sharp_bound(&row, &up) + 1e-12);
    }

    #[test]
    fn observation_csv_round_trip(
        rows in prop::collection::vec(
            (-1e6f64..1e6, any::<bool>(), any::<bool>(), 0.01f64..10.0, prop::collection::vec(-1e3f64..1e3, 2)),
            1..40,
        ),
    ) {
        let table = ObservationTable::new(
            rows.iter().map(|r| r.0).collect(),
            rows.iter().map(|r| u8::from(r.1)).collect(),
            rows.iter().map(|r| u8::from(r.2)).collect(),
            rows.iter().map(|r| r.4.clone()).collect(),
            Some(rows.iter().map(|r| r.3).collect()),
        ).unwrap();
        let mut buf = Vec::new();
        write_observations(&mut buf, &table).unwrap();
        let back = read_observations(buf.as_slice(), &ObservationOptions::default()).unwrap().table;
        prop_assert_eq!(back.n(), table.n());
        for i in 0..table.n() {
            prop_assert_eq!(back.s(i), table.s(i));
            prop_assert_eq!(back.d(i), table.d(i));
            prop_assert_eq!(back.sy(i).to_bits(), table.sy(i).to_bits());
            prop_assert_eq!(back.weight(i).to_bits(), table.weight(i).to_bits());
            prop_assert_eq!(back.x(i), table.x(i));
        }
    }
}

fn normal_quantile(p: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().inverse_cdf(p)
}
