//! Library values against numbers computed independently (scipy quadrature
//! and root finding, numpy) and frozen here.

use strata_bounds::estimation::{imbens_manski_critical, ratio_estimate};
use strata_bounds::influence::{efficiency_bound, efficiency_gap, exact_variance, InfluenceRow};
use strata_bounds::simulation::{oracle_target, DgpConfig, Oracle};
use strata_bounds::StratumSpec;

// (panel, target, sharp upper); the sharp lower coincides with the target.
const TARGETS: [(char, f64, f64); 3] = [
    ('a', 0.3379595036452889, 0.6842380900058463),
    ('b', 0.2016562269268971, 0.40827634690535514),
    ('c', 0.025, 0.05061539049986297),
];

#[test]
fn benchmark_targets_match_quadrature() {
    for (panel, target, upper) in TARGETS {
        let t = oracle_target(&DgpConfig::panel(panel).unwrap()).unwrap();
        assert!((t.target - target).abs() < 1e-9, "{panel}: target {}", t.target);
        assert!((t.lower - target).abs() < 1e-9, "{panel}: lower {}", t.lower);
        assert!((t.upper - upper).abs() < 1e-9, "{panel}: upper {}", t.upper);
    }
}

#[test]
fn imbens_manski_critical_values() {
    let cases = [
        (0.0, 1.0, 0.05, 1.9599639845400538),
        (0.1, 0.05, 0.05, 1.6461455482153105),
        (0.02, 0.05, 0.05, 1.798549251484035),
        (1.0, 0.01, 0.05, 1.644853626951472),
        (0.05, 0.1, 0.1, 1.4455806260811743),
    ];
    for (w, s, a, c) in cases {
        let got = imbens_manski_critical(w, s, a);
        assert!((got - c).abs() < 1e-9, "width {w} se {s}: {got} vs {c}");
    }
}

#[test]
fn weighted_ratio_and_standard_error() {
    let rows: Vec<InfluenceRow> = [(1.0, 0.5), (2.0, 1.0), (0.5, 0.25), (3.0, 0.8)]
        .iter()
        .map(|&(psi_b, psi_s)| InfluenceRow { psi_b, psi_s })
        .collect();
    let est = ratio_estimate(&rows, &[1.0, 2.0, 1.0, 0.5], 0.0).unwrap();
    assert!((est.estimate - 2.2222222222222223).abs() < 1e-14);
    assert!((est.se - 0.24310491626261416).abs() < 1e-14);
}

#[test]
fn efficiency_gap_is_the_variance_difference() {
    for panel in ['a', 'b', 'c'] {
        let oracle = Oracle::new(&DgpConfig::panel(panel).unwrap());
        let spec = StratumSpec::at_lower();
        let known = exact_variance(&oracle, &spec, true).unwrap();
        let eff = exact_variance(&oracle, &spec, false).unwrap();
        let gap = efficiency_gap(&oracle);
        assert!(gap >= 0.0);
        assert!((known - eff - gap).abs() < 1e-6, "{panel}: {known} − {eff} vs {gap}");
    }
}

#[test]
fn closed_form_bound_matches_enumeration_without_indifference() {
    // Panel a has no p0 = 1 rows, so the closed form is exact there.
    let oracle = Oracle::new(&DgpConfig::panel('a').unwrap());
    let closed = efficiency_bound(&oracle).unwrap();
    let exact = exact_variance(&oracle, &StratumSpec::at_lower(), false).unwrap();
    assert!((closed - exact).abs() < 1e-6, "{closed} vs {exact}");
    assert!((closed - 1.328088).abs() < 1e-5);
}
