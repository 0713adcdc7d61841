use svlab::distributions::LawSpec;
use svlab::field::CoefficientField;
use svlab::io::{ingest_returns, IngestOptions, Transform};
use svlab::model::{preset, simulate_panel, ModelSpec, Regime};
use svlab::tail::{angular_concentration, hill, hill_matrix};

fn fixture() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/synthetic_returns.csv")
}

#[test]
fn iid_pareto_panel_hill_pattern() {
    let spec = ModelSpec {
        regime: Regime::Case1HeavyZ,
        z_law: LawSpec::pareto(3.0, 1.0),
        eta_law: LawSpec::constant(0.0),
        field: CoefficientField::single(),
        p: 4,
        n: 200_000,
        master_seed: 40,
    };
    let m = hill_matrix(&simulate_panel(&spec).unwrap(), 0.97).unwrap();
    for i in 0..4 {
        let d = m.get(i, i).unwrap();
        assert!((d - 1.5).abs() < 0.1, "diag {d}");
        for j in 0..4 {
            if i != j {
                // products of independent Paretos keep index 3 up to a log factor
                let o = m.get(i, j).unwrap();
                assert!(o > 2.2 && o < 3.2, "off-diag {o}");
            }
        }
    }
}

#[test]
fn fixture_has_expected_shape_and_pattern() {
    let t = ingest_returns(&fixture(), IngestOptions::default()).unwrap();
    assert_eq!((t.n(), t.p()), (1567, 18));
    assert_eq!(t.names[0], "FX01");
    let m = hill_matrix(&t.to_panel().unwrap(), 0.97).unwrap();
    let diag: Vec<f64> = (0..18).map(|i| m.get(i, i).unwrap()).collect();
    let off: Vec<f64> = (0..18)
        .flat_map(|i| (0..18).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| m.get(i, j).unwrap())
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&diag) - 1.5).abs() < 0.25, "{}", mean(&diag));
    assert!(mean(&off) > mean(&diag) + 0.4);
}

#[test]
fn fixture_log_transform_needs_positive_prices() {
    // returns can be negative, so treating them as prices fails with a location
    let err = ingest_returns(
        &fixture(),
        IngestOptions {
            transform: Transform::LogReturns,
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, svlab::Error::Ingest { .. }), "{err}");
}

#[test]
fn case1_marginal_index_rises_with_threshold() {
    let x = simulate_panel(&preset("case1", 1, 100_000, 41).unwrap()).unwrap();
    let h: Vec<f64> = [0.9, 0.99, 0.999].iter().map(|&q| hill(x.row(0), q).unwrap().hill_index).collect();
    assert!(h.windows(2).all(|w| w[1] > w[0]), "{h:?}");
    assert!(h[2] < 3.0);
}

#[test]
fn axis_concentration_separates_regimes() {
    let c1 = angular_concentration(&simulate_panel(&preset("case1", 5, 100_000, 42).unwrap()).unwrap(), 0.97, 0.1).unwrap();
    let c2 = angular_concentration(
        &simulate_panel(&preset("case2_convequiv", 5, 100_000, 42).unwrap()).unwrap(),
        0.97,
        0.1,
    )
    .unwrap();
    assert!(c1.estimate - c2.estimate > 3.0 * (c1.se.powi(2) + c2.se.powi(2)).sqrt(), "{c1:?} {c2:?}");

    let mut spec = preset("case1", 5, 100_000, 43).unwrap();
    spec.field = CoefficientField::single();
    let panel = simulate_panel(&spec).unwrap();
    let low = angular_concentration(&panel, 0.97, 0.1).unwrap().estimate;
    let high = angular_concentration(&panel, 0.999, 0.1).unwrap().estimate;
    assert!(high > low && high > 0.8, "{low} {high}");
}

#[test]
fn iid_extremogram_matches_exceedance_rate() {
    let x = svlab::distributions::sample(&LawSpec::student_t(3.0), &svlab::rng::RngStream::new(44, 0), 100_000).unwrap();
    for q in [0.95, 0.97, 0.99] {
        for pt in svlab::tail::extremogram(&x, &[1, 2, 3, 7], q).unwrap() {
            let p = 1.0 - q;
            let se = (p * (1.0 - p) / pt.base as f64).sqrt();
            assert!((pt.estimate - p).abs() < 3.0 * se, "q={q} lag {}: {}", pt.lag, pt.estimate);
        }
    }
}
