use svlab::distributions::{sample, LawSpec};
use svlab::products::{pareto_product_survival, ratio_limit_mc, splitup_check, PositiveFactor};
use svlab::rng::RngStream;

#[test]
fn product_survival_reference_points() {
    let e = std::f64::consts::E;
    assert!((pareto_product_survival(3.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
    assert!((pareto_product_survival(3.0, e).unwrap() - 4.0 * (-3.0f64).exp()).abs() < 1e-15);
    assert!((pareto_product_survival(1.0, e * e).unwrap() - 3.0 * (-2.0f64).exp()).abs() < 1e-15);
    assert!(pareto_product_survival(3.0, 0.5).is_err());
}

#[test]
fn product_survival_at_e_by_simulation() {
    let m = 2_000_000;
    let law = LawSpec::pareto(3.0, 1.0);
    let a = sample(&law, &RngStream::new(30, 1), m).unwrap();
    let b = sample(&law, &RngStream::new(30, 2), m).unwrap();
    let e = std::f64::consts::E;
    let hits = a.iter().zip(&b).filter(|(x, y)| *x * *y > e).count() as f64 / m as f64;
    let exact = 4.0 * (-3.0f64).exp();
    let se = (exact * (1.0 - exact) / m as f64).sqrt();
    assert!((hits - exact).abs() < 3.0 * se, "{hits} vs {exact}");
}

#[test]
fn ratio_for_pareto_pair_grows_like_log() {
    let law = LawSpec::pareto(3.0, 1.0);
    let res = ratio_limit_mc(&law, &law, &[0.9, 0.99, 0.999], 4_000_000, &RngStream::new(31, 0)).unwrap();
    let mut last = 0.0;
    for p in &res.points {
        let x = p.threshold;
        let exact = 1.0 + 3.0 * x.ln();
        let (est, se) = (p.estimate.unwrap(), p.se.unwrap());
        assert!((est - exact).abs() < 4.0 * se, "x={x}: {est} vs {exact}");
        assert!(est > last);
        last = est;
    }
}

#[test]
fn splitup_pareto_pair_tracks_product_law() {
    let factor = PositiveFactor::Law(LawSpec::pareto(3.0, 1.0));
    let rep = splitup_check(&factor, &[1.0, 1.0], 1.0, &[5.0, 20.0], &[0.5, 0.1], 4_000_000, &RngStream::new(32, 0)).unwrap();
    for row in rep.rows.iter().filter(|r| r.s.is_none()) {
        let exact = 1.0 + 3.0 * row.t.ln();
        assert!((row.ratio - exact).abs() < 4.0 * row.ratio_se, "t={}: {} vs {exact}", row.t, row.ratio);
    }
}

#[test]
fn splitup_remainder_shrinks_with_s() {
    let factor = PositiveFactor::ExpOf(LawSpec::ConvEquivEta);
    let t = 30.0;
    let rep = splitup_check(&factor, &[1.0, 1.0, 0.5], 1.0, &[t], &[0.8, 0.4, 0.1, 0.02], 2_000_000, &RngStream::new(33, 0))
        .unwrap();
    let rem: Vec<f64> = rep.rows.iter().filter_map(|r| r.remainder.map(|x| x.0)).collect();
    assert_eq!(rem.len(), 4);
    assert!(rem.windows(2).all(|w| w[1] <= w[0]), "{rem:?}");
    let full = rep.rows[0].ratio;
    assert!(rem[3] < 0.25 * full, "{rem:?} vs {full}");
}
