use std::collections::BTreeSet;

use proptest::prelude::*;
use svlab::field::CoefficientField;

fn field_strategy() -> impl Strategy<Value = CoefficientField> {
    prop::collection::btree_map((-3i64..=3, -2i64..=2), prop::sample::select(vec![0.25, 0.5, 0.75]), 0..6).prop_flat_map(
        |rest| {
            (Just(rest), (-3i64..=3, -2i64..=2)).prop_map(|(rest, anchor)| {
                let mut triples: Vec<(i64, i64, f64)> =
                    rest.into_iter().filter(|(kl, _)| *kl != anchor).map(|((k, l), w)| (k, l, w)).collect();
                triples.push((anchor.0, anchor.1, 1.0));
                CoefficientField::from_triples(&triples).unwrap()
            })
        },
    )
}

proptest! {
    #[test]
    fn psi_exponent_bounds_and_symmetry(field in field_strategy(), d in -8i64..=8) {
        let v = field.psi_exponent(d);
        prop_assert!((1.0..=2.0).contains(&v));
        prop_assert_eq!(v, field.psi_exponent(-d));
        prop_assert_eq!(field.psi_exponent(0), 2.0);
    }

    #[test]
    fn gamma_set_symmetric_with_diagonal(field in field_strategy(), p in 1usize..10) {
        let g = field.gamma_p(p);
        for i in 1..=p {
            prop_assert!(g.contains(i, i));
        }
        for &(i, j) in &g.pairs {
            prop_assert!(g.contains(j, i));
            prop_assert!(i <= p && j <= p);
        }
    }

    #[test]
    fn lambda_set_shifts_with_lag(field in field_strategy(), i in -3i64..=3, j in -3i64..=3, t in -4i64..=4) {
        let base = field.lambda_set(i, j, 0);
        prop_assert!(!base.is_empty());
        let shifted: BTreeSet<(i64, i64)> = base.indices.iter().map(|&(u, v)| (u, v + t)).collect();
        prop_assert_eq!(field.lambda_set(i, j, t).indices, shifted);
    }
}

#[test]
fn ma18_psi_by_enumeration() {
    let field = CoefficientField::ma18();
    for d in -25i64..=25 {
        let overlap = (1..=18).any(|k| (1..=18).contains(&(k + d)));
        let expect = if overlap { 2.0 } else { 1.0 };
        assert_eq!(field.psi_exponent(d), expect, "d={d}");
    }
    assert_eq!(field.gamma_p(18).pairs.len(), 18 * 18);
}

#[test]
fn half_weight_neighbour() {
    let field = CoefficientField::from_triples(&[(0, 0, 1.0), (1, 0, 0.5)]).unwrap();
    assert_eq!(field.psi_exponent(1), 1.5);
    let g = field.gamma_p(4);
    assert_eq!(g, svlab::field::GammaSet::diagonal(4));
}
