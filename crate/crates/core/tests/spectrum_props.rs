use nalgebra::DMatrix;
use proptest::prelude::*;
use svlab::panel::{Panel, PanelRole};
use svlab::spectrum::{eigen, sample_cov, spectral_norm, SymMatrix};

fn sym_strategy() -> impl Strategy<Value = SymMatrix> {
    (1usize..12).prop_flat_map(|p| {
        prop::collection::vec(-10.0f64..10.0, p * p).prop_map(move |v| SymMatrix::from_upper(p, |i, j| v[i * p + j]))
    })
}

fn to_nalgebra(s: &SymMatrix) -> DMatrix<f64> {
    let p = s.p();
    DMatrix::from_fn(p, p, |i, j| s.get(i, j))
}

proptest! {
    #[test]
    fn eigenvalues_agree_with_nalgebra(s in sym_strategy()) {
        let ours = eigen(&s).unwrap();
        let mut theirs: Vec<f64> = to_nalgebra(&s).symmetric_eigenvalues().iter().copied().collect();
        theirs.sort_by(|a, b| b.total_cmp(a));
        let scale = s.frobenius_norm().max(1.0);
        for (a, b) in ours.eigenvalues.iter().zip(&theirs) {
            prop_assert!((a - b).abs() <= 1e-10 * scale, "{a} vs {b}");
        }
        let sum: f64 = ours.eigenvalues.iter().sum();
        prop_assert!((sum - s.trace()).abs() <= 1e-10 * scale);
        prop_assert!(ours.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn weyl_bound_holds(s in sym_strategy()) {
        let p = s.p();
        let lam = eigen(&s).unwrap().eigenvalues;
        let mut d = s.diag();
        d.sort_by(|a, b| b.total_cmp(a));
        let off = SymMatrix::from_upper(p, |i, j| if i == j { 0.0 } else { s.get(i, j) });
        let bound = spectral_norm(&off).unwrap();
        for (a, b) in lam.iter().zip(&d) {
            prop_assert!((a - b).abs() <= bound + 1e-10);
        }
    }

    #[test]
    fn leading_vector_sign_convention(s in sym_strategy()) {
        let r = eigen(&s).unwrap();
        for v in &r.vectors {
            let k = (0..v.len()).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap();
            prop_assert!(v[k] > 0.0);
        }
    }
}

#[test]
fn panel_with_diagonal_covariance() {
    // orthogonal rows with squared norms 9, 5, 2
    let rows = vec![
        vec![3.0, 0.0, 0.0, 0.0],
        vec![0.0, 2.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 2f64.sqrt()],
    ];
    let panel = Panel::from_rows(&rows, PanelRole::X).unwrap();
    let cov = sample_cov(&panel, false).unwrap();
    let r = eigen(&cov.matrix).unwrap();
    for (a, b) in r.eigenvalues.iter().zip([9.0, 5.0, 2.0]) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}
