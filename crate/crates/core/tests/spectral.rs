use faer::Mat;
use koopstitch::spectral::{decompose_matrix, unit_multiplicity, DEFAULT_RANK_TOL};
use proptest::prelude::*;

fn sorted_re(v: &[faer::c64]) -> Vec<f64> {
    let mut r: Vec<f64> = v.iter().map(|l| l.re).collect();
    r.sort_by(f64::total_cmp);
    r
}

#[test]
fn recovers_planted_spectrum() {
    let v = Mat::from_fn(3, 3, |i, j| [[1.0, 0.3, -0.2], [0.1, 1.0, 0.4], [-0.3, 0.2, 1.0]][i][j]);
    let d = Mat::from_fn(3, 3, |i, j| if i == j { [1.0, 1.0, 0.2][i] } else { 0.0 });
    let vinv = {
        use faer::linalg::solvers::DenseSolveCore;
        v.partial_piv_lu().inverse()
    };
    let k = &v * &d * &vinv;
    let spec = decompose_matrix(k.as_ref(), 0.05).unwrap();
    let got = sorted_re(&spec.eigenvalues);
    for (g, want) in got.iter().zip([0.2, 1.0, 1.0]) {
        assert!((g - want).abs() < 1e-10, "{got:?}");
    }
    assert!(spec.eigenvalues.iter().all(|l| l.im.abs() < 1e-10));
    assert_eq!(spec.unit_cluster.len(), 2);
    assert_eq!(unit_multiplicity(&spec, DEFAULT_RANK_TOL), 2);
}

#[test]
fn identity_has_full_multiplicity() {
    let spec = decompose_matrix(Mat::<f64>::identity(3, 3).as_ref(), 0.05).unwrap();
    assert_eq!(unit_multiplicity(&spec, DEFAULT_RANK_TOL), 3);
}

#[test]
fn rotation_has_no_unit_cluster() {
    let (c, s) = (0.6f64, 0.8f64);
    let k = Mat::from_fn(2, 2, |i, j| [[c, -s], [s, c]][i][j]);
    let spec = decompose_matrix(k.as_ref(), 0.05).unwrap();
    assert!(spec.unit_cluster.is_empty());
    assert!((spec.eigenvalues[0].im - 0.8).abs() < 1e-12);
    assert!((spec.eigenvalues[1].im + 0.8).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn block_diagonal_spectrum_is_union(
        a in prop::collection::vec(-1.0f64..1.0, 16),
        b in prop::collection::vec(-1.0f64..1.0, 9),
    ) {
        let ka = Mat::from_fn(4, 4, |i, j| a[4 * i + j]);
        let kb = Mat::from_fn(3, 3, |i, j| b[3 * i + j]);
        let kab = Mat::from_fn(7, 7, |i, j| match (i < 4, j < 4) {
            (true, true) => ka[(i, j)],
            (false, false) => kb[(i - 4, j - 4)],
            _ => 0.0,
        });
        let whole = decompose_matrix(kab.as_ref(), 0.05).unwrap();
        let mut union = decompose_matrix(ka.as_ref(), 0.05).unwrap().eigenvalues;
        union.extend(decompose_matrix(kb.as_ref(), 0.05).unwrap().eigenvalues);
        for l in &whole.eigenvalues {
            prop_assert!(union.iter().any(|u| (u - l).norm() < 1e-12), "{l:?} not in {union:?}");
        }
        prop_assert_eq!(whole.len(), 7);
        for i in 0..7 {
            let v = whole.eigenvector(i);
            let (top, bottom): (f64, f64) = (
                v[..4].iter().map(|x| x.norm()).sum(),
                v[4..].iter().map(|x| x.norm()).sum(),
            );
            prop_assert!(top == 0.0 || bottom == 0.0);
        }
        prop_assert!(whole.max_residual() <= 1e-10 * whole.k_norm.max(1.0));
    }
}
