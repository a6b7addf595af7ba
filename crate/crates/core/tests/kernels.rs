use proptest::prelude::*;
use riemann_sa::numkernels::{pinv, qr_qf, svd, sym_eig};
use riemann_sa::DenseMatrix;

fn matrix(max: usize) -> impl Strategy<Value = DenseMatrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(-3.0f64..3.0, r * c)
            .prop_map(move |d| DenseMatrix::from_vec(r, c, d).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_matches_gram_spectrum(x in matrix(8)) {
        let s = svd(&x).unwrap();
        let k = s.sigma.len();
        prop_assert!(s.reconstruct(k).dist(&x) <= 1e-10 * x.norm().max(1e-300));
        prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        // singular values are square roots of the Gram eigenvalues
        let (mut eig, _) = sym_eig(&x.t_matmul(&x)).unwrap();
        eig.sort_by(|a, b| b.total_cmp(a));
        for (sv, ev) in s.sigma.iter().zip(&eig) {
            prop_assert!((sv - ev.max(0.0).sqrt()).abs() <= 1e-8 * (1.0 + sv));
        }
    }

    #[test]
    fn qf_fixes_orthonormal_frames(x in matrix(6)) {
        prop_assume!(x.rows() >= x.cols());
        let q = match qr_qf(&x) {
            Ok(q) => q,
            Err(_) => return Ok(()),
        };
        prop_assert!(q.t_matmul(&q).dist(&DenseMatrix::identity(q.cols())) <= 1e-10);
        prop_assert!(qr_qf(&q).unwrap().dist(&q) <= 1e-10);
    }

    #[test]
    fn pinv_satisfies_penrose_identities(rows in 1usize..4, extra in 0usize..4, seed in prop::collection::vec(-2.0f64..2.0, 64)) {
        let cols = rows + extra;
        let mut l = DenseMatrix::from_vec(rows, cols, seed[..rows * cols].to_vec()).unwrap();
        for i in 0..rows {
            // keep full row rank
            l[(i, i)] += 5.0;
        }
        let p = pinv(&l).unwrap();
        prop_assert!(l.matmul(&p).matmul(&l).dist(&l) <= 1e-10 * l.norm());
        prop_assert!(p.matmul(&l).matmul(&p).dist(&p) <= 1e-10 * p.norm().max(1.0));
    }
}
