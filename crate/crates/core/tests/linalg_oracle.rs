use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdic_core::linalg::*;
use rdic_core::rng::{complex_gaussian_matrix, substream};

/// Rank by fraction-exact Gaussian elimination.
fn exact_rank(a: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<BigRational>> =
        a.iter().map(|row| row.iter().map(|&v| BigRational::from_integer(BigInt::from(v))).collect()).collect();
    let (rows, cols) = (m.len(), m.first().map_or(0, Vec::len));
    let mut rank = 0;
    for c in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][c].is_zero()) else { continue };
        m.swap(rank, pivot);
        let inv = BigRational::one() / &m[rank][c];
        for r in 0..rows {
            if r != rank && !m[r][c].is_zero() {
                let f = &m[r][c] * &inv;
                for j in c..cols {
                    let v = &f * &m[rank][j];
                    m[r][j] -= v;
                }
            }
        }
        rank += 1;
    }
    rank
}

fn to_complex(a: &[Vec<i64>]) -> CMatrix {
    DMatrix::from_fn(a.len(), a[0].len(), |r, c| Complex64::new(a[r][c] as f64, 0.0))
}

/// Product of small random integer factors, so low ranks are common.
fn random_integer_matrix(rng: &mut ChaCha8Rng) -> Vec<Vec<i64>> {
    let rows = rng.random_range(1..=6);
    let cols = rng.random_range(1..=6);
    let inner = rng.random_range(0..=6);
    let l: Vec<Vec<i64>> = (0..rows).map(|_| (0..inner).map(|_| rng.random_range(-3..=3)).collect()).collect();
    let r: Vec<Vec<i64>> = (0..inner).map(|_| (0..cols).map(|_| rng.random_range(-3..=3)).collect()).collect();
    (0..rows).map(|i| (0..cols).map(|j| (0..inner).map(|k| l[i][k] * r[k][j]).sum()).collect()).collect()
}

#[test]
fn numerical_rank_matches_exact_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut deficient = 0;
    for _ in 0..1500 {
        let a = random_integer_matrix(&mut rng);
        let exact = exact_rank(&a);
        let num = numerical_rank(&to_complex(&a), None).unwrap();
        assert_eq!(num, exact, "{a:?}");
        if exact < a.len().min(a[0].len()) {
            deficient += 1;
        }
    }
    assert!(deficient > 300, "too few rank-deficient samples: {deficient}");
}

#[test]
fn exact_rank_reference_values() {
    assert_eq!(exact_rank(&[vec![1, 2], vec![2, 4]]), 1);
    assert_eq!(exact_rank(&[vec![0, 0], vec![0, 0]]), 0);
    assert_eq!(exact_rank(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]), 3);
}

fn generic(rows: usize, cols: usize, seed: u64) -> CMatrix {
    complex_gaussian_matrix(rows, cols, &mut substream(seed, &["test".into()]))
}

#[test]
fn generic_null_and_intersection_dimensions() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..=10);
        let a = rng.random_range(1..=n);
        let b = rng.random_range(1..=n);
        let (ua, ub) = (generic(n, a, seed), generic(n, b, seed + 1000));
        let (sa, sb) = (SubspaceBasis::span_of(&ua, None).unwrap(), SubspaceBasis::span_of(&ub, None).unwrap());
        let inter = intersect_subspaces(&sa, &sb).unwrap();
        assert_eq!(inter.dim(), (a + b).saturating_sub(n), "n={n} a={a} b={b}");
        assert!(sa.containment_residual(inter.vectors()) < 1e-9);
        assert!(sb.containment_residual(inter.vectors()) < 1e-9);

        // Rank r built as a product; nullity is cols - r.
        let cols = rng.random_range(1..=10);
        let r = rng.random_range(0..=n.min(cols));
        let m = generic(n, r, seed + 2000) * generic(r, cols, seed + 3000);
        assert_eq!(numerical_rank(&m, None).unwrap(), r);
        let null = null_space_basis(&m, None).unwrap();
        assert_eq!(null.dim(), cols - r);
        assert!(max_abs(&(&m * null.vectors())) < 1e-9 * spectral_norm(&m).max(1.0));
        assert_eq!(left_null_space_basis(&m, None).unwrap().dim(), n - r);
    }
}

#[test]
fn empty_and_degenerate_inputs() {
    assert_eq!(numerical_rank(&CMatrix::zeros(0, 3), None).unwrap(), 0);
    assert_eq!(numerical_rank(&CMatrix::zeros(3, 3), None).unwrap(), 0);
    assert_eq!(null_space_basis(&CMatrix::zeros(2, 3), None).unwrap().dim(), 3);
    let mut bad = CMatrix::zeros(2, 2);
    bad[(0, 0)] = Complex64::new(f64::NAN, 0.0);
    assert!(numerical_rank(&bad, None).is_err());
    let e = intersect_subspaces(&SubspaceBasis::empty(4), &SubspaceBasis::full(4)).unwrap();
    assert_eq!(e.dim(), 0);
    assert!(intersect_subspaces(&SubspaceBasis::full(3), &SubspaceBasis::full(4)).is_err());
}

fn dims() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (1usize..=8, 1usize..=8, 0usize..=8, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rank_plus_nullity((rows, cols, r, seed) in dims()) {
        let r = r.min(rows).min(cols);
        let m = generic(rows, r, seed) * generic(r, cols, seed ^ 1);
        let rank = numerical_rank(&m, None).unwrap();
        prop_assert_eq!(rank + null_space_basis(&m, None).unwrap().dim(), cols);
        prop_assert_eq!(rank + left_null_space_basis(&m, None).unwrap().dim(), rows);
    }

    #[test]
    fn intersection_is_symmetric((n, a, b, seed) in dims()) {
        let (a, b) = (a.min(n), b.min(n));
        let sa = SubspaceBasis::span_of(&generic(n, a, seed), None).unwrap();
        let sb = SubspaceBasis::span_of(&generic(n, b, seed ^ 2), None).unwrap();
        let ab = intersect_subspaces(&sa, &sb).unwrap();
        let ba = intersect_subspaces(&sb, &sa).unwrap();
        prop_assert_eq!(ab.dim(), ba.dim());
        prop_assert!(ab.containment_residual(ba.vectors()) < 1e-8);
        prop_assert!(orthonormality_error(ab.vectors()) < 1e-9);
    }

    #[test]
    fn complement_is_orthogonal((n, a, b, seed) in dims()) {
        let big_dim = a.min(n);
        let big = SubspaceBasis::span_of(&generic(n, big_dim, seed), None).unwrap();
        let sub_dim = b.min(big_dim);
        let sub = SubspaceBasis::span_of(&(big.vectors() * generic(big_dim, sub_dim, seed ^ 3)), None).unwrap();
        let comp = complement_within(&big, &sub).unwrap();
        prop_assert_eq!(comp.dim() + sub.dim(), big.dim());
        prop_assert!(max_abs(&(sub.vectors().adjoint() * comp.vectors())) < 1e-9);
        prop_assert!(big.containment_residual(comp.vectors()) < 1e-9);
    }

    #[test]
    fn rank_is_scale_invariant((rows, cols, r, seed) in dims(), exp in -6i32..6) {
        let r = r.min(rows).min(cols);
        let m = generic(rows, r, seed) * generic(r, cols, seed ^ 4);
        let scaled = &m * Complex64::new(10f64.powi(exp), 0.0);
        prop_assert_eq!(numerical_rank(&scaled, None).unwrap(), numerical_rank(&m, None).unwrap());
    }
}
