use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use sosnorm::verify::{check_invariance, CheckStatus, SymmetryGroup};
use sosnorm::{build, from_polar_vertices, make_l1, make_linf, make_lp_sampled, mvee_general, mvee_symmetric};
use sosnorm::{BuildOptions, Ellipsoid, SolverOptions};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Largest relative gap between the support functions of `a` and `t(b)`.
fn support_gap(a: &Ellipsoid, b: &Ellipsoid, t: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let n = t.nrows();
    (0..200)
        .map(|_| {
            let y = DVector::<f64>::from_fn(n, |_, _| normal(rng));
            let ha = a.support(&y);
            let hb = b.support(&t.tr_mul(&y));
            let scale = a.centered_support(&y).max(1e-12);
            (ha - hb).abs() / scale
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mvee_is_affine_equivariant(seed in any::<u64>(), n in 1usize..5, extra in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = n + 1 + extra;
        let pts: Vec<DVector<f64>> = (0..count)
            .map(|_| DVector::from_fn(n, |_, _| normal(&mut rng)))
            .collect();
        // Well-conditioned invertible map: identity plus a small perturbation.
        let t = DMatrix::<f64>::identity(n, n) + DMatrix::from_fn(n, n, |_, _| 0.3 * normal(&mut rng));
        prop_assume!(t.clone().svd(false, false).singular_values.min() > 0.2);
        let moved: Vec<DVector<f64>> = pts.iter().map(|p| &t * p).collect();
        let opts = SolverOptions::with_eps(1e-9);
        let tol = 10.0 * 1e-7;

        let a = mvee_symmetric(&moved, opts).unwrap();
        let b = mvee_symmetric(&pts, opts).unwrap();
        prop_assert!(support_gap(&a, &b, &t, &mut rng) < tol);

        let a = mvee_general(&moved, opts).unwrap();
        let b = mvee_general(&pts, opts).unwrap();
        prop_assert!(support_gap(&a, &b, &t, &mut rng) < tol);
    }
}

/// Spread of `p(x) / |x|^{2n}` over random unit vectors, as max / min.
fn isotropy_spread(samples: usize, n: usize) -> f64 {
    let spec = make_lp_sampled(3, 2.0, samples, 4).unwrap();
    let a = build(&spec, n, BuildOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for _ in 0..2000 {
        let x: Vec<f64> = (0..3).map(|_| normal(&mut rng)).collect();
        let norm2 = x.iter().map(|v| v * v).sum::<f64>();
        let ratio = a.eval_p(&x).unwrap() / norm2.powi(n as i32);
        lo = lo.min(ratio);
        hi = hi.max(ratio);
    }
    hi / lo
}

#[test]
fn l2_isotropy_improves_with_samples() {
    let coarse = isotropy_spread(20, 1);
    let fine = isotropy_spread(400, 1);
    assert!(fine < coarse, "spread {fine} with 400 samples vs {coarse} with 20");
    assert!(fine < 1.02, "spread {fine}");
    assert!(isotropy_spread(400, 3) < 1.1);
}

#[test]
fn polytope_norms_are_group_invariant() {
    for (spec, n) in [
        (make_l1(2).unwrap(), 1),
        (make_l1(3).unwrap(), 3),
        (make_linf(3).unwrap(), 3),
        (make_linf(4).unwrap(), 1),
    ] {
        let a = build(&spec, n, BuildOptions::default()).unwrap();
        for group in [SymmetryGroup::SignedPermutations, SymmetryGroup::Permutations] {
            let c = check_invariance(&a, group, 300, 1).unwrap();
            assert_eq!(c.status, CheckStatus::Pass, "{} n={n}: {c:?}", spec.label);
            assert!(c.worst_rel_error <= 1e-9);
        }
    }
}

#[test]
fn asymmetric_polytope_skips_invariance() {
    let spec = from_polar_vertices(vec![vec![1.0, 0.2], vec![-0.4, 1.1], vec![-0.7, -0.9]], false).unwrap();
    let a = build(&spec, 1, BuildOptions::default()).unwrap();
    let c = check_invariance(&a, SymmetryGroup::Permutations, 100, 1).unwrap();
    assert_eq!(c.status, CheckStatus::NotApplicable);
}
