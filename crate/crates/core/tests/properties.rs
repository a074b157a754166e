use proptest::prelude::*;

use msbvm::bands::{upper_quantile, CredibleBand, HolderConstraint};
use msbvm::multiscale::{
    h_delta_embedding_constant, h_delta_norm, multiscale_norm, project, WeightSequence,
};
use msbvm::wavelet::{analyze, holder_norm, synthesize, CoefficientTree, PiecewiseConstantFn};

fn heights(max_level: usize) -> impl Strategy<Value = (usize, Vec<f64>)> {
    (0..=max_level).prop_flat_map(|l| (Just(l), prop::collection::vec(-5.0..5.0f64, 1 << l)))
}

fn tree(max_depth: usize) -> impl Strategy<Value = CoefficientTree> {
    (0..=max_depth).prop_flat_map(|d| {
        (-3.0..3.0f64, prop::collection::vec(-3.0..3.0f64, (1usize << d) - 1))
            .prop_map(|(s, v)| CoefficientTree::from_parts(s, v).unwrap())
    })
}

fn weights() -> impl Strategy<Value = WeightSequence> {
    prop_oneof![
        Just(WeightSequence::sqrt_log()),
        Just(WeightSequence::parse("sqrt").unwrap()),
        (1.0..2.0f64).prop_map(|p| WeightSequence::parse(&format!("power({p})")).unwrap()),
    ]
}

proptest! {
    #[test]
    fn parseval((level, h) in heights(8)) {
        let f = PiecewiseConstantFn::new(level, h).unwrap();
        let c = analyze(&f);
        prop_assert!((c.sum_of_squares() - f.integral_of_square()).abs() < 1e-9 * (1.0 + f.integral_of_square()));
    }

    #[test]
    fn synthesize_inverts_analyze((level, h) in heights(8)) {
        let f = PiecewiseConstantFn::new(level, h.clone()).unwrap();
        let back = synthesize(&analyze(&f), level).unwrap();
        for (a, b) in back.heights().iter().zip(&h) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn basis_is_orthonormal(l in 0usize..6, k_seed in 0usize..1000) {
        let k = k_seed % (1 << l);
        let mut c = CoefficientTree::zeros(l + 1);
        c.set(l, k, 1.0);
        let back = analyze(&synthesize(&c, l + 1).unwrap());
        for (i, v) in back.iter_flat().enumerate() {
            let want = if i == (1 << l) + k { 1.0 } else { 0.0 };
            prop_assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn holder_norm_increases_with_exponent(c in tree(8), s in 0.0..1.5f64, ds in 0.0..1.0f64) {
        prop_assert!(holder_norm(&c, s) <= holder_norm(&c, s + ds) + 1e-12);
    }

    #[test]
    fn multiscale_norm_is_below_l2(c in tree(8), w in weights()) {
        // every weight is >= 1
        prop_assert!(multiscale_norm(&c, &w) <= c.sum_of_squares().sqrt() + 1e-12);
    }

    #[test]
    fn h_delta_embedding(c in tree(9), w in weights(), delta in 0.55..2.0f64) {
        let lhs = h_delta_norm(&c, delta).unwrap();
        let rhs = h_delta_embedding_constant(&w, delta, c.depth()) * multiscale_norm(&c, &w);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn projection_is_idempotent_and_contracting(c in tree(8), j in 0usize..8, w in weights()) {
        let p = project(&c, j);
        prop_assert_eq!(project(&p, j), p.clone());
        prop_assert!(multiscale_norm(&p, &w) <= multiscale_norm(&c, &w));
        prop_assert!(p.sum_of_squares() <= c.sum_of_squares() + 1e-12);
    }

    #[test]
    fn upper_quantile_is_monotone(v in prop::collection::vec(-10.0..10.0f64, 20..200), a in 0.05..0.5f64, b in 0.05..0.5f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        // smaller alpha, higher quantile
        prop_assert!(upper_quantile(&v, lo).unwrap() >= upper_quantile(&v, hi).unwrap());
    }

    #[test]
    fn band_contains_its_centring(c in tree(7), r in 0.0..5.0f64, w in weights()) {
        let max_level = c.max_level().unwrap_or(0);
        let band = CredibleBand {
            centring: c.clone(),
            centring_id: "test".into(),
            weights: w,
            radius: r,
            alpha: 0.05,
            n: 100,
            max_level,
            holder: None,
        };
        prop_assert!(band.ball_contains(&c));
    }

    #[test]
    fn diameter_bound_dominates_members(
        l in 1usize..5,
        gamma in 0.3..1.0f64,
        u in prop::collection::vec(-1.0..1.0f64, 2 * 256),
        radius in 0.1..3.0f64,
    ) {
        let depth = l + 4;
        let n = 10_000u64;
        let w = WeightSequence::sqrt_log();
        let holder = HolderConstraint::new(gamma, l + 1, &w, Some(1.0)).unwrap();
        let band = CredibleBand {
            centring: CoefficientTree::zeros(depth),
            centring_id: "zero".into(),
            weights: w.clone(),
            radius,
            alpha: 0.05,
            n,
            max_level: l,
            holder: Some(holder),
        };
        let member = |offset: usize| {
            let mut t = CoefficientTree::zeros(depth);
            let step = radius / (n as f64).sqrt();
            t.set_scaling(u[offset] * w.weight(0) * step);
            let mut i = offset + 1;
            for lev in 0..depth {
                for k in 0..(1usize << lev) {
                    let cap = if lev <= l {
                        w.weight(lev) * step
                    } else {
                        (2f64).powf(-(lev as f64) * (gamma + 0.5))
                    };
                    t.set(lev, k, u[i % u.len()] * cap);
                    i += 1;
                }
            }
            t
        };
        let (f, g) = (member(0), member(256));
        prop_assume!(band.contains(&f) && band.contains(&g));
        let ff = synthesize(&f, depth).unwrap();
        let gf = synthesize(&g, depth).unwrap();
        let sup = ff.heights().iter().zip(gf.heights()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(sup <= band.diameter_bound().unwrap() + 1e-12);
    }
}
