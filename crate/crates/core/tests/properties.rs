use nalgebra::DMatrix;
use proptest::prelude::*;

use orbitlab::construct::{lemma_sequence, plan_blocks, Gauge, PlanOptions, TailModel};
use orbitlab::moduli::{lp_rho_bar, ModulusCurve, ModulusKind};
use orbitlab::operators::{block_dim, block_offset, Operator, OperatorSpec};
use orbitlab::powernorms::{closed_form_power_norm, matrix_norm, NormMethod, NormalizedPower};
use orbitlab::spaces::SpaceSpec;
use orbitlab::witness::ThresholdRule;

fn space() -> impl Strategy<Value = SpaceSpec> {
    (prop_oneof![Just(None), Just(Some(1.0)), Just(Some(2.0)), (1.05f64..8.0).prop_map(Some)], 1usize..16).prop_map(
        |(p, d)| match p {
            Some(p) => SpaceSpec::lp(p, d).unwrap(),
            None => SpaceSpec::sup(d).unwrap(),
        },
    )
}

fn space_and_vecs() -> impl Strategy<Value = (SpaceSpec, Vec<f64>, Vec<f64>)> {
    space().prop_flat_map(|sp| {
        let v = prop::collection::vec(-100.0f64..100.0, sp.dim);
        (Just(sp), v.clone(), v)
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn norm_is_a_norm((sp, x, y) in space_and_vecs(), lam in -10.0f64..10.0) {
        let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
        let scaled: Vec<f64> = x.iter().map(|a| lam * a).collect();
        prop_assert!(sp.norm(&x) >= 0.0);
        prop_assert!(close(sp.norm(&scaled), lam.abs() * sp.norm(&x), 1e-12));
        prop_assert!(sp.norm(&sum) <= (sp.norm(&x) + sp.norm(&y)) * (1.0 + 1e-12));
    }

    #[test]
    fn duality_functional_norms((sp, x, _) in space_and_vecs()) {
        prop_assume!(sp.norm(&x) > 1e-6);
        let f = sp.duality_functional(&x).unwrap();
        prop_assert!(close(f.eval(&x), sp.norm(&x), 1e-12));
        prop_assert!(close(sp.dual_norm(&f), 1.0, 1e-12));
    }

    #[test]
    fn dual_attaining_vector_attains((sp, _, z) in space_and_vecs()) {
        prop_assume!(z.iter().any(|v| v.abs() > 1e-6));
        let u = sp.dual_attaining_vector(&z).unwrap();
        let zf = orbitlab::spaces::Functional::new(z.clone());
        prop_assert!(close(sp.norm(&u), 1.0, 1e-12));
        prop_assert!(close(zf.eval(&u), sp.dual_norm(&zf), 1e-10));
    }

    #[test]
    fn submultiplicative(d in 2usize..7, kind in 0usize..3, entries in prop::collection::vec(-1.0f64..1.0, 49), a in 1usize..4, b in 1usize..4) {
        let sp = [SpaceSpec::lp(1.0, d), SpaceSpec::lp(2.0, d), SpaceSpec::sup(d)][kind].clone().unwrap();
        let m = DMatrix::from_fn(d, d, |i, j| entries[i * 7 + j]);
        let t = OperatorSpec::new(Operator::Dense(m), sp).unwrap();
        let norm = |n| matrix_norm(&t.power_matrix(n), sp, NormMethod::Auto).value;
        prop_assert!(norm(a + b) <= norm(a) * norm(b) * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn block_norm_identity(k in 1usize..10, p in prop_oneof![Just(1.0), Just(1.5), Just(2.0), Just(4.0)], seed in any::<u64>(), n in 1usize..10) {
        prop_assume!(n <= k);
        let scales = (1..=k).map(|j| 0.5f64.powi(j as i32)).collect();
        let sp = SpaceSpec::lp(p, block_dim(k)).unwrap();
        let s = OperatorSpec::new(Operator::BlockBackwardShift { scales }, sp).unwrap();
        let x = sp.random_unit(seed);
        let img = s.apply_power(n, &x).unwrap();
        let parts: f64 = (1..=k).map(|b| sp.norm(&img[block_offset(b)..block_offset(b) + b + 1]).powf(p)).sum();
        prop_assert!(close(sp.norm(&img).powf(p), parts, 1e-12));
    }

    #[test]
    fn ratios_ignore_scaling((sp, x, _) in space_and_vecs(), factor in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0], n in 1usize..6) {
        prop_assume!(sp.dim > n);
        let t = OperatorSpec::new(Operator::UnweightedBackwardShift, sp).unwrap();
        let c = t.scaled(factor).unwrap();
        let (a, b) = (NormalizedPower::new(&t, n).unwrap(), NormalizedPower::new(&c, n).unwrap());
        prop_assert_eq!(a.image_norm(&x), b.image_norm(&x));
    }

    #[test]
    fn weighted_shift_closed_form_matches_dense(weights in prop::collection::vec(0.05f64..2.0, 2..10), n in 1usize..6) {
        let d = weights.len() + 1;
        prop_assume!(n < d);
        let sp = SpaceSpec::lp(2.0, d).unwrap();
        let t = OperatorSpec::new(Operator::WeightedBackwardShift { weights }, sp).unwrap();
        let closed = closed_form_power_norm(&t, n).unwrap().value;
        let dense = matrix_norm(&t.power_matrix(n), sp, NormMethod::Auto).value;
        prop_assert!(close(closed, dense, 1e-12));
    }

    #[test]
    fn normalized_power_has_unit_norm(entries in prop::collection::vec(-2.0f64..2.0, 2..8), n in 1usize..12) {
        prop_assume!(entries.iter().any(|e| e.abs() > 1e-3));
        let sp = SpaceSpec::lp(2.0, entries.len()).unwrap();
        let t = OperatorSpec::new(Operator::Diagonal { entries }, sp).unwrap();
        let m = NormalizedPower::new(&t, n).unwrap().matrix();
        prop_assert!(close(matrix_norm(&m, sp, NormMethod::Auto).value, 1.0, 1e-12));
    }

    #[test]
    fn lp_modulus_is_convex_and_doubling(p in 1.0f64..6.0, t in 1e-4f64..0.5) {
        let (a, b, c) = (lp_rho_bar(p, t), lp_rho_bar(p, 2.0 * t), lp_rho_bar(p, 0.5 * t));
        prop_assert!(a >= 0.0 && b >= a && a >= c);
        prop_assert!(a <= 0.5 * (b + c) * (1.0 + 1e-12) + 1e-300);
        prop_assert!(b <= 2f64.powf(p.max(1.0)) * a * (1.0 + 1e-9));
        let curve = ModulusCurve::closed(ModulusKind::SeqLp { p }, &[c, a, b]).unwrap();
        prop_assert!(curve.invariant_violations(1e-9).is_empty());
    }

    #[test]
    fn harmonic_thresholds_decrease(h in 1usize..200) {
        ThresholdRule::Harmonic.check_non_increasing(h).unwrap();
        ThresholdRule::InverseSquare.check_non_increasing(h).unwrap();
    }

    #[test]
    fn lemma_contract(q in 1.2f64..3.0, blocks in 1usize..6) {
        let eps: Vec<f64> = (1..=blocks).map(|i| 0.5f64.powi(i as i32)).collect();
        let seq = lemma_sequence(&Gauge::power(q), &Gauge::power(1.0), &eps, blocks).unwrap();
        prop_assert!(seq.sum_f <= 1.0 + 1e-9);
        prop_assert!(seq.block_g.iter().all(|g| *g >= 0.5));
    }

    #[test]
    fn plans_satisfy_block_conditions(decay in 0.3f64..0.9, len in 5usize..60, p in 1.2f64..4.0) {
        let alpha: Vec<f64> = (1..=len).map(|i| decay.powi(i as i32)).collect();
        let sp = SpaceSpec::lp(p, 4).unwrap();
        let opts = PlanOptions { tail: TailModel::GeometricFromData, ..PlanOptions::default() };
        let plan = plan_blocks(&alpha, &Gauge::rho_bar_for(&sp), &Gauge::power(1.0), opts).unwrap();
        plan.check().unwrap();
        prop_assert!(plan.blocks.windows(2).all(|w| w[1].m > w[0].m && w[1].k == w[0].k + 1));
        for l in 1..=len {
            let b = plan.block_of(l);
            prop_assert!(plan.alpha[l - 1] <= 2f64.powi(-b.k));
        }
    }
}
