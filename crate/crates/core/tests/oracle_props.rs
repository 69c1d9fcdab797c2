use cawr::loss::RobustLoss;
use cawr::mdp::{MixtureBehavior, PolicyDescriptor};
use cawr::oracle::{
    check_bias_bound, check_lemma3, constrained_row, kl_lagrangian, theorem1_row, total_variation, Lemma3Probe,
    Weighting,
};
use proptest::prelude::*;

fn simplex(k: std::ops::RangeInclusive<usize>, floor: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(floor..1.0f64, k).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
    simplex(2..=6, 1e-3).prop_flat_map(|pb| {
        let k = pb.len();
        (Just(pb), prop::collection::vec(-3.0f64..3.0, k), 0.1f64..5.0)
    })
}

fn gaussian(mean: f64, std: f64) -> PolicyDescriptor {
    PolicyDescriptor::Gaussian { mean: vec![mean], std }
}

proptest! {
    #[test]
    fn constrained_row_is_a_distribution((pb, adv, lambda) in instance()) {
        let p = constrained_row(&pb, &adv, lambda);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constrained_row_beats_any_other_policy((pb, adv, lambda) in instance(), other in simplex(6..=6, 0.0)) {
        let p = constrained_row(&pb, &adv, lambda);
        let q: Vec<f64> = other[..pb.len()].to_vec();
        let s: f64 = q.iter().sum();
        prop_assume!(s > 1e-9);
        let q: Vec<f64> = q.iter().map(|x| x / s).collect();
        let best = kl_lagrangian(&p, &pb, &adv, lambda);
        prop_assert!(best >= kl_lagrangian(&q, &pb, &adv, lambda) - 1e-12);
    }

    #[test]
    fn kl_lower_bound_holds((pb, adv, lambda) in instance()) {
        let c = theorem1_row(&pb, &adv, lambda);
        prop_assert!(c.holds, "margin {}", c.margin);
        prop_assert!(c.margin >= -1e-12);
    }

    #[test]
    fn total_variation_is_a_metric(p in simplex(4..=4, 0.0), q in simplex(4..=4, 0.0)) {
        let d = total_variation(&p, &q);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert_eq!(d, total_variation(&q, &p));
        prop_assert_eq!(total_variation(&p, &p), 0.0);
    }

    #[test]
    fn lemma3_gradients_agree(
        d in 1usize..4,
        seed in prop::collection::vec(-3.0f64..3.0, 8),
        sigma in 0.05f64..2.0,
        weight in 0.0f64..10.0,
    ) {
        let probe = Lemma3Probe { action: seed[..d].to_vec(), mu: seed[4..4 + d].to_vec(), sigma, weight };
        let r = check_lemma3(&[probe]).unwrap();
        prop_assert!(r.holds, "gap {} drift {}", r.max_gradient_gap, r.max_constant_drift);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn l2_bias_is_bounded(
        good in -1.0f64..1.0,
        gap in 0.5f64..3.0,
        s_good in 0.02f64..0.25,
        s_poor in 0.02f64..0.5,
        eps in 0.0f64..0.45,
        lambda in 0.5f64..5.0,
    ) {
        let mix = MixtureBehavior::new(gaussian(good, s_good * gap), gaussian(good - gap, s_poor), eps).unwrap();
        let w = Weighting::BanditAdvantage { target: good, lambda, w_max: 100.0 };
        let r = check_bias_bound(&mix, &w, &RobustLoss::L2).unwrap();
        prop_assert_eq!(r.holds, Some(true), "bias {} bound {:?}", r.bias, r.corollary_bound);
    }

    #[test]
    fn no_corruption_means_no_bias(good in -1.0f64..1.0, s in 0.05f64..0.5) {
        let mix = MixtureBehavior::new(gaussian(good, s), gaussian(good + 1.0, s), 0.0).unwrap();
        for loss in [RobustLoss::L2, RobustLoss::L1, RobustLoss::huber()] {
            let r = check_bias_bound(&mix, &Weighting::Constant { w: 1.0 }, &loss).unwrap();
            prop_assert!(r.bias < 1e-6, "{} bias {}", loss.name(), r.bias);
        }
    }

    #[test]
    fn l1_ignores_a_minority_point_mass(good in -1.0f64..1.0, poor in -3.0f64..3.0, eps in 0.0f64..0.45) {
        prop_assume!((good - poor).abs() > 0.1);
        let mix = MixtureBehavior::new(gaussian(good, 0.0), gaussian(poor, 0.0), eps).unwrap();
        let r = check_bias_bound(&mix, &Weighting::Constant { w: 1.0 }, &RobustLoss::L1).unwrap();
        prop_assert!(r.bias <= 1e-9, "bias {}", r.bias);
    }
}
