use cfnn::attribution::{exact_shapley_smalld, shapley_row};
use cfnn::datagen::{make_split, noise_columns_for, Samples};
use cfnn::models::{param_count, Activation, Model, ModelConfig, ModelState};
use cfnn::optim::{clip_gradients, global_norm};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn any_config() -> impl Strategy<Value = ModelConfig> {
    let d = 1usize..5;
    prop_oneof![
        (d.clone(), 0usize..5, 1usize..5).prop_map(|(d, l, p)| ModelConfig::cfnn(d, l, p)),
        (d.clone(), 1usize..4, 0usize..4, 1usize..4)
            .prop_map(|(d, s, l, p)| ModelConfig::boost(d, s, l, p, 0.5)),
        (d.clone(), 1usize..4, 1usize..4, 1usize..4, 1usize..5)
            .prop_map(|(d, k, l, p, h)| ModelConfig::moe(d, k, l, p, h)),
        (d.clone(), 0usize..6, 1usize..5).prop_map(|(d, n, p)| ModelConfig::hybrid(d, n, p)),
        (d, proptest::collection::vec(1usize..6, 0..3)).prop_map(|(d, w)| ModelConfig::mlp(
            d,
            w,
            Activation::Tanh
        )),
    ]
}

fn perturbed(config: ModelConfig, seed: u64, scale: f64) -> Model<f64> {
    let mut m = Model::init(config, seed, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    for v in m.params_mut().values_mut() {
        *v += rng.random_range(-scale..scale);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn declared_count_matches_allocation(config in any_config(), seed in any::<u64>()) {
        let m = Model::<f64>::init(config.clone(), seed, None).unwrap();
        prop_assert_eq!(m.param_count(), param_count(&config).unwrap());
        prop_assert_eq!(m.params().blocks().iter().map(|b| b.len).sum::<usize>(), m.param_count());
    }

    #[test]
    fn hybrid_denominators_never_drop_below_gamma_one(seed in any::<u64>(), x in proptest::collection::vec(-1e3f64..1e3, 3)) {
        let m = perturbed(ModelConfig::hybrid(3, 5, 4), seed, 2.0);
        let q = m.hybrid_denominators(&x).unwrap();
        prop_assert!(q.iter().all(|&v| v >= 1.0));
        prop_assert!(m.predict(&x).unwrap().is_finite());
    }

    #[test]
    fn hybrid_is_finite_for_small_gamma(seed in any::<u64>(), gamma in 0.01f64..1.0, x in proptest::collection::vec(-1e3f64..1e3, 2)) {
        let mut config = ModelConfig::hybrid(2, 4, 3);
        config.gamma = gamma;
        let m = perturbed(config, seed, 1.0);
        prop_assert!(m.predict(&x).unwrap().is_finite());
    }

    #[test]
    fn gate_weights_form_a_distribution(seed in any::<u64>(), active in 1usize..5, x in proptest::collection::vec(-50.0f64..50.0, 2)) {
        let config = ModelConfig::moe(2, 4, 2, 2, 3);
        let base = perturbed(config.clone(), seed, 0.5);
        let m = Model::from_parts(
            config,
            ModelState::Moe { active, locked: false },
            base.params().blocks().to_vec(),
            base.params().values().to_vec(),
        )
        .unwrap();
        let w = m.gate_weights(&x).unwrap();
        prop_assert_eq!(w.len(), active);
        prop_assert!(w.iter().all(|&v| v >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zeroed_numerators_truncate_the_fraction(seed in any::<u64>(), depth in 1usize..5, k in 1usize..5, x in proptest::collection::vec(-2.0f64..2.0, 2)) {
        let k = k.min(depth);
        let mut deep = perturbed(ModelConfig::cfnn(2, depth, 3), seed, 0.3);
        for level in k - 1..depth {
            deep.params_mut().get_mut(&format!("level{level}.coef_beta")).unwrap().fill(0.0);
        }
        let mut shallow = Model::<f64>::zeroed(ModelConfig::cfnn(2, k - 1, 3)).unwrap();
        for b in shallow.params().blocks().to_vec() {
            shallow.params_mut().get_mut(&b.name).unwrap().copy_from_slice(deep.params().get(&b.name).unwrap());
        }
        prop_assert_eq!(deep.predict(&x).unwrap().to_bits(), shallow.predict(&x).unwrap().to_bits());
    }

    #[test]
    fn clipping_never_grows_the_norm(g in proptest::collection::vec(-100.0f64..100.0, 1..20), threshold in 0.01f64..50.0) {
        let mut clipped = g.clone();
        let pre = clip_gradients(&mut clipped, threshold);
        let post = global_norm(&clipped);
        prop_assert_eq!(pre, global_norm(&g));
        prop_assert!(post <= pre + 1e-12 && post <= threshold + 1e-12);
    }

    #[test]
    fn split_is_a_partition(n in 10usize..3000, seed in any::<u64>()) {
        let s = make_split(n, [0.65, 0.05, 0.30], seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(s.val.len(), n * 5 / 100);
        prop_assert_eq!(s.test.len(), n * 30 / 100);
    }

    #[test]
    fn noise_column_count_is_minimal(alpha in 0.43f64..0.95) {
        let k = noise_columns_for(alpha).unwrap();
        let ratio = |k: usize| (3 + k) as f64 / (7 + k) as f64;
        prop_assert!(ratio(k) >= alpha - 1e-12);
        prop_assert!(k == 0 || ratio(k - 1) < alpha);
    }

    #[test]
    fn exact_shapley_is_efficient(seed in any::<u64>(), x in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let m = perturbed(ModelConfig::mlp(5, vec![6], Activation::Tanh), seed, 0.2);
        let bg = [0.1, -0.3, 0.0, 0.2, 0.5];
        let phi = exact_shapley_smalld(&m, &bg, &x).unwrap();
        let gap = m.predict(&x).unwrap() - m.predict(&bg).unwrap();
        prop_assert!((phi.iter().sum::<f64>() - gap).abs() < 1e-9);
    }
}

#[test]
fn sampled_shapley_converges_on_eight_features() {
    let m = perturbed(ModelConfig::mlp(8, vec![10], Activation::Tanh), 5, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x: Vec<f64> = (0..20 * 8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let data = Samples::new(x, vec![0.0; 20], 8).unwrap();
    let bg = vec![0.0; 8];
    let median_error = |perms: usize| {
        let mut errs: Vec<f64> = (0..20)
            .map(|i| {
                let exact = exact_shapley_smalld(&m, &bg, data.row(i)).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
                let est = shapley_row(&m, &bg, data.row(i), perms, &mut rng).unwrap();
                exact
                    .iter()
                    .zip(&est)
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / 8.0
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        0.5 * (errs[9] + errs[10])
    };
    let e: Vec<f64> = [16, 32, 64, 128].into_iter().map(median_error).collect();
    assert!(e.windows(2).all(|w| w[1] < w[0]), "{e:?}");
}
