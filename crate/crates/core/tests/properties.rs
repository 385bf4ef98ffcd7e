use emoadapt_core::corpus::balanced_subsample_indices;
use emoadapt_core::model::{ArchitectureSpec, DomainDescriptor, ModelBundle};
use emoadapt_core::stats::{eps_w2, uar};
use emoadapt_core::tensor_core::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn predictions_and_labels() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..6).prop_flat_map(|k| (Just(k), prop::collection::vec((0..k, 0..k), 1..60)))
}

proptest! {
    #[test]
    fn uar_ignores_sample_order((k, pairs) in predictions_and_labels(), seed in any::<u64>()) {
        let (p, l): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
        let base = uar(&p, &l, k).unwrap();
        let mut shuffled = pairs.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let (p2, l2): (Vec<usize>, Vec<usize>) = shuffled.into_iter().unzip();
        prop_assert!((uar(&p2, &l2, k).unwrap() - base).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert_eq!(uar(&l, &l, k).unwrap(), 1.0);
    }

    #[test]
    fn balanced_subsample_is_uniform(classes in prop::collection::vec(0usize..5, 1..120), seed in any::<u64>()) {
        let picked = balanced_subsample_indices(&classes, &mut ChaCha8Rng::seed_from_u64(seed));
        let present: std::collections::BTreeSet<usize> = classes.iter().copied().collect();
        let min = present.iter().map(|c| classes.iter().filter(|x| *x == c).count()).min().unwrap();
        for c in &present {
            prop_assert_eq!(picked.iter().filter(|&&i| classes[i] == *c).count(), min);
        }
    }

    #[test]
    fn eps_w2_is_antisymmetric(
        a in prop::collection::vec(0.0f64..1.0, 1..20),
        b in prop::collection::vec(0.0f64..1.0, 1..20),
    ) {
        let s = eps_w2(&a, &b, 500) + eps_w2(&b, &a, 500);
        prop_assert!((s - 1.0).abs() < 1e-9, "{}", s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Zero padding of any width leaves a sample's logits unchanged.
    #[test]
    fn padding_is_inert(len in 3usize..24, extra in 1usize..12, seed in any::<u64>()) {
        let bundle: ModelBundle<f64> = ModelBundle::<f32>::build(ArchitectureSpec::tiny(), &[DomainDescriptor::new("d", 3)], seed % 1000)
            .unwrap()
            .convert();
        let mels = 64;
        let value = |i: usize| ((i as f64) * 0.37 + seed as f64 % 7.0).sin();
        let tight = Tensor::from_fn(vec![1, 1, mels, len], |i| value((i / len) * 1000 + i % len));
        let width = len + extra;
        let padded = Tensor::from_fn(vec![1, 1, mels, width], |i| {
            let (m, t) = (i / width, i % width);
            if t < len { value(m * 1000 + t) } else { 0.0 }
        });
        let a = bundle.forward("d", &tight, &[len]).unwrap();
        let b = bundle.forward("d", &padded, &[len]).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }
}
