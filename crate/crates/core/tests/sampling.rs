use proptest::prelude::*;
use sdcert_core::registry::Options;
use sdcert_core::sampling::{accumulate, gen_adversarial, gen_constant, gen_random, generators, standard_batch, SeqDescriptor};

#[test]
fn constant_examples() {
    let s = gen_constant(0.1, 3).unwrap();
    assert_eq!(s.values, vec![0.1, 0.1, 0.1]);
    assert!(s.is_admissible());
    assert_eq!(gen_constant(1.0, 1).unwrap().values, vec![1.0]);
    assert_eq!(gen_constant(0.5, 4).unwrap().times(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    assert!(gen_constant(0.0, 3).is_err());
    assert!(gen_constant(0.1, 0).is_err());
}

#[test]
fn random_examples() {
    let a = gen_random(0.2, 500, 9, 0.01).unwrap();
    assert!(a.values.iter().all(|&t| t > 0.002 && t < 0.2));
    assert_eq!(a, gen_random(0.2, 500, 9, 0.01).unwrap());
    assert_ne!(a.values, gen_random(0.2, 500, 10, 0.01).unwrap().values);
}

#[test]
fn adversarial_examples() {
    let t = 2.0;
    let opts = Options::from([("big".into(), 0.9), ("small".into(), 0.1)]);
    let s = gen_adversarial("alternating", t, 4, &opts).unwrap();
    assert_eq!(s.values, vec![0.9 * t, 0.1 * t, 0.9 * t, 0.1 * t]);
    let opts = Options::from([("start".into(), 0.8), ("ratio".into(), 0.5)]);
    let s = gen_adversarial("front_loaded", t, 3, &opts).unwrap();
    assert_eq!(s.values, vec![0.8 * t, 0.4 * t, 0.2 * t]);
    let s = gen_adversarial("dwell", t, 5, &Options::new()).unwrap();
    assert!(s.values.iter().all(|&v| v >= 0.99 * t && v < t));
    let s = gen_adversarial("back_loaded", t, 80, &Options::new()).unwrap();
    assert!(s.is_admissible());
    assert!(s.values.windows(2).all(|w| w[1] >= w[0]));
    assert!(gen_adversarial("sawtooth", t, 3, &Options::new()).is_err());
}

#[test]
fn accumulate_examples() {
    assert_eq!(accumulate(&[]), vec![0.0]);
    assert_eq!(accumulate(&[0.2, 0.3]), vec![0.0, 0.2, 0.5]);
}

#[test]
fn batch_covers_every_kind() {
    let batch = standard_batch(0.3, 50, 3, 1).unwrap();
    let mut kinds: Vec<&str> = batch.iter().map(|s| s.descriptor.kind.as_str()).collect();
    kinds.dedup();
    assert_eq!(kinds.len(), generators().names().count());
    assert!(batch.iter().all(|s| s.is_admissible() && s.t_bar == 0.3));
}

#[test]
fn descriptor_json_regenerates_identically() {
    let s = SeqDescriptor::new("random", 0.7, 30).seed(4).generate().unwrap();
    let d: SeqDescriptor = serde_json::from_str(&serde_json::to_string(&s.descriptor).unwrap()).unwrap();
    assert_eq!(d.generate().unwrap(), s);
}

proptest! {
    #[test]
    fn every_kind_stays_in_bounds(t_bar in 1e-4f64..10.0, len in 1usize..300, seed: u64, k in 0usize..6) {
        let kind = generators().names().nth(k).unwrap();
        let s = SeqDescriptor::new(kind, t_bar, len).seed(seed).generate().unwrap();
        prop_assert!(s.is_admissible());
        prop_assert_eq!(s.len(), len);
    }

    #[test]
    fn accumulate_reproduces_increments(v in prop::collection::vec(1e-6f64..1.0, 0..100)) {
        let t = accumulate(&v);
        prop_assert_eq!(t[0], 0.0);
        prop_assert_eq!(t.len(), v.len() + 1);
        for (i, w) in t.windows(2).enumerate() {
            prop_assert!(w[1] > w[0]);
            prop_assert!(((w[1] - w[0]) - v[i]).abs() <= 1e-12 * w[1].max(1.0));
        }
    }
}
