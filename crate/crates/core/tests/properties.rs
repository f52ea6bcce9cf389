//! Cross-module invariants over random inputs.

use proptest::prelude::*;
use sflab_core::analysis::{cosine_similarity, detection_experiment, frequency_histogram};
use sflab_core::attacks::{attack, AttackConfig, AttackDomain};
use sflab_core::data::{split_indices, synthetic_dataset};
use sflab_core::models::{build_model, ModelSpec, Variant};
use sflab_core::spectral::{block_dct_forward, block_dct_inverse, FrequencyTensor, LEVEL_SHIFT};
use sflab_core::tensor::{AdamConfig, AdamState, ParamUpdate, Tape};
use sflab_core::{Rng, Tensor};

fn uniform(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
}

fn normal(shape: &[usize], seed: u64, scale: f32) -> Tensor {
    let mut rng = Rng::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| scale * rng.normal()).collect()).unwrap()
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn linf(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn attacks_stay_inside_both_balls(
        seed in 0u64..1_000,
        eps in 0.0f32..0.05,
        steps in 1usize..4,
        frequency in any::<bool>(),
    ) {
        let images = uniform(&[4, 3, 16, 16], seed);
        let labels: Vec<usize> = (0..4).map(|i| (i + seed as usize) % 3).collect();
        let model = build_model(&ModelSpec::new(Variant::C88, 3, 16, 16, seed)).unwrap();
        let domain = if frequency { AttackDomain::Frequency } else { AttackDomain::Pixel };
        let config = AttackConfig::new(domain, eps).with_steps(steps).with_eta(eps / 2.0);
        let batch = attack(&model, &images, &labels, &config).unwrap();
        prop_assert!(batch.adversarial.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let (a, o) = match domain {
            AttackDomain::Pixel => (batch.adversarial.clone(), images.clone()),
            AttackDomain::Frequency => (
                block_dct_forward(&batch.adversarial, LEVEL_SHIFT).unwrap().into_tensor(),
                block_dct_forward(&images, LEVEL_SHIFT).unwrap().into_tensor(),
            ),
        };
        for i in 0..4 {
            let d = linf(a.item(i), o.item(i));
            prop_assert!(d <= eps + 1e-6, "image {i}: {d} > {eps}");
        }
        for i in 0..4 {
            prop_assert_eq!(batch.success[i], batch.adversarial_predictions[i] != labels[i]);
        }
        let again = attack(&model, &images, &labels, &config).unwrap();
        prop_assert_eq!(&again.adversarial, &batch.adversarial);
    }
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn dct_round_trip_and_parseval(seed in any::<u64>()) {
        let images = uniform(&[2, 3, 16, 8], seed);
        let f = block_dct_forward(&images, LEVEL_SHIFT).unwrap();
        let back = block_dct_inverse(&f, LEVEL_SHIFT, false);
        prop_assert!(back.max_abs_diff(&images) <= 1e-5);
        let energy = |t: &[f32]| t.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>();
        let centred: Vec<f32> = images.data().iter().map(|v| v - LEVEL_SHIFT).collect();
        let (e_pix, e_freq) = (energy(&centred), energy(f.tensor().data()));
        prop_assert!((e_pix - e_freq).abs() <= 1e-4 * e_pix.max(1e-12));
    }

    #[test]
    fn histograms_partition_every_coefficient(seed in any::<u64>(), scale in 0.1f32..4.0) {
        let f = FrequencyTensor::new(normal(&[3, 192, 2, 2], seed, scale)).unwrap();
        let images = block_dct_inverse(&f, LEVEL_SHIFT, true);
        for h in frequency_histogram(&images).unwrap() {
            prop_assert!((h.bins.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
            prop_assert!(h.bins.iter().all(|&b| b >= 0.0));
        }
    }

    #[test]
    fn cosine_is_bounded(seed in any::<u64>(), len in 1usize..200) {
        let a = normal(&[len], seed, 1.0);
        let b = normal(&[len], seed ^ 0xabc, 3.0);
        let c = cosine_similarity(a.data(), b.data());
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!((cosine_similarity(a.data(), a.data()) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn cross_entropy_is_non_negative(seed in any::<u64>(), k in 2usize..8, scale in 0.0f32..50.0) {
        let logits = normal(&[5, k], seed, scale);
        let labels: Vec<usize> = (0..5).map(|i| (i * 7 + seed as usize) % k).collect();
        let mut tape = Tape::new();
        let l = tape.constant(logits);
        let loss = tape.softmax_xent(l, &labels).unwrap();
        let v = tape.value(loss).data()[0];
        prop_assert!(v >= 0.0 && v.is_finite(), "{v}");
    }

    #[test]
    fn splits_partition_and_repeat(n in 0usize..500, seed in any::<u64>(), a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let fractions = [1.0 - a - b, a, b];
        let parts = split_indices(n, fractions, seed);
        prop_assert_eq!(&parts, &split_indices(n, fractions, seed));
        let mut all: Vec<usize> = parts.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(parts[1].len(), (n as f64 * a).floor() as usize);
    }
}

proptest! {
    #![proptest_config(cases(8))]

    #[test]
    fn forward_gradients_and_adam_are_reproducible(seed in any::<u64>()) {
        let run = || {
            let data = synthetic_dataset(6, 8, 8, 3, 0.1, seed).unwrap();
            let model = build_model(&ModelSpec::new(Variant::Baseline, 3, 8, 8, seed)).unwrap();
            let mut tape = Tape::new();
            let x = tape.leaf(data.images.clone());
            let logits = model.logits(&data.images).unwrap();
            let w = tape.leaf(normal(&[3, 3, 8, 8], seed, 0.1));
            let y = tape.conv2d(x, w, 8, 0).unwrap();
            let y = tape.global_avg_pool(y).unwrap();
            let loss = tape.softmax_xent(y, &data.labels).unwrap();
            let grads = tape.backward(loss).unwrap();
            let mut param = tape.value(w).clone();
            let g = grads.wrt(w).unwrap().clone();
            let mut adam = AdamState::new(AdamConfig::default());
            for _ in 0..3 {
                adam.step(&mut [ParamUpdate { value: &mut param, grad: &g, frozen: None }]).unwrap();
            }
            (logits, grads.wrt(x).unwrap().clone(), param)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn detector_training_is_deterministic(seed in any::<u64>()) {
        let clean = frequency_histogram(&uniform(&[10, 3, 8, 8], seed)).unwrap();
        let noisy = frequency_histogram(&uniform(&[10, 3, 8, 8], seed ^ 1).map(|v| (v * 3.0).fract())).unwrap();
        let a = detection_experiment(&clean, &noisy, seed).unwrap();
        let b = detection_experiment(&clean, &noisy, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
