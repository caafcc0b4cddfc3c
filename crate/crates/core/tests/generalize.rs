mod common;

use fairtest::generalize::*;
use fairtest::interpret::DEFAULT_STEP_INTERVAL;
use fairtest::nn::{Activation, Dense, LayerSpec, Network, TrainConfig};
use fairtest::synthetic::{toy_image_task, toy_images, ToyImageTask, IMAGE_SIDE, TOY_EPSILON, TOY_FLIP_STEPS};
use fairtest::BiasProfile;
use std::sync::OnceLock;

const D: usize = IMAGE_SIDE * IMAGE_SIDE;

fn task() -> &'static ToyImageTask {
    static TASK: OnceLock<ToyImageTask> = OnceLock::new();
    TASK.get_or_init(|| toy_image_task(1).unwrap())
}

#[test]
fn toy_images_are_in_unit_range() {
    let t = toy_images(300, 4);
    assert_eq!(t.images.len(), 300);
    assert!(t.images.iter().all(|x| x.len() == D && x.iter().all(|v| (0.0..=1.0).contains(v))));
    let faces = t.faces.iter().sum::<usize>();
    assert!(faces > 100 && faces < 200);
}

#[test]
fn head_training_leaves_prefix_untouched() {
    let t = task();
    assert_eq!(t.classifier.frozen_len, 1);
    assert_eq!(t.classifier.prefix_hash, t.detector.prefix(1).unwrap().weight_hash());
    assert_eq!(t.classifier.network.layers()[0], t.detector.layers()[0]);
    assert!(t.classifier.accuracy >= 0.9, "{}", t.classifier.accuracy);
}

#[test]
fn constant_attribute_labels_are_learned_trivially() {
    let t = task();
    let xs = &t.train.images[..200];
    let cfg = HeadConfig { train: TrainConfig { epochs: 5, ..TrainConfig::default() }, ..HeadConfig::default() };
    let clf = build_attr_head(&t.detector, 1, xs, &vec![1; xs.len()], &cfg).unwrap();
    assert_eq!(clf.accuracy, 1.0);
    assert!(build_attr_head(&t.detector, 1, xs, &vec![2; xs.len()], &cfg).is_err());
}

#[test]
fn threshold_attribute_head_is_accurate() {
    // Attribute = top-left pixel above 0.5, on fresh toy images.
    let t = task();
    let xs = toy_images(1500, 6).images;
    let ys: Vec<usize> = xs.iter().map(|x| usize::from(x[0] > 0.5)).collect();
    let cfg = HeadConfig { hidden: vec![16], train: TrainConfig { epochs: 30, rng_seed: 2, ..TrainConfig::default() } };
    let clf = build_attr_head(&t.detector, 1, &xs, &ys, &cfg).unwrap();
    assert!(clf.accuracy >= 0.9, "{}", clf.accuracy);
}

#[test]
fn fgsm_flips_most_test_images() {
    let t = task();
    let mut flipped = 0;
    for x in &t.test.images[..200] {
        let f = fgsm_flip(&t.classifier.network, x, TOY_EPSILON, TOY_FLIP_STEPS).unwrap();
        assert!(f.steps <= TOY_FLIP_STEPS);
        for (v, d) in x.iter().zip(&f.delta) {
            let y = v + d;
            assert!((0.0..=1.0).contains(&y));
            assert!(d.abs() <= TOY_EPSILON * f.steps as f64 + 1e-12);
        }
        if f.flipped {
            let y: Vec<f64> = x.iter().zip(&f.delta).map(|(a, b)| a + b).collect();
            assert_ne!(t.classifier.predict(&y).unwrap(), t.classifier.predict(x).unwrap());
            flipped += 1;
        }
    }
    assert!(flipped >= 160, "{flipped}/200");
}

#[test]
fn fgsm_on_an_input_blind_classifier_never_flips() {
    let blind = Network::zeros(D, &[LayerSpec::new(2, Activation::Softmax)]).unwrap();
    let x = vec![0.5; D];
    let f = fgsm_flip(&blind, &x, 0.05, 10).unwrap();
    assert!(!f.flipped);
    assert_eq!(f.steps, 10);
    assert!(f.delta.iter().all(|d| d.abs() <= 0.5 + 1e-12));
    let zero = fgsm_flip(&t_net(), &x, 0.0, 10).unwrap();
    assert!(zero.delta.iter().all(|&d| d == 0.0) && !zero.flipped);
}

fn t_net() -> Network {
    task().classifier.network.clone()
}

#[test]
fn image_search_pairs_differ_by_the_flip_only() {
    let t = task();
    let cfg = ImageGenConfig { rng_seed: 1, ..ImageGenConfig::default() };
    let run = image_global_generate(&t.detector, &t.classifier, &t.test.images[..100], &t.profile, &cfg).unwrap();
    assert!(!run.idis.is_empty());
    for idi in &run.idis {
        let x0 = &t.test.images[idi.image];
        for i in 0..D {
            assert!((idi.b[i] - idi.a[i] - idi.delta_senatt[i]).abs() <= 1e-9);
            assert!((idi.a[i] - x0[i] - idi.delta_bias[i]).abs() <= 1e-9);
            assert!((0.0..=1.0).contains(&idi.a[i]) && (0.0..=1.0).contains(&idi.b[i]));
        }
        assert_ne!(t.detector.predict(&idi.a).unwrap(), t.detector.predict(&idi.b).unwrap());
        assert_ne!(t.classifier.predict(&idi.a).unwrap(), t.classifier.predict(&idi.b).unwrap());
    }
    assert_eq!(run.idi_set().len(), run.idis.len());
    let again = image_global_generate(&t.detector, &t.classifier, &t.test.images[..100], &t.profile, &cfg).unwrap();
    assert_eq!(run.idis, again.idis);
    let rb = random_image_baseline(&t.detector, &t.classifier, &t.test.images[..100], &cfg).unwrap();
    assert!(rb.idis.iter().all(|i| i.a.iter().all(|v| (0.0..=1.0).contains(v))));
}

/// One hidden neuron; the output reads it through `w`.
fn detector_reading(pixel_weights: &[(usize, f64)], w: f64) -> Network {
    let mut h = Dense::zeros(D, LayerSpec::relu(1));
    for &(i, v) in pixel_weights {
        h.weights[i] = v;
    }
    let mut out = Dense::zeros(1, LayerSpec::new(2, Activation::Softmax));
    out.weights = vec![-w, w];
    out.biases = vec![0.0, 0.0];
    Network::from_layers(D, vec![h, out]).unwrap()
}

fn single_neuron_profile() -> BiasProfile {
    BiasProfile { per_layer: Vec::new(), most_biased_layer: 0, threshold: 0.5, positions: vec![true] }
}

#[test]
fn degenerate_detectors() {
    let t = task();
    let images = &t.test.images[..40];
    let cfg = ImageGenConfig { max_iter: 5, rng_seed: 1, ..ImageGenConfig::default() };
    let blind = detector_reading(&[], 1.0);
    let run = image_global_generate(&blind, &t.classifier, images, &single_neuron_profile(), &cfg).unwrap();
    assert!(run.idis.is_empty());

    // A detector that reads only the first-layer feature the attribute head
    // relies on most: its sign tracks the head's decision closely.
    let bias = t.detector.layers()[0].biases.clone();
    let head = t.classifier.head();
    let w = &head.layers()[0];
    let out = &head.layers()[1];
    // Net contribution of each first-layer feature to the head's logit gap.
    let score: Vec<f64> = (0..w.inputs)
        .map(|j| (0..w.width).map(|k| (out.weight(1, k) - out.weight(0, k)) * w.weight(k, j)).sum())
        .collect();
    let j = (0..score.len()).max_by(|&a, &b| score[a].abs().total_cmp(&score[b].abs())).unwrap();
    let l0 = &t.detector.layers()[0];
    let mut h = Dense::zeros(D, LayerSpec::relu(1));
    for i in 0..D {
        h.weights[i] = l0.weight(j, i);
    }
    h.biases = vec![bias[j]];
    let acts: Vec<f64> = t.train.images.iter().map(|x| {
        let z: f64 = (0..D).map(|i| l0.weight(j, i) * x[i]).sum::<f64>() + bias[j];
        z.max(0.0)
    }).collect();
    let mut sorted = acts.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut o = Dense::zeros(1, LayerSpec::new(2, Activation::Softmax));
    o.weights = vec![-100.0, 100.0];
    o.biases = vec![100.0 * median, -100.0 * median];
    let reader = Network::from_layers(D, vec![h, o]).unwrap();
    let run = image_global_generate(&reader, &t.classifier, images, &single_neuron_profile(), &cfg).unwrap();
    assert!(!run.idis.is_empty());
}

#[test]
fn profile_matches_detector_and_rejects_mismatch() {
    let t = task();
    assert_eq!(t.profile.per_layer.len(), 2);
    assert!(t.profile.biased_count() >= 1);
    let bad = BiasProfile { most_biased_layer: 5, ..t.profile.clone() };
    let cfg = ImageGenConfig::default();
    assert!(image_global_generate(&t.detector, &t.classifier, &t.test.images[..2], &bad, &cfg).is_err());
    let out_of_range = vec![vec![1.5; D]];
    assert!(image_global_generate(&t.detector, &t.classifier, &out_of_range, &t.profile, &cfg).is_err());
    let _ = DEFAULT_STEP_INTERVAL;
}
