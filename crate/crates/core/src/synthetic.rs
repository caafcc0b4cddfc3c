//! Seeded synthetic tasks with a planted dependence on a sensitive
//! attribute, for demos and tests.

use crate::data::{Attribute, AttributeSchema, Instance, InstancePair, LabelSpec, TabularDataset};
use crate::generalize::{build_attr_head, AttrClassifier, HeadConfig};
use crate::interpret::{bias_profile, flip_pairs, BiasProfile, DEFAULT_STEP_INTERVAL};
use crate::nn::{train, Activation, LayerSpec, Network, TrainConfig};
use rand::{Rng, SeedableRng};
use std::error::Error;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Hidden widths of the reference fully connected census classifier.
pub const LFC_HIDDEN: [usize; 5] = [64, 32, 16, 8, 4];

/// Thirteen integer-coded census-style attributes; `sex` is sensitive.
pub fn census_schema() -> AttributeSchema {
    let a = |name: &str, min: f64, max: f64| Attribute::new(name, min, max, false);
    AttributeSchema::new(
        vec![
            a("age", 1.0, 9.0),
            a("workclass", 0.0, 6.0),
            a("education", 0.0, 15.0),
            a("marital_status", 0.0, 6.0),
            a("occupation", 0.0, 13.0),
            a("relationship", 0.0, 5.0),
            a("race", 0.0, 4.0),
            Attribute::new("sex", 0.0, 1.0, true),
            a("capital_gain", 0.0, 19.0),
            a("capital_loss", 0.0, 19.0),
            a("hours_per_week", 1.0, 9.0),
            a("native_country", 0.0, 9.0),
            a("education_years", 1.0, 16.0),
        ],
        Some(LabelSpec { name: "income".into(), classes: 2 }),
    )
    .expect("static schema is valid")
}

/// Census-style data whose label depends on `sex` with weight
/// `bias` (in units of the noise standard deviation).
pub fn census_dataset(n: usize, bias: f64, seed: u64) -> TabularDataset {
    let schema = census_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("valid normal");
    // Fixed per-code offsets for the categorical attributes.
    let mut table_rng = ChaCha8Rng::seed_from_u64(0x7ab1e);
    let mut offsets = |k: usize| -> Vec<f64> { (0..k).map(|_| table_rng.gen_range(-0.6..0.6)).collect() };
    let workclass = offsets(7);
    let marital = offsets(7);
    let occupation = offsets(14);
    let relationship = offsets(6);

    let mut instances = Vec::with_capacity(n);
    for _ in 0..n {
        let mut coded = |lo: i64, hi: i64, centre: f64, spread: f64| -> f64 {
            let v: f64 = centre + spread * noise.sample(&mut rng);
            v.round().clamp(lo as f64, hi as f64)
        };
        let age = coded(1, 9, 4.5, 2.0);
        let edu_years = coded(1, 16, 9.5, 3.0);
        let hours = coded(1, 9, 5.0, 1.8);
        let education = (edu_years - 1.0).min(15.0);
        let mut uniform = |hi: i64| rng.gen_range(0..=hi) as f64;
        let wc = uniform(6);
        let ms = uniform(6);
        let occ = uniform(13);
        let rel = uniform(5);
        let race = uniform(4);
        let native = uniform(9);
        let sex = uniform(1);
        let gain = if rng.gen_bool(0.15) { rng.gen_range(1..=19) as f64 } else { 0.0 };
        let loss = if rng.gen_bool(0.08) { rng.gen_range(1..=19) as f64 } else { 0.0 };

        let score = 0.45 * (edu_years - 9.5) / 3.0
            + 0.55 * (age - 4.5) / 2.0
            + 0.35 * (hours - 5.0) / 1.8
            + 0.08 * gain
            - 0.04 * loss
            + workclass[wc as usize]
            + marital[ms as usize]
            + occupation[occ as usize]
            + relationship[rel as usize]
            + bias * (sex - 0.5);
        let y = usize::from(score + 0.5 * noise.sample(&mut rng) > 0.3);
        let values = vec![age, wc, education, ms, occ, rel, race, sex, gain, loss, hours, native, edu_years];
        instances.push(Instance::labeled(values, y));
    }
    TabularDataset::new(schema, instances)
}

/// Side length of the toy images.
pub const IMAGE_SIDE: usize = 8;

#[derive(Debug, Clone)]
pub struct ToyImages {
    /// Flattened row-major pixels in `[0, 1]`.
    pub images: Vec<Vec<f64>>,
    /// 1 = face.
    pub faces: Vec<usize>,
    /// Sensitive attribute carried by the top two rows.
    pub attrs: Vec<usize>,
}

/// 8×8 "face / non-face" images. Faces have two bright eyes and a mouth
/// of random strength; the top two rows encode a binary attribute, which
/// co-occurs with faces far more often than with non-faces so a detector
/// trained on this data leans on it.
pub fn toy_images(n: usize, seed: u64) -> ToyImages {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ToyImages { images: Vec::with_capacity(n), faces: Vec::new(), attrs: Vec::new() };
    for _ in 0..n {
        let face = rng.gen_bool(0.5);
        let attr = rng.gen_bool(if face { 0.8 } else { 0.2 });
        let mut img: Vec<f64> = (0..IMAGE_SIDE * IMAGE_SIDE).map(|_| rng.gen_range(0.0..0.35)).collect();
        let px = |r: usize, c: usize| r * IMAGE_SIDE + c;
        for c in 0..IMAGE_SIDE {
            for r in 0..2 {
                img[px(r, c)] = if attr { rng.gen_range(0.55..0.95) } else { rng.gen_range(0.05..0.4) };
            }
        }
        if face {
            let s = rng.gen_range(0.25..0.65);
            for &(r, c) in &[(3, 2), (3, 5), (6, 2), (6, 3), (6, 4), (6, 5)] {
                img[px(r, c)] = (img[px(r, c)] + s).min(1.0);
            }
        } else if rng.gen_bool(0.5) {
            // Distractor blob.
            let r = rng.gen_range(2..7);
            let c = rng.gen_range(0..7);
            for (dr, dc) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                img[px(r + dr, c + dc)] = (img[px(r + dr, c + dc)] + 0.3).min(1.0);
            }
        }
        out.images.push(img);
        out.faces.push(usize::from(face));
        out.attrs.push(usize::from(attr));
    }
    out
}

type BoxError = Box<dyn Error + Send + Sync>;

/// Planted-bias strength used by the reference census model.
pub const REFERENCE_BIAS: f64 = 2.0;

/// A trained census classifier with its interpretation inputs.
#[derive(Debug, Clone)]
pub struct BiasedCensusModel {
    pub schema: AttributeSchema,
    pub train: TabularDataset,
    pub test: TabularDataset,
    pub net: Network,
    /// Flip pairs of the first 1,000 training instances.
    pub pairs: Vec<InstancePair>,
    pub profile: BiasProfile,
}

/// 8,000 census rows at [`REFERENCE_BIAS`], split by `seed`, fitted by the
/// reference classifier for 30 epochs. A training that collapses to a
/// constant prediction (dead ReLU layers) is retried from a fresh init.
pub fn biased_census_model(seed: u64) -> Result<BiasedCensusModel, BoxError> {
    let ds = census_dataset(8000, REFERENCE_BIAS, seed);
    let schema = ds.schema.clone();
    let split = ds.split(seed);
    let mut specs: Vec<LayerSpec> = LFC_HIDDEN.iter().map(|&w| LayerSpec::relu(w)).collect();
    specs.push(LayerSpec::new(2, Activation::Softmax));
    let xs = split.train.inputs();
    let ys = split.train.labels()?;
    let cfg = TrainConfig { epochs: 30, rng_seed: seed, ..TrainConfig::default() };
    let mut net = None;
    for attempt in 0..10u64 {
        let init = Network::new(schema.len(), &specs, seed + 1000 * attempt)?;
        let report = train(&init, &xs, &ys, &cfg)?;
        if report.train_accuracy > 0.7 {
            net = Some(report.network);
            break;
        }
    }
    let net = net.ok_or("training collapsed on every initialisation")?;
    let instances: Vec<Instance> =
        split.train.instances.iter().take(1000).map(|i| Instance::new(i.values.clone())).collect();
    let pairs = flip_pairs(&instances, &schema);
    let profile = bias_profile(&net, &pairs, DEFAULT_STEP_INTERVAL)?;
    Ok(BiasedCensusModel { schema, train: split.train, test: split.test, net, pairs, profile })
}

/// Face detector on [`toy_images`] with an attribute head on its first
/// layer and a bias profile from FGSM flip pairs.
#[derive(Debug, Clone)]
pub struct ToyImageTask {
    pub train: ToyImages,
    pub test: ToyImages,
    pub detector: Network,
    pub classifier: AttrClassifier,
    pub profile: BiasProfile,
}

/// FGSM budget used to build the task's flip pairs.
pub const TOY_EPSILON: f64 = 0.05;
pub const TOY_FLIP_STEPS: usize = 10;

pub fn toy_image_task(seed: u64) -> Result<ToyImageTask, BoxError> {
    let train_set = toy_images(2000, seed);
    let test = toy_images(500, seed + 100);
    let specs = [LayerSpec::relu(32), LayerSpec::relu(16), LayerSpec::new(2, Activation::Softmax)];
    let init = Network::new(IMAGE_SIDE * IMAGE_SIDE, &specs, seed)?;
    let tc = TrainConfig { epochs: 30, rng_seed: seed, ..TrainConfig::default() };
    let detector = train(&init, &train_set.images, &train_set.faces, &tc)?.network;
    let hc = HeadConfig { train: TrainConfig { epochs: 30, batch_size: 32, rng_seed: seed, ..TrainConfig::default() }, ..HeadConfig::default() };
    let classifier = build_attr_head(&detector, 1, &train_set.images, &train_set.attrs, &hc)?;
    let pairs = crate::generalize::flip_pairs(&classifier, &train_set.images[..300], TOY_EPSILON, TOY_FLIP_STEPS)?;
    let profile = bias_profile(&detector, &pairs, DEFAULT_STEP_INTERVAL)?;
    Ok(ToyImageTask { train: train_set, test, detector, classifier, profile })
}
