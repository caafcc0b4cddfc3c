//! Discriminatory-instance search for unstructured inputs in `[0, 1]^d`.
//!
//! Sensitive attributes are not explicit coordinates here, so they are
//! changed indirectly: a classifier head trained for the attribute on top
//! of the detector's frozen feature layers is attacked with iterated FGSM
//! steps until its prediction flips. The resulting perturbation is the
//! sensitive flip; the search then perturbs the shared base image to make
//! the detector disagree across the flip.

use crate::data::{value_key, Instance, InstancePair};
use crate::generate::{
    combine_masks, expired, fingerprint, pair_gradients, refresh_mask, seed_rng, GenerateError, IdiRecord, IdiSet,
    Phase, Provenance,
};
use crate::interpret::BiasProfile;
use crate::nn::{accuracy, train, weight_hash, Activation, ClassCrossEntropy, LayerSpec, Network, NnError, TrainConfig};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneralizeError {
    #[error("frozen feature layers changed during head training")]
    FrozenPrefixChanged,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for HeadConfig {
    fn default() -> Self {
        Self { hidden: vec![16], train: TrainConfig { epochs: 30, batch_size: 32, ..TrainConfig::default() } }
    }
}

/// Sensitive-attribute classifier: the detector's first `frozen_len`
/// layers followed by a separately trained head.
#[derive(Debug, Clone)]
pub struct AttrClassifier {
    pub network: Network,
    pub frozen_len: usize,
    pub prefix_hash: String,
    pub accuracy: f64,
}

impl AttrClassifier {
    pub fn predict(&self, x: &[f64]) -> Result<usize, NnError> {
        self.network.predict(x)
    }

    pub fn head(&self) -> Network {
        let layers = self.network.layers()[self.frozen_len..].to_vec();
        Network::from_layers(self.network.layers()[self.frozen_len - 1].width, layers).expect("valid head")
    }
}

/// Trains a binary attribute head on the outputs of `base`'s first
/// `prefix_len` layers. Only head weights are trained.
pub fn build_attr_head(
    base: &Network,
    prefix_len: usize,
    inputs: &[Vec<f64>],
    attr_labels: &[usize],
    cfg: &HeadConfig,
) -> Result<AttrClassifier, GeneralizeError> {
    if inputs.is_empty() || inputs.len() != attr_labels.len() {
        return Err(GeneralizeError::Invalid("need one attribute label per input".into()));
    }
    if attr_labels.iter().any(|&y| y > 1) {
        return Err(GeneralizeError::Invalid("attribute labels must be binary".into()));
    }
    let prefix = base.prefix(prefix_len)?;
    let before = weight_hash(&base.layers()[..prefix_len]);
    let features: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| prefix.output(x))
        .collect::<Result<_, _>>()?;
    let mut specs: Vec<LayerSpec> = cfg.hidden.iter().map(|&w| LayerSpec::relu(w)).collect();
    specs.push(LayerSpec::new(2, Activation::Softmax));
    let head = Network::new(prefix.output_width(), &specs, cfg.train.rng_seed)?;
    let head = train(&head, &features, attr_labels, &cfg.train)?.network;
    let network = prefix.stack(&head)?;
    let prefix_hash = weight_hash(&network.layers()[..prefix_len]);
    if prefix_hash != before {
        return Err(GeneralizeError::FrozenPrefixChanged);
    }
    let accuracy = accuracy(&network, inputs, attr_labels)?;
    log::info!("attribute head accuracy {accuracy:.4}");
    Ok(AttrClassifier { network, frozen_len: prefix_len, prefix_hash, accuracy })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipResult {
    pub delta: Vec<f64>,
    pub steps: usize,
    pub flipped: bool,
    pub l2: f64,
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Repeats `x ← clip(x + ε·sign(∇ CE(x, y0)))` until the classifier's
/// prediction leaves its original label `y0` or `max_steps` is spent.
pub fn fgsm_flip(clf: &Network, x: &[f64], epsilon: f64, max_steps: usize) -> Result<FlipResult, NnError> {
    let original = clf.predict(x)?;
    let mut cur = x.to_vec();
    let mut steps = 0;
    let mut flipped = false;
    if epsilon > 0.0 {
        let objective = ClassCrossEntropy { class: original };
        while steps < max_steps {
            let grad = clf.input_gradient(&cur, &objective)?;
            for (c, g) in cur.iter_mut().zip(&grad) {
                *c = (*c + epsilon * crate::generate::sign(*g)).clamp(0.0, 1.0);
            }
            steps += 1;
            if clf.predict(&cur)? != original {
                flipped = true;
                break;
            }
        }
    }
    let delta: Vec<f64> = cur.iter().zip(x).map(|(c, o)| c - o).collect();
    let l2 = l2_norm(&delta);
    Ok(FlipResult { delta, steps, flipped, l2 })
}

/// Pairs `(x, x + Δ)` for every image whose attribute prediction could be
/// flipped.
pub fn flip_pairs(
    clf: &AttrClassifier,
    images: &[Vec<f64>],
    epsilon: f64,
    max_steps: usize,
) -> Result<Vec<InstancePair>, NnError> {
    let results: Vec<Option<InstancePair>> = images
        .par_iter()
        .map(|x| {
            let f = fgsm_flip(&clf.network, x, epsilon, max_steps)?;
            Ok(f.flipped.then(|| InstancePair {
                a: Instance::new(x.clone()),
                b: Instance::new(x.iter().zip(&f.delta).map(|(a, d)| a + d).collect()),
            }))
        })
        .collect::<Result<_, NnError>>()?;
    Ok(results.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImageGenConfig {
    pub max_iter: usize,
    pub step_size: f64,
    pub momentum: f64,
    pub refresh: usize,
    pub random_fraction: f64,
    pub epsilon: f64,
    pub flip_steps: usize,
    pub rng_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_budget_secs: Option<f64>,
}

impl Default for ImageGenConfig {
    fn default() -> Self {
        Self {
            max_iter: 40,
            step_size: 0.15,
            momentum: 0.1,
            refresh: 10,
            random_fraction: 0.05,
            epsilon: 0.05,
            flip_steps: 10,
            rng_seed: 0,
            time_budget_secs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageIdi {
    pub image: usize,
    pub iteration: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub delta_bias: Vec<f64>,
    pub delta_senatt: Vec<f64>,
    pub delta_bias_l2: f64,
    pub delta_senatt_l2: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ImageRun {
    pub idis: Vec<ImageIdi>,
    pub generated: usize,
    pub timed_out: bool,
}

impl ImageRun {
    /// The run as generic pair records, deduplicated on the first member.
    pub fn idi_set(&self) -> IdiSet {
        let mut set = IdiSet::new();
        for i in &self.idis {
            set.insert(IdiRecord {
                pair: InstancePair { a: Instance::new(i.a.clone()), b: Instance::new(i.b.clone()) },
                provenance: Provenance { phase: Phase::Image, seed: i.image, iteration: i.iteration },
            });
        }
        set
    }
}

#[derive(Default)]
struct ImageOutcome {
    found: Option<ImageIdi>,
    visited: Vec<u64>,
    timed_out: bool,
}

fn clamp_unit(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.clamp(0.0, 1.0));
}

/// Global search on images: no clustering (every image is a seed), raw
/// momentum direction instead of its sign, and the sensitive flip
/// re-derived by FGSM at every iteration.
pub fn image_global_generate(
    detector: &Network,
    clf: &AttrClassifier,
    images: &[Vec<f64>],
    profile: &BiasProfile,
    cfg: &ImageGenConfig,
) -> Result<ImageRun, GeneralizeError> {
    let layer = profile.most_biased_layer;
    if layer >= detector.hidden_count()
        || profile.positions.len() != detector.layers()[layer].width
        || !profile.positions.iter().any(|&p| p)
    {
        return Err(GenerateError::NoBiasProfile("profile does not match the detector".into()).into());
    }
    if images.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(GeneralizeError::Invalid("image values must lie in [0, 1]".into()));
    }
    if cfg.refresh == 0 || !(cfg.step_size > 0.0) {
        return Err(GeneralizeError::Invalid("refresh and step size must be positive".into()));
    }
    let deadline = cfg.time_budget_secs.map(|s| Instant::now() + Duration::from_secs_f64(s));
    let outcomes: Vec<ImageOutcome> = images
        .par_iter()
        .enumerate()
        .map(|(index, x0)| image_seed(detector, clf, profile, cfg, index, x0, deadline))
        .collect::<Result<_, NnError>>()?;
    let mut run = ImageRun::default();
    let mut visited = HashSet::new();
    let mut keys = HashSet::new();
    for o in outcomes {
        run.timed_out |= o.timed_out;
        visited.extend(o.visited);
        if let Some(idi) = o.found {
            if keys.insert(value_key(&idi.a)) {
                run.idis.push(idi);
            }
        }
    }
    run.generated = visited.len();
    Ok(run)
}

fn image_seed(
    detector: &Network,
    clf: &AttrClassifier,
    profile: &BiasProfile,
    cfg: &ImageGenConfig,
    index: usize,
    x0: &[f64],
    deadline: Option<Instant>,
) -> Result<ImageOutcome, NnError> {
    let mut out = ImageOutcome::default();
    if expired(deadline) {
        out.timed_out = true;
        return Ok(out);
    }
    let mut rng = seed_rng(cfg.rng_seed, 4, index);
    let layer = profile.most_biased_layer;
    let width = profile.positions.len();
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; dim];
    let mut g_flip = vec![0.0; dim];
    let mut mask = profile.positions.clone();
    for t in 0..=cfg.max_iter {
        if t > 0 && expired(deadline) {
            out.timed_out = true;
            break;
        }
        if t % cfg.refresh == 0 {
            mask = combine_masks(&profile.positions, &refresh_mask(width, cfg.random_fraction, &mut rng));
        }
        out.visited.push(fingerprint(&x));
        let flip = fgsm_flip(&clf.network, &x, cfg.epsilon, cfg.flip_steps)?;
        let x_flip: Vec<f64> = x.iter().zip(&flip.delta).map(|(a, d)| a + d).collect();
        if flip.flipped && detector.predict(&x)? != detector.predict(&x_flip)? {
            let delta_bias: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
            out.found = Some(ImageIdi {
                image: index,
                iteration: t,
                delta_bias_l2: l2_norm(&delta_bias),
                delta_senatt_l2: flip.l2,
                a: x.clone(),
                b: x_flip,
                delta_bias,
                delta_senatt: flip.delta,
            });
            break;
        }
        if t == cfg.max_iter {
            break;
        }
        let (gx, gf) = pair_gradients(detector, layer, &mask, &x, &x_flip)?;
        for i in 0..dim {
            g[i] = cfg.momentum * g[i] + gx[i];
            g_flip[i] = cfg.momentum * g_flip[i] + gf[i];
            x[i] += (g[i] + g_flip[i]) * cfg.step_size;
        }
        clamp_unit(&mut x);
    }
    Ok(out)
}

/// Comparison search for images: each step adds `step_size · u` with `u`
/// uniform in `[-1, 1]^d`; the detection test is the same as above.
pub fn random_image_baseline(
    detector: &Network,
    clf: &AttrClassifier,
    images: &[Vec<f64>],
    cfg: &ImageGenConfig,
) -> Result<ImageRun, GeneralizeError> {
    let outcomes: Vec<ImageOutcome> = images
        .par_iter()
        .enumerate()
        .map(|(index, x0)| -> Result<ImageOutcome, NnError> {
            let mut out = ImageOutcome::default();
            let mut rng = seed_rng(cfg.rng_seed, 5, index);
            let mut x = x0.clone();
            for t in 0..=cfg.max_iter {
                out.visited.push(fingerprint(&x));
                let flip = fgsm_flip(&clf.network, &x, cfg.epsilon, cfg.flip_steps)?;
                let x_flip: Vec<f64> = x.iter().zip(&flip.delta).map(|(a, d)| a + d).collect();
                if flip.flipped && detector.predict(&x)? != detector.predict(&x_flip)? {
                    let delta_bias: Vec<f64> = x.iter().zip(x0).map(|(a, b)| a - b).collect();
                    out.found = Some(ImageIdi {
                        image: index,
                        iteration: t,
                        delta_bias_l2: l2_norm(&delta_bias),
                        delta_senatt_l2: flip.l2,
                        a: x.clone(),
                        b: x_flip,
                        delta_bias,
                        delta_senatt: flip.delta,
                    });
                    break;
                }
                for v in x.iter_mut() {
                    *v += cfg.step_size * rng.gen_range(-1.0..=1.0);
                }
                clamp_unit(&mut x);
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    let mut run = ImageRun::default();
    let mut visited = HashSet::new();
    for o in outcomes {
        visited.extend(o.visited);
        run.idis.extend(o.found);
    }
    run.generated = visited.len();
    Ok(run)
}
