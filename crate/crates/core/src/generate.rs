//! Discriminatory-instance search guided by biased neurons.
//!
//! Both phases maximise a dynamic loss over the most biased layer: a
//! cross-entropy between the layer's activations on an instance and on its
//! sensitive-attribute flip, restricted to the biased neurons plus a small
//! random set that is re-drawn at fixed intervals. The global phase walks
//! each clustered seed with sign-of-momentum steps until the pair becomes
//! discriminatory; the local phase perturbs the neighbourhood of each
//! global hit, preferring attributes with small gradient magnitude.

use crate::data::{clip_in_place, first_variant, flip_variants, value_key, AttributeSchema, Instance, InstancePair};
use crate::interpret::BiasProfile;
use crate::nn::{ActivationTrace, Network, NnError, Objective};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};
use std::time::{Duration, Instant};
use thiserror::Error;

/// Floor applied inside the logarithm; ReLU activations are often exactly 0.
pub const LOG_FLOOR: f64 = 1e-12;
/// Regulariser for the inverse gradient magnitudes in the local phase.
pub const INVERSE_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("no bias profile: {0}")]
    NoBiasProfile(String),
    #[error("local generation needs at least one seed pair")]
    EmptySeedSet,
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Search hyperparameters. Defaults follow the reference settings for
/// tabular data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub clusters: usize,
    pub num_seeds: usize,
    pub max_iter_global: usize,
    pub max_iter_local: usize,
    pub step_size_global: f64,
    pub step_size_local: f64,
    pub momentum_global: f64,
    pub momentum_local: f64,
    pub refresh_global: usize,
    pub refresh_local: usize,
    pub random_fraction: f64,
    pub rng_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time_budget_secs: Option<f64>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            clusters: 4,
            num_seeds: 1000,
            max_iter_global: 40,
            max_iter_local: 1000,
            step_size_global: 1.0,
            step_size_local: 1.0,
            momentum_global: 0.1,
            momentum_local: 0.05,
            refresh_global: 10,
            refresh_local: 50,
            random_fraction: 0.05,
            rng_seed: 0,
            time_budget_secs: None,
        }
    }
}

impl GenerationConfig {
    /// Hard limits are enforced; values outside the recommended ranges
    /// (momentum in (0.01, 0.20), refresh interval in (5, 100)) only warn.
    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |m: &str| Err(GenerateError::InvalidConfig(m.into()));
        if self.clusters == 0 {
            return bad("clusters must be at least 1");
        }
        if !(self.step_size_global > 0.0 && self.step_size_local > 0.0) {
            return bad("step sizes must be positive");
        }
        for mu in [self.momentum_global, self.momentum_local] {
            if !(0.0..1.0).contains(&mu) {
                return bad("momentum must lie in [0, 1)");
            }
            if !(mu > 0.01 && mu < 0.20) {
                log::warn!("momentum {mu} is outside the recommended range (0.01, 0.20)");
            }
        }
        for r in [self.refresh_global, self.refresh_local] {
            if r == 0 {
                return bad("refresh interval must be at least 1");
            }
            if !(r > 5 && r < 100) {
                log::warn!("refresh interval {r} is outside the recommended range (5, 100)");
            }
        }
        if !(self.random_fraction > 0.0 && self.random_fraction < 1.0) {
            return bad("random_fraction must lie in (0, 1)");
        }
        if let Some(t) = self.time_budget_secs {
            if !(t >= 0.0 && t.is_finite()) {
                return bad("time budget must be a non-negative number of seconds");
            }
        }
        Ok(())
    }

    pub(crate) fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_budget_secs.map(|s| start + Duration::from_secs_f64(s))
    }
}

/// `J = -Σ_k m_k · target_k · ln(max(a_k, 1e-12))` over one layer, where
/// `a` is that layer's activation and `m = p | r`.
pub struct DynamicLoss<'a> {
    pub layer: usize,
    pub mask: &'a [bool],
    pub target: &'a [f64],
}

impl Objective for DynamicLoss<'_> {
    fn value(&self, trace: &ActivationTrace) -> f64 {
        let a = trace.layer(self.layer);
        let mut j = 0.0;
        for k in 0..a.len() {
            if self.mask[k] {
                j -= self.target[k] * a[k].max(LOG_FLOOR).ln();
            }
        }
        j
    }

    fn accumulate_gradient(&self, trace: &ActivationTrace, grads: &mut [Vec<f64>]) {
        let a = trace.layer(self.layer);
        let g = &mut grads[self.layer];
        for k in 0..a.len() {
            if self.mask[k] && a[k] > LOG_FLOOR {
                g[k] -= self.target[k] / a[k];
            }
        }
    }
}

pub fn combine_masks(p: &[bool], r: &[bool]) -> Vec<bool> {
    p.iter().zip(r).map(|(a, b)| *a || *b).collect()
}

/// Dynamic loss of `x` against its first flip variant.
pub fn dynamic_loss(
    net: &Network,
    x: &[f64],
    layer: usize,
    p: &[bool],
    r: &[bool],
    schema: &AttributeSchema,
) -> Result<f64, NnError> {
    let partner = first_variant(x, schema);
    let target = net.forward(&partner)?.per_layer.swap_remove(layer);
    let mask = combine_masks(p, r);
    let trace = net.forward(x)?;
    Ok(DynamicLoss { layer, mask: &mask, target: &target }.value(&trace))
}

/// Boolean vector of length `len` with exactly `floor(len · fraction)`
/// uniformly placed `true` entries.
pub fn refresh_mask<R: Rng>(len: usize, fraction: f64, rng: &mut R) -> Vec<bool> {
    let count = ((len as f64 * fraction) + 1e-9).floor() as usize;
    let mut mask = vec![false; len];
    for i in sample(rng, len, count.min(len)).into_iter() {
        mask[i] = true;
    }
    mask
}

/// `-1`, `0` or `1`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Whether some flip variant of `x` gets a different label; returns the
/// first witnessing pair in enumeration order.
pub fn is_idi(net: &Network, x: &[f64], schema: &AttributeSchema) -> Result<Option<InstancePair>, NnError> {
    let label = net.predict(x)?;
    for v in flip_variants(&Instance::new(x.to_vec()), schema) {
        if net.predict(&v.values)? != label {
            return Ok(Some(InstancePair { a: Instance::new(x.to_vec()), b: v }));
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Global,
    Local,
    Baseline,
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub phase: Phase,
    pub seed: usize,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdiRecord {
    pub pair: InstancePair,
    pub provenance: Provenance,
}

/// Discriminatory pairs deduplicated on the first member's attribute
/// vector, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct IdiSet {
    records: Vec<IdiRecord>,
    keys: HashSet<Vec<u64>>,
}

impl IdiSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if a pair with the same first member is already held.
    pub fn insert(&mut self, record: IdiRecord) -> bool {
        if self.keys.insert(record.pair.a.key()) {
            self.records.push(record);
            true
        } else {
            false
        }
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = IdiRecord>) {
        for r in other {
            self.insert(r);
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IdiRecord] {
        &self.records
    }

    pub fn iter(&self) -> impl Iterator<Item = &IdiRecord> {
        self.records.iter()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &InstancePair> {
        self.records.iter().map(|r| &r.pair)
    }

    pub fn first_members(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.pair.a.values.clone()).collect()
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        self.keys.contains(&value_key(values))
    }
}

/// Keeps the first pair for every distinct first member.
pub fn dedup(records: impl IntoIterator<Item = IdiRecord>) -> IdiSet {
    let mut set = IdiSet::new();
    set.extend(records);
    set
}

/// Output of one generation phase.
#[derive(Debug, Clone, Default)]
pub struct GenerationRun {
    pub idis: IdiSet,
    /// Fingerprints of every distinct instance the search evaluated.
    visited: HashSet<u64>,
    pub seeds_processed: usize,
    pub seeds_skipped: usize,
    pub iterations: usize,
    pub timed_out: bool,
}

impl GenerationRun {
    /// Number of distinct instances evaluated.
    pub fn generated(&self) -> usize {
        self.visited.len()
    }

    /// Union of two runs; `other`'s pairs go after ours.
    pub fn merge(mut self, other: GenerationRun) -> GenerationRun {
        self.idis.extend(other.idis.records);
        self.visited.extend(other.visited);
        self.seeds_processed += other.seeds_processed;
        self.seeds_skipped += other.seeds_skipped;
        self.iterations += other.iterations;
        self.timed_out |= other.timed_out;
        self
    }

    pub(crate) fn absorb(&mut self, outcome: SeedOutcome) {
        if outcome.skipped {
            self.seeds_skipped += 1;
        } else if !outcome.never_started {
            self.seeds_processed += 1;
        }
        self.timed_out |= outcome.timed_out;
        self.iterations += outcome.iterations;
        self.visited.extend(outcome.visited);
        self.idis.extend(outcome.found);
    }
}

pub(crate) fn fingerprint(values: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    value_key(values).hash(&mut h);
    h.finish()
}

#[derive(Default)]
pub(crate) struct SeedOutcome {
    pub found: Vec<IdiRecord>,
    pub visited: Vec<u64>,
    pub iterations: usize,
    pub skipped: bool,
    pub timed_out: bool,
    pub never_started: bool,
}

pub(crate) fn expired(deadline: Option<Instant>) -> bool {
    deadline.is_some_and(|d| Instant::now() >= d)
}

pub(crate) fn seed_rng(base: u64, phase: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream((phase << 48) | index as u64);
    rng
}

/// Input gradients of the dynamic loss for both members of a pair, each
/// measured against the other member's activations.
pub(crate) fn pair_gradients(
    net: &Network,
    layer: usize,
    mask: &[bool],
    x: &[f64],
    x_flip: &[f64],
) -> Result<(Vec<f64>, Vec<f64>), NnError> {
    let target_flip = net.forward(x_flip)?.per_layer.swap_remove(layer);
    let target_x = net.forward(x)?.per_layer.swap_remove(layer);
    let gx = net.input_gradient(x, &DynamicLoss { layer, mask, target: &target_flip })?;
    let gf = net.input_gradient(x_flip, &DynamicLoss { layer, mask, target: &target_x })?;
    Ok((gx, gf))
}

fn check_profile(net: &Network, profile: &BiasProfile) -> Result<(), GenerateError> {
    let layer = profile.most_biased_layer;
    if layer >= net.hidden_count() {
        return Err(GenerateError::NoBiasProfile(format!("layer {layer} is not a hidden layer of this model")));
    }
    if profile.positions.len() != net.layers()[layer].width {
        return Err(GenerateError::NoBiasProfile("biased-neuron vector does not match layer width".into()));
    }
    if !profile.positions.iter().any(|&p| p) {
        return Err(GenerateError::NoBiasProfile("profile has no biased neurons".into()));
    }
    Ok(())
}

/// Global phase: walks each seed until it becomes discriminatory or the
/// iteration budget runs out. Seeds run in parallel; results merge in seed
/// order.
pub fn global_generate(
    net: &Network,
    schema: &AttributeSchema,
    seeds: &[Vec<f64>],
    profile: &BiasProfile,
    cfg: &GenerationConfig,
) -> Result<GenerationRun, GenerateError> {
    cfg.validate()?;
    check_profile(net, profile)?;
    let deadline = cfg.deadline(Instant::now());
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, s)| global_seed(net, schema, profile, cfg, i, s, deadline))
        .collect();
    let mut run = GenerationRun::default();
    for o in outcomes {
        run.absorb(o);
    }
    Ok(run)
}

fn global_seed(
    net: &Network,
    schema: &AttributeSchema,
    profile: &BiasProfile,
    cfg: &GenerationConfig,
    index: usize,
    seed: &[f64],
    deadline: Option<Instant>,
) -> SeedOutcome {
    let mut out = SeedOutcome::default();
    if expired(deadline) {
        out.timed_out = true;
        out.never_started = true;
        return out;
    }
    let mut rng = seed_rng(cfg.rng_seed, 1, index);
    let layer = profile.most_biased_layer;
    let width = profile.positions.len();
    let dim = seed.len();
    let mut x = seed.to_vec();
    clip_in_place(&mut x, schema);
    let mut g = vec![0.0; dim];
    let mut g_flip = vec![0.0; dim];
    let mut mask = profile.positions.clone();

    for t in 0..=cfg.max_iter_global {
        if t > 0 && expired(deadline) {
            out.timed_out = true;
            break;
        }
        if t % cfg.refresh_global == 0 {
            mask = combine_masks(&profile.positions, &refresh_mask(width, cfg.random_fraction, &mut rng));
        }
        out.visited.push(fingerprint(&x));
        out.iterations += 1;
        match is_idi(net, &x, schema) {
            Ok(Some(pair)) => {
                out.found.push(IdiRecord { pair, provenance: Provenance { phase: Phase::Global, seed: index, iteration: t } });
                break;
            }
            Ok(None) => {}
            Err(e) => {
                log::warn!("seed {index}: {e}; skipping");
                out.skipped = true;
                break;
            }
        }
        if t == cfg.max_iter_global {
            break;
        }
        let x_flip = first_variant(&x, schema);
        let (gx, gf) = match pair_gradients(net, layer, &mask, &x, &x_flip) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("seed {index}: {e}; skipping");
                out.skipped = true;
                break;
            }
        };
        for i in 0..dim {
            g[i] = cfg.momentum_global * g[i] + gx[i];
            g_flip[i] = cfg.momentum_global * g_flip[i] + gf[i];
        }
        for &i in schema.non_sensitive() {
            x[i] += sign(g[i] + g_flip[i]) * cfg.step_size_global;
        }
        clip_in_place(&mut x, schema);
    }
    out
}

/// Selection probabilities over the non-sensitive attributes:
/// `softmax(1 / (|v| + 1e-8))`, so smaller magnitudes get larger weight.
pub fn attribute_probabilities(v: &[f64], non_sensitive: &[usize]) -> Vec<f64> {
    let inv: Vec<f64> = non_sensitive.iter().map(|&i| 1.0 / (v[i].abs() + INVERSE_EPS)).collect();
    let max = inv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = inv.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// How the local phase picks attributes to perturb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttributeChoice {
    /// Gradient-derived probabilities.
    Gradient,
    /// Every non-sensitive attribute with probability `1 / |A_ns|`
    /// (ablation baseline).
    Uniform,
}

/// Local phase: searches the neighbourhood of every global pair and keeps
/// every discriminatory instance it meets.
pub fn local_generate(
    net: &Network,
    schema: &AttributeSchema,
    seeds: &IdiSet,
    profile: &BiasProfile,
    cfg: &GenerationConfig,
) -> Result<GenerationRun, GenerateError> {
    local_generate_with(net, schema, seeds, profile, cfg, AttributeChoice::Gradient)
}

pub fn local_generate_with(
    net: &Network,
    schema: &AttributeSchema,
    seeds: &IdiSet,
    profile: &BiasProfile,
    cfg: &GenerationConfig,
    choice: AttributeChoice,
) -> Result<GenerationRun, GenerateError> {
    if seeds.is_empty() {
        return Err(GenerateError::EmptySeedSet);
    }
    cfg.validate()?;
    check_profile(net, profile)?;
    let deadline = cfg.deadline(Instant::now());
    let outcomes: Vec<SeedOutcome> = seeds
        .records()
        .par_iter()
        .enumerate()
        .map(|(i, rec)| local_seed(net, schema, profile, cfg, i, &rec.pair, deadline, choice))
        .collect();
    let mut run = GenerationRun::default();
    for o in outcomes {
        run.absorb(o);
    }
    Ok(run)
}

#[allow(clippy::too_many_arguments)]
fn local_seed(
    net: &Network,
    schema: &AttributeSchema,
    profile: &BiasProfile,
    cfg: &GenerationConfig,
    index: usize,
    seed: &InstancePair,
    deadline: Option<Instant>,
    choice: AttributeChoice,
) -> SeedOutcome {
    let mut out = SeedOutcome::default();
    if expired(deadline) {
        out.timed_out = true;
        out.never_started = true;
        return out;
    }
    let mut rng = seed_rng(cfg.rng_seed, 2, index);
    let layer = profile.most_biased_layer;
    let width = profile.positions.len();
    let ns = schema.non_sensitive();
    let dim = seed.a.values.len();
    let mut x = seed.a.values.clone();
    let mut x_flip = seed.b.values.clone();
    let mut g = vec![0.0; dim];
    let mut g_flip = vec![0.0; dim];
    let mut mask = profile.positions.clone();
    let mut sum = vec![0.0; dim];

    for t in 0..cfg.max_iter_local {
        if t > 0 && expired(deadline) {
            out.timed_out = true;
            break;
        }
        if t % cfg.refresh_local == 0 {
            mask = combine_masks(&profile.positions, &refresh_mask(width, cfg.random_fraction, &mut rng));
        }
        let (gx, gf) = match pair_gradients(net, layer, &mask, &x, &x_flip) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("local seed {index}: {e}; skipping");
                out.skipped = true;
                break;
            }
        };
        for i in 0..dim {
            g[i] = cfg.momentum_local * g[i] + gx[i];
            g_flip[i] = cfg.momentum_local * g_flip[i] + gf[i];
            sum[i] = g[i] + g_flip[i];
        }
        let probs = match choice {
            AttributeChoice::Gradient => attribute_probabilities(&sum, ns),
            AttributeChoice::Uniform => vec![1.0 / ns.len() as f64; ns.len()],
        };
        for (&a, &p) in ns.iter().zip(&probs) {
            // Uniform draw in (0, 1].
            let draw = 1.0 - rng.gen::<f64>();
            if draw < p {
                x[a] += sign(sum[a]) * cfg.step_size_local;
            }
        }
        clip_in_place(&mut x, schema);
        x_flip = first_variant(&x, schema);
        out.visited.push(fingerprint(&x));
        out.iterations += 1;
        match is_idi(net, &x, schema) {
            Ok(Some(pair)) => out.found.push(IdiRecord {
                pair,
                provenance: Provenance { phase: Phase::Local, seed: index, iteration: t },
            }),
            Ok(None) => {}
            Err(e) => {
                log::warn!("local seed {index}: {e}; skipping");
                out.skipped = true;
                break;
            }
        }
    }
    out
}
