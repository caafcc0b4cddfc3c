//! Evaluation: success rate, diversity, sampled discrimination rate,
//! retraining-based repair, rank consistency, spread, biased-neuron
//! coverage and a random-walk comparison search.

use crate::data::{clip_in_place, AttributeSchema, InstancePair, TabularDataset};
use crate::generate::{
    expired, fingerprint, is_idi, seed_rng, GenerateError, GenerationConfig, GenerationRun, IdiRecord, Phase,
    Provenance, SeedOutcome,
};
use crate::interpret::{layer_auc, BiasProfile, InterpretError};
use crate::nn::{accuracy, train, Network, NnError, TrainConfig};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("division by zero: no generated instances")]
    DivideByZero,
    #[error("generation diversity is undefined: the baseline covers none of the tested set")]
    UndefinedGd,
    #[error("rank lists differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least two values, got {0}")]
    TooFewValues(usize),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Interpret(#[from] InterpretError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
}

/// Discriminatory instances over distinct generated instances.
pub fn gsr(n_idis: usize, n_generated: usize) -> Result<f64, MetricsError> {
    if n_generated == 0 {
        return Err(MetricsError::DivideByZero);
    }
    if n_idis > n_generated {
        return Err(MetricsError::Invalid(format!("{n_idis} IDIs exceed {n_generated} generated instances")));
    }
    Ok(n_idis as f64 / n_generated as f64)
}

/// Size of the searched input space implied by an IDI count and a success
/// rate.
pub fn input_space(n_idis: usize, gsr: f64) -> Option<usize> {
    (gsr > 0.0).then(|| (n_idis as f64 / gsr).round() as usize)
}

fn normalize(v: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    v.iter()
        .zip(bounds)
        .map(|(&x, &(lo, hi))| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// `1 - cos(a, b)`. Two zero vectors are at distance 0; a zero vector and a
/// non-zero one are at distance 1.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        _ => (1.0 - dot / (na * nb)).max(0.0),
    }
}

/// Fraction of `covered` that lies within cosine distance `radius` of at
/// least one point of `centers`, after min-max normalisation by `bounds`.
pub fn coverage_rate(centers: &[Vec<f64>], covered: &[Vec<f64>], radius: f64, bounds: &[(f64, f64)]) -> f64 {
    if covered.is_empty() {
        return 0.0;
    }
    let c: Vec<Vec<f64>> = centers.iter().map(|v| normalize(v, bounds)).collect();
    let hits = covered
        .par_iter()
        .filter(|v| {
            let v = normalize(v, bounds);
            c.iter().any(|cc| cosine_distance(cc, &v) <= radius)
        })
        .count();
    hits as f64 / covered.len() as f64
}

/// `CR(tested covers baseline) / CR(baseline covers tested)`.
pub fn gd(
    tested: &[Vec<f64>],
    baseline: &[Vec<f64>],
    rho_cons: f64,
    bounds: &[(f64, f64)],
) -> Result<f64, MetricsError> {
    if tested.is_empty() || baseline.is_empty() {
        return Err(MetricsError::Invalid("both IDI sets must be non-empty".into()));
    }
    if !(rho_cons > 0.0) {
        return Err(MetricsError::Invalid("rho_cons must be positive".into()));
    }
    let tested_covers = coverage_rate(tested, baseline, rho_cons, bounds);
    let baseline_covers = coverage_rate(baseline, tested, rho_cons, bounds);
    if baseline_covers == 0.0 {
        return Err(MetricsError::UndefinedGd);
    }
    Ok(tested_covers / baseline_covers)
}

/// Uniformly samples `n` instances over the coded domain.
pub fn sample_domain(schema: &AttributeSchema, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attrs = schema.attributes();
    (0..n)
        .map(|_| {
            attrs
                .iter()
                .map(|a| rng.gen_range(a.min.ceil() as i64..=a.max.floor() as i64) as f64)
                .collect()
        })
        .collect()
}

/// Fraction of uniformly sampled instances that are discriminatory.
pub fn dm_rs(net: &Network, schema: &AttributeSchema, n_samples: usize, seed: u64) -> Result<f64, MetricsError> {
    if n_samples == 0 {
        return Err(MetricsError::Invalid("n_samples must be at least 1".into()));
    }
    let samples = sample_domain(schema, n_samples, seed);
    let flags: Vec<bool> = samples
        .par_iter()
        .map(|x| is_idi(net, x, schema).map(|w| w.is_some()))
        .collect::<Result<_, _>>()?;
    Ok(flags.iter().filter(|&&f| f).count() as f64 / n_samples as f64)
}

/// Spearman's rank correlation `1 - 6 Σ d² / (n (n² - 1))`.
pub fn spearman(ranks_a: &[f64], ranks_b: &[f64]) -> Result<f64, MetricsError> {
    if ranks_a.len() != ranks_b.len() {
        return Err(MetricsError::LengthMismatch(ranks_a.len(), ranks_b.len()));
    }
    let n = ranks_a.len();
    if n < 2 {
        return Err(MetricsError::TooFewValues(n));
    }
    let d2: f64 = ranks_a.iter().zip(ranks_b).map(|(a, b)| (a - b) * (a - b)).sum();
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// 1-based ascending ranks; ties share their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Sample standard deviation (n - 1 denominator).
pub fn significance(values: &[f64]) -> Result<f64, MetricsError> {
    let n = values.len();
    if n < 2 {
        return Err(MetricsError::TooFewValues(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Neurons of the most biased layer counted as activated by `instance`:
/// min-max normalised activation above 0.5. A layer with no spread counts
/// every positive neuron as activated.
pub fn activated_neurons(net: &Network, instance: &[f64], layer: usize) -> Result<Vec<bool>, NnError> {
    let trace = net.forward(instance)?;
    let a = trace.layer(layer);
    let lo = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(if hi > lo {
        a.iter().map(|v| (v - lo) / (hi - lo) > 0.5).collect()
    } else {
        a.iter().map(|&v| v > 0.0).collect()
    })
}

/// Share of biased neurons activated by at least one of `instances`.
pub fn biased_neuron_coverage(
    net: &Network,
    instances: &[Vec<f64>],
    profile: &BiasProfile,
) -> Result<f64, MetricsError> {
    let biased = profile.biased_count();
    if biased == 0 {
        return Ok(0.0);
    }
    let mut union = vec![false; profile.positions.len()];
    for x in instances {
        for (u, a) in union.iter_mut().zip(activated_neurons(net, x, profile.most_biased_layer)?) {
            *u |= a;
        }
    }
    let hit = union.iter().zip(&profile.positions).filter(|(u, p)| **u && **p).count();
    Ok(hit as f64 / biased as f64)
}

/// Comparison search with the global phase's budget: each step moves one
/// uniformly chosen non-sensitive attribute by `±step_size_global`.
pub fn random_baseline(
    net: &Network,
    schema: &AttributeSchema,
    seeds: &[Vec<f64>],
    cfg: &GenerationConfig,
) -> Result<GenerationRun, MetricsError> {
    cfg.validate()?;
    let ns = schema.non_sensitive();
    if ns.is_empty() {
        return Err(MetricsError::Invalid("schema has no non-sensitive attributes".into()));
    }
    let deadline = cfg.deadline(Instant::now());
    let outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .enumerate()
        .map(|(index, seed)| {
            let mut out = SeedOutcome::default();
            if expired(deadline) {
                out.timed_out = true;
                out.never_started = true;
                return out;
            }
            let mut rng = seed_rng(cfg.rng_seed, 3, index);
            let mut x = seed.clone();
            clip_in_place(&mut x, schema);
            for t in 0..=cfg.max_iter_global {
                if t > 0 && expired(deadline) {
                    out.timed_out = true;
                    break;
                }
                out.visited.push(fingerprint(&x));
                out.iterations += 1;
                match is_idi(net, &x, schema) {
                    Ok(Some(pair)) => {
                        out.found.push(IdiRecord {
                            pair,
                            provenance: Provenance { phase: Phase::Baseline, seed: index, iteration: t },
                        });
                        break;
                    }
                    Ok(None) => {}
                    Err(e) => {
                        log::warn!("baseline seed {index}: {e}; skipping");
                        out.skipped = true;
                        break;
                    }
                }
                if t == cfg.max_iter_global {
                    break;
                }
                let a = ns[rng.gen_range(0..ns.len())];
                let dir = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                x[a] += dir * cfg.step_size_global;
                clip_in_place(&mut x, schema);
            }
            out
        })
        .collect();
    let mut run = GenerationRun::default();
    for o in outcomes {
        run.absorb(o);
    }
    Ok(run)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrainConfig {
    /// Share of the IDI set added to the training data per run.
    pub fraction: f64,
    pub repeats: usize,
    pub train: TrainConfig,
    pub dm_rs_samples: usize,
    pub step_interval: f64,
    pub rng_seed: u64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            fraction: 0.10,
            repeats: 5,
            train: TrainConfig { epochs: 5, ..TrainConfig::default() },
            dm_rs_samples: 10_000,
            step_interval: crate::interpret::DEFAULT_STEP_INTERVAL,
            rng_seed: 0,
        }
    }
}

/// Fixed material for before/after comparisons.
pub struct RetrainEval<'a> {
    pub test: &'a TabularDataset,
    /// Pairs the layer AUC is measured on.
    pub pairs: &'a [InstancePair],
    /// Layer whose AUC is tracked (the original most biased layer).
    pub layer: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrainRun {
    pub run: usize,
    pub sample_size: usize,
    pub dm_rs: f64,
    pub auc: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrainOutcome {
    pub dm_rs_before: f64,
    pub auc_before: f64,
    pub test_accuracy_before: f64,
    pub runs: Vec<RetrainRun>,
    pub dm_rs_after: f64,
    pub auc_after: f64,
    pub test_accuracy_after: f64,
    #[serde(skip)]
    pub networks: Vec<Network>,
}

/// Number of IDIs drawn per retraining run: `floor(fraction · n)`, at
/// least one.
pub fn retrain_sample_size(n_idis: usize, fraction: f64) -> usize {
    ((n_idis as f64 * fraction).floor() as usize).max(1).min(n_idis)
}

/// Retrains `net` on `train_data` plus a seeded sample of IDI pairs, both
/// members labelled with `net`'s prediction on the first member, and
/// reports mean DM-RS, layer AUC and test accuracy over the runs.
pub fn retrain_fairness(
    net: &Network,
    schema: &AttributeSchema,
    idis: &[InstancePair],
    train_data: &TabularDataset,
    eval: &RetrainEval<'_>,
    cfg: &RetrainConfig,
) -> Result<RetrainOutcome, MetricsError> {
    if idis.is_empty() {
        return Err(MetricsError::Invalid("no IDIs to retrain with".into()));
    }
    if cfg.repeats == 0 {
        return Err(MetricsError::Invalid("repeats must be at least 1".into()));
    }
    let base_inputs = train_data.inputs();
    let base_labels = train_data.labels().map_err(|e| MetricsError::Invalid(e.to_string()))?;
    let test_inputs = eval.test.inputs();
    let test_labels = eval.test.labels().map_err(|e| MetricsError::Invalid(e.to_string()))?;

    let dm_seed = cfg.rng_seed ^ 0xd3_5eed;
    let dm_rs_before = dm_rs(net, schema, cfg.dm_rs_samples, dm_seed)?;
    let auc_before = layer_auc(net, eval.pairs, eval.layer, cfg.step_interval)?;
    let test_accuracy_before = accuracy(net, &test_inputs, &test_labels)?;

    let k = retrain_sample_size(idis.len(), cfg.fraction);
    let mut runs = Vec::with_capacity(cfg.repeats);
    let mut networks = Vec::with_capacity(cfg.repeats);
    for run in 0..cfg.repeats {
        let run_seed = cfg.rng_seed.wrapping_add(run as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let mut inputs = base_inputs.clone();
        let mut labels = base_labels.clone();
        for i in sample(&mut rng, idis.len(), k).into_vec() {
            let p = &idis[i];
            let y = net.predict(&p.a.values)?;
            inputs.push(p.a.values.clone());
            labels.push(y);
            inputs.push(p.b.values.clone());
            labels.push(y);
        }
        let tc = TrainConfig { rng_seed: run_seed, ..cfg.train.clone() };
        let repaired = train(net, &inputs, &labels, &tc)?.network;
        let dm = dm_rs(&repaired, schema, cfg.dm_rs_samples, dm_seed)?;
        let auc = layer_auc(&repaired, eval.pairs, eval.layer, cfg.step_interval)?;
        let acc = accuracy(&repaired, &test_inputs, &test_labels)?;
        log::info!("retrain run {run}: dm_rs {dm:.4}, auc {auc:.4}, accuracy {acc:.4}");
        runs.push(RetrainRun { run, sample_size: k, dm_rs: dm, auc, test_accuracy: acc });
        networks.push(repaired);
    }
    let mean = |f: fn(&RetrainRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    Ok(RetrainOutcome {
        dm_rs_before,
        auc_before,
        test_accuracy_before,
        dm_rs_after: mean(|r| r.dm_rs),
        auc_after: mean(|r| r.auc),
        test_accuracy_after: mean(|r| r.test_accuracy),
        runs,
        networks,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GdEntry {
    pub rho_cons: f64,
    /// `None` when the baseline covers none of the tested IDIs.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub idis: usize,
    pub generated: usize,
    pub gsr: f64,
    pub input_space: Option<usize>,
    pub coverage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub gsr: f64,
    pub input_space: Option<usize>,
    pub gd: Vec<GdEntry>,
    pub dm_rs_before: f64,
    pub dm_rs_after: Option<f64>,
    pub rho_s: Option<f64>,
    pub sigma_auc: Option<f64>,
    pub sigma_dm_rs: Option<f64>,
    pub coverage: f64,
    pub tested: MethodSummary,
    pub baseline: MethodSummary,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gsr_cases() {
        assert_eq!(gsr(0, 100).unwrap(), 0.0);
        assert_eq!(gsr(100, 100).unwrap(), 1.0);
        assert!(matches!(gsr(0, 0), Err(MetricsError::DivideByZero)));
        // 122,370 IDIs at 28.19% success.
        let space = input_space(122_370, 0.2819).unwrap();
        assert!((space as f64 - 434_090.0).abs() < 10.0, "{space}");
    }

    #[test]
    fn sigma_cases() {
        assert_eq!(significance(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert!((significance(&[0.0, 2.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(significance(&[1.0]), Err(MetricsError::TooFewValues(1))));
    }

    #[test]
    fn spearman_extremes() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman(&a, &a).unwrap(), 1.0);
        assert_eq!(spearman(&a, &b).unwrap(), -1.0);
        assert!(matches!(spearman(&a, &b[..3]), Err(MetricsError::LengthMismatch(4, 3))));
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(average_ranks(&[0.3, 0.1, 0.3, 0.2]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn cosine_edge_cases() {
        assert_eq!(cosine_distance(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), 1.0);
        assert!(cosine_distance(&[1.0, 1.0], &[2.0, 2.0]).abs() < 1e-15);
        assert!((cosine_distance(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sample_size_floor_guard() {
        assert_eq!(retrain_sample_size(5, 0.10), 1);
        assert_eq!(retrain_sample_size(100, 0.10), 10);
        assert_eq!(retrain_sample_size(109, 0.10), 10);
    }
}
