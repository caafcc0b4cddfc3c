//! Neuron-level discrimination analysis.
//!
//! For each hidden layer the mean absolute activation difference between
//! an instance and its sensitive-attribute flip is squashed with `tanh`.
//! The AS curve records, for evenly spaced thresholds, the fraction of
//! neurons whose squashed difference exceeds the threshold; its area (AUC)
//! scores how strongly the layer reacts to the sensitive attributes. The
//! layer with the largest AUC is the most biased one, and its biased
//! neurons are those at or above the point where the curve meets `y = x`.

use crate::data::{flip_variants, AttributeSchema, Instance, InstancePair};
use crate::nn::{Network, NnError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use thiserror::Error;

pub const DEFAULT_STEP_INTERVAL: f64 = 0.005;

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error("no instance pairs to analyse")]
    EmptyPairs,
    #[error("no discrimination: the AS curve has zero area")]
    NoDiscrimination,
    #[error("network has no hidden layers")]
    NoHiddenLayers,
    #[error("step interval must be positive")]
    BadStep,
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerActDiff {
    pub layer: usize,
    /// Mean absolute activation differences before squashing.
    pub raw: Vec<f64>,
    /// `tanh(raw)`, in `[0, 1)`.
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsCurve {
    pub step_interval: f64,
    pub thresholds: Vec<f64>,
    /// Fraction (not percent) of neurons strictly above each threshold.
    pub sen_neu_r: Vec<f64>,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub actdiff: LayerActDiff,
    pub curve: AsCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasProfile {
    pub per_layer: Vec<LayerProfile>,
    pub most_biased_layer: usize,
    pub threshold: f64,
    /// Biased-neuron positions in the most biased layer.
    pub positions: Vec<bool>,
}

impl BiasProfile {
    pub fn biased_count(&self) -> usize {
        self.positions.iter().filter(|&&p| p).count()
    }

    pub fn aucs(&self) -> Vec<f64> {
        self.per_layer.iter().map(|l| l.curve.auc).collect()
    }

    pub fn layer_width(&self) -> usize {
        self.positions.len()
    }
}

/// Pairs every instance with each of its flip variants.
pub fn flip_pairs(instances: &[Instance], schema: &AttributeSchema) -> Vec<InstancePair> {
    instances
        .iter()
        .flat_map(|x| {
            let a = Instance::new(x.values.clone());
            flip_variants(x, schema).into_iter().map(move |b| InstancePair { a: a.clone(), b })
        })
        .collect()
}

/// Per-neuron mean absolute activation difference at `layer`, squashed
/// with `tanh`.
pub fn actdiff(net: &Network, pairs: &[InstancePair], layer: usize) -> Result<LayerActDiff, InterpretError> {
    Ok(actdiff_all_layers(net, pairs)?.swap_remove(layer_index(net, layer)?))
}

fn layer_index(net: &Network, layer: usize) -> Result<usize, InterpretError> {
    if layer >= net.hidden_count() {
        return Err(NnError::BadLayer(layer).into());
    }
    Ok(layer)
}

/// `actdiff` for every hidden layer from one pass over the pairs.
pub fn actdiff_all_layers(net: &Network, pairs: &[InstancePair]) -> Result<Vec<LayerActDiff>, InterpretError> {
    if pairs.is_empty() {
        return Err(InterpretError::EmptyPairs);
    }
    let hidden = net.hidden_count();
    if hidden == 0 {
        return Err(InterpretError::NoHiddenLayers);
    }
    let widths: Vec<usize> = net.layers()[..hidden].iter().map(|l| l.width).collect();
    // Forward passes fan out; the sum runs in pair order so the result does
    // not depend on the worker count.
    let diffs: Vec<Vec<Vec<f64>>> = pairs
        .par_iter()
        .map(|p| -> Result<Vec<Vec<f64>>, NnError> {
            let ta = net.forward(&p.a.values)?;
            let tb = net.forward(&p.b.values)?;
            Ok((0..hidden)
                .map(|l| ta.layer(l).iter().zip(tb.layer(l)).map(|(x, y)| (x - y).abs()).collect())
                .collect())
        })
        .collect::<Result<_, _>>()?;
    let mut acc: Vec<Vec<f64>> = widths.iter().map(|&w| vec![0.0; w]).collect();
    for d in &diffs {
        for (a, b) in acc.iter_mut().zip(d) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    let n = pairs.len() as f64;
    Ok(acc
        .into_iter()
        .enumerate()
        .map(|(layer, s)| {
            let raw: Vec<f64> = s.into_iter().map(|v| v / n).collect();
            let z = raw.iter().map(|v| v.tanh()).collect();
            LayerActDiff { layer, raw, z }
        })
        .collect())
}

fn fraction_above(z: &[f64], t: f64) -> f64 {
    z.iter().filter(|&&v| v > t).count() as f64 / z.len() as f64
}

/// Thresholds `0, step, 2·step, …` up to and including `max(z)`, the
/// fraction of neurons above each, and the Riemann-sum area.
pub fn as_curve(z: &[f64], step_interval: f64) -> Result<AsCurve, InterpretError> {
    if !(step_interval > 0.0 && step_interval.is_finite()) {
        return Err(InterpretError::BadStep);
    }
    if z.is_empty() {
        return Ok(AsCurve { step_interval, thresholds: vec![0.0], sen_neu_r: vec![0.0], auc: 0.0 });
    }
    let max_z = z.iter().cloned().fold(0.0, f64::max);
    let steps = (max_z / step_interval).floor() as usize;
    let thresholds: Vec<f64> = (0..=steps).map(|i| i as f64 * step_interval).collect();
    let sen_neu_r: Vec<f64> = thresholds.iter().map(|&t| fraction_above(z, t)).collect();
    let auc = sen_neu_r.iter().map(|r| r * step_interval).sum();
    Ok(AsCurve { step_interval, thresholds, sen_neu_r, auc })
}

/// Index of the largest AUC; the earliest layer wins ties.
pub fn select_biased_layer(aucs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &a) in aucs.iter().enumerate() {
        if a > aucs[best] {
            best = i;
        }
    }
    best
}

/// Threshold where the AS curve meets `y = x`, and the neurons at or above
/// it.
///
/// The threshold is the first grid point `t` with `SenNeuR(t) <= t`,
/// continuing the grid past `max(z)` if needed. When no neuron reaches that
/// grid point (all remaining differences sit inside the last cell), the
/// threshold drops to `max(z)` so the selection is never empty.
pub fn identify_biased_neurons(curve: &AsCurve, z: &[f64]) -> Result<(f64, Vec<bool>), InterpretError> {
    if curve.auc <= 0.0 || z.is_empty() {
        return Err(InterpretError::NoDiscrimination);
    }
    let step = curve.step_interval;
    let mut i = 0usize;
    let mut threshold = loop {
        let t = i as f64 * step;
        let r = curve.sen_neu_r.get(i).copied().unwrap_or_else(|| fraction_above(z, t));
        if r <= t {
            break t;
        }
        i += 1;
    };
    let max_z = z.iter().cloned().fold(0.0, f64::max);
    if max_z < threshold {
        threshold = max_z;
    }
    let positions = z.iter().map(|&v| v >= threshold).collect();
    Ok((threshold, positions))
}

/// Full per-layer analysis plus biased-neuron selection on the most biased
/// layer.
pub fn bias_profile(
    net: &Network,
    pairs: &[InstancePair],
    step_interval: f64,
) -> Result<BiasProfile, InterpretError> {
    let diffs = actdiff_all_layers(net, pairs)?;
    let mut per_layer = Vec::with_capacity(diffs.len());
    for d in diffs {
        let curve = as_curve(&d.z, step_interval)?;
        per_layer.push(LayerProfile { actdiff: d, curve });
    }
    let aucs: Vec<f64> = per_layer.iter().map(|l| l.curve.auc).collect();
    let most_biased_layer = select_biased_layer(&aucs);
    let chosen = &per_layer[most_biased_layer];
    let (threshold, positions) = identify_biased_neurons(&chosen.curve, &chosen.actdiff.z)?;
    Ok(BiasProfile { per_layer, most_biased_layer, threshold, positions })
}

/// AUC of a single layer, recomputed on `pairs`.
pub fn layer_auc(
    net: &Network,
    pairs: &[InstancePair],
    layer: usize,
    step_interval: f64,
) -> Result<f64, InterpretError> {
    let d = actdiff(net, pairs, layer)?;
    Ok(as_curve(&d.z, step_interval)?.auc)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub width: usize,
    pub auc: f64,
    pub curve: Vec<[f64; 2]>,
    pub threshold: Option<f64>,
    pub biased_positions: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InterpretReport {
    pub step_interval: f64,
    pub pair_count: usize,
    pub most_biased_layer: usize,
    pub threshold: f64,
    pub biased_count: usize,
    pub layers: Vec<LayerReport>,
}

impl InterpretReport {
    pub fn new(profile: &BiasProfile, pair_count: usize) -> Self {
        let layers = profile
            .per_layer
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let (threshold, biased_positions) = if i == profile.most_biased_layer {
                    (
                        Some(profile.threshold),
                        profile.positions.iter().enumerate().filter(|(_, &p)| p).map(|(k, _)| k).collect(),
                    )
                } else {
                    match identify_biased_neurons(&l.curve, &l.actdiff.z) {
                        Ok((t, p)) => (Some(t), p.iter().enumerate().filter(|(_, &b)| b).map(|(k, _)| k).collect()),
                        Err(_) => (None, Vec::new()),
                    }
                };
                LayerReport {
                    layer: i,
                    width: l.actdiff.z.len(),
                    auc: l.curve.auc,
                    curve: l.curve.thresholds.iter().zip(&l.curve.sen_neu_r).map(|(&t, &r)| [t, r]).collect(),
                    threshold,
                    biased_positions,
                }
            })
            .collect();
        Self {
            step_interval: profile.per_layer.first().map(|l| l.curve.step_interval).unwrap_or(DEFAULT_STEP_INTERVAL),
            pair_count,
            most_biased_layer: profile.most_biased_layer,
            threshold: profile.threshold,
            biased_count: profile.biased_count(),
            layers,
        }
    }
}

/// Writes `threshold,sen_neu_r` rows for one curve.
pub fn write_curve_csv<W: Write>(curve: &AsCurve, mut out: W) -> std::io::Result<()> {
    writeln!(out, "threshold,sen_neu_r")?;
    for (t, r) in curve.thresholds.iter().zip(&curve.sen_neu_r) {
        writeln!(out, "{t},{r}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_curve() {
        let c = as_curve(&[0.0, 0.0, 0.0], 0.005).unwrap();
        assert_eq!(c.thresholds, vec![0.0]);
        assert_eq!(c.sen_neu_r, vec![0.0]);
        assert_eq!(c.auc, 0.0);
        assert!(matches!(identify_biased_neurons(&c, &[0.0, 0.0, 0.0]), Err(InterpretError::NoDiscrimination)));
    }

    #[test]
    fn constant_curve_hand_trace() {
        // tanh(1) = 0.76159...; grid 0..=0.76 has 153 points, all at 1.0.
        let v = 1f64.tanh();
        let c = as_curve(&[v; 8], 0.005).unwrap();
        assert_eq!(c.thresholds.len(), 153);
        assert!(c.sen_neu_r.iter().all(|&r| r == 1.0));
        assert!((c.auc - 0.765).abs() < 1e-12);
        assert!((c.auc - v).abs() <= 0.005);
        // Grid crossing is at 0.765 > v; the selection falls back to v itself.
        let (t, p) = identify_biased_neurons(&c, &[v; 8]).unwrap();
        assert_eq!(t, v);
        assert!(p.iter().all(|&b| b));
    }

    #[test]
    fn crossing_at_known_point() {
        // 100 neurons: 33 at 0.9, the rest at 0.2. SenNeuR(t) = 1 for t < 0.2,
        // 0.33 for 0.2 <= t < 0.9, so the curve meets y = x at t = 0.33.
        let mut z = vec![0.2; 67];
        z.extend(vec![0.9; 33]);
        let c = as_curve(&z, 0.005).unwrap();
        let (t, p) = identify_biased_neurons(&c, &z).unwrap();
        assert!((t - 0.33).abs() < 1e-12);
        assert_eq!(p.iter().filter(|&&b| b).count(), 33);
    }

    #[test]
    fn tie_break_prefers_earliest() {
        assert_eq!(select_biased_layer(&[0.2, 0.7, 0.7]), 1);
        assert_eq!(select_biased_layer(&[0.4]), 0);
    }

    #[test]
    fn bad_step() {
        assert!(matches!(as_curve(&[0.1], 0.0), Err(InterpretError::BadStep)));
    }
}
