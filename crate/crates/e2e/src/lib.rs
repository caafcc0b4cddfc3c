//! Independent reference implementations used by the acceptance checks.
//!
//! Everything here is written as plain loops over stored parameters and
//! brute-force enumeration, sharing no code paths with the library it
//! checks beyond reading network weights and schema bounds.

use fairtest::nn::{Activation, Network};
use fairtest::AttributeSchema;

/// Pre-activations and activations of every layer.
pub fn forward(net: &Network, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut cur = x.to_vec();
    let mut pre_all = Vec::new();
    let mut post_all = Vec::new();
    for l in net.layers() {
        let mut z = vec![0.0; l.width];
        for o in 0..l.width {
            let mut s = l.biases[o];
            for i in 0..l.inputs {
                s += l.weights[o * l.inputs + i] * cur[i];
            }
            z[o] = s;
        }
        let mut a: Vec<f64> = match l.activation {
            Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Activation::Identity => z.clone(),
            Activation::Sigmoid => z.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            Activation::Softmax => {
                let mut m = f64::NEG_INFINITY;
                for &v in &z {
                    m = m.max(v);
                }
                let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            }
        };
        if let Some(mask) = &l.mask {
            for k in 0..a.len() {
                if mask[k] {
                    a[k] = 0.0;
                }
            }
        }
        pre_all.push(z);
        post_all.push(a.clone());
        cur = a;
    }
    (pre_all, post_all)
}

/// Index of the largest output; the first wins ties.
pub fn predict(net: &Network, x: &[f64]) -> usize {
    let (_, post) = forward(net, x);
    let out = post.last().expect("network has layers");
    let mut best = 0;
    for i in 1..out.len() {
        if out[i] > out[best] {
            best = i;
        }
    }
    best
}

/// Every integer value is inside its attribute's range.
pub fn in_domain(x: &[f64], schema: &AttributeSchema) -> bool {
    x.len() == schema.len()
        && x.iter().zip(schema.attributes()).all(|(&v, a)| v.fract() == 0.0 && v >= a.min && v <= a.max)
}

/// All assignments of the sensitive attributes, as full instances built
/// from `x`.
pub fn sensitive_assignments(x: &[f64], schema: &AttributeSchema) -> Vec<Vec<f64>> {
    let mut out = vec![x.to_vec()];
    for &s in schema.sensitive() {
        let a = &schema.attributes()[s];
        let mut next = Vec::new();
        for partial in &out {
            let mut v = a.min;
            while v <= a.max {
                let mut y = partial.clone();
                y[s] = v;
                next.push(y);
                v += 1.0;
            }
        }
        out = next;
    }
    out
}

/// Why a claimed discriminatory pair is not one, if it is not.
pub fn check_pair(net: &Network, schema: &AttributeSchema, a: &[f64], b: &[f64]) -> Result<(), String> {
    if !in_domain(a, schema) || !in_domain(b, schema) {
        return Err(format!("outside the input domain: {a:?} / {b:?}"));
    }
    let sensitive = schema.sensitive();
    let mut differs = false;
    for i in 0..a.len() {
        if sensitive.contains(&i) {
            differs |= a[i] != b[i];
        } else if a[i] != b[i] {
            return Err(format!("non-sensitive attribute {i} differs"));
        }
    }
    if !differs {
        return Err("no sensitive attribute differs".into());
    }
    if predict(net, a) == predict(net, b) {
        return Err(format!("same prediction for {a:?} and {b:?}"));
    }
    // The witness must be one of the enumerated counterparts.
    if !sensitive_assignments(a, schema).iter().any(|v| v.as_slice() == b) {
        return Err("witness is not a sensitive-attribute assignment of the instance".into());
    }
    Ok(())
}

/// AS-curve area by walking thresholds 0, step, … up to max(z) and adding
/// one rectangle per threshold.
pub fn as_curve_area(z: &[f64], step: f64) -> (f64, Vec<f64>) {
    let mut max_z = 0.0f64;
    for &v in z {
        if v > max_z {
            max_z = v;
        }
    }
    let mut area = 0.0;
    let mut fractions = Vec::new();
    let mut i = 0usize;
    loop {
        let x = i as f64 * step;
        if x > max_z {
            break;
        }
        let mut count = 0usize;
        for &v in z {
            if v > x {
                count += 1;
            }
        }
        let r = count as f64 / z.len() as f64;
        fractions.push(r);
        area += r * step;
        i += 1;
    }
    (area, fractions)
}

/// `-Σ_k mask_k · target_k · ln(max(a_k(x), 1e-12))` on `layer`.
pub fn dynamic_loss(net: &Network, x: &[f64], layer: usize, mask: &[bool], target: &[f64]) -> f64 {
    let (_, post) = forward(net, x);
    let mut j = 0.0;
    for k in 0..mask.len() {
        if mask[k] {
            j -= target[k] * post[layer][k].max(1e-12).ln();
        }
    }
    j
}

/// `1 - 6 Σ d² / (n (n² - 1))` over two rank lists.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    1.0 - 6.0 * s / (n * (n * n - 1.0))
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
