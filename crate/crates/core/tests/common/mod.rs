#![allow(dead_code)]

use fairtest::nn::{Activation, Dense, LayerSpec, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent forward pass: plain loops over the stored weights.
pub fn oracle_forward(net: &Network, x: &[f64]) -> Vec<Vec<f64>> {
    let mut cur = x.to_vec();
    let mut out = Vec::new();
    for l in net.layers() {
        let mut z = vec![0.0; l.width];
        for o in 0..l.width {
            let mut s = l.biases[o];
            for i in 0..l.inputs {
                s += l.weights[o * l.inputs + i] * cur[i];
            }
            z[o] = s;
        }
        let a: Vec<f64> = match l.activation {
            Activation::Relu => z.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
            Activation::Identity => z,
            Activation::Sigmoid => z.iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect(),
            Activation::Softmax => {
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            }
        };
        let a = match &l.mask {
            Some(m) => a.iter().zip(m).map(|(&v, &k)| if k { 0.0 } else { v }).collect(),
            None => a,
        };
        out.push(a.clone());
        cur = a;
    }
    out
}

/// Random ReLU network with a softmax head and random biases.
pub fn random_net(input_dim: usize, hidden: &[usize], classes: usize, seed: u64) -> Network {
    let mut specs: Vec<LayerSpec> = hidden.iter().map(|&w| LayerSpec::relu(w)).collect();
    specs.push(LayerSpec::new(classes, Activation::Softmax));
    let mut net = Network::new(input_dim, &specs, seed).unwrap();
    let mut r = rng(seed ^ 0xb1a5);
    for l in net.layers_mut() {
        for b in l.biases.iter_mut() {
            *b = r.gen_range(-0.5..0.5);
        }
    }
    net
}

/// Network whose prediction is the value of input `index` (0 or 1): a
/// softmax over `[-k·x_i, k·x_i]` behind identity hidden layers.
pub fn follows_input(input_dim: usize, index: usize) -> Network {
    let mut hidden = Dense::zeros(input_dim, LayerSpec::new(1, Activation::Relu));
    hidden.weights[index] = 1.0;
    let mut out = Dense::zeros(1, LayerSpec::new(2, Activation::Softmax));
    out.weights = vec![-10.0, 10.0];
    out.biases = vec![5.0, -5.0];
    Network::from_layers(input_dim, vec![hidden, out]).unwrap()
}

/// Network with all-zero weights: a constant classifier.
pub fn constant_net(input_dim: usize) -> Network {
    Network::zeros(input_dim, &[LayerSpec::relu(4), LayerSpec::new(2, Activation::Softmax)]).unwrap()
}

pub type Fixture = fairtest::synthetic::BiasedCensusModel;

pub fn biased_fixture(seed: u64) -> Fixture {
    fairtest::synthetic::biased_census_model(seed).unwrap()
}
