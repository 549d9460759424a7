#![allow(dead_code)]

use ccl::augment::{LabeledSample, Origin};
use ccl::interval::{LayerBox, Property};
use ccl::nn::{Layer, Network};
use ccl::trainer::{composite_loss, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense ReLU net with every parameter (biases included) uniform in
/// `[-scale, scale]`.
pub fn random_net(input: usize, hidden: &[usize], outputs: usize, scale: f64, seed: u64) -> Network {
    let mut net = Network::dense_relu(input, hidden, outputs, seed).unwrap();
    let mut r = rng(seed ^ 0xA5A5);
    let theta: Vec<f64> = (0..net.param_count()).map(|_| r.gen_range(-scale..=scale)).collect();
    net.set_params(&theta).unwrap();
    net
}

/// Small random architecture: 2–3 hidden layers, each at most 8 wide.
pub fn small_arch(r: &mut ChaCha8Rng) -> (usize, Vec<usize>, usize) {
    let input = r.gen_range(2..=4);
    let depth = r.gen_range(2..=3);
    let hidden = (0..depth).map(|_| r.gen_range(2..=8)).collect();
    let outputs = r.gen_range(2..=4);
    (input, hidden, outputs)
}

/// Plain matrix-vector forward pass written against the raw weight rows,
/// kept apart from the library's own evaluation path.
pub fn oracle_forward(net: &Network, x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    for layer in net.layers() {
        v = match layer {
            Layer::Affine(a) => {
                let mut out = a.bias.clone();
                for (o, row) in out.iter_mut().zip(&a.weights) {
                    for (w, xi) in row.iter().zip(&v) {
                        *o += w * xi;
                    }
                }
                out
            }
            Layer::Relu => v.iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect(),
        };
    }
    v
}

pub fn oracle_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &z) in v.iter().enumerate() {
        if z > v[best] {
            best = i;
        }
    }
    best
}

pub fn random_point(r: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| r.gen_range(0.0..1.0)).collect()
}

pub fn point_in(r: &mut ChaCha8Rng, bx: &LayerBox) -> Vec<f64> {
    bx.0.iter()
        .map(|iv| if iv.lw == iv.up { iv.lw } else { r.gen_range(iv.lw..=iv.up) })
        .collect()
}

pub fn robustness_at(net: &Network, x0: Vec<f64>, epsilon: f64) -> Property {
    Property::Robustness {
        y0_label: net.predict(&x0).unwrap(),
        x0,
        epsilon,
        clamp: None,
    }
}

/// Gaussian-ish blobs in `[0,1]^dim`, one centre per label.
pub fn blobs(dim: usize, labels: &[usize], per_label: usize, seed: u64) -> Vec<LabeledSample> {
    let mut r = rng(seed);
    let centres: Vec<Vec<f64>> = (0..=*labels.iter().max().unwrap())
        .map(|l| {
            let mut c = rng(1000 + l as u64);
            (0..dim).map(|_| c.gen_range(0.15..0.85)).collect()
        })
        .collect();
    let mut out = Vec::new();
    for &l in labels {
        for _ in 0..per_label {
            let x = centres[l]
                .iter()
                .map(|c| (c + r.gen_range(-0.12..0.12_f64)).clamp(0.0, 1.0))
                .collect();
            out.push(LabeledSample::new(x, l, Origin::NewTask));
        }
    }
    out
}

pub fn bits(net: &Network) -> Vec<u64> {
    net.params().iter().map(|v| v.to_bits()).collect()
}

pub fn weight_bits(net: &Network) -> Vec<u64> {
    net.layers()
        .iter()
        .filter_map(Layer::as_affine)
        .flat_map(|a| a.weights.iter().flatten().map(|w| w.to_bits()))
        .collect()
}

/// Robustness certificates at the first `count` points that verify.
pub fn certify_points(net: &Network, points: &[Vec<f64>], epsilon: f64, count: usize) -> Vec<ccl::Certificate> {
    let mut certs = Vec::new();
    for (i, x) in points.iter().enumerate() {
        if certs.len() == count {
            break;
        }
        let v = ccl::verify(net, &format!("p{i}"), &robustness_at(net, x.clone(), epsilon), None).unwrap();
        certs.extend(v.certificates);
    }
    certs
}

/// Worst relative error of `composite_loss`'s gradient against central
/// differences (h = 1e-5), over coordinates with |g| > 1e-8.
pub fn fd_check(net: &Network, batch: &[&LabeledSample], obj: &Objective) -> f64 {
    let (_, g) = composite_loss(net, batch, obj).unwrap();
    let theta = net.params();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        if g[i].abs() <= 1e-8 {
            continue;
        }
        let mut p = theta.clone();
        p[i] += h;
        let mut np = net.clone();
        np.set_params(&p).unwrap();
        let lp = composite_loss(&np, batch, obj).unwrap().0;
        p[i] -= 2.0 * h;
        np.set_params(&p).unwrap();
        let lm = composite_loss(&np, batch, obj).unwrap().0;
        let fd = (lp - lm) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / g[i].abs().max(fd.abs()));
    }
    worst
}
