//! Dense feed-forward ReLU networks.
//!
//! A [`Network`] is an alternating sequence of affine and ReLU layers that
//! starts and ends with an affine layer. All parameters are addressable as a
//! single flat vector whose order is described by [`Network::layout`]: for
//! each affine layer in forward order, the weights row-major followed by the
//! bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `x ↦ W x + b` with `W` of shape `n_out × n_in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl AffineLayer {
    pub fn new(weights: Vec<Vec<f64>>, bias: Vec<f64>) -> Result<Self> {
        let layer = AffineLayer { weights, bias };
        layer.check()?;
        Ok(layer)
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.bias.len() {
            return Err(Error::Structure(format!(
                "affine layer has {} weight rows but {} biases",
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.bias.is_empty() {
            return Err(Error::Structure("affine layer with zero outputs".into()));
        }
        let n_in = self.weights[0].len();
        if n_in == 0 || self.weights.iter().any(|row| row.len() != n_in) {
            return Err(Error::Structure("ragged or empty weight matrix".into()));
        }
        if self
            .weights
            .iter()
            .flatten()
            .chain(&self.bias)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Structure("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn n_out(&self) -> usize {
        self.bias.len()
    }

    pub fn n_in(&self) -> usize {
        self.weights[0].len()
    }

    /// Dot product of row `r` with `x`, without the bias. Summation runs in
    /// column order; the interval transformer uses the same order so that a
    /// point box reproduces this value bit for bit.
    #[inline]
    pub fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        self.weights[r]
            .iter()
            .zip(x)
            .fold(0.0, |acc, (w, v)| acc + w * v)
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out())
            .map(|r| self.row_dot(r, x) + self.bias[r])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Layer {
    Affine(AffineLayer),
    Relu,
}

impl Layer {
    pub fn as_affine(&self) -> Option<&AffineLayer> {
        match self {
            Layer::Affine(a) => Some(a),
            Layer::Relu => None,
        }
    }
}

/// Where one affine layer's parameters live inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    /// Index into [`Network::layers`].
    pub layer: usize,
    pub weights_offset: usize,
    pub bias_offset: usize,
    pub n_out: usize,
    pub n_in: usize,
}

impl ParamBlock {
    #[inline]
    pub fn weight_index(&self, row: usize, col: usize) -> usize {
        self.weights_offset + row * self.n_in + col
    }

    #[inline]
    pub fn bias_index(&self, row: usize) -> usize {
        self.bias_offset + row
    }

    pub fn end(&self) -> usize {
        self.bias_offset + self.n_out
    }
}

/// Activations at every layer boundary: index 0 is the input, the last entry
/// holds the logits.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace is never empty")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    input_dim: usize,
    layers: Vec<Layer>,
    old_param_mask: Option<Vec<bool>>,
}

#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    input_dim: usize,
    layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    old_param_mask: Option<Vec<bool>>,
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        let net = Network::new(repr.input_dim, repr.layers)?;
        match repr.old_param_mask {
            Some(mask) => net.with_old_param_mask(mask),
            None => Ok(net),
        }
    }
}

impl From<Network> for NetworkRepr {
    fn from(net: Network) -> Self {
        NetworkRepr {
            input_dim: net.input_dim,
            layers: net.layers,
            old_param_mask: net.old_param_mask,
        }
    }
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Structure("input dimension must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::Structure("network has no layers".into()));
        }
        let mut width = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            let expect_affine = i % 2 == 0;
            match layer {
                Layer::Affine(a) if expect_affine => {
                    a.check()?;
                    if a.n_in() != width {
                        return Err(Error::Structure(format!(
                            "layer {i} expects {} inputs but previous width is {width}",
                            a.n_in()
                        )));
                    }
                    width = a.n_out();
                }
                Layer::Relu if !expect_affine => {}
                _ => {
                    return Err(Error::Structure(format!(
                        "layer {i}: layers must alternate affine and relu, starting with affine"
                    )))
                }
            }
        }
        if layers.len().is_multiple_of(2) {
            return Err(Error::Structure(
                "the output layer must be affine".into(),
            ));
        }
        Ok(Network {
            input_dim,
            layers,
            old_param_mask: None,
        })
    }

    /// Fully connected ReLU network with He-uniform weights and zero biases.
    pub fn dense_relu(input_dim: usize, hidden: &[usize], outputs: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::new();
        let mut n_in = input_dim;
        for (i, &n_out) in hidden.iter().chain(std::iter::once(&outputs)).enumerate() {
            if i > 0 {
                layers.push(Layer::Relu);
            }
            let scale = (6.0 / n_in.max(1) as f64).sqrt();
            let weights = (0..n_out)
                .map(|_| (0..n_in).map(|_| rng.gen_range(-scale..=scale)).collect())
                .collect();
            layers.push(Layer::Affine(AffineLayer {
                weights,
                bias: vec![0.0; n_out],
            }));
            n_in = n_out;
        }
        Network::new(input_dim, layers)
    }

    pub fn with_old_param_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        let n = self.param_count();
        if mask.len() != n {
            return Err(Error::dim("old_param_mask", n, mask.len()));
        }
        self.old_param_mask = Some(mask);
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn old_param_mask(&self) -> Option<&[bool]> {
        self.old_param_mask.as_deref()
    }

    pub fn output_dim(&self) -> usize {
        *self.widths().last().unwrap()
    }

    /// Width at every layer boundary, `layers().len() + 1` entries.
    pub fn widths(&self) -> Vec<usize> {
        let mut widths = vec![self.input_dim];
        for layer in &self.layers {
            let w = match layer {
                Layer::Affine(a) => a.n_out(),
                Layer::Relu => *widths.last().unwrap(),
            };
            widths.push(w);
        }
        widths
    }

    pub fn affine_layers(&self) -> impl Iterator<Item = (usize, &AffineLayer)> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.as_affine().map(|a| (i, a)))
    }

    pub fn hidden_affine_count(&self) -> usize {
        self.affine_layers().count() - 1
    }

    pub fn layout(&self) -> Vec<ParamBlock> {
        let mut offset = 0;
        self.affine_layers()
            .map(|(layer, a)| {
                let block = ParamBlock {
                    layer,
                    weights_offset: offset,
                    bias_offset: offset + a.n_out() * a.n_in(),
                    n_out: a.n_out(),
                    n_in: a.n_in(),
                };
                offset = block.end();
                block
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.affine_layers()
            .map(|(_, a)| a.n_out() * (a.n_in() + 1))
            .sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut theta = Vec::with_capacity(self.param_count());
        for (_, a) in self.affine_layers() {
            for row in &a.weights {
                theta.extend_from_slice(row);
            }
            theta.extend_from_slice(&a.bias);
        }
        theta
    }

    pub fn set_params(&mut self, theta: &[f64]) -> Result<()> {
        let n = self.param_count();
        if theta.len() != n {
            return Err(Error::dim("parameter vector", n, theta.len()));
        }
        let mut it = theta.iter().copied();
        for layer in &mut self.layers {
            if let Layer::Affine(a) = layer {
                for row in &mut a.weights {
                    for w in row.iter_mut() {
                        *w = it.next().unwrap();
                    }
                }
                for b in &mut a.bias {
                    *b = it.next().unwrap();
                }
            }
        }
        Ok(())
    }

    pub(crate) fn affine_mut(&mut self, layer: usize) -> &mut AffineLayer {
        match &mut self.layers[layer] {
            Layer::Affine(a) => a,
            Layer::Relu => panic!("layer {layer} is not affine"),
        }
    }

    /// Parameters that must stay zero: weights carrying a newly added neuron
    /// into a neuron copied from the predecessor network. Derived from
    /// `old_param_mask`; all false when there is no mask.
    pub fn severed_mask(&self) -> Vec<bool> {
        let mut severed = vec![false; self.param_count()];
        let Some(mask) = &self.old_param_mask else {
            return severed;
        };
        let layout = self.layout();
        for (i, block) in layout.iter().enumerate() {
            if i == 0 {
                continue;
            }
            let prev = &layout[i - 1];
            for r in 0..block.n_out {
                if !mask[block.bias_index(r)] {
                    continue;
                }
                for c in 0..block.n_in {
                    if !mask[prev.bias_index(c)] {
                        severed[block.weight_index(r, c)] = true;
                    }
                }
            }
        }
        severed
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardTrace> {
        if input.len() != self.input_dim {
            return Err(Error::dim("network input", self.input_dim, input.len()));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for layer in &self.layers {
            let x = activations.last().unwrap();
            let next = match layer {
                Layer::Affine(a) => a.apply(x),
                Layer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
            };
            activations.push(next);
        }
        Ok(ForwardTrace { activations })
    }

    pub fn predict(&self, input: &[f64]) -> Result<usize> {
        label(self.forward(input)?.output())
    }

    /// Reverse-mode accumulation. `adjoints[l]` is the derivative of the loss
    /// with respect to `trace.activations[l]` from terms attached directly to
    /// that boundary; contributions flowing back from later layers are added
    /// here. `adjoints[0]` is accepted but does not touch any parameter.
    pub fn gradient(&self, trace: &ForwardTrace, adjoints: &[Vec<f64>]) -> Result<Vec<f64>> {
        let widths = self.widths();
        if trace.activations.len() != widths.len() || adjoints.len() != widths.len() {
            return Err(Error::dim(
                "adjoint/trace layer count",
                widths.len(),
                adjoints.len().min(trace.activations.len()),
            ));
        }
        for (l, &w) in widths.iter().enumerate() {
            if adjoints[l].len() != w {
                return Err(Error::dim("adjoint width", w, adjoints[l].len()));
            }
            if trace.activations[l].len() != w {
                return Err(Error::dim("trace width", w, trace.activations[l].len()));
            }
        }

        let layout = self.layout();
        let mut grad = vec![0.0; self.param_count()];
        let mut blocks = layout.iter().rev();
        let k = self.layers.len();
        let mut delta = adjoints[k].clone();
        for l in (0..k).rev() {
            let input = &trace.activations[l];
            let mut back = match &self.layers[l] {
                Layer::Affine(a) => {
                    let block = blocks.next().unwrap();
                    let mut back = vec![0.0; a.n_in()];
                    for (r, (&d, row)) in delta.iter().zip(&a.weights).enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let start = block.weight_index(r, 0);
                        for (c, (&x, &w)) in input.iter().zip(row).enumerate() {
                            grad[start + c] += d * x;
                            back[c] += w * d;
                        }
                        grad[block.bias_index(r)] += d;
                    }
                    back
                }
                Layer::Relu => delta
                    .iter()
                    .zip(input)
                    .map(|(&d, &x)| if x > 0.0 { d } else { 0.0 })
                    .collect(),
            };
            for (b, a) in back.iter_mut().zip(&adjoints[l]) {
                *b += a;
            }
            delta = back;
        }
        Ok(grad)
    }

    /// `θ ← θ − lr·grad`.
    pub fn sgd_step(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        let mut theta = self.params();
        if grad.len() != theta.len() {
            return Err(Error::dim("gradient", theta.len(), grad.len()));
        }
        for (t, g) in theta.iter_mut().zip(grad) {
            *t -= lr * g;
        }
        self.set_params(&theta)
    }

    /// Adds neurons for a new task. Old rows never see new neurons (zero
    /// block); new rows see everything. New parameters are drawn uniformly
    /// from `[-init_scale, init_scale]`.
    pub fn grow(
        &self,
        hidden_add: &[usize],
        output_add: usize,
        init_scale: f64,
        seed: u64,
    ) -> Result<Network> {
        let hidden = self.hidden_affine_count();
        if hidden_add.len() != hidden {
            return Err(Error::InvalidInput(format!(
                "grow expects {hidden} hidden-layer additions, got {}",
                hidden_add.len()
            )));
        }
        if !(init_scale.is_finite() && init_scale >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "init_scale must be finite and non-negative, got {init_scale}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || {
            if init_scale == 0.0 {
                0.0
            } else {
                rng.gen_range(-init_scale..=init_scale)
            }
        };
        let adds: Vec<usize> = hidden_add
            .iter()
            .copied()
            .chain(std::iter::once(output_add))
            .collect();

        let mut layers = Vec::with_capacity(self.layers.len());
        let mut mask = Vec::new();
        let mut prev_add = 0;
        let mut affine_idx = 0;
        for layer in &self.layers {
            let Layer::Affine(a) = layer else {
                layers.push(Layer::Relu);
                continue;
            };
            let add = adds[affine_idx];
            let old_in = a.n_in();
            let new_in = old_in + prev_add;
            let mut weights = Vec::with_capacity(a.n_out() + add);
            for row in &a.weights {
                let mut r = row.clone();
                r.resize(new_in, 0.0);
                mask.extend(std::iter::repeat_n(true, old_in));
                mask.extend(std::iter::repeat_n(false, prev_add));
                weights.push(r);
            }
            for _ in 0..add {
                weights.push((0..new_in).map(|_| draw()).collect());
                mask.extend(std::iter::repeat_n(false, new_in));
            }
            let mut bias = a.bias.clone();
            mask.extend(std::iter::repeat_n(true, a.n_out()));
            for _ in 0..add {
                bias.push(draw());
                mask.push(false);
            }
            layers.push(Layer::Affine(AffineLayer { weights, bias }));
            prev_add = add;
            affine_idx += 1;
        }
        Network::new(self.input_dim, layers)?.with_old_param_mask(mask)
    }
}

/// Index of the largest logit; ties go to the lowest index.
pub fn label(logits: &[f64]) -> Result<usize> {
    let (first, rest) = logits
        .split_first()
        .ok_or_else(|| Error::InvalidInput("cannot label an empty logit vector".into()))?;
    let mut best = (0, *first);
    for (i, &v) in rest.iter().enumerate() {
        if v > best.1 {
            best = (i + 1, v);
        }
    }
    Ok(best.0)
}
