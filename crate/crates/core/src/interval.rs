//! Interval (box) abstract interpretation, property encodings and
//! certificates.
//!
//! A certificate is the list of boxes produced by [`analyze`]: one box per
//! layer boundary. It is valid for a network when every layer maps its box
//! into the next one and the output box entails the post-condition. Both
//! checks are local, so [`validate_certificate`] never re-runs the analysis.
//!
//! Certificates produced before a network was grown address only the leading
//! (old) neurons of each layer. Validation extends such a certificate with
//! propagated boxes for the remaining neurons; the post-condition is always
//! checked over the full output layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{AffineLayer, Layer, Network};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntervalRepr")]
pub struct Interval {
    pub lw: f64,
    pub up: f64,
}

#[derive(Deserialize)]
struct IntervalRepr {
    lw: f64,
    up: f64,
}

impl TryFrom<IntervalRepr> for Interval {
    type Error = Error;

    fn try_from(r: IntervalRepr) -> Result<Self> {
        Interval::new(r.lw, r.up)
    }
}

impl Interval {
    pub fn new(lw: f64, up: f64) -> Result<Self> {
        if lw.is_nan() || up.is_nan() || lw > up {
            return Err(Error::InvalidInput(format!("invalid interval [{lw}, {up}]")));
        }
        Ok(Interval { lw, up })
    }

    pub fn point(v: f64) -> Self {
        Interval { lw: v, up: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lw <= v && v <= self.up
    }

    /// `self ⊆ other`, compared bit-exactly with no slack.
    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.lw <= self.lw && self.up <= other.up
    }

    pub fn mid(&self) -> f64 {
        (self.lw + self.up) / 2.0
    }

    pub fn is_degenerate(&self) -> bool {
        self.lw == self.up
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lw = self.lw.max(other.lw);
        let up = self.up.min(other.up);
        (lw <= up).then_some(Interval { lw, up })
    }
}

/// One interval per neuron of a layer boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerBox(pub Vec<Interval>);

impl LayerBox {
    pub fn point(x: &[f64]) -> Self {
        LayerBox(x.iter().map(|&v| Interval::point(v)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.0.len() && self.0.iter().zip(x).all(|(i, &v)| i.contains(v))
    }

    pub fn is_subset_of(&self, other: &LayerBox) -> bool {
        self.len() == other.len() && self.0.iter().zip(&other.0).all(|(a, b)| a.is_subset_of(b))
    }
}

impl std::ops::Index<usize> for LayerBox {
    type Output = Interval;

    fn index(&self, i: usize) -> &Interval {
        &self.0[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label", rename_all = "snake_case")]
pub enum PostCondition {
    NotLabel(usize),
    IsLabel(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Property {
    Reachability {
        pre: LayerBox,
        post: PostCondition,
    },
    /// L∞ ball of radius `epsilon` around `x0` must keep label `y0_label`.
    Robustness {
        x0: Vec<f64>,
        y0_label: usize,
        epsilon: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clamp: Option<Interval>,
    },
    /// Changing feature `sensitive_index` among `sensitive_values` must not
    /// change the label. Other features may move by `epsilon_other`.
    Fairness {
        x: Vec<f64>,
        sensitive_index: usize,
        sensitive_values: Vec<f64>,
        #[serde(default)]
        epsilon_other: f64,
    },
}

impl Property {
    pub fn check(&self, input_dim: usize) -> Result<()> {
        match self {
            Property::Reachability { pre, .. } => {
                if pre.len() != input_dim {
                    return Err(Error::dim("reachability pre-box", input_dim, pre.len()));
                }
            }
            Property::Robustness { x0, epsilon, .. } => {
                if x0.len() != input_dim {
                    return Err(Error::dim("robustness anchor", input_dim, x0.len()));
                }
                if !(epsilon.is_finite() && *epsilon >= 0.0) {
                    return Err(Error::InvalidInput(format!("robustness epsilon {epsilon}")));
                }
            }
            Property::Fairness {
                x,
                sensitive_index,
                sensitive_values,
                epsilon_other,
            } => {
                if x.len() != input_dim {
                    return Err(Error::dim("fairness sample", input_dim, x.len()));
                }
                if *sensitive_index >= input_dim {
                    return Err(Error::InvalidInput(format!(
                        "sensitive index {sensitive_index} out of range for {input_dim} features"
                    )));
                }
                if sensitive_values.is_empty() {
                    return Err(Error::InvalidInput("no sensitive values".into()));
                }
                if !(epsilon_other.is_finite() && *epsilon_other >= 0.0) {
                    return Err(Error::InvalidInput(format!("fairness epsilon {epsilon_other}")));
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Property::Reachability { .. } => "reachability",
            Property::Robustness { .. } => "robustness",
            Property::Fairness { .. } => "fairness",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub property_id: String,
    pub property: Property,
    /// Sensitive value of the fairness variant this certificate covers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_tag: Option<f64>,
    pub post: PostCondition,
    pub boxes: Vec<LayerBox>,
}

impl Certificate {
    pub fn input_box(&self) -> &LayerBox {
        &self.boxes[0]
    }

    pub fn output_box(&self) -> &LayerBox {
        self.boxes.last().expect("certificate has boxes")
    }
}

/// Bounds of `w·x + b` over `x ∈ input`, with the sum accumulated in column
/// order before the bias is added (same order as [`AffineLayer::apply`]).
pub fn affine_row_bounds(weights: &[f64], bias: f64, input: &LayerBox) -> Interval {
    let (lo, hi) = weights
        .iter()
        .zip(&input.0)
        .fold((0.0, 0.0), |(lo, hi), (&w, iv)| {
            if w >= 0.0 {
                (lo + w * iv.lw, hi + w * iv.up)
            } else {
                (lo + w * iv.up, hi + w * iv.lw)
            }
        });
    Interval {
        lw: lo + bias,
        up: hi + bias,
    }
}

pub fn propagate_affine(input: &LayerBox, layer: &AffineLayer) -> Result<LayerBox> {
    if input.len() != layer.n_in() {
        return Err(Error::dim("affine box propagation", layer.n_in(), input.len()));
    }
    Ok(LayerBox(
        layer
            .weights
            .iter()
            .zip(&layer.bias)
            .map(|(row, &b)| affine_row_bounds(row, b, input))
            .collect(),
    ))
}

pub fn propagate_relu(input: &LayerBox) -> LayerBox {
    LayerBox(
        input
            .0
            .iter()
            .map(|iv| Interval {
                lw: iv.lw.max(0.0),
                up: iv.up.max(0.0),
            })
            .collect(),
    )
}

pub fn propagate(layer: &Layer, input: &LayerBox) -> Result<LayerBox> {
    match layer {
        Layer::Affine(a) => propagate_affine(input, a),
        Layer::Relu => Ok(propagate_relu(input)),
    }
}

/// Boxes at every layer boundary, starting with `input_box`.
pub fn analyze(net: &Network, input_box: &LayerBox) -> Result<Vec<LayerBox>> {
    if input_box.len() != net.input_dim() {
        return Err(Error::dim("analysis input box", net.input_dim(), input_box.len()));
    }
    let mut boxes = Vec::with_capacity(net.layers().len() + 1);
    boxes.push(input_box.clone());
    for layer in net.layers() {
        let next = propagate(layer, boxes.last().unwrap())?;
        boxes.push(next);
    }
    Ok(boxes)
}

/// Sufficient check that every point of `out` satisfies `post`.
pub fn check_post(out: &LayerBox, post: PostCondition) -> bool {
    match post {
        PostCondition::NotLabel(c) => {
            c < out.len()
                && out
                    .0
                    .iter()
                    .enumerate()
                    .any(|(j, iv)| j != c && iv.lw > out[c].up)
        }
        PostCondition::IsLabel(c) => {
            c < out.len()
                && out
                    .0
                    .iter()
                    .enumerate()
                    .all(|(j, iv)| j == c || out[c].lw > iv.up)
        }
    }
}

/// Input boxes for a property, each tagged with its fairness variant.
/// `default_clamp` applies to robustness properties that carry no clamp.
pub fn pre_boxes(
    prop: &Property,
    input_dim: usize,
    default_clamp: Option<Interval>,
) -> Result<Vec<(Option<f64>, LayerBox)>> {
    prop.check(input_dim)?;
    match prop {
        Property::Reachability { pre, .. } => Ok(vec![(None, pre.clone())]),
        Property::Robustness {
            x0, epsilon, clamp, ..
        } => {
            let clamp = clamp.or(default_clamp);
            let ivs = x0
                .iter()
                .map(|&v| {
                    let ball = Interval {
                        lw: v - epsilon,
                        up: v + epsilon,
                    };
                    match clamp {
                        Some(c) => ball.intersect(&c).ok_or_else(|| {
                            Error::InvalidInput(format!("anchor value {v} lies outside the clamp"))
                        }),
                        None => Ok(ball),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(vec![(None, LayerBox(ivs))])
        }
        Property::Fairness {
            x,
            sensitive_index,
            sensitive_values,
            epsilon_other,
        } => sensitive_values
            .iter()
            .map(|&v| {
                if let Some(c) = default_clamp {
                    if !c.contains(v) {
                        return Err(Error::InvalidInput(format!(
                            "sensitive value {v} outside clamp [{}, {}]",
                            c.lw, c.up
                        )));
                    }
                }
                let ivs = x
                    .iter()
                    .enumerate()
                    .map(|(i, &xi)| {
                        if i == *sensitive_index {
                            Interval::point(v)
                        } else {
                            Interval {
                                lw: xi - epsilon_other,
                                up: xi + epsilon_other,
                            }
                        }
                    })
                    .collect();
                Ok((Some(v), LayerBox(ivs)))
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    pub verified: bool,
    /// Populated only when `verified` is true.
    pub certificates: Vec<Certificate>,
}

pub fn verify(
    net: &Network,
    property_id: &str,
    prop: &Property,
    default_clamp: Option<Interval>,
) -> Result<Verification> {
    let variants = pre_boxes(prop, net.input_dim(), default_clamp)?;
    let mut certificates = Vec::with_capacity(variants.len());
    let mut verified = true;
    let mut fair_label = None;
    for (tag, input_box) in variants {
        let post = match prop {
            Property::Reachability { post, .. } => *post,
            Property::Robustness { y0_label, .. } => PostCondition::IsLabel(*y0_label),
            Property::Fairness {
                x, sensitive_index, ..
            } => {
                let mut xv = x.clone();
                xv[*sensitive_index] = tag.expect("fairness variants are tagged");
                let l = net.predict(&xv)?;
                if *fair_label.get_or_insert(l) != l {
                    verified = false;
                }
                PostCondition::IsLabel(l)
            }
        };
        let boxes = analyze(net, &input_box)?;
        if !check_post(boxes.last().unwrap(), post) {
            verified = false;
        }
        certificates.push(Certificate {
            property_id: property_id.to_string(),
            property: prop.clone(),
            variant_tag: tag,
            post,
            boxes,
        });
    }
    if !verified {
        certificates.clear();
    }
    Ok(Verification {
        verified,
        certificates,
    })
}

/// Verifies `(id, property)` pairs on up to `threads` worker threads. Results
/// come back in input order.
pub fn verify_all(
    net: &Network,
    props: &[(String, Property)],
    default_clamp: Option<Interval>,
    threads: usize,
) -> Result<Vec<Verification>> {
    let threads = threads.clamp(1, props.len().max(1));
    if threads == 1 {
        return props
            .iter()
            .map(|(id, p)| verify(net, id, p, default_clamp))
            .collect();
    }
    let chunk = props.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = props
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|(id, p)| verify(net, id, p, default_clamp))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(props.len());
        for h in handles {
            out.extend(h.join().expect("verification worker panicked")?);
        }
        Ok(out)
    })
}

fn check_structure(net: &Network, cert: &Certificate) -> Result<()> {
    let widths = net.widths();
    if cert.boxes.len() != widths.len() {
        return Err(Error::CertificateStructure(format!(
            "{}: {} boxes for a network with {} layer boundaries",
            cert.property_id,
            cert.boxes.len(),
            widths.len()
        )));
    }
    if cert.boxes[0].len() != widths[0] {
        return Err(Error::CertificateStructure(format!(
            "{}: input box has width {}, network input is {}",
            cert.property_id,
            cert.boxes[0].len(),
            widths[0]
        )));
    }
    for (l, layer) in net.layers().iter().enumerate() {
        let (w, have) = (widths[l + 1], cert.boxes[l + 1].len());
        let bad = have == 0
            || have > w
            || (matches!(layer, Layer::Relu) && have != cert.boxes[l].len());
        if bad {
            return Err(Error::CertificateStructure(format!(
                "{}: box {} has width {have}, layer width is {w}",
                cert.property_id,
                l + 1
            )));
        }
    }
    Ok(())
}

/// Layer-by-layer chain for `cert` against `net`. Entry `l` is the box used
/// as layer `l`'s input: the certificate's own intervals for the neurons it
/// addresses and propagated intervals for any neurons added after it was
/// issued. The boolean vector records, per layer, whether the propagated
/// image lies inside the certificate's next box.
pub(crate) struct Chain {
    pub boxes: Vec<LayerBox>,
    pub layer_ok: Vec<bool>,
}

pub(crate) fn chain(net: &Network, cert: &Certificate) -> Result<Chain> {
    check_structure(net, cert)?;
    let mut boxes = Vec::with_capacity(cert.boxes.len());
    let mut layer_ok = Vec::with_capacity(net.layers().len());
    boxes.push(cert.boxes[0].clone());
    for (l, layer) in net.layers().iter().enumerate() {
        let mut image = propagate(layer, &boxes[l])?;
        let target = &cert.boxes[l + 1];
        let ok = image.0[..target.len()]
            .iter()
            .zip(&target.0)
            .all(|(a, b)| a.is_subset_of(b));
        layer_ok.push(ok);
        image.0[..target.len()].copy_from_slice(&target.0);
        boxes.push(image);
    }
    Ok(Chain { boxes, layer_ok })
}

/// `Ok(true)` iff every layer maps the certificate's box into the next one
/// and the output box entails the post-condition. Structural mismatches are
/// errors rather than `false`.
pub fn validate_certificate(net: &Network, cert: &Certificate) -> Result<bool> {
    let c = chain(net, cert)?;
    Ok(c.layer_ok.iter().all(|&ok| ok) && check_post(c.boxes.last().unwrap(), cert.post))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn iv(lw: f64, up: f64) -> Interval {
        Interval::new(lw, up).unwrap()
    }

    fn phi13() -> LayerBox {
        LayerBox(vec![
            iv(-3.3497, 1.7532),
            iv(-5.6635, -4.7525),
            iv(2.0411, 2.3862),
            iv(0.4508, 1.9311),
            iv(1.1933, 4.2636),
        ])
    }

    fn phi7() -> LayerBox {
        LayerBox(vec![iv(-3.6951, -3.4523), iv(2.5819, 2.7624)])
    }

    #[test]
    fn zero_weights_give_bias_point() {
        let layer = AffineLayer::new(vec![vec![0.0, 0.0]; 3], vec![1.0, -2.0, 0.5]).unwrap();
        let out = propagate_affine(&LayerBox(vec![iv(-1.0, 4.0), iv(2.0, 3.0)]), &layer).unwrap();
        assert_eq!(out, LayerBox(vec![iv(1.0, 1.0), iv(-2.0, -2.0), iv(0.5, 0.5)]));
    }

    #[test]
    fn mixed_sign_row() {
        let layer = AffineLayer::new(vec![vec![1.0, -1.0]], vec![0.0]).unwrap();
        let out = propagate_affine(&LayerBox(vec![iv(0.0, 1.0), iv(0.0, 1.0)]), &layer).unwrap();
        assert_eq!(out, LayerBox(vec![iv(-1.0, 1.0)]));
    }

    #[test]
    fn affine_dimension_mismatch() {
        let layer = AffineLayer::new(vec![vec![1.0, -1.0]], vec![0.0]).unwrap();
        assert!(propagate_affine(&LayerBox(vec![iv(0.0, 1.0)]), &layer).is_err());
    }

    #[test]
    fn relu_cases() {
        let out = propagate_relu(&LayerBox(vec![iv(-2.0, -1.0), iv(-1.0, 3.0), iv(2.0, 5.0)]));
        assert_eq!(out, LayerBox(vec![iv(0.0, 0.0), iv(0.0, 3.0), iv(2.0, 5.0)]));
    }

    #[test]
    fn affine_monte_carlo_soundness() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let weights = (0..3)
            .map(|_| (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let bias = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let layer = AffineLayer::new(weights, bias).unwrap();
        let input = LayerBox(
            (0..4)
                .map(|_| {
                    let a: f64 = rng.gen_range(-1.0..1.0);
                    iv(a, a + rng.gen_range(0.0..1.0))
                })
                .collect(),
        );
        let out = propagate_affine(&input, &layer).unwrap();
        for _ in 0..10_000 {
            let x: Vec<f64> = input.0.iter().map(|i| rng.gen_range(i.lw..=i.up)).collect();
            assert!(out.contains(&layer.apply(&x)));
        }
    }

    #[test]
    fn point_box_analysis_matches_forward() {
        let net = Network::dense_relu(6, &[5, 4], 3, 8).unwrap();
        let x = [0.1, -0.4, 0.9, 0.0, 0.3, -0.7];
        let boxes = analyze(&net, &LayerBox::point(&x)).unwrap();
        let trace = net.forward(&x).unwrap();
        for (b, a) in boxes.iter().zip(&trace.activations) {
            assert_eq!(b, &LayerBox::point(a));
        }
    }

    #[test]
    fn hand_checked_two_layer_analysis() {
        // y = relu(x0 - x1 + 0.5); z = [2y - 1, -y + 1]
        let net = Network::new(
            2,
            vec![
                Layer::Affine(AffineLayer::new(vec![vec![1.0, -1.0]], vec![0.5]).unwrap()),
                Layer::Relu,
                Layer::Affine(AffineLayer::new(vec![vec![2.0], vec![-1.0]], vec![-1.0, 1.0]).unwrap()),
            ],
        )
        .unwrap();
        let boxes = analyze(&net, &LayerBox(vec![iv(0.0, 1.0), iv(0.0, 1.0)])).unwrap();
        assert_eq!(boxes[1], LayerBox(vec![iv(-0.5, 1.5)]));
        assert_eq!(boxes[2], LayerBox(vec![iv(0.0, 1.5)]));
        assert_eq!(boxes[3], LayerBox(vec![iv(-1.0, 2.0), iv(-0.5, 1.0)]));
    }

    #[test]
    fn check_post_on_reference_boxes() {
        assert!(check_post(&phi13(), PostCondition::NotLabel(0)));
        assert!(check_post(&phi7(), PostCondition::IsLabel(1)));
        assert!(!check_post(&phi7(), PostCondition::IsLabel(0)));
        let flat = LayerBox(vec![iv(1.0, 1.0); 3]);
        for c in 0..3 {
            assert!(!check_post(&flat, PostCondition::IsLabel(c)));
        }
        assert!(!check_post(&phi7(), PostCondition::IsLabel(5)));
    }

    #[test]
    fn robustness_boxes() {
        let prop = Property::Robustness {
            x0: vec![0.0, 0.5, 1.0],
            y0_label: 0,
            epsilon: 0.0,
            clamp: None,
        };
        let b = pre_boxes(&prop, 3, Some(iv(0.0, 1.0))).unwrap();
        assert_eq!(b, vec![(None, LayerBox::point(&[0.0, 0.5, 1.0]))]);

        let prop = Property::Robustness {
            x0: vec![0.0, 0.5, 1.0, 0.995],
            y0_label: 0,
            epsilon: 0.01,
            clamp: None,
        };
        let b = pre_boxes(&prop, 4, Some(iv(0.0, 1.0))).unwrap();
        let expected = [(0.0, 0.01), (0.49, 0.51), (0.99, 1.0), (0.985, 1.0)];
        for (got, (lw, up)) in b[0].1 .0.iter().zip(expected) {
            assert!((got.lw - lw).abs() < 1e-12 && (got.up - up).abs() < 1e-12);
        }
    }

    #[test]
    fn fairness_variant_boxes() {
        let prop = Property::Fairness {
            x: vec![0.3, 0.0, 0.7],
            sensitive_index: 1,
            sensitive_values: vec![0.0, 1.0],
            epsilon_other: 0.0,
        };
        let b = pre_boxes(&prop, 3, None).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].1, LayerBox::point(&[0.3, 0.0, 0.7]));
        assert_eq!(b[1].1, LayerBox::point(&[0.3, 1.0, 0.7]));
        assert!(pre_boxes(&prop, 3, Some(iv(0.0, 0.5))).is_err());
    }

    #[test]
    fn property_checks() {
        let prop = Property::Fairness {
            x: vec![0.3],
            sensitive_index: 1,
            sensitive_values: vec![0.0],
            epsilon_other: 0.0,
        };
        assert!(prop.check(1).is_err());
        let prop = Property::Robustness {
            x0: vec![0.3],
            y0_label: 0,
            epsilon: -1.0,
            clamp: None,
        };
        assert!(prop.check(1).is_err());
    }

    fn robust_setup() -> (Network, Certificate) {
        let net = Network::dense_relu(4, &[6, 5], 3, 21).unwrap();
        let x0 = vec![0.2, 0.4, 0.6, 0.8];
        let y0 = net.predict(&x0).unwrap();
        let prop = Property::Robustness {
            x0,
            y0_label: y0,
            epsilon: 1e-3,
            clamp: None,
        };
        let v = verify(&net, "p0", &prop, None).unwrap();
        assert!(v.verified);
        (net, v.certificates.into_iter().next().unwrap())
    }

    #[test]
    fn epsilon_zero_always_verifies_the_prediction() {
        let net = Network::dense_relu(4, &[6, 5], 3, 2).unwrap();
        let x0 = vec![0.9, 0.1, 0.3, 0.5];
        let prop = Property::Robustness {
            x0: x0.clone(),
            y0_label: net.predict(&x0).unwrap(),
            epsilon: 0.0,
            clamp: None,
        };
        assert!(verify(&net, "p", &prop, None).unwrap().verified);
    }

    #[test]
    fn fresh_certificate_validates() {
        let (net, cert) = robust_setup();
        assert!(validate_certificate(&net, &cert).unwrap());
    }

    #[test]
    fn output_bias_shift_breaks_certificate() {
        let (mut net, cert) = robust_setup();
        let last = net.layers().len() - 1;
        net.affine_mut(last).bias[0] += 1000.0;
        assert!(!validate_certificate(&net, &cert).unwrap());
    }

    #[test]
    fn widened_output_box_stays_valid() {
        let (net, mut cert) = robust_setup();
        let c = match cert.post {
            PostCondition::IsLabel(c) => c,
            _ => unreachable!(),
        };
        // widen every bound except the ones check_post relies on
        let k = cert.boxes.len() - 1;
        for (j, b) in cert.boxes[k].0.iter_mut().enumerate() {
            if j == c {
                b.up += 1.0;
            } else {
                b.lw -= 1.0;
            }
        }
        assert!(validate_certificate(&net, &cert).unwrap());
    }

    #[test]
    fn structural_mismatch_is_an_error() {
        let (net, mut cert) = robust_setup();
        cert.boxes.pop();
        assert!(matches!(
            validate_certificate(&net, &cert),
            Err(Error::CertificateStructure(_))
        ));
    }

    #[test]
    fn certificate_serde_round_trip() {
        let (net, cert) = robust_setup();
        let text = serde_json::to_string(&cert).unwrap();
        let back: Certificate = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cert);
        assert!(validate_certificate(&net, &back).unwrap());
        assert!(serde_json::from_str::<Interval>(r#"{"lw":2,"up":1}"#).is_err());
    }

    #[test]
    fn grown_network_keeps_old_certificate_chain() {
        let (net, cert) = robust_setup();
        // growing only hidden neurons keeps old outputs unchanged, the
        // extended chain must still validate.
        let grown = net.grow(&[3, 2], 0, 0.05, 1).unwrap();
        assert!(validate_certificate(&grown, &cert).unwrap());
    }

    #[test]
    fn parallel_verification_matches_serial() {
        let net = Network::dense_relu(3, &[4], 2, 5).unwrap();
        let props: Vec<(String, Property)> = (0..7)
            .map(|i| {
                let x0 = vec![0.1 * i as f64, 0.5, 0.2];
                (
                    format!("p{i}"),
                    Property::Robustness {
                        y0_label: net.predict(&x0).unwrap(),
                        x0,
                        epsilon: 0.01,
                        clamp: None,
                    },
                )
            })
            .collect();
        let serial = verify_all(&net, &props, None, 1).unwrap();
        let parallel = verify_all(&net, &props, None, 3).unwrap();
        assert_eq!(serial, parallel);
    }
}
