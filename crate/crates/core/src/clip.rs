//! Bias clipping against interval certificates, direct interpolants for
//! box-vs-label constraints, and K-factor relaxation of output bounds.
//!
//! For an affine neuron `x = w·xᵢ + b` whose certificate demands `x ∈ [lw, up]`
//! given `xᵢ ∈ φ`, any bias in `[lw − min(w·xᵢ), up − max(w·xᵢ)]` restores the
//! constraint. With several certificates the feasible biases are the
//! intersection `[max_lw, min_up]` of their individual ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{
    affine_row_bounds, analyze, chain, check_post, propagate, validate_certificate, Certificate, Interval,
    LayerBox, PostCondition,
};
use crate::nn::{Layer, Network};

/// Floor applied to `|bound|` during relaxation so zero bounds still widen.
pub const RELAX_FLOOR: f64 = 0.1;

/// Bounds of `w·x + b` over `in_box`, bias included.
pub fn preactivation_bounds(w: &[f64], b: f64, in_box: &LayerBox) -> Result<(f64, f64)> {
    if w.len() != in_box.len() {
        return Err(Error::dim("preactivation bounds", w.len(), in_box.len()));
    }
    let iv = affine_row_bounds(w, b, in_box);
    Ok((iv.lw, iv.up))
}

/// `(max_lw, min_up)` for one neuron: the range of biases that keeps the
/// neuron inside every `(input box, target)` constraint. Feasible iff
/// `max_lw < min_up`.
pub fn bias_window(w: &[f64], constraints: &[(&LayerBox, Interval)]) -> Result<(f64, f64)> {
    let mut max_lw = f64::NEG_INFINITY;
    let mut min_up = f64::INFINITY;
    for (in_box, target) in constraints {
        let (lo, hi) = preactivation_bounds(w, 0.0, in_box)?;
        max_lw = max_lw.max(target.lw - lo);
        min_up = min_up.min(target.up - hi);
    }
    Ok((max_lw, min_up))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronRef {
    /// Index into [`Network::layers`].
    pub layer: usize,
    pub neuron: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CertStatus {
    Untouched,
    /// Invalid after training, replaced by a fresh certificate from the
    /// verifier.
    Reverified,
    Clipped { neurons: Vec<NeuronRef> },
    RelaxedAndClipped { k: f64, neurons: Vec<NeuronRef> },
    /// Boxes recomputed on the current network, then output biases clipped
    /// to satisfy the post-condition.
    ReanalyzedAndClipped { neurons: Vec<NeuronRef> },
    Dropped { reason: String },
}

impl CertStatus {
    pub fn survives(&self) -> bool {
        !matches!(self, CertStatus::Dropped { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertOutcome {
    pub property_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_tag: Option<f64>,
    #[serde(flatten)]
    pub status: CertStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasDelta {
    pub layer: usize,
    pub neuron: usize,
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClipOutcome {
    /// One entry per input certificate, in input order.
    pub certificates: Vec<CertOutcome>,
    /// Indices of the surviving certificates.
    pub surviving: Vec<usize>,
    /// Net bias changes of the returned network relative to the input.
    pub bias_deltas: Vec<BiasDelta>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipOptions {
    /// Always move the bias to the window midpoint, even when the current
    /// bias already satisfies every certificate.
    #[serde(default)]
    pub strict_alg2: bool,
}

/// Relative gap kept below a one-sided bias ceiling.
const ONE_SIDED_MARGIN: f64 = 1e-6;

/// Target for an output neuron the certificate does not cover (it was added
/// by growth): `IsLabel(c)` needs it strictly below `lw_c`. Other
/// post-conditions place no demand on it.
fn new_output_target(out: &LayerBox, post: PostCondition) -> Option<Interval> {
    match post {
        PostCondition::IsLabel(c) if c < out.len() => Some(Interval {
            lw: f64::NEG_INFINITY,
            up: out[c].lw.next_down(),
        }),
        _ => None,
    }
}

fn neuron_ok(w: &[f64], b: f64, constraints: &[(&LayerBox, Interval)]) -> bool {
    constraints
        .iter()
        .all(|(in_box, target)| affine_row_bounds(w, b, in_box).is_subset_of(target))
}

/// Processes certificates in order, growing an accepted set. For each
/// certificate every affine neuron is brought inside the joint bias window
/// of all accepted certificates that address it; if some window is empty,
/// the certificate is dropped and the biases it changed are restored.
pub fn clip(net: &Network, certs: &[Certificate], opts: ClipOptions) -> Result<(Network, ClipOutcome)> {
    for cert in certs {
        // surfaces structural errors before any mutation
        chain(net, cert)?;
    }
    let mut work = net.clone();
    let mut accepted: Vec<usize> = Vec::new();
    let mut outcome = ClipOutcome::default();

    for (i, cert) in certs.iter().enumerate() {
        let snapshot = work.clone();
        accepted.push(i);
        let status = match clip_pass(&mut work, certs, &accepted, opts)? {
            Ok(neurons) => {
                if neurons.is_empty() {
                    CertStatus::Untouched
                } else {
                    CertStatus::Clipped { neurons }
                }
            }
            Err(reason) => {
                work = snapshot;
                accepted.pop();
                CertStatus::Dropped { reason }
            }
        };
        outcome.certificates.push(CertOutcome {
            property_id: cert.property_id.clone(),
            variant_tag: cert.variant_tag,
            status,
        });
    }

    outcome.surviving = accepted;
    for block in net.layout() {
        let before = net.layers()[block.layer].as_affine().unwrap();
        let after = work.layers()[block.layer].as_affine().unwrap();
        for (n, (&b0, &b1)) in before.bias.iter().zip(&after.bias).enumerate() {
            if b0.to_bits() != b1.to_bits() {
                outcome.bias_deltas.push(BiasDelta {
                    layer: block.layer,
                    neuron: n,
                    before: b0,
                    after: b1,
                });
            }
        }
    }
    Ok((work, outcome))
}

/// One outer iteration: sweep all layers against the accepted set. The inner
/// `Err` carries the reason the newest certificate must be dropped.
fn clip_pass(
    net: &mut Network,
    certs: &[Certificate],
    accepted: &[usize],
    opts: ClipOptions,
) -> Result<std::result::Result<Vec<NeuronRef>, String>> {
    let mut touched = Vec::new();
    // running input box per accepted certificate
    let mut current: Vec<LayerBox> = accepted.iter().map(|&i| certs[i].boxes[0].clone()).collect();

    for l in 0..net.layers().len() {
        let targets: Vec<&LayerBox> = accepted.iter().map(|&i| &certs[i].boxes[l + 1]).collect();
        match &net.layers()[l] {
            Layer::Relu => {
                for (a, (cur, target)) in current.iter().zip(&targets).enumerate() {
                    let image = propagate(&Layer::Relu, cur)?;
                    if !image.0[..target.len()]
                        .iter()
                        .zip(&target.0)
                        .all(|(x, t)| x.is_subset_of(t))
                    {
                        return Ok(Err(format!(
                            "activation box {} of {} is not closed under ReLU",
                            l + 1,
                            certs[accepted[a]].property_id
                        )));
                    }
                }
            }
            Layer::Affine(layer) => {
                let n_out = layer.n_out();
                let is_output = l + 1 == net.layers().len();
                for n in 0..n_out {
                    let constraints: Vec<(&LayerBox, Interval)> = current
                        .iter()
                        .zip(&targets)
                        .zip(accepted)
                        .filter_map(|((cur, t), &i)| {
                            if n < t.len() {
                                Some((cur, t.0[n]))
                            } else if is_output {
                                new_output_target(t, certs[i].post).map(|iv| (cur, iv))
                            } else {
                                None
                            }
                        })
                        .collect();
                    if constraints.is_empty() {
                        continue;
                    }
                    let a = net.affine_mut(l);
                    let w = &a.weights[n];
                    if !opts.strict_alg2 && neuron_ok(w, a.bias[n], &constraints) {
                        continue;
                    }
                    let (max_lw, min_up) = bias_window(w, &constraints)?;
                    if !(max_lw < min_up) {
                        return Ok(Err(format!(
                            "empty bias window at layer {l} neuron {n}: max_lw {max_lw} >= min_up {min_up}"
                        )));
                    }
                    let b = if max_lw == f64::NEG_INFINITY {
                        // one-sided window: stay just below the ceiling
                        min_up - ONE_SIDED_MARGIN * min_up.abs().max(1.0)
                    } else {
                        (max_lw + min_up) / 2.0
                    };
                    if !neuron_ok(w, b, &constraints) {
                        return Ok(Err(format!(
                            "bias window at layer {l} neuron {n} too narrow for floating point"
                        )));
                    }
                    if a.bias[n].to_bits() != b.to_bits() {
                        a.bias[n] = b;
                        touched.push(NeuronRef { layer: l, neuron: n });
                    }
                }
            }
        }
        let layer = &net.layers()[l];
        for (cur, target) in current.iter_mut().zip(&targets) {
            let mut next = propagate(layer, cur)?;
            next.0[..target.len()].copy_from_slice(&target.0);
            *cur = next;
        }
    }

    for (cur, &i) in current.iter().zip(accepted) {
        if !check_post(cur, certs[i].post) {
            return Ok(Err(format!(
                "output box of {} does not entail its post-condition",
                certs[i].property_id
            )));
        }
    }
    // Layer sweeps above only ever tighten toward the certificates; this is
    // the end-to-end guard that every accepted certificate still holds.
    for &i in accepted {
        if !validate_certificate(net, &certs[i])? {
            return Ok(Err(format!(
                "{} fails validation after clipping",
                certs[i].property_id
            )));
        }
    }
    Ok(Ok(touched))
}

/// `x[winner] ≥ x[loser] + delta`
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffConstraint {
    pub winner: usize,
    pub loser: usize,
    pub delta: f64,
}

/// Conjunction of difference constraints sitting between an output box and
/// a post-condition: the box implies it, and it implies the post-condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interpolant {
    pub constraints: Vec<DiffConstraint>,
}

impl Interpolant {
    pub fn holds_on(&self, out: &LayerBox) -> bool {
        self.constraints
            .iter()
            .all(|c| out[c.winner].lw - out[c.loser].up >= c.delta)
    }
}

pub fn interpolate(out: &LayerBox, post: PostCondition) -> Result<Interpolant> {
    if !check_post(out, post) {
        return Err(Error::CannotInterpolate(format!(
            "output box does not entail {post:?}"
        )));
    }
    let constraints = match post {
        PostCondition::NotLabel(c) => {
            let up_c = out[c].up;
            let (winner, delta) = out
                .0
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != c)
                .map(|(j, iv)| (j, iv.lw - up_c))
                .fold(None, |best: Option<(usize, f64)>, cand| match best {
                    Some(b) if b.1 >= cand.1 => Some(b),
                    _ => Some(cand),
                })
                .expect("check_post guarantees a competitor");
            vec![DiffConstraint {
                winner,
                loser: c,
                delta,
            }]
        }
        PostCondition::IsLabel(c) => {
            let lw_c = out[c].lw;
            out.0
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != c)
                .map(|(j, iv)| DiffConstraint {
                    winner: c,
                    loser: j,
                    delta: lw_c - iv.up,
                })
                .collect()
        }
    };
    Ok(Interpolant { constraints })
}

/// Widens the output bounds an interpolant leaves free: the upper bound of
/// each winner and the lower bound of each loser, by `k·max(|bound|, 0.1)`.
/// Each bound is widened once. Neurons beyond the certificate's output width
/// are skipped.
pub fn relax(cert: &Certificate, itp: &Interpolant, k: f64) -> Result<Certificate> {
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::InvalidInput(format!("relaxation factor {k}")));
    }
    let mut out = cert.clone();
    let last = out.boxes.last_mut().unwrap();
    let width = last.len();
    let mut widened_up = vec![false; width];
    let mut widened_lw = vec![false; width];
    for c in &itp.constraints {
        if c.winner < width && !widened_up[c.winner] {
            let up = &mut last.0[c.winner].up;
            *up += k * up.abs().max(RELAX_FLOOR);
            widened_up[c.winner] = true;
        }
        if c.loser < width && !widened_lw[c.loser] {
            let lw = &mut last.0[c.loser].lw;
            *lw -= k * lw.abs().max(RELAX_FLOOR);
            widened_lw[c.loser] = true;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Repair {
    pub network: Network,
    pub status: CertStatus,
    /// The certificate to keep (relaxed when relaxation was needed).
    pub certificate: Option<Certificate>,
}

/// Restores one broken certificate while keeping `accepted` valid: plain
/// clipping first, then clipping against output boxes relaxed by each `K` of
/// `k_schedule` in turn. On failure the network is returned unchanged.
pub fn repair(
    net: &Network,
    broken: &Certificate,
    accepted: &[Certificate],
    k_schedule: &[f64],
    opts: ClipOptions,
) -> Result<Repair> {
    if validate_certificate(net, broken)? {
        return Ok(Repair {
            network: net.clone(),
            status: CertStatus::Untouched,
            certificate: Some(broken.clone()),
        });
    }

    let attempt = |cert: &Certificate| -> Result<Option<(Network, Vec<NeuronRef>)>> {
        let mut all = accepted.to_vec();
        all.push(cert.clone());
        let (clipped, outcome) = clip(net, &all, opts)?;
        if outcome.surviving.len() != all.len() {
            return Ok(None);
        }
        let neurons = match &outcome.certificates.last().unwrap().status {
            CertStatus::Clipped { neurons } => neurons.clone(),
            _ => Vec::new(),
        };
        Ok(Some((clipped, neurons)))
    };

    if let Some((network, neurons)) = attempt(broken)? {
        return Ok(Repair {
            network,
            status: CertStatus::Clipped { neurons },
            certificate: Some(broken.clone()),
        });
    }

    // The certificate's own output box entails its post-condition; outputs
    // added by growth are bounded by the clipping pass instead.
    let itp = match interpolate(broken.output_box(), broken.post) {
        Ok(itp) => itp,
        Err(e) => {
            return Ok(Repair {
                network: net.clone(),
                status: CertStatus::Dropped {
                    reason: e.to_string(),
                },
                certificate: None,
            })
        }
    };
    for &k in k_schedule {
        let relaxed = relax(broken, &itp, k)?;
        if let Some((network, neurons)) = attempt(&relaxed)? {
            return Ok(Repair {
                network,
                status: CertStatus::RelaxedAndClipped { k, neurons },
                certificate: Some(relaxed),
            });
        }
    }
    // Last resort: the old hidden boxes are out of reach, so certify the
    // same input box against the current weights and let clipping fix the
    // output layer.
    let mut fresh = broken.clone();
    fresh.boxes = analyze(net, broken.input_box())?;
    // outputs the certificate never covered get one-sided targets in clipping
    fresh.boxes.last_mut().unwrap().0.truncate(broken.output_box().len());
    if let Some((network, neurons)) = attempt(&fresh)? {
        return Ok(Repair {
            network,
            status: CertStatus::ReanalyzedAndClipped { neurons },
            certificate: Some(fresh),
        });
    }
    Ok(Repair {
        network: net.clone(),
        status: CertStatus::Dropped {
            reason: format!("clipping infeasible for every K in {k_schedule:?} and on re-analyzed boxes"),
        },
        certificate: None,
    })
}

/// Per-neuron bias windows of `certs` (jointly) for debugging.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuronWindow {
    pub layer: usize,
    pub neuron: usize,
    pub bias: f64,
    pub max_lw: f64,
    pub min_up: f64,
    pub feasible: bool,
    pub satisfied: bool,
}

pub fn bias_windows(net: &Network, certs: &[Certificate]) -> Result<Vec<NeuronWindow>> {
    let chains = certs
        .iter()
        .map(|c| chain(net, c))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        let Layer::Affine(a) = layer else { continue };
        for n in 0..a.n_out() {
            let constraints: Vec<(&LayerBox, Interval)> = chains
                .iter()
                .zip(certs)
                .filter(|(_, c)| n < c.boxes[l + 1].len())
                .map(|(ch, c)| (&ch.boxes[l], c.boxes[l + 1].0[n]))
                .collect();
            if constraints.is_empty() {
                continue;
            }
            let (max_lw, min_up) = bias_window(&a.weights[n], &constraints)?;
            out.push(NeuronWindow {
                layer: l,
                neuron: n,
                bias: a.bias[n],
                max_lw,
                min_up,
                feasible: max_lw < min_up,
                satisfied: neuron_ok(&a.weights[n], a.bias[n], &constraints),
            });
        }
    }
    Ok(out)
}
