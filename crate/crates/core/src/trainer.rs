//! Composite-loss training and the certified continual-learning round.
//!
//! The training objective is
//!
//! ```text
//! mean cross-entropy + α · Reg / |batch| + β · Σ_{old p} (θ(p) − θ₀(p))²
//! ```
//!
//! where `Reg` sums, over certificates whose input box contains a sample,
//! the squared distance of every escaped activation to its interval
//! midpoint. The anchor term only exists for grown networks.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, LabeledSample, Origin};
use crate::clip::{repair, CertOutcome, CertStatus, ClipOptions};
use crate::error::{Error, Result};
use crate::interval::{validate_certificate, verify, Certificate, Interval};
use crate::nn::{ForwardTrace, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub per_cert_samples: usize,
    pub seed: u64,
    pub k_schedule: Vec<f64>,
    pub old_data_fraction: f64,
    /// Half-width of the uniform initializer for grown neurons.
    pub init_scale: f64,
    pub strict_alg2: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            epochs: 10,
            batch_size: 32,
            alpha: 0.001,
            beta: 0.001,
            per_cert_samples: 10,
            seed: 0,
            k_schedule: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            old_data_fraction: 0.2,
            init_scale: 0.1,
            strict_alg2: false,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad("alpha and beta must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.old_data_fraction) {
            return bad(format!("old_data_fraction {} outside [0, 1]", self.old_data_fraction));
        }
        if self.k_schedule.iter().any(|&k| !(k.is_finite() && k > 0.0))
            || self.k_schedule.windows(2).any(|w| w[0] >= w[1])
        {
            return bad(format!("k_schedule {:?} must be positive and strictly increasing", self.k_schedule));
        }
        Ok(())
    }

    pub fn clip_options(&self) -> ClipOptions {
        ClipOptions {
            strict_alg2: self.strict_alg2,
        }
    }
}

/// Retraining variant. Baselines never clip; `ds` adds certificate-based
/// samples, `od` mixes in a fraction of the old training data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "baseline+ds")]
    BaselineDs,
    #[serde(rename = "baseline+od")]
    BaselineOd,
    #[serde(rename = "ccl")]
    Ccl,
    #[serde(rename = "ccl+od")]
    CclOd,
}

impl Mode {
    pub fn augments(self) -> bool {
        matches!(self, Mode::BaselineDs | Mode::Ccl | Mode::CclOd)
    }

    pub fn uses_old_data(self) -> bool {
        matches!(self, Mode::BaselineOd | Mode::CclOd)
    }

    pub fn regularizes(self) -> bool {
        matches!(self, Mode::Ccl | Mode::CclOd)
    }

    pub fn clips(self) -> bool {
        matches!(self, Mode::Ccl | Mode::CclOd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::BaselineDs => "baseline+ds",
            Mode::BaselineOd => "baseline+od",
            Mode::Ccl => "ccl",
            Mode::CclOd => "ccl+od",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown mode {s:?}")))
    }
}

/// 0 inside `[lw, up]`, squared distance to the midpoint outside.
pub fn dist(v: f64, iv: &Interval) -> f64 {
    if iv.contains(v) {
        0.0
    } else {
        let d = v - iv.mid();
        d * d
    }
}

/// Derivative of [`dist`] in `v`; the boundary counts as inside.
pub fn dist_grad(v: f64, iv: &Interval) -> f64 {
    if iv.contains(v) {
        0.0
    } else {
        2.0 * (v - iv.mid())
    }
}

fn check_cert_alignment(trace: &ForwardTrace, cert: &Certificate) -> Result<()> {
    if cert.boxes.len() != trace.activations.len() {
        return Err(Error::CertificateStructure(format!(
            "{}: {} boxes against a trace of {} layers",
            cert.property_id,
            cert.boxes.len(),
            trace.activations.len()
        )));
    }
    for (b, a) in cert.boxes.iter().zip(&trace.activations) {
        if b.len() > a.len() {
            return Err(Error::CertificateStructure(format!(
                "{}: box of width {} exceeds layer width {}",
                cert.property_id,
                b.len(),
                a.len()
            )));
        }
    }
    Ok(())
}

/// Certificate penalty for one sample. Zero unless `input` lies in the
/// certificate's input box; neurons the certificate does not address are
/// ignored.
pub fn rho(trace: &ForwardTrace, input: &[f64], cert: &Certificate) -> Result<f64> {
    check_cert_alignment(trace, cert)?;
    if !cert.input_box().contains(input) {
        return Ok(0.0);
    }
    Ok(cert
        .boxes
        .iter()
        .zip(&trace.activations)
        .skip(1)
        .flat_map(|(b, a)| b.0.iter().zip(a))
        .map(|(iv, &v)| dist(v, iv))
        .sum())
}

pub fn reg(traces: &[ForwardTrace], inputs: &[Vec<f64>], certs: &[Certificate]) -> Result<f64> {
    if traces.len() != inputs.len() {
        return Err(Error::dim("reg traces vs inputs", inputs.len(), traces.len()));
    }
    let mut total = 0.0;
    for cert in certs {
        for (t, x) in traces.iter().zip(inputs) {
            total += rho(t, x, cert)?;
        }
    }
    Ok(total)
}

/// Squared drift of the parameters flagged in `mask` from `theta0`.
pub fn anchor(theta: &[f64], theta0: &[f64], mask: &[bool]) -> Result<f64> {
    if theta.len() != theta0.len() || theta.len() != mask.len() {
        return Err(Error::dim("anchor", theta.len(), theta0.len().min(mask.len())));
    }
    Ok(theta
        .iter()
        .zip(theta0)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((t, t0), _)| (t0 - t) * (t0 - t))
        .sum())
}

pub fn anchor_grad(theta: &[f64], theta0: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if theta.len() != theta0.len() || theta.len() != mask.len() {
        return Err(Error::dim("anchor", theta.len(), theta0.len().min(mask.len())));
    }
    Ok(theta
        .iter()
        .zip(theta0)
        .zip(mask)
        .map(|((t, t0), &m)| if m { 2.0 * (t - t0) } else { 0.0 })
        .collect())
}

/// Numerically stable softmax cross-entropy; returns `(loss, dloss/dlogits)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::InvalidInput(format!(
            "label {label} out of range for {} outputs",
            logits.len()
        )));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    let mut grad: Vec<f64> = logits.iter().map(|z| (z - lse).exp()).collect();
    grad[label] -= 1.0;
    Ok((lse - logits[label], grad))
}

/// Per-sample adjoints for the cross-entropy term, scaled by `scale`.
fn ce_adjoints(net: &Network, trace: &ForwardTrace, label: usize, scale: f64) -> Result<(f64, Vec<Vec<f64>>)> {
    let (loss, g) = softmax_cross_entropy(trace.output(), label)?;
    let mut adj: Vec<Vec<f64>> = net.widths().iter().map(|&w| vec![0.0; w]).collect();
    let last = adj.last_mut().unwrap();
    for (a, gi) in last.iter_mut().zip(g) {
        *a = gi * scale;
    }
    Ok((loss, adj))
}

fn add_into(acc: &mut [f64], g: &[f64]) {
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// Mean cross-entropy over the batch and its gradient.
pub fn cross_entropy_loss(net: &Network, batch: &[&LabeledSample]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; net.param_count()];
    for s in batch {
        let trace = net.forward(&s.input)?;
        let (l, adj) = ce_adjoints(net, &trace, s.label, scale)?;
        loss += l;
        add_into(&mut grad, &net.gradient(&trace, &adj)?);
    }
    Ok((loss * scale, grad))
}

/// Loss weights and the anchor reference for [`composite_loss`].
#[derive(Clone, Copy, Debug)]
pub struct Objective<'a> {
    pub alpha: f64,
    pub beta: f64,
    pub certs: &'a [Certificate],
    /// Parameters at the start of retraining; the anchor is active only when
    /// this is set and the network carries an old-parameter mask.
    pub theta0: Option<&'a [f64]>,
}

impl Objective<'_> {
    pub fn plain() -> Objective<'static> {
        Objective {
            alpha: 0.0,
            beta: 0.0,
            certs: &[],
            theta0: None,
        }
    }
}

pub fn composite_loss(net: &Network, batch: &[&LabeledSample], obj: &Objective) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    let use_reg = obj.alpha > 0.0 && !obj.certs.is_empty();
    let scale = 1.0 / batch.len() as f64;
    let mut ce_total = 0.0;
    let mut reg_total = 0.0;
    let mut grad = vec![0.0; net.param_count()];
    for s in batch {
        let trace = net.forward(&s.input)?;
        let (l, mut adj) = ce_adjoints(net, &trace, s.label, scale)?;
        ce_total += l;
        if use_reg {
            let w = obj.alpha * scale;
            for cert in obj.certs {
                check_cert_alignment(&trace, cert)?;
                if !cert.input_box().contains(&s.input) {
                    continue;
                }
                for (l, (bx, act)) in cert.boxes.iter().zip(&trace.activations).enumerate().skip(1) {
                    for (i, (iv, &v)) in bx.0.iter().zip(act).enumerate() {
                        let d = dist(v, iv);
                        if d > 0.0 {
                            reg_total += d;
                            adj[l][i] += w * dist_grad(v, iv);
                        }
                    }
                }
            }
        }
        add_into(&mut grad, &net.gradient(&trace, &adj)?);
    }
    let mut loss = ce_total * scale;
    if use_reg {
        loss += obj.alpha * reg_total * scale;
    }
    if let (true, Some(theta0), Some(mask)) = (obj.beta > 0.0, obj.theta0, net.old_param_mask()) {
        let theta = net.params();
        loss += obj.beta * anchor(&theta, theta0, mask)?;
        let ag = anchor_grad(&theta, theta0, mask)?;
        for (g, a) in grad.iter_mut().zip(ag) {
            *g += obj.beta * a;
        }
    }
    Ok((loss, grad))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: f64,
    /// label → (correct, total)
    pub per_label: BTreeMap<usize, (usize, usize)>,
}

impl Accuracy {
    pub fn of_labels(&self, labels: &[usize]) -> f64 {
        let (c, t) = labels
            .iter()
            .filter_map(|l| self.per_label.get(l))
            .fold((0, 0), |(c, t), &(ci, ti)| (c + ci, t + ti));
        if t == 0 {
            0.0
        } else {
            c as f64 / t as f64
        }
    }
}

pub fn evaluate(net: &Network, samples: &[LabeledSample]) -> Result<Accuracy> {
    let mut per_label: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for s in samples {
        let hit = net.predict(&s.input)? == s.label;
        let e = per_label.entry(s.label).or_default();
        e.1 += 1;
        if hit {
            e.0 += 1;
            correct += 1;
        }
    }
    Ok(Accuracy {
        overall: if samples.is_empty() {
            0.0
        } else {
            correct as f64 / samples.len() as f64
        },
        per_label,
    })
}

/// Shared epoch loop: seeded shuffling, mini-batches, SGD, severed weights
/// held at zero, and epoch-best selection when `validation` is given.
fn sgd_epochs<F>(
    net: &mut Network,
    data: &[LabeledSample],
    cfg: &TrainConfig,
    validation: Option<&[LabeledSample]>,
    mut grad_fn: F,
) -> Result<()>
where
    F: FnMut(&Network, &[&LabeledSample]) -> Result<(f64, Vec<f64>)>,
{
    if data.is_empty() || cfg.epochs == 0 {
        return Ok(());
    }
    let severed = net.severed_mask();
    let any_severed = severed.iter().any(|&s| s);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best: Option<(f64, Network)> = None;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&LabeledSample> = chunk.iter().map(|&i| &data[i]).collect();
            let (_, mut grad) = grad_fn(net, &batch)?;
            if any_severed {
                for (g, &s) in grad.iter_mut().zip(&severed) {
                    if s {
                        *g = 0.0;
                    }
                }
            }
            net.sgd_step(&grad, cfg.lr)?;
        }
        if let Some(val) = validation {
            let acc = evaluate(net, val)?.overall;
            // ties go to the later, longer-trained epoch
            if best.as_ref().is_none_or(|(b, _)| acc >= *b) {
                best = Some((acc, net.clone()));
            }
        }
    }
    if let Some((_, b)) = best {
        *net = b;
    }
    Ok(())
}

/// Ordinary cross-entropy SGD; the reference path the CCL trainer reduces to
/// when every certificate-related term is switched off.
pub fn train_sgd(
    net: &mut Network,
    data: &[LabeledSample],
    cfg: &TrainConfig,
    validation: Option<&[LabeledSample]>,
) -> Result<()> {
    cfg.check()?;
    sgd_epochs(net, data, cfg, validation, cross_entropy_loss)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrowSpec {
    pub hidden: Vec<usize>,
    pub output: usize,
}

/// Keeps `fraction` of each label's samples, chosen by a seeded shuffle.
pub fn stratified_subset(data: &[LabeledSample], fraction: f64, seed: u64) -> Vec<LabeledSample> {
    let mut by_label: BTreeMap<usize, Vec<&LabeledSample>> = BTreeMap::new();
    for s in data {
        by_label.entry(s.label).or_default().push(s);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for group in by_label.values_mut() {
        group.shuffle(&mut rng);
        let take = (fraction * group.len() as f64).round() as usize;
        out.extend(group.iter().take(take).map(|s| (*s).clone()));
    }
    out
}

#[derive(Clone, Copy, Debug)]
pub struct RetrainRequest<'a> {
    pub old_net: &'a Network,
    pub certs: &'a [Certificate],
    pub new_data: &'a [LabeledSample],
    /// Full old training set; a stratified fraction is used in `+od` modes.
    pub old_data: Option<&'a [LabeledSample]>,
    pub grow: Option<&'a GrowSpec>,
    /// Epoch-best model selection set.
    pub validation: Option<&'a [LabeledSample]>,
    /// Test samples for the round's accuracy figures.
    pub eval: Option<&'a [LabeledSample]>,
    pub mode: Mode,
    pub cfg: &'a TrainConfig,
    pub default_clamp: Option<Interval>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub mode: String,
    pub accuracy: f64,
    /// label → accuracy on the evaluation split
    pub per_label_accuracy: BTreeMap<usize, f64>,
    /// label → number of evaluation samples
    pub per_label_count: BTreeMap<usize, usize>,
    pub certificates_initial: usize,
    pub certificates_surviving: usize,
    pub surviving_ids: Vec<String>,
    pub reverified_ids: Vec<String>,
    pub clipped_ids: Vec<String>,
    pub dropped_ids: Vec<String>,
    pub statuses: Vec<CertOutcome>,
    pub synthesized_samples: usize,
    pub wall_time_s: f64,
}

impl RoundRecord {
    pub fn set_accuracy(&mut self, acc: &Accuracy) {
        self.accuracy = acc.overall;
        self.per_label_accuracy = acc
            .per_label
            .iter()
            .map(|(&l, &(c, t))| (l, c as f64 / t as f64))
            .collect();
        self.per_label_count = acc.per_label.iter().map(|(&l, &(_, t))| (l, t)).collect();
    }
}

#[derive(Clone, Debug)]
pub struct RetrainOutcome {
    pub network: Network,
    /// Network right after the training phase, before certificate handling.
    pub trained: Network,
    pub certificates: Vec<Certificate>,
    pub record: RoundRecord,
}

fn derived_seed(seed: u64, stream: u64) -> u64 {
    seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One continual-learning round: initialize (copy or grow), augment, train
/// with the composite objective, then keep, re-verify, clip or drop each
/// certificate. Every returned certificate validates on the returned network.
pub fn ccl_retrain(req: RetrainRequest) -> Result<RetrainOutcome> {
    let start = Instant::now();
    let cfg = req.cfg;
    cfg.check()?;
    for cert in req.certs {
        if !validate_certificate(req.old_net, cert)? {
            return Err(Error::Soundness(format!(
                "{} is not valid on the network being retrained",
                cert.property_id
            )));
        }
    }

    let mut net = match req.grow {
        Some(g) => req
            .old_net
            .grow(&g.hidden, g.output, cfg.init_scale, derived_seed(cfg.seed, 1))?,
        None => req.old_net.clone(),
    };

    let mut data: Vec<LabeledSample> = req.new_data.to_vec();
    let mut synthesized = 0;
    if req.mode.augments() && cfg.per_cert_samples > 0 {
        let extra = augment(req.old_net, req.certs, cfg.per_cert_samples, derived_seed(cfg.seed, 2))?;
        synthesized = extra.len();
        data.extend(extra);
    }
    if req.mode.uses_old_data() {
        if let Some(old) = req.old_data {
            data.extend(
                stratified_subset(old, cfg.old_data_fraction, derived_seed(cfg.seed, 3))
                    .into_iter()
                    .map(|mut s| {
                        s.origin = Origin::OldTask;
                        s
                    }),
            );
        }
    }
    if let Some(bad) = data.iter().find(|s| s.label >= net.output_dim()) {
        return Err(Error::Config(format!(
            "label {} exceeds the network's {} outputs; a grow spec is required",
            bad.label,
            net.output_dim()
        )));
    }

    let theta0 = net.params();
    let (alpha, beta) = if req.mode.regularizes() {
        (cfg.alpha, if req.grow.is_some() { cfg.beta } else { 0.0 })
    } else {
        (0.0, 0.0)
    };
    let obj = Objective {
        alpha,
        beta,
        certs: req.certs,
        theta0: Some(&theta0),
    };
    sgd_epochs(&mut net, &data, cfg, req.validation, |n, b| composite_loss(n, b, &obj))?;
    let trained = net.clone();

    // certificate pass
    let mut accepted: Vec<Certificate> = Vec::new();
    let mut statuses: Vec<Option<CertStatus>> = vec![None; req.certs.len()];
    let mut broken = Vec::new();
    for (i, cert) in req.certs.iter().enumerate() {
        if validate_certificate(&net, cert)? {
            accepted.push(cert.clone());
            statuses[i] = Some(CertStatus::Untouched);
            continue;
        }
        let v = verify(&net, &cert.property_id, &cert.property, req.default_clamp)?;
        let fresh = v
            .certificates
            .into_iter()
            .find(|c| c.variant_tag.map(f64::to_bits) == cert.variant_tag.map(f64::to_bits));
        match fresh {
            Some(mut c) if v.verified => {
                // keep the outputs the old certificate covered; later ones are
                // bounded only through the post-condition
                c.boxes.last_mut().unwrap().0.truncate(cert.output_box().len());
                accepted.push(c);
                statuses[i] = Some(CertStatus::Reverified);
            }
            _ => broken.push(i),
        }
    }
    for i in broken {
        let cert = &req.certs[i];
        if !req.mode.clips() {
            statuses[i] = Some(CertStatus::Dropped {
                reason: "invalid after retraining and re-verification failed".into(),
            });
            continue;
        }
        let r = repair(&net, cert, &accepted, &cfg.k_schedule, cfg.clip_options())?;
        net = r.network;
        if let Some(c) = r.certificate {
            accepted.push(c);
        }
        statuses[i] = Some(r.status);
    }

    for cert in &accepted {
        if !validate_certificate(&net, cert)? {
            return Err(Error::Soundness(format!(
                "{} does not validate on the retrained network",
                cert.property_id
            )));
        }
    }

    let statuses: Vec<CertOutcome> = req
        .certs
        .iter()
        .zip(statuses)
        .map(|(c, s)| CertOutcome {
            property_id: c.property_id.clone(),
            variant_tag: c.variant_tag,
            status: s.expect("every certificate gets a status"),
        })
        .collect();
    let ids = |f: fn(&CertStatus) -> bool| -> Vec<String> {
        statuses
            .iter()
            .filter(|o| f(&o.status))
            .map(|o| o.property_id.clone())
            .collect()
    };
    let mut record = RoundRecord {
        mode: req.mode.name().to_string(),
        certificates_initial: req.certs.len(),
        certificates_surviving: accepted.len(),
        surviving_ids: ids(CertStatus::survives),
        reverified_ids: ids(|s| matches!(s, CertStatus::Reverified)),
        clipped_ids: ids(|s| matches!(s, CertStatus::Clipped { .. } | CertStatus::RelaxedAndClipped { .. } | CertStatus::ReanalyzedAndClipped { .. })),
        dropped_ids: ids(|s| !s.survives()),
        statuses,
        synthesized_samples: synthesized,
        ..Default::default()
    };
    if let Some(eval) = req.eval {
        record.set_accuracy(&evaluate(&net, eval)?);
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(RetrainOutcome {
        network: net,
        trained,
        certificates: accepted,
        record,
    })
}

/// Per-round records of a continual-learning run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CclReport {
    pub rounds: Vec<RoundRecord>,
}

impl CclReport {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> String {
        self.rounds
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }

    pub fn from_json_lines(text: &str) -> Result<Self> {
        let rounds = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::InvalidInput(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(CclReport { rounds })
    }

    pub fn render_table(&self) -> String {
        let mut s = String::from(
            "round  mode          cert.  dropped  acc. (%)  synth.  time (s)  per-label acc. (%)\n",
        );
        for r in &self.rounds {
            let per_label: Vec<String> = r
                .per_label_accuracy
                .iter()
                .map(|(l, a)| format!("{l}:{:.1}", 100.0 * a))
                .collect();
            s.push_str(&format!(
                "{:<6} {:<13} {:>5}  {:>7}  {:>8.1}  {:>6}  {:>8.2}  {}\n",
                r.round,
                r.mode,
                r.certificates_surviving,
                r.dropped_ids.len(),
                100.0 * r.accuracy,
                r.synthesized_samples,
                r.wall_time_s,
                per_label.join(" ")
            ));
        }
        s
    }
}
