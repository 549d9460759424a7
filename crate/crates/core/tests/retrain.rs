mod common;

use ccl::augment::LabeledSample;
use ccl::clip::{clip, repair, CertStatus, ClipOptions};
use ccl::interval::{LayerBox, PostCondition, Property};
use ccl::nn::{AffineLayer, Layer};
use ccl::trainer::{evaluate, GrowSpec, RetrainOutcome, RetrainRequest, RoundRecord};
use ccl::{ccl_retrain, train_sgd, validate_certificate, Certificate, Error, Interval, Mode, Network, TrainConfig};
use common::{bits, blobs, certify_points};

const DIM: usize = 4;

struct Fixture {
    net: Network,
    certs: Vec<Certificate>,
    old_train: Vec<LabeledSample>,
    new_train: Vec<LabeledSample>,
    eval: Vec<LabeledSample>,
}

/// Net trained on labels 0 and 1 with robustness certificates at held-out
/// points, plus data for labels 2 and 3.
fn fixture(count: usize) -> Fixture {
    let old_train = blobs(DIM, &[0, 1], 60, 11);
    let mut net = Network::dense_relu(DIM, &[8, 8], 2, 5).unwrap();
    let cfg = TrainConfig {
        epochs: 40,
        lr: 0.05,
        seed: 3,
        ..TrainConfig::default()
    };
    train_sgd(&mut net, &old_train, &cfg, None).unwrap();
    let held_out = blobs(DIM, &[0, 1], 40, 12);
    let points: Vec<Vec<f64>> = held_out
        .iter()
        .filter(|s| net.predict(&s.input).unwrap() == s.label)
        .map(|s| s.input.clone())
        .collect();
    let certs = certify_points(&net, &points, 0.01, count);
    assert_eq!(certs.len(), count, "fixture needs {count} verified properties");
    let new_train = blobs(DIM, &[2, 3], 60, 13);
    let mut eval = held_out;
    eval.extend(blobs(DIM, &[2, 3], 40, 14));
    Fixture {
        net,
        certs,
        old_train,
        new_train,
        eval,
    }
}

fn grown_round(f: &Fixture, mode: Mode, cfg: &TrainConfig) -> RetrainOutcome {
    let grow = GrowSpec {
        hidden: vec![4, 4],
        output: 2,
    };
    ccl_retrain(RetrainRequest {
        old_net: &f.net,
        certs: &f.certs,
        new_data: &f.new_train,
        old_data: Some(&f.old_train),
        grow: Some(&grow),
        validation: None,
        eval: Some(&f.eval),
        mode,
        cfg,
        default_clamp: None,
    })
    .unwrap()
}

fn retrain_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        lr: 0.05,
        seed: 9,
        ..TrainConfig::default()
    }
}

fn without_time(mut r: RoundRecord) -> RoundRecord {
    r.wall_time_s = 0.0;
    r
}

#[test]
fn zero_epochs_without_growth_changes_nothing() {
    let f = fixture(5);
    let cfg = TrainConfig {
        epochs: 0,
        ..retrain_cfg()
    };
    let out = ccl_retrain(RetrainRequest {
        old_net: &f.net,
        certs: &f.certs,
        new_data: &f.old_train,
        old_data: None,
        grow: None,
        validation: None,
        eval: None,
        mode: Mode::Ccl,
        cfg: &cfg,
        default_clamp: None,
    })
    .unwrap();
    assert_eq!(bits(&out.network), bits(&f.net));
    assert_eq!(out.certificates, f.certs);
    assert!(out.record.statuses.iter().all(|s| s.status == CertStatus::Untouched));
}

#[test]
fn every_returned_certificate_validates_in_every_mode() {
    let f = fixture(8);
    for mode in [Mode::Baseline, Mode::BaselineDs, Mode::BaselineOd, Mode::Ccl, Mode::CclOd] {
        let out = grown_round(&f, mode, &retrain_cfg());
        let r = &out.record;
        assert_eq!(out.network.output_dim(), 4);
        assert_eq!(r.certificates_initial, 8);
        assert_eq!(r.certificates_surviving, out.certificates.len());
        assert_eq!(r.surviving_ids.len() + r.dropped_ids.len(), 8, "{mode:?}");
        for c in &out.certificates {
            assert!(validate_certificate(&out.network, c).unwrap(), "{mode:?} {}", c.property_id);
        }
        if !mode.clips() {
            assert!(r.clipped_ids.is_empty(), "{mode:?} clipped");
        }
    }
}

#[test]
fn ccl_keeps_certificates_the_baseline_loses() {
    let f = fixture(8);
    let ccl = grown_round(&f, Mode::Ccl, &retrain_cfg()).record;
    let base = grown_round(&f, Mode::Baseline, &retrain_cfg()).record;
    assert!(ccl.certificates_surviving >= base.certificates_surviving);
    assert_eq!(ccl.certificates_surviving, 8, "{:?}", ccl.statuses);
}

#[test]
fn synthesized_sample_count_is_certs_times_per_cert() {
    let f = fixture(25);
    let out = grown_round(&f, Mode::Ccl, &retrain_cfg());
    assert_eq!(out.record.synthesized_samples, 250);
    let base = grown_round(&f, Mode::Baseline, &retrain_cfg());
    assert_eq!(base.record.synthesized_samples, 0);
}

#[test]
fn zero_samples_per_certificate_still_runs() {
    let f = fixture(5);
    let cfg = TrainConfig {
        per_cert_samples: 0,
        ..retrain_cfg()
    };
    let out = grown_round(&f, Mode::Ccl, &cfg);
    assert_eq!(out.record.synthesized_samples, 0);
    for c in &out.certificates {
        assert!(validate_certificate(&out.network, c).unwrap());
    }
}

#[test]
fn rounds_are_reproducible() {
    let f = fixture(6);
    let a = grown_round(&f, Mode::CclOd, &retrain_cfg());
    let b = grown_round(&f, Mode::CclOd, &retrain_cfg());
    assert_eq!(bits(&a.network), bits(&b.network));
    assert_eq!(bits(&a.trained), bits(&b.trained));
    assert_eq!(a.certificates, b.certificates);
    assert_eq!(without_time(a.record), without_time(b.record));
}

#[test]
fn per_label_accuracy_matches_overall() {
    let f = fixture(4);
    let r = grown_round(&f, Mode::Ccl, &retrain_cfg()).record;
    let total: usize = r.per_label_count.values().sum();
    assert_eq!(total, f.eval.len());
    let weighted: f64 = r
        .per_label_accuracy
        .iter()
        .map(|(l, a)| a * r.per_label_count[l] as f64)
        .sum::<f64>()
        / total as f64;
    assert!((weighted - r.accuracy).abs() <= 1e-9);
}

#[test]
fn new_labels_need_growth() {
    let f = fixture(2);
    let err = ccl_retrain(RetrainRequest {
        old_net: &f.net,
        certs: &f.certs,
        new_data: &f.new_train,
        old_data: None,
        grow: None,
        validation: None,
        eval: None,
        mode: Mode::Ccl,
        cfg: &retrain_cfg(),
        default_clamp: None,
    })
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn rejects_certificates_that_are_already_invalid() {
    let f = fixture(2);
    let mut bad = f.certs[0].clone();
    let out = bad.boxes.last_mut().unwrap();
    out.0[0] = Interval::point(out.0[0].mid());
    let err = ccl_retrain(RetrainRequest {
        old_net: &f.net,
        certs: &[bad],
        new_data: &f.old_train,
        old_data: None,
        grow: None,
        validation: None,
        eval: None,
        mode: Mode::Ccl,
        cfg: &retrain_cfg(),
        default_clamp: None,
    })
    .unwrap_err();
    assert!(matches!(err, Error::Soundness(_)), "{err}");
}

#[test]
fn validation_ties_keep_the_last_epoch() {
    let data = blobs(DIM, &[0, 1], 40, 21);
    let cfg = TrainConfig {
        epochs: 12,
        lr: 0.05,
        seed: 4,
        ..TrainConfig::default()
    };
    let mut plain = Network::dense_relu(DIM, &[8], 2, 2).unwrap();
    train_sgd(&mut plain, &data, &cfg, None).unwrap();
    assert_eq!(evaluate(&plain, &data).unwrap().overall, 1.0);
    let mut selected = Network::dense_relu(DIM, &[8], 2, 2).unwrap();
    train_sgd(&mut selected, &data, &cfg, Some(&data)).unwrap();
    assert_eq!(bits(&selected), bits(&plain));
}

fn affine(w: Vec<Vec<f64>>, b: Vec<f64>) -> Layer {
    Layer::Affine(AffineLayer::new(w, b).unwrap())
}

/// x ∈ [0,1] → h = relu(x) → (2h + 1, −h); label 0 on the whole box.
fn line_net(hidden_weight: f64) -> Network {
    Network::new(
        1,
        vec![
            affine(vec![vec![hidden_weight]], vec![0.0]),
            Layer::Relu,
            affine(vec![vec![2.0], vec![-1.0]], vec![1.0, 0.0]),
        ],
    )
    .unwrap()
}

fn line_cert(net: &Network) -> Certificate {
    let prop = Property::Reachability {
        pre: LayerBox(vec![Interval::new(0.0, 1.0).unwrap()]),
        post: PostCondition::IsLabel(0),
    };
    ccl::verify(net, "line", &prop, None).unwrap().certificates.remove(0)
}

#[test]
fn grown_outputs_are_pushed_below_the_certified_label() {
    let net = line_net(1.0);
    let cert = line_cert(&net);
    let mut grown = net.grow(&[0], 1, 0.1, 7).unwrap();
    let block = *grown.layout().last().unwrap();
    let mut theta = grown.params();
    theta[block.bias_index(2)] = 10.0;
    grown.set_params(&theta).unwrap();
    assert!(!validate_certificate(&grown, &cert).unwrap());

    let (fixed, outcome) = clip(&grown, std::slice::from_ref(&cert), ClipOptions::default()).unwrap();
    assert_eq!(outcome.surviving, vec![0]);
    assert!(validate_certificate(&fixed, &cert).unwrap());
    let after = fixed.params();
    for (i, (a, b)) in after.iter().zip(&theta).enumerate() {
        if i != block.bias_index(2) {
            assert_eq!(a.to_bits(), b.to_bits(), "param {i} moved");
        }
    }
    // below lw of the certified output, and not needlessly far below it
    let top = after[block.bias_index(2)];
    assert!(top < 1.0 && top > 0.5, "{top}");
}

#[test]
fn repair_falls_back_to_fresh_boxes() {
    let old = line_net(1.0);
    let cert = line_cert(&old);
    // the hidden neuron now spreads over [0, 2]; the old box [0, 1] is out
    // of reach for any bias, yet the label still holds
    let new = line_net(2.0);
    assert!(!validate_certificate(&new, &cert).unwrap());
    let (_, plain) = clip(&new, std::slice::from_ref(&cert), ClipOptions::default()).unwrap();
    assert!(plain.surviving.is_empty());

    let r = repair(&new, &cert, &[], &[1.0, 2.0], ClipOptions::default()).unwrap();
    assert!(matches!(r.status, CertStatus::ReanalyzedAndClipped { .. }), "{:?}", r.status);
    let kept = r.certificate.unwrap();
    assert!(validate_certificate(&r.network, &kept).unwrap());
    assert_eq!(kept.boxes[1].0[0], Interval::new(0.0, 2.0).unwrap());
}

#[test]
fn repair_leaves_the_network_alone_when_it_drops() {
    let old = line_net(1.0);
    let cert = line_cert(&old);
    // label 1 wins everywhere on the box
    let flipped = Network::new(
        1,
        vec![
            affine(vec![vec![1.0]], vec![0.0]),
            Layer::Relu,
            affine(vec![vec![-1.0], vec![2.0]], vec![0.0, 1.0]),
        ],
    )
    .unwrap();
    let other = {
        let prop = Property::Reachability {
            pre: LayerBox(vec![Interval::new(0.0, 1.0).unwrap()]),
            post: PostCondition::IsLabel(1),
        };
        ccl::verify(&flipped, "other", &prop, None).unwrap().certificates.remove(0)
    };
    let r = repair(&flipped, &cert, &[other], &[1.0, 2.0, 3.0], ClipOptions::default()).unwrap();
    assert!(!r.status.survives());
    assert!(r.certificate.is_none());
    assert_eq!(bits(&r.network), bits(&flipped));
}
