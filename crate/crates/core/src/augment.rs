//! Certificate-based data augmentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{validate_certificate, Certificate, LayerBox, Property};
use crate::nn::Network;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "property_id", rename_all = "snake_case")]
pub enum Origin {
    NewTask,
    OldTask,
    Synthesized(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub input: Vec<f64>,
    pub label: usize,
    pub origin: Origin,
}

impl LabeledSample {
    pub fn new(input: Vec<f64>, label: usize, origin: Origin) -> Self {
        LabeledSample {
            input,
            label,
            origin,
        }
    }
}

/// `n` points drawn coordinate-wise uniformly from `bx`.
pub fn sample_box(bx: &LayerBox, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            bx.0.iter()
                .map(|iv| {
                    if iv.is_degenerate() {
                        iv.lw
                    } else {
                        rng.gen_range(iv.lw..=iv.up)
                    }
                })
                .collect()
        })
        .collect()
}

/// Samples `per_cert` inputs from each certificate's input box and labels
/// them with `old_net`. Certificate `i` uses seed `seed ^ i`.
pub fn augment(
    old_net: &Network,
    certs: &[Certificate],
    per_cert: usize,
    seed: u64,
) -> Result<Vec<LabeledSample>> {
    let mut out = Vec::with_capacity(certs.len() * per_cert);
    for (i, cert) in certs.iter().enumerate() {
        let input_box = cert.input_box();
        if input_box.len() != old_net.input_dim() {
            return Err(Error::dim("certificate input box", old_net.input_dim(), input_box.len()));
        }
        for x in sample_box(input_box, per_cert, seed ^ i as u64) {
            let label = old_net.predict(&x)?;
            if let Property::Robustness { y0_label, .. } = &cert.property {
                if label != *y0_label && validate_certificate(old_net, cert)? {
                    return Err(Error::Soundness(format!(
                        "{}: sample labelled {label} inside a valid robustness certificate for {y0_label}",
                        cert.property_id
                    )));
                }
            }
            out.push(LabeledSample::new(
                x,
                label,
                Origin::Synthesized(cert.property_id.clone()),
            ));
        }
    }
    Ok(out)
}
