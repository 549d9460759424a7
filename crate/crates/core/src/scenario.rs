//! Multi-round continual-learning experiments described by a TOML file.
//!
//! Round 0 trains a fresh network on the first label group and certifies
//! the configured properties; every later round hands the previous network
//! and its surviving certificates to [`ccl_retrain`].

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::LabeledSample;
use crate::data::{load_csv, load_idx, DatasetBundle};
use crate::error::{Error, Result};
use crate::interval::{verify_all, Certificate, Interval, Property};
use crate::nn::Network;
use crate::persist::{save_certificates, save_network, write_json, NamedProperty, PropertySet};
use crate::trainer::{
    ccl_retrain, evaluate, train_sgd, CclReport, GrowSpec, Mode, RetrainRequest, RoundRecord,
    TrainConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        /// Input clamp for robustness boxes; pixels default to `[0, 1]`.
        #[serde(default)]
        clamp: Option<[f64; 2]>,
    },
    Csv {
        train: PathBuf,
        test: PathBuf,
        label_column: String,
        #[serde(default)]
        clamp: Option<[f64; 2]>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PropertiesSpec {
    /// Local robustness around correctly classified round-0 test samples.
    Robustness {
        epsilon: f64,
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Individual fairness around round-0 test samples.
    Fairness {
        sensitive_index: usize,
        sensitive_values: Vec<f64>,
        #[serde(default)]
        epsilon_other: f64,
        count: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Explicit property set (JSON, same format as `verify --props`).
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub hidden: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundSpec {
    pub labels: Vec<usize>,
    #[serde(default)]
    pub grow: Option<GrowSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialTraining {
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub lr: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Keep the epoch with the best held-out accuracy.
    #[default]
    Validation,
    /// Keep the final epoch.
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub network: NetworkSpec,
    pub properties: PropertiesSpec,
    #[serde(default)]
    pub initial: InitialTraining,
    #[serde(default)]
    pub train: TrainConfig,
    pub rounds: Vec<RoundSpec>,
    /// Fraction of each round's training samples held out for selection.
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub selection: Selection,
}

fn default_validation_fraction() -> f64 {
    0.1
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a scenario; relative dataset and property paths resolve
    /// against the scenario file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut sc = Self::from_toml(&text).map_err(|e| Error::format(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut sc.dataset {
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    fix(p);
                }
            }
            DatasetSpec::Csv { train, test, .. } => {
                fix(train);
                fix(test);
            }
        }
        if let PropertiesSpec::File { path } = &mut sc.properties {
            fix(path);
        }
        Ok(sc)
    }

    pub fn check(&self) -> Result<()> {
        self.train.check()?;
        if self.rounds.is_empty() {
            return Err(Error::Config("scenario has no rounds".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, r) in self.rounds.iter().enumerate() {
            if r.labels.is_empty() {
                return Err(Error::Config(format!("round {i} has no labels")));
            }
            for &l in &r.labels {
                if !seen.insert(l) {
                    return Err(Error::Config(format!("label {l} appears in more than one round")));
                }
            }
            if i == 0 && r.grow.is_some() {
                return Err(Error::Config("round 0 cannot grow the network".into()));
            }
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    fn clamp(&self, data: &DatasetBundle) -> Option<Interval> {
        match &self.dataset {
            DatasetSpec::Idx { clamp, .. } => {
                let [lw, up] = clamp.unwrap_or([0.0, 1.0]);
                Some(Interval { lw, up })
            }
            DatasetSpec::Csv { clamp, .. } => clamp.map(|[lw, up]| Interval { lw, up }).or_else(|| {
                // one global range covering every feature
                data.feature_ranges.iter().copied().reduce(|a, b| Interval {
                    lw: a.lw.min(b.lw),
                    up: a.up.max(b.up),
                })
            }),
        }
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<DatasetBundle> {
    match spec {
        DatasetSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            ..
        } => load_idx(train_images, train_labels)?.with_test(load_idx(test_images, test_labels)?),
        DatasetSpec::Csv {
            train,
            test,
            label_column,
            ..
        } => load_csv(train, label_column)?.with_test(load_csv(test, label_column)?),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    /// Verification worker threads.
    pub threads: usize,
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub report: CclReport,
    pub network: Network,
    pub certificates: Vec<Certificate>,
    /// Properties that could not be certified in round 0.
    pub skipped_properties: Vec<String>,
}

fn seed_for(master: u64, stream: u64) -> u64 {
    master ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn with_labels(samples: &[LabeledSample], labels: &BTreeSet<usize>) -> Vec<LabeledSample> {
    samples.iter().filter(|s| labels.contains(&s.label)).cloned().collect()
}

/// Deterministic per-label hold-out split.
fn split_validation(samples: Vec<LabeledSample>, fraction: f64, seed: u64) -> (Vec<LabeledSample>, Vec<LabeledSample>) {
    if fraction == 0.0 {
        return (samples, Vec::new());
    }
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut per_label_total = std::collections::BTreeMap::<usize, usize>::new();
    for s in &samples {
        *per_label_total.entry(s.label).or_default() += 1;
    }
    let mut taken = std::collections::BTreeMap::<usize, usize>::new();
    let mut held = vec![false; samples.len()];
    for i in idx {
        let l = samples[i].label;
        let quota = (fraction * per_label_total[&l] as f64).round() as usize;
        let t = taken.entry(l).or_default();
        if *t < quota {
            *t += 1;
            held[i] = true;
        }
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (s, h) in samples.into_iter().zip(held) {
        if h {
            val.push(s)
        } else {
            train.push(s)
        }
    }
    (train, val)
}

/// Draws candidates from `pool` in seeded order until `count` properties
/// verify or `10 × count` candidates have been tried.
fn certify_initial(
    net: &Network,
    spec: &PropertiesSpec,
    pool: &[LabeledSample],
    clamp: Option<Interval>,
    master_seed: u64,
    threads: usize,
) -> Result<(Vec<NamedProperty>, Vec<Certificate>, Vec<String>)> {
    let (named, target): (Vec<NamedProperty>, Option<usize>) = match spec {
        PropertiesSpec::File { path } => {
            let set: PropertySet = crate::persist::read_json(path)?;
            (set.properties, None)
        }
        PropertiesSpec::Robustness { count, seed, .. } | PropertiesSpec::Fairness { count, seed, .. } => {
            let mut order: Vec<usize> = (0..pool.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.unwrap_or(seed_for(master_seed, 7))));
            order.truncate(count.saturating_mul(10));
            let mut props = Vec::with_capacity(order.len());
            for i in order {
                let s = &pool[i];
                let id = format!("{}-{i}", spec_kind(spec));
                let property = match spec {
                    PropertiesSpec::Robustness { epsilon, .. } => Property::Robustness {
                        x0: s.input.clone(),
                        y0_label: net.predict(&s.input)?,
                        epsilon: *epsilon,
                        clamp: None,
                    },
                    PropertiesSpec::Fairness {
                        sensitive_index,
                        sensitive_values,
                        epsilon_other,
                        ..
                    } => Property::Fairness {
                        x: s.input.clone(),
                        sensitive_index: *sensitive_index,
                        sensitive_values: sensitive_values.clone(),
                        epsilon_other: *epsilon_other,
                    },
                    PropertiesSpec::File { .. } => unreachable!(),
                };
                // misclassified anchors are skipped outright
                if matches!(spec, PropertiesSpec::Robustness { .. }) && net.predict(&s.input)? != s.label {
                    continue;
                }
                props.push(NamedProperty { id, property });
            }
            (props, Some(*count))
        }
    };

    let mut chosen = Vec::new();
    let mut certs = Vec::new();
    let mut skipped = Vec::new();
    let want = target.unwrap_or(usize::MAX);
    // verify in chunks so the draw stops once enough properties hold
    let chunk = threads.max(1) * 4;
    for part in named.chunks(chunk) {
        if chosen.len() >= want {
            break;
        }
        let pairs: Vec<(String, Property)> = part.iter().map(|p| (p.id.clone(), p.property.clone())).collect();
        let results = verify_all(net, &pairs, clamp, threads)?;
        for (p, v) in part.iter().zip(results) {
            if chosen.len() >= want {
                break;
            }
            if v.verified {
                certs.extend(v.certificates);
                chosen.push(p.clone());
            } else {
                skipped.push(p.id.clone());
            }
        }
    }
    Ok((chosen, certs, skipped))
}

fn spec_kind(spec: &PropertiesSpec) -> &'static str {
    match spec {
        PropertiesSpec::Robustness { .. } => "rob",
        PropertiesSpec::Fairness { .. } => "fair",
        PropertiesSpec::File { .. } => "file",
    }
}

/// Runs every round and, when `out_dir` is given, writes per-round models,
/// certificates and the report.
pub fn run_scenario(sc: &Scenario, opts: RunOptions, out_dir: Option<&Path>) -> Result<ScenarioRun> {
    sc.check()?;
    let mode = opts.mode.unwrap_or(sc.mode);
    let master = opts.seed.unwrap_or(sc.seed);
    let data = load_dataset(&sc.dataset)?;
    let clamp = sc.clamp(&data);
    let input_dim = data.input_dim();

    let mut report = CclReport::default();
    let mut seen = BTreeSet::new();

    // round 0
    let start = std::time::Instant::now();
    let labels0: BTreeSet<usize> = sc.rounds[0].labels.iter().copied().collect();
    seen.extend(labels0.iter().copied());
    let outputs = labels0.iter().max().unwrap() + 1;
    let mut net = Network::dense_relu(input_dim, &sc.network.hidden, outputs, seed_for(master, 1))?;
    let (train0, val0) = split_validation(with_labels(&data.train, &labels0), sc.validation_fraction, seed_for(master, 2));
    let mut cfg0 = sc.train.clone();
    cfg0.seed = seed_for(master, 100);
    if let Some(e) = sc.initial.epochs {
        cfg0.epochs = e;
    }
    if let Some(lr) = sc.initial.lr {
        cfg0.lr = lr;
    }
    let selection = |v: &[LabeledSample]| -> Option<Vec<LabeledSample>> {
        (sc.selection == Selection::Validation && !v.is_empty()).then(|| v.to_vec())
    };
    let sel0 = selection(&val0);
    train_sgd(&mut net, &train0, &cfg0, sel0.as_deref())?;
    let test0 = with_labels(&data.test, &labels0);
    let (props, mut certs, skipped) =
        certify_initial(&net, &sc.properties, &test0, clamp, master, opts.threads)?;
    for id in &skipped {
        eprintln!("warning: property {id} could not be verified on the initial network; skipped");
    }
    let mut rec0 = RoundRecord {
        round: 0,
        mode: mode.name().to_string(),
        certificates_initial: certs.len(),
        certificates_surviving: certs.len(),
        surviving_ids: certs.iter().map(|c| c.property_id.clone()).collect(),
        ..Default::default()
    };
    rec0.set_accuracy(&evaluate(&net, &test0)?);
    rec0.wall_time_s = start.elapsed().as_secs_f64();
    report.rounds.push(rec0);
    if let Some(dir) = out_dir {
        write_json(
            dir.join("properties.json"),
            &PropertySet {
                properties: props.clone(),
            },
        )?;
        write_round(dir, 0, &net, &certs, &report)?;
    }

    let mut train_seen = train0;
    let mut val_seen = val0;
    for (r, round) in sc.rounds.iter().enumerate().skip(1) {
        let labels: BTreeSet<usize> = round.labels.iter().copied().collect();
        seen.extend(labels.iter().copied());
        let (train_r, val_r) = split_validation(
            with_labels(&data.train, &labels),
            sc.validation_fraction,
            seed_for(master, 2 + r as u64),
        );
        val_seen.extend(val_r);
        let eval = with_labels(&data.test, &seen);
        let mut cfg = sc.train.clone();
        cfg.seed = seed_for(master, 100 + r as u64);
        let sel = selection(&val_seen);
        let outcome = ccl_retrain(RetrainRequest {
            old_net: &net,
            certs: &certs,
            new_data: &train_r,
            old_data: Some(&train_seen),
            grow: round.grow.as_ref(),
            validation: sel.as_deref(),
            eval: Some(&eval),
            mode,
            cfg: &cfg,
            default_clamp: clamp,
        })?;
        let mut rec = outcome.record;
        rec.round = r;
        report.rounds.push(rec);
        net = outcome.network;
        certs = outcome.certificates;
        train_seen.extend(train_r);
        if let Some(dir) = out_dir {
            write_round(dir, r, &net, &certs, &report)?;
        }
    }

    Ok(ScenarioRun {
        report,
        network: net,
        certificates: certs,
        skipped_properties: skipped,
    })
}

fn write_round(dir: &Path, round: usize, net: &Network, certs: &[Certificate], report: &CclReport) -> Result<()> {
    let rdir = dir.join(format!("round_{round}"));
    save_network(rdir.join("model.json"), net)?;
    save_certificates(rdir.join("certificates.json"), certs)?;
    let jsonl = dir.join("report.jsonl");
    std::fs::write(&jsonl, report.to_json_lines()).map_err(|e| Error::io(&jsonl, e))?;
    let table = dir.join("report.txt");
    std::fs::write(&table, report.render_table()).map_err(|e| Error::io(&table, e))
}
