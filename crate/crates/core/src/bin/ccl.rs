use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccl::augment::augment;
use ccl::clip::{bias_windows, clip, ClipOptions};
use ccl::interval::{validate_certificate, verify_all, Certificate};
use ccl::persist::{load_certificates, load_network, read_json, save_certificates, save_network, PropertySet};
use ccl::scenario::{run_scenario, RunOptions, Scenario};
use ccl::{Error, Interval, Mode, Result};

#[derive(Parser)]
#[command(name = "ccl", version, about = "Certified continual learning for ReLU classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-round scenario and write models, certificates and reports.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify a property set and write certificates for those that hold.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        props: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Input clamp applied to robustness boxes, as `lo,hi`.
        #[arg(long, value_parser = parse_clamp)]
        clamp: Option<Interval>,
    },
    /// Check certificates against a model; exits 1 if any fails.
    ValidateCerts {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        certs: PathBuf,
    },
    /// Clip biases so the given certificates hold again.
    Clip {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        certs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Write synthesized samples from certificate input boxes as CSV.
    AugmentDump {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        certs: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print per-neuron bias windows for a set of certificates.
    Feasibility {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        certs: PathBuf,
    },
}

fn parse_clamp(s: &str) -> std::result::Result<Interval, String> {
    let (lo, hi) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Interval::new(lo, hi).map_err(|e| e.to_string())
}

fn threads() -> usize {
    std::env::var("CCL_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn write_csv(path: &Path, rows: &[ccl::augment::LabeledSample]) -> Result<()> {
    let err = |e: csv::Error| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
    }
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    let dim = rows.first().map_or(0, |r| r.input.len());
    let mut header: Vec<String> = (0..dim).map(|i| format!("x{i}")).collect();
    header.push("label".into());
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec: Vec<String> = r.input.iter().map(|v| v.to_string()).collect();
        rec.push(r.label.to_string());
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { scenario, out, mode, seed } => {
            let sc = Scenario::load(&scenario)?;
            let run = run_scenario(
                &sc,
                RunOptions {
                    mode,
                    seed,
                    threads: threads(),
                },
                Some(&out),
            )?;
            print!("{}", run.report.render_table());
        }
        Command::Verify { model, props, out, clamp } => {
            let net = load_network(&model)?;
            let set: PropertySet = read_json(&props)?;
            let pairs: Vec<_> = set.properties.into_iter().map(|p| (p.id, p.property)).collect();
            let results = verify_all(&net, &pairs, clamp, threads())?;
            let mut certs: Vec<Certificate> = Vec::new();
            for ((id, _), v) in pairs.iter().zip(results) {
                println!("{id}\t{}", if v.verified { "verified" } else { "unknown" });
                if v.verified {
                    certs.extend(v.certificates);
                }
            }
            save_certificates(&out, &certs)?;
        }
        Command::ValidateCerts { model, certs } => {
            let net = load_network(&model)?;
            let certs = load_certificates(&certs)?;
            let mut failed = 0;
            for c in &certs {
                let ok = validate_certificate(&net, c)?;
                let tag = c.variant_tag.map(|t| format!("[{t}]")).unwrap_or_default();
                println!("{}{tag}\t{}", c.property_id, if ok { "valid" } else { "INVALID" });
                failed += usize::from(!ok);
            }
            println!("{} of {} certificates valid", certs.len() - failed, certs.len());
            if failed > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Clip { model, certs, out, strict } => {
            let net = load_network(&model)?;
            let certs = load_certificates(&certs)?;
            let (clipped, outcome) = clip(&net, &certs, ClipOptions { strict_alg2: strict })?;
            save_network(&out, &clipped)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome).expect("outcome serializes")
            );
        }
        Command::AugmentDump { model, certs, n, out, seed } => {
            let net = load_network(&model)?;
            let certs = load_certificates(&certs)?;
            let samples = augment(&net, &certs, n, seed)?;
            write_csv(&out, &samples)?;
            println!("wrote {} samples to {}", samples.len(), out.display());
        }
        Command::Feasibility { model, certs } => {
            let net = load_network(&model)?;
            let certs = load_certificates(&certs)?;
            println!("layer\tneuron\tbias\tmax_lw\tmin_up\tfeasible\tsatisfied");
            for w in bias_windows(&net, &certs)? {
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    w.layer, w.neuron, w.bias, w.max_lw, w.min_up, w.feasible, w.satisfied
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
