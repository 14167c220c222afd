use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use shieldscatter::channel::OriginLabel;
use shieldscatter::dtw::ProfileVector;
use shieldscatter::ocsvm::{select_nu_and_bandwidth, train, Gamma, TrainConfig};
use shieldscatter::pipeline::{correlation_baseline, detect, session_profile, Verdict};
use shieldscatter::segmenter::segment;
use shieldscatter::trace_io::read_all;
use shieldscatter::{Error, Model};
use shieldscatter_harness::config::{ActorChoice, AttackerKind, ChannelPreset, ExperimentConfig, Sweep, SweepAxis};
use shieldscatter_harness::experiment::{read_metrics, run_experiment, write_outputs};
use shieldscatter_harness::pairs::{expand_pairs, read_pair, simulate_pairs};
use shieldscatter_harness::report::{render_table, summarize};

#[derive(Parser)]
#[command(name = "shieldscatter", version, about = "Backscatter-tag device authentication: simulation, training and detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus per-key overrides.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML experiment configuration; flags below take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    tag_count: Option<usize>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    legit_jitter: Option<f64>,
    #[arg(long, value_enum)]
    preset: Option<ChannelPreset>,
    #[arg(long, value_enum)]
    attacker: Option<AttackerKind>,
    #[arg(long)]
    attacker_divergence: Option<f64>,
    #[arg(long)]
    estimation_error: Option<f64>,
    #[arg(long)]
    training_size: Option<usize>,
    #[arg(long)]
    validation_size: Option<usize>,
    /// Attacker validation profiles per legitimate one.
    #[arg(long)]
    pos_neg_ratio: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    nu_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    bandwidth_scales: Option<Vec<f64>>,
    #[arg(long)]
    ap_count: Option<usize>,
    /// Also score the correlation baseline.
    #[arg(long)]
    baseline: bool,
    #[arg(long)]
    baseline_threshold: Option<f64>,
    #[arg(long, value_enum, requires = "sweep_values")]
    sweep_axis: Option<SweepAxis>,
    #[arg(long, value_delimiter = ',', requires = "sweep_axis")]
    sweep_values: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    actor: Option<ActorChoice>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl Overrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field.clone() { $target = v; })*
            };
        }
        set! {
            seed => c.seed,
            trials => c.trials,
            repetitions => c.repetitions,
            tag_count => c.deployment.tag_count,
            noise_sigma => c.deployment.noise_sigma,
            legit_jitter => c.deployment.legit_jitter,
            attacker => c.attacker,
            attacker_divergence => c.attacker_divergence,
            estimation_error => c.estimation_error,
            training_size => c.training_size,
            validation_size => c.validation_size,
            pos_neg_ratio => c.pos_neg_ratio,
            nu_grid => c.nu_grid,
            bandwidth_scales => c.bandwidth_scales,
            ap_count => c.ap_count,
            baseline_threshold => c.baseline_threshold,
            actor => c.actor,
            output => c.output,
        }
        if self.preset.is_some() {
            c.preset = self.preset;
        }
        if self.baseline {
            c.baseline = true;
        }
        if let (Some(axis), Some(values)) = (self.sweep_axis, self.sweep_values.clone()) {
            c.sweep = Some(Sweep { axis, values });
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated trace pairs, their schedules and a ground-truth log.
    Simulate(#[command(flatten)] Overrides),
    /// Locate the backscatter region of every record in trace files.
    Segment {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build profile vectors (CSV) from trace pairs.
    Profile {
        /// Pair files or directories of them.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a one-class model on legitimate profiles.
    Train {
        #[arg(long)]
        profiles: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fixed nu; otherwise chosen on the validation sets.
        #[arg(long)]
        nu: Option<f64>,
        /// Fixed gamma; defaults to the median heuristic.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, requires = "validation_attacker")]
        validation_legit: Option<PathBuf>,
        #[arg(long, requires = "validation_legit")]
        validation_attacker: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Classify trace pairs with a trained model, one JSON line per pair.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a configured experiment and write metrics.csv and manifest.jsonl.
    Experiment(#[command(flatten)] Overrides),
    /// Classify trace pairs with the correlation baseline.
    Baseline {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Summarize a metrics CSV.
    Report {
        metrics: PathBuf,
        /// Emit JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Serialize)]
struct PairVerdict {
    file: String,
    verdict: Verdict,
    score: Option<f64>,
}

fn println_json<T: Serialize>(out: &mut impl Write, value: &T) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn read_profiles(path: &Path) -> Result<Vec<Vec<f64>>> {
    let r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        out.push(ProfileVector::<f64>::parse_csv_row(&line)?.into_vec());
    }
    if out.is_empty() {
        bail!("{} holds no profiles", path.display());
    }
    Ok(out)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Simulate(o) => {
            let cfg = o.resolve()?;
            let entries = simulate_pairs(&cfg, &cfg.output)?;
            writeln!(out, "wrote {} pairs to {}", entries.len(), cfg.output.display())?;
        }
        Command::Segment { inputs, overrides } => {
            let pipeline = overrides.resolve()?.pipeline();
            for path in inputs {
                let mut r = BufReader::new(File::open(&path).with_context(|| format!("opening {}", path.display()))?);
                for (record, trace) in read_all::<f64, _>(&mut r)?.into_iter().enumerate() {
                    let trace = trace.with_origin(OriginLabel::Unknown);
                    let value = match segment(trace.observe(), &pipeline.segmenter) {
                        Ok(rep) => serde_json::json!({
                            "file": path.display().to_string(),
                            "record": record,
                            "start": rep.segment.start,
                            "end": rep.segment.end,
                            "threshold": rep.threshold,
                        }),
                        Err(Error::NoBackscatter) => serde_json::json!({
                            "file": path.display().to_string(),
                            "record": record,
                            "verdict": Verdict::NoBackscatter,
                        }),
                        Err(e) => return Err(e.into()),
                    };
                    println_json(&mut out, &value)?;
                }
            }
        }
        Command::Profile { inputs, out: dest, overrides } => {
            let pipeline = overrides.resolve()?.pipeline();
            let mut w = BufWriter::new(File::create(&dest).with_context(|| format!("creating {}", dest.display()))?);
            writeln!(w, "{}", ProfileVector::<f64>::csv_header())?;
            let (mut written, mut skipped) = (0, 0);
            for path in expand_pairs(&inputs)? {
                let (m1, m3, s) = read_pair(&path)?;
                match session_profile(m1.observe(), &s.schedule1, m3.observe(), &s.schedule3, &pipeline) {
                    Ok((p, _, _)) => {
                        p.write_csv_row(&mut w)?;
                        written += 1;
                    }
                    Err(Error::NoBackscatter) => {
                        eprintln!("{}: no backscatter, skipped", path.display());
                        skipped += 1;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            w.flush()?;
            writeln!(out, "wrote {written} profiles to {} ({skipped} skipped)", dest.display())?;
        }
        Command::Train {
            profiles,
            out: dest,
            nu,
            gamma,
            validation_legit,
            validation_attacker,
            overrides,
        } => {
            let cfg = overrides.resolve()?;
            let train_set = read_profiles(&profiles)?;
            let base = TrainConfig {
                gamma: gamma.map_or(Gamma::MedianHeuristic, Gamma::Fixed),
                ..TrainConfig::default()
            };
            let model: Model = match (nu, validation_legit, validation_attacker) {
                (Some(nu), _, _) => train(&train_set, &TrainConfig { nu, ..base })?.model,
                (None, Some(vl), Some(va)) => {
                    let scales = if gamma.is_some() { vec![1.0] } else { cfg.bandwidth_scales.clone() };
                    let sel = select_nu_and_bandwidth(
                        &train_set,
                        &read_profiles(&vl)?,
                        &read_profiles(&va)?,
                        &ExperimentConfig {
                            training_size: train_set.len(),
                            ..cfg.clone()
                        }
                        .feasible_nu_grid(),
                        &scales,
                        &base,
                    )?;
                    writeln!(
                        out,
                        "selected nu {} gamma {} (validation tp {:.4}, fp {:.4})",
                        sel.nu, sel.gamma, sel.tp_rate, sel.fp_rate
                    )?;
                    sel.model
                }
                _ => train(&train_set, &base)?.model,
            };
            model.save(BufWriter::new(File::create(&dest).with_context(|| format!("creating {}", dest.display()))?))?;
            writeln!(
                out,
                "trained on {} profiles: {} support vectors, nu {}, gamma {}",
                train_set.len(),
                model.support_vectors().len(),
                model.nu(),
                model.gamma()
            )?;
        }
        Command::Detect { model, inputs, overrides } => {
            let pipeline = overrides.resolve()?.pipeline();
            let model = Model::load(BufReader::new(File::open(&model).with_context(|| format!("opening {}", model.display()))?))?;
            for path in expand_pairs(&inputs)? {
                let (m1, m3, s) = read_pair(&path)?;
                // ground truth stays out of the decision
                let (m1, m3) = (m1.with_origin(OriginLabel::Unknown), m3.with_origin(OriginLabel::Unknown));
                let d = detect(&model, m1.observe(), &s.schedule1, m3.observe(), &s.schedule3, &pipeline)?;
                println_json(
                    &mut out,
                    &PairVerdict {
                        file: path.display().to_string(),
                        verdict: d.verdict,
                        score: d.score,
                    },
                )?;
            }
        }
        Command::Experiment(o) => {
            let cfg = o.resolve()?;
            let result = run_experiment(&cfg)?;
            let (metrics, manifest) = write_outputs(&result, &cfg.output)?;
            write!(out, "{}", render_table(&summarize(&result.records)))?;
            writeln!(out, "wrote {} and {}", metrics.display(), manifest.display())?;
        }
        Command::Baseline { inputs, overrides } => {
            let cfg = overrides.resolve()?;
            let pipeline = cfg.pipeline();
            for path in expand_pairs(&inputs)? {
                let (m1, m3, s) = read_pair(&path)?;
                let (m1, m3) = (m1.with_origin(OriginLabel::Unknown), m3.with_origin(OriginLabel::Unknown));
                let (verdict, score) = match correlation_baseline(
                    m1.observe(),
                    &s.schedule1,
                    m3.observe(),
                    &s.schedule3,
                    cfg.baseline_threshold,
                    &pipeline,
                ) {
                    Err(Error::UndefinedCorrelation) => (Verdict::Attacker, None),
                    r => r?,
                };
                println_json(
                    &mut out,
                    &PairVerdict {
                        file: path.display().to_string(),
                        verdict,
                        score,
                    },
                )?;
            }
        }
        Command::Report { metrics, json } => {
            let summary = summarize(&read_metrics(&metrics)?);
            if json {
                serde_json::to_writer_pretty(&mut out, &summary)?;
                writeln!(out)?;
            } else {
                write!(out, "{}", render_table(&summary))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
