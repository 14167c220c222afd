//! Cohort simulation, model fitting and TP/FP scoring.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use shieldscatter::defense::vote;
use shieldscatter::ocsvm::{select_nu_and_bandwidth, train, Gamma, Label, TrainConfig};
use shieldscatter::pipeline::{correlation_decision, session_profile, PipelineConfig};
use shieldscatter::sim::{simulate_session_with, simulate_trial, Actor, Session};
use shieldscatter::{Error, Model};

use crate::config::{AttackerKind, ChannelPreset, ExperimentConfig, SweepAxis};
use crate::seeds::{derive_seed, trial_seed, Role};

/// Profile of one session, `None` when no backscatter was found.
pub fn session_vector(session: &Session<f64>, config: &PipelineConfig) -> Result<Option<Vec<f64>>> {
    Ok(profile_and_correlation(session, config, None)?.map(|(p, _)| p))
}

/// Profile plus, if a threshold is given, whether the correlation baseline
/// accepts the pair. An undefined correlation counts as a rejection.
fn profile_and_correlation(
    session: &Session<f64>,
    config: &PipelineConfig,
    threshold: Option<f64>,
) -> Result<Option<(Vec<f64>, Option<bool>)>> {
    let (profile, a, b) = match session_profile(
        session.message1.observe(),
        &session.schedule1,
        session.message3.observe(),
        &session.schedule3,
        config,
    ) {
        Ok(x) => x,
        Err(Error::NoBackscatter) => return Ok(None),
        Err(e) => return Err(e.into()),
    };
    let baseline = match threshold {
        None => None,
        Some(t) => Some(match correlation_decision(&a.features, &b.features, t) {
            Ok(d) => d.label == Label::Legitimate,
            Err(Error::UndefinedCorrelation) => false,
            Err(e) => return Err(e.into()),
        }),
    };
    Ok(Some((profile.into_vec(), baseline)))
}

/// Sessions of one exchange as heard by each AP. The APs share the
/// commanded message-3 order and the attacker's guess; each has its own
/// tags-to-AP channel and noise.
pub fn trial_sessions(cfg: &ExperimentConfig, actor: Actor, seed: u64) -> Result<Vec<Session<f64>>> {
    let dep = cfg.effective_deployment();
    let reference = dep.reference_schedule()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule3 = reference.shuffled(rng.gen());
    let guess = reference.shuffled(rng.gen());
    (0..cfg.ap_count)
        .map(|ap| {
            let env = dep.environment::<f64>(derive_seed(seed, &[ap as u64, 0]))?;
            Ok(simulate_session_with(&dep, &env, actor, &schedule3, &guess, derive_seed(seed, &[ap as u64, 1]))?)
        })
        .collect()
}

fn profiles(cfg: &ExperimentConfig, actor: Actor, rep: usize, role: Role, ap: usize, count: usize) -> Result<Vec<Vec<f64>>> {
    let dep = cfg.effective_deployment();
    let pipeline = cfg.pipeline();
    let found: Vec<Option<Vec<f64>>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let s = simulate_trial::<f64>(&dep, actor, trial_seed(cfg.seed, rep, role, ap, i))?;
            session_vector(&s, &pipeline)
        })
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().collect())
}

/// Per-AP outcome of one test exchange.
#[derive(Debug, Clone)]
struct TrialProfiles {
    per_ap: Vec<Option<Vec<f64>>>,
    baseline: Option<bool>,
}

fn test_trials(cfg: &ExperimentConfig, actor: Actor, rep: usize, role: Role) -> Result<Vec<TrialProfiles>> {
    let pipeline = cfg.pipeline();
    let threshold = cfg.baseline.then_some(cfg.baseline_threshold);
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let sessions = trial_sessions(cfg, actor, trial_seed(cfg.seed, rep, role, 0, i))?;
            let mut per_ap = Vec::with_capacity(sessions.len());
            let mut baseline = None;
            for (ap, s) in sessions.iter().enumerate() {
                let t = if ap == 0 { threshold } else { None };
                match profile_and_correlation(s, &pipeline, t)? {
                    Some((p, b)) => {
                        if ap == 0 {
                            baseline = b;
                        }
                        per_ap.push(Some(p));
                    }
                    None => {
                        if ap == 0 && t.is_some() {
                            baseline = Some(false);
                        }
                        per_ap.push(None);
                    }
                }
            }
            Ok(TrialProfiles { per_ap, baseline })
        })
        .collect()
}

/// Training and validation profiles of one AP.
struct ApData {
    train: Vec<Vec<f64>>,
    val_legit: Vec<Vec<f64>>,
    val_attacker: Vec<Vec<f64>>,
}

struct Cohort {
    aps: Vec<ApData>,
    legit: Vec<TrialProfiles>,
    attack: Vec<TrialProfiles>,
}

fn ap_data(cfg: &ExperimentConfig, rep: usize, ap: usize) -> Result<ApData> {
    Ok(ApData {
        train: profiles(cfg, Actor::Legitimate, rep, Role::Training, ap, cfg.training_size)?,
        val_legit: profiles(cfg, Actor::Legitimate, rep, Role::ValidationLegit, ap, cfg.validation_size)?,
        val_attacker: profiles(
            cfg,
            cfg.validation_attacker(),
            rep,
            Role::ValidationAttacker,
            ap,
            cfg.validation_negatives(),
        )?,
    })
}

fn build_cohort(cfg: &ExperimentConfig, rep: usize) -> Result<Cohort> {
    let aps = (0..cfg.ap_count).map(|ap| ap_data(cfg, rep, ap)).collect::<Result<Vec<_>>>()?;
    Ok(Cohort {
        aps,
        legit: test_trials(cfg, Actor::Legitimate, rep, Role::TestLegit)?,
        attack: test_trials(cfg, cfg.attacker_actor(), rep, Role::TestAttacker)?,
    })
}

/// Fitted model of one AP and how it was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApModelSummary {
    pub ap: usize,
    pub nu: f64,
    pub gamma: f64,
    pub training_profiles: usize,
    pub validation_legit: usize,
    pub validation_attacker: usize,
    pub validation_tp_rate: f64,
    pub validation_fp_rate: f64,
}

fn acceptance(model: &Model, set: &[Vec<f64>]) -> Result<f64> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let mut n = 0usize;
    for p in set {
        if model.decide(p)?.label == Label::Legitimate {
            n += 1;
        }
    }
    Ok(n as f64 / set.len() as f64)
}

fn select(cfg: &ExperimentConfig, d: &ApData, ap: usize) -> Result<(Model, ApModelSummary)> {
    let sel = select_nu_and_bandwidth(
        &d.train,
        &d.val_legit,
        &d.val_attacker,
        &cfg.feasible_nu_grid(),
        &cfg.bandwidth_scales,
        &TrainConfig::default(),
    )?;
    let summary = ApModelSummary {
        ap,
        nu: sel.nu,
        gamma: sel.gamma,
        training_profiles: d.train.len(),
        validation_legit: d.val_legit.len(),
        validation_attacker: d.val_attacker.len(),
        validation_tp_rate: sel.tp_rate,
        validation_fp_rate: sel.fp_rate,
    };
    Ok((sel.model, summary))
}

/// Model of AP `ap` at repetition `rep` fitted exactly as an experiment
/// would: the same training and validation draws, joint nu and bandwidth
/// selection.
pub fn fit_model(cfg: &ExperimentConfig, rep: usize, ap: usize) -> Result<(Model, ApModelSummary)> {
    cfg.validate()?;
    select(cfg, &ap_data(cfg, rep, ap)?, ap)
}

fn fixed(d: &ApData, ap: usize, nu: f64, gamma: f64) -> Result<(Model, ApModelSummary)> {
    let model = train(
        &d.train,
        &TrainConfig {
            nu,
            gamma: Gamma::Fixed(gamma),
            ..TrainConfig::default()
        },
    )?
    .model;
    let summary = ApModelSummary {
        ap,
        nu,
        gamma,
        training_profiles: d.train.len(),
        validation_legit: d.val_legit.len(),
        validation_attacker: d.val_attacker.len(),
        validation_tp_rate: acceptance(&model, &d.val_legit)?,
        validation_fp_rate: acceptance(&model, &d.val_attacker)?,
    };
    Ok((model, summary))
}

/// Key parameters echoed into every metrics row.
#[derive(Debug, Clone, Serialize)]
struct Echo {
    tag_count: usize,
    noise_sigma: f64,
    legit_jitter: f64,
    preset: Option<ChannelPreset>,
    attacker: AttackerKind,
    attacker_divergence: f64,
    estimation_error: f64,
    training_size: usize,
    validation_size: usize,
    pos_neg_ratio: f64,
    ap_count: usize,
}

impl Echo {
    fn of(c: &ExperimentConfig) -> Self {
        let d = c.effective_deployment();
        Self {
            tag_count: d.tag_count,
            noise_sigma: d.noise_sigma,
            legit_jitter: d.legit_jitter,
            preset: c.preset,
            attacker: c.attacker,
            attacker_divergence: c.attacker_divergence,
            estimation_error: c.estimation_error,
            training_size: c.training_size,
            validation_size: c.validation_size,
            pos_neg_ratio: c.pos_neg_ratio,
            ap_count: c.ap_count,
        }
    }
}

/// One row of the metrics CSV: a grid point at one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub axis: String,
    pub value: Option<f64>,
    pub repetition: usize,
    pub seed: u64,
    /// Voted acceptance of legitimate exchanges.
    pub tp_rate: f64,
    /// Voted acceptance of attacker exchanges.
    pub fp_rate: f64,
    pub trial_count: usize,
    pub legit_trials: usize,
    pub attacker_trials: usize,
    pub legit_accepted: usize,
    pub attacker_accepted: usize,
    /// Per-AP decisions with no backscatter found; counted as rejections.
    pub legit_no_backscatter: usize,
    pub attacker_no_backscatter: usize,
    pub ap_count: usize,
    /// Acceptance averaged over single-AP decisions.
    pub per_ap_tp_rate: f64,
    pub per_ap_fp_rate: f64,
    /// Operating point of AP 0.
    pub nu: f64,
    pub gamma: f64,
    pub training_profiles: usize,
    pub baseline_tp_rate: Option<f64>,
    pub baseline_fp_rate: Option<f64>,
    pub config: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifestEntry {
    Config {
        config: Box<ExperimentConfig>,
        seed_rule: &'static str,
    },
    Run {
        axis: String,
        value: Option<f64>,
        repetition: usize,
        master_seed: u64,
        models: Vec<ApModelSummary>,
        first_legit_seed: u64,
        first_attacker_seed: u64,
    },
}

pub const SEED_RULE: &str = "trial seed = derive_seed(master, [repetition, role, ap, index]); roles: \
    1 training, 2 validation legit, 3 validation attacker, 4 test legit, 5 test attacker, 6 simulate";

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<MetricsRecord>,
    pub manifest: Vec<ManifestEntry>,
}

#[derive(Default)]
struct Tally {
    trials: usize,
    accepted: usize,
    no_backscatter: usize,
    ap_decisions: usize,
    ap_accepted: usize,
    baseline_accepted: usize,
}

fn tally(models: &[Model], trials: &[TrialProfiles]) -> Result<Tally> {
    let mut t = Tally::default();
    for trial in trials {
        let mut labels = Vec::with_capacity(models.len());
        for (model, p) in models.iter().zip(&trial.per_ap) {
            let label = match p {
                Some(p) => model.decide(p)?.label,
                None => {
                    t.no_backscatter += 1;
                    Label::Attacker
                }
            };
            t.ap_decisions += 1;
            t.ap_accepted += usize::from(label == Label::Legitimate);
            labels.push(label);
        }
        t.trials += 1;
        t.accepted += usize::from(vote(&labels)? == Label::Legitimate);
        t.baseline_accepted += usize::from(trial.baseline == Some(true));
    }
    Ok(t)
}

fn rate(n: usize, d: usize) -> f64 {
    if d == 0 {
        f64::NAN
    } else {
        n as f64 / d as f64
    }
}

fn score(
    cfg: &ExperimentConfig,
    axis: Option<SweepAxis>,
    value: Option<f64>,
    rep: usize,
    cohort: &Cohort,
    fitted: Vec<(Model, ApModelSummary)>,
) -> Result<(MetricsRecord, ManifestEntry)> {
    let (models, summaries): (Vec<Model>, Vec<ApModelSummary>) = fitted.into_iter().unzip();
    let legit = tally(&models, &cohort.legit)?;
    let attack = tally(&models, &cohort.attack)?;
    let axis_name = axis.map_or("none", SweepAxis::name).to_string();
    let record = MetricsRecord {
        axis: axis_name.clone(),
        value,
        repetition: rep,
        seed: cfg.seed,
        tp_rate: rate(legit.accepted, legit.trials),
        fp_rate: rate(attack.accepted, attack.trials),
        trial_count: legit.trials + attack.trials,
        legit_trials: legit.trials,
        attacker_trials: attack.trials,
        legit_accepted: legit.accepted,
        attacker_accepted: attack.accepted,
        legit_no_backscatter: legit.no_backscatter,
        attacker_no_backscatter: attack.no_backscatter,
        ap_count: cfg.ap_count,
        per_ap_tp_rate: rate(legit.ap_accepted, legit.ap_decisions),
        per_ap_fp_rate: rate(attack.ap_accepted, attack.ap_decisions),
        nu: summaries[0].nu,
        gamma: summaries[0].gamma,
        training_profiles: summaries[0].training_profiles,
        baseline_tp_rate: cfg.baseline.then(|| rate(legit.baseline_accepted, legit.trials)),
        baseline_fp_rate: cfg.baseline.then(|| rate(attack.baseline_accepted, attack.trials)),
        config: serde_json::to_string(&Echo::of(cfg))?,
    };
    let manifest = ManifestEntry::Run {
        axis: axis_name,
        value,
        repetition: rep,
        master_seed: cfg.seed,
        models: summaries,
        first_legit_seed: trial_seed(cfg.seed, rep, Role::TestLegit, 0, 0),
        first_attacker_seed: trial_seed(cfg.seed, rep, Role::TestAttacker, 0, 0),
    };
    Ok((record, manifest))
}

/// Runs every grid point and repetition. Rows come out in grid order, then
/// repetition order, independent of thread scheduling.
///
/// A nu sweep shares one cohort per repetition across all nu values; the
/// bandwidth is chosen once per repetition by the usual joint selection and
/// held fixed while nu varies.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let mut base = cfg.clone();
    base.sweep = None;
    let mut manifest = vec![ManifestEntry::Config {
        config: Box::new(cfg.clone()),
        seed_rule: SEED_RULE,
    }];
    let mut rows: Vec<(usize, usize, MetricsRecord, ManifestEntry)> = Vec::new();

    match &cfg.sweep {
        Some(sweep) if sweep.axis == SweepAxis::Nu => {
            for rep in 0..cfg.repetitions {
                let cohort = build_cohort(&base, rep)?;
                let gammas: Vec<f64> = cohort
                    .aps
                    .iter()
                    .enumerate()
                    .map(|(ap, d)| select(&base, d, ap).map(|(_, s)| s.gamma))
                    .collect::<Result<_>>()?;
                for (i, &nu) in sweep.values.iter().enumerate() {
                    let point = base.at(SweepAxis::Nu, nu)?;
                    let fitted = cohort
                        .aps
                        .iter()
                        .enumerate()
                        .map(|(ap, d)| fixed(d, ap, nu, gammas[ap]))
                        .collect::<Result<Vec<_>>>()?;
                    let (r, m) = score(&point, Some(SweepAxis::Nu), Some(nu), rep, &cohort, fitted)?;
                    rows.push((i, rep, r, m));
                }
            }
        }
        _ => {
            for (i, (axis, value)) in cfg.grid().into_iter().enumerate() {
                let point = match (axis, value) {
                    (Some(a), Some(v)) => base.at(a, v)?,
                    _ => base.clone(),
                };
                for rep in 0..cfg.repetitions {
                    let cohort = build_cohort(&point, rep)?;
                    let fitted = cohort
                        .aps
                        .iter()
                        .enumerate()
                        .map(|(ap, d)| select(&point, d, ap))
                        .collect::<Result<Vec<_>>>()?;
                    let (r, m) = score(&point, axis, value, rep, &cohort, fitted)?;
                    rows.push((i, rep, r, m));
                }
            }
        }
    }
    rows.sort_by_key(|(i, rep, ..)| (*i, *rep));
    let mut records = Vec::with_capacity(rows.len());
    for (_, _, r, m) in rows {
        records.push(r);
        manifest.push(m);
    }
    Ok(ExperimentOutput { records, manifest })
}

pub fn write_metrics<W: Write>(writer: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Writes `metrics.csv` and `manifest.jsonl` under `dir`.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let metrics = dir.join("metrics.csv");
    let manifest = dir.join("manifest.jsonl");
    let file = File::create(&metrics).with_context(|| format!("creating {}", metrics.display()))?;
    write_metrics(BufWriter::new(file), &out.records)?;
    let mut m = BufWriter::new(File::create(&manifest).with_context(|| format!("creating {}", manifest.display()))?);
    for entry in &out.manifest {
        serde_json::to_writer(&mut m, entry)?;
        m.write_all(b"\n")?;
    }
    m.flush()?;
    Ok((metrics, manifest))
}
