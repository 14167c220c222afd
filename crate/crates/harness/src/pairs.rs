//! Trace-pair files written by `simulate` and read by the other commands.
//!
//! Pair `i` is `pair_{i:05}.ssct` (message 1 then message 3) plus a
//! `pair_{i:05}.json` sidecar with the schedules the AP commanded.
//! `simulate_log.jsonl` records seeds and ground truth; nothing that decides
//! reads it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shieldscatter::channel::{OriginLabel, SignalTrace, TagSchedule};
use shieldscatter::sim::{simulate_trial, Actor};
use shieldscatter::trace_io::{read_all, write_trace};

use crate::config::{ActorChoice, ExperimentConfig};
use crate::seeds::{trial_seed, Role};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedules {
    pub schedule1: TagSchedule,
    pub schedule3: TagSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub index: usize,
    pub file: String,
    pub seed: u64,
    pub actor: Actor,
    pub origin: OriginLabel,
    pub assumed_order: Option<Vec<usize>>,
}

pub const LOG_FILE: &str = "simulate_log.jsonl";

pub fn pair_stem(index: usize) -> String {
    format!("pair_{index:05}")
}

/// Actor of pair `index` for the configured mix.
pub fn actor_for(cfg: &ExperimentConfig, index: usize) -> Actor {
    match cfg.actor {
        ActorChoice::Legitimate => Actor::Legitimate,
        ActorChoice::Attacker => cfg.attacker_actor(),
        ActorChoice::Mixed if index % 2 == 0 => Actor::Legitimate,
        ActorChoice::Mixed => cfg.attacker_actor(),
    }
}

/// Writes `cfg.trials` pairs into `dir` and returns the log entries.
pub fn simulate_pairs(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<LogEntry>> {
    cfg.effective_deployment().validate()?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let dep = cfg.effective_deployment();
    let mut log = BufWriter::new(File::create(dir.join(LOG_FILE))?);
    let mut entries = Vec::with_capacity(cfg.trials);
    for index in 0..cfg.trials {
        let actor = actor_for(cfg, index);
        let seed = trial_seed(cfg.seed, 0, Role::Simulate, 0, index);
        let session = simulate_trial::<f64>(&dep, actor, seed)?;
        let stem = pair_stem(index);
        let file = format!("{stem}.ssct");
        let mut w = BufWriter::new(File::create(dir.join(&file))?);
        write_trace(&mut w, &session.message1)?;
        write_trace(&mut w, &session.message3)?;
        w.flush()?;
        let schedules = Schedules {
            schedule1: session.schedule1,
            schedule3: session.schedule3,
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&schedules)?)?;
        let entry = LogEntry {
            index,
            file,
            seed,
            actor,
            origin: actor.origin(),
            assumed_order: session.assumed_order,
        };
        serde_json::to_writer(&mut log, &entry)?;
        log.write_all(b"\n")?;
        entries.push(entry);
    }
    log.flush()?;
    Ok(entries)
}

/// Both messages of a pair file plus its sidecar schedules.
pub fn read_pair(path: &Path) -> Result<(SignalTrace<f64>, SignalTrace<f64>, Schedules)> {
    let mut r = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let traces = read_all::<f64, _>(&mut r).with_context(|| format!("reading {}", path.display()))?;
    if traces.len() != 2 {
        bail!("{} holds {} records, expected 2", path.display(), traces.len());
    }
    let sidecar = path.with_extension("json");
    let text = std::fs::read_to_string(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?;
    let schedules: Schedules = serde_json::from_str(&text).with_context(|| format!("parsing {}", sidecar.display()))?;
    let mut it = traces.into_iter();
    let (m1, m3) = (it.next().expect("two records"), it.next().expect("two records"));
    Ok((m1, m3, schedules))
}

/// Pair files given directly, or every `pair_*.ssct` inside a directory,
/// sorted by name.
pub fn expand_pairs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| {
                    f.extension().is_some_and(|e| e == "ssct")
                        && f.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("pair_"))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("no pair files found");
    }
    Ok(out)
}

pub fn read_log(dir: &Path) -> Result<Vec<LogEntry>> {
    let text = std::fs::read_to_string(dir.join(LOG_FILE))?;
    text.lines().map(|l| Ok(serde_json::from_str(l)?)).collect()
}
