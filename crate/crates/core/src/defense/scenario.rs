//! Upper-layer attack scenarios driven by an event timeline.
//!
//! Frames are abstract protocol events. The AP stores the first frame that
//! claims to come from the device as its reference, commands a fresh random
//! tag order for every later frame, and compares each one against the most
//! recently accepted frame. Frames that fail the comparison are dropped, so
//! an attack succeeds only if one of the attacker's frames is accepted.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::session::{AuthSession, SessionVerdict, DEFAULT_COHERENCE_BUDGET_S};
use crate::channel::{SignalTrace, TagSchedule};
use crate::error::{Error, Result};
use crate::ocsvm::OcSvmModel;
use crate::pipeline::{extract, PipelineConfig};
use crate::scalar::Real;
use crate::sim::{attacker_channel, attacker_frame, device_frame, Deployment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    DeauthDeadlock,
    JamReplay,
    AuthDeadlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Device,
    Ap,
    Attacker,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Data frame.
    Message,
    /// AP acknowledgement; carries no trace.
    Ack,
    Deauth,
    AuthRequest,
    /// Corrupts the next device frame starting within one message duration.
    Jam,
    /// Retransmits the last jammed frame from the attacker's position.
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_s: f64,
    pub actor: ActorKind,
    pub action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOutcome {
    AttackBlocked,
    AttackSucceeds,
    Legitimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Every attacker frame was dropped.
    AttackBlocked,
    /// At least one attacker frame was accepted.
    AttackSucceeds,
    /// No attacker present and every device frame accepted.
    Legitimate,
    /// No attacker present but a device frame was dropped.
    FalseAlarm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackerParams {
    pub divergence: f64,
}

impl Default for AttackerParams {
    fn default() -> Self {
        Self { divergence: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub expected_outcome: Option<ExpectedOutcome>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub attacker: AttackerParams,
    #[serde(default)]
    pub deployment: Deployment,
    #[serde(default = "default_budget")]
    pub coherence_budget_s: f64,
    pub timeline: Vec<Event>,
}

fn default_budget() -> f64 {
    DEFAULT_COHERENCE_BUDGET_S
}

impl ScenarioScript {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let script: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        script.validate()?;
        Ok(script)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeline.is_empty() {
            return Err(Error::MalformedTimeline("empty timeline".into()));
        }
        for pair in self.timeline.windows(2) {
            if !(pair[1].time_s > pair[0].time_s) {
                return Err(Error::MalformedTimeline(format!(
                    "event at {} s does not follow {} s",
                    pair[1].time_s, pair[0].time_s
                )));
            }
        }
        for e in &self.timeline {
            if !e.time_s.is_finite() || e.time_s < 0.0 {
                return Err(Error::MalformedTimeline(format!("bad time {}", e.time_s)));
            }
            let ok = match e.actor {
                ActorKind::Ap => e.action == Action::Ack,
                ActorKind::Device => matches!(e.action, Action::Message | Action::Deauth | Action::AuthRequest),
                ActorKind::Attacker => e.action != Action::Ack,
            };
            if !ok {
                return Err(Error::MalformedTimeline(format!("{:?} cannot {:?}", e.actor, e.action)));
            }
        }
        if !self.timeline.iter().any(|e| e.actor == ActorKind::Device) {
            return Err(Error::MalformedTimeline("the device never transmits".into()));
        }
        self.deployment.validate()
    }

    /// Default timeline of each scenario.
    pub fn builtin(kind: ScenarioKind) -> Self {
        use Action::*;
        use ActorKind::*;
        let ev = |time_s, actor, action| Event { time_s, actor, action };
        let timeline = match kind {
            // the attacker forges a deauthentication while the device is
            // associated
            ScenarioKind::DeauthDeadlock => vec![
                ev(0.000, Device, Message),
                ev(0.008, Ap, Ack),
                ev(0.015, Device, Message),
                ev(0.030, Attacker, Deauth),
                ev(0.045, Device, Message),
            ],
            // the attacker jams a device frame at the AP, records it and
            // replays it later
            ScenarioKind::JamReplay => vec![
                ev(0.000, Device, Message),
                ev(0.008, Ap, Ack),
                ev(0.0195, Attacker, Jam),
                ev(0.020, Device, Message),
                ev(0.040, Attacker, Replay),
                ev(0.055, Device, Message),
            ],
            // the attacker restarts authentication on the device's behalf
            ScenarioKind::AuthDeadlock => vec![
                ev(0.000, Device, AuthRequest),
                ev(0.008, Ap, Ack),
                ev(0.015, Device, Message),
                ev(0.030, Attacker, AuthRequest),
                ev(0.045, Device, Message),
            ],
        };
        Self {
            scenario: kind,
            expected_outcome: Some(ExpectedOutcome::AttackBlocked),
            seed: 0,
            attacker: AttackerParams::default(),
            deployment: Deployment::default(),
            coherence_budget_s: DEFAULT_COHERENCE_BUDGET_S,
            timeline,
        }
    }

    /// Same script with every attacker event removed.
    pub fn without_attacker(&self) -> Self {
        Self {
            timeline: self.timeline.iter().copied().filter(|e| e.actor != ActorKind::Attacker).collect(),
            expected_outcome: Some(ExpectedOutcome::Legitimate),
            ..self.clone()
        }
    }

    pub fn has_attacker(&self) -> bool {
        self.timeline.iter().any(|e| e.actor == ActorKind::Attacker)
    }
}

/// Result of one timeline event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepScore {
    pub time_s: f64,
    pub actor: ActorKind,
    pub action: Action,
    /// `None` for events without a classified frame.
    pub accepted: Option<bool>,
    pub score: Option<f64>,
    pub note: String,
    /// Per-tag mean power of a replay minus that of the jammed frame.
    pub tag_energy_delta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioKind,
    pub outcome: Outcome,
    pub expected: Option<ExpectedOutcome>,
    pub steps: Vec<StepScore>,
}

impl ScenarioReport {
    pub fn matches_expectation(&self) -> bool {
        match self.expected {
            None => true,
            Some(ExpectedOutcome::AttackBlocked) => self.outcome == Outcome::AttackBlocked,
            Some(ExpectedOutcome::AttackSucceeds) => self.outcome == Outcome::AttackSucceeds,
            Some(ExpectedOutcome::Legitimate) => self.outcome == Outcome::Legitimate,
        }
    }
}

struct Frame<T> {
    trace: SignalTrace<T>,
    schedule: TagSchedule,
    time_s: f64,
}

fn superpose<T: Real>(a: &SignalTrace<T>, b: &SignalTrace<T>) -> Result<SignalTrace<T>> {
    let n = a.len().max(b.len());
    let zero = Complex::new(T::zero(), T::zero());
    let samples = (0..n)
        .map(|i| *a.samples().get(i).unwrap_or(&zero) + *b.samples().get(i).unwrap_or(&zero))
        .collect();
    SignalTrace::new(samples, a.sample_rate_hz(), a.origin())
}

fn slot_powers<T: Real>(frame: &Frame<T>, reference: &TagSchedule, config: &PipelineConfig) -> Option<Vec<f64>> {
    let e = extract(frame.trace.observe(), &frame.schedule, reference, config).ok()?;
    Some(e.slots.iter().map(|s| frame.trace.mean_power(s.start, s.end).as_f64()).collect())
}

/// Plays the timeline through the full detection pipeline.
pub fn run_scenario<T: Real>(script: &ScenarioScript, model: &OcSvmModel<T>, config: &PipelineConfig) -> Result<ScenarioReport> {
    script.validate()?;
    let dep = &script.deployment;
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let env = dep.environment::<T>(rng.gen())?;
    let att_channel = attacker_channel(&env, script.attacker.divergence, rng.gen())?;
    let duration_s = dep.message_len() as f64 / dep.sample_rate_hz;

    let mut reference: Option<Frame<T>> = None;
    let mut jam_until: Option<f64> = None;
    let mut jammed: Option<Frame<T>> = None;
    let mut steps = Vec::with_capacity(script.timeline.len());
    let mut attacker_accepted = false;
    let mut device_dropped = false;

    for event in &script.timeline {
        let mut step = StepScore {
            time_s: event.time_s,
            actor: event.actor,
            action: event.action,
            accepted: None,
            score: None,
            note: String::new(),
            tag_energy_delta: None,
        };
        match (event.actor, event.action) {
            (ActorKind::Ap, _) => step.note = "ack".into(),
            (ActorKind::Attacker, Action::Jam) => {
                jam_until = Some(event.time_s + duration_s);
                step.note = "jamming".into();
            }
            (actor, action) => {
                let schedule = env.reference.shuffled(rng.gen());
                let mut trace = match actor {
                    ActorKind::Device => device_frame(dep, &env, &schedule, rng.gen())?,
                    _ => attacker_frame(dep, &env, &att_channel, &schedule, rng.gen())?,
                };
                let mut was_jammed = false;
                if actor == ActorKind::Device && jam_until.is_some_and(|t| event.time_s <= t) {
                    let noise = attacker_frame(dep, &env, &att_channel, &schedule, rng.gen())?;
                    trace = superpose(&trace, &noise)?;
                    jam_until = None;
                    was_jammed = true;
                }
                let frame = Frame {
                    trace,
                    schedule,
                    time_s: event.time_s,
                };

                if action == Action::Replay {
                    if let Some(j) = &jammed {
                        step.tag_energy_delta = slot_powers(&frame, &env.reference, config)
                            .zip(slot_powers(j, &env.reference, config))
                            .map(|(r, q)| r.iter().zip(&q).map(|(a, b)| a - b).collect());
                    }
                }

                let accepted = match &reference {
                    None => {
                        step.note = "stored as reference".into();
                        true
                    }
                    Some(r) => {
                        let mut session = AuthSession::new(
                            r.trace.clone(),
                            r.schedule.clone(),
                            r.time_s,
                            frame.trace.clone(),
                            frame.schedule.clone(),
                            frame.time_s,
                        );
                        session.coherence_budget_s = script.coherence_budget_s;
                        match session.authenticate(model, config) {
                            Ok(d) => {
                                step.score = d.score;
                                step.note = format!("{:?}", d.verdict).to_lowercase();
                                session.verdict() == SessionVerdict::Legitimate
                            }
                            Err(Error::CoherenceBudgetExceeded { span_s, .. }) => {
                                step.note = format!("outside coherence budget ({span_s:.4} s)");
                                false
                            }
                            Err(e) => return Err(e),
                        }
                    }
                };
                if was_jammed {
                    step.note.push_str(", jammed");
                }
                step.accepted = Some(accepted);
                if actor == ActorKind::Attacker && accepted {
                    attacker_accepted = true;
                }
                if actor == ActorKind::Device && !accepted && !was_jammed {
                    device_dropped = true;
                }
                if was_jammed {
                    jammed = Some(Frame {
                        trace: frame.trace.clone(),
                        schedule: frame.schedule.clone(),
                        time_s: frame.time_s,
                    });
                }
                if accepted {
                    reference = Some(frame);
                }
            }
        }
        steps.push(step);
    }

    let outcome = if script.has_attacker() {
        if attacker_accepted {
            Outcome::AttackSucceeds
        } else {
            Outcome::AttackBlocked
        }
    } else if device_dropped {
        Outcome::FalseAlarm
    } else {
        Outcome::Legitimate
    };
    Ok(ScenarioReport {
        scenario: script.scenario,
        outcome,
        expected: script.expected_outcome,
        steps,
    })
}
