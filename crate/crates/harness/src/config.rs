use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shieldscatter::pipeline::{PipelineConfig, DEFAULT_CORRELATION_THRESHOLD};
use shieldscatter::sim::{Actor, Deployment};

/// What the attacker in the test cohort does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AttackerKind {
    /// Impersonates from another location.
    Basic,
    /// Emulates the device channel but guesses the tag order.
    Advanced,
}

/// Sender mix for `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ActorChoice {
    Legitimate,
    Attacker,
    /// Even pair indices legitimate, odd ones attacker.
    Mixed,
}

/// Environment label. Only changes the multipath profile; no claim of
/// physical fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ChannelPreset {
    Lab,
    MeetingRoom,
    Corridor,
}

impl ChannelPreset {
    pub fn apply(self, d: &mut Deployment) {
        match self {
            ChannelPreset::Lab => {
                d.weak_paths = 2;
                d.weak_gain_range = (0.03, 0.1);
                d.weak_delay_range = (3, 20);
            }
            ChannelPreset::MeetingRoom => {
                d.weak_paths = 4;
                d.weak_gain_range = (0.05, 0.15);
                d.weak_delay_range = (3, 30);
            }
            ChannelPreset::Corridor => {
                d.weak_paths = 1;
                d.weak_gain_range = (0.1, 0.2);
                d.weak_delay_range = (10, 40);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Nu,
    TagCount,
    TrainingSize,
    PosNegRatio,
    AttackerDivergence,
    ApCount,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Nu => "nu",
            SweepAxis::TagCount => "tag_count",
            SweepAxis::TrainingSize => "training_size",
            SweepAxis::PosNegRatio => "pos_neg_ratio",
            SweepAxis::AttackerDivergence => "attacker_divergence",
            SweepAxis::ApCount => "ap_count",
        }
    }

    fn integral(self) -> bool {
        matches!(self, SweepAxis::TagCount | SweepAxis::TrainingSize | SweepAxis::ApCount)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Everything an experiment or `simulate` run needs. Loaded from TOML;
/// every key can be overridden on the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every trial seed derives from it.
    pub seed: u64,
    pub deployment: Deployment,
    pub preset: Option<ChannelPreset>,
    pub attacker: AttackerKind,
    /// Channel divergence of the basic attacker (distance analogue).
    pub attacker_divergence: f64,
    /// Gain estimation error of the advanced attacker.
    pub estimation_error: f64,
    /// Test pairs per class and grid point.
    pub trials: usize,
    pub repetitions: usize,
    /// Legitimate profiles the one-class model is trained on.
    pub training_size: usize,
    /// Legitimate profiles in the validation pool.
    pub validation_size: usize,
    /// Attacker profiles per legitimate profile in the validation pool.
    pub pos_neg_ratio: f64,
    pub nu_grid: Vec<f64>,
    /// Multiples of the median-heuristic gamma tried during selection.
    pub bandwidth_scales: Vec<f64>,
    pub ap_count: usize,
    /// Also score the correlation baseline on the test pairs.
    pub baseline: bool,
    pub baseline_threshold: f64,
    pub sweep: Option<Sweep>,
    /// Actor mix for `simulate`.
    pub actor: ActorChoice,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            deployment: Deployment::default(),
            preset: None,
            attacker: AttackerKind::Basic,
            attacker_divergence: 0.8,
            estimation_error: 0.0,
            trials: 200,
            repetitions: 1,
            training_size: 577,
            validation_size: 200,
            pos_neg_ratio: 0.154,
            nu_grid: vec![0.005, 0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16],
            bandwidth_scales: vec![1.0, 0.3, 0.1, 0.03, 0.01],
            ap_count: 1,
            baseline: false,
            baseline_threshold: DEFAULT_CORRELATION_THRESHOLD,
            sweep: None,
            actor: ActorChoice::Mixed,
            output: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Deployment with the preset applied.
    pub fn effective_deployment(&self) -> Deployment {
        let mut d = self.deployment.clone();
        if let Some(p) = self.preset {
            p.apply(&mut d);
        }
        d
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let mut p = PipelineConfig::default();
        p.segmenter = p.segmenter.with_bit_period(self.effective_deployment().samples_per_bit());
        p
    }

    pub fn attacker_actor(&self) -> Actor {
        match self.attacker {
            AttackerKind::Basic => Actor::BasicAttacker {
                divergence: self.attacker_divergence,
            },
            AttackerKind::Advanced => Actor::AdvancedAttacker {
                estimation_error: self.estimation_error,
            },
        }
    }

    /// Attackers in the validation pool are always basic: an operator can
    /// record an impostor device, not a channel-emulating adversary.
    pub fn validation_attacker(&self) -> Actor {
        Actor::BasicAttacker {
            divergence: self.attacker_divergence,
        }
    }

    pub fn validation_negatives(&self) -> usize {
        (self.pos_neg_ratio * self.validation_size as f64).round() as usize
    }

    /// `nu_grid` restricted to values feasible for the training size.
    pub fn feasible_nu_grid(&self) -> Vec<f64> {
        let l = self.training_size as f64;
        self.nu_grid.iter().copied().filter(|&nu| nu * l >= 1.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.repetitions == 0 {
            bail!("repetitions must be at least 1");
        }
        if self.ap_count == 0 {
            bail!("ap_count must be at least 1");
        }
        if self.training_size < 2 || self.validation_size == 0 {
            bail!("training_size must be at least 2 and validation_size at least 1");
        }
        if !(self.pos_neg_ratio > 0.0) || !self.pos_neg_ratio.is_finite() {
            bail!("pos_neg_ratio must be positive");
        }
        if self.validation_negatives() == 0 {
            bail!("pos_neg_ratio * validation_size rounds to zero attacker profiles");
        }
        if !(self.attacker_divergence >= 0.0) || !(self.estimation_error >= 0.0) {
            bail!("attacker_divergence and estimation_error must be non-negative");
        }
        if self.nu_grid.is_empty() || self.nu_grid.iter().any(|&nu| !(nu > 0.0 && nu <= 1.0)) {
            bail!("nu_grid must be non-empty with values in (0, 1]");
        }
        if self.feasible_nu_grid().is_empty() {
            bail!("no nu in nu_grid satisfies nu * training_size >= 1");
        }
        if self.bandwidth_scales.is_empty() || self.bandwidth_scales.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            bail!("bandwidth_scales must be non-empty and positive");
        }
        if !self.baseline_threshold.is_finite() {
            bail!("baseline_threshold must be finite");
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                bail!("sweep grid is empty");
            }
            for &v in &sweep.values {
                self.at(sweep.axis, v)?;
            }
        }
        self.effective_deployment().validate()?;
        Ok(())
    }

    /// The configuration at one grid point of `axis`.
    pub fn at(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        if axis.integral() && (value.fract() != 0.0 || value < 1.0) {
            bail!("{axis} needs positive integer values, got {value}");
        }
        let mut c = self.clone();
        c.sweep = None;
        match axis {
            SweepAxis::Nu => {
                if !(value > 0.0 && value <= 1.0) {
                    bail!("nu must lie in (0, 1], got {value}");
                }
                if value * (self.training_size as f64) < 1.0 {
                    bail!("nu {value} is infeasible for {} training profiles", self.training_size);
                }
                c.nu_grid = vec![value];
            }
            SweepAxis::TagCount => c.deployment.tag_count = value as usize,
            SweepAxis::TrainingSize => {
                if value < 2.0 {
                    bail!("training_size must be at least 2");
                }
                c.training_size = value as usize;
            }
            SweepAxis::PosNegRatio => {
                if !(value > 0.0) {
                    bail!("pos_neg_ratio must be positive, got {value}");
                }
                c.pos_neg_ratio = value;
            }
            SweepAxis::AttackerDivergence => {
                if !(value >= 0.0) {
                    bail!("attacker_divergence must be non-negative, got {value}");
                }
                c.attacker_divergence = value;
            }
            SweepAxis::ApCount => c.ap_count = value as usize,
        }
        if axis == SweepAxis::TagCount {
            c.effective_deployment().validate()?;
        }
        Ok(c)
    }

    /// Grid points as `(axis name, value)`; a single unnamed point without
    /// a sweep.
    pub fn grid(&self) -> Vec<(Option<SweepAxis>, Option<f64>)> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| (Some(s.axis), Some(v))).collect(),
            None => vec![(None, None)],
        }
    }
}
