use serde::{Deserialize, Serialize};

use crate::channel::{SignalTrace, TagSchedule};
use crate::error::{Error, Result};
use crate::ocsvm::OcSvmModel;
use crate::pipeline::{detect, Detection, PipelineConfig, Verdict};
use crate::scalar::Real;

/// Challenge-response exchanges must finish within this window.
pub const DEFAULT_COHERENCE_BUDGET_S: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionVerdict {
    Pending,
    Legitimate,
    Attacker,
}

/// Message 1 (reference tag order) and message 3 (random order, recorded
/// by the AP) of one authentication exchange.
#[derive(Debug, Clone)]
pub struct AuthSession<T> {
    pub message1_trace: SignalTrace<T>,
    pub message3_trace: SignalTrace<T>,
    pub schedule1: TagSchedule,
    pub schedule3: TagSchedule,
    /// Reception start times.
    pub message1_time_s: f64,
    pub message3_time_s: f64,
    pub coherence_budget_s: f64,
    verdict: SessionVerdict,
}

impl<T: Real> AuthSession<T> {
    pub fn new(
        message1_trace: SignalTrace<T>,
        schedule1: TagSchedule,
        message1_time_s: f64,
        message3_trace: SignalTrace<T>,
        schedule3: TagSchedule,
        message3_time_s: f64,
    ) -> Self {
        Self {
            message1_trace,
            message3_trace,
            schedule1,
            schedule3,
            message1_time_s,
            message3_time_s,
            coherence_budget_s: DEFAULT_COHERENCE_BUDGET_S,
            verdict: SessionVerdict::Pending,
        }
    }

    pub fn verdict(&self) -> SessionVerdict {
        self.verdict
    }

    /// From the start of message 1 to the end of message 3.
    pub fn span_s(&self) -> f64 {
        let duration = self.message3_trace.len() as f64 / self.message3_trace.sample_rate_hz().as_f64();
        self.message3_time_s + duration - self.message1_time_s
    }

    pub fn check_budget(&self) -> Result<()> {
        let span = self.span_s();
        if !(span <= self.coherence_budget_s) || self.message3_time_s < self.message1_time_s {
            return Err(Error::CoherenceBudgetExceeded {
                span_s: span,
                budget_s: self.coherence_budget_s,
            });
        }
        Ok(())
    }

    /// Classifies message 3 against message 1. Sessions over budget are
    /// refused before any signal processing; a missing backscatter signal
    /// counts as an attacker.
    pub fn authenticate(&mut self, model: &OcSvmModel<T>, config: &PipelineConfig) -> Result<Detection> {
        self.check_budget()?;
        let d = detect(
            model,
            self.message1_trace.observe(),
            &self.schedule1,
            self.message3_trace.observe(),
            &self.schedule3,
            config,
        )?;
        self.verdict = match d.verdict {
            Verdict::Legitimate => SessionVerdict::Legitimate,
            Verdict::Attacker | Verdict::NoBackscatter => SessionVerdict::Attacker,
        };
        Ok(d)
    }
}
