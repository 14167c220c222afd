//! Tag-random scheme, voting and the protocol attack scenarios.

mod scenario;
mod session;

pub use scenario::{
    run_scenario, Action, ActorKind, Event, ExpectedOutcome, Outcome, ScenarioKind, ScenarioReport, ScenarioScript,
    StepScore,
};
pub use session::{AuthSession, SessionVerdict, DEFAULT_COHERENCE_BUDGET_S};

use crate::channel::{check_permutation, TagSchedule};
use crate::error::{Error, Result};
use crate::ocsvm::Label;

/// Puts per-tag items captured in `recorded` slot order into `reference`
/// slot order: output `k` belongs to tag `reference.order[k]`.
pub fn rearrange_by_schedule<S: Clone>(segments: &[S], recorded: &TagSchedule, reference: &TagSchedule) -> Result<Vec<S>> {
    let n = recorded.order.len();
    if segments.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: segments.len(),
        });
    }
    check_permutation(&recorded.order, n)?;
    check_permutation(&reference.order, n)?;
    let mut position_of = vec![0; n];
    for (p, &tag) in recorded.order.iter().enumerate() {
        position_of[tag] = p;
    }
    Ok(reference.order.iter().map(|&tag| segments[position_of[tag]].clone()).collect())
}

/// Strict majority; ties go to `Attacker`.
pub fn vote(labels: &[Label]) -> Result<Label> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("vote labels"));
    }
    let legit = labels.iter().filter(|&&l| l == Label::Legitimate).count();
    Ok(if 2 * legit > labels.len() {
        Label::Legitimate
    } else {
        Label::Attacker
    })
}

/// Probability that a strict majority of `n` independent voters, each right
/// with probability `p`, is right.
pub fn majority_probability(n: usize, p: f64) -> f64 {
    let mut total = 0.0;
    for k in (n / 2 + 1)..=n {
        total += binomial(n, k) * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    total
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
