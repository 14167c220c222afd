use serde::{Deserialize, Serialize};

use super::solver::{median_heuristic_gamma, train, Gamma, TrainConfig};
use super::{Label, OcSvmModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Validation rates for one grid value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuPoint {
    pub nu: f64,
    pub gamma: f64,
    /// Accepted fraction of `val_pos`.
    pub tp_rate: f64,
    /// Accepted fraction of `val_neg`; `NaN` when there are no negatives.
    pub fp_rate: f64,
}

impl NuPoint {
    pub fn detection_rate(&self) -> f64 {
        1.0 - self.fp_rate
    }
}

#[derive(Debug, Clone)]
pub struct NuSelection<T> {
    pub nu: f64,
    pub gamma: f64,
    pub tp_rate: f64,
    pub fp_rate: f64,
    pub model: OcSvmModel<T>,
    pub sweep: Vec<NuPoint>,
}

fn acceptance<T: Real, P: AsRef<[T]>>(model: &OcSvmModel<T>, set: &[P]) -> Result<f64> {
    if set.is_empty() {
        return Ok(f64::NAN);
    }
    let mut accepted = 0usize;
    for p in set {
        if model.decide(p.as_ref())?.label == Label::Legitimate {
            accepted += 1;
        }
    }
    Ok(accepted as f64 / set.len() as f64)
}

fn sweep<T: Real, P: AsRef<[T]>>(
    train_pos: &[P],
    val_pos: &[P],
    val_neg: &[P],
    grid: &[f64],
    base: &TrainConfig,
    cost: impl Fn(&NuPoint) -> f64,
) -> Result<NuSelection<T>> {
    if train_pos.is_empty() || val_pos.is_empty() {
        return Err(Error::EmptyInput("validation positives"));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("nu grid"));
    }
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| a.total_cmp(b));
    let mut points = Vec::with_capacity(order.len());
    let mut best: Option<(f64, NuPoint, OcSvmModel<T>)> = None;
    for nu in order {
        let out = train::<T, P>(train_pos, &TrainConfig { nu, ..*base })?;
        let point = NuPoint {
            nu,
            gamma: out.gamma,
            tp_rate: acceptance(&out.model, val_pos)?,
            fp_rate: acceptance(&out.model, val_neg)?,
        };
        let c = cost(&point);
        // strict comparison keeps the smaller nu on ties
        if best.as_ref().map_or(true, |(b, _, _)| c < *b) {
            best = Some((c, point, out.model));
        }
        points.push(point);
    }
    let (_, point, model) = best.expect("non-empty grid");
    Ok(NuSelection {
        nu: point.nu,
        gamma: point.gamma,
        tp_rate: point.tp_rate,
        fp_rate: point.fp_rate,
        model,
        sweep: points,
    })
}

/// Picks the grid value where the TP curve crosses the attacker-detection
/// curve, i.e. minimizing `|TP - (1 - FP)|`. Ties go to the smaller nu.
pub fn select_nu<T: Real, P: AsRef<[T]>>(
    train_pos: &[P],
    val_pos: &[P],
    val_neg: &[P],
    grid: &[f64],
    base: &TrainConfig,
) -> Result<NuSelection<T>> {
    if val_neg.is_empty() {
        return Err(Error::EmptyInput("validation negatives"));
    }
    sweep(train_pos, val_pos, val_neg, grid, base, |p| (p.tp_rate - p.detection_rate()).abs())
}

/// [`select_nu`] over a joint grid: every nu in `grid` at each bandwidth
/// `scale / median pairwise squared distance` of the training profiles.
/// Ties go to the earlier scale, then the smaller nu.
pub fn select_nu_and_bandwidth<T: Real, P: AsRef<[T]>>(
    train_pos: &[P],
    val_pos: &[P],
    val_neg: &[P],
    grid: &[f64],
    scales: &[f64],
    base: &TrainConfig,
) -> Result<NuSelection<T>> {
    if val_neg.is_empty() {
        return Err(Error::EmptyInput("validation negatives"));
    }
    if scales.is_empty() {
        return Err(Error::EmptyInput("bandwidth scales"));
    }
    let median_gamma = median_heuristic_gamma(train_pos);
    let cost = |p: &NuPoint| (p.tp_rate - p.detection_rate()).abs();
    let mut best: Option<(f64, NuSelection<T>)> = None;
    let mut points = Vec::new();
    for &scale in scales {
        let cfg = TrainConfig {
            gamma: Gamma::Fixed(median_gamma * scale),
            ..*base
        };
        let sel = sweep(train_pos, val_pos, val_neg, grid, &cfg, cost)?;
        points.extend_from_slice(&sel.sweep);
        let c = cost(&NuPoint {
            nu: sel.nu,
            gamma: sel.gamma,
            tp_rate: sel.tp_rate,
            fp_rate: sel.fp_rate,
        });
        if best.as_ref().map_or(true, |(b, _)| c < *b) {
            best = Some((c, sel));
        }
    }
    let (_, mut sel) = best.expect("non-empty scales");
    sel.sweep = points;
    Ok(sel)
}

/// Positives-only variant: the grid value whose validation TP is closest to
/// `target_tp`. Negatives, if given, are only scored.
pub fn select_nu_for_tp<T: Real, P: AsRef<[T]>>(
    train_pos: &[P],
    val_pos: &[P],
    val_neg: &[P],
    grid: &[f64],
    target_tp: f64,
    base: &TrainConfig,
) -> Result<NuSelection<T>> {
    sweep(train_pos, val_pos, val_neg, grid, base, |p| (p.tp_rate - target_tp).abs())
}
