use serde::{Deserialize, Serialize};

use super::{squared_distance, OcSvmModel};
use crate::error::{Error, Result};
use crate::scalar::{median, Real};

/// Kernel bandwidth choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    Fixed(f64),
    /// `1 / median` of the pairwise squared distances among training
    /// profiles; falls back to 1 when that median is zero.
    MedianHeuristic,
    /// `1 / (dim * var)` with `var` the variance of all training entries
    /// pooled; falls back to 1 when that variance is zero.
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub nu: f64,
    pub gamma: Gamma,
    /// Stopping tolerance on the maximal KKT violation.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            nu: 0.16,
            gamma: Gamma::MedianHeuristic,
            tol: 1e-7,
            max_iterations: 1_000_000,
        }
    }
}

impl TrainConfig {
    pub fn with_nu(nu: f64) -> Self {
        Self { nu, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: OcSvmModel<T>,
    /// Dual variables for every training profile, before pruning.
    pub alphas: Vec<f64>,
    pub objective: f64,
    /// `max_{a_j > 0} G_j - min_{a_i < C} G_i` at exit.
    pub kkt_violation: f64,
    pub iterations: usize,
    pub gamma: f64,
}

pub(crate) fn median_heuristic_gamma<T: Real, P: AsRef<[T]>>(profiles: &[P]) -> f64 {
    let mut d2 = Vec::with_capacity(profiles.len() * profiles.len().saturating_sub(1) / 2);
    for i in 0..profiles.len() {
        for j in i + 1..profiles.len() {
            d2.push(squared_distance(profiles[i].as_ref(), profiles[j].as_ref()).as_f64());
        }
    }
    match median(&d2) {
        Some(m) if m > 0.0 && m.is_finite() => 1.0 / m,
        _ => 1.0,
    }
}

pub(crate) fn scale_gamma<T: Real, P: AsRef<[T]>>(profiles: &[P]) -> f64 {
    let values: Vec<f64> = profiles.iter().flat_map(|p| p.as_ref().iter().map(|v| v.as_f64())).collect();
    let dim = profiles.first().map_or(0, |p| p.as_ref().len());
    if values.is_empty() || dim == 0 {
        return 1.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 && var.is_finite() {
        1.0 / (dim as f64 * var)
    } else {
        1.0
    }
}

/// Solves the one-class dual by sequential minimal optimization with
/// second-order working-set selection. The kernel matrix is precomputed in
/// `f64`.
pub fn train<T: Real, P: AsRef<[T]>>(profiles: &[P], config: &TrainConfig) -> Result<TrainOutcome<T>> {
    let l = profiles.len();
    if l == 0 {
        return Err(Error::EmptyInput("training profiles"));
    }
    let nu = config.nu;
    if !(nu > 0.0 && nu <= 1.0) || nu * (l as f64) < 1.0 - 1e-12 {
        return Err(Error::InfeasibleNu(nu));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidArgument("tol must be positive".into()));
    }
    let dim = profiles[0].as_ref().len();
    for p in profiles {
        let p = p.as_ref();
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: p.len(),
            });
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training profile"));
        }
    }
    let gamma = match config.gamma {
        Gamma::Fixed(g) if g > 0.0 && g.is_finite() => g,
        Gamma::Fixed(g) => return Err(Error::InvalidArgument(format!("gamma {g} must be positive"))),
        Gamma::MedianHeuristic => median_heuristic_gamma(profiles),
        Gamma::Scale => scale_gamma(profiles),
    };

    let mut q = vec![0.0f64; l * l];
    for i in 0..l {
        q[i * l + i] = 1.0;
        for j in i + 1..l {
            let k = (-gamma * squared_distance(profiles[i].as_ref(), profiles[j].as_ref()).as_f64()).exp();
            q[i * l + j] = k;
            q[j * l + i] = k;
        }
    }

    let c = (1.0 / (nu * l as f64)).max(1.0 / l as f64);
    // uniform start is feasible for every nu and keeps symmetric problems symmetric
    let mut alpha = vec![1.0 / l as f64; l];
    let mut grad: Vec<f64> = (0..l).map(|i| q[i * l..(i + 1) * l].iter().sum::<f64>() / l as f64).collect();
    let eps = 1e-12 * c;

    let mut iterations = 0;
    let mut violation;
    loop {
        // i: raises alpha, j: lowers it
        let mut gmin = f64::INFINITY;
        let mut i_up = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        for t in 0..l {
            if alpha[t] < c - eps && grad[t] < gmin {
                gmin = grad[t];
                i_up = t;
            }
            if alpha[t] > eps && grad[t] > gmax {
                gmax = grad[t];
            }
        }
        violation = gmax - gmin;
        if i_up == usize::MAX || violation < config.tol || iterations >= config.max_iterations {
            break;
        }
        let i = i_up;
        let mut j_low = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for t in 0..l {
            if alpha[t] > eps {
                let b = grad[t] - gmin;
                if b > 0.0 {
                    let a = (q[i * l + i] + q[t * l + t] - 2.0 * q[i * l + t]).max(1e-12);
                    let gain = b * b / a;
                    if gain > best {
                        best = gain;
                        j_low = t;
                    }
                }
            }
        }
        if j_low == usize::MAX {
            break;
        }
        let j = j_low;
        let a = (q[i * l + i] + q[j * l + j] - 2.0 * q[i * l + j]).max(1e-12);
        let delta = ((grad[j] - grad[i]) / a).min(c - alpha[i]).min(alpha[j]);
        alpha[i] += delta;
        alpha[j] -= delta;
        if c - alpha[i] < eps {
            alpha[i] = c;
        }
        if alpha[j] < eps {
            alpha[j] = 0.0;
        }
        let (qi, qj) = (&q[i * l..(i + 1) * l], &q[j * l..(j + 1) * l]);
        for t in 0..l {
            grad[t] += delta * (qi[t] - qj[t]);
        }
        iterations += 1;
    }

    let objective = 0.5 * alpha.iter().zip(&grad).map(|(a, g)| a * g).sum::<f64>();

    // at the optimum G_i = rho on free vectors, G_i <= rho at the upper
    // bound and G_i >= rho at zero
    let free: Vec<f64> = (0..l)
        .filter(|&t| alpha[t] > config.tol && alpha[t] < c - config.tol)
        .map(|t| grad[t])
        .collect();
    let rho = match median(&free) {
        Some(r) => r,
        None => {
            let lower = (0..l).filter(|&t| alpha[t] >= c - config.tol).map(|t| grad[t]).fold(f64::NEG_INFINITY, f64::max);
            let upper = (0..l).filter(|&t| alpha[t] <= config.tol).map(|t| grad[t]).fold(f64::INFINITY, f64::min);
            match (lower.is_finite(), upper.is_finite()) {
                (true, true) => 0.5 * (lower + upper),
                (true, false) => lower,
                (false, true) => upper,
                (false, false) => unreachable!("every alpha is at a bound or free"),
            }
        }
    };

    let mut svs = Vec::new();
    let mut kept = Vec::new();
    for t in 0..l {
        if alpha[t] > config.tol {
            svs.push(profiles[t].as_ref().to_vec());
            kept.push(alpha[t]);
        }
    }
    let total: f64 = kept.iter().sum();
    let kept: Vec<T> = kept.iter().map(|a| T::lit(a / total)).collect();
    let model = OcSvmModel::from_parts(svs, kept, T::lit(rho), T::lit(gamma), T::lit(nu))?;
    Ok(TrainOutcome {
        model,
        alphas: alpha,
        objective,
        kkt_violation: violation.max(0.0),
        iterations,
        gamma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ocsvm::Label;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, l: usize, dim: usize) -> Vec<Vec<f64>> {
        (0..l).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
    }

    /// Euclidean projection onto {0 <= a <= c, sum a = 1} by bisection on
    /// the shift.
    fn project(v: &[f64], c: f64) -> Vec<f64> {
        let clip = |s: f64| v.iter().map(|x| (x - s).clamp(0.0, c)).collect::<Vec<_>>();
        let (mut lo, mut hi) = (
            v.iter().copied().fold(f64::INFINITY, f64::min) - c - 1.0,
            v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0,
        );
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if clip(mid).iter().sum::<f64>() > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        clip(0.5 * (lo + hi))
    }

    /// Accelerated projected gradient on the dual, run far past convergence.
    fn qp_oracle(x: &[Vec<f64>], gamma: f64, nu: f64) -> f64 {
        let l = x.len();
        let k: Vec<Vec<f64>> = x
            .iter()
            .map(|a| x.iter().map(|b| (-gamma * squared_distance(a, b)).exp()).collect())
            .collect();
        let c = 1.0 / (nu * l as f64);
        let objective = |a: &[f64]| {
            let mut s = 0.0;
            for i in 0..l {
                for j in 0..l {
                    s += a[i] * a[j] * k[i][j];
                }
            }
            0.5 * s
        };
        let step = 1.0 / l as f64; // 1 / (bound on the largest eigenvalue)
        let mut a = vec![1.0 / l as f64; l];
        let mut y = a.clone();
        let mut t = 1.0f64;
        for _ in 0..20_000 {
            let g: Vec<f64> = (0..l).map(|i| (0..l).map(|j| k[i][j] * y[j]).sum()).collect();
            let next = project(&y.iter().zip(&g).map(|(v, gi)| v - step * gi).collect::<Vec<_>>(), c);
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = next.iter().zip(&a).map(|(n, p)| n + (t - 1.0) / t_next * (n - p)).collect();
            a = next;
            t = t_next;
        }
        objective(&a)
    }

    #[test]
    fn identical_profiles_give_uniform_alphas() {
        let x = vec![vec![0.5f64, -1.0, 2.0]; 3];
        for nu in [1.0 / 3.0, 0.5, 1.0] {
            let out = train::<f64, _>(&x, &TrainConfig::with_nu(nu)).unwrap();
            for &a in &out.alphas {
                assert!((a - 1.0 / 3.0).abs() < 1e-12);
            }
            for p in &x {
                assert!(out.model.score(p).unwrap() >= -1e-12);
            }
        }
    }

    #[test]
    fn bandwidth_heuristics() {
        // squared distances 1, 4, 9 -> median 4; entries 0,1,3 -> var 14/9
        let x = vec![vec![0.0f64], vec![1.0], vec![3.0]];
        assert!((median_heuristic_gamma(&x) - 0.25).abs() < 1e-15);
        assert!((scale_gamma(&x) - 9.0 / 14.0).abs() < 1e-15);
        let same = vec![vec![2.0f64, 2.0]; 3];
        assert_eq!(median_heuristic_gamma(&same), 1.0);
        assert_eq!(scale_gamma(&same), 1.0);
        let out = train::<f64, _>(&x, &TrainConfig { gamma: Gamma::Scale, ..TrainConfig::with_nu(0.5) }).unwrap();
        assert!((out.gamma - 9.0 / 14.0).abs() < 1e-15);
    }

    #[test]
    fn infeasible_and_invalid_inputs() {
        let x = vec![vec![0.0f64]; 4];
        assert!(matches!(train::<f64, _>(&x, &TrainConfig::with_nu(0.2)), Err(Error::InfeasibleNu(_))));
        assert!(train::<f64, _>(&x, &TrainConfig::with_nu(0.0)).is_err());
        assert!(train::<f64, _>(&[vec![f64::NAN]], &TrainConfig::with_nu(1.0)).is_err());
        assert!(train::<f64, _>(&[vec![0.0], vec![0.0, 1.0]], &TrainConfig::with_nu(1.0)).is_err());
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(train::<f64, _>(&empty, &TrainConfig::with_nu(1.0)).is_err());
    }

    #[test]
    fn matches_qp_oracle_on_small_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let x = random_points(&mut rng, 20, 3);
            let cfg = TrainConfig {
                nu: 0.5,
                gamma: Gamma::Fixed(1.0),
                ..TrainConfig::default()
            };
            let out = train::<f64, _>(&x, &cfg).unwrap();
            let oracle = qp_oracle(&x, 1.0, 0.5);
            assert!((out.objective - oracle).abs() < 1e-6, "{} vs {}", out.objective, oracle);
            assert!(out.kkt_violation < 1e-6);
            let c = 1.0 / (0.5 * 20.0);
            assert!(out.alphas.iter().all(|&a| (0.0..=c + 1e-12).contains(&a)));
            assert!((out.model.alphas().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn outlier_fraction_bounded_by_nu() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..30 {
            let l = rng.gen_range(10..=40);
            let nu = rng.gen_range(0.1..0.9);
            if nu * (l as f64) < 1.0 {
                continue;
            }
            let x = random_points(&mut rng, l, 2);
            let out = train::<f64, _>(&x, &TrainConfig::with_nu(nu)).unwrap();
            let outliers = x
                .iter()
                .filter(|p| out.model.decide(p).unwrap().label == Label::Attacker)
                .count();
            assert!(outliers as f64 / l as f64 <= nu + 2.0 / l as f64, "trial {trial}");
        }
    }

    #[test]
    fn score_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_points(&mut rng, 30, 5);
        let out = train::<f64, _>(&x, &TrainConfig::with_nu(0.3)).unwrap();
        let m = &out.model;
        for _ in 0..20 {
            let probe: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let mut s = 0.0;
            for (sv, a) in m.support_vectors().iter().zip(m.alphas()) {
                let d2: f64 = sv.iter().zip(&probe).map(|(u, v)| (u - v).powi(2)).sum();
                s += a * (-m.gamma() * d2).exp();
            }
            assert!((m.score(&probe).unwrap() - (s - m.rho())).abs() < 1e-10);
        }
    }

    #[test]
    fn scaling_with_matched_gamma_keeps_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_points(&mut rng, 25, 4);
        let scale = 3.7;
        let xs: Vec<Vec<f64>> = x.iter().map(|p| p.iter().map(|v| v * scale).collect()).collect();
        let a = train::<f64, _>(&x, &TrainConfig { gamma: Gamma::Fixed(0.8), ..TrainConfig::with_nu(0.3) }).unwrap();
        let b = train::<f64, _>(
            &xs,
            &TrainConfig {
                gamma: Gamma::Fixed(0.8 / (scale * scale)),
                ..TrainConfig::with_nu(0.3)
            },
        )
        .unwrap();
        for (p, ps) in x.iter().zip(&xs) {
            let (sa, sb) = (a.model.score(p).unwrap(), b.model.score(ps).unwrap());
            assert!((sa - sb).abs() < 1e-6);
        }
        // the median heuristic adapts gamma on its own
        let c = train::<f64, _>(&x, &TrainConfig::with_nu(0.3)).unwrap();
        let d = train::<f64, _>(&xs, &TrainConfig::with_nu(0.3)).unwrap();
        assert!((c.gamma / d.gamma - scale * scale).abs() < 1e-9);
    }

    #[test]
    fn reordering_support_vectors_keeps_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_points(&mut rng, 20, 3);
        let m = train::<f64, _>(&x, &TrainConfig::with_nu(0.4)).unwrap().model;
        let mut svs = m.support_vectors().to_vec();
        let mut alphas = m.alphas().to_vec();
        svs.reverse();
        alphas.reverse();
        let r = OcSvmModel::from_parts(svs, alphas, m.rho(), m.gamma(), m.nu()).unwrap();
        for _ in 0..50 {
            let probe: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert_eq!(m.decide(&probe).unwrap().label, r.decide(&probe).unwrap().label);
        }
    }

    #[test]
    fn f32_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<Vec<f32>> = (0..15).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let out = train::<f32, _>(&x, &TrainConfig::with_nu(0.5)).unwrap();
        assert!(out.model.alphas().iter().all(|a| *a >= 0.0));
    }
}
