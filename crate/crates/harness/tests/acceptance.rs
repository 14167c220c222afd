//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test --release -p shieldscatter-harness --test acceptance -- --nocapture`
//! to see the lines.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shieldscatter::defense::{majority_probability, run_scenario, Outcome, ScenarioKind, ScenarioScript};
use shieldscatter::dtw::{build_profile, dtw_distance, CHUNK_LAYOUT, PROFILE_LEN};
use shieldscatter::features::{features_from_samples, FeatureConfig};
use shieldscatter::ocsvm::{train, Gamma, TrainConfig};
use shieldscatter::segmenter::segment;
use shieldscatter::channel::tag_activity_mask;
use shieldscatter::sim::{device_frame, Deployment};
use shieldscatter::Error;
use shieldscatter_harness::config::{AttackerKind, ExperimentConfig, Sweep, SweepAxis};
use shieldscatter_harness::experiment::{fit_model, run_experiment, write_metrics, MetricsRecord};
use shieldscatter_harness::report::mean_se;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// ---- criterion 1 ----

/// Minimum over every monotone path, enumerated one by one.
fn dtw_by_enumeration(x: &[f64], y: &[f64]) -> f64 {
    fn walk(x: &[f64], y: &[f64], i: usize, j: usize, acc: f64, best: &mut f64) {
        let acc = acc + (x[i] - y[j]).abs();
        if i + 1 == x.len() && j + 1 == y.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < x.len() {
            walk(x, y, i + 1, j, acc, best);
        }
        if j + 1 < y.len() {
            walk(x, y, i, j + 1, acc, best);
        }
        if i + 1 < x.len() && j + 1 < y.len() {
            walk(x, y, i + 1, j + 1, acc, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(x, y, 0, 0, 0.0, &mut best);
    best
}

fn dtw_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..1000 {
        // integer-valued samples keep every path sum exact
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(1..=6);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-20..=20) as f64).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-20..=20) as f64).collect();
        if dtw_distance(&x, &y).unwrap() != dtw_by_enumeration(&x, &y) {
            mismatches += 1;
        }
    }
    let took = start.elapsed();
    verdict(
        mismatches == 0 && took < Duration::from_secs(10),
        format!("{mismatches} mismatches over 1000 pairs in {took:.2?}"),
    )
}

// ---- criterion 2 ----

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()
}

/// Projection onto `{0 <= a_i <= c, sum a = 1}` by bisection on the shift.
fn project(v: &[f64], c: f64) -> Vec<f64> {
    let clip = |t: f64| v.iter().map(|x| (x - t).clamp(0.0, c)).collect::<Vec<_>>();
    let (mut lo, mut hi) = (
        v.iter().copied().fold(f64::INFINITY, f64::min) - 1.0,
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

/// Dual optimum `min 1/2 a'Ka` by accelerated projected gradient.
fn qp_oracle(x: &[Vec<f64>], gamma: f64, nu: f64) -> f64 {
    let l = x.len();
    let k: Vec<Vec<f64>> = x.iter().map(|a| x.iter().map(|b| (-gamma * sq(a, b)).exp()).collect()).collect();
    let c = 1.0 / (nu * l as f64);
    let step = 1.0 / l as f64;
    let mut a = vec![1.0 / l as f64; l];
    let mut y = a.clone();
    let mut t = 1.0f64;
    for _ in 0..30_000 {
        let g: Vec<f64> = (0..l).map(|i| (0..l).map(|j| k[i][j] * y[j]).sum()).collect();
        let next = project(&y.iter().zip(&g).map(|(v, gi)| v - step * gi).collect::<Vec<_>>(), c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = next.iter().zip(&a).map(|(n, p)| n + (t - 1.0) / t_next * (n - p)).collect();
        a = next;
        t = t_next;
    }
    let mut s = 0.0;
    for i in 0..l {
        for j in 0..l {
            s += a[i] * a[j] * k[i][j];
        }
    }
    0.5 * s
}

fn ocsvm_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut worst_gap, mut worst_kkt, mut nu_ok) = (0.0f64, 0.0f64, 0);
    for _ in 0..50 {
        let l = rng.gen_range(4..=20);
        let dim = rng.gen_range(1..=3);
        let nu = rng.gen_range((1.0 / l as f64).max(0.05)..=1.0);
        let gamma = rng.gen_range(0.2..3.0);
        let x: Vec<Vec<f64>> = (0..l).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let out = train::<f64, _>(
            &x,
            &TrainConfig {
                nu,
                gamma: Gamma::Fixed(gamma),
                ..TrainConfig::default()
            },
        )
        .unwrap();
        worst_gap = worst_gap.max((out.objective - qp_oracle(&x, gamma, nu)).abs());
        worst_kkt = worst_kkt.max(out.kkt_violation);
        // margin points score zero up to rounding; only strict outliers count
        let outliers = x.iter().filter(|p| out.model.score(p).unwrap() < -1e-6).count();
        if outliers as f64 / l as f64 <= nu + 2.0 / l as f64 {
            nu_ok += 1;
        }
    }
    let took = start.elapsed();
    verdict(
        worst_gap < 1e-6 && worst_kkt < 1e-6 && nu_ok >= 48 && took < Duration::from_secs(60),
        format!(
            "max objective gap {worst_gap:.2e}, max KKT residual {worst_kkt:.2e}, nu-property {nu_ok}/50, {took:.2?}"
        ),
    )
}

// ---- criterion 3 ----

/// Fraction of ground-truth tag-active samples inside the fused segment,
/// pooled over `count` traces. A missed detection covers nothing.
fn segmentation_overlap(noise_sigma: f64, count: u64) -> (f64, f64) {
    let dep = Deployment {
        noise_sigma,
        ..Deployment::default()
    };
    let cfg = ExperimentConfig {
        deployment: dep.clone(),
        ..ExperimentConfig::default()
    }
    .pipeline();
    let (mut covered, mut active, mut worst) = (0usize, 0usize, 1.0f64);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + i);
        let env = dep.environment::<f64>(rng.gen()).unwrap();
        let schedule = env.reference.shuffled(rng.gen());
        let trace = device_frame(&dep, &env, &schedule, rng.gen()).unwrap();
        let mask = tag_activity_mask(&env.tags, &schedule, trace.sample_rate_hz(), trace.len());
        let truth = mask.iter().filter(|&&m| m).count();
        let hit = match segment(trace.observe(), &cfg.segmenter) {
            Ok(rep) => mask[rep.segment.start..rep.segment.end].iter().filter(|&&m| m).count(),
            Err(Error::NoBackscatter) => 0,
            Err(e) => panic!("{e}"),
        };
        covered += hit;
        active += truth;
        worst = worst.min(hit as f64 / truth as f64);
    }
    (covered as f64 / active as f64, worst)
}

fn segmentation() -> Verdict {
    let (clean, clean_min) = segmentation_overlap(0.0, 200);
    let (noisy, noisy_min) = segmentation_overlap(0.1, 200);
    verdict(
        clean >= 0.95 && noisy >= 0.85,
        format!("overlap {clean:.4} noiseless (worst trace {clean_min:.4}), {noisy:.4} at sigma 0.1 (worst {noisy_min:.4})"),
    )
}

// ---- criterion 4 ----

fn profile_shape() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cfg = FeatureConfig::default();
    let mut wrong = Vec::new();
    for trial in 0..20 {
        let len = rng.gen_range(3000..9000);
        let mut series = || -> Vec<num_complex::Complex<f64>> {
            (0..len).map(|_| num_complex::Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
        };
        let a = features_from_samples(&series(), &cfg).unwrap();
        let b = features_from_samples(&series(), &cfg).unwrap();
        let p = build_profile(&a, &b).unwrap();
        let layout: Vec<usize> = (0..6).map(|k| p.feature(k).len()).collect();
        let same = build_profile(&a, &a).unwrap();
        if p.as_slice().len() != 488 || layout != [128, 128, 58, 58, 58, 58] || same.as_slice().iter().any(|&d| d != 0.0) {
            wrong.push(trial);
        }
    }
    verdict(
        wrong.is_empty() && PROFILE_LEN == 488 && CHUNK_LAYOUT == [128, 128, 58, 58, 58, 58],
        format!("20 random pairs, 488 entries in 128,128,58,58,58,58; failing trials {wrong:?}"),
    )
}

// ---- criteria 5 to 10 ----

fn separation() -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        trials: 500,
        ..ExperimentConfig::default()
    };
    let r = &run_experiment(&cfg).unwrap().records[0];
    let took = start.elapsed();
    verdict(
        r.tp_rate >= 0.90 && r.fp_rate <= 0.10 && took < Duration::from_secs(300),
        format!(
            "TP {:.3} FP {:.3} over {}+{} pairs (nu {}, gamma {:.4}, divergence {}), {took:.2?}",
            r.tp_rate, r.fp_rate, r.legit_trials, r.attacker_trials, r.nu, r.gamma, cfg.attacker_divergence
        ),
    )
}

fn nu_trend() -> Verdict {
    let base = ExperimentConfig::default();
    let cfg = ExperimentConfig {
        trials: 200,
        repetitions: 5,
        sweep: Some(Sweep {
            axis: SweepAxis::Nu,
            values: base.nu_grid.clone(),
        }),
        ..base
    };
    let records = run_experiment(&cfg).unwrap().records;
    let column = |nu: f64, f: fn(&MetricsRecord) -> f64| -> (f64, f64) {
        let v: Vec<f64> = records.iter().filter(|r| r.value == Some(nu)).map(f).collect();
        mean_se(&v)
    };
    let tp: Vec<(f64, f64)> = cfg.nu_grid.iter().map(|&nu| column(nu, |r| r.tp_rate)).collect();
    let det: Vec<(f64, f64)> = cfg.nu_grid.iter().map(|&nu| column(nu, |r| 1.0 - r.fp_rate)).collect();
    let mut breaks = Vec::new();
    for i in 1..tp.len() {
        if tp[i].0 > tp[i - 1].0 + tp[i].1.max(tp[i - 1].1) {
            breaks.push(format!("TP rises at nu {}", cfg.nu_grid[i]));
        }
        if det[i].0 < det[i - 1].0 - det[i].1.max(det[i - 1].1) {
            breaks.push(format!("detection falls at nu {}", cfg.nu_grid[i]));
        }
    }
    let first = (tp[0].0, det[0].0);
    let last = (tp[tp.len() - 1].0, det[det.len() - 1].0);
    verdict(
        breaks.is_empty(),
        format!(
            "TP {:.3} -> {:.3}, detection {:.3} -> {:.3} over nu {} -> {}; violations {:?}",
            first.0,
            last.0,
            first.1,
            last.1,
            cfg.nu_grid[0],
            cfg.nu_grid[cfg.nu_grid.len() - 1],
            breaks
        ),
    )
}

fn tag_random() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (tags, bound) in [(3usize, 1.0 / 6.0 + 0.05), (5, 1.0 / 120.0 + 0.05)] {
        let mut cfg = ExperimentConfig {
            trials: 300,
            attacker: AttackerKind::Advanced,
            estimation_error: 0.0,
            ..ExperimentConfig::default()
        };
        cfg.deployment.tag_count = tags;
        let r = &run_experiment(&cfg).unwrap().records[0];
        pass &= r.fp_rate <= bound;
        parts.push(format!("{tags} tags: acceptance {:.3} (bound {bound:.3})", r.fp_rate));
    }
    verdict(pass, parts.join("; "))
}

fn voting() -> Verdict {
    let cfg = ExperimentConfig {
        trials: 2000,
        ap_count: 5,
        ..ExperimentConfig::default()
    };
    let r = &run_experiment(&cfg).unwrap().records[0];
    let predicted = majority_probability(5, r.per_ap_tp_rate);
    verdict(
        (r.tp_rate - predicted).abs() <= 0.02,
        format!(
            "per-AP TP {:.4}, voted TP {:.4}, binomial prediction {predicted:.4} over {} trials",
            r.per_ap_tp_rate, r.tp_rate, r.legit_trials
        ),
    )
}

fn scenarios() -> Verdict {
    let cfg = ExperimentConfig::default();
    let (model, _) = fit_model(&cfg, 0, 0).unwrap();
    let pipeline = cfg.pipeline();
    let mut pass = true;
    let mut parts = Vec::new();
    for kind in [ScenarioKind::DeauthDeadlock, ScenarioKind::JamReplay, ScenarioKind::AuthDeadlock] {
        let script = ScenarioScript::builtin(kind);
        let attacked = run_scenario(&script, &model, &pipeline).unwrap().outcome;
        let clean = run_scenario(&script.without_attacker(), &model, &pipeline).unwrap().outcome;
        pass &= attacked == Outcome::AttackBlocked && clean == Outcome::Legitimate;
        parts.push(format!("{kind:?}: {attacked:?} / {clean:?}"));
    }
    verdict(pass, format!("with / without attacker: {}", parts.join(", ")))
}

fn determinism() -> Verdict {
    let cfg = ExperimentConfig {
        trials: 40,
        training_size: 120,
        validation_size: 60,
        repetitions: 2,
        baseline: true,
        sweep: Some(Sweep {
            axis: SweepAxis::AttackerDivergence,
            values: vec![0.4, 0.8],
        }),
        ..ExperimentConfig::default()
    };
    let csv = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| run_experiment(&cfg)).unwrap();
        let mut bytes = Vec::new();
        write_metrics(&mut bytes, &out.records).unwrap();
        bytes
    };
    let (a, b, c) = (csv(1), csv(1), csv(4));
    verdict(
        a == b && a == c,
        format!("{} bytes; rerun identical {}, 4-thread run identical {}", a.len(), a == b, a == c),
    )
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("DTW oracle equivalence", dtw_oracle),
        ("one-class SVM oracle equivalence", ocsvm_oracle),
        ("segmentation accuracy", segmentation),
        ("profile shape", profile_shape),
        ("end-to-end separation", separation),
        ("nu-sweep trend", nu_trend),
        ("tag-random defense", tag_random),
        ("voting combiner", voting),
        ("scenario outcomes", scenarios),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let v = run();
        println!("criterion {:>2} {}: {name}: {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
