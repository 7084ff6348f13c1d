//! Gillespie simulation of the aggregated CTMC driven by the activity matrix
//! and the rate functions, with long-run reward averages.
//!
//! Random numbers come from Xoshiro256++ seeded through `seed_from_u64`
//! (SplitMix64 expansion). Replication `i` uses seed `seed + i` (wrapping).
//! Each step draws exactly two uniforms: `r1 = 1 - u` on `(0, 1]` for the
//! holding time and `r2 = u` on `[0, 1)` for the activity choice.

mod reward;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::derivation::Derivation;

pub use reward::{parse_reward, Reward, RewardError, RewardSpec};

pub type SimRng = Xoshiro256PlusPlus;

pub fn rng_for(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("t_max must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("warm-up fraction must lie in [0, 1), got {0}")]
    BadWarmup(f64),
    #[error("deadlock at t = {time} in state {state:?} before the warm-up ended")]
    EarlyDeadlock { time: f64, state: Vec<i64> },
    #[error("replication count must be at least 1")]
    NoReplications,
    #[error("sampling interval must be positive, got {0}")]
    BadSampling(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub t_max: f64,
    pub warmup_fraction: f64,
    /// Stop once every running average changes by at most this relative
    /// amount between two checkpoints `t_max / 20` apart.
    pub checkpoint_rel_tol: Option<f64>,
    /// Record the state every `sample_dt` time units.
    pub sample_dt: Option<f64>,
}

impl SimConfig {
    pub fn new(seed: u64, t_max: f64) -> Self {
        SimConfig { seed, t_max, warmup_fraction: 0.1, checkpoint_rel_tol: None, sample_dt: None }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(SimError::NonPositiveHorizon(self.t_max));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(SimError::BadWarmup(self.warmup_fraction));
        }
        if let Some(dt) = self.sample_dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(SimError::BadSampling(dt));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub seed: u64,
    /// Long-run average of each reward over the post-warm-up interval.
    pub averages: Vec<f64>,
    /// Length of the post-warm-up interval the averages cover.
    pub t_total: f64,
    /// Time at which the run ended.
    pub t_end: f64,
    pub steps: u64,
    pub final_state: Vec<i64>,
    pub deadlock: bool,
    pub stopped_early: bool,
    pub trajectory: Option<Vec<(f64, Vec<i64>)>>,
}

/// Holding time and chosen column from the two uniforms, given the column
/// rates and their total `f(x) > 0`.
pub fn select(rates: &[f64], total: f64, r1: f64, r2: f64) -> (f64, usize) {
    let tau = -r1.ln() / total;
    let target = r2 * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &f) in rates.iter().enumerate() {
        if f <= 0.0 {
            continue;
        }
        acc += f;
        last = j;
        if target < acc {
            return (tau, j);
        }
    }
    // rounding pushed r2·f(x) past the final partial sum
    (tau, last)
}

/// One Gillespie step at `x`. Fills `rates` with `f(x, l_j)` and returns
/// `None` on deadlock, in which case no random numbers are drawn.
pub fn ssa_step<R: Rng>(d: &Derivation, x: &[f64], rates: &mut [f64], rng: &mut R) -> Option<(f64, usize)> {
    let total = d.rates.rates_into(x, rates);
    if !(total > 0.0) {
        return None;
    }
    let r1 = 1.0 - rng.random::<f64>();
    let r2 = rng.random::<f64>();
    Some(select(rates, total, r1, r2))
}

fn to_f64(x: &[i64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v as f64;
    }
}

/// A single simulation run from the model's initial state.
pub fn run(d: &Derivation, rewards: &[Reward], cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed);
    let mut x = d.initial_counts();
    let mut xf = vec![0.0; x.len()];
    let mut rates = vec![0.0; d.activity_count()];
    let t_max = cfg.t_max;
    let warm = cfg.warmup_fraction * t_max;
    let mut acc = vec![0.0; rewards.len()];
    let mut t = 0.0;
    let mut steps = 0u64;
    let mut deadlock = false;
    let mut stopped_early = false;

    let mut trajectory = cfg.sample_dt.map(|_| Vec::new());
    let mut next_sample = 0usize;

    let window = t_max / 20.0;
    let mut next_checkpoint = (warm / window).floor() + 1.0;
    let mut previous: Option<Vec<f64>> = None;

    while t < t_max {
        to_f64(&x, &mut xf);
        let Some((tau, mu)) = ssa_step(d, &xf, &mut rates, &mut rng) else {
            deadlock = true;
            break;
        };
        let t_next = t + tau;
        let span = t_next.min(t_max) - t.max(warm);
        if span > 0.0 {
            for (a, r) in acc.iter_mut().zip(rewards) {
                *a += r.spec.rate(&xf, &rates) * span;
            }
        }
        if let (Some(traj), Some(dt)) = (trajectory.as_mut(), cfg.sample_dt) {
            loop {
                let ts = next_sample as f64 * dt;
                if ts >= t_next || ts > t_max {
                    break;
                }
                traj.push((ts, x.clone()));
                next_sample += 1;
            }
        }
        if t_next >= t_max {
            t = t_max;
            break;
        }
        d.fire(&mut x, mu);
        t = t_next;
        steps += 1;

        if let Some(tol) = cfg.checkpoint_rel_tol {
            if t >= next_checkpoint * window {
                next_checkpoint = (t / window).floor() + 1.0;
                let current: Vec<f64> = acc.iter().map(|a| a / (t - warm)).collect();
                if let Some(prev) = &previous {
                    let settled = current.iter().zip(prev).all(|(c, p)| (c - p).abs() <= tol * p.abs());
                    if settled {
                        stopped_early = true;
                        break;
                    }
                }
                previous = Some(current);
            }
        }
    }

    if deadlock && t <= warm {
        return Err(SimError::EarlyDeadlock { time: t, state: x });
    }
    let t_total = t - warm;
    Ok(SimResult {
        seed: cfg.seed,
        averages: acc.iter().map(|a| a / t_total).collect(),
        t_total,
        t_end: t,
        steps,
        final_state: x,
        deadlock,
        stopped_early,
        trajectory,
    })
}

/// State of an SSA path from `x0` at each of the (increasing) `grid` times.
/// A deadlocked path keeps its last state.
pub fn sample_path<R: Rng>(d: &Derivation, x0: Vec<i64>, grid: &[f64], rng: &mut R) -> Vec<Vec<i64>> {
    let mut x = x0;
    let mut xf = vec![0.0; x.len()];
    let mut rates = vec![0.0; d.activity_count()];
    let mut out = Vec::with_capacity(grid.len());
    let mut t = 0.0;
    let mut k = 0;
    let horizon = grid.last().copied().unwrap_or(0.0);
    while k < grid.len() {
        to_f64(&x, &mut xf);
        let t_next = match ssa_step(d, &xf, &mut rates, rng) {
            Some((tau, mu)) => {
                let t_next = t + tau;
                while k < grid.len() && grid[k] < t_next {
                    out.push(x.clone());
                    k += 1;
                }
                if t_next > horizon {
                    break;
                }
                d.fire(&mut x, mu);
                t_next
            }
            None => break,
        };
        t = t_next;
    }
    while out.len() < grid.len() {
        out.push(x.clone());
    }
    out
}

/// Runs `f` inside a pool capped by `PEPAKIT_THREADS` when it is set.
pub fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var("PEPAKIT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&n| n > 0);
    match cap.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(f),
        None => f(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replications {
    pub runs: Vec<SimResult>,
    pub mean: Vec<f64>,
    /// Sample standard deviation per reward; `None` for a single run.
    pub stddev: Vec<Option<f64>>,
}

/// `n` independent runs with seeds `seed, seed + 1, …`, in index order.
pub fn replications(d: &Derivation, rewards: &[Reward], base: &SimConfig, n: usize) -> Result<Replications, SimError> {
    if n == 0 {
        return Err(SimError::NoReplications);
    }
    base.validate()?;
    let runs: Vec<SimResult> = in_pool(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let cfg = SimConfig { seed: base.seed.wrapping_add(i as u64), ..base.clone() };
                run(d, rewards, &cfg)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(summarise(runs))
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, sd)
}

fn summarise(runs: Vec<SimResult>) -> Replications {
    let k = runs.first().map_or(0, |r| r.averages.len());
    let (mean, stddev) = (0..k)
        .map(|j| mean_std(&runs.iter().map(|r| r.averages[j]).collect::<Vec<_>>()))
        .unzip();
    Replications { runs, mean, stddev }
}

#[derive(Serialize)]
struct RewardJson<'a> {
    name: &'a str,
    mean: f64,
    stddev: Option<f64>,
    n: usize,
    t_total: f64,
    seed: u64,
}

#[derive(Serialize)]
struct RunJson<'a> {
    seed: u64,
    averages: &'a [f64],
    t_total: f64,
    steps: u64,
    deadlock: bool,
    stopped_early: bool,
    final_state: &'a [i64],
}

#[derive(Serialize)]
struct ResultsJson<'a> {
    rewards: Vec<RewardJson<'a>>,
    runs: Vec<RunJson<'a>>,
}

/// Results JSON: per reward `{name, mean, stddev, n, t_total, seed}` plus a
/// per-run breakdown. `t_total` sums the averaging windows of all runs.
pub fn results_json(rewards: &[Reward], reps: &Replications) -> String {
    let t_total: f64 = reps.runs.iter().map(|r| r.t_total).sum();
    let seed = reps.runs.first().map_or(0, |r| r.seed);
    let doc = ResultsJson {
        rewards: rewards
            .iter()
            .enumerate()
            .map(|(j, r)| RewardJson {
                name: &r.name,
                mean: reps.mean[j],
                stddev: reps.stddev[j],
                n: reps.runs.len(),
                t_total,
                seed,
            })
            .collect(),
        runs: reps
            .runs
            .iter()
            .map(|r| RunJson {
                seed: r.seed,
                averages: &r.averages,
                t_total: r.t_total,
                steps: r.steps,
                deadlock: r.deadlock,
                stopped_early: r.stopped_early,
                final_state: &r.final_state,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("serialisable");
    s.push('\n');
    s
}

/// `t` then one count column per derivative.
pub fn trajectory_csv(d: &Derivation, traj: &[(f64, Vec<i64>)]) -> String {
    use std::fmt::Write;
    let mut out = String::from("t");
    for der in &d.matrices.derivatives {
        out.push(',');
        out.push_str(&crate::csv_field(&der.name));
    }
    out.push('\n');
    for (t, x) in traj {
        write!(out, "{t}").unwrap();
        for v in x {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn model1(m: u64) -> Derivation {
        Derivation::new(
            &parse_model(&format!(
                "a=1; b=1; d=1;
                 User1 = (task1, a).User2; User2 = (task2, b).User1;
                 Sever1 = (task1, a).Sever2; Sever2 = (reset, d).Sever1;
                 system User1[{m}] <task1> Sever1[{m}];"
            ))
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn select_inverts_exponential() {
        let (tau, j) = select(&[0.0, 2.0, 0.0], 2.0, (-1.0f64).exp(), 0.999);
        assert!((tau - 0.5).abs() < 1e-15);
        assert_eq!(j, 1);
    }

    #[test]
    fn select_partitions_by_rate() {
        let rates = [1.0, 0.0, 3.0];
        assert_eq!(select(&rates, 4.0, 0.5, 0.0).1, 0);
        assert_eq!(select(&rates, 4.0, 0.5, 0.2499).1, 0);
        assert_eq!(select(&rates, 4.0, 0.5, 0.25).1, 2);
        assert_eq!(select(&rates, 4.0, 0.5, 1.0).1, 2);
    }

    #[test]
    fn first_step_of_model1_is_task1() {
        let d = model1(2);
        let mut rates = vec![0.0; 3];
        let mut rng = rng_for(3);
        let (_, j) = ssa_step(&d, &[2.0, 0.0, 2.0, 0.0], &mut rates, &mut rng).unwrap();
        assert_eq!(rates.iter().sum::<f64>(), 2.0);
        assert!(d.matrices.activities[j].display_name.starts_with("task1"));
    }

    #[test]
    fn two_draws_per_step() {
        let d = model1(1);
        let mut rates = vec![0.0; 3];
        let mut a = rng_for(11);
        let mut b = rng_for(11);
        ssa_step(&d, &[1.0, 0.0, 1.0, 0.0], &mut rates, &mut a).unwrap();
        b.random::<f64>();
        b.random::<f64>();
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn same_seed_same_result() {
        let d = model1(2);
        let r = vec![parse_reward("state:User1=1", &d.matrices).unwrap()];
        let mut cfg = SimConfig::new(42, 200.0);
        cfg.sample_dt = Some(1.0);
        assert_eq!(run(&d, &r, &cfg).unwrap(), run(&d, &r, &cfg).unwrap());
    }

    #[test]
    fn zero_reward_is_zero() {
        let d = model1(2);
        let r = vec![parse_reward("state:User1=0", &d.matrices).unwrap()];
        for seed in 0..3 {
            assert_eq!(run(&d, &r, &SimConfig::new(seed, 50.0)).unwrap().averages, vec![0.0]);
        }
    }

    #[test]
    fn trajectory_is_sampled_on_grid() {
        let d = model1(2);
        let mut cfg = SimConfig::new(5, 10.0);
        cfg.sample_dt = Some(0.5);
        let res = run(&d, &[], &cfg).unwrap();
        let traj = res.trajectory.unwrap();
        assert_eq!(traj.len(), 21);
        assert!(traj.windows(2).all(|w| w[0].0 < w[1].0));
        assert_eq!(traj[0].1, vec![2, 0, 2, 0]);
    }

    #[test]
    fn deadlock_before_warmup_is_reported() {
        let d = Derivation::new(
            &parse_model("P1 = (a, 1).P2; P2 = (b, 1).P1; Q1 = (b, 1).Q2; Q2 = (a, 1).Q1; system P1 <a, b> Q1;").unwrap(),
        )
        .unwrap();
        assert!(matches!(run(&d, &[], &SimConfig::new(0, 10.0)), Err(SimError::EarlyDeadlock { .. })));
    }

    #[test]
    fn deadlock_after_warmup_halts() {
        let d = Derivation::new(&parse_model(
            "P0 = (go, 1).P1; P1 = (a, 1).P2; P2 = (b, 1).P1; Q1 = (b, 1).Q2; Q2 = (a, 1).Q1; system P0 <a, b> Q1;",
        )
        .unwrap())
        .unwrap();
        let mut cfg = SimConfig::new(1, 1000.0);
        cfg.warmup_fraction = 0.0;
        let res = run(&d, &[], &cfg).unwrap();
        assert!(res.deadlock);
        assert!(res.t_end < 1000.0);
        assert_eq!(res.t_total, res.t_end);
    }

    #[test]
    fn single_replication_matches_run() {
        let d = model1(1);
        let r = vec![parse_reward("state:User1=1", &d.matrices).unwrap()];
        let cfg = SimConfig::new(9, 100.0);
        let reps = replications(&d, &r, &cfg, 1).unwrap();
        assert_eq!(reps.runs[0], run(&d, &r, &cfg).unwrap());
        assert_eq!(reps.stddev, vec![None]);
    }

    #[test]
    fn early_stop_triggers_with_loose_tolerance() {
        let d = model1(1);
        let r = vec![parse_reward("state:User1=1", &d.matrices).unwrap()];
        let mut cfg = SimConfig::new(2, 10_000.0);
        cfg.checkpoint_rel_tol = Some(0.5);
        let res = run(&d, &r, &cfg).unwrap();
        assert!(res.stopped_early);
        assert!(res.t_end < 10_000.0);
    }

    #[test]
    fn sample_path_holds_after_horizon() {
        let d = model1(1);
        let grid: Vec<f64> = (0..11).map(|k| k as f64).collect();
        let p = sample_path(&d, d.initial_counts(), &grid, &mut rng_for(4));
        assert_eq!(p.len(), 11);
        assert_eq!(p[0], vec![1, 0, 1, 0]);
    }
}
