//! Fluid approximation `dx/dt = Σ_l C[:, l] f(x, l)` and the density
//! scaling harness comparing it with scaled SSA paths.

use std::fmt::Write;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::derivation::Derivation;
use crate::simulate::{in_pool, mean_std, rng_for, sample_path};

/// Points of the shared time grid used by [`kurtz_harness`].
pub const KURTZ_GRID_POINTS: usize = 1000;
/// RK4 sub-steps per grid interval in [`kurtz_harness`].
const KURTZ_SUBSTEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FluidError {
    #[error("step size must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("end time must be nonnegative, got {0}")]
    NegativeHorizon(f64),
    #[error("initial state has a negative or non-finite entry")]
    BadInitialState,
    #[error("non-finite value at t = {t} in component {component}")]
    NonFinite { t: f64, component: String },
    #[error("population list must be increasing and positive")]
    BadScaling,
    #[error("replication count must be at least 1")]
    NoReplications,
}

/// Right-hand side of the fluid ODEs.
#[derive(Debug, Clone, Copy)]
pub struct VectorField<'a> {
    d: &'a Derivation,
}

pub fn vector_field(d: &Derivation) -> VectorField<'_> {
    VectorField { d }
}

impl VectorField<'_> {
    pub fn dimension(&self) -> usize {
        self.d.dimension()
    }

    /// Writes `dx/dt` at `x` into `out`.
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (l, a) in self.d.matrices.activities.iter().enumerate() {
            let f = self.d.rate(x, l);
            if f == 0.0 {
                continue;
            }
            for &(u, v) in &a.label {
                out[u] -= f;
                out[v] += f;
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out);
        out
    }

    fn rk4(&self, x: &mut [f64], h: f64, s: &mut Scratch) {
        let n = x.len();
        self.eval_into(x, &mut s.k1);
        for i in 0..n {
            s.tmp[i] = x[i] + h / 2.0 * s.k1[i];
        }
        self.eval_into(&s.tmp, &mut s.k2);
        for i in 0..n {
            s.tmp[i] = x[i] + h / 2.0 * s.k2[i];
        }
        self.eval_into(&s.tmp, &mut s.k3);
        for i in 0..n {
            s.tmp[i] = x[i] + h * s.k3[i];
        }
        self.eval_into(&s.tmp, &mut s.k4);
        for i in 0..n {
            x[i] += h / 6.0 * (s.k1[i] + 2.0 * s.k2[i] + 2.0 * s.k3[i] + s.k4[i]);
        }
    }
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch { k1: vec![0.0; n], k2: vec![0.0; n], k3: vec![0.0; n], k4: vec![0.0; n], tmp: vec![0.0; n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub dt: f64,
    /// How many times a negative undershoot was clipped to zero.
    pub clipped: usize,
}

impl OdeTrajectory {
    pub fn last(&self) -> &[f64] {
        self.values.last().expect("at least the initial point")
    }
}

/// Clips negatives and rejects non-finite entries after a step.
fn settle(vf: &VectorField, x: &mut [f64], t: f64, clipped: &mut usize) -> Result<(), FluidError> {
    for (i, v) in x.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(FluidError::NonFinite { t, component: vf.d.matrices.derivatives[i].name.clone() });
        }
        if *v < 0.0 {
            *v = 0.0;
            *clipped += 1;
        }
    }
    Ok(())
}

/// Fixed-step RK4 from `x0` over `[0, t_end]`, recording every step. A
/// final shorter step lands exactly on `t_end`.
pub fn integrate(vf: &VectorField, x0: &[f64], t_end: f64, dt: f64) -> Result<OdeTrajectory, FluidError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(FluidError::NonPositiveStep(dt));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(FluidError::NegativeHorizon(t_end));
    }
    if x0.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(FluidError::BadInitialState);
    }
    let mut s = Scratch::new(x0.len());
    let mut x = x0.to_vec();
    let mut times = vec![0.0];
    let mut values = vec![x.clone()];
    let mut clipped = 0;
    let steps = (t_end / dt).floor() as usize;
    let mut t = 0.0;
    for k in 1..=steps {
        vf.rk4(&mut x, dt, &mut s);
        t = k as f64 * dt;
        settle(vf, &mut x, t, &mut clipped)?;
        times.push(t);
        values.push(x.clone());
    }
    let rest = t_end - t;
    if rest > dt * 1e-9 {
        vf.rk4(&mut x, rest, &mut s);
        settle(vf, &mut x, t_end, &mut clipped)?;
        times.push(t_end);
        values.push(x);
    }
    Ok(OdeTrajectory { times, values, dt, clipped })
}

/// `t` then one column per derivative.
pub fn ode_csv(d: &Derivation, traj: &OdeTrajectory) -> String {
    let mut out = String::from("t");
    for der in &d.matrices.derivatives {
        out.push(',');
        out.push_str(&crate::csv_field(&der.name));
    }
    out.push('\n');
    for (t, x) in traj.times.iter().zip(&traj.values) {
        write!(out, "{t}").unwrap();
        for v in x {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KurtzRow {
    pub n: u64,
    pub mean_sup_error: f64,
    pub stddev: Option<f64>,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KurtzReport {
    pub t_end: f64,
    pub grid_points: usize,
    pub seed: u64,
    pub rows: Vec<KurtzRow>,
}

impl KurtzReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable");
        s.push('\n');
        s
    }

    /// Whether the mean error strictly decreases along the population list.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mean_sup_error < w[0].mean_sup_error)
    }
}

/// For each `n`, the mean over SSA replications of
/// `sup_{u ≤ t_end} ‖X_n(u)/n − x(u)‖_∞` on a uniform grid, where `X_n`
/// starts from `n` times the model's initial state and `x` solves the fluid
/// ODEs from that initial state. Replication `i` uses seed `seed + i`.
pub fn kurtz_harness(
    d: &Derivation,
    n_list: &[u64],
    t_end: f64,
    replications: usize,
    seed: u64,
) -> Result<KurtzReport, FluidError> {
    if replications == 0 {
        return Err(FluidError::NoReplications);
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(FluidError::NegativeHorizon(t_end));
    }
    if n_list.is_empty() || n_list[0] == 0 || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(FluidError::BadScaling);
    }
    let vf = vector_field(d);
    let x0: Vec<f64> = d.initial_counts().iter().map(|&v| v as f64).collect();
    let points = KURTZ_GRID_POINTS;
    let spacing = t_end / (points - 1) as f64;
    let grid: Vec<f64> = (0..points).map(|k| k as f64 * spacing).collect();

    let mut fluid = Vec::with_capacity(points);
    let mut s = Scratch::new(x0.len());
    let mut x = x0.clone();
    let mut clipped = 0;
    fluid.push(x.clone());
    for &t in &grid[1..] {
        for _ in 0..KURTZ_SUBSTEPS {
            vf.rk4(&mut x, spacing / KURTZ_SUBSTEPS as f64, &mut s);
        }
        settle(&vf, &mut x, t, &mut clipped)?;
        fluid.push(x.clone());
    }

    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let start: Vec<i64> = d.initial_counts().iter().map(|&v| v * n as i64).collect();
        let nf = n as f64;
        let errors: Vec<f64> = in_pool(|| {
            (0..replications)
                .into_par_iter()
                .map(|i| {
                    let mut rng = rng_for(seed.wrapping_add(i as u64));
                    let path = sample_path(d, start.clone(), &grid, &mut rng);
                    path.iter()
                        .zip(&fluid)
                        .flat_map(|(xs, xf)| xs.iter().zip(xf).map(move |(&a, &b)| (a as f64 / nf - b).abs()))
                        .fold(0.0, f64::max)
                })
                .collect()
        });
        let (mean, sd) = mean_std(&errors);
        rows.push(KurtzRow { n, mean_sup_error: mean, stddev: sd, replications });
    }
    Ok(KurtzReport { t_end, grid_points: points, seed, rows })
}
