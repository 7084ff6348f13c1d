use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use pepakit::derivation::{matrix_csv, rate_spec_json, DeriveError, Derivation, MatrixKind};
use pepakit::fluid::{integrate, kurtz_harness, ode_csv, vector_field};
use pepakit::model::{parse_model, PepaModel, RateValue};
use pepakit::ptnet::{check_invariants, invariants_csv, p_invariants, to_ptnet};
use pepakit::simulate::{parse_reward, replications, results_json, trajectory_csv, SimConfig};
use pepakit::statespace::{
    bound_factors, build_generator, edges_csv, pi_csv, reachable, states_csv, steady_state, steady_state_residual,
    transient, transient_csv, TransitionSystem,
};

use crate::{Cmd, Common, Failure};

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    input: String,
    input_sha256: String,
    seed: Option<u64>,
    args: &'a Cmd,
}

struct Loaded {
    model: PepaModel,
    derivation: Derivation,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::write(dir.join(name), contents).map_err(|e| Failure::analysis("output", format!("{}: {e}", dir.join(name).display())))
}

fn parse_override(text: &str) -> Result<(String, RateValue), Failure> {
    let bad = || Failure::usage("cli", format!("--rate expects NAME=VALUE, got {text:?}"));
    let (name, value) = text.split_once('=').ok_or_else(bad)?;
    let value = match value.trim() {
        "infty" => RateValue::Passive,
        v => RateValue::Finite(v.parse().map_err(|_| bad())?),
    };
    Ok((name.trim().to_string(), value))
}

fn derive_failure(e: DeriveError) -> Failure {
    match e {
        DeriveError::Model(m) => Failure::model("model", m),
        other => Failure::model("derivation", other),
    }
}

/// Reads, validates and derives the model, then writes the manifest.
fn load(cmd: &Cmd, c: &Common, seed: Option<u64>) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&c.model)
        .map_err(|e| Failure::usage("cli", format!("cannot read {}: {e}", c.model.display())))?;
    let mut model = parse_model(&text).map_err(|e| Failure::model("model", e))?;
    if !c.rates.is_empty() {
        let overrides = c.rates.iter().map(|r| parse_override(r)).collect::<Result<Vec<_>, _>>()?;
        model = model.with_rates(&overrides).map_err(|e| Failure::model("model", e))?;
    }
    if let Some(n) = c.scale {
        if n == 0 {
            return Err(Failure::usage("cli", "--scale must be at least 1"));
        }
        model = model.scaled(n);
    }
    let derivation = Derivation::new(&model).map_err(derive_failure)?;

    fs::create_dir_all(&c.out).map_err(|e| Failure::analysis("output", format!("{}: {e}", c.out.display())))?;
    let manifest = Manifest {
        tool: "pepakit",
        version: env!("CARGO_PKG_VERSION"),
        input: c.model.display().to_string(),
        input_sha256: format!("{:x}", Sha256::digest(text.as_bytes())),
        seed,
        args: cmd,
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("serialisable");
    json.push('\n');
    write(&c.out, "manifest.json", &json)?;
    Ok(Loaded { model, derivation })
}

fn states_of(l: &Loaded, c: &Common) -> Result<TransitionSystem, Failure> {
    reachable(&l.derivation, c.cap).map_err(|e| Failure::analysis("statespace", e))
}

pub fn dispatch(cmd: &Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Parse(c) => {
            let l = load(cmd, c, None)?;
            let m = &l.derivation.matrices;
            let mut csv = String::from("index,component,derivative\n");
            for d in &m.derivatives {
                writeln!(csv, "{},{},{}", d.index, d.component_type, d.name).unwrap();
            }
            write(&c.out, "derivatives.csv", &csv)?;
            write(&c.out, "model.pepa", &l.model.to_string())?;
            println!("{} component types, {} local derivatives", m.types.len(), m.derivatives.len());
        }
        Cmd::Matrix(c) => {
            let l = load(cmd, c, None)?;
            let m = &l.derivation.matrices;
            write(&c.out, "C.csv", &matrix_csv(m, MatrixKind::C))?;
            write(&c.out, "C_pre.csv", &matrix_csv(m, MatrixKind::Pre))?;
            write(&c.out, "C_post.csv", &matrix_csv(m, MatrixKind::Post))?;
            write(&c.out, "rates.json", &rate_spec_json(m, &l.derivation.rates))?;
            println!("{} x {} activity matrix", m.rows(), m.cols());
        }
        Cmd::States(c) => {
            let l = load(cmd, c, None)?;
            let ts = states_of(&l, c)?;
            let m = &l.derivation.matrices;
            write(&c.out, "states.csv", &states_csv(&ts, m))?;
            write(&c.out, "edges.csv", &edges_csv(&ts, m))?;
            let factors = bound_factors(&l.model).map_err(|e| Failure::model("model", e))?;
            let bound: pepakit::BigUint = factors.iter().map(|f| f.value.clone()).product();
            let mut report = format!("states {}\nbound {bound}\n", ts.len());
            for f in &factors {
                writeln!(
                    report,
                    "factor {} C({},{}) = {}",
                    f.component,
                    f.population + f.derivatives - 1,
                    f.derivatives - 1,
                    f.value
                )
                .unwrap();
            }
            writeln!(report, "deadlocks {}", ts.deadlocks().len()).unwrap();
            write(&c.out, "bound.txt", &report)?;
            print!("{report}");
        }
        Cmd::Steady(c) => {
            let l = load(cmd, c, None)?;
            let ts = states_of(&l, c)?;
            let q = build_generator(&ts);
            let pi = steady_state(&q).map_err(|e| Failure::analysis("statespace", e))?;
            write(&c.out, "states.csv", &states_csv(&ts, &l.derivation.matrices))?;
            write(&c.out, "pi.csv", &pi_csv(&pi))?;
            println!("{} states, residual {:e}", ts.len(), steady_state_residual(&q, &pi));
        }
        Cmd::Transient(a) => {
            let c = &a.common;
            let l = load(cmd, c, None)?;
            let ts = states_of(&l, c)?;
            let q = build_generator(&ts);
            let mut pi0 = vec![0.0; ts.len()];
            pi0[ts.initial] = 1.0;
            let dt = a.dt.unwrap_or(a.t_max * 1e-3);
            let traj = transient(&q, &pi0, a.t_max, dt).map_err(|e| Failure::analysis("statespace", e))?;
            write(&c.out, "states.csv", &states_csv(&ts, &l.derivation.matrices))?;
            write(&c.out, "transient.csv", &transient_csv(&traj))?;
            println!("{} states, {} time points", ts.len(), traj.len());
        }
        Cmd::Simulate(a) => {
            let c = &a.common;
            let l = load(cmd, c, Some(a.seed))?;
            let d = &l.derivation;
            let rewards = a
                .rewards
                .iter()
                .map(|r| parse_reward(r, &d.matrices))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Failure::usage("simulate", e))?;
            let cfg = SimConfig {
                seed: a.seed,
                t_max: a.t_max,
                warmup_fraction: a.warmup,
                checkpoint_rel_tol: a.rel_tol,
                sample_dt: None,
            };
            let mut reps =
                replications(d, &rewards, &cfg, a.replications).map_err(|e| Failure::analysis("simulate", e))?;
            if let Some(dt) = a.sample_dt {
                // the first replication again, this time recording its path
                let first = pepakit::simulate::run(d, &rewards, &SimConfig { sample_dt: Some(dt), ..cfg.clone() })
                    .map_err(|e| Failure::analysis("simulate", e))?;
                write(&c.out, "trajectory.csv", &trajectory_csv(d, first.trajectory.as_deref().unwrap_or(&[])))?;
                reps.runs[0].trajectory = None;
            }
            write(&c.out, "results.json", &results_json(&rewards, &reps))?;
            for (r, m) in rewards.iter().zip(&reps.mean) {
                println!("{} = {m}", r.name);
            }
        }
        Cmd::Ode(a) => {
            let c = &a.common;
            let l = load(cmd, c, None)?;
            let d = &l.derivation;
            let x0: Vec<f64> = d.initial_counts().iter().map(|&v| v as f64).collect();
            let dt = a.dt.unwrap_or(a.t_max * 1e-3);
            let traj = integrate(&vector_field(d), &x0, a.t_max, dt).map_err(|e| Failure::analysis("fluid", e))?;
            write(&c.out, "ode.csv", &ode_csv(d, &traj))?;
            println!("{} time points, {} clipped undershoots", traj.times.len(), traj.clipped);
        }
        Cmd::Kurtz(a) => {
            let c = &a.common;
            let l = load(cmd, c, Some(a.seed))?;
            let report = kurtz_harness(&l.derivation, &a.n_list, a.t_max, a.replications, a.seed)
                .map_err(|e| Failure::analysis("fluid", e))?;
            write(&c.out, "kurtz.json", &report.to_json())?;
            for row in &report.rows {
                println!("n = {}: mean sup error {}", row.n, row.mean_sup_error);
            }
        }
        Cmd::Ptnet(c) => {
            let l = load(cmd, c, None)?;
            let net = to_ptnet(&l.derivation);
            let invs = p_invariants(&net).map_err(|e| Failure::analysis("ptnet", e))?;
            write(&c.out, "net.json", &net.to_json())?;
            write(&c.out, "invariants.csv", &invariants_csv(&net, &invs))?;
            let ts = states_of(&l, c)?;
            let report = check_invariants(&ts, &invs);
            let mut text = format!(
                "states {}\ninvariants {}\nviolations {}\n",
                report.states_checked,
                invs.len(),
                report.violations.len()
            );
            for (k, i, v) in &report.violations {
                writeln!(text, "invariant {k} state {i} value {v}").unwrap();
            }
            write(&c.out, "invariant_check.txt", &text)?;
            print!("{text}");
            if !report.holds() {
                return Err(Failure::analysis("ptnet", "invariant violated on a reachable state"));
            }
        }
    }
    Ok(())
}
