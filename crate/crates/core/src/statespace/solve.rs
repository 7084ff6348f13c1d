use nalgebra::{DMatrix, DVector};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;

use super::{Generator, StateSpaceError};

/// Largest chain solved with a dense LU factorisation. Beyond it the
/// uniformised chain is power-iterated.
pub const DENSE_LIMIT: usize = 4096;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_SWEEPS: usize = 10_000_000;

fn check_irreducible(q: &Generator) -> Result<(), StateSpaceError> {
    let n = q.len();
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for (i, row) in q.rows.iter().enumerate() {
        for &(j, rate) in row {
            if rate > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    // kosaraju walks iteratively, so long chains do not exhaust the stack
    let sccs = kosaraju_scc(&g);
    if sccs.len() <= 1 {
        return Ok(());
    }
    let mut comp = vec![0; n];
    for (k, scc) in sccs.iter().enumerate() {
        for v in scc {
            comp[v.index()] = k;
        }
    }
    // closed classes have no edge leaving them
    let mut open = vec![false; sccs.len()];
    for (i, row) in q.rows.iter().enumerate() {
        if row.iter().any(|&(j, _)| comp[j] != comp[i]) {
            open[comp[i]] = true;
        }
    }
    let mut closed: Vec<String> = sccs
        .iter()
        .enumerate()
        .filter(|(k, _)| !open[*k])
        .map(|(_, scc)| {
            let mut ids: Vec<usize> = scc.iter().map(|v| v.index()).collect();
            ids.sort_unstable();
            let shown: Vec<String> = ids.iter().take(5).map(|i| format!("s{i}")).collect();
            let more = if ids.len() > 5 { format!(", … ({} states)", ids.len()) } else { String::new() };
            format!("{{{}{more}}}", shown.join(", "))
        })
        .collect();
    closed.sort();
    Err(StateSpaceError::Reducible { components: sccs.len(), closed: closed.join(" ") })
}

/// `‖π Q‖_∞`.
pub fn steady_state_residual(q: &Generator, pi: &[f64]) -> f64 {
    q.left_mul(pi).iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn dense(q: &Generator) -> Result<Vec<f64>, StateSpaceError> {
    let n = q.len();
    // Q^T π^T = 0 with the last balance equation swapped for Σπ = 1
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = q.diag[i];
        for &(j, rate) in &q.rows[i] {
            a[(j, i)] += rate;
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a.lu().solve(&b).ok_or(StateSpaceError::NonFinite)?;
    Ok(x.iter().copied().collect())
}

fn power(q: &Generator) -> Result<Vec<f64>, StateSpaceError> {
    let n = q.len();
    let lambda = 1.02 * q.diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let mut pi = vec![1.0 / n as f64; n];
    for sweep in 0..POWER_MAX_SWEEPS {
        let qpi = q.left_mul(&pi);
        // stop on the balance residual ‖πQ‖_∞
        if qpi.iter().fold(0.0f64, |m, v| m.max(v.abs())) < POWER_TOL {
            return Ok(pi);
        }
        pi.iter_mut().zip(&qpi).for_each(|(p, d)| *p += d / lambda);
        if sweep % 64 == 0 {
            let s: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= s);
        }
    }
    Err(StateSpaceError::NotConverged(POWER_MAX_SWEEPS))
}

/// Stationary distribution of an irreducible chain.
pub fn steady_state(q: &Generator) -> Result<Vec<f64>, StateSpaceError> {
    let n = q.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    check_irreducible(q)?;
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let mut pi = if n <= DENSE_LIMIT { dense(q)? } else { power(q)? };
    if pi.iter().any(|p| !p.is_finite()) {
        return Err(StateSpaceError::NonFinite);
    }
    // rounding can leave tiny negatives
    pi.iter_mut().for_each(|p| *p = p.max(0.0));
    let s: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|p| *p /= s);
    Ok(pi)
}

/// RK4 integration of `dπ/dt = π Q`. Returns `(t, π(t))` at `t = 0, dt, …`,
/// with a final shorter step landing on `t_end`.
pub fn transient(q: &Generator, pi0: &[f64], t_end: f64, dt: f64) -> Result<Vec<(f64, Vec<f64>)>, StateSpaceError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(StateSpaceError::NonPositiveStep(dt));
    }
    if pi0.len() != q.len() {
        return Err(StateSpaceError::DimensionMismatch { got: pi0.len(), expected: q.len() });
    }
    let mut out = vec![(0.0, pi0.to_vec())];
    let mut pi = pi0.to_vec();
    let steps = (t_end / dt).floor() as usize;
    let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let mut t = 0.0;
    let step = |pi: &mut Vec<f64>, h: f64| -> Result<(), StateSpaceError> {
        let k1 = q.left_mul(pi);
        let k2 = q.left_mul(&axpy(pi, &k1, h / 2.0));
        let k3 = q.left_mul(&axpy(pi, &k2, h / 2.0));
        let k4 = q.left_mul(&axpy(pi, &k3, h));
        for i in 0..pi.len() {
            pi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let s: f64 = pi.iter().sum();
        if !s.is_finite() {
            return Err(StateSpaceError::NonFinite);
        }
        pi.iter_mut().for_each(|p| *p /= s);
        Ok(())
    };
    for k in 1..=steps {
        step(&mut pi, dt)?;
        t = k as f64 * dt;
        out.push((t, pi.clone()));
    }
    let rest = t_end - t;
    if rest > dt * 1e-9 {
        step(&mut pi, rest)?;
        out.push((t_end, pi));
    }
    Ok(out)
}
