use std::collections::VecDeque;

use super::solver::EnvelopeCholesky;
use super::SynthError;
use crate::model::Network;

/// Lossless DC power flow. `injections[b]` is generation minus load at bus
/// `b` (MW) and must sum to zero. Returns one signed flow per line, positive
/// from `from` to `to`.
pub fn dc_flow(net: &Network, injections: &[f64]) -> Result<Vec<f64>, SynthError> {
    let n = net.buses().len();
    if injections.len() != n {
        return Err(SynthError::Length {
            what: "injections",
            got: injections.len(),
            expected: n,
        });
    }
    let sum: f64 = injections.iter().sum();
    let scale: f64 = injections.iter().map(|p| p.abs()).sum();
    if sum.abs() > 1e-9 * scale.max(1.0) {
        return Err(SynthError::Unbalanced { sum });
    }
    let susceptance = net
        .lines()
        .iter()
        .map(|l| match l.x_pu {
            None => Err(SynthError::MissingReactance(l.id.clone())),
            Some(x) if !(x.is_finite() && x > 0.0) => Err(SynthError::InvalidReactance { line: l.id.clone(), x }),
            Some(x) => Ok(1.0 / x),
        })
        .collect::<Result<Vec<f64>, _>>()?;
    if n <= 1 {
        return Ok(vec![0.0; net.lines().len()]);
    }
    if let Some(b) = unreached_bus(net) {
        return Err(SynthError::Disconnected {
            bus: net.buses()[b].id.clone(),
        });
    }

    // reference bus 0 is dropped; bus b ≥ 1 maps to row b − 1
    let mut diag = vec![0.0; n - 1];
    let mut off = Vec::with_capacity(net.lines().len());
    for (l, &w) in susceptance.iter().enumerate() {
        let (a, b) = net.line_ends(l);
        for v in [a, b] {
            if v > 0 {
                diag[v - 1] += w;
            }
        }
        if a > 0 && b > 0 {
            off.push((a - 1, b - 1, -w));
        }
    }
    let chol = EnvelopeCholesky::factor(&diag, &off).map_err(|row| SynthError::Singular {
        bus: net.buses()[row + 1].id.clone(),
    })?;

    let rhs = &injections[1..];
    let mut theta = chol.solve(rhs);
    for _ in 0..2 {
        let r: Vec<f64> = laplacian_apply(net, &susceptance, &theta)
            .iter()
            .zip(rhs)
            .map(|(ax, b)| b - ax)
            .collect();
        for (t, d) in theta.iter_mut().zip(chol.solve(&r)) {
            *t += d;
        }
    }

    let angle = |b: usize| if b == 0 { 0.0 } else { theta[b - 1] };
    Ok(susceptance
        .iter()
        .enumerate()
        .map(|(l, w)| {
            let (a, b) = net.line_ends(l);
            (angle(a) - angle(b)) * w
        })
        .collect())
}

/// Reduced Laplacian times `theta` (reference angle fixed at zero).
fn laplacian_apply(net: &Network, susceptance: &[f64], theta: &[f64]) -> Vec<f64> {
    let angle = |b: usize| if b == 0 { 0.0 } else { theta[b - 1] };
    let mut y = vec![0.0; theta.len()];
    for (l, &w) in susceptance.iter().enumerate() {
        let (a, b) = net.line_ends(l);
        let f = w * (angle(a) - angle(b));
        if a > 0 {
            y[a - 1] += f;
        }
        if b > 0 {
            y[b - 1] -= f;
        }
    }
    y
}

/// Bus adjacency as (neighbour, line) lists.
fn incidence(net: &Network) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); net.buses().len()];
    for l in 0..net.lines().len() {
        let (a, b) = net.line_ends(l);
        adj[a].push((b, l));
        adj[b].push((a, l));
    }
    adj
}

/// BFS tree from bus 0: `(order, parent line)` for reached buses.
fn bfs_tree(adj: &[Vec<(usize, usize)>]) -> (Vec<usize>, Vec<Option<usize>>, Vec<bool>) {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut parent = vec![None; n];
    let mut order = Vec::with_capacity(n);
    if n == 0 {
        return (order, parent, seen);
    }
    seen[0] = true;
    let mut queue = VecDeque::from([0]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        for &(w, l) in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                parent[w] = Some(l);
                queue.push_back(w);
            }
        }
    }
    (order, parent, seen)
}

fn unreached_bus(net: &Network) -> Option<usize> {
    let (_, _, seen) = bfs_tree(&incidence(net));
    seen.iter().position(|&s| !s)
}

/// Pushes every bus's balance residual onto its spanning-tree parent line so
/// that `injection = outflow − inflow` holds to rounding at every bus except
/// the root, which absorbs the (near-zero) total.
pub fn balance_flows(net: &Network, injections: &[f64], flows: &mut [f64]) {
    let n = net.buses().len();
    let mut out = vec![0.0; n];
    for (l, &f) in flows.iter().enumerate() {
        let (a, b) = net.line_ends(l);
        out[a] += f;
        out[b] -= f;
    }
    let (order, parent, _) = bfs_tree(&incidence(net));
    for &v in order.iter().rev() {
        let Some(l) = parent[v] else { continue };
        let r = injections[v] - out[v];
        let (a, b) = net.line_ends(l);
        // raise v's net outflow by r along line l; the other end loses r
        let d = if a == v { r } else { -r };
        flows[l] += d;
        out[a] += d;
        out[b] -= d;
    }
}
