//! Markov-chain linear algebra: stationary distributions of irreducible
//! chains, absorption probabilities, and the fixed-epsilon oracle.
//!
//! The dense paths use state reduction (GTH-style elimination). Every pivot
//! is computed as a sum of outgoing probabilities instead of `1 - p_kk`, so
//! chains whose exit rates are tiny (the epsilon oracle) keep full relative
//! accuracy.

use crate::epsmc::EpsilonMc;
use crate::error::{Error, Result};
use crate::graph::{tarjan_scc, Adjacency};

/// Transient systems up to this size are solved densely.
pub const DENSE_ABSORPTION_LIMIT: usize = 2048;
/// Irreducible components up to this size get the dense stationary solve.
pub const DENSE_STATIONARY_LIMIT: usize = 512;
pub const MAX_SWEEPS: usize = 1_000_000;
/// Bound on `||(I - Q)H - R||_inf` accepted from any absorption solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
const ROW_SUM_TOLERANCE: f64 = 1e-10;

/// Sparse row-major transition matrix. Rows of absorbing states are empty.
#[derive(Clone, Debug)]
pub struct StochasticMatrix {
    rows: Vec<Vec<(usize, f64)>>,
    absorbing: Vec<bool>,
}

impl StochasticMatrix {
    /// Entries within a row are merged and sorted by column. Non-absorbing
    /// rows must sum to one; any deficit is reported as an error rather than
    /// being turned into a self-loop.
    pub fn new(rows: Vec<Vec<(usize, f64)>>, absorbing: Vec<bool>) -> Result<Self> {
        let n = rows.len();
        if absorbing.len() != n {
            return Err(Error::invalid(
                "absorbing",
                "mask length differs from row count",
            ));
        }
        let mut merged_rows = Vec::with_capacity(n);
        for (i, row) in rows.into_iter().enumerate() {
            if absorbing[i] {
                merged_rows.push(Vec::new());
                continue;
            }
            let mut row = row;
            for &(j, p) in &row {
                if j >= n {
                    return Err(Error::invalid(
                        format!("row {i}"),
                        format!("column {j} out of range"),
                    ));
                }
                if !(p.is_finite() && p >= 0.0) {
                    return Err(Error::invalid(
                        format!("row {i}"),
                        format!("bad probability {p}"),
                    ));
                }
            }
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, p) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += p,
                    _ => merged.push((j, p)),
                }
            }
            merged.retain(|&(_, p)| p > 0.0);
            let sum: f64 = merged.iter().map(|e| e.1).sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::invalid(
                    format!("row {i}"),
                    format!("row sums to {sum}"),
                ));
            }
            merged_rows.push(merged);
        }
        Ok(StochasticMatrix {
            rows: merged_rows,
            absorbing,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.absorbing[i]
    }

    fn adjacency(&self) -> Adjacency {
        let edges = self
            .rows
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().map(move |&(j, _)| (i, j)));
        Adjacency::from_edges(self.len(), edges)
    }
}

/// Absorption probabilities: `h[t][a]` is the probability that the chain
/// started at `transient[t]` is absorbed at `absorbing[a]`.
#[derive(Clone, Debug)]
pub struct AbsorptionResult {
    pub transient: Vec<usize>,
    pub absorbing: Vec<usize>,
    pub h: Vec<Vec<f64>>,
    pub residual: f64,
}

/// Stationary distribution of an irreducible chain (periodic chains included).
pub fn stationary_distribution(chain: &StochasticMatrix) -> Result<Vec<f64>> {
    let n = chain.len();
    if n == 0 {
        return Err(Error::NotIrreducible("empty chain".into()));
    }
    if (0..n).any(|i| chain.is_absorbing(i)) {
        return Err(Error::NotIrreducible("chain has absorbing states".into()));
    }
    let comps = tarjan_scc(&chain.adjacency());
    if comps.len() != 1 {
        return Err(Error::NotIrreducible(format!(
            "{} strongly connected components",
            comps.len()
        )));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    if n <= DENSE_STATIONARY_LIMIT {
        stationary_gth(chain)
    } else {
        stationary_lazy_power(chain)
    }
}

fn stationary_gth(chain: &StochasticMatrix) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut p = vec![vec![0.0f64; n]; n];
    for (i, row) in p.iter_mut().enumerate() {
        for &(j, w) in chain.row(i) {
            row[j] = w;
        }
    }
    for k in (1..n).rev() {
        let s: f64 = p[k][..k].iter().sum();
        if s <= 0.0 {
            return Err(Error::NotIrreducible(format!(
                "state {k} has no exit in reduction"
            )));
        }
        let (upper, lower) = p.split_at_mut(k);
        let row_k = &lower[0];
        for row_i in upper.iter_mut() {
            row_i[k] /= s;
            let f = row_i[k];
            if f != 0.0 {
                for (dst, &src) in row_i[..k].iter_mut().zip(&row_k[..k]) {
                    *dst += f * src;
                }
            }
        }
    }
    let mut pi = vec![0.0f64; n];
    pi[0] = 1.0;
    for k in 1..n {
        pi[k] = (0..k).map(|i| pi[i] * p[i][k]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    Ok(pi)
}

/// Power iteration on the lazy chain `(I + T) / 2`, which shares the
/// stationary distribution but is aperiodic.
fn stationary_lazy_power(chain: &StochasticMatrix) -> Result<Vec<f64>> {
    let n = chain.len();
    let mut pi = vec![1.0 / n as f64; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..MAX_SWEEPS {
        next.iter_mut().zip(&pi).for_each(|(d, &s)| *d = 0.5 * s);
        for (i, &mass) in pi.iter().enumerate() {
            for &(j, w) in chain.row(i) {
                next[j] += 0.5 * mass * w;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < 1e-14 {
            return Ok(pi);
        }
    }
    Err(Error::NonConvergence(format!(
        "stationary power iteration on {n} states"
    )))
}

/// Solves `(I - Q) H = R`, the minimal non-negative solution of the
/// first-step equations.
pub fn absorption_probabilities(chain: &StochasticMatrix) -> Result<AbsorptionResult> {
    let n = chain.len();
    let transient: Vec<usize> = (0..n).filter(|&i| !chain.is_absorbing(i)).collect();
    let absorbing: Vec<usize> = (0..n).filter(|&i| chain.is_absorbing(i)).collect();

    // every transient state must reach absorption
    let rev = chain.adjacency().reversed();
    let mut reaches = vec![false; n];
    let mut stack = absorbing.clone();
    for &a in &absorbing {
        reaches[a] = true;
    }
    while let Some(u) = stack.pop() {
        for &v in rev.successors(u) {
            if !reaches[v] {
                reaches[v] = true;
                stack.push(v);
            }
        }
    }
    if let Some(&bad) = transient.iter().find(|&&t| !reaches[t]) {
        return Err(Error::NoAbsorption { node: bad });
    }

    let h = if transient.len() <= DENSE_ABSORPTION_LIMIT {
        absorption_state_reduction(chain, &transient, &absorbing)?
    } else {
        absorption_gauss_seidel(chain, &transient, &absorbing)?
    };

    let residual = absorption_residual(chain, &transient, &absorbing, &h);
    if !(residual < RESIDUAL_TOLERANCE) {
        return Err(Error::NonConvergence(format!(
            "absorption residual {residual:e} exceeds {RESIDUAL_TOLERANCE:e}"
        )));
    }
    let h = h
        .into_iter()
        .map(|row| row.into_iter().map(|x| x.clamp(0.0, 1.0)).collect())
        .collect();
    Ok(AbsorptionResult {
        transient,
        absorbing,
        h,
        residual,
    })
}

fn positions(n: usize, transient: &[usize], absorbing: &[usize]) -> Vec<Slot> {
    let mut slot = vec![Slot::Transient(0); n];
    for (t, &i) in transient.iter().enumerate() {
        slot[i] = Slot::Transient(t);
    }
    for (a, &i) in absorbing.iter().enumerate() {
        slot[i] = Slot::Absorbing(a);
    }
    slot
}

#[derive(Clone, Copy)]
enum Slot {
    Transient(usize),
    Absorbing(usize),
}

fn absorption_state_reduction(
    chain: &StochasticMatrix,
    transient: &[usize],
    absorbing: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let nt = transient.len();
    let na = absorbing.len();
    let width = nt + na;
    let slot = positions(chain.len(), transient, absorbing);
    // columns: transient 0..nt then absorbing nt..nt+na
    let mut p = vec![0.0f64; nt * width];
    for (t, &i) in transient.iter().enumerate() {
        for &(j, w) in chain.row(i) {
            let col = match slot[j] {
                Slot::Transient(c) => c,
                Slot::Absorbing(a) => nt + a,
            };
            p[t * width + col] += w;
        }
    }
    let mut pivot = vec![0.0f64; nt];
    for k in 0..nt {
        let row_k = &p[k * width..(k + 1) * width];
        let s: f64 = row_k[k + 1..].iter().sum();
        if s <= 0.0 {
            return Err(Error::NoAbsorption { node: transient[k] });
        }
        pivot[k] = s;
        let row_k: Vec<f64> = row_k.to_vec();
        for i in k + 1..nt {
            let f = p[i * width + k];
            if f == 0.0 {
                continue;
            }
            let scale = f / s;
            let row_i = &mut p[i * width..(i + 1) * width];
            row_i[k] = 0.0;
            for (dst, &src) in row_i[k + 1..].iter_mut().zip(&row_k[k + 1..]) {
                if src != 0.0 {
                    *dst += scale * src;
                }
            }
        }
    }
    let mut h = vec![vec![0.0f64; na]; nt];
    for k in (0..nt).rev() {
        let row_k = &p[k * width..(k + 1) * width];
        let mut acc: Vec<f64> = row_k[nt..].to_vec();
        for j in k + 1..nt {
            let w = row_k[j];
            if w != 0.0 {
                for (a, x) in acc.iter_mut().enumerate() {
                    *x += w * h[j][a];
                }
            }
        }
        for x in acc.iter_mut() {
            *x /= pivot[k];
        }
        h[k] = acc;
    }
    Ok(h)
}

fn absorption_gauss_seidel(
    chain: &StochasticMatrix,
    transient: &[usize],
    absorbing: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let nt = transient.len();
    let na = absorbing.len();
    let slot = positions(chain.len(), transient, absorbing);
    // off-diagonal transient links, absorbing links and pivots per row
    let mut links: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nt];
    let mut exits: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nt];
    let mut pivot = vec![0.0f64; nt];
    for (t, &i) in transient.iter().enumerate() {
        for &(j, w) in chain.row(i) {
            match slot[j] {
                Slot::Transient(c) if c == t => {}
                Slot::Transient(c) => {
                    links[t].push((c, w));
                    pivot[t] += w;
                }
                Slot::Absorbing(a) => {
                    exits[t].push((a, w));
                    pivot[t] += w;
                }
            }
        }
        if pivot[t] <= 0.0 {
            return Err(Error::NoAbsorption { node: i });
        }
    }
    let mut h = vec![vec![0.0f64; na]; nt];
    let mut acc = vec![0.0f64; na];
    for _ in 0..MAX_SWEEPS {
        let mut change = 0.0f64;
        for t in 0..nt {
            acc.iter_mut().for_each(|x| *x = 0.0);
            for &(a, w) in &exits[t] {
                acc[a] += w;
            }
            for &(c, w) in &links[t] {
                for (x, &hc) in acc.iter_mut().zip(&h[c]) {
                    *x += w * hc;
                }
            }
            for (a, x) in acc.iter().enumerate() {
                let v = x / pivot[t];
                change = change.max((v - h[t][a]).abs());
                h[t][a] = v;
            }
        }
        if change < 1e-15 {
            return Ok(h);
        }
    }
    Err(Error::NonConvergence(format!(
        "Gauss-Seidel on {nt} transient states did not settle in {MAX_SWEEPS} sweeps"
    )))
}

fn absorption_residual(
    chain: &StochasticMatrix,
    transient: &[usize],
    absorbing: &[usize],
    h: &[Vec<f64>],
) -> f64 {
    let slot = positions(chain.len(), transient, absorbing);
    let na = absorbing.len();
    let mut worst = 0.0f64;
    let mut r = vec![0.0f64; na];
    for (t, &i) in transient.iter().enumerate() {
        r.copy_from_slice(&h[t]);
        for &(j, w) in chain.row(i) {
            match slot[j] {
                Slot::Transient(c) => {
                    for (x, &hc) in r.iter_mut().zip(&h[c]) {
                        *x -= w * hc;
                    }
                }
                Slot::Absorbing(a) => r[a] -= w,
            }
        }
        worst = r.iter().fold(worst, |m, x| m.max(x.abs()));
        if worst.is_nan() {
            return f64::NAN;
        }
    }
    worst
}

/// Instantiates the symbolic epsilon at `eps`: epsilon edges get weight
/// `c_e * eps`, regular weights are scaled by `1 - sum(c_e) * eps`, and any
/// remaining row deficit becomes a self-loop. Then solves for absorption.
/// Indices in the result are node ids of `mc`.
pub fn oracle_hitting_at_epsilon(mc: &EpsilonMc, eps: f64) -> Result<AbsorptionResult> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid("eps", "must be positive and finite"));
    }
    let nodes: Vec<usize> = mc.nodes().collect();
    let mut index = vec![usize::MAX; mc.capacity()];
    for (k, &u) in nodes.iter().enumerate() {
        index[u] = k;
    }
    let mut rows = Vec::with_capacity(nodes.len());
    let mut absorbing = Vec::with_capacity(nodes.len());
    for (k, &u) in nodes.iter().enumerate() {
        if mc.is_absorbing(u) {
            rows.push(Vec::new());
            absorbing.push(true);
            continue;
        }
        let eps_mass: f64 = mc.eps_out(u).map(|(_, c)| c * eps).sum();
        let scale = 1.0 - eps_mass;
        if scale < 0.0 {
            return Err(Error::EpsilonTooLarge { eps, node: u });
        }
        let mut row: Vec<(usize, f64)> = mc
            .regular_out(u)
            .map(|(v, w)| (index[v], w * scale))
            .chain(mc.eps_out(u).map(|(v, c)| (index[v], c * eps)))
            .collect();
        let sum: f64 = row.iter().map(|e| e.1).sum();
        if sum < 1.0 {
            row.push((k, 1.0 - sum));
        }
        rows.push(row);
        absorbing.push(false);
    }
    let matrix = StochasticMatrix::new(rows, absorbing)?;
    let mut result = absorption_probabilities(&matrix).map_err(|e| match e {
        Error::NoAbsorption { node } => Error::NoAbsorption { node: nodes[node] },
        other => other,
    })?;
    result.transient.iter_mut().for_each(|t| *t = nodes[*t]);
    result.absorbing.iter_mut().for_each(|a| *a = nodes[*a]);
    Ok(result)
}
