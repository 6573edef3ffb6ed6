//! Epsilon-Markov chains and the limit hitting probability algorithm.
//!
//! A chain carries two edge classes: regular edges with fixed positive
//! weights and epsilon edges whose weight is `c_e * eps` for a symbolic
//! `eps -> 0`. The driver collapses sink SCCs into absorbing nodes, then
//! repeatedly collapses pseudosinks (regular-edge SCCs whose only exits are
//! epsilon edges) into single nodes whose exits become regular edges
//! weighted by the pseudosink's stationary distribution. Once every node has
//! a regular path to absorption the remaining epsilon edges are dropped and
//! an ordinary absorbing chain is solved.
//!
//! Nodes keep the id of the smallest original profile they contain, and a
//! disjoint-set forest maps every original profile to its current node.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::game::{build_cmc, Game, ProfileId, SinkEquilibria};
use crate::graph::{sink_components, tarjan_scc, zero_one_bfs, Adjacency, DisjointSet};
use crate::solver::{self, AbsorptionResult, StochasticMatrix};

const STATIONARY_SUM_TOLERANCE: f64 = 1e-9;
const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct EpsilonMc {
    regular: Vec<BTreeMap<usize, f64>>,
    eps: Vec<BTreeMap<usize, f64>>,
    alive: Vec<bool>,
    absorbing: Vec<bool>,
    origin: DisjointSet,
}

impl EpsilonMc {
    pub fn new(n: usize) -> Self {
        EpsilonMc {
            regular: vec![BTreeMap::new(); n],
            eps: vec![BTreeMap::new(); n],
            alive: vec![true; n],
            absorbing: vec![false; n],
            origin: DisjointSet::new(n),
        }
    }

    /// Adds (or merges into) a regular edge. Self-loops are not stored.
    pub fn add_regular(&mut self, from: usize, to: usize, weight: f64) {
        debug_assert!(weight > 0.0);
        if from != to {
            *self.regular[from].entry(to).or_insert(0.0) += weight;
        }
    }

    /// Adds (or merges into) an epsilon edge. Self-loops are not stored.
    pub fn add_eps(&mut self, from: usize, to: usize, coefficient: f64) {
        debug_assert!(coefficient > 0.0);
        if from != to {
            *self.eps[from].entry(to).or_insert(0.0) += coefficient;
        }
    }

    pub fn mark_absorbing(&mut self, node: usize) {
        self.absorbing[node] = true;
        self.regular[node].clear();
        self.eps[node].clear();
    }

    /// Number of original profiles this chain was built over.
    pub fn capacity(&self) -> usize {
        self.alive.len()
    }

    /// Number of current nodes.
    pub fn node_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    /// Current node ids in ascending order.
    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.capacity()).filter(move |&u| self.alive[u])
    }

    pub fn is_absorbing(&self, node: usize) -> bool {
        self.absorbing[node]
    }

    pub fn absorbing_nodes(&self) -> Vec<usize> {
        self.nodes().filter(|&u| self.absorbing[u]).collect()
    }

    pub fn regular_out(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.regular[node].iter().map(|(&v, &w)| (v, w))
    }

    pub fn eps_out(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.eps[node].iter().map(|(&v, &c)| (v, c))
    }

    pub fn regular_edge_count(&self) -> usize {
        self.regular.iter().map(BTreeMap::len).sum()
    }

    pub fn eps_edge_count(&self) -> usize {
        self.eps.iter().map(BTreeMap::len).sum()
    }

    /// Current node holding original profile `original`.
    pub fn current_node(&self, original: usize) -> usize {
        self.origin.find_const(original)
    }

    /// Adjacency over `0..capacity()`; dead nodes are isolated.
    pub fn adjacency(&self, include_eps: bool) -> Adjacency {
        let edges = self.nodes().flat_map(|u| {
            let reg = self.regular[u].keys().map(move |&v| (u, v));
            let eps = self.eps[u]
                .keys()
                .filter(move |_| include_eps)
                .map(move |&v| (u, v));
            reg.chain(eps)
        });
        Adjacency::from_edges(self.capacity(), edges)
    }

    /// Sink SCCs under both edge classes, as sorted node lists ordered by
    /// smallest member.
    pub fn sink_components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency(true);
        sink_components(&adj)
            .into_iter()
            .filter(|c| self.alive[c[0]])
            .collect()
    }

    /// Checks the structural invariants: no self-loops, positive weights,
    /// normalized regular rows, absorbing nodes without exits, edges only
    /// between live nodes.
    pub fn check_invariants(&self) -> Result<()> {
        for u in 0..self.capacity() {
            if !self.alive[u] {
                if !self.regular[u].is_empty() || !self.eps[u].is_empty() {
                    return Err(Error::Contract(format!("dead node {u} has edges")));
                }
                continue;
            }
            if self.absorbing[u] && (!self.regular[u].is_empty() || !self.eps[u].is_empty()) {
                return Err(Error::Contract(format!("absorbing node {u} has out-edges")));
            }
            for (v, w) in self.regular_out(u).chain(self.eps_out(u)) {
                if v == u {
                    return Err(Error::Contract(format!("self-loop at {u}")));
                }
                if !self.alive[v] {
                    return Err(Error::Contract(format!("edge {u}->{v} into dead node")));
                }
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::Contract(format!("edge {u}->{v} has weight {w}")));
                }
            }
            if !self.regular[u].is_empty() {
                let sum: f64 = self.regular[u].values().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::Contract(format!("regular row {u} sums to {sum}")));
                }
            }
        }
        Ok(())
    }

    /// Merges each group into its smallest member and rewires every edge.
    /// `exits[g]` is `None` for a group that becomes absorbing, or the new
    /// regular out-edges (targets as current ids) of the merged node.
    fn contract(&mut self, groups: &[Vec<usize>], exits: Vec<Option<BTreeMap<usize, f64>>>) {
        for (group, exit) in groups.iter().zip(exits) {
            let rep = group[0];
            for &m in group {
                self.origin.union(rep, m);
                if m != rep {
                    self.alive[m] = false;
                    self.regular[m].clear();
                    self.eps[m].clear();
                }
            }
            debug_assert_eq!(self.origin.find(rep), rep);
            self.eps[rep].clear();
            match exit {
                None => {
                    self.absorbing[rep] = true;
                    self.regular[rep].clear();
                }
                Some(out) => self.regular[rep] = out,
            }
        }
        for u in 0..self.capacity() {
            if !self.alive[u] {
                continue;
            }
            let reg = std::mem::take(&mut self.regular[u]);
            for (v, w) in reg {
                let v = self.origin.find(v);
                if v != u {
                    *self.regular[u].entry(v).or_insert(0.0) += w;
                }
            }
            let eps = std::mem::take(&mut self.eps[u]);
            for (v, c) in eps {
                let v = self.origin.find(v);
                if v != u {
                    *self.eps[u].entry(v).or_insert(0.0) += c;
                }
            }
        }
    }

    /// Collapses each listed sink SCC into one absorbing node.
    pub fn from_cmc(mut cmc: EpsilonMc, sinks: &[Vec<usize>]) -> Result<EpsilonMc> {
        let mut in_sink = vec![usize::MAX; cmc.capacity()];
        let mut groups = Vec::with_capacity(sinks.len());
        for (k, sink) in sinks.iter().enumerate() {
            if sink.is_empty() {
                return Err(Error::Contract(format!("sink {k} is empty")));
            }
            let mut sorted = sink.clone();
            sorted.sort_unstable();
            for &v in &sorted {
                if !cmc.alive[v] || in_sink[v] != usize::MAX {
                    return Err(Error::Contract(format!("node {v} listed twice or dead")));
                }
                in_sink[v] = k;
            }
            groups.push(sorted);
        }
        for (k, group) in groups.iter().enumerate() {
            for &v in group {
                let leaves = cmc
                    .regular_out(v)
                    .chain(cmc.eps_out(v))
                    .any(|(w, _)| in_sink[w] != k);
                if leaves {
                    return Err(Error::Contract(format!(
                        "sink {k} is not closed: node {v} has an edge leaving it"
                    )));
                }
            }
        }
        let exits = vec![None; groups.len()];
        cmc.contract(&groups, exits);
        Ok(cmc)
    }

    /// SCCs under regular edges only, classified per component.
    pub fn rsccs(&self) -> SccPartition {
        let adj = self.adjacency(false);
        let comps = tarjan_scc(&adj);
        let mut members: Vec<Vec<usize>> = comps
            .members
            .into_iter()
            .filter(|m| self.alive[m[0]])
            .collect();
        members.sort_by_key(|m| m[0]);
        let mut component_of = vec![None; self.capacity()];
        for (c, m) in members.iter().enumerate() {
            for &v in m {
                component_of[v] = Some(c);
            }
        }
        let kinds = members
            .iter()
            .enumerate()
            .map(|(c, m)| {
                if m.iter().any(|&v| self.absorbing[v]) {
                    return ComponentKind::Sink;
                }
                let regular_exit = m
                    .iter()
                    .any(|&v| self.regular[v].keys().any(|&w| component_of[w] != Some(c)));
                let eps_exit = m
                    .iter()
                    .any(|&v| self.eps[v].keys().any(|&w| component_of[w] != Some(c)));
                match (regular_exit, eps_exit) {
                    (true, _) => ComponentKind::Ordinary,
                    (false, true) => ComponentKind::Pseudosink,
                    (false, false) => ComponentKind::Sink,
                }
            })
            .collect();
        SccPartition {
            component_of,
            members,
            kinds,
        }
    }

    /// Minimum number of epsilon edges on a path to an absorbing node,
    /// via 0-1 BFS on the reversed chain.
    pub fn node_orders(&self) -> Result<OrderLabels> {
        let n = self.capacity();
        let mut reverse: Vec<Vec<(usize, u8)>> = vec![Vec::new(); n];
        for u in self.nodes() {
            for &v in self.regular[u].keys() {
                reverse[v].push((u, 0));
            }
            for &v in self.eps[u].keys() {
                reverse[v].push((u, 1));
            }
        }
        let sources = self.absorbing_nodes();
        let dist = zero_one_bfs(n, &sources, |u| reverse[u].iter().copied());
        let mut order = vec![0usize; n];
        let mut max_order = 0;
        for u in self.nodes() {
            if dist[u] == usize::MAX {
                return Err(Error::Contract(format!(
                    "node {u} cannot reach an absorbing node"
                )));
            }
            order[u] = dist[u];
            max_order = max_order.max(dist[u]);
        }
        Ok(OrderLabels { order, max_order })
    }

    /// Transition matrix of the regular edges inside `members`, rows
    /// renormalized within the component.
    pub fn component_chain(&self, members: &[usize]) -> Result<StochasticMatrix> {
        let mut local = BTreeMap::new();
        for (k, &v) in members.iter().enumerate() {
            local.insert(v, k);
        }
        let rows = members
            .iter()
            .map(|&v| {
                let inside: Vec<(usize, f64)> = self
                    .regular_out(v)
                    .filter_map(|(w, p)| local.get(&w).map(|&k| (k, p)))
                    .collect();
                let total: f64 = inside.iter().map(|e| e.1).sum();
                if inside.is_empty() {
                    // singleton pseudosink: the implicit self-loop
                    vec![(local[&v], 1.0)]
                } else {
                    inside.into_iter().map(|(k, p)| (k, p / total)).collect()
                }
            })
            .collect();
        StochasticMatrix::new(rows, vec![false; members.len()])
    }

    /// Regular out-edges replacing the epsilon exits of pseudosink `members`.
    fn pseudosink_exits(&self, members: &[usize], pi: &[f64]) -> Result<BTreeMap<usize, f64>> {
        if pi.len() != members.len() {
            return Err(Error::Contract(format!(
                "stationary vector has {} entries for {} members",
                pi.len(),
                members.len()
            )));
        }
        let sum: f64 = pi.iter().sum();
        if (sum - 1.0).abs() > STATIONARY_SUM_TOLERANCE || pi.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Contract(format!(
                "stationary vector not normalized (sum {sum})"
            )));
        }
        let inside: std::collections::BTreeSet<usize> = members.iter().copied().collect();
        for &x in members {
            if let Some(w) = self.regular[x].keys().find(|w| !inside.contains(w)) {
                return Err(Error::Contract(format!(
                    "not a pseudosink: regular edge {x}->{w} leaves it"
                )));
            }
        }
        let mut out = BTreeMap::new();
        let mut denom = 0.0;
        for (&x, &mass) in members.iter().zip(pi) {
            for (y, c) in self.eps_out(x) {
                if !inside.contains(&y) {
                    *out.entry(y).or_insert(0.0) += c * mass;
                    denom += c * mass;
                }
            }
        }
        if !(denom > 0.0) {
            return Err(Error::Contract("pseudosink has no epsilon exit".into()));
        }
        out.values_mut().for_each(|w| *w /= denom);
        Ok(out)
    }

    /// Replaces pseudosink `members` by a single node whose regular exits
    /// are the stationary-weighted epsilon exits.
    pub fn collapse_pseudosink(&mut self, members: &[usize], pi: &[f64]) -> Result<()> {
        self.collapse_pseudosinks(&[(members.to_vec(), pi.to_vec())])
    }

    /// Collapses several disjoint pseudosinks in one rewiring pass.
    pub fn collapse_pseudosinks(&mut self, list: &[(Vec<usize>, Vec<f64>)]) -> Result<()> {
        let mut groups = Vec::with_capacity(list.len());
        let mut exits = Vec::with_capacity(list.len());
        for (members, pi) in list {
            if members.is_empty() {
                return Err(Error::Contract("empty pseudosink".into()));
            }
            if members.iter().any(|&v| !self.alive[v] || self.absorbing[v]) {
                return Err(Error::Contract(
                    "pseudosink contains dead or absorbing node".into(),
                ));
            }
            exits.push(Some(self.pseudosink_exits(members, pi)?));
            // members and pi stay aligned; the representative is the minimum
            let mut sorted = members.clone();
            sorted.sort_unstable();
            groups.push(sorted);
        }
        self.contract(&groups, exits);
        Ok(())
    }

    /// Drops every epsilon edge and renormalizes regular rows. Only valid
    /// once every node has a regular path to absorption.
    pub fn delete_epsilon_edges(&mut self) -> Result<()> {
        let orders = self.node_orders()?;
        if orders.max_order > 0 {
            return Err(Error::Contract(format!(
                "epsilon edges deleted while max order is {}",
                orders.max_order
            )));
        }
        for u in 0..self.capacity() {
            self.eps[u].clear();
            let total: f64 = self.regular[u].values().sum();
            if total > 0.0 {
                self.regular[u].values_mut().for_each(|w| *w /= total);
            }
        }
        Ok(())
    }

    /// The regular-edge chain over live nodes, in ascending node order.
    pub fn regular_chain(&self) -> Result<(Vec<usize>, StochasticMatrix)> {
        let nodes: Vec<usize> = self.nodes().collect();
        let mut index = vec![usize::MAX; self.capacity()];
        for (k, &u) in nodes.iter().enumerate() {
            index[u] = k;
        }
        let mut rows = Vec::with_capacity(nodes.len());
        let mut absorbing = Vec::with_capacity(nodes.len());
        for &u in &nodes {
            absorbing.push(self.absorbing[u]);
            rows.push(self.regular_out(u).map(|(v, w)| (index[v], w)).collect());
        }
        Ok((nodes, StochasticMatrix::new(rows, absorbing)?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ComponentKind {
    /// Contains an absorbing node, or has no exits at all.
    Sink,
    /// No regular exit, at least one epsilon exit.
    Pseudosink,
    Ordinary,
}

#[derive(Clone, Debug)]
pub struct SccPartition {
    pub component_of: Vec<Option<usize>>,
    pub members: Vec<Vec<usize>>,
    pub kinds: Vec<ComponentKind>,
}

impl SccPartition {
    pub fn pseudosinks(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.members
            .iter()
            .zip(&self.kinds)
            .filter(|(_, &k)| k == ComponentKind::Pseudosink)
            .map(|(m, _)| m.as_slice())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderLabels {
    /// Indexed by node id; entries of collapsed-away ids are 0.
    pub order: Vec<usize>,
    pub max_order: usize,
}

/// One pass of the collapse loop.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize)]
pub struct CollapseRound {
    pub max_order_before: usize,
    pub pseudosinks: usize,
    pub collapsed_nodes: usize,
    pub max_order_after: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct CollapseTrace {
    pub initial_max_order: usize,
    pub rounds: Vec<CollapseRound>,
}

/// Limit (eps -> 0) hitting probabilities of every pure profile.
#[derive(Clone, Debug)]
pub struct HittingMatrix {
    pub sinks: SinkEquilibria,
    /// `rows[profile][k]`: probability of being absorbed by sink `k`.
    pub rows: Vec<Vec<f64>>,
    pub trace: CollapseTrace,
}

impl HittingMatrix {
    pub fn row(&self, profile: ProfileId) -> &[f64] {
        &self.rows[profile.0]
    }
}

/// Sink-collapsed CMC of `game` together with its sink equilibria.
pub fn collapsed_cmc(game: &Game, tie_tolerance: f64) -> Result<(EpsilonMc, SinkEquilibria)> {
    let cmc = build_cmc(game, tie_tolerance);
    let sinks_raw = cmc.sink_components();
    let sinks = SinkEquilibria::from_adjacency(&cmc.adjacency(true));
    let mc = EpsilonMc::from_cmc(cmc, &sinks_raw)?;
    Ok((mc, sinks))
}

/// Runs the collapse loop until every node has order 0. Each round collapses
/// every current pseudosink; the maximum order must strictly drop.
pub fn reduce_to_order_zero(mc: &mut EpsilonMc) -> Result<CollapseTrace> {
    let mut orders = mc.node_orders()?;
    let mut trace = CollapseTrace {
        initial_max_order: orders.max_order,
        rounds: Vec::new(),
    };
    while orders.max_order > 0 {
        if trace.rounds.len() > trace.initial_max_order {
            return Err(Error::Contract(format!(
                "collapse loop exceeded {} rounds",
                trace.initial_max_order + 1
            )));
        }
        let partition = mc.rsccs();
        let mut batch = Vec::new();
        for members in partition.pseudosinks() {
            let chain = mc.component_chain(members)?;
            let pi = solver::stationary_distribution(&chain)?;
            batch.push((members.to_vec(), pi));
        }
        if batch.is_empty() {
            return Err(Error::Contract(format!(
                "max order {} but no pseudosink exists",
                orders.max_order
            )));
        }
        let collapsed_nodes = batch.iter().map(|(m, _)| m.len()).sum();
        mc.collapse_pseudosinks(&batch)?;
        let next = mc.node_orders()?;
        trace.rounds.push(CollapseRound {
            max_order_before: orders.max_order,
            pseudosinks: batch.len(),
            collapsed_nodes,
            max_order_after: next.max_order,
        });
        if next.max_order >= orders.max_order {
            return Err(Error::Contract(format!(
                "max order did not decrease ({} -> {})",
                orders.max_order, next.max_order
            )));
        }
        orders = next;
    }
    Ok(trace)
}

/// Expands per-node absorption results to one row per original profile.
fn expand_rows(
    mc: &EpsilonMc,
    sinks: &SinkEquilibria,
    absorption: &AbsorptionResult,
) -> Result<Vec<Vec<f64>>> {
    let k = sinks.len();
    let mut sink_of_node = vec![usize::MAX; mc.capacity()];
    for (s, members) in sinks.members.iter().enumerate() {
        sink_of_node[mc.current_node(members[0].0)] = s;
    }
    let mut col_sink = Vec::with_capacity(absorption.absorbing.len());
    for &a in &absorption.absorbing {
        let s = sink_of_node[a];
        if s == usize::MAX {
            return Err(Error::Contract(format!("absorbing node {a} is not a sink")));
        }
        col_sink.push(s);
    }
    let mut node_rows: Vec<Option<Vec<f64>>> = vec![None; mc.capacity()];
    for (t, &u) in absorption.transient.iter().enumerate() {
        let mut row = vec![0.0; k];
        for (a, &p) in absorption.h[t].iter().enumerate() {
            row[col_sink[a]] += p;
        }
        node_rows[u] = Some(row);
    }
    for (a, &u) in absorption.absorbing.iter().enumerate() {
        let mut row = vec![0.0; k];
        row[col_sink[a]] = 1.0;
        node_rows[u] = Some(row);
    }
    (0..mc.capacity())
        .map(|p| {
            node_rows[mc.current_node(p)]
                .clone()
                .ok_or_else(|| Error::Contract(format!("profile {p} has no row")))
        })
        .collect()
}

/// Limit hitting probabilities of the Conley-Markov chain of `game`.
pub fn limit_hitting_probabilities(game: &Game, tie_tolerance: f64) -> Result<HittingMatrix> {
    let (mut mc, sinks) = collapsed_cmc(game, tie_tolerance)?;
    let trace = reduce_to_order_zero(&mut mc)?;
    mc.delete_epsilon_edges()?;
    let (nodes, chain) = mc.regular_chain()?;
    let mut absorption = solver::absorption_probabilities(&chain).map_err(|e| match e {
        Error::NoAbsorption { node } => Error::NoAbsorption { node: nodes[node] },
        other => other,
    })?;
    absorption.transient.iter_mut().for_each(|t| *t = nodes[*t]);
    absorption.absorbing.iter_mut().for_each(|a| *a = nodes[*a]);
    let rows = expand_rows(&mc, &sinks, &absorption)?;
    Ok(HittingMatrix { sinks, rows, trace })
}

/// Hitting probabilities of the CMC with epsilon fixed at `eps`.
pub fn oracle_hitting_matrix(game: &Game, tie_tolerance: f64, eps: f64) -> Result<HittingMatrix> {
    let (mc, sinks) = collapsed_cmc(game, tie_tolerance)?;
    let absorption = solver::oracle_hitting_at_epsilon(&mc, eps)?;
    let rows = expand_rows(&mc, &sinks, &absorption)?;
    Ok(HittingMatrix {
        sinks,
        rows,
        trace: CollapseTrace::default(),
    })
}

/// Largest entrywise difference between two hitting matrices over the same sinks.
pub fn max_abs_gap(a: &HittingMatrix, b: &HittingMatrix) -> f64 {
    a.rows
        .iter()
        .zip(&b.rows)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{random_game, UtilityDistribution};
    use crate::known_games::{cycle_game, tied_exit_game};

    fn pid(game: &Game, s: &[usize]) -> usize {
        let z: Vec<usize> = s.iter().map(|a| a - 1).collect();
        game.encode(&z).unwrap().0
    }

    #[test]
    fn merging_and_self_loops() {
        let mut mc = EpsilonMc::new(3);
        mc.add_regular(0, 1, 0.25);
        mc.add_regular(0, 1, 0.25);
        mc.add_regular(0, 2, 0.5);
        mc.add_regular(1, 1, 1.0);
        mc.add_eps(2, 0, 1.0);
        mc.add_eps(2, 0, 2.0);
        assert_eq!(
            mc.regular_out(0).collect::<Vec<_>>(),
            vec![(1, 0.5), (2, 0.5)]
        );
        assert_eq!(mc.regular_out(1).count(), 0);
        assert_eq!(mc.eps_out(2).collect::<Vec<_>>(), vec![(0, 3.0)]);
    }

    #[test]
    fn from_cmc_node_counts() {
        let g = cycle_game();
        let (mc, sinks) = collapsed_cmc(&g, 0.0).unwrap();
        assert_eq!(sinks.len(), 2);
        assert_eq!(mc.node_count(), 6);
        assert_eq!(mc.absorbing_nodes().len(), 2);
        mc.check_invariants().unwrap();

        let g = tied_exit_game();
        let (mc, _) = collapsed_cmc(&g, 0.0).unwrap();
        assert_eq!(mc.node_count(), 9);
        assert_eq!(mc.absorbing_nodes().len(), 2);
    }

    #[test]
    fn single_sink_game_collapses_to_one_node() {
        // matching pennies: one 4-cycle covering everything
        let g = crate::game::bimatrix(2, 2, &[(1.0, -1.0), (-1.0, 1.0), (-1.0, 1.0), (1.0, -1.0)])
            .unwrap();
        let (mc, sinks) = collapsed_cmc(&g, 0.0).unwrap();
        assert_eq!(mc.node_count(), 1);
        let h = limit_hitting_probabilities(&g, 0.0).unwrap();
        assert_eq!(sinks.len(), 1);
        assert!(h.rows.iter().all(|r| r == &vec![1.0]));
    }

    #[test]
    fn from_cmc_rejects_open_sink() {
        let mut mc = EpsilonMc::new(2);
        mc.add_regular(0, 1, 1.0);
        assert!(matches!(
            EpsilonMc::from_cmc(mc, &[vec![0]]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn rscc_classification() {
        let g = tied_exit_game();
        let (mc, _) = collapsed_cmc(&g, 0.0).unwrap();
        let part = mc.rsccs();
        let v33 = pid(&g, &[3, 3]);
        let pseudo: Vec<&[usize]> = part.pseudosinks().collect();
        assert_eq!(pseudo, vec![&[v33][..]]);

        // chain without eps edges
        let mut mc = EpsilonMc::new(3);
        mc.add_regular(0, 1, 1.0);
        mc.add_regular(1, 2, 1.0);
        mc.mark_absorbing(2);
        let part = mc.rsccs();
        assert_eq!(part.members.len(), 3);
        assert_eq!(part.pseudosinks().count(), 0);

        // eps 2-cycle stays split
        let mut mc = EpsilonMc::new(3);
        mc.add_eps(0, 1, 1.0);
        mc.add_eps(1, 0, 1.0);
        mc.add_eps(1, 2, 1.0);
        mc.mark_absorbing(2);
        let part = mc.rsccs();
        assert_eq!(part.members, vec![vec![0], vec![1], vec![2]]);
        assert_eq!(part.pseudosinks().count(), 2);
    }

    #[test]
    fn orders() {
        let g = tied_exit_game();
        let (mc, _) = collapsed_cmc(&g, 0.0).unwrap();
        let o = mc.node_orders().unwrap();
        let v33 = pid(&g, &[3, 3]);
        assert_eq!(o.max_order, 1);
        for u in mc.nodes() {
            assert_eq!(o.order[u], usize::from(u == v33));
        }

        let mut mc = EpsilonMc::new(3);
        mc.add_eps(0, 1, 1.0);
        mc.add_eps(1, 2, 1.0);
        mc.mark_absorbing(2);
        let o = mc.node_orders().unwrap();
        assert_eq!(o.order, vec![2, 1, 0]);

        let mut mc = EpsilonMc::new(2);
        mc.add_regular(0, 0, 1.0);
        assert!(mc.node_orders().is_err());
    }

    #[test]
    fn collapse_singleton_weights() {
        let mut mc = EpsilonMc::new(3);
        mc.add_eps(0, 1, 2.0);
        mc.add_eps(0, 2, 1.0);
        mc.mark_absorbing(1);
        mc.mark_absorbing(2);
        mc.collapse_pseudosink(&[0], &[1.0]).unwrap();
        let out: Vec<_> = mc.regular_out(0).collect();
        assert!((out[0].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((out[1].1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(mc.eps_out(0).count(), 0);
    }

    /// Two-node regular 2-cycle {0,1}; exits 0 -eps(1)-> 2, 1 -eps(3)-> 3.
    fn two_node_pseudosink() -> EpsilonMc {
        let mut mc = EpsilonMc::new(4);
        mc.add_regular(0, 1, 1.0);
        mc.add_regular(1, 0, 1.0);
        mc.add_eps(0, 2, 1.0);
        mc.add_eps(1, 3, 3.0);
        mc.mark_absorbing(2);
        mc.mark_absorbing(3);
        mc
    }

    /// Step-by-step Monte Carlo of the chain at a concrete epsilon; returns
    /// the fraction of runs absorbed at node 2.
    fn simulate_exit_split(mc: &EpsilonMc, start: usize, eps: f64, runs: usize) -> f64 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let pick = |edges: Vec<(usize, f64)>, r: f64| {
            let total: f64 = edges.iter().map(|e| e.1).sum();
            let mut x = r * total;
            for &(v, w) in &edges {
                if x < w {
                    return v;
                }
                x -= w;
            }
            edges.last().unwrap().0
        };
        let mut to_first = 0usize;
        for _ in 0..runs {
            let mut u = start;
            while !mc.is_absorbing(u) {
                let eps_total: f64 = mc.eps_out(u).map(|(_, c)| c * eps).sum();
                let r: f64 = rng.random();
                u = if r < eps_total {
                    pick(mc.eps_out(u).collect(), r / eps_total)
                } else {
                    pick(mc.regular_out(u).collect(), rng.random())
                };
            }
            if u == 2 {
                to_first += 1;
            }
        }
        to_first as f64 / runs as f64
    }

    #[test]
    fn collapse_two_node_pseudosink() {
        let mc = two_node_pseudosink();
        let oracle = simulate_exit_split(&mc, 0, 1e-4, 20_000);
        assert!((oracle - 0.25).abs() < 1e-2, "simulated split {oracle}");

        let mut mc = mc;
        let part = mc.rsccs();
        let p: Vec<usize> = part.pseudosinks().next().unwrap().to_vec();
        assert_eq!(p, vec![0, 1]);
        let pi = solver::stationary_distribution(&mc.component_chain(&p).unwrap()).unwrap();
        mc.collapse_pseudosink(&p, &pi).unwrap();
        let out: Vec<_> = mc.regular_out(0).collect();
        assert_eq!(out.len(), 2);
        assert!((out[0].1 - 0.25).abs() < 1e-15 && (out[1].1 - 0.75).abs() < 1e-15);
        assert_eq!(mc.current_node(1), 0);
        mc.check_invariants().unwrap();
    }

    #[test]
    fn collapse_rejects_non_pseudosink() {
        let mut mc = EpsilonMc::new(3);
        mc.add_regular(0, 1, 1.0);
        mc.add_eps(0, 2, 1.0);
        mc.mark_absorbing(1);
        mc.mark_absorbing(2);
        assert!(mc.collapse_pseudosink(&[0], &[1.0]).is_err());
        let mut mc = two_node_pseudosink();
        assert!(mc.collapse_pseudosink(&[0, 1], &[0.5, 0.6]).is_err());
    }

    #[test]
    fn delete_eps_edges_cases() {
        let mut mc = EpsilonMc::new(4);
        mc.add_regular(0, 1, 0.5);
        mc.add_regular(0, 2, 0.5);
        mc.add_eps(0, 3, 1.0);
        mc.add_regular(3, 1, 1.0);
        mc.mark_absorbing(1);
        mc.mark_absorbing(2);
        mc.delete_epsilon_edges().unwrap();
        assert_eq!(
            mc.regular_out(0).collect::<Vec<_>>(),
            vec![(1, 0.5), (2, 0.5)]
        );
        assert_eq!(mc.eps_edge_count(), 0);

        let g = tied_exit_game();
        let (mut mc, _) = collapsed_cmc(&g, 0.0).unwrap();
        assert!(mc.delete_epsilon_edges().is_err());
    }

    #[test]
    fn tied_exit_limit_row() {
        let g = tied_exit_game();
        let h = limit_hitting_probabilities(&g, 0.0).unwrap();
        let row = h.row(ProfileId(pid(&g, &[3, 3])));
        assert!((row[0] - 1.0).abs() < 1e-12 && row[1].abs() < 1e-12);
        assert_eq!(h.trace.initial_max_order, 1);
        assert_eq!(h.trace.rounds.len(), 1);
        let oracle = oracle_hitting_matrix(&g, 0.0, 1e-8).unwrap();
        assert!(oracle.row(ProfileId(pid(&g, &[3, 3])))[0] >= 1.0 - 1e-6);
        assert!(max_abs_gap(&h, &oracle) < 1e-6);
    }

    #[test]
    fn sink_rows_are_indicators() {
        for g in [cycle_game(), tied_exit_game()] {
            let h = limit_hitting_probabilities(&g, 0.0).unwrap();
            for (k, members) in h.sinks.members.iter().enumerate() {
                for &v in members {
                    let mut expect = vec![0.0; h.sinks.len()];
                    expect[k] = 1.0;
                    assert_eq!(h.row(v), expect.as_slice());
                }
            }
        }
    }

    #[test]
    fn no_tie_games_need_no_rounds() {
        for seed in 0..20 {
            let g = random_game(seed, &[3, 3], UtilityDistribution::Uniform).unwrap();
            let h = limit_hitting_probabilities(&g, 0.0).unwrap();
            assert!(h.trace.rounds.is_empty());
            let (mc, _) = collapsed_cmc(&g, 0.0).unwrap();
            assert_eq!(mc.eps_edge_count(), 0);
            let (nodes, chain) = mc.regular_chain().unwrap();
            let direct = solver::absorption_probabilities(&chain).unwrap();
            for (t, &local) in direct.transient.iter().enumerate() {
                let u = nodes[local];
                let row = h.row(ProfileId(u));
                let total: f64 = direct.h[t].iter().sum();
                assert!((total - 1.0).abs() < 1e-9);
                for (a, &abs_local) in direct.absorbing.iter().enumerate() {
                    let sink = h.sinks.sink_of(ProfileId(nodes[abs_local])).unwrap();
                    assert!((row[sink] - direct.h[t][a]).abs() < 1e-12);
                }
            }
        }
    }
}
