//! Plain directed-graph machinery shared by the game and chain modules:
//! compressed adjacency, iterative Tarjan SCC, sink detection, 0-1 BFS and
//! a disjoint-set forest.

use std::collections::VecDeque;

/// Compressed sparse row adjacency over nodes `0..n`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
}

impl Adjacency {
    /// Builds from an edge list. Duplicate edges are kept; order within a
    /// node follows the input order.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        let mut offsets = vec![0usize; n + 1];
        for &(u, v) in &edges {
            debug_assert!(u < n && v < n);
            offsets[u + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut targets = vec![0usize; edges.len()];
        for (u, v) in edges {
            targets[fill[u]] = v;
            fill[u] += 1;
        }
        Adjacency { offsets, targets }
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn successors(&self, u: usize) -> &[usize] {
        &self.targets[self.offsets[u]..self.offsets[u + 1]]
    }

    pub fn reversed(&self) -> Adjacency {
        let n = self.node_count();
        let edges = (0..n).flat_map(|u| self.successors(u).iter().map(move |&v| (v, u)));
        Adjacency::from_edges(n, edges)
    }

    /// Set of nodes reachable from `start` (including `start`).
    pub fn reachable_from(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for &v in self.successors(u) {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// Strongly connected components. `comp_of[v]` is the component index;
/// components are numbered in Tarjan completion order, which is a reverse
/// topological order of the condensation.
#[derive(Clone, Debug)]
pub struct Components {
    pub comp_of: Vec<usize>,
    pub members: Vec<Vec<usize>>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Components with no edge leaving them.
    pub fn sinks(&self, adj: &Adjacency) -> Vec<usize> {
        let mut leaves = vec![true; self.len()];
        for u in 0..adj.node_count() {
            let cu = self.comp_of[u];
            if adj.successors(u).iter().any(|&v| self.comp_of[v] != cu) {
                leaves[cu] = false;
            }
        }
        (0..self.len()).filter(|&c| leaves[c]).collect()
    }
}

/// Iterative Tarjan. Member lists are sorted ascending.
pub fn tarjan_scc(adj: &Adjacency) -> Components {
    const UNVISITED: usize = usize::MAX;
    let n = adj.node_count();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut comp_of = vec![UNVISITED; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    let mut next_index = 0usize;
    // (node, position in its successor list)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let succ = adj.successors(v);
            if *pos < succ.len() {
                let w = succ[*pos];
                *pos += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let cid = members.len();
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp_of[w] = cid;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                members.push(comp);
            }
        }
    }

    Components { comp_of, members }
}

/// Sink SCCs as sorted member lists, ordered by smallest member.
pub fn sink_components(adj: &Adjacency) -> Vec<Vec<usize>> {
    let comps = tarjan_scc(adj);
    let mut sinks: Vec<Vec<usize>> = comps
        .sinks(adj)
        .into_iter()
        .map(|c| comps.members[c].clone())
        .collect();
    sinks.sort_by_key(|m| m[0]);
    sinks
}

/// 0-1 BFS: shortest distances from any of `sources` where each edge
/// carries cost 0 or 1. `edges(u)` yields `(v, cost)` pairs. Unreachable
/// nodes get `usize::MAX`.
pub fn zero_one_bfs<F, I>(n: usize, sources: &[usize], mut edges: F) -> Vec<usize>
where
    F: FnMut(usize) -> I,
    I: IntoIterator<Item = (usize, u8)>,
{
    let mut dist = vec![usize::MAX; n];
    let mut deque = VecDeque::new();
    for &s in sources {
        dist[s] = 0;
        deque.push_back(s);
    }
    while let Some(u) = deque.pop_front() {
        let du = dist[u];
        for (v, cost) in edges(u) {
            let nd = du + cost as usize;
            if nd < dist[v] {
                dist[v] = nd;
                if cost == 0 {
                    deque.push_front(v);
                } else {
                    deque.push_back(v);
                }
            }
        }
    }
    dist
}

/// Disjoint-set forest with path compression. The representative of a set
/// is always its smallest element, so merges are order independent.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Non-compressing lookup for shared borrows.
    pub fn find_const(&self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> usize {
        let ra = self.find(a);
        let rb = self.find(b);
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        lo
    }
}
