//! Normal-form games, their better-or-equal response graphs and the
//! Conley-Markov chain built on top of them.
//!
//! Pure profiles are encoded mixed-radix with player 0 least significant:
//! the profile `(a_0, a_1, ..., a_{p-1})` has index
//! `a_0 + s_0 * (a_1 + s_1 * (a_2 + ...))`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::epsmc::EpsilonMc;
use crate::error::{Error, Result};
use crate::graph::{sink_components, Adjacency};

/// Index of a pure strategy profile.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProfileId(pub usize);

impl ProfileId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Game {
    strategy_counts: Vec<usize>,
    strides: Vec<usize>,
    utilities: Vec<Vec<f64>>,
}

impl Game {
    pub fn new(strategy_counts: Vec<usize>, utilities: Vec<Vec<f64>>) -> Result<Self> {
        if strategy_counts.is_empty() {
            return Err(Error::invalid(
                "players",
                "a game needs at least one player",
            ));
        }
        if let Some(i) = strategy_counts.iter().position(|&s| s == 0) {
            return Err(Error::invalid(
                format!("strategies[{i}]"),
                "every player needs at least one strategy",
            ));
        }
        let mut strides = Vec::with_capacity(strategy_counts.len());
        let mut total: usize = 1;
        for &s in &strategy_counts {
            strides.push(total);
            total = total
                .checked_mul(s)
                .ok_or_else(|| Error::invalid("strategies", "profile count overflows"))?;
        }
        if utilities.len() != strategy_counts.len() {
            return Err(Error::invalid(
                "utilities",
                format!(
                    "expected {} utility tensors, found {}",
                    strategy_counts.len(),
                    utilities.len()
                ),
            ));
        }
        for (i, tensor) in utilities.iter().enumerate() {
            if tensor.len() != total {
                return Err(Error::invalid(
                    format!("utilities[{i}]"),
                    format!("expected {total} entries, found {}", tensor.len()),
                ));
            }
            if let Some(k) = tensor.iter().position(|u| !u.is_finite()) {
                return Err(Error::invalid(
                    format!("utilities[{i}][{k}]"),
                    "utility is not finite",
                ));
            }
        }
        Ok(Game {
            strategy_counts,
            strides,
            utilities,
        })
    }

    pub fn num_players(&self) -> usize {
        self.strategy_counts.len()
    }

    pub fn strategy_counts(&self) -> &[usize] {
        &self.strategy_counts
    }

    pub fn num_profiles(&self) -> usize {
        self.strides[self.num_players() - 1] * self.strategy_counts[self.num_players() - 1]
    }

    pub fn stride(&self, player: usize) -> usize {
        self.strides[player]
    }

    pub fn utilities(&self, player: usize) -> &[f64] {
        &self.utilities[player]
    }

    #[inline]
    pub fn utility(&self, player: usize, profile: ProfileId) -> f64 {
        self.utilities[player][profile.0]
    }

    pub fn encode(&self, strategies: &[usize]) -> Result<ProfileId> {
        if strategies.len() != self.num_players() {
            return Err(Error::invalid(
                "strategies",
                format!(
                    "expected {} entries, found {}",
                    self.num_players(),
                    strategies.len()
                ),
            ));
        }
        let mut index = 0;
        for (player, (&a, &s)) in strategies.iter().zip(&self.strategy_counts).enumerate() {
            if a >= s {
                return Err(Error::StrategyOutOfRange {
                    player,
                    index: a,
                    count: s,
                });
            }
            index += a * self.strides[player];
        }
        Ok(ProfileId(index))
    }

    pub fn decode(&self, profile: ProfileId) -> Vec<usize> {
        (0..self.num_players())
            .map(|i| self.strategy_of(profile, i))
            .collect()
    }

    #[inline]
    pub fn strategy_of(&self, profile: ProfileId, player: usize) -> usize {
        (profile.0 / self.strides[player]) % self.strategy_counts[player]
    }

    /// The profile reached when `player` switches to `strategy`.
    #[inline]
    pub fn deviate(&self, profile: ProfileId, player: usize, strategy: usize) -> ProfileId {
        let current = self.strategy_of(profile, player);
        ProfileId(profile.0 - current * self.strides[player] + strategy * self.strides[player])
    }

    /// One-based strategy tuple, e.g. `(1,3)`.
    pub fn label(&self, profile: ProfileId) -> String {
        let parts: Vec<String> = self
            .decode(profile)
            .iter()
            .map(|a| (a + 1).to_string())
            .collect();
        format!("({})", parts.join(","))
    }

    /// Profiles whose strategy for `player` is 0, i.e. one representative
    /// per line of unilateral deviations of that player.
    fn line_bases(&self, player: usize) -> impl Iterator<Item = ProfileId> + '_ {
        (0..self.num_profiles())
            .map(ProfileId)
            .filter(move |&v| self.strategy_of(v, player) == 0)
    }
}

/// Serialized form of a game.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema_version: Option<u32>,
    pub players: usize,
    pub strategies: Vec<usize>,
    pub utilities: Vec<Vec<f64>>,
}

impl Game {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GameFile = serde_json::from_str(text)?;
        Game::try_from(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GameFile::from(self)).expect("game serialization cannot fail")
    }
}

impl TryFrom<GameFile> for Game {
    type Error = Error;

    fn try_from(file: GameFile) -> Result<Self> {
        if file.players != file.strategies.len() {
            return Err(Error::invalid(
                "players",
                format!(
                    "declares {} players but `strategies` has {} entries",
                    file.players,
                    file.strategies.len()
                ),
            ));
        }
        Game::new(file.strategies, file.utilities)
    }
}

impl From<&Game> for GameFile {
    fn from(game: &Game) -> Self {
        GameFile {
            schema_version: Some(1),
            players: game.num_players(),
            strategies: game.strategy_counts.clone(),
            utilities: game.utilities.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularEdge {
    pub from: ProfileId,
    pub to: ProfileId,
    pub player: usize,
    pub improvement: f64,
}

/// Tie between two profiles; stored once with `from < to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TieEdge {
    pub from: ProfileId,
    pub to: ProfileId,
    pub player: usize,
}

/// The full better-or-equal response graph.
#[derive(Clone, Debug)]
pub struct ResponseGraph {
    pub node_count: usize,
    pub regular_edges: Vec<RegularEdge>,
    pub tie_edges: Vec<TieEdge>,
}

impl ResponseGraph {
    /// Deviations whose gain is within `tie_tolerance` of zero are ties.
    pub fn build(game: &Game, tie_tolerance: f64) -> Self {
        let mut regular_edges = Vec::new();
        let mut tie_edges = Vec::new();
        for u in (0..game.num_profiles()).map(ProfileId) {
            for player in 0..game.num_players() {
                let own = game.strategy_of(u, player);
                let base = game.utility(player, u);
                for alt in 0..game.strategy_counts[player] {
                    if alt == own {
                        continue;
                    }
                    let v = game.deviate(u, player, alt);
                    let gain = game.utility(player, v) - base;
                    if gain > tie_tolerance {
                        regular_edges.push(RegularEdge {
                            from: u,
                            to: v,
                            player,
                            improvement: gain,
                        });
                    } else if gain.abs() <= tie_tolerance && u < v {
                        tie_edges.push(TieEdge {
                            from: u,
                            to: v,
                            player,
                        });
                    }
                }
            }
        }
        ResponseGraph {
            node_count: game.num_profiles(),
            regular_edges,
            tie_edges,
        }
    }

    /// Directed adjacency with every tie expanded into both directions.
    pub fn adjacency(&self) -> Adjacency {
        let edges = self.regular_edges.iter().map(|e| (e.from.0, e.to.0)).chain(
            self.tie_edges
                .iter()
                .flat_map(|t| [(t.from.0, t.to.0), (t.to.0, t.from.0)]),
        );
        Adjacency::from_edges(self.node_count, edges)
    }

    pub fn sink_equilibria(&self) -> SinkEquilibria {
        SinkEquilibria::from_adjacency(&self.adjacency())
    }
}

/// Linear-size graph with the same transitive closure as the response graph.
#[derive(Clone, Debug)]
pub struct ReducedGraph {
    pub node_count: usize,
    pub edges: Vec<(ProfileId, ProfileId)>,
    /// Number of (player, opponent profile) lines the edges were built from.
    pub line_count: usize,
    pub players: usize,
}

impl ReducedGraph {
    /// Along every line of one player's unilateral deviations, sorts the
    /// profiles by that player's utility and links each profile to the next
    /// one. The last profile of each tie group also links back to the first
    /// of its group, closing the group into a cycle. Ties are grouped by
    /// consecutive gaps of at most `tie_tolerance`.
    pub fn build(game: &Game, tie_tolerance: f64) -> Self {
        let mut edges = Vec::new();
        let mut line_count = 0;
        let mut line: Vec<(f64, ProfileId)> = Vec::new();
        for player in 0..game.num_players() {
            let s = game.strategy_counts[player];
            let stride = game.stride(player);
            for base in game.line_bases(player) {
                line_count += 1;
                line.clear();
                line.extend((0..s).map(|k| {
                    let v = ProfileId(base.0 + k * stride);
                    (game.utility(player, v), v)
                }));
                // stable: equal utilities stay in strategy order
                line.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut group_start = 0;
                for k in 0..s {
                    let last_of_group = k + 1 == s || line[k + 1].0 - line[k].0 > tie_tolerance;
                    if k + 1 < s {
                        edges.push((line[k].1, line[k + 1].1));
                    }
                    if last_of_group {
                        if group_start < k {
                            edges.push((line[k].1, line[group_start].1));
                        }
                        group_start = k + 1;
                    }
                }
            }
        }
        ReducedGraph {
            node_count: game.num_profiles(),
            edges,
            line_count,
            players: game.num_players(),
        }
    }

    pub fn adjacency(&self) -> Adjacency {
        Adjacency::from_edges(self.node_count, self.edges.iter().map(|&(u, v)| (u.0, v.0)))
    }

    pub fn sink_equilibria(&self) -> SinkEquilibria {
        SinkEquilibria::from_adjacency(&self.adjacency())
    }

    /// Mean out-degree per node per line. Each node lies on exactly one
    /// line per player.
    pub fn mean_out_degree_per_line(&self) -> f64 {
        if self.node_count == 0 || self.players == 0 {
            return 0.0;
        }
        self.edges.len() as f64 / (self.node_count * self.players) as f64
    }
}

/// Sink SCCs of a response graph, ordered by smallest member.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SinkEquilibria {
    pub members: Vec<Vec<ProfileId>>,
    sink_of: Vec<Option<usize>>,
}

impl SinkEquilibria {
    pub fn from_adjacency(adj: &Adjacency) -> Self {
        let raw = sink_components(adj);
        let mut sink_of = vec![None; adj.node_count()];
        for (k, comp) in raw.iter().enumerate() {
            for &v in comp {
                sink_of[v] = Some(k);
            }
        }
        SinkEquilibria {
            members: raw
                .into_iter()
                .map(|c| c.into_iter().map(ProfileId).collect())
                .collect(),
            sink_of,
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn sink_of(&self, profile: ProfileId) -> Option<usize> {
        self.sink_of[profile.0]
    }

    /// e.g. `sink_0 {(1,1),(1,2)}`
    pub fn label(&self, game: &Game, k: usize) -> String {
        let inner: Vec<String> = self.members[k].iter().map(|&v| game.label(v)).collect();
        format!("sink_{k} {{{}}}", inner.join(","))
    }
}

/// Sink equilibria via the linear-size reduced graph.
pub fn sink_equilibria(game: &Game, tie_tolerance: f64) -> SinkEquilibria {
    ReducedGraph::build(game, tie_tolerance).sink_equilibria()
}

/// Conley-Markov chain: strict improvements weighted by their gain and
/// normalized per node, ties as unit-coefficient epsilon edges in both
/// directions. Transitive improvements carry mass like any other.
pub fn build_cmc(game: &Game, tie_tolerance: f64) -> EpsilonMc {
    let graph = ResponseGraph::build(game, tie_tolerance);
    let n = graph.node_count;
    let mut total_gain = vec![0.0f64; n];
    for e in &graph.regular_edges {
        total_gain[e.from.0] += e.improvement;
    }
    let mut mc = EpsilonMc::new(n);
    for e in &graph.regular_edges {
        mc.add_regular(e.from.0, e.to.0, e.improvement / total_gain[e.from.0]);
    }
    for t in &graph.tie_edges {
        mc.add_eps(t.from.0, t.to.0, 1.0);
        mc.add_eps(t.to.0, t.from.0, 1.0);
    }
    mc
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UtilityDistribution {
    /// i.i.d. uniform on [0, 1)
    Uniform,
    /// i.i.d. uniform on {0, ..., max}
    Integer { max: u32 },
}

pub fn random_game(
    seed: u64,
    strategy_counts: &[usize],
    distribution: UtilityDistribution,
) -> Result<Game> {
    if strategy_counts.is_empty() || strategy_counts.contains(&0) {
        return Err(Error::invalid(
            "strategies",
            "need at least one player and one strategy per player",
        ));
    }
    let total: usize = strategy_counts.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utilities = (0..strategy_counts.len())
        .map(|_| {
            (0..total)
                .map(|_| match distribution {
                    UtilityDistribution::Uniform => rng.random::<f64>(),
                    UtilityDistribution::Integer { max } => rng.random_range(0..=max) as f64,
                })
                .collect()
        })
        .collect();
    Game::new(strategy_counts.to_vec(), utilities)
}

/// Game from two payoff matrices given row-major as (row, column) pairs.
/// Player 0 picks the row.
pub fn bimatrix(rows: usize, cols: usize, payoffs: &[(f64, f64)]) -> Result<Game> {
    if payoffs.len() != rows * cols {
        return Err(Error::invalid("payoffs", "expected rows * cols entries"));
    }
    let mut u0 = vec![0.0; rows * cols];
    let mut u1 = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let (a, b) = payoffs[r * cols + c];
            let idx = r + rows * c;
            u0[idx] = a;
            u1[idx] = b;
        }
    }
    Game::new(vec![rows, cols], vec![u0, u1])
}
