//! Noisy replicator dynamics on mixed strategy profiles, and estimation of
//! the limit distribution over sink equilibria from a prior.
//!
//! One step moves every player's mixed strategy by `eta` toward its best
//! response, adds Gaussian noise on the current support, and projects back
//! onto the simplex of that support. Coordinates pushed to zero go extinct
//! and never return.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::Serialize;

use crate::epsmc::limit_hitting_probabilities;
use crate::error::{Error, Result};
use crate::game::{Game, ProfileId, SinkEquilibria};
use crate::par::{map_indexed, Execution};

/// One probability vector per player.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedProfile {
    strategies: Vec<Vec<f64>>,
}

impl MixedProfile {
    pub fn new(game: &Game, strategies: Vec<Vec<f64>>) -> Result<Self> {
        if strategies.len() != game.num_players() {
            return Err(Error::invalid("mixed profile", "wrong number of players"));
        }
        for (i, x) in strategies.iter().enumerate() {
            if x.len() != game.strategy_counts()[i] {
                return Err(Error::invalid(
                    format!("mixed profile[{i}]"),
                    "wrong number of strategies",
                ));
            }
            let sum: f64 = x.iter().sum();
            if x.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(
                    format!("mixed profile[{i}]"),
                    format!("not a probability vector (sum {sum})"),
                ));
            }
        }
        Ok(MixedProfile { strategies })
    }

    pub fn uniform(game: &Game) -> Self {
        MixedProfile {
            strategies: game
                .strategy_counts()
                .iter()
                .map(|&s| vec![1.0 / s as f64; s])
                .collect(),
        }
    }

    /// The pure profile as a mixed profile.
    pub fn vertex(game: &Game, profile: ProfileId) -> Self {
        MixedProfile {
            strategies: game
                .decode(profile)
                .into_iter()
                .zip(game.strategy_counts())
                .map(|(a, &s)| {
                    let mut x = vec![0.0; s];
                    x[a] = 1.0;
                    x
                })
                .collect(),
        }
    }

    /// Mass `1 - tail` on `profile`, the tail spread evenly over every other
    /// strategy of each player.
    pub fn near_vertex(game: &Game, profile: ProfileId, tail: f64) -> Self {
        MixedProfile {
            strategies: game
                .decode(profile)
                .into_iter()
                .zip(game.strategy_counts())
                .map(|(a, &s)| {
                    if s == 1 {
                        return vec![1.0];
                    }
                    let mut x = vec![tail / (s - 1) as f64; s];
                    x[a] = 1.0 - tail;
                    x
                })
                .collect(),
        }
    }

    pub fn player(&self, i: usize) -> &[f64] {
        &self.strategies[i]
    }

    pub fn players(&self) -> &[Vec<f64>] {
        &self.strategies
    }

    pub fn support(&self, i: usize) -> Vec<usize> {
        support_of(&self.strategies[i])
    }

    /// Per-player argmax, ties to the lowest strategy index.
    pub fn nearest_profile(&self, game: &Game) -> ProfileId {
        let a: Vec<usize> = self
            .strategies
            .iter()
            .map(|x| argmax(x, 0..x.len()))
            .collect();
        game.encode(&a).expect("argmax is always in range")
    }

    /// `||x - vertex(profile)||_inf`
    pub fn distance_to_vertex(&self, game: &Game, profile: ProfileId) -> f64 {
        let a = game.decode(profile);
        self.strategies
            .iter()
            .zip(a)
            .flat_map(|(x, ai)| {
                x.iter()
                    .enumerate()
                    .map(move |(k, &p)| if k == ai { 1.0 - p } else { p })
            })
            .fold(0.0, f64::max)
    }
}

fn support_of(x: &[f64]) -> Vec<usize> {
    (0..x.len()).filter(|&k| x[k] > 0.0).collect()
}

fn argmax(x: &[f64], candidates: impl IntoIterator<Item = usize>) -> usize {
    let mut best: Option<usize> = None;
    for k in candidates {
        if best.is_none_or(|b| x[k] > x[b]) {
            best = Some(k);
        }
    }
    best.expect("argmax over empty candidate set")
}

/// How the best-response direction treats extinct strategies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BestResponseMode {
    /// Argmax taken over the current support only.
    #[default]
    SupportRestricted,
    /// Global argmax, zeroed if it lies outside the support.
    GlobalProjected,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReplicatorParams {
    pub eta: f64,
    pub delta: f64,
    pub extinction_floor: f64,
    pub max_steps: u64,
    /// Consecutive steps the nearest profile must stay in one sink.
    pub window: u64,
    /// `||x - vertex||_inf` that must be reached at least once in the window.
    pub vertex_radius: f64,
    pub rng_seed: u64,
    pub best_response: BestResponseMode,
}

impl Default for ReplicatorParams {
    fn default() -> Self {
        ReplicatorParams {
            eta: 0.01,
            delta: 0.005,
            extinction_floor: 1e-9,
            max_steps: 100_000,
            window: 50,
            vertex_radius: 0.05,
            rng_seed: 0,
            best_response: BestResponseMode::SupportRestricted,
        }
    }
}

impl ReplicatorParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid("delta", "must be positive"));
        }
        if !(self.extinction_floor >= 0.0) {
            return Err(Error::invalid("extinction_floor", "must be non-negative"));
        }
        if self.window == 0 {
            return Err(Error::invalid("window", "must be at least 1"));
        }
        Ok(())
    }
}

/// Expected utility of each pure strategy of `player` against the other
/// players' mixed strategies.
pub fn expected_utilities(game: &Game, x: &MixedProfile, player: usize) -> Vec<f64> {
    let counts = game.strategy_counts();
    let p = game.num_players();
    let utilities = game.utilities(player);
    let mut out = vec![0.0; counts[player]];
    let mut digits = vec![0usize; p];
    for &u in utilities {
        let mut w = 1.0;
        for (j, (&d, xj)) in digits.iter().zip(&x.strategies).enumerate() {
            if j != player {
                w *= xj[d];
                if w == 0.0 {
                    break;
                }
            }
        }
        if w != 0.0 {
            out[digits[player]] += w * u;
        }
        // mixed-radix increment, player 0 fastest
        for j in 0..p {
            digits[j] += 1;
            if digits[j] < counts[j] {
                break;
            }
            digits[j] = 0;
        }
    }
    out
}

/// Unit best-response vector of `player` at `x`.
pub fn best_response_vector(
    game: &Game,
    x: &MixedProfile,
    player: usize,
    mode: BestResponseMode,
) -> Result<Vec<f64>> {
    let support = x.support(player);
    if support.is_empty() {
        return Err(Error::Contract(format!(
            "player {player} has empty support"
        )));
    }
    let eu = expected_utilities(game, x, player);
    let mut br = vec![0.0; eu.len()];
    match mode {
        BestResponseMode::SupportRestricted => br[argmax(&eu, support)] = 1.0,
        BestResponseMode::GlobalProjected => {
            let k = argmax(&eu, 0..eu.len());
            if x.strategies[player][k] > 0.0 {
                br[k] = 1.0;
            }
        }
    }
    Ok(br)
}

/// Euclidean projection of `v` (restricted to `support`) onto the simplex
/// over `support`, by sort and threshold. Coordinates that end up at or
/// below `floor` go extinct and the rest is projected again. If everything
/// goes extinct the largest coordinate of `v` becomes a pure strategy.
pub fn project_to_simplex(v: &[f64], support: &[usize], floor: f64) -> Vec<f64> {
    assert!(!support.is_empty(), "projection needs a nonempty support");
    let mut alive: Vec<usize> = support.to_vec();
    let mut out = vec![0.0; v.len()];
    loop {
        let vals: Vec<f64> = alive.iter().map(|&k| v[k]).collect();
        let tau = simplex_threshold(&vals);
        let mut next = Vec::with_capacity(alive.len());
        for &k in &alive {
            let p = (v[k] - tau).max(0.0);
            if p > floor {
                next.push(k);
            }
        }
        if next.is_empty() {
            let k = argmax(v, support.iter().copied());
            out.iter_mut().for_each(|x| *x = 0.0);
            out[k] = 1.0;
            return out;
        }
        if next.len() == alive.len() {
            for &k in &alive {
                out[k] = v[k] - tau;
            }
            return out;
        }
        alive = next;
    }
}

/// Threshold `tau` such that `sum(max(v - tau, 0)) = 1`.
fn simplex_threshold(v: &[f64]) -> f64 {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = sorted[0] - 1.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    tau
}

/// One step of the noisy replicator map.
pub fn noisy_replicator_step<R: Rng + ?Sized>(
    game: &Game,
    x: &MixedProfile,
    params: &ReplicatorParams,
    rng: &mut R,
) -> MixedProfile {
    let noise = Normal::new(0.0, params.delta).expect("delta validated positive");
    let strategies = (0..game.num_players())
        .map(|i| {
            let support = x.support(i);
            if support.len() == 1 {
                return x.strategies[i].clone();
            }
            let br = best_response_vector(game, x, i, params.best_response)
                .expect("mixed profiles keep a nonempty support");
            let mut y = x.strategies[i].clone();
            for &k in &support {
                y[k] += params.eta * br[k] + noise.sample(rng);
            }
            project_to_simplex(&y, &support, params.extinction_floor)
        })
        .collect();
    MixedProfile { strategies }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Sink(usize),
    NonConverged,
}

/// Runs the dynamics until the nearest pure profile has stayed inside one
/// sink for `window` consecutive steps and came within `vertex_radius` of
/// its vertex during that window.
pub fn simulate_to_sink<R: Rng + ?Sized>(
    game: &Game,
    x0: &MixedProfile,
    sinks: &SinkEquilibria,
    params: &ReplicatorParams,
    rng: &mut R,
) -> Outcome {
    let mut x = x0.clone();
    let mut current: Option<usize> = None;
    let mut run = 0u64;
    let mut last_near: Option<u64> = None;
    for step in 1..=params.max_steps {
        x = noisy_replicator_step(game, &x, params, rng);
        let nearest = x.nearest_profile(game);
        match sinks.sink_of(nearest) {
            Some(k) => {
                if current == Some(k) {
                    run += 1;
                } else {
                    current = Some(k);
                    run = 1;
                    last_near = None;
                }
                if x.distance_to_vertex(game, nearest) < params.vertex_radius {
                    last_near = Some(step);
                }
                if run >= params.window && last_near.is_some_and(|t| step - t < params.window) {
                    return Outcome::Sink(k);
                }
            }
            None => {
                // a vertex outside every sink with singleton supports never moves again
                if x.strategies.iter().all(|s| support_of(s).len() == 1) {
                    return Outcome::NonConverged;
                }
                current = None;
                run = 0;
                last_near = None;
            }
        }
    }
    Outcome::NonConverged
}

/// Distribution the initial mixed profiles are drawn from.
#[derive(Clone, Debug, PartialEq)]
pub enum Prior {
    /// Uniform over the product of simplices.
    Uniform,
    /// Symmetric Dirichlet per player.
    Dirichlet(f64),
    PointMass(MixedProfile),
    /// Vertices drawn with the given weight per pure profile.
    PureProfiles(Vec<f64>),
}

impl Prior {
    pub fn sample<R: Rng + ?Sized>(&self, game: &Game, rng: &mut R) -> MixedProfile {
        let alpha = match self {
            Prior::Uniform => 1.0,
            Prior::Dirichlet(a) => *a,
            Prior::PointMass(x) => return x.clone(),
            Prior::PureProfiles(weights) => {
                let total: f64 = weights.iter().sum();
                let mut pick = rng.random::<f64>() * total;
                let mut chosen = weights.len() - 1;
                for (k, &w) in weights.iter().enumerate() {
                    if pick < w {
                        chosen = k;
                        break;
                    }
                    pick -= w;
                }
                return MixedProfile::vertex(game, ProfileId(chosen));
            }
        };
        let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
        let strategies = game
            .strategy_counts()
            .iter()
            .map(|&s| loop {
                let draws: Vec<f64> = (0..s).map(|_| gamma.sample(rng)).collect();
                let total: f64 = draws.iter().sum();
                if total > 0.0 {
                    break draws.into_iter().map(|g| g / total).collect();
                }
            })
            .collect();
        MixedProfile { strategies }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimateConfig {
    pub runs_per_sample: usize,
    /// Samples per checkpoint.
    pub batch_size: usize,
    pub tv_tol: f64,
    pub max_samples: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            runs_per_sample: 40,
            batch_size: 100,
            tv_tol: 0.01,
            max_samples: 20_000,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitDistribution {
    /// Probability per sink equilibrium.
    pub distribution: Vec<f64>,
    /// Mass of runs that never settled.
    pub non_converged: f64,
    pub samples: usize,
    pub runs: usize,
    pub non_converged_runs: usize,
    /// TV distance between successive checkpoint averages.
    pub tv_trace: Vec<f64>,
    /// TV distance between each checkpoint average and the final average.
    pub expost_tv_trace: Vec<f64>,
    /// True when the TV tolerance was met before the sample budget ran out.
    pub converged: bool,
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Independent generator for `stream` under `root`.
pub fn stream_rng(root: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(root);
    rng.set_stream(stream);
    rng
}

/// Monte Carlo estimate of the limit distribution from `prior`. Samples are
/// processed in batches; per-run generators are derived from
/// `params.rng_seed` by index, and results are merged in index order, so
/// serial and parallel runs give identical output.
pub fn estimate_limit_distribution(
    game: &Game,
    sinks: &SinkEquilibria,
    prior: &Prior,
    params: &ReplicatorParams,
    config: &EstimateConfig,
) -> Result<LimitDistribution> {
    params.validate()?;
    if !(config.tv_tol > 0.0) {
        return Err(Error::invalid("tv_tol", "must be positive"));
    }
    if config.runs_per_sample == 0 || config.batch_size == 0 || config.max_samples == 0 {
        return Err(Error::invalid(
            "config",
            "runs, batch size and budget must be positive",
        ));
    }
    match prior {
        Prior::Dirichlet(a) if !(*a > 0.0 && a.is_finite()) => {
            return Err(Error::invalid("prior", "dirichlet alpha must be positive"));
        }
        Prior::PureProfiles(w)
            if w.len() != game.num_profiles() || !(w.iter().sum::<f64>() > 0.0) =>
        {
            return Err(Error::invalid(
                "prior",
                "pure weights must cover every profile",
            ));
        }
        _ => {}
    }
    let k = sinks.len();
    let runs = config.runs_per_sample;
    let streams_per_sample = runs as u64 + 1;
    let mut totals = vec![0.0f64; k + 1];
    let mut checkpoints: Vec<Vec<f64>> = Vec::new();
    let mut tv_trace = Vec::new();
    let mut samples = 0usize;
    let mut non_converged_runs = 0usize;
    let mut converged = false;

    while samples < config.max_samples {
        let batch = config.batch_size.min(config.max_samples - samples);
        let counts = map_indexed(samples..samples + batch, config.execution, |s| {
            let base = s as u64 * streams_per_sample;
            let x0 = prior.sample(game, &mut stream_rng(params.rng_seed, base));
            let mut counts = vec![0usize; k + 1];
            for r in 0..runs {
                let mut rng = stream_rng(params.rng_seed, base + 1 + r as u64);
                match simulate_to_sink(game, &x0, sinks, params, &mut rng) {
                    Outcome::Sink(j) => counts[j] += 1,
                    Outcome::NonConverged => counts[k] += 1,
                }
            }
            counts
        });
        for c in &counts {
            for (t, &n) in totals.iter_mut().zip(c) {
                *t += n as f64 / runs as f64;
            }
            non_converged_runs += c[k];
        }
        samples += batch;
        let average: Vec<f64> = totals.iter().map(|t| t / samples as f64).collect();
        if let Some(prev) = checkpoints.last() {
            let tv = total_variation(prev, &average);
            tv_trace.push(tv);
            if tv < config.tv_tol {
                converged = true;
            }
        }
        checkpoints.push(average);
        if converged {
            break;
        }
    }

    let last = checkpoints
        .last()
        .cloned()
        .unwrap_or_else(|| vec![0.0; k + 1]);
    let expost_tv_trace = checkpoints
        .iter()
        .map(|c| total_variation(c, &last))
        .collect();
    Ok(LimitDistribution {
        distribution: last[..k].to_vec(),
        non_converged: last[k],
        samples,
        runs: samples * runs,
        non_converged_runs,
        tv_trace,
        expost_tv_trace,
        converged,
    })
}

/// Exact limit distribution for a prior supported on pure profiles:
/// the prior-weighted average of the limit hitting probabilities.
pub fn exact_limit_distribution(
    game: &Game,
    pure_prior: &[f64],
    tie_tolerance: f64,
) -> Result<(SinkEquilibria, LimitDistribution)> {
    if pure_prior.len() != game.num_profiles() {
        return Err(Error::invalid(
            "prior",
            format!(
                "expected {} weights, found {}",
                game.num_profiles(),
                pure_prior.len()
            ),
        ));
    }
    if let Some(i) = pure_prior
        .iter()
        .position(|&w| !(w >= 0.0 && w.is_finite()))
    {
        return Err(Error::invalid(
            format!("prior[{i}]"),
            "weight must be non-negative",
        ));
    }
    let sum: f64 = pure_prior.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(
            "prior",
            format!("weights sum to {sum}, not 1"),
        ));
    }
    let hitting = limit_hitting_probabilities(game, tie_tolerance)?;
    let mut distribution = vec![0.0; hitting.sinks.len()];
    for (w, row) in pure_prior.iter().zip(&hitting.rows) {
        if *w != 0.0 {
            for (d, p) in distribution.iter_mut().zip(row) {
                *d += w * p;
            }
        }
    }
    Ok((
        hitting.sinks,
        LimitDistribution {
            distribution,
            non_converged: 0.0,
            samples: 0,
            runs: 0,
            non_converged_runs: 0,
            tv_trace: Vec::new(),
            expost_tv_trace: Vec::new(),
            converged: true,
        },
    ))
}
