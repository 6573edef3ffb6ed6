//! Command implementations behind the `sinklimit` binary.
//!
//! Every command returns its full output as a string so it can be written to
//! stdout or a file unchanged. JSON outputs carry `schema_version` and contain
//! no timestamps or host-dependent data.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value};
use sinklimit::dot::export_dot;
use sinklimit::dynamics::{
    estimate_limit_distribution, exact_limit_distribution, BestResponseMode, EstimateConfig,
    LimitDistribution, Prior, ReplicatorParams,
};
use sinklimit::game::{ReducedGraph, ResponseGraph, SinkEquilibria};
use sinklimit::{
    limit_hitting_probabilities, random_game, Error, Game, HittingMatrix, ProfileId, Result,
    UtilityDistribution,
};

pub const SCHEMA_VERSION: u32 = 1;

pub fn read_game(path: &Path) -> Result<Game> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid("game", format!("cannot read {}: {e}", path.display())))?;
    Game::from_json(&text)
}

fn sink_json(game: &Game, sinks: &SinkEquilibria) -> (Value, Value, Value) {
    let ids: Vec<Vec<usize>> = sinks
        .members
        .iter()
        .map(|m| m.iter().map(|p| p.0).collect())
        .collect();
    let tuples: Vec<Vec<String>> = sinks
        .members
        .iter()
        .map(|m| m.iter().map(|&p| game.label(p)).collect())
        .collect();
    let labels: Vec<String> = (0..sinks.len()).map(|k| sinks.label(game, k)).collect();
    (json!(ids), json!(tuples), json!(labels))
}

/// Sink equilibria. `full_graph` switches from the reduced graph to the full
/// better-or-equal response graph.
pub fn cmd_sinks(game: &Game, tie_tolerance: f64, full_graph: bool) -> Result<String> {
    check_tolerance(tie_tolerance)?;
    let sinks = if full_graph {
        ResponseGraph::build(game, tie_tolerance).sink_equilibria()
    } else {
        ReducedGraph::build(game, tie_tolerance).sink_equilibria()
    };
    let (ids, tuples, labels) = sink_json(game, &sinks);
    let out = json!({
        "schema_version": SCHEMA_VERSION,
        "graph": if full_graph { "full" } else { "reduced" },
        "sinks": ids,
        "sink_profiles": tuples,
        "sink_labels": labels,
    });
    Ok(render(&out))
}

pub fn hitting_to_json(game: &Game, hitting: &HittingMatrix, method: Value) -> Value {
    let (ids, tuples, labels) = sink_json(game, &hitting.sinks);
    let label_strings: Vec<String> = (0..hitting.sinks.len())
        .map(|k| hitting.sinks.label(game, k))
        .collect();
    let mut rows = Map::new();
    for (p, row) in hitting.rows.iter().enumerate() {
        let mut entry = Map::new();
        for (label, &value) in label_strings.iter().zip(row) {
            entry.insert(label.clone(), json!(value));
        }
        rows.insert(game.label(ProfileId(p)), Value::Object(entry));
    }
    json!({
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "sinks": ids,
        "sink_profiles": tuples,
        "sink_labels": labels,
        "rows": rows,
        "collapse": hitting.trace,
    })
}

/// Limit hitting probabilities, or the fixed-epsilon oracle when
/// `oracle_eps` is given.
pub fn cmd_hit(game: &Game, tie_tolerance: f64, oracle_eps: Option<f64>) -> Result<String> {
    check_tolerance(tie_tolerance)?;
    let (hitting, method) = match oracle_eps {
        None => (
            limit_hitting_probabilities(game, tie_tolerance)?,
            json!({"kind": "limit"}),
        ),
        Some(eps) => {
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::invalid("oracle-eps", "must lie in (0, 1)"));
            }
            (
                sinklimit::oracle_hitting_matrix(game, tie_tolerance, eps)?,
                json!({"kind": "oracle", "eps": eps}),
            )
        }
    };
    Ok(render(&hitting_to_json(game, &hitting, method)))
}

/// Parses the rows of a `hit` output back into a dense matrix ordered by
/// profile id and sink index.
pub fn parse_hitting(game: &Game, sinks: &SinkEquilibria, text: &str) -> Result<Vec<Vec<f64>>> {
    let value: Value = serde_json::from_str(text)?;
    let rows = value
        .get("rows")
        .and_then(Value::as_object)
        .ok_or_else(|| Error::invalid("rows", "missing or not an object"))?;
    if rows.len() != game.num_profiles() {
        return Err(Error::invalid(
            "rows",
            format!(
                "expected {} rows, found {}",
                game.num_profiles(),
                rows.len()
            ),
        ));
    }
    let labels: Vec<String> = (0..sinks.len()).map(|k| sinks.label(game, k)).collect();
    let mut out = Vec::with_capacity(game.num_profiles());
    for p in 0..game.num_profiles() {
        let key = game.label(ProfileId(p));
        let row = rows
            .get(&key)
            .and_then(Value::as_object)
            .ok_or_else(|| Error::invalid(format!("rows.{key}"), "missing row"))?;
        if row.len() != labels.len() {
            return Err(Error::invalid(
                format!("rows.{key}"),
                format!("expected {} entries, found {}", labels.len(), row.len()),
            ));
        }
        let mut dense = Vec::with_capacity(labels.len());
        for label in &labels {
            let v = row
                .get(label)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::invalid(format!("rows.{key}.{label}"), "missing entry"))?;
            dense.push(v);
        }
        out.push(dense);
    }
    Ok(out)
}

pub fn cmd_export_dot(
    game: &Game,
    tie_tolerance: f64,
    hitting_text: Option<&str>,
) -> Result<String> {
    check_tolerance(tie_tolerance)?;
    let sinks = sinklimit::sink_equilibria(game, tie_tolerance);
    let rows = hitting_text
        .map(|t| parse_hitting(game, &sinks, t))
        .transpose()?;
    export_dot(game, &sinks, rows.as_deref(), tie_tolerance)
}

/// Parsed `--prior` argument.
#[derive(Clone, Debug, PartialEq)]
pub enum PriorSpec {
    Pure(Vec<f64>),
    Uniform,
    Dirichlet(f64),
}

impl PriorSpec {
    /// `pure:<file>`, `uniform` or `dirichlet:<alpha>`. Weight files hold a
    /// JSON array, or an object with a `weights` array.
    pub fn parse(spec: &str) -> Result<Self> {
        if spec == "uniform" {
            return Ok(PriorSpec::Uniform);
        }
        if let Some(alpha) = spec.strip_prefix("dirichlet:") {
            let a: f64 = alpha
                .parse()
                .map_err(|_| Error::invalid("prior", format!("bad dirichlet alpha `{alpha}`")))?;
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::invalid("prior", "dirichlet alpha must be positive"));
            }
            return Ok(PriorSpec::Dirichlet(a));
        }
        if let Some(path) = spec.strip_prefix("pure:") {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::invalid("prior", format!("cannot read {path}: {e}")))?;
            let value: Value = serde_json::from_str(&text)?;
            let array = match &value {
                Value::Array(a) => a,
                Value::Object(o) => o
                    .get("weights")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::invalid("weights", "missing array"))?,
                _ => return Err(Error::invalid("weights", "expected an array")),
            };
            let weights = array
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    v.as_f64()
                        .ok_or_else(|| Error::invalid(format!("weights[{i}]"), "not a number"))
                })
                .collect::<Result<Vec<f64>>>()?;
            return Ok(PriorSpec::Pure(weights));
        }
        Err(Error::invalid(
            "prior",
            format!("unknown prior `{spec}`; expected pure:<file>, uniform or dirichlet:<alpha>"),
        ))
    }

    fn describe(&self) -> Value {
        match self {
            PriorSpec::Pure(w) => json!({"kind": "pure", "weights": w}),
            PriorSpec::Uniform => json!({"kind": "uniform"}),
            PriorSpec::Dirichlet(a) => json!({"kind": "dirichlet", "alpha": a}),
        }
    }
}

/// Options of the `limit` and `simulate` commands.
#[derive(Clone, Debug)]
pub struct LimitOptions {
    pub prior: PriorSpec,
    /// Forces the simulation path even for pure priors.
    pub simulate: bool,
    pub seed: Option<u64>,
    pub params: ReplicatorParams,
    pub config: EstimateConfig,
    pub tie_tolerance: f64,
}

impl LimitOptions {
    pub fn new(prior: PriorSpec) -> Self {
        LimitOptions {
            prior,
            simulate: false,
            seed: None,
            params: ReplicatorParams::default(),
            config: EstimateConfig::default(),
            tie_tolerance: 0.0,
        }
    }
}

pub fn cmd_limit(game: &Game, opts: &LimitOptions) -> Result<String> {
    check_tolerance(opts.tie_tolerance)?;
    let exact = matches!(opts.prior, PriorSpec::Pure(_)) && !opts.simulate;
    let (sinks, dist, method) = if exact {
        let PriorSpec::Pure(weights) = &opts.prior else {
            unreachable!()
        };
        let (sinks, dist) = exact_limit_distribution(game, weights, opts.tie_tolerance)?;
        (sinks, dist, json!({"kind": "exact"}))
    } else {
        let seed = opts
            .seed
            .ok_or_else(|| Error::invalid("seed", "required for simulation"))?;
        let mut params = opts.params.clone();
        params.rng_seed = seed;
        let prior = match &opts.prior {
            PriorSpec::Uniform => Prior::Uniform,
            PriorSpec::Dirichlet(a) => Prior::Dirichlet(*a),
            PriorSpec::Pure(w) => {
                if let Some(i) = w.iter().position(|&x| !(x >= 0.0 && x.is_finite())) {
                    return Err(Error::invalid(
                        format!("weights[{i}]"),
                        "must be non-negative",
                    ));
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid(
                        "prior",
                        format!("weights sum to {sum}, not 1"),
                    ));
                }
                Prior::PureProfiles(w.clone())
            }
        };
        let sinks = sinklimit::sink_equilibria(game, opts.tie_tolerance);
        let dist = estimate_limit_distribution(game, &sinks, &prior, &params, &opts.config)?;
        (
            sinks,
            dist,
            json!({"kind": "simulation", "params": params, "config": opts.config}),
        )
    };
    Ok(render(&limit_to_json(
        game,
        &sinks,
        &dist,
        method,
        opts.prior.describe(),
    )))
}

fn limit_to_json(
    game: &Game,
    sinks: &SinkEquilibria,
    dist: &LimitDistribution,
    method: Value,
    prior: Value,
) -> Value {
    let (ids, tuples, labels) = sink_json(game, sinks);
    let mut by_label = Map::new();
    for (k, &p) in dist.distribution.iter().enumerate() {
        by_label.insert(sinks.label(game, k), json!(p));
    }
    json!({
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "prior": prior,
        "sinks": ids,
        "sink_profiles": tuples,
        "sink_labels": labels,
        "distribution": by_label,
        "non_converged": dist.non_converged,
        "samples": dist.samples,
        "runs": dist.runs,
        "non_converged_runs": dist.non_converged_runs,
        "converged": dist.converged,
        "tv_trace": dist.tv_trace,
        "expost_tv_trace": dist.expost_tv_trace,
    })
}

/// Parses `continuous` or `integer:<k>`.
pub fn parse_mode(mode: &str) -> Result<UtilityDistribution> {
    if mode == "continuous" {
        return Ok(UtilityDistribution::Uniform);
    }
    if let Some(k) = mode.strip_prefix("integer:") {
        let max: u32 = k
            .parse()
            .map_err(|_| Error::invalid("mode", format!("bad integer bound `{k}`")))?;
        return Ok(UtilityDistribution::Integer { max });
    }
    Err(Error::invalid(
        "mode",
        format!("unknown mode `{mode}`; expected continuous or integer:<k>"),
    ))
}

/// `strategies` holds either one count for every player or one per player.
pub fn cmd_random_game(
    seed: u64,
    players: usize,
    strategies: &[usize],
    mode: UtilityDistribution,
) -> Result<String> {
    if players == 0 {
        return Err(Error::invalid("players", "must be at least 1"));
    }
    let counts = match strategies.len() {
        1 => vec![strategies[0]; players],
        n if n == players => strategies.to_vec(),
        n => {
            return Err(Error::invalid(
                "strategies",
                format!("expected 1 or {players} counts, found {n}"),
            ))
        }
    };
    let game = random_game(seed, &counts, mode)?;
    let mut text = game.to_json();
    text.push('\n');
    Ok(text)
}

pub fn parse_br_mode(mode: &str) -> Result<BestResponseMode> {
    match mode {
        "support" => Ok(BestResponseMode::SupportRestricted),
        "global" => Ok(BestResponseMode::GlobalProjected),
        other => Err(Error::invalid(
            "br-mode",
            format!("unknown mode `{other}`; expected support or global"),
        )),
    }
}

fn check_tolerance(tol: f64) -> Result<()> {
    if tol >= 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(
            "tie-tolerance",
            "must be a non-negative finite number",
        ))
    }
}

fn render(value: &Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("json values always serialize");
    s.push('\n');
    s
}

/// Single-line diagnostic and exit code for an error.
pub fn diagnose(err: &Error) -> (String, i32) {
    let message = err.to_string().replace('\n', " ");
    if err.is_numerical() {
        (format!("error[numeric]: {message}"), 3)
    } else {
        (format!("error[input]: {message}"), 2)
    }
}
