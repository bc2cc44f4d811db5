//! Grounding specifications and their on-disk text format.
//!
//! A *grounding* bundles an [`EnvironmentModel`] with the run's starting
//! condition (how many units, born where), optional metadata about which
//! structural properties the grounding is built to exhibit, and an optional
//! proportionality constant for groundings whose population is meant to
//! track accumulated capital.
//!
//! The file format is line-oriented text, one declaration per line:
//!
//! ```text
//! # comment
//! GROUNDING v1 trapdoor
//! KEYDEPTH 0            # or: full
//! INIT 1 o0             # initial unit count and birth observation
//! PROPS P2 P5           # optional: declared properties
//! PROPORTIONAL 1        # optional: population-per-quantum constant
//! OBS o0 0 inf          # id, epoch start, epoch end (inf = open)
//! ACT a0 0 inf
//! DYN o0 a0 -> o0:1/2 o1:1/2
//! REW o0 a1 5           # reward in quanta
//! SPAWN o0 a1 1         # units spawned by the transition
//! ```
//!
//! `DYN` keys use the same text form as [`HistoryKey`]: `o3` bare, or
//! `o3@a1.o2,a0.o3` with trailing context events.  Probabilities are exact
//! rationals (`1/2`, `0.25`, `1`); each row must sum to exactly 1 or the file
//! is rejected.  [`to_text`] emits a canonical ordering, and a parse of that
//! text reproduces the original value exactly.

use std::collections::BTreeSet;
use std::path::Path;

use thiserror::Error;

use crate::dist::{format_rational, parse_rational, DiscreteDistribution};
use crate::model::{
    ActionId, Epoch, EnvironmentModel, HistoryKey, KeyDepth, ModelError, ObservationId,
    TimeIndex,
};

/// A complete, validated simulation setup.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingSpec {
    pub name: String,
    pub env: EnvironmentModel,
    /// Number of units alive at t=0.
    pub initial_units: u32,
    /// Observation those units are born into.
    pub origin: ObservationId,
    /// Property numbers (1..=9) this grounding is built to exhibit; metadata
    /// echoed into check reports, not load-bearing for simulation.
    pub declared_props: BTreeSet<u32>,
    /// For proportional groundings: population should equal `k` times the
    /// accumulated quanta at every step.
    pub proportional_k: Option<u64>,
}

impl GroundingSpec {
    pub fn new(
        name: impl Into<String>,
        env: EnvironmentModel,
        initial_units: u32,
        origin: ObservationId,
        declared_props: BTreeSet<u32>,
        proportional_k: Option<u64>,
    ) -> Result<Self, GroundingError> {
        let name = name.into();
        if initial_units == 0 {
            return Err(GroundingError::Invalid(
                "grounding must start with at least one unit".into(),
            ));
        }
        if env.observation_epoch(origin).is_none() {
            return Err(GroundingError::Model(ModelError::UnknownObservation(origin)));
        }
        if !env.observation_active(origin, 0) {
            return Err(GroundingError::Invalid(format!(
                "origin {origin} is inactive at t=0"
            )));
        }
        for p in &declared_props {
            if !(1..=9).contains(p) {
                return Err(GroundingError::Invalid(format!(
                    "declared property P{p} outside P1..P9"
                )));
            }
        }
        Ok(GroundingSpec { name, env, initial_units, origin, declared_props, proportional_k })
    }

    /// Walk everything reachable within `t_max` steps so missing dynamics or
    /// inactive supports surface at load time rather than mid-run.
    pub fn validate_reachable(&self, t_max: TimeIndex) -> Result<(), ModelError> {
        if self.env.is_markov() {
            crate::model::reachable_observations_by_time(&self.env, self.origin, t_max)?;
        } else {
            let root = crate::model::History::empty(self.origin, 0);
            crate::model::enumerate_realizable_histories(
                &crate::model::UniformPolicy,
                &self.env,
                &root,
                t_max as usize,
                1_000_000,
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid grounding: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn fail(line: usize, msg: impl Into<String>) -> GroundingError {
    GroundingError::Parse { line, msg: msg.into() }
}

fn parse_prefixed(line: usize, tok: &str, prefix: char) -> Result<u32, GroundingError> {
    tok.strip_prefix(prefix)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| fail(line, format!("expected {prefix}<id>, got {tok:?}")))
}

fn parse_time(line: usize, tok: &str) -> Result<Option<TimeIndex>, GroundingError> {
    if tok == "inf" {
        return Ok(None);
    }
    tok.parse()
        .map(Some)
        .map_err(|_| fail(line, format!("expected a time or `inf`, got {tok:?}")))
}

/// Parse a grounding from its text form.
pub fn from_text(text: &str) -> Result<GroundingSpec, GroundingError> {
    let mut name: Option<String> = None;
    let mut key_depth = KeyDepth::Last(0);
    let mut init: Option<(u32, ObservationId)> = None;
    let mut declared = BTreeSet::new();
    let mut proportional = None;
    let mut observations = Vec::new();
    let mut actions = Vec::new();
    let mut dynamics = Vec::new();
    let mut rewards = Vec::new();
    let mut spawns = Vec::new();
    let mut seen_obs = BTreeSet::new();
    let mut seen_act = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks[0] {
            "GROUNDING" => {
                if toks.len() != 3 || toks[1] != "v1" {
                    return Err(fail(ln, "expected `GROUNDING v1 <name>`"));
                }
                if name.replace(toks[2].to_string()).is_some() {
                    return Err(fail(ln, "duplicate GROUNDING line"));
                }
            }
            "KEYDEPTH" => {
                if toks.len() != 2 {
                    return Err(fail(ln, "expected `KEYDEPTH <n|full>`"));
                }
                key_depth = if toks[1] == "full" {
                    KeyDepth::Full
                } else {
                    KeyDepth::Last(
                        toks[1]
                            .parse()
                            .map_err(|_| fail(ln, "key depth must be a number or `full`"))?,
                    )
                };
            }
            "INIT" => {
                if toks.len() != 3 {
                    return Err(fail(ln, "expected `INIT <count> o<id>`"));
                }
                let count = toks[1]
                    .parse()
                    .map_err(|_| fail(ln, "initial unit count must be a number"))?;
                let origin = ObservationId(parse_prefixed(ln, toks[2], 'o')?);
                if init.replace((count, origin)).is_some() {
                    return Err(fail(ln, "duplicate INIT line"));
                }
            }
            "PROPS" => {
                for tok in &toks[1..] {
                    let n = tok
                        .strip_prefix('P')
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| fail(ln, format!("expected P<n>, got {tok:?}")))?;
                    declared.insert(n);
                }
            }
            "PROPORTIONAL" => {
                if toks.len() != 2 {
                    return Err(fail(ln, "expected `PROPORTIONAL <k>`"));
                }
                proportional = Some(
                    toks[1]
                        .parse()
                        .map_err(|_| fail(ln, "proportionality constant must be a number"))?,
                );
            }
            "OBS" | "ACT" => {
                if toks.len() != 4 {
                    return Err(fail(ln, format!("expected `{} <id> <start> <end|inf>`", toks[0])));
                }
                let start = parse_time(ln, toks[2])?
                    .ok_or_else(|| fail(ln, "epoch start cannot be `inf`"))?;
                let end = parse_time(ln, toks[3])?;
                let epoch = Epoch::new(start, end).map_err(|e| fail(ln, e.to_string()))?;
                if toks[0] == "OBS" {
                    let id = ObservationId(parse_prefixed(ln, toks[1], 'o')?);
                    if !seen_obs.insert(id) {
                        return Err(fail(ln, format!("duplicate observation {id}")));
                    }
                    observations.push((id, epoch));
                } else {
                    let id = ActionId(parse_prefixed(ln, toks[1], 'a')?);
                    if !seen_act.insert(id) {
                        return Err(fail(ln, format!("duplicate action {id}")));
                    }
                    actions.push((id, epoch));
                }
            }
            "DYN" => {
                if toks.len() < 5 || toks[3] != "->" {
                    return Err(fail(ln, "expected `DYN <key> a<id> -> o<id>:<prob> ...`"));
                }
                let key: HistoryKey =
                    toks[1].parse().map_err(|e| fail(ln, format!("{e}")))?;
                let action = ActionId(parse_prefixed(ln, toks[2], 'a')?);
                let mut entries = Vec::new();
                for tok in &toks[4..] {
                    let (obs_tok, prob_tok) = tok
                        .split_once(':')
                        .ok_or_else(|| fail(ln, format!("expected o<id>:<prob>, got {tok:?}")))?;
                    let obs = ObservationId(parse_prefixed(ln, obs_tok, 'o')?);
                    let prob =
                        parse_rational(prob_tok).map_err(|e| fail(ln, e.to_string()))?;
                    entries.push((obs, prob));
                }
                let row = DiscreteDistribution::new(entries)
                    .map_err(|e| fail(ln, format!("bad outcome distribution: {e}")))?;
                dynamics.push(((key, action), row));
            }
            "REW" | "SPAWN" => {
                if toks.len() != 4 {
                    return Err(fail(ln, format!("expected `{} o<id> a<id> <n>`", toks[0])));
                }
                let obs = ObservationId(parse_prefixed(ln, toks[1], 'o')?);
                let action = ActionId(parse_prefixed(ln, toks[2], 'a')?);
                if toks[0] == "REW" {
                    let k: u64 = toks[3]
                        .parse()
                        .map_err(|_| fail(ln, "reward must be a non-negative integer"))?;
                    rewards.push(((obs, action), k));
                } else {
                    let n: u32 = toks[3]
                        .parse()
                        .map_err(|_| fail(ln, "spawn count must be a non-negative integer"))?;
                    spawns.push(((obs, action), n));
                }
            }
            other => return Err(fail(ln, format!("unknown directive {other:?}"))),
        }
    }

    let name = name.ok_or_else(|| fail(0, "missing GROUNDING line"))?;
    let (initial_units, origin) =
        init.ok_or_else(|| fail(0, "missing INIT line"))?;
    let env = EnvironmentModel::new(observations, actions, key_depth, dynamics, rewards, spawns)?;
    GroundingSpec::new(name, env, initial_units, origin, declared, proportional)
}

fn epoch_text(e: Epoch) -> String {
    match e.end {
        Some(end) => format!("{} {}", e.start, end),
        None => format!("{} inf", e.start),
    }
}

/// Canonical text form; parsing it reproduces the value exactly.
pub fn to_text(spec: &GroundingSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("GROUNDING v1 {}\n", spec.name));
    match spec.env.key_depth() {
        KeyDepth::Last(d) => out.push_str(&format!("KEYDEPTH {d}\n")),
        KeyDepth::Full => out.push_str("KEYDEPTH full\n"),
    }
    out.push_str(&format!("INIT {} {}\n", spec.initial_units, spec.origin));
    if !spec.declared_props.is_empty() {
        let props: Vec<String> = spec.declared_props.iter().map(|p| format!("P{p}")).collect();
        out.push_str(&format!("PROPS {}\n", props.join(" ")));
    }
    if let Some(k) = spec.proportional_k {
        out.push_str(&format!("PROPORTIONAL {k}\n"));
    }
    for o in spec.env.observation_ids() {
        let e = spec.env.observation_epoch(o).expect("catalog observation");
        out.push_str(&format!("OBS {} {}\n", o, epoch_text(e)));
    }
    for a in spec.env.action_ids() {
        let e = spec.env.action_epoch(a).expect("catalog action");
        out.push_str(&format!("ACT {} {}\n", a, epoch_text(e)));
    }
    for ((key, action), row) in spec.env.dynamics_entries() {
        let cells: Vec<String> = row
            .entries()
            .iter()
            .map(|(o, p)| format!("{}:{}", o, format_rational(p)))
            .collect();
        out.push_str(&format!("DYN {} {} -> {}\n", key, action, cells.join(" ")));
    }
    for ((o, a), k) in spec.env.reward_entries() {
        out.push_str(&format!("REW {} {} {}\n", o, a, k));
    }
    for ((o, a), n) in spec.env.spawn_entries() {
        out.push_str(&format!("SPAWN {} {} {}\n", o, a, n));
    }
    out
}

pub fn load_file(path: &Path) -> Result<GroundingSpec, GroundingError> {
    let text = std::fs::read_to_string(path)?;
    from_text(&text)
}

pub fn save_file(spec: &GroundingSpec, path: &Path) -> Result<(), GroundingError> {
    std::fs::write(path, to_text(spec))?;
    Ok(())
}
