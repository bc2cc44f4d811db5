//! Histories, environments, policies, and realizability.
//!
//! A *history* is a unit's private log: a birth observation plus the
//! `(action, observation)` events recorded since.  Time is global — a history
//! knows when its unit was born, so "position in the log" and "wall clock"
//! are both recoverable.
//!
//! An *environment* maps (history, action) to an exact distribution over the
//! next observation.  Dynamics tables are keyed on a bounded suffix of the
//! history (see [`KeyDepth`]); observation and action *epochs* make the
//! catalog itself time-varying, which is how actions or observations can
//! exist at some times and not others.
//!
//! A history is *realizable* under (policy, environment) when every step in
//! it has strictly positive probability under both.  Because probabilities
//! are exact rationals, "strictly positive" is a precise question, and
//! [`enumerate_realizable_histories`] answers it by breadth-first expansion.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{DiscreteDistribution, DistError};
use crate::rng::StreamRng;

/// Global simulation clock, starting at 0.
pub type TimeIndex = u64;

/// Identifier of an observation in a grounding's catalog.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ObservationId(pub u32);

/// Identifier of an action in a grounding's catalog.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ActionId(pub u32);

impl fmt::Display for ObservationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Half-open activity window `[start, end)`; `end = None` means "forever".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Epoch {
    pub start: TimeIndex,
    pub end: Option<TimeIndex>,
}

impl Epoch {
    pub const ALWAYS: Epoch = Epoch { start: 0, end: None };

    pub fn new(start: TimeIndex, end: Option<TimeIndex>) -> Result<Self, ModelError> {
        if let Some(e) = end {
            if e <= start {
                return Err(ModelError::EmptyEpoch { start, end: e });
            }
        }
        Ok(Epoch { start, end })
    }

    pub fn from_start(start: TimeIndex) -> Self {
        Epoch { start, end: None }
    }

    pub fn contains(&self, t: TimeIndex) -> bool {
        t >= self.start && self.end.map_or(true, |e| t < e)
    }
}

/// One recorded step: the action taken, then the observation that followed.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct HistoryEvent {
    pub action: ActionId,
    pub observation: ObservationId,
}

impl fmt::Display for HistoryEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.action, self.observation)
    }
}

/// A unit's private log.  Immutable: extension produces a new value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct History {
    /// Observation the unit was born into.
    pub origin: ObservationId,
    /// Global time of birth; the unit saw `origin` at this time.
    pub birth_time: TimeIndex,
    /// Events recorded since birth, oldest first.
    pub events: Vec<HistoryEvent>,
}

impl History {
    /// Fresh history for a unit born into `origin` at `birth_time`.
    pub fn empty(origin: ObservationId, birth_time: TimeIndex) -> Self {
        History { origin, birth_time, events: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Global time after all recorded events.
    pub fn current_time(&self) -> TimeIndex {
        self.birth_time + self.events.len() as TimeIndex
    }

    /// Observation the unit currently sits in.
    pub fn current_observation(&self) -> ObservationId {
        self.events.last().map(|e| e.observation).unwrap_or(self.origin)
    }

    /// New history with one more event appended.
    pub fn with_event(&self, action: ActionId, observation: ObservationId) -> History {
        let mut events = Vec::with_capacity(self.events.len() + 1);
        events.extend_from_slice(&self.events);
        events.push(HistoryEvent { action, observation });
        History { origin: self.origin, birth_time: self.birth_time, events }
    }

    /// Concatenate a suffix whose anchor matches this history's endpoint.
    pub fn concat(&self, suffix: &History) -> Result<History, ModelError> {
        if suffix.origin != self.current_observation()
            || suffix.birth_time != self.current_time()
        {
            return Err(ModelError::SuffixAnchorMismatch);
        }
        let mut events = self.events.clone();
        events.extend_from_slice(&suffix.events);
        Ok(History { origin: self.origin, birth_time: self.birth_time, events })
    }

    /// Dynamics key at the given truncation depth: the current observation
    /// plus the most recent events in the window.
    pub fn key(&self, depth: KeyDepth) -> HistoryKey {
        let take = match depth {
            KeyDepth::Last(d) => (d as usize).min(self.events.len()),
            KeyDepth::Full => self.events.len(),
        };
        HistoryKey {
            obs: self.current_observation(),
            context: self.events[self.events.len() - take..].to_vec(),
        }
    }
}

impl fmt::Display for History {
    /// `o0@3` for an empty history (origin, birth time); events appended as
    /// `:a1.o2,a0.o1`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.origin, self.birth_time)?;
        for (i, e) in self.events.iter().enumerate() {
            write!(f, "{}{}", if i == 0 { ":" } else { "," }, e)?;
        }
        Ok(())
    }
}

/// How much of a history the dynamics table conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyDepth {
    /// The current observation plus at most this many trailing events.
    /// `Last(0)` is the memoryless case: dynamics depend on the current
    /// observation only.
    Last(u32),
    /// The entire event list (origin excluded once events exist).
    Full,
}

/// Truncated-history key a dynamics table is indexed by.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HistoryKey {
    /// Current observation at the query point.
    pub obs: ObservationId,
    /// Most recent events inside the truncation window, oldest first.  When
    /// non-empty, the final event's observation equals `obs`.
    pub context: Vec<HistoryEvent>,
}

impl HistoryKey {
    /// Memoryless key: current observation only.
    pub fn bare(obs: ObservationId) -> Self {
        HistoryKey { obs, context: Vec::new() }
    }
}

impl fmt::Display for HistoryKey {
    /// `o3` when the context is empty, else `o3@a1.o3` (events comma-joined).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.obs)?;
        for (i, e) in self.context.iter().enumerate() {
            write!(f, "{}{}", if i == 0 { "@" } else { "," }, e)?;
        }
        Ok(())
    }
}

fn parse_id(s: &str, prefix: char) -> Result<u32, KeyParseError> {
    let body = s
        .strip_prefix(prefix)
        .ok_or_else(|| KeyParseError(s.to_string()))?;
    body.parse().map_err(|_| KeyParseError(s.to_string()))
}

impl FromStr for HistoryKey {
    type Err = KeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (obs_part, ctx_part) = match s.split_once('@') {
            Some((o, c)) => (o, Some(c)),
            None => (s, None),
        };
        let obs = ObservationId(parse_id(obs_part.trim(), 'o')?);
        let mut context = Vec::new();
        if let Some(ctx) = ctx_part {
            for ev in ctx.split(',') {
                let (a, o) = ev
                    .trim()
                    .split_once('.')
                    .ok_or_else(|| KeyParseError(s.to_string()))?;
                context.push(HistoryEvent {
                    action: ActionId(parse_id(a.trim(), 'a')?),
                    observation: ObservationId(parse_id(o.trim(), 'o')?),
                });
            }
        }
        Ok(HistoryKey { obs, context })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not a history key: {0:?}")]
pub struct KeyParseError(pub String);

/// Everything that can go wrong inside the model layer.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unknown observation {0}")]
    UnknownObservation(ObservationId),
    #[error("observation {obs} inactive at t={t}")]
    InactiveObservation { obs: ObservationId, t: TimeIndex },
    #[error("unknown action {0}")]
    UnknownAction(ActionId),
    #[error("action {action} inactive at t={t}")]
    InactiveAction { action: ActionId, t: TimeIndex },
    #[error("action {action} not available from {obs} at t={t}")]
    UnavailableAction { obs: ObservationId, action: ActionId, t: TimeIndex },
    #[error("no dynamics entry for key {key} and action {action}")]
    MissingDynamics { key: HistoryKey, action: ActionId },
    #[error("dynamics support contains {obs}, inactive at its emission time t={t}")]
    InactiveOutcome { obs: ObservationId, t: TimeIndex },
    #[error("enumeration exceeded the node cap of {cap}")]
    BudgetExceeded { cap: usize },
    #[error("prefix is not realizable under the given policy and environment")]
    UnrealizablePrefix,
    #[error("no action available to the policy")]
    EmptyActionSet,
    #[error("policy placed probability on unavailable action {action}")]
    PolicySupport { action: ActionId },
    #[error("suffix anchor does not match prefix endpoint")]
    SuffixAnchorMismatch,
    #[error("epoch [{start}, {end}) is empty")]
    EmptyEpoch { start: TimeIndex, end: TimeIndex },
    #[error("dynamics key context longer than declared key depth")]
    KeyDeeperThanDepth,
    #[error("operation requires a memoryless (depth-0) environment")]
    RequiresMarkov,
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// Result of one environment transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// Observation emitted at t+1.
    pub observation: ObservationId,
    /// Reward as an integer count of currency quanta.
    pub reward_k: u64,
    /// Number of fresh units this transition creates.
    pub spawn_count: u32,
}

/// Tabular environment: catalogs with activity epochs, suffix-keyed dynamics,
/// and integer reward/spawn tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvironmentModel {
    observations: BTreeMap<ObservationId, Epoch>,
    actions: BTreeMap<ActionId, Epoch>,
    key_depth: KeyDepth,
    dynamics: BTreeMap<(HistoryKey, ActionId), DiscreteDistribution<ObservationId>>,
    rewards: BTreeMap<(ObservationId, ActionId), u64>,
    spawns: BTreeMap<(ObservationId, ActionId), u32>,
    /// Derived: observation -> actions with at least one dynamics entry there.
    affords: BTreeMap<ObservationId, BTreeSet<ActionId>>,
}

impl EnvironmentModel {
    pub fn new(
        observations: Vec<(ObservationId, Epoch)>,
        actions: Vec<(ActionId, Epoch)>,
        key_depth: KeyDepth,
        dynamics: Vec<((HistoryKey, ActionId), DiscreteDistribution<ObservationId>)>,
        rewards: Vec<((ObservationId, ActionId), u64)>,
        spawns: Vec<((ObservationId, ActionId), u32)>,
    ) -> Result<Self, ModelError> {
        let observations: BTreeMap<_, _> = observations.into_iter().collect();
        let actions: BTreeMap<_, _> = actions.into_iter().collect();
        let known_obs = |o: ObservationId| -> Result<(), ModelError> {
            if observations.contains_key(&o) {
                Ok(())
            } else {
                Err(ModelError::UnknownObservation(o))
            }
        };
        let known_act = |a: ActionId| -> Result<(), ModelError> {
            if actions.contains_key(&a) {
                Ok(())
            } else {
                Err(ModelError::UnknownAction(a))
            }
        };

        let mut dyn_map = BTreeMap::new();
        let mut affords: BTreeMap<ObservationId, BTreeSet<ActionId>> = BTreeMap::new();
        for ((key, act), row) in dynamics {
            known_obs(key.obs)?;
            known_act(act)?;
            if let KeyDepth::Last(d) = key_depth {
                if key.context.len() > d as usize {
                    return Err(ModelError::KeyDeeperThanDepth);
                }
            }
            for ev in &key.context {
                known_obs(ev.observation)?;
                known_act(ev.action)?;
            }
            for (o, _) in row.entries() {
                known_obs(*o)?;
            }
            affords.entry(key.obs).or_default().insert(act);
            dyn_map.insert((key, act), row);
        }
        for &(o, a) in rewards.iter().map(|(k, _)| k) {
            known_obs(o)?;
            known_act(a)?;
        }
        for &(o, a) in spawns.iter().map(|(k, _)| k) {
            known_obs(o)?;
            known_act(a)?;
        }
        Ok(EnvironmentModel {
            observations,
            actions,
            key_depth,
            dynamics: dyn_map,
            rewards: rewards.into_iter().collect(),
            spawns: spawns.into_iter().collect(),
            affords,
        })
    }

    pub fn key_depth(&self) -> KeyDepth {
        self.key_depth
    }

    /// Memoryless environments admit exact graph analyses.
    pub fn is_markov(&self) -> bool {
        self.key_depth == KeyDepth::Last(0)
    }

    pub fn observation_ids(&self) -> impl Iterator<Item = ObservationId> + '_ {
        self.observations.keys().copied()
    }

    pub fn action_ids(&self) -> impl Iterator<Item = ActionId> + '_ {
        self.actions.keys().copied()
    }

    pub fn observation_epoch(&self, o: ObservationId) -> Option<Epoch> {
        self.observations.get(&o).copied()
    }

    pub fn action_epoch(&self, a: ActionId) -> Option<Epoch> {
        self.actions.get(&a).copied()
    }

    pub fn observation_active(&self, o: ObservationId, t: TimeIndex) -> bool {
        self.observations.get(&o).is_some_and(|e| e.contains(t))
    }

    pub fn action_active(&self, a: ActionId, t: TimeIndex) -> bool {
        self.actions.get(&a).is_some_and(|e| e.contains(t))
    }

    pub fn dynamics_entries(
        &self,
    ) -> impl Iterator<Item = (&(HistoryKey, ActionId), &DiscreteDistribution<ObservationId>)>
    {
        self.dynamics.iter()
    }

    pub fn dynamics_row(
        &self,
        key: &HistoryKey,
        action: ActionId,
    ) -> Option<&DiscreteDistribution<ObservationId>> {
        self.dynamics.get(&(key.clone(), action))
    }

    pub fn reward_k(&self, obs: ObservationId, action: ActionId) -> u64 {
        self.rewards.get(&(obs, action)).copied().unwrap_or(0)
    }

    pub fn reward_entries(&self) -> impl Iterator<Item = (&(ObservationId, ActionId), &u64)> {
        self.rewards.iter()
    }

    pub fn spawn_count(&self, obs: ObservationId, action: ActionId) -> u32 {
        self.spawns.get(&(obs, action)).copied().unwrap_or(0)
    }

    pub fn spawn_entries(&self) -> impl Iterator<Item = (&(ObservationId, ActionId), &u32)> {
        self.spawns.iter()
    }

    /// Actions an observation affords regardless of time (table scan only).
    pub fn afforded_actions(&self, o: ObservationId) -> BTreeSet<ActionId> {
        self.affords.get(&o).cloned().unwrap_or_default()
    }

    /// Actions takeable from observation `o` at time `t`: afforded by the
    /// dynamics table and active per the action's epoch.
    pub fn available_actions(
        &self,
        o: ObservationId,
        t: TimeIndex,
    ) -> Result<BTreeSet<ActionId>, ModelError> {
        let epoch = self
            .observations
            .get(&o)
            .ok_or(ModelError::UnknownObservation(o))?;
        if !epoch.contains(t) {
            return Err(ModelError::InactiveObservation { obs: o, t });
        }
        Ok(self
            .afforded_actions(o)
            .into_iter()
            .filter(|a| self.action_active(*a, t))
            .collect())
    }

    /// The exact next-observation distribution for taking `action` at the
    /// end of `history`: validates availability, looks up the dynamics row
    /// for the history's key, and checks the row's whole support is active
    /// at the emission time.
    pub fn transition_distribution(
        &self,
        history: &History,
        action: ActionId,
    ) -> Result<&DiscreteDistribution<ObservationId>, ModelError> {
        let t = history.current_time();
        let obs = history.current_observation();
        let available = self.available_actions(obs, t)?;
        if !available.contains(&action) {
            if !self.actions.contains_key(&action) {
                return Err(ModelError::UnknownAction(action));
            }
            if !self.action_active(action, t) {
                return Err(ModelError::InactiveAction { action, t });
            }
            return Err(ModelError::UnavailableAction { obs, action, t });
        }
        let key = history.key(self.key_depth);
        let row = self
            .dynamics
            .get(&(key.clone(), action))
            .ok_or(ModelError::MissingDynamics { key, action })?;
        for o in row.support() {
            if !self.observation_active(*o, t + 1) {
                return Err(ModelError::InactiveOutcome { obs: *o, t: t + 1 });
            }
        }
        Ok(row)
    }

    /// One transition: sample from [`Self::transition_distribution`] and
    /// attach the reward and spawn count of the (observation, action) pair.
    /// Deterministic given the rng stream.
    pub fn env_step(
        &self,
        history: &History,
        action: ActionId,
        rng: &mut StreamRng,
    ) -> Result<StepOutcome, ModelError> {
        let obs = history.current_observation();
        let row = self.transition_distribution(history, action)?;
        let observation = *row.sample(rng);
        Ok(StepOutcome {
            observation,
            reward_k: self.reward_k(obs, action),
            spawn_count: self.spawn_count(obs, action),
        })
    }
}

/// A per-unit policy: exact action distribution given the unit's history and
/// the actions currently available.  Implementations must be deterministic
/// functions of their inputs and must place probability only on available
/// actions.
pub trait Policy {
    fn action_distribution(
        &self,
        history: &History,
        available: &BTreeSet<ActionId>,
    ) -> Result<DiscreteDistribution<ActionId>, ModelError>;
}

/// Uniform exploration: equal probability on every available action.  This is
/// the maximal-support policy, so realizability under it coincides with
/// reachability under the environment alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl Policy for UniformPolicy {
    fn action_distribution(
        &self,
        _history: &History,
        available: &BTreeSet<ActionId>,
    ) -> Result<DiscreteDistribution<ActionId>, ModelError> {
        if available.is_empty() {
            return Err(ModelError::EmptyActionSet);
        }
        let items: Vec<ActionId> = available.iter().copied().collect();
        Ok(DiscreteDistribution::uniform(&items)?)
    }
}

/// Validated policy call: the returned support must sit inside `available`.
fn checked_policy_distribution(
    policy: &dyn Policy,
    history: &History,
    available: &BTreeSet<ActionId>,
) -> Result<DiscreteDistribution<ActionId>, ModelError> {
    let dist = policy.action_distribution(history, available)?;
    for a in dist.support() {
        if !available.contains(a) {
            return Err(ModelError::PolicySupport { action: *a });
        }
    }
    Ok(dist)
}

/// Exact probability of a history under (policy, environment): the product of
/// policy and dynamics factors along it.  Zero means "not realizable".
pub fn history_probability(
    policy: &dyn Policy,
    env: &EnvironmentModel,
    history: &History,
) -> Result<BigRational, ModelError> {
    let mut prefix = History::empty(history.origin, history.birth_time);
    let mut prob = BigRational::one();
    for ev in &history.events {
        let t = prefix.current_time();
        let obs = prefix.current_observation();
        let available = env.available_actions(obs, t)?;
        let p_act = if available.contains(&ev.action) {
            checked_policy_distribution(policy, &prefix, &available)?
                .probability(&ev.action)
        } else {
            BigRational::zero()
        };
        if p_act.is_zero() {
            return Ok(BigRational::zero());
        }
        let key = prefix.key(env.key_depth());
        let p_obs = match env.dynamics_row(&key, ev.action) {
            Some(row) if env.observation_active(ev.observation, t + 1) => {
                row.probability(&ev.observation)
            }
            _ => BigRational::zero(),
        };
        if p_obs.is_zero() {
            return Ok(BigRational::zero());
        }
        prob *= p_act * p_obs;
        prefix = prefix.with_event(ev.action, ev.observation);
    }
    Ok(prob)
}

/// Breadth-first enumeration of every realizable history that extends `root`
/// by at most `depth` events (the root itself included).  Results are sorted.
///
/// Realizability is exact: a child is expanded only when both its policy
/// factor and its dynamics factor are strictly positive rationals.  The
/// traversal aborts with [`ModelError::BudgetExceeded`] once more than
/// `node_cap` histories have been generated.
pub fn enumerate_realizable_histories(
    policy: &dyn Policy,
    env: &EnvironmentModel,
    root: &History,
    depth: usize,
    node_cap: usize,
) -> Result<Vec<History>, ModelError> {
    let mut out: Vec<History> = Vec::new();
    let mut frontier = vec![root.clone()];
    let mut nodes = 1usize;
    if nodes > node_cap {
        return Err(ModelError::BudgetExceeded { cap: node_cap });
    }
    for _level in 0..=depth {
        out.extend(frontier.iter().cloned());
        if _level == depth {
            break;
        }
        let mut next = Vec::new();
        for h in &frontier {
            let t = h.current_time();
            let obs = h.current_observation();
            let available = env.available_actions(obs, t)?;
            if available.is_empty() {
                continue; // dead end: nothing to extend with
            }
            let action_dist = checked_policy_distribution(policy, h, &available)?;
            for action in action_dist.support().copied().collect::<Vec<_>>() {
                let key = h.key(env.key_depth());
                let row = env
                    .dynamics_row(&key, action)
                    .ok_or(ModelError::MissingDynamics { key, action })?;
                for o in row.support() {
                    if !env.observation_active(*o, t + 1) {
                        return Err(ModelError::InactiveOutcome { obs: *o, t: t + 1 });
                    }
                    nodes += 1;
                    if nodes > node_cap {
                        return Err(ModelError::BudgetExceeded { cap: node_cap });
                    }
                    next.push(h.with_event(action, *o));
                }
            }
        }
        frontier = next;
    }
    out.sort();
    Ok(out)
}

/// Realizable *suffixes* of `prefix`: histories anchored at the prefix's
/// endpoint whose concatenation with it is realizable, up to `depth` extra
/// events.  The empty suffix is always present.  Errors with
/// [`ModelError::UnrealizablePrefix`] when the prefix itself has probability
/// zero.
pub fn realizable_suffixes(
    policy: &dyn Policy,
    env: &EnvironmentModel,
    prefix: &History,
    depth: usize,
    node_cap: usize,
) -> Result<Vec<History>, ModelError> {
    if history_probability(policy, env, prefix)?.is_zero() {
        return Err(ModelError::UnrealizablePrefix);
    }
    let full = enumerate_realizable_histories(policy, env, prefix, depth, node_cap)?;
    let anchor_obs = prefix.current_observation();
    let anchor_time = prefix.current_time();
    let cut = prefix.len();
    Ok(full
        .into_iter()
        .map(|h| History {
            origin: anchor_obs,
            birth_time: anchor_time,
            events: h.events[cut..].to_vec(),
        })
        .collect())
}

/// For memoryless environments: the set of observations occupiable at each
/// time `0..=t_max`, starting from `origin` at time 0, under maximal-support
/// (uniform) exploration.  Exact because depth-0 dynamics make occupancy a
/// function of (observation, time) alone.
pub fn reachable_observations_by_time(
    env: &EnvironmentModel,
    origin: ObservationId,
    t_max: TimeIndex,
) -> Result<Vec<BTreeSet<ObservationId>>, ModelError> {
    if !env.is_markov() {
        return Err(ModelError::RequiresMarkov);
    }
    if env.observation_epoch(origin).is_none() {
        return Err(ModelError::UnknownObservation(origin));
    }
    let mut levels: Vec<BTreeSet<ObservationId>> = Vec::with_capacity(t_max as usize + 1);
    let mut current = BTreeSet::from([origin]);
    for t in 0..=t_max {
        levels.push(current.clone());
        if t == t_max {
            break;
        }
        let mut next = BTreeSet::new();
        for &o in &current {
            let available = env.available_actions(o, t)?;
            for a in available {
                let key = HistoryKey::bare(o);
                let row = env
                    .dynamics_row(&key, a)
                    .ok_or(ModelError::MissingDynamics { key: HistoryKey::bare(o), action: a })?;
                for o2 in row.support() {
                    if !env.observation_active(*o2, t + 1) {
                        return Err(ModelError::InactiveOutcome { obs: *o2, t: t + 1 });
                    }
                    next.insert(*o2);
                }
            }
        }
        current = next;
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn o(i: u32) -> ObservationId {
        ObservationId(i)
    }

    fn a(i: u32) -> ActionId {
        ActionId(i)
    }

    fn half() -> BigRational {
        BigRational::new(BigInt::from(1), BigInt::from(2))
    }

    fn uniform_row(items: &[u32]) -> DiscreteDistribution<ObservationId> {
        DiscreteDistribution::uniform(&items.iter().map(|&i| o(i)).collect::<Vec<_>>())
            .unwrap()
    }

    /// Two observations, two actions, every transition uniform over both
    /// observations.  The canonical "everything is always possible" world.
    fn full_support_env() -> EnvironmentModel {
        let mut dynamics = Vec::new();
        for obs in [0u32, 1] {
            for act in [0u32, 1] {
                dynamics.push(((HistoryKey::bare(o(obs)), a(act)), uniform_row(&[0, 1])));
            }
        }
        EnvironmentModel::new(
            vec![(o(0), Epoch::ALWAYS), (o(1), Epoch::ALWAYS)],
            vec![(a(0), Epoch::ALWAYS), (a(1), Epoch::ALWAYS)],
            KeyDepth::Last(0),
            dynamics,
            vec![((o(1), a(1)), 1)],
            vec![],
        )
        .unwrap()
    }

    /// o0 forever; o1 and a1 only from t=5 on.  a1 moves o0 -> o1.
    fn epoch_env() -> EnvironmentModel {
        EnvironmentModel::new(
            vec![(o(0), Epoch::ALWAYS), (o(1), Epoch::from_start(5))],
            vec![(a(0), Epoch::ALWAYS), (a(1), Epoch::from_start(5))],
            KeyDepth::Last(0),
            vec![
                ((HistoryKey::bare(o(0)), a(0)), uniform_row(&[0])),
                ((HistoryKey::bare(o(0)), a(1)), uniform_row(&[1])),
                ((HistoryKey::bare(o(1)), a(0)), uniform_row(&[0])),
                ((HistoryKey::bare(o(1)), a(1)), uniform_row(&[1])),
            ],
            vec![],
            vec![],
        )
        .unwrap()
    }

    /// o0 with a leave action into absorbing o1 (only a0 there).
    fn absorbing_env() -> EnvironmentModel {
        EnvironmentModel::new(
            vec![(o(0), Epoch::ALWAYS), (o(1), Epoch::ALWAYS)],
            vec![(a(0), Epoch::ALWAYS), (a(1), Epoch::ALWAYS)],
            KeyDepth::Last(0),
            vec![
                ((HistoryKey::bare(o(0)), a(0)), uniform_row(&[0])),
                ((HistoryKey::bare(o(0)), a(1)), uniform_row(&[1])),
                ((HistoryKey::bare(o(1)), a(0)), uniform_row(&[1])),
            ],
            vec![((o(0), a(1)), 5)],
            vec![((o(0), a(1)), 1)],
        )
        .unwrap()
    }

    #[test]
    fn history_clocks_and_observation() {
        let h = History::empty(o(3), 7);
        assert_eq!(h.current_time(), 7);
        assert_eq!(h.current_observation(), o(3));
        let h2 = h.with_event(a(1), o(0));
        assert_eq!(h2.current_time(), 8);
        assert_eq!(h2.current_observation(), o(0));
        assert_eq!(h.len(), 0, "append must not mutate the source");
        assert_eq!(h2.len(), 1);
    }

    #[test]
    fn history_concat_checks_anchor() {
        let h = History::empty(o(0), 0).with_event(a(0), o(1));
        let good = History::empty(o(1), 1).with_event(a(1), o(0));
        let joined = h.concat(&good).unwrap();
        assert_eq!(joined.len(), 2);
        assert_eq!(joined.current_observation(), o(0));
        let bad = History::empty(o(0), 1);
        assert_eq!(h.concat(&bad).unwrap_err(), ModelError::SuffixAnchorMismatch);
        let bad_time = History::empty(o(1), 2);
        assert_eq!(h.concat(&bad_time).unwrap_err(), ModelError::SuffixAnchorMismatch);
    }

    #[test]
    fn key_truncation_depths() {
        let h = History::empty(o(0), 0)
            .with_event(a(0), o(1))
            .with_event(a(1), o(2))
            .with_event(a(0), o(1));
        let k0 = h.key(KeyDepth::Last(0));
        assert_eq!(k0, HistoryKey::bare(o(1)));
        let k1 = h.key(KeyDepth::Last(1));
        assert_eq!(k1.obs, o(1));
        assert_eq!(k1.context, vec![HistoryEvent { action: a(0), observation: o(1) }]);
        let kf = h.key(KeyDepth::Full);
        assert_eq!(kf.context.len(), 3);
        // Depth larger than the history takes everything.
        let kbig = h.key(KeyDepth::Last(10));
        assert_eq!(kbig, kf);
        // Same last event, different earlier prefixes: same depth-1 key.
        let h2 = History::empty(o(2), 0).with_event(a(1), o(2)).with_event(a(0), o(1));
        assert_eq!(h2.key(KeyDepth::Last(1)), k1);
    }

    #[test]
    fn empty_history_key_is_origin() {
        let h = History::empty(o(4), 9);
        assert_eq!(h.key(KeyDepth::Last(3)), HistoryKey::bare(o(4)));
        assert_eq!(h.key(KeyDepth::Full), HistoryKey::bare(o(4)));
    }

    #[test]
    fn key_display_and_parse_round_trip() {
        let k = HistoryKey {
            obs: o(3),
            context: vec![
                HistoryEvent { action: a(1), observation: o(2) },
                HistoryEvent { action: a(0), observation: o(3) },
            ],
        };
        let s = k.to_string();
        assert_eq!(s, "o3@a1.o2,a0.o3");
        assert_eq!(s.parse::<HistoryKey>().unwrap(), k);
        assert_eq!("o7".parse::<HistoryKey>().unwrap(), HistoryKey::bare(o(7)));
        assert!("x7".parse::<HistoryKey>().is_err());
        assert!("o7@a1".parse::<HistoryKey>().is_err());
    }

    #[test]
    fn epoch_membership_is_half_open() {
        let e = Epoch::new(2, Some(5)).unwrap();
        assert!(!e.contains(1));
        assert!(e.contains(2));
        assert!(e.contains(4));
        assert!(!e.contains(5));
        assert!(Epoch::ALWAYS.contains(0));
        assert!(Epoch::ALWAYS.contains(u64::MAX));
        assert!(matches!(
            Epoch::new(3, Some(3)),
            Err(ModelError::EmptyEpoch { .. })
        ));
    }

    #[test]
    fn available_actions_respects_epochs_across_boundary() {
        let env = epoch_env();
        for t in 0..=10u64 {
            let avail = env.available_actions(o(0), t).unwrap();
            if t < 5 {
                assert_eq!(avail, BTreeSet::from([a(0)]), "t={t}");
            } else {
                assert_eq!(avail, BTreeSet::from([a(0), a(1)]), "t={t}");
            }
        }
    }

    #[test]
    fn available_actions_errors() {
        let env = epoch_env();
        assert_eq!(
            env.available_actions(o(9), 0).unwrap_err(),
            ModelError::UnknownObservation(o(9))
        );
        assert_eq!(
            env.available_actions(o(1), 2).unwrap_err(),
            ModelError::InactiveObservation { obs: o(1), t: 2 }
        );
    }

    #[test]
    fn restricted_observation_affords_only_its_actions() {
        let env = absorbing_env();
        assert_eq!(env.available_actions(o(1), 3).unwrap(), BTreeSet::from([a(0)]));
        let h = History::empty(o(1), 3);
        let mut rng = StreamRng::from_key(0);
        let err = env.env_step(&h, a(1), &mut rng).unwrap_err();
        assert_eq!(err, ModelError::UnavailableAction { obs: o(1), action: a(1), t: 3 });
    }

    #[test]
    fn env_step_reports_reward_and_spawn() {
        let env = absorbing_env();
        let h = History::empty(o(0), 0);
        let mut rng = StreamRng::from_key(1);
        let out = env.env_step(&h, a(1), &mut rng).unwrap();
        assert_eq!(out.observation, o(1));
        assert_eq!(out.reward_k, 5);
        assert_eq!(out.spawn_count, 1);
        let out0 = env.env_step(&h, a(0), &mut rng).unwrap();
        assert_eq!(out0.reward_k, 0);
        assert_eq!(out0.spawn_count, 0);
    }

    #[test]
    fn env_step_error_taxonomy() {
        let env = epoch_env();
        let h = History::empty(o(0), 0);
        let mut rng = StreamRng::from_key(2);
        assert_eq!(
            env.env_step(&h, a(9), &mut rng).unwrap_err(),
            ModelError::UnknownAction(a(9))
        );
        assert_eq!(
            env.env_step(&h, a(1), &mut rng).unwrap_err(),
            ModelError::InactiveAction { action: a(1), t: 0 }
        );
    }

    #[test]
    fn env_step_sampling_frequency_matches_probabilities() {
        let env = full_support_env();
        let h = History::empty(o(0), 0);
        let mut rng = StreamRng::from_key(3);
        let n = 10_000;
        let mut ones = 0;
        for _ in 0..n {
            if env.env_step(&h, a(0), &mut rng).unwrap().observation == o(1) {
                ones += 1;
            }
        }
        let freq = ones as f64 / n as f64;
        assert!((0.48..=0.52).contains(&freq), "freq {freq}");
    }

    #[test]
    fn env_step_is_deterministic_per_stream() {
        let env = full_support_env();
        let h = History::empty(o(0), 0);
        let run = |key: u64| {
            let mut rng = StreamRng::from_key(key);
            (0..32)
                .map(|_| env.env_step(&h, a(0), &mut rng).unwrap().observation)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(77), run(77));
        assert_ne!(run(77), run(78), "distinct streams should differ somewhere");
    }

    #[test]
    fn missing_dynamics_is_reported_not_invented() {
        // Depth-1 environment with only the birth-context row present.
        let env = EnvironmentModel::new(
            vec![(o(0), Epoch::ALWAYS)],
            vec![(a(0), Epoch::ALWAYS)],
            KeyDepth::Last(1),
            vec![((HistoryKey::bare(o(0)), a(0)), uniform_row(&[0]))],
            vec![],
            vec![],
        )
        .unwrap();
        let h = History::empty(o(0), 0).with_event(a(0), o(0));
        let mut rng = StreamRng::from_key(4);
        let err = env.env_step(&h, a(0), &mut rng).unwrap_err();
        assert!(matches!(err, ModelError::MissingDynamics { .. }), "{err}");
    }

    #[test]
    fn constructor_rejects_overdeep_keys_and_unknown_ids() {
        let deep_key = HistoryKey {
            obs: o(0),
            context: vec![HistoryEvent { action: a(0), observation: o(0) }],
        };
        let err = EnvironmentModel::new(
            vec![(o(0), Epoch::ALWAYS)],
            vec![(a(0), Epoch::ALWAYS)],
            KeyDepth::Last(0),
            vec![((deep_key, a(0)), uniform_row(&[0]))],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::KeyDeeperThanDepth);

        let err = EnvironmentModel::new(
            vec![(o(0), Epoch::ALWAYS)],
            vec![(a(0), Epoch::ALWAYS)],
            KeyDepth::Last(0),
            vec![((HistoryKey::bare(o(0)), a(0)), uniform_row(&[0, 1]))],
            vec![],
            vec![],
        )
        .unwrap_err();
        assert_eq!(err, ModelError::UnknownObservation(o(1)));
    }

    #[test]
    fn inactive_support_is_an_error_not_a_renormalization() {
        // Row from o0 supports o1, but o1 only activates at t=5; stepping at
        // t=0 must fail loudly.
        let env = EnvironmentModel::new(
            vec![(o(0), Epoch::ALWAYS), (o(1), Epoch::from_start(5))],
            vec![(a(0), Epoch::ALWAYS)],
            KeyDepth::Last(0),
            vec![((HistoryKey::bare(o(0)), a(0)), uniform_row(&[0, 1]))],
            vec![],
            vec![],
        )
        .unwrap();
        let h = History::empty(o(0), 0);
        let mut rng = StreamRng::from_key(5);
        assert_eq!(
            env.env_step(&h, a(0), &mut rng).unwrap_err(),
            ModelError::InactiveOutcome { obs: o(1), t: 1 }
        );
    }

    #[test]
    fn enumeration_counts_full_support_levels() {
        // 1 + 4 + 16 histories at depths 0..=2.
        let env = full_support_env();
        let root = History::empty(o(0), 0);
        let all = enumerate_realizable_histories(&UniformPolicy, &env, &root, 2, 1_000_000)
            .unwrap();
        assert_eq!(all.len(), 21);
        assert_eq!(all.iter().filter(|h| h.len() == 0).count(), 1);
        assert_eq!(all.iter().filter(|h| h.len() == 1).count(), 4);
        assert_eq!(all.iter().filter(|h| h.len() == 2).count(), 16);
        // Prefix closure: dropping the last event of any member stays inside.
        let set: BTreeSet<&History> = all.iter().collect();
        for h in &all {
            if !h.is_empty() {
                let mut parent = h.clone();
                parent.events.pop();
                assert!(set.contains(&parent));
            }
        }
    }

    #[test]
    fn enumeration_depth_zero_is_just_the_root() {
        let env = full_support_env();
        let root = History::empty(o(0), 0);
        let all = enumerate_realizable_histories(&UniformPolicy, &env, &root, 0, 10).unwrap();
        assert_eq!(all, vec![root]);
    }

    #[test]
    fn enumeration_respects_node_cap() {
        let env = full_support_env();
        let root = History::empty(o(0), 0);
        let err = enumerate_realizable_histories(&UniformPolicy, &env, &root, 2, 20)
            .unwrap_err();
        assert_eq!(err, ModelError::BudgetExceeded { cap: 20 });
    }

    #[test]
    fn epoch_env_histories_gain_new_observation_only_in_time() {
        let env = epoch_env();
        let root = History::empty(o(0), 0);
        let to_depth_5 =
            enumerate_realizable_histories(&UniformPolicy, &env, &root, 5, 1_000_000).unwrap();
        assert!(
            to_depth_5
                .iter()
                .all(|h| h.events.iter().all(|e| e.observation != o(1))),
            "o1 must not be emitted by t=5"
        );
        let to_depth_6 =
            enumerate_realizable_histories(&UniformPolicy, &env, &root, 6, 1_000_000).unwrap();
        assert!(to_depth_6
            .iter()
            .any(|h| h.events.iter().any(|e| e.observation == o(1))));
    }

    #[test]
    fn history_probability_matches_brute_product() {
        let env = full_support_env();
        let h = History::empty(o(0), 0).with_event(a(0), o(1)).with_event(a(1), o(0));
        // Four factors of 1/2: policy, obs, policy, obs.
        let p = history_probability(&UniformPolicy, &env, &h).unwrap();
        assert_eq!(p, half() * half() * half() * half());
        let dead = History::empty(o(0), 0).with_event(a(1), o(0));
        let env2 = absorbing_env();
        assert_eq!(
            history_probability(&UniformPolicy, &env2, &dead).unwrap(),
            BigRational::zero()
        );
    }

    #[test]
    fn suffixes_include_empty_and_match_anchor() {
        let env = absorbing_env();
        let prefix = History::empty(o(0), 0).with_event(a(1), o(1));
        let suffixes =
            realizable_suffixes(&UniformPolicy, &env, &prefix, 3, 1_000_000).unwrap();
        assert!(suffixes.contains(&History::empty(o(1), 1)), "empty suffix present");
        for s in &suffixes {
            assert_eq!(s.origin, o(1));
            assert_eq!(s.birth_time, 1);
            // Absorbing state: every continuation stays in o1.
            assert!(s.events.iter().all(|e| e.observation == o(1)));
            prefix.concat(s).unwrap();
        }
        assert_eq!(suffixes.len(), 4, "one suffix per extension length 0..=3");
    }

    #[test]
    fn unrealizable_prefix_is_rejected() {
        let env = absorbing_env();
        let bogus = History::empty(o(0), 0).with_event(a(0), o(1));
        assert_eq!(
            realizable_suffixes(&UniformPolicy, &env, &bogus, 2, 1000).unwrap_err(),
            ModelError::UnrealizablePrefix
        );
    }

    #[test]
    fn reachability_levels_follow_epochs() {
        let env = epoch_env();
        let levels = reachable_observations_by_time(&env, o(0), 7).unwrap();
        assert_eq!(levels.len(), 8);
        for (t, level) in levels.iter().enumerate() {
            if t < 6 {
                assert_eq!(level, &BTreeSet::from([o(0)]), "t={t}");
            } else {
                assert_eq!(level, &BTreeSet::from([o(0), o(1)]), "t={t}");
            }
        }
    }

    #[test]
    fn reachability_requires_markov() {
        let env = EnvironmentModel::new(
            vec![(o(0), Epoch::ALWAYS)],
            vec![(a(0), Epoch::ALWAYS)],
            KeyDepth::Last(1),
            vec![((HistoryKey::bare(o(0)), a(0)), uniform_row(&[0]))],
            vec![],
            vec![],
        )
        .unwrap();
        assert_eq!(
            reachable_observations_by_time(&env, o(0), 3).unwrap_err(),
            ModelError::RequiresMarkov
        );
    }

    #[test]
    fn policy_support_outside_available_is_caught() {
        struct Rogue;
        impl Policy for Rogue {
            fn action_distribution(
                &self,
                _h: &History,
                _available: &BTreeSet<ActionId>,
            ) -> Result<DiscreteDistribution<ActionId>, ModelError> {
                Ok(DiscreteDistribution::point(a(1)))
            }
        }
        let env = absorbing_env();
        let root = History::empty(o(1), 0); // only a0 available here
        let err =
            enumerate_realizable_histories(&Rogue, &env, &root, 1, 1000).unwrap_err();
        assert_eq!(err, ModelError::PolicySupport { action: a(1) });
    }
}
