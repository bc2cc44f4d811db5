//! Joint policies that drive a partition of units.
//!
//! A partition agent sees a [`PartitionView`]: the member units' histories
//! (merged into an [`EnlargedHistory`]) and the actions available to each
//! member.  It emits an exact distribution over *joint actions* — one action
//! per member, in unit-id order.  Sampling and exact analysis share that
//! distribution, so an agent cannot behave differently when watched.
//!
//! Two families exist.  *Quantitative* agents optimize something (greedy
//! lookahead, tabular Q-learning) or randomize as a baseline.  *Qualitative*
//! agents apply an exogenous rule; the interface hands them observations
//! only, so reward values are structurally out of their reach.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;
use num_traits::One;
use thiserror::Error;

use crate::dist::{DiscreteDistribution, DistError};
use crate::model::{
    ActionId, EnvironmentModel, History, HistoryKey, KeyDepth, ModelError, ObservationId,
    TimeIndex,
};
use crate::rng::StreamRng;
use crate::units::{
    discounted_return, CentQuantum, DiscountedReturn, Horizon, Ledger, UnitId, UnitRegistry,
    UnitsError,
};

/// What kind of mechanism produces a partition's actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratingProcessKind {
    /// Optimization-driven (or an explicit stochastic baseline for one).
    Quantitative,
    /// Exogenous rule; never reads rewards.
    Qualitative,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("unit {unit} has no available action")]
    NoAvailableAction { unit: UnitId },
    #[error("partition has no members")]
    EmptyPartition,
    #[error("member histories disagree on the current time")]
    MisalignedHistories,
    #[error("rule table has no entry for observation {obs}")]
    RuleMissing { obs: ObservationId },
    #[error("rule maps {obs} to unavailable action {action}")]
    RuleUnavailable { obs: ObservationId, action: ActionId },
    #[error("joint action space too large to materialize")]
    JointSpaceOverflow,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Units(#[from] UnitsError),
}

/// The member units' logs, merged.  Slots are ordered by unit id and every
/// member must agree on the current time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnlargedHistory {
    members: Vec<(UnitId, History)>,
}

impl EnlargedHistory {
    pub fn new(mut members: Vec<(UnitId, History)>) -> Result<Self, AgentError> {
        if members.is_empty() {
            return Err(AgentError::EmptyPartition);
        }
        members.sort_by_key(|(id, _)| *id);
        let t0 = members[0].1.current_time();
        if members.iter().any(|(_, h)| h.current_time() != t0) {
            return Err(AgentError::MisalignedHistories);
        }
        Ok(EnlargedHistory { members })
    }

    /// Snapshot the living members of a partition from the registry.
    pub fn from_registry(
        registry: &UnitRegistry,
        members: &BTreeSet<UnitId>,
    ) -> Result<Self, AgentError> {
        let snap: Vec<(UnitId, History)> = members
            .iter()
            .filter_map(|id| registry.unit(*id))
            .filter(|u| u.alive)
            .map(|u| (u.id, u.history.clone()))
            .collect();
        EnlargedHistory::new(snap)
    }

    pub fn members(&self) -> &[(UnitId, History)] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn unit_ids(&self) -> Vec<UnitId> {
        self.members.iter().map(|(id, _)| *id).collect()
    }

    /// Shared wall-clock time of all members.
    pub fn current_time(&self) -> TimeIndex {
        self.members[0].1.current_time()
    }

    /// Current observations, one per member, in slot order.
    pub fn joint_observation(&self) -> Vec<ObservationId> {
        self.members
            .iter()
            .map(|(_, h)| h.current_observation())
            .collect()
    }

    /// Per-step view: every event of every member, grouped by the global
    /// time at which the action was taken.
    pub fn step_tuples(&self) -> BTreeMap<TimeIndex, Vec<(UnitId, crate::model::HistoryEvent)>> {
        let mut out: BTreeMap<TimeIndex, Vec<_>> = BTreeMap::new();
        for (id, h) in &self.members {
            for (i, ev) in h.events.iter().enumerate() {
                out.entry(h.birth_time + i as TimeIndex).or_default().push((*id, *ev));
            }
        }
        out
    }

    /// Dynamics keys of every member at the given truncation depth.
    pub fn joint_key(&self, depth: KeyDepth) -> JointKey {
        JointKey(self.members.iter().map(|(_, h)| h.key(depth)).collect())
    }
}

/// What an agent is shown when asked to act.  Deliberately reward-free.
#[derive(Debug, Clone, Copy)]
pub struct PartitionView<'a> {
    pub enlarged: &'a EnlargedHistory,
    /// Available actions per member, in slot order.
    pub available: &'a [BTreeSet<ActionId>],
}

impl<'a> PartitionView<'a> {
    pub fn new(enlarged: &'a EnlargedHistory, available: &'a [BTreeSet<ActionId>]) -> Self {
        PartitionView { enlarged, available }
    }
}

/// Compute each member's available actions from the environment.
pub fn available_for(
    env: &EnvironmentModel,
    enlarged: &EnlargedHistory,
) -> Result<Vec<BTreeSet<ActionId>>, ModelError> {
    enlarged
        .members()
        .iter()
        .map(|(_, h)| env.available_actions(h.current_observation(), h.current_time()))
        .collect()
}

/// One action per member, in slot order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointAction(pub Vec<ActionId>);

impl fmt::Display for JointAction {
    /// `a1+a0` — slot actions joined by `+`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            write!(f, "{a}")?;
        }
        Ok(())
    }
}

impl FromStr for JointAction {
    type Err = crate::model::KeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut slots = Vec::new();
        for part in s.split('+') {
            let id = part
                .trim()
                .strip_prefix('a')
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| crate::model::KeyParseError(s.to_string()))?;
            slots.push(ActionId(id));
        }
        Ok(JointAction(slots))
    }
}

/// One dynamics key per member, in slot order: the state a joint learner
/// conditions on.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointKey(pub Vec<HistoryKey>);

impl fmt::Display for JointKey {
    /// Slot keys joined by `+`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            write!(f, "{k}")?;
        }
        Ok(())
    }
}

impl FromStr for JointKey {
    type Err = crate::model::KeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut slots = Vec::new();
        for part in s.split('+') {
            slots.push(part.trim().parse()?);
        }
        Ok(JointKey(slots))
    }
}

/// Number of joint actions, or `None` on overflow / an empty slot.
pub fn joint_size(available: &[BTreeSet<ActionId>]) -> Option<u64> {
    let mut size: u64 = 1;
    for slot in available {
        if slot.is_empty() {
            return None;
        }
        size = size.checked_mul(slot.len() as u64)?;
    }
    Some(size)
}

/// All joint actions in lexicographic order (first slot most significant,
/// ids ascending within a slot).  The canonical tie-break order.
pub fn enumerate_joint_actions(available: &[BTreeSet<ActionId>]) -> Vec<JointAction> {
    let slots: Vec<Vec<ActionId>> = available
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect();
    if slots.iter().any(|s| s.is_empty()) {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx = vec![0usize; slots.len()];
    loop {
        out.push(JointAction(
            idx.iter().zip(&slots).map(|(&i, s)| s[i]).collect(),
        ));
        // Mixed-radix increment, last slot fastest.
        let mut pos = slots.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < slots[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// A joint policy over one partition.
pub trait PartitionAgent {
    fn kind(&self) -> GeneratingProcessKind;

    /// Discount factor used when this agent's returns are evaluated.
    fn gamma(&self) -> BigRational;

    /// Exact joint-action distribution at the current view.
    fn joint_distribution(
        &self,
        view: &PartitionView<'_>,
    ) -> Result<DiscreteDistribution<JointAction>, AgentError>;

    /// Draw a joint action.  Must follow `joint_distribution` exactly; the
    /// default does so by construction.
    fn sample(
        &self,
        view: &PartitionView<'_>,
        rng: &mut StreamRng,
    ) -> Result<JointAction, AgentError> {
        let dist = self.joint_distribution(view)?;
        Ok(dist.sample(rng).clone())
    }

    /// True when the joint distribution always factorizes across slots.
    fn declares_independent(&self) -> bool {
        false
    }

    /// History truncation this agent conditions on; drives the keys a
    /// simulation puts into learning transitions.
    fn key_depth(&self) -> KeyDepth {
        KeyDepth::Last(0)
    }

    /// Learning hook; non-learners ignore it.
    fn learn(&mut self, _transition: &QTransition) {}
}

fn first_empty_slot(view: &PartitionView<'_>) -> Option<UnitId> {
    view.available
        .iter()
        .zip(view.enlarged.unit_ids())
        .find(|(slot, _)| slot.is_empty())
        .map(|(_, id)| id)
}

// ---------------------------------------------------------------------------
// Baseline: uniform random
// ---------------------------------------------------------------------------

/// Uniform over the joint action space; slots are independent.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    pub gamma: BigRational,
}

impl RandomAgent {
    pub fn new(gamma: BigRational) -> Self {
        RandomAgent { gamma }
    }
}

impl PartitionAgent for RandomAgent {
    fn kind(&self) -> GeneratingProcessKind {
        GeneratingProcessKind::Quantitative
    }

    fn gamma(&self) -> BigRational {
        self.gamma.clone()
    }

    fn joint_distribution(
        &self,
        view: &PartitionView<'_>,
    ) -> Result<DiscreteDistribution<JointAction>, AgentError> {
        if let Some(unit) = first_empty_slot(view) {
            return Err(AgentError::NoAvailableAction { unit });
        }
        if joint_size(view.available).is_none() {
            return Err(AgentError::JointSpaceOverflow);
        }
        let actions = enumerate_joint_actions(view.available);
        Ok(DiscreteDistribution::uniform(&actions)?)
    }

    /// Per-slot draws: same distribution, no joint table.
    fn sample(
        &self,
        view: &PartitionView<'_>,
        rng: &mut StreamRng,
    ) -> Result<JointAction, AgentError> {
        if let Some(unit) = first_empty_slot(view) {
            return Err(AgentError::NoAvailableAction { unit });
        }
        let mut slots = Vec::with_capacity(view.available.len());
        for avail in view.available {
            let items: Vec<ActionId> = avail.iter().copied().collect();
            slots.push(items[rng.next_below(items.len() as u64) as usize]);
        }
        Ok(JointAction(slots))
    }

    fn declares_independent(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Correlated coin
// ---------------------------------------------------------------------------

/// Every member takes the *same* action id, drawn uniformly from the ids
/// available to all of them.  Maximal coupling with uniform marginals.
#[derive(Debug, Clone)]
pub struct CorrelatedAgent {
    pub gamma: BigRational,
}

impl CorrelatedAgent {
    pub fn new(gamma: BigRational) -> Self {
        CorrelatedAgent { gamma }
    }
}

impl PartitionAgent for CorrelatedAgent {
    fn kind(&self) -> GeneratingProcessKind {
        GeneratingProcessKind::Quantitative
    }

    fn gamma(&self) -> BigRational {
        self.gamma.clone()
    }

    fn joint_distribution(
        &self,
        view: &PartitionView<'_>,
    ) -> Result<DiscreteDistribution<JointAction>, AgentError> {
        if let Some(unit) = first_empty_slot(view) {
            return Err(AgentError::NoAvailableAction { unit });
        }
        let mut shared: Option<BTreeSet<ActionId>> = None;
        for slot in view.available {
            shared = Some(match shared {
                None => slot.clone(),
                Some(acc) => acc.intersection(slot).copied().collect(),
            });
        }
        let shared = shared.unwrap_or_default();
        if shared.is_empty() {
            // No action is available to every member at once.
            return Err(AgentError::NoAvailableAction {
                unit: view.enlarged.unit_ids()[0],
            });
        }
        let diagonal: Vec<JointAction> = shared
            .iter()
            .map(|a| JointAction(vec![*a; view.available.len()]))
            .collect();
        Ok(DiscreteDistribution::uniform(&diagonal)?)
    }
}

// ---------------------------------------------------------------------------
// Qualitative rule tables
// ---------------------------------------------------------------------------

/// Exogenous per-unit rule: current observation -> action.  Structurally
/// blind to rewards — the view it receives carries none.
#[derive(Debug, Clone)]
pub struct RuleTableAgent {
    pub gamma: BigRational,
    rules: BTreeMap<ObservationId, ActionId>,
}

impl RuleTableAgent {
    pub fn new(gamma: BigRational, rules: BTreeMap<ObservationId, ActionId>) -> Self {
        RuleTableAgent { gamma, rules }
    }

    /// Parse lines of the form `o3 -> a1`.
    pub fn parse(gamma: BigRational, text: &str) -> Result<Self, String> {
        let mut rules = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (lhs, rhs) = line
                .split_once("->")
                .ok_or_else(|| format!("line {}: expected `o<id> -> a<id>`", idx + 1))?;
            let obs = lhs
                .trim()
                .strip_prefix('o')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format!("line {}: bad observation id", idx + 1))?;
            let act = rhs
                .trim()
                .strip_prefix('a')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format!("line {}: bad action id", idx + 1))?;
            if rules.insert(ObservationId(obs), ActionId(act)).is_some() {
                return Err(format!("line {}: duplicate rule for o{obs}", idx + 1));
            }
        }
        if rules.is_empty() {
            return Err("rule table is empty".into());
        }
        Ok(RuleTableAgent { gamma, rules })
    }

    /// Canonical text form, one rule per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (o, a) in &self.rules {
            out.push_str(&format!("{o} -> {a}\n"));
        }
        out
    }
}

impl PartitionAgent for RuleTableAgent {
    fn kind(&self) -> GeneratingProcessKind {
        GeneratingProcessKind::Qualitative
    }

    fn gamma(&self) -> BigRational {
        self.gamma.clone()
    }

    fn joint_distribution(
        &self,
        view: &PartitionView<'_>,
    ) -> Result<DiscreteDistribution<JointAction>, AgentError> {
        let mut slots = Vec::with_capacity(view.available.len());
        for ((_, h), avail) in view.enlarged.members().iter().zip(view.available) {
            let obs = h.current_observation();
            let action = *self
                .rules
                .get(&obs)
                .ok_or(AgentError::RuleMissing { obs })?;
            if !avail.contains(&action) {
                return Err(AgentError::RuleUnavailable { obs, action });
            }
            slots.push(action);
        }
        Ok(DiscreteDistribution::point(JointAction(slots)))
    }

    fn declares_independent(&self) -> bool {
        true
    }
}

/// Per-unit rule on the unit's own log: one designated action on the unit's
/// first step, another ever after.  (The companion policy of the
/// proportional grounding: mint once, then idle.)
#[derive(Debug, Clone)]
pub struct FirstStepAgent {
    pub gamma: BigRational,
    pub first: ActionId,
    pub after: ActionId,
}

impl FirstStepAgent {
    pub fn new(gamma: BigRational, first: ActionId, after: ActionId) -> Self {
        FirstStepAgent { gamma, first, after }
    }
}

impl PartitionAgent for FirstStepAgent {
    fn kind(&self) -> GeneratingProcessKind {
        GeneratingProcessKind::Qualitative
    }

    fn gamma(&self) -> BigRational {
        self.gamma.clone()
    }

    fn joint_distribution(
        &self,
        view: &PartitionView<'_>,
    ) -> Result<DiscreteDistribution<JointAction>, AgentError> {
        let mut slots = Vec::with_capacity(view.available.len());
        for ((_, h), avail) in view.enlarged.members().iter().zip(view.available) {
            let action = if h.is_empty() { self.first } else { self.after };
            if !avail.contains(&action) {
                return Err(AgentError::RuleUnavailable {
                    obs: h.current_observation(),
                    action,
                });
            }
            slots.push(action);
        }
        Ok(DiscreteDistribution::point(JointAction(slots)))
    }

    fn declares_independent(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Greedy one-step lookahead
// ---------------------------------------------------------------------------

/// White-box myopic optimizer: picks the joint action maximizing the summed
/// immediate reward of the members.  Ties go to the lexicographically
/// smallest joint action.
#[derive(Debug, Clone)]
pub struct GreedyOneStepAgent {
    pub gamma: BigRational,
    env: EnvironmentModel,
}

impl GreedyOneStepAgent {
    pub fn new(gamma: BigRational, env: EnvironmentModel) -> Self {
        GreedyOneStepAgent { gamma, env }
    }
}

impl PartitionAgent for GreedyOneStepAgent {
    fn kind(&self) -> GeneratingProcessKind {
        GeneratingProcessKind::Quantitative
    }

    fn gamma(&self) -> BigRational {
        self.gamma.clone()
    }

    fn joint_distribution(
        &self,
        view: &PartitionView<'_>,
    ) -> Result<DiscreteDistribution<JointAction>, AgentError> {
        if let Some(unit) = first_empty_slot(view) {
            return Err(AgentError::NoAvailableAction { unit });
        }
        let obs = view.enlarged.joint_observation();
        let mut best: Option<(u64, JointAction)> = None;
        for joint in enumerate_joint_actions(view.available) {
            let score: u64 = joint
                .0
                .iter()
                .zip(&obs)
                .map(|(a, o)| self.env.reward_k(*o, *a))
                .sum();
            // Strict improvement only: the first maximum in lexicographic
            // order wins ties.
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, joint));
            }
        }
        let (_, pick) = best.expect("non-empty joint action space");
        Ok(DiscreteDistribution::point(pick))
    }

    fn declares_independent(&self) -> bool {
        true
    }
}

// ---------------------------------------------------------------------------
// Tabular Q-learning
// ---------------------------------------------------------------------------

/// One observed joint transition, as fed to a learner.
#[derive(Debug, Clone)]
pub struct QTransition {
    pub key: JointKey,
    pub action: JointAction,
    /// Summed reward of the partition, in quanta.
    pub reward_k: u64,
    pub next_key: JointKey,
    /// Joint actions available at the next state; empty at an episode end
    /// (bootstraps zero).
    pub next_actions: Vec<JointAction>,
}

/// Epsilon-greedy tabular Q over joint keys and joint actions.
#[derive(Debug, Clone)]
pub struct TabularQAgent {
    pub gamma: BigRational,
    /// Step size of the update.
    pub alpha: f64,
    /// Exploration mass, spread uniformly over the joint actions.
    pub epsilon: BigRational,
    /// History truncation for keys.
    pub key_depth: KeyDepth,
    cent_value: f64,
    gamma_f: f64,
    table: BTreeMap<(JointKey, JointAction), f64>,
}

impl TabularQAgent {
    pub fn new(
        gamma: BigRational,
        alpha: f64,
        epsilon: BigRational,
        key_depth: KeyDepth,
        cent: &CentQuantum,
    ) -> Self {
        TabularQAgent {
            gamma_f: crate::dist::rational_to_f64(&gamma),
            cent_value: crate::dist::rational_to_f64(cent.value()),
            gamma,
            alpha,
            epsilon,
            key_depth,
            table: BTreeMap::new(),
        }
    }

    /// Defaults: epsilon = 1/10, key depth 1 (previous event + current
    /// observation).
    pub fn with_defaults(gamma: BigRational, alpha: f64, cent: &CentQuantum) -> Self {
        Self::new(
            gamma,
            alpha,
            BigRational::new(1.into(), 10.into()),
            KeyDepth::Last(1),
            cent,
        )
    }

    pub fn q_value(&self, key: &JointKey, action: &JointAction) -> f64 {
        self.table
            .get(&(key.clone(), action.clone()))
            .copied()
            .unwrap_or(0.0)
    }

    fn max_over(&self, key: &JointKey, actions: &[JointAction]) -> f64 {
        actions
            .iter()
            .map(|a| self.q_value(key, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// One Q-learning step:
    /// `Q += alpha * (k * cent + gamma * max_next - Q)`.
    pub fn q_update(&mut self, t: &QTransition) {
        let max_next = if t.next_actions.is_empty() {
            0.0
        } else {
            self.max_over(&t.next_key, &t.next_actions)
        };
        let reward = t.reward_k as f64 * self.cent_value;
        let slot = self
            .table
            .entry((t.key.clone(), t.action.clone()))
            .or_insert(0.0);
        *slot += self.alpha * (reward + self.gamma_f * max_next - *slot);
    }

    /// Greedy joint action among `actions` (first maximum wins ties).
    fn argmax(&self, key: &JointKey, actions: &[JointAction]) -> JointAction {
        let mut best = actions[0].clone();
        let mut best_v = self.q_value(key, &best);
        for a in &actions[1..] {
            let v = self.q_value(key, a);
            if v > best_v {
                best_v = v;
                best = a.clone();
            }
        }
        best
    }

    /// Table entries, sorted, for export.
    pub fn entries(&self) -> impl Iterator<Item = (&(JointKey, JointAction), &f64)> {
        self.table.iter()
    }

    /// Serialize as CSV `key,action,value` (key quoted; float in shortest
    /// round-trip form).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("key,action,value\n");
        for ((key, action), v) in &self.table {
            out.push_str(&format!("\"{key}\",{action},{v}\n"));
        }
        out
    }

    /// Parse the CSV form produced by [`Self::to_csv`].
    pub fn load_csv(&mut self, text: &str) -> Result<(), String> {
        for (idx, line) in text.lines().enumerate().skip(1) {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let rest = line
                .strip_prefix('"')
                .ok_or_else(|| format!("line {}: key must be quoted", idx + 1))?;
            let (key_s, rest) = rest
                .split_once('"')
                .ok_or_else(|| format!("line {}: unterminated key", idx + 1))?;
            let rest = rest
                .strip_prefix(',')
                .ok_or_else(|| format!("line {}: expected comma after key", idx + 1))?;
            let (action_s, value_s) = rest
                .split_once(',')
                .ok_or_else(|| format!("line {}: expected action,value", idx + 1))?;
            let key: JointKey = key_s.parse().map_err(|e| format!("line {}: {e}", idx + 1))?;
            let action: JointAction =
                action_s.parse().map_err(|e| format!("line {}: {e}", idx + 1))?;
            let value: f64 = value_s
                .parse()
                .map_err(|_| format!("line {}: bad value", idx + 1))?;
            self.table.insert((key, action), value);
        }
        Ok(())
    }
}

impl PartitionAgent for TabularQAgent {
    fn kind(&self) -> GeneratingProcessKind {
        GeneratingProcessKind::Quantitative
    }

    fn gamma(&self) -> BigRational {
        self.gamma.clone()
    }

    fn key_depth(&self) -> KeyDepth {
        self.key_depth
    }

    fn joint_distribution(
        &self,
        view: &PartitionView<'_>,
    ) -> Result<DiscreteDistribution<JointAction>, AgentError> {
        if let Some(unit) = first_empty_slot(view) {
            return Err(AgentError::NoAvailableAction { unit });
        }
        if joint_size(view.available).is_none() {
            return Err(AgentError::JointSpaceOverflow);
        }
        let actions = enumerate_joint_actions(view.available);
        let key = view.enlarged.joint_key(self.key_depth);
        let greedy = self.argmax(&key, &actions);
        // epsilon spread uniformly over all joint actions, the rest on the
        // greedy pick.
        let n = BigRational::from_integer((actions.len() as u64).into());
        let explore = &self.epsilon / &n;
        let exploit = BigRational::one() - &self.epsilon;
        let mut entries: Vec<(JointAction, BigRational)> = Vec::with_capacity(actions.len());
        for a in actions {
            let mut p = explore.clone();
            if a == greedy {
                p += &exploit;
            }
            entries.push((a, p));
        }
        Ok(DiscreteDistribution::new(entries)?)
    }

    fn learn(&mut self, transition: &QTransition) {
        self.q_update(transition);
    }
}

/// Discounted return of a partition over a ledger window: thin wrapper over
/// the accounting in [`crate::units`].
pub fn episode_return(
    ledger: &Ledger,
    members: &BTreeSet<UnitId>,
    gamma: &BigRational,
    tau: TimeIndex,
    horizon: Horizon,
    cent: &CentQuantum,
) -> Result<DiscountedReturn, UnitsError> {
    discounted_return(ledger, members, gamma, tau, horizon, cent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use num_bigint::BigInt;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn o(i: u32) -> ObservationId {
        ObservationId(i)
    }

    fn a(i: u32) -> ActionId {
        ActionId(i)
    }

    fn two_unit_view(env: &EnvironmentModel) -> (EnlargedHistory, Vec<BTreeSet<ActionId>>) {
        let enlarged = EnlargedHistory::new(vec![
            (UnitId(0), History::empty(o(0), 0)),
            (UnitId(1), History::empty(o(0), 0)),
        ])
        .unwrap();
        let avail = available_for(env, &enlarged).unwrap();
        (enlarged, avail)
    }

    #[test]
    fn enlarged_history_sorts_and_checks_alignment() {
        let e = EnlargedHistory::new(vec![
            (UnitId(2), History::empty(o(1), 0)),
            (UnitId(0), History::empty(o(0), 0)),
        ])
        .unwrap();
        assert_eq!(e.unit_ids(), vec![UnitId(0), UnitId(2)]);
        assert_eq!(e.joint_observation(), vec![o(0), o(1)]);
        let err = EnlargedHistory::new(vec![
            (UnitId(0), History::empty(o(0), 0)),
            (UnitId(1), History::empty(o(0), 3)),
        ])
        .unwrap_err();
        assert!(matches!(err, AgentError::MisalignedHistories));
        assert!(matches!(
            EnlargedHistory::new(vec![]),
            Err(AgentError::EmptyPartition)
        ));
    }

    #[test]
    fn step_tuples_group_by_global_time() {
        let h0 = History::empty(o(0), 0).with_event(a(0), o(1)).with_event(a(1), o(0));
        let h1 = History::empty(o(1), 1).with_event(a(0), o(0));
        let e = EnlargedHistory::new(vec![(UnitId(0), h0), (UnitId(1), h1)]).unwrap();
        let tuples = e.step_tuples();
        assert_eq!(tuples[&0].len(), 1, "only the elder acted at t=0");
        assert_eq!(tuples[&1].len(), 2, "both acted at t=1");
    }

    #[test]
    fn joint_action_order_is_lexicographic() {
        let avail = vec![
            BTreeSet::from([a(0), a(1)]),
            BTreeSet::from([a(0), a(2)]),
        ];
        let all = enumerate_joint_actions(&avail);
        let shown: Vec<String> = all.iter().map(|j| j.to_string()).collect();
        assert_eq!(shown, vec!["a0+a0", "a0+a2", "a1+a0", "a1+a2"]);
        assert_eq!(joint_size(&avail), Some(4));
        assert_eq!(joint_size(&[BTreeSet::new()]), None);
    }

    #[test]
    fn joint_action_and_key_text_round_trip() {
        let j: JointAction = "a1+a0".parse().unwrap();
        assert_eq!(j, JointAction(vec![a(1), a(0)]));
        assert_eq!(j.to_string(), "a1+a0");
        let k: JointKey = "o1+o2@a0.o2".parse().unwrap();
        assert_eq!(k.0.len(), 2);
        assert_eq!(k.to_string(), "o1+o2@a0.o2");
    }

    #[test]
    fn random_agent_is_uniform_exactly_and_in_frequency() {
        let g = fixtures::make_coupled_pair();
        let (enlarged, avail) = two_unit_view(&g.env);
        let view = PartitionView::new(&enlarged, &avail);
        let agent = RandomAgent::new(r(1, 2));
        let dist = agent.joint_distribution(&view).unwrap();
        assert_eq!(dist.entries().len(), 4);
        for (_, p) in dist.entries() {
            assert_eq!(*p, r(1, 4));
        }
        let mut rng = StreamRng::from_key(5);
        let mut counts: BTreeMap<JointAction, usize> = BTreeMap::new();
        let n = 10_000;
        for _ in 0..n {
            *counts.entry(agent.sample(&view, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        for (ja, c) in counts {
            let freq = c as f64 / n as f64;
            assert!((freq - 0.25).abs() < 0.02, "{ja}: {freq}");
        }
    }

    #[test]
    fn correlated_agent_moves_on_the_diagonal() {
        let g = fixtures::make_coupled_pair();
        let (enlarged, avail) = two_unit_view(&g.env);
        let view = PartitionView::new(&enlarged, &avail);
        let agent = CorrelatedAgent::new(r(1, 2));
        let dist = agent.joint_distribution(&view).unwrap();
        let entries: Vec<(String, BigRational)> = dist
            .entries()
            .iter()
            .map(|(j, p)| (j.to_string(), p.clone()))
            .collect();
        assert_eq!(
            entries,
            vec![("a0+a0".into(), r(1, 2)), ("a1+a1".into(), r(1, 2))]
        );
        assert!(!agent.declares_independent());
    }

    #[test]
    fn rule_table_is_a_point_mass_and_errors_are_precise() {
        let g = fixtures::make_trapdoor();
        use fixtures::trapdoor_ids::*;
        let enlarged =
            EnlargedHistory::new(vec![(UnitId(0), History::empty(FREE, 0))]).unwrap();
        let avail = available_for(&g.env, &enlarged).unwrap();
        let view = PartitionView::new(&enlarged, &avail);
        let agent = RuleTableAgent::new(r(1, 2), BTreeMap::from([(FREE, JUMP)]));
        let dist = agent.joint_distribution(&view).unwrap();
        assert_eq!(dist.entries().len(), 1);
        assert_eq!(dist.entries()[0].0, JointAction(vec![JUMP]));

        let missing = RuleTableAgent::new(r(1, 2), BTreeMap::from([(GATE, JUMP)]));
        assert!(matches!(
            missing.joint_distribution(&view),
            Err(AgentError::RuleMissing { obs }) if obs == FREE
        ));

        // In the trap only `stay` is afforded; a rule demanding `jump` fails.
        let trapped =
            EnlargedHistory::new(vec![(UnitId(0), History::empty(TRAP, 0))]).unwrap();
        let trap_avail = available_for(&g.env, &trapped).unwrap();
        let trap_view = PartitionView::new(&trapped, &trap_avail);
        let stubborn = RuleTableAgent::new(r(1, 2), BTreeMap::from([(TRAP, JUMP)]));
        assert!(matches!(
            stubborn.joint_distribution(&trap_view),
            Err(AgentError::RuleUnavailable { .. })
        ));
    }

    #[test]
    fn rule_table_text_round_trips() {
        let agent = RuleTableAgent::parse(r(1, 2), "o0 -> a1\no2 -> a0 # stay put\n").unwrap();
        assert_eq!(agent.to_text(), "o0 -> a1\no2 -> a0\n");
        assert!(RuleTableAgent::parse(r(1, 2), "o0 -> a1\no0 -> a0\n").is_err());
        assert!(RuleTableAgent::parse(r(1, 2), "garbage\n").is_err());
        assert!(RuleTableAgent::parse(r(1, 2), "").is_err());
    }

    #[test]
    fn first_step_agent_switches_after_first_event() {
        let g = fixtures::make_proportional();
        use fixtures::proportional_ids::*;
        let newborn =
            EnlargedHistory::new(vec![(UnitId(0), History::empty(FLOOR, 0))]).unwrap();
        let avail = available_for(&g.env, &newborn).unwrap();
        let agent = FirstStepAgent::new(r(1, 2), MINT, IDLE);
        let d = agent
            .joint_distribution(&PartitionView::new(&newborn, &avail))
            .unwrap();
        assert_eq!(d.entries()[0].0, JointAction(vec![MINT]));

        let veteran = EnlargedHistory::new(vec![(
            UnitId(0),
            History::empty(FLOOR, 0).with_event(MINT, FLOOR),
        )])
        .unwrap();
        let avail = available_for(&g.env, &veteran).unwrap();
        let d = agent
            .joint_distribution(&PartitionView::new(&veteran, &avail))
            .unwrap();
        assert_eq!(d.entries()[0].0, JointAction(vec![IDLE]));
    }

    #[test]
    fn greedy_picks_reward_and_breaks_ties_low() {
        let g = fixtures::make_trapdoor();
        use fixtures::trapdoor_ids::*;
        let enlarged =
            EnlargedHistory::new(vec![(UnitId(0), History::empty(FREE, 0))]).unwrap();
        let avail = available_for(&g.env, &enlarged).unwrap();
        let agent = GreedyOneStepAgent::new(r(1, 2), g.env.clone());
        let d = agent
            .joint_distribution(&PartitionView::new(&enlarged, &avail))
            .unwrap();
        assert_eq!(d.entries()[0].0, JointAction(vec![JUMP]), "5 quanta beat 0");

        // All rewards equal in the trap: the smallest action id wins.
        let flat = fixtures::make_full_support();
        let e2 = EnlargedHistory::new(vec![(UnitId(0), History::empty(o(0), 0))]).unwrap();
        let avail2 = available_for(&flat.env, &e2).unwrap();
        let agent2 = GreedyOneStepAgent::new(r(1, 2), flat.env.clone());
        let d2 = agent2
            .joint_distribution(&PartitionView::new(&e2, &avail2))
            .unwrap();
        assert_eq!(d2.entries()[0].0, JointAction(vec![a(0)]));
    }

    #[test]
    fn greedy_two_units_equals_per_unit_argmax() {
        // Uncoupled additive rewards: the joint argmax is the tuple of
        // slot argmaxes.
        let g = fixtures::make_trapdoor();
        use fixtures::trapdoor_ids::*;
        let enlarged = EnlargedHistory::new(vec![
            (UnitId(0), History::empty(FREE, 0)),
            (UnitId(1), History::empty(TRAP, 0)),
        ])
        .unwrap();
        let avail = available_for(&g.env, &enlarged).unwrap();
        let agent = GreedyOneStepAgent::new(r(1, 2), g.env.clone());
        let d = agent
            .joint_distribution(&PartitionView::new(&enlarged, &avail))
            .unwrap();
        assert_eq!(
            d.entries()[0].0,
            JointAction(vec![JUMP, STAY]),
            "unit 0 jumps for 5, unit 1 can only stay"
        );
    }

    #[test]
    fn q_update_single_step_collapse() {
        // alpha=1, gamma=0: the update writes exactly k * cent.
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let mut q = TabularQAgent::new(r(0, 1), 1.0, r(1, 10), KeyDepth::Last(0), &cent);
        let key = JointKey(vec![HistoryKey::bare(o(0))]);
        let action = JointAction(vec![a(0)]);
        q.q_update(&QTransition {
            key: key.clone(),
            action: action.clone(),
            reward_k: 3,
            next_key: key.clone(),
            next_actions: vec![action.clone()],
        });
        assert_eq!(q.q_value(&key, &action), 3.0);
    }

    #[test]
    fn q_zero_rewards_leave_table_at_zero() {
        let cent = CentQuantum::hundredth();
        let mut q = TabularQAgent::new(r(9, 10), 0.5, r(1, 10), KeyDepth::Last(0), &cent);
        let key = JointKey(vec![HistoryKey::bare(o(0))]);
        let action = JointAction(vec![a(0)]);
        for _ in 0..100 {
            q.q_update(&QTransition {
                key: key.clone(),
                action: action.clone(),
                reward_k: 0,
                next_key: key.clone(),
                next_actions: vec![action.clone()],
            });
        }
        assert_eq!(q.q_value(&key, &action), 0.0);
    }

    #[test]
    fn q_epsilon_greedy_distribution_is_exact() {
        let g = fixtures::make_full_support();
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let mut q = TabularQAgent::new(r(1, 2), 1.0, r(1, 10), KeyDepth::Last(0), &cent);
        let key = JointKey(vec![HistoryKey::bare(o(0))]);
        let a1 = JointAction(vec![a(1)]);
        // Teach it that a1 is worth something.
        q.q_update(&QTransition {
            key: key.clone(),
            action: a1.clone(),
            reward_k: 1,
            next_key: key.clone(),
            next_actions: vec![],
        });
        let enlarged = EnlargedHistory::new(vec![(UnitId(0), History::empty(o(0), 0))]).unwrap();
        let avail = available_for(&g.env, &enlarged).unwrap();
        let dist = q
            .joint_distribution(&PartitionView::new(&enlarged, &avail))
            .unwrap();
        assert_eq!(dist.probability(&a1), r(19, 20), "1 - eps + eps/2");
        assert_eq!(dist.probability(&JointAction(vec![a(0)])), r(1, 20));
    }

    #[test]
    fn q_csv_round_trips() {
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let mut q = TabularQAgent::new(r(1, 2), 1.0, r(1, 10), KeyDepth::Last(1), &cent);
        let key = JointKey(vec![HistoryKey {
            obs: o(1),
            context: vec![crate::model::HistoryEvent { action: a(0), observation: o(1) }],
        }]);
        let action = JointAction(vec![a(1)]);
        q.q_update(&QTransition {
            key: key.clone(),
            action: action.clone(),
            reward_k: 7,
            next_key: key.clone(),
            next_actions: vec![],
        });
        let csv = q.to_csv();
        assert!(csv.starts_with("key,action,value\n"));
        let mut q2 = TabularQAgent::new(r(1, 2), 1.0, r(1, 10), KeyDepth::Last(1), &cent);
        q2.load_csv(&csv).unwrap();
        assert_eq!(q2.q_value(&key, &action), 7.0);
        assert!(q2.load_csv("key,action,value\nnot-quoted,a0,1\n").is_err());
    }

    #[test]
    fn episode_return_delegates_to_exact_accounting() {
        use crate::units::{LedgerEntry, PartitionId};
        let mut ledger = Ledger::new();
        for t in 0..3 {
            ledger.push(LedgerEntry {
                t,
                unit: UnitId(0),
                partition: PartitionId(0),
                obs: o(0),
                action: a(0),
                reward_k: 1,
                next_obs: o(0),
                spawned: vec![],
            });
        }
        let members = BTreeSet::from([UnitId(0)]);
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let ret =
            episode_return(&ledger, &members, &r(1, 2), 0, Horizon::Finite(2), &cent).unwrap();
        assert_eq!(ret.value, r(7, 4));
    }
}
