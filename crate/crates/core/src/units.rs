//! Units, the reward ledger, partitions, and return accounting.
//!
//! Rewards are *quantized*: every reward is an integer count `k` of a fixed
//! currency quantum (default 1/100).  The ledger therefore stores integers,
//! and discreteness is a type-level fact rather than a post-hoc check —
//! [`quantize_reward`] is the single gate where raw rational amounts become
//! counts, and it refuses anything that is not an exact non-negative
//! multiple.
//!
//! Units are spawned, never renamed: the registry hands out strictly
//! increasing ids, and a spawned unit starts with an empty history anchored
//! at the observation its parent's transition produced.
//!
//! Discounting uses the global clock: the weight of a reward earned at time
//! `t` is `gamma^t` regardless of the earning unit's age.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionId, History, ObservationId, TimeIndex};

/// Identifier of a unit; strictly increasing, never reused.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct UnitId(pub u64);

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

/// Identifier of a partition within a partitioning.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct PartitionId(pub u32);

impl fmt::Display for PartitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Errors from quantization and return accounting.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnitsError {
    #[error("reward {value} is negative")]
    NegativeReward { value: String },
    #[error("reward {value} is not an integer multiple of the quantum {cent}")]
    NotAMultiple { value: String, cent: String },
    #[error("reward multiple does not fit in 64 bits")]
    RewardOverflow,
    #[error("currency quantum {got} must be positive")]
    InvalidCent { got: String },
    #[error("discount factor {got} outside [0, 1]")]
    InvalidGamma { got: String },
    #[error("undiscounted objective over an unbounded horizon diverges")]
    DivergentObjective,
}

/// The currency quantum: the smallest expressible reward amount.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CentQuantum(BigRational);

impl CentQuantum {
    pub fn new(value: BigRational) -> Result<Self, UnitsError> {
        if !value.is_positive() {
            return Err(UnitsError::InvalidCent {
                got: crate::dist::format_rational(&value),
            });
        }
        Ok(CentQuantum(value))
    }

    /// The conventional default, 1/100.
    pub fn hundredth() -> Self {
        CentQuantum(BigRational::new(1.into(), 100.into()))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }
}

impl Default for CentQuantum {
    fn default() -> Self {
        CentQuantum::hundredth()
    }
}

/// Convert a raw rational reward into its integer quantum count.  The only
/// admission gate: negative amounts and non-multiples are refused, never
/// rounded.
pub fn quantize_reward(raw: &BigRational, cent: &CentQuantum) -> Result<u64, UnitsError> {
    if raw.is_negative() {
        return Err(UnitsError::NegativeReward {
            value: crate::dist::format_rational(raw),
        });
    }
    let ratio = raw / cent.value();
    if !ratio.is_integer() {
        return Err(UnitsError::NotAMultiple {
            value: crate::dist::format_rational(raw),
            cent: crate::dist::format_rational(cent.value()),
        });
    }
    ratio.to_integer().to_u64().ok_or(UnitsError::RewardOverflow)
}

/// One live (or retired) unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CapitalUnit {
    pub id: UnitId,
    /// The unit whose transition spawned this one; `None` for initial units.
    pub parent: Option<UnitId>,
    pub history: History,
    pub alive: bool,
}

impl CapitalUnit {
    pub fn birth_time(&self) -> TimeIndex {
        self.history.birth_time
    }

    pub fn origin(&self) -> ObservationId {
        self.history.origin
    }
}

/// Owns every unit ever created in a run and the id counter.
#[derive(Debug, Clone, Default)]
pub struct UnitRegistry {
    units: BTreeMap<UnitId, CapitalUnit>,
    next_id: u64,
}

impl UnitRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    fn fresh_id(&mut self) -> UnitId {
        let id = UnitId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Create an initial unit (no parent) born into `origin` at `birth_time`.
    pub fn create_root(&mut self, origin: ObservationId, birth_time: TimeIndex) -> UnitId {
        let id = self.fresh_id();
        self.units.insert(
            id,
            CapitalUnit {
                id,
                parent: None,
                history: History::empty(origin, birth_time),
                alive: true,
            },
        );
        id
    }

    /// Spawn `count` children from a parent transition that happened at time
    /// `t` and produced `next_obs`.  Children are born at `t + 1`, observe
    /// exactly `next_obs`, and start with empty histories.
    pub fn spawn_units(
        &mut self,
        parent: UnitId,
        next_obs: ObservationId,
        t: TimeIndex,
        count: u32,
    ) -> Vec<UnitId> {
        let mut ids = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let id = self.fresh_id();
            self.units.insert(
                id,
                CapitalUnit {
                    id,
                    parent: Some(parent),
                    history: History::empty(next_obs, t + 1),
                    alive: true,
                },
            );
            ids.push(id);
        }
        ids
    }

    /// Record one event on a unit's history.
    pub fn push_event(&mut self, id: UnitId, action: ActionId, observation: ObservationId) {
        let unit = self.units.get_mut(&id).expect("event for unknown unit");
        unit.history = unit.history.with_event(action, observation);
    }

    pub fn unit(&self, id: UnitId) -> Option<&CapitalUnit> {
        self.units.get(&id)
    }

    pub fn units(&self) -> impl Iterator<Item = &CapitalUnit> {
        self.units.values()
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Ids of living units, ascending.
    pub fn alive_ids(&self) -> Vec<UnitId> {
        self.units
            .values()
            .filter(|u| u.alive)
            .map(|u| u.id)
            .collect()
    }

    /// Units alive at time `t`, i.e. born no later than `t` (units are never
    /// retired by the shipped groundings, but the flag is honored).
    pub fn alive_at(&self, t: TimeIndex) -> Vec<UnitId> {
        self.units
            .values()
            .filter(|u| u.alive && u.birth_time() <= t)
            .map(|u| u.id)
            .collect()
    }
}

/// The joint observation of a set of units: current observations in unit-id
/// order, one slot per member.
pub fn joint_observation(registry: &UnitRegistry, members: &BTreeSet<UnitId>) -> Vec<ObservationId> {
    members
        .iter()
        .filter_map(|id| registry.unit(*id))
        .filter(|u| u.alive)
        .map(|u| u.history.current_observation())
        .collect()
}

/// One ledger line: everything a single unit did in a single step.  Field
/// order is fixed so serialized logs diff cleanly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub t: TimeIndex,
    pub unit: UnitId,
    pub partition: PartitionId,
    pub obs: ObservationId,
    pub action: ActionId,
    pub reward_k: u64,
    pub next_obs: ObservationId,
    pub spawned: Vec<UnitId>,
}

/// Append-only event log of a run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Serialize as JSON Lines with the fixed field order.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let mut entries = Vec::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(line)?);
        }
        Ok(Ledger { entries })
    }
}

/// Quanta accumulated by `members` through time `up_to` (inclusive).
pub fn accumulated_capital(ledger: &Ledger, members: &BTreeSet<UnitId>, up_to: TimeIndex) -> u64 {
    ledger
        .entries()
        .iter()
        .filter(|e| e.t <= up_to && members.contains(&e.unit))
        .map(|e| e.reward_k)
        .sum()
}

/// Horizon of a discounted objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horizon {
    /// Sum through this final time, inclusive.
    Finite(TimeIndex),
    /// The objective is conceptually infinite; the sum is truncated here and
    /// a tail bound is reported.  Requires `gamma < 1`.
    UnboundedTruncated(TimeIndex),
}

impl Horizon {
    pub fn last_time(&self) -> TimeIndex {
        match self {
            Horizon::Finite(t) | Horizon::UnboundedTruncated(t) => *t,
        }
    }
}

/// A discounted return, exact, with an optional truncation diagnostic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscountedReturn {
    pub value: BigRational,
    /// For truncated unbounded horizons: the discounted mass the truncation
    /// could be discarding, assuming every later step paid at most the
    /// largest per-step total observed in the summed window.
    pub tail_bound: Option<BigRational>,
}

/// `gamma^t` with the convention `0^0 = 1`.
fn gamma_pow(gamma: &BigRational, t: TimeIndex) -> BigRational {
    if t == 0 {
        return BigRational::one();
    }
    let mut result = BigRational::one();
    let mut base = gamma.clone();
    let mut exp = t;
    while exp > 0 {
        if exp & 1 == 1 {
            result *= &base;
        }
        exp >>= 1;
        if exp > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Exact discounted return of `members` from time `tau` through the horizon:
/// the sum over ledger entries of `gamma^t * reward_k * cent`, exponent on
/// the global clock.
pub fn discounted_return(
    ledger: &Ledger,
    members: &BTreeSet<UnitId>,
    gamma: &BigRational,
    tau: TimeIndex,
    horizon: Horizon,
    cent: &CentQuantum,
) -> Result<DiscountedReturn, UnitsError> {
    if gamma.is_negative() || gamma > &BigRational::one() {
        return Err(UnitsError::InvalidGamma {
            got: crate::dist::format_rational(gamma),
        });
    }
    if gamma.is_one() && matches!(horizon, Horizon::UnboundedTruncated(_)) {
        return Err(UnitsError::DivergentObjective);
    }
    let last = horizon.last_time();
    let mut per_step: BTreeMap<TimeIndex, u64> = BTreeMap::new();
    for e in ledger.entries() {
        if e.t >= tau && e.t <= last && members.contains(&e.unit) {
            *per_step.entry(e.t).or_insert(0) += e.reward_k;
        }
    }
    let mut value = BigRational::zero();
    for (&t, &k) in &per_step {
        value += gamma_pow(gamma, t) * BigRational::from_integer(k.into()) * cent.value();
    }
    let tail_bound = match horizon {
        Horizon::Finite(_) => None,
        Horizon::UnboundedTruncated(t_end) => {
            let max_step = per_step.values().copied().max().unwrap_or(0);
            let rate = BigRational::from_integer(max_step.into()) * cent.value();
            // sum_{t > t_end} gamma^t * rate = gamma^(t_end+1) / (1 - gamma) * rate
            let geo = gamma_pow(gamma, t_end + 1) / (BigRational::one() - gamma);
            Some(geo * rate)
        }
    };
    Ok(DiscountedReturn { value, tail_bound })
}

/// One block of a partitioning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub id: PartitionId,
    pub members: BTreeSet<UnitId>,
}

/// A full partitioning of the living units.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Partitioning {
    pub partitions: Vec<Partition>,
}

impl Partitioning {
    /// The coarsest partitioning: everyone in one block.
    pub fn single(id: PartitionId, members: BTreeSet<UnitId>) -> Self {
        Partitioning {
            partitions: vec![Partition { id, members }],
        }
    }

    pub fn partition(&self, id: PartitionId) -> Option<&Partition> {
        self.partitions.iter().find(|p| p.id == id)
    }

    /// The partition a unit belongs to, if exactly determinable.
    pub fn partition_of(&self, unit: UnitId) -> Option<PartitionId> {
        self.partitions
            .iter()
            .find(|p| p.members.contains(&unit))
            .map(|p| p.id)
    }
}

/// Findings of a partitioning validity check.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartitionReport {
    /// Units claimed by more than one partition, with the claimants.
    pub overlapping: Vec<(UnitId, Vec<PartitionId>)>,
    /// Living units no partition claims.
    pub uncovered: Vec<UnitId>,
    /// Partitions with no members.
    pub empty_partitions: Vec<PartitionId>,
    /// Members that are not living units.
    pub foreign: Vec<(PartitionId, UnitId)>,
}

impl PartitionReport {
    /// Valid = disjoint, covering, and all partitions non-empty.
    pub fn is_valid(&self) -> bool {
        self.overlapping.is_empty()
            && self.uncovered.is_empty()
            && self.empty_partitions.is_empty()
            && self.foreign.is_empty()
    }
}

/// Check that a partitioning is disjoint, covers the living units exactly,
/// and contains no empty blocks.
pub fn check_partitioning(partitioning: &Partitioning, alive: &BTreeSet<UnitId>) -> PartitionReport {
    let mut report = PartitionReport::default();
    let mut claimed: BTreeMap<UnitId, Vec<PartitionId>> = BTreeMap::new();
    for p in &partitioning.partitions {
        if p.members.is_empty() {
            report.empty_partitions.push(p.id);
        }
        for &u in &p.members {
            claimed.entry(u).or_default().push(p.id);
            if !alive.contains(&u) {
                report.foreign.push((p.id, u));
            }
        }
    }
    for (u, owners) in &claimed {
        if owners.len() > 1 {
            report.overlapping.push((*u, owners.clone()));
        }
    }
    for &u in alive {
        if !claimed.contains_key(&u) {
            report.uncovered.push(u);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn o(i: u32) -> ObservationId {
        ObservationId(i)
    }

    fn act(i: u32) -> ActionId {
        ActionId(i)
    }

    fn entry(t: TimeIndex, unit: u64, k: u64) -> LedgerEntry {
        LedgerEntry {
            t,
            unit: UnitId(unit),
            partition: PartitionId(0),
            obs: o(0),
            action: act(0),
            reward_k: k,
            next_obs: o(0),
            spawned: vec![],
        }
    }

    #[test]
    fn quantize_accepts_exact_multiples() {
        let cent = CentQuantum::hundredth();
        assert_eq!(quantize_reward(&r(5, 100), &cent).unwrap(), 5);
        assert_eq!(quantize_reward(&r(0, 1), &cent).unwrap(), 0);
        assert_eq!(quantize_reward(&r(3, 1), &cent).unwrap(), 300);
    }

    #[test]
    fn quantize_rejects_non_multiples_and_negatives() {
        let cent = CentQuantum::hundredth();
        assert!(matches!(
            quantize_reward(&r(1, 300), &cent),
            Err(UnitsError::NotAMultiple { .. })
        ));
        assert!(matches!(
            quantize_reward(&r(-1, 100), &cent),
            Err(UnitsError::NegativeReward { .. })
        ));
    }

    #[test]
    fn quantize_with_custom_quantum() {
        let cent = CentQuantum::new(r(1, 3)).unwrap();
        assert_eq!(quantize_reward(&r(2, 3), &cent).unwrap(), 2);
        assert!(matches!(
            quantize_reward(&r(1, 2), &cent),
            Err(UnitsError::NotAMultiple { .. })
        ));
        assert!(matches!(
            CentQuantum::new(r(0, 1)),
            Err(UnitsError::InvalidCent { .. })
        ));
    }

    #[test]
    fn registry_ids_are_fresh_and_monotone() {
        let mut reg = UnitRegistry::new();
        let root = reg.create_root(o(0), 0);
        let kids = reg.spawn_units(root, o(2), 3, 2);
        let root2 = reg.create_root(o(1), 0);
        let mut all: Vec<u64> = vec![root.0];
        all.extend(kids.iter().map(|u| u.0));
        all.push(root2.0);
        assert_eq!(all, vec![0, 1, 2, 3]);
        let kid = reg.unit(kids[0]).unwrap();
        assert_eq!(kid.parent, Some(root));
        assert_eq!(kid.birth_time(), 4, "children are born one step after the transition");
        assert_eq!(kid.origin(), o(2), "children observe the transition's outcome");
        assert!(kid.history.is_empty());
    }

    #[test]
    fn joint_observation_is_ordered_and_live_only() {
        let mut reg = UnitRegistry::new();
        let u0 = reg.create_root(o(5), 0);
        let u1 = reg.create_root(o(3), 0);
        reg.push_event(u1, act(0), o(7));
        let members = BTreeSet::from([u0, u1]);
        assert_eq!(joint_observation(&reg, &members), vec![o(5), o(7)]);
    }

    #[test]
    fn accumulated_capital_sums_members_through_time() {
        let mut ledger = Ledger::new();
        ledger.push(entry(0, 0, 2));
        ledger.push(entry(1, 0, 3));
        ledger.push(entry(1, 1, 10));
        ledger.push(entry(2, 0, 1));
        let just0 = BTreeSet::from([UnitId(0)]);
        let both = BTreeSet::from([UnitId(0), UnitId(1)]);
        assert_eq!(accumulated_capital(&ledger, &just0, 0), 2);
        assert_eq!(accumulated_capital(&ledger, &just0, 1), 5);
        assert_eq!(accumulated_capital(&ledger, &just0, 2), 6);
        assert_eq!(accumulated_capital(&ledger, &both, 2), 16);
        assert_eq!(accumulated_capital(&ledger, &both, 100), 16);
    }

    #[test]
    fn discounted_return_half_gamma_three_ones() {
        // k=1 at t=0,1,2 with gamma=1/2 and a unit quantum: 1 + 1/2 + 1/4.
        let mut ledger = Ledger::new();
        for t in 0..3 {
            ledger.push(entry(t, 0, 1));
        }
        let members = BTreeSet::from([UnitId(0)]);
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let ret = discounted_return(&ledger, &members, &r(1, 2), 0, Horizon::Finite(2), &cent)
            .unwrap();
        assert_eq!(ret.value, r(7, 4));
        assert_eq!(crate::dist::rational_to_f64(&ret.value), 1.75);
        assert_eq!(ret.tail_bound, None);
    }

    #[test]
    fn discounted_return_uses_global_time_exponent() {
        // A unit born late still discounts by absolute t.
        let mut ledger = Ledger::new();
        ledger.push(entry(3, 7, 1));
        let members = BTreeSet::from([UnitId(7)]);
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let ret = discounted_return(&ledger, &members, &r(1, 2), 0, Horizon::Finite(10), &cent)
            .unwrap();
        assert_eq!(ret.value, r(1, 8));
    }

    #[test]
    fn discounted_return_respects_tau_and_horizon_window() {
        let mut ledger = Ledger::new();
        for t in 0..5 {
            ledger.push(entry(t, 0, 1));
        }
        let members = BTreeSet::from([UnitId(0)]);
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let ret = discounted_return(&ledger, &members, &r(1, 1), 2, Horizon::Finite(3), &cent)
            .unwrap();
        assert_eq!(ret.value, r(2, 1), "only t=2 and t=3 fall in the window");
    }

    #[test]
    fn gamma_one_needs_finite_horizon() {
        let ledger = Ledger::new();
        let members = BTreeSet::new();
        let cent = CentQuantum::hundredth();
        let err = discounted_return(
            &ledger,
            &members,
            &r(1, 1),
            0,
            Horizon::UnboundedTruncated(10),
            &cent,
        )
        .unwrap_err();
        assert_eq!(err, UnitsError::DivergentObjective);
        assert!(matches!(
            discounted_return(&ledger, &members, &r(3, 2), 0, Horizon::Finite(1), &cent),
            Err(UnitsError::InvalidGamma { .. })
        ));
        assert!(matches!(
            discounted_return(&ledger, &members, &r(-1, 2), 0, Horizon::Finite(1), &cent),
            Err(UnitsError::InvalidGamma { .. })
        ));
    }

    #[test]
    fn gamma_zero_keeps_only_time_zero() {
        let mut ledger = Ledger::new();
        ledger.push(entry(0, 0, 4));
        ledger.push(entry(1, 0, 9));
        let members = BTreeSet::from([UnitId(0)]);
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let ret = discounted_return(&ledger, &members, &r(0, 1), 0, Horizon::Finite(5), &cent)
            .unwrap();
        assert_eq!(ret.value, r(4, 1), "0^0 = 1, 0^t = 0 for t > 0");
    }

    #[test]
    fn truncated_unbounded_reports_tail_bound() {
        let mut ledger = Ledger::new();
        ledger.push(entry(0, 0, 2));
        ledger.push(entry(1, 0, 2));
        let members = BTreeSet::from([UnitId(0)]);
        let cent = CentQuantum::new(r(1, 1)).unwrap();
        let ret = discounted_return(
            &ledger,
            &members,
            &r(1, 2),
            0,
            Horizon::UnboundedTruncated(1),
            &cent,
        )
        .unwrap();
        assert_eq!(ret.value, r(3, 1));
        // Rate 2 from t=2 on: 2 * (1/4) / (1/2) = 1.
        assert_eq!(ret.tail_bound, Some(r(1, 1)));
    }

    #[test]
    fn ledger_jsonl_field_order_is_stable() {
        let mut ledger = Ledger::new();
        ledger.push(LedgerEntry {
            t: 0,
            unit: UnitId(0),
            partition: PartitionId(0),
            obs: o(0),
            action: act(1),
            reward_k: 5,
            next_obs: o(2),
            spawned: vec![UnitId(1)],
        });
        let mut buf = Vec::new();
        ledger.write_jsonl(&mut buf).unwrap();
        let line = String::from_utf8(buf).unwrap();
        assert_eq!(
            line,
            "{\"t\":0,\"unit\":0,\"partition\":0,\"obs\":0,\"action\":1,\"reward_k\":5,\"next_obs\":2,\"spawned\":[1]}\n"
        );
        let back = Ledger::read_jsonl(&line).unwrap();
        assert_eq!(back, ledger);
    }

    #[test]
    fn partition_check_accepts_a_proper_partitioning() {
        let alive = BTreeSet::from([UnitId(0), UnitId(1), UnitId(2)]);
        let p = Partitioning {
            partitions: vec![
                Partition { id: PartitionId(0), members: BTreeSet::from([UnitId(0), UnitId(2)]) },
                Partition { id: PartitionId(1), members: BTreeSet::from([UnitId(1)]) },
            ],
        };
        let report = check_partitioning(&p, &alive);
        assert!(report.is_valid(), "{report:?}");
        assert_eq!(p.partition_of(UnitId(2)), Some(PartitionId(0)));
    }

    #[test]
    fn partition_check_reports_each_defect() {
        let alive = BTreeSet::from([UnitId(0), UnitId(1), UnitId(2)]);
        let p = Partitioning {
            partitions: vec![
                Partition { id: PartitionId(0), members: BTreeSet::from([UnitId(0), UnitId(1)]) },
                Partition { id: PartitionId(1), members: BTreeSet::from([UnitId(1), UnitId(9)]) },
                Partition { id: PartitionId(2), members: BTreeSet::new() },
            ],
        };
        let report = check_partitioning(&p, &alive);
        assert!(!report.is_valid());
        assert_eq!(report.overlapping, vec![(UnitId(1), vec![PartitionId(0), PartitionId(1)])]);
        assert_eq!(report.uncovered, vec![UnitId(2)]);
        assert_eq!(report.empty_partitions, vec![PartitionId(2)]);
        assert_eq!(report.foreign, vec![(PartitionId(1), UnitId(9))]);
    }

    #[test]
    fn single_partitioning_covers_everything() {
        let alive = BTreeSet::from([UnitId(3), UnitId(5)]);
        let p = Partitioning::single(PartitionId(0), alive.clone());
        assert!(check_partitioning(&p, &alive).is_valid());
    }
}
