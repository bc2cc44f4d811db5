//! Synchronized stepping of a unit population.
//!
//! One step at global time `t`: every partition, in id order, merges its
//! members' histories, asks its agent for a joint action, and advances each
//! member through the environment.  Transitions can mint fresh units; a
//! child is born at `t + 1` into its parent's partition, observing the
//! parent's freshly emitted observation, and first acts on the next step.
//!
//! Randomness is strictly stream-scoped: the agent draw for partition `p`
//! at step `t` of episode `ep` comes from the derived key
//! `(AGENT, ep, p, t)`, and the environment draw for unit `u` from
//! `(DYNAMICS, ep, u, t)`.  No draw depends on iteration order, so a run
//! with the same grounding, agents, seed, and step count is reproducible
//! byte for byte.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::agents::{
    available_for, enumerate_joint_actions, AgentError, EnlargedHistory, PartitionAgent,
    PartitionView, QTransition,
};
use crate::grounding::GroundingSpec;
use crate::model::{EnvironmentModel, ModelError, TimeIndex};
use crate::rng::{domain, StreamRng};
use crate::units::{
    check_partitioning, CentQuantum, Ledger, LedgerEntry, Partition, PartitionId, PartitionReport,
    Partitioning, UnitId, UnitRegistry, UnitsError,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no agent bound to partition {0}")]
    MissingAgent(PartitionId),
    #[error("invalid partitioning entering step {t}: {report:?}")]
    InvalidPartitioning { t: TimeIndex, report: PartitionReport },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Units(#[from] UnitsError),
}

/// How the initial units are grouped into partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// All initial units in one partition (id 0), driven by one agent.
    Single,
    /// One partition per initial unit (ids 0, 1, ...).
    PerUnit,
}

/// A freshly seeded population, ready to run.
#[derive(Debug, Clone)]
pub struct SimSetup {
    pub registry: UnitRegistry,
    pub partitioning: Partitioning,
}

/// Create the initial units of a grounding at time 0 and group them.
pub fn seed_population(grounding: &GroundingSpec, layout: Layout) -> SimSetup {
    let mut registry = UnitRegistry::new();
    let mut ids = Vec::new();
    for _ in 0..grounding.initial_units {
        ids.push(registry.create_root(grounding.origin, 0));
    }
    let partitioning = match layout {
        Layout::Single => Partitioning::single(PartitionId(0), ids.into_iter().collect()),
        Layout::PerUnit => Partitioning {
            partitions: ids
                .into_iter()
                .enumerate()
                .map(|(i, id)| Partition {
                    id: PartitionId(i as u32),
                    members: BTreeSet::from([id]),
                })
                .collect(),
        },
    };
    SimSetup { registry, partitioning }
}

/// One row of the per-step series.  Capital figures are cumulative quanta
/// through this step, inclusive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsRow {
    pub episode: u32,
    pub t: TimeIndex,
    /// Units that acted at this step.
    pub m: u64,
    /// Total quanta accumulated by the whole population so far.
    pub g_total_k: u64,
    /// Cumulative quanta per partition, in id order.
    pub per_partition_k: Vec<(PartitionId, u64)>,
}

/// Everything one episode produced.
#[derive(Debug)]
pub struct EpisodeResult {
    pub episode: u32,
    pub ledger: Ledger,
    /// Final population, histories included.
    pub registry: UnitRegistry,
    /// Final grouping (children appear in their parent's partition).
    pub partitioning: Partitioning,
    pub metrics: Vec<MetricsRow>,
}

/// Agents bound by partition id.  Mutable so learners can update in place.
pub type AgentMap<'a> = BTreeMap<PartitionId, &'a mut (dyn PartitionAgent + 'static)>;

/// Run `steps` synchronized steps from `setup`.
///
/// With `learn` set, each partition's agent receives one joint transition
/// per step (summed partition reward, post-step key, and the next joint
/// action set — empty on the final step, which bootstraps zero).
pub fn run_episode(
    env: &EnvironmentModel,
    setup: SimSetup,
    agents: &mut AgentMap<'_>,
    steps: u64,
    master_seed: u64,
    episode: u32,
    learn: bool,
) -> Result<EpisodeResult, SimError> {
    let SimSetup { mut registry, mut partitioning } = setup;
    for p in &partitioning.partitions {
        if !agents.contains_key(&p.id) {
            return Err(SimError::MissingAgent(p.id));
        }
    }
    // Process partitions in id order regardless of declaration order.
    partitioning.partitions.sort_by_key(|p| p.id);

    let mut ledger = Ledger::new();
    let mut metrics = Vec::with_capacity(steps as usize);
    let mut cumulative: BTreeMap<PartitionId, u64> =
        partitioning.partitions.iter().map(|p| (p.id, 0)).collect();
    let mut g_total: u64 = 0;

    for t in 0..steps {
        let alive: BTreeSet<UnitId> = registry.alive_ids().into_iter().collect();
        let report = check_partitioning(&partitioning, &alive);
        if !report.is_valid() {
            return Err(SimError::InvalidPartitioning { t, report });
        }

        let mut acted: u64 = 0;
        for pidx in 0..partitioning.partitions.len() {
            let pid = partitioning.partitions[pidx].id;
            // Members already at time t.  Units minted earlier in this same
            // step live at t + 1 and sit the step out.
            let actors: Vec<UnitId> = partitioning.partitions[pidx]
                .members
                .iter()
                .copied()
                .filter(|id| {
                    registry
                        .unit(*id)
                        .is_some_and(|u| u.alive && u.history.current_time() == t)
                })
                .collect();
            if actors.is_empty() {
                continue;
            }
            let enlarged = EnlargedHistory::new(
                actors
                    .iter()
                    .map(|id| (*id, registry.unit(*id).unwrap().history.clone()))
                    .collect(),
            )?;
            let avail = available_for(env, &enlarged)?;
            let view = PartitionView::new(&enlarged, &avail);
            let agent = agents.get_mut(&pid).expect("checked above");
            let mut agent_rng = StreamRng::derived(
                master_seed,
                &[domain::AGENT, episode as u64, pid.0 as u64, t],
            );
            let joint = agent.sample(&view, &mut agent_rng)?;
            let pre_key = learn.then(|| enlarged.joint_key(agent.key_depth()));

            let mut step_reward_k: u64 = 0;
            for (slot, (uid, hist)) in enlarged.members().iter().enumerate() {
                let action = joint.0[slot];
                let mut unit_rng = StreamRng::derived(
                    master_seed,
                    &[domain::DYNAMICS, episode as u64, uid.0, t],
                );
                let outcome = env.env_step(hist, action, &mut unit_rng)?;
                let spawned =
                    registry.spawn_units(*uid, outcome.observation, t, outcome.spawn_count);
                partitioning.partitions[pidx]
                    .members
                    .extend(spawned.iter().copied());
                registry.push_event(*uid, action, outcome.observation);
                ledger.push(LedgerEntry {
                    t,
                    unit: *uid,
                    partition: pid,
                    obs: hist.current_observation(),
                    action,
                    reward_k: outcome.reward_k,
                    next_obs: outcome.observation,
                    spawned,
                });
                step_reward_k += outcome.reward_k;
            }
            acted += actors.len() as u64;
            *cumulative.get_mut(&pid).expect("seeded above") += step_reward_k;
            g_total += step_reward_k;

            if learn {
                let next_enlarged = EnlargedHistory::new(
                    actors
                        .iter()
                        .map(|id| (*id, registry.unit(*id).unwrap().history.clone()))
                        .collect(),
                )?;
                let next_avail = available_for(env, &next_enlarged)?;
                let next_actions = if t + 1 == steps {
                    Vec::new()
                } else {
                    enumerate_joint_actions(&next_avail)
                };
                let agent = agents.get_mut(&pid).expect("checked above");
                let transition = QTransition {
                    key: pre_key.expect("set when learning"),
                    action: joint,
                    reward_k: step_reward_k,
                    next_key: next_enlarged.joint_key(agent.key_depth()),
                    next_actions,
                };
                agent.learn(&transition);
            }
        }

        metrics.push(MetricsRow {
            episode,
            t,
            m: acted,
            g_total_k: g_total,
            per_partition_k: cumulative.iter().map(|(k, v)| (*k, *v)).collect(),
        });
    }

    Ok(EpisodeResult {
        episode,
        ledger,
        registry,
        partitioning,
        metrics,
    })
}

/// Seed a grounding's population and run one episode.
pub fn run_grounding(
    grounding: &GroundingSpec,
    agents: &mut AgentMap<'_>,
    layout: Layout,
    steps: u64,
    master_seed: u64,
    episode: u32,
    learn: bool,
) -> Result<EpisodeResult, SimError> {
    run_episode(
        &grounding.env,
        seed_population(grounding, layout),
        agents,
        steps,
        master_seed,
        episode,
        learn,
    )
}

/// Run `episodes` fresh episodes of the same grounding with the same agents.
/// Learners carry their tables across episodes; each episode reseeds the
/// population and draws from its own random streams.
pub fn run_episodes(
    grounding: &GroundingSpec,
    agents: &mut AgentMap<'_>,
    layout: Layout,
    steps: u64,
    master_seed: u64,
    episodes: u32,
    learn: bool,
) -> Result<Vec<EpisodeResult>, SimError> {
    (0..episodes)
        .map(|ep| run_grounding(grounding, agents, layout, steps, master_seed, ep, learn))
        .collect()
}

/// Render rows as CSV.  Cumulative capital is shown in currency units
/// (quanta times the quantum value); shares are fractions of the total.
pub fn metrics_to_csv(rows: &[MetricsRow], cent: &CentQuantum) -> String {
    let mut ids: BTreeSet<PartitionId> = BTreeSet::new();
    for row in rows {
        ids.extend(row.per_partition_k.iter().map(|(id, _)| *id));
    }
    let mut out = String::from("episode,t,m,g_total_cents");
    for id in &ids {
        out.push_str(&format!(",g_{id}_cents,share_{id}"));
    }
    out.push('\n');
    let cent_f = crate::dist::rational_to_f64(cent.value());
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{:.12}",
            row.episode,
            row.t,
            row.m,
            row.g_total_k as f64 * cent_f
        ));
        let by_id: BTreeMap<PartitionId, u64> = row.per_partition_k.iter().copied().collect();
        for id in &ids {
            let k = by_id.get(id).copied().unwrap_or(0);
            let share = if row.g_total_k == 0 {
                0.0
            } else {
                k as f64 / row.g_total_k as f64
            };
            out.push_str(&format!(",{:.12},{:.12}", k as f64 * cent_f, share));
        }
        out.push('\n');
    }
    out
}

/// Train a tabular learner on a single-partition grounding: `episodes`
/// episodes of `steps` steps, epsilon-greedy behavior, updates on.
pub fn train_q(
    grounding: &GroundingSpec,
    agent: &mut crate::agents::TabularQAgent,
    steps: u64,
    episodes: u32,
    master_seed: u64,
) -> Result<(), SimError> {
    for ep in 0..episodes {
        let mut agents: AgentMap<'_> = BTreeMap::new();
        agents.insert(PartitionId(0), agent as &mut dyn PartitionAgent);
        run_grounding(
            grounding,
            &mut agents,
            Layout::Single,
            steps,
            master_seed,
            ep,
            true,
        )?;
    }
    Ok(())
}
