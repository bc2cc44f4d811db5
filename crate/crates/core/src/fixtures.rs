//! Built-in groundings.
//!
//! Each builder returns a validated [`GroundingSpec`].  The same fixtures are
//! also shipped as text files under `data/groundings/` so the file-format
//! parser is exercised against real content; a test asserts the files match
//! these builders.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::dist::DiscreteDistribution;
use crate::grounding::{GroundingError, GroundingSpec};
use crate::model::{
    ActionId, Epoch, EnvironmentModel, HistoryKey, KeyDepth, ObservationId,
};

fn o(i: u32) -> ObservationId {
    ObservationId(i)
}

fn a(i: u32) -> ActionId {
    ActionId(i)
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn row(entries: &[(u32, (i64, i64))]) -> DiscreteDistribution<ObservationId> {
    DiscreteDistribution::new(
        entries
            .iter()
            .map(|&(obs, (n, d))| (o(obs), ratio(n, d)))
            .collect(),
    )
    .expect("fixture row is a valid distribution")
}

/// Observation ids of the trapdoor world.
pub mod trapdoor_ids {
    use super::*;
    pub const FREE: ObservationId = ObservationId(0);
    pub const GATE: ObservationId = ObservationId(1);
    pub const TRAP: ObservationId = ObservationId(2);
    pub const STAY: ActionId = ActionId(0);
    pub const JUMP: ActionId = ActionId(1);
}

/// Three observations; jumping anywhere outside the trap pays 5 quanta,
/// spawns one unit, and lands in the trap — from which only `stay` is
/// afforded and nothing ever leads back out.  Built to exhibit: quantized
/// rewards in use (P2), matched observation/action slots (P3), availability
/// that depends on the observation (P5), spawning tied to transitions (P6),
/// and an irreversible region (P7).
pub fn make_trapdoor() -> GroundingSpec {
    use trapdoor_ids::*;
    let env = EnvironmentModel::new(
        vec![(FREE, Epoch::ALWAYS), (GATE, Epoch::ALWAYS), (TRAP, Epoch::ALWAYS)],
        vec![(STAY, Epoch::ALWAYS), (JUMP, Epoch::ALWAYS)],
        KeyDepth::Last(0),
        vec![
            ((HistoryKey::bare(FREE), STAY), row(&[(0, (1, 2)), (1, (1, 2))])),
            ((HistoryKey::bare(FREE), JUMP), row(&[(2, (1, 1))])),
            ((HistoryKey::bare(GATE), STAY), row(&[(0, (1, 2)), (1, (1, 2))])),
            ((HistoryKey::bare(GATE), JUMP), row(&[(2, (1, 1))])),
            ((HistoryKey::bare(TRAP), STAY), row(&[(2, (1, 1))])),
        ],
        vec![((FREE, JUMP), 5), ((GATE, JUMP), 5)],
        vec![((FREE, JUMP), 1), ((GATE, JUMP), 1)],
    )
    .expect("trapdoor environment is well-formed");
    GroundingSpec::new(
        "trapdoor",
        env,
        1,
        FREE,
        BTreeSet::from([2, 3, 5, 6, 7]),
        None,
    )
    .expect("trapdoor grounding is well-formed")
}

/// Ids of the epoch world.
pub mod epoch_ids {
    use super::*;
    pub const BASE: ObservationId = ObservationId(0);
    pub const LATE: ObservationId = ObservationId(1);
    pub const WAIT: ActionId = ActionId(0);
    pub const ENTER: ActionId = ActionId(1);
    /// First time the late observation and its action are active.
    pub const OPENING: u64 = 5;
}

/// One base observation forever; a second observation and the action leading
/// to it activate at t=5.  Before then neither can occur in any realizable
/// history.  Built to exhibit time-dependent actions (P4) and observations
/// (P9).
pub fn make_epoch() -> GroundingSpec {
    use epoch_ids::*;
    let env = EnvironmentModel::new(
        vec![(BASE, Epoch::ALWAYS), (LATE, Epoch::from_start(OPENING))],
        vec![(WAIT, Epoch::ALWAYS), (ENTER, Epoch::from_start(OPENING))],
        KeyDepth::Last(0),
        vec![
            ((HistoryKey::bare(BASE), WAIT), row(&[(0, (1, 1))])),
            ((HistoryKey::bare(BASE), ENTER), row(&[(1, (1, 1))])),
            ((HistoryKey::bare(LATE), WAIT), row(&[(0, (1, 1))])),
            ((HistoryKey::bare(LATE), ENTER), row(&[(1, (1, 1))])),
        ],
        vec![((BASE, ENTER), 2), ((LATE, ENTER), 1)],
        vec![],
    )
    .expect("epoch environment is well-formed");
    GroundingSpec::new("epoch", env, 1, BASE, BTreeSet::from([4, 9]), None)
        .expect("epoch grounding is well-formed")
}

/// Two observations, two actions, every transition uniform, everything
/// active forever.  The negative control: nothing is time-dependent,
/// availability is uniform, and no region is irreversible.
pub fn make_full_support() -> GroundingSpec {
    let mut dynamics = Vec::new();
    for obs in 0..2u32 {
        for act in 0..2u32 {
            dynamics.push((
                (HistoryKey::bare(o(obs)), a(act)),
                row(&[(0, (1, 2)), (1, (1, 2))]),
            ));
        }
    }
    let env = EnvironmentModel::new(
        vec![(o(0), Epoch::ALWAYS), (o(1), Epoch::ALWAYS)],
        vec![(a(0), Epoch::ALWAYS), (a(1), Epoch::ALWAYS)],
        KeyDepth::Last(0),
        dynamics,
        vec![((o(1), a(1)), 1)],
        vec![],
    )
    .expect("full-support environment is well-formed");
    GroundingSpec::new("full-support", env, 1, o(0), BTreeSet::new(), None)
        .expect("full-support grounding is well-formed")
}

/// Action ids of the market grid.
pub mod grid_ids {
    use super::*;
    pub const NORTH: ActionId = ActionId(0);
    pub const SOUTH: ActionId = ActionId(1);
    pub const WEST: ActionId = ActionId(2);
    pub const EAST: ActionId = ActionId(3);
    pub const HARVEST: ActionId = ActionId(4);
    /// Reward for one harvest, in quanta.
    pub const HARVEST_K: u64 = 5;
}

/// Observation id of a grid cell.
pub fn grid_cell(width: u32, x: u32, y: u32) -> ObservationId {
    ObservationId(y * width + x)
}

/// A `width` x `height` grid.  Cells are observations; four deterministic
/// clamped movement actions work everywhere; `harvest` exists only on the
/// single resource cell at (0, 0), pays [`grid_ids::HARVEST_K`] quanta,
/// stays put, and spawns `spawn_yield` units.  Units start in the far
/// corner.
pub fn make_market_grid(
    width: u32,
    height: u32,
    spawn_yield: u32,
) -> Result<GroundingSpec, GroundingError> {
    use grid_ids::*;
    if width == 0 || height == 0 || width as u64 * height as u64 > 10_000 {
        return Err(GroundingError::Invalid(format!(
            "grid {width}x{height} outside supported dimensions (1..=10000 cells)"
        )));
    }
    let mut observations = Vec::new();
    let mut dynamics = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let here = grid_cell(width, x, y);
            observations.push((here, Epoch::ALWAYS));
            let moves = [
                (NORTH, x, y.saturating_sub(1)),
                (SOUTH, x, (y + 1).min(height - 1)),
                (WEST, x.saturating_sub(1), y),
                (EAST, (x + 1).min(width - 1), y),
            ];
            for (act, nx, ny) in moves {
                dynamics.push((
                    (HistoryKey::bare(here), act),
                    DiscreteDistribution::point(grid_cell(width, nx, ny)),
                ));
            }
        }
    }
    let resource = grid_cell(width, 0, 0);
    dynamics.push((
        (HistoryKey::bare(resource), HARVEST),
        DiscreteDistribution::point(resource),
    ));
    let env = EnvironmentModel::new(
        observations,
        vec![
            (NORTH, Epoch::ALWAYS),
            (SOUTH, Epoch::ALWAYS),
            (WEST, Epoch::ALWAYS),
            (EAST, Epoch::ALWAYS),
            (HARVEST, Epoch::ALWAYS),
        ],
        KeyDepth::Last(0),
        dynamics,
        vec![((resource, HARVEST), HARVEST_K)],
        vec![((resource, HARVEST), spawn_yield)],
    )?;
    GroundingSpec::new(
        format!("market-grid-{width}x{height}"),
        env,
        1,
        grid_cell(width, width - 1, height - 1),
        BTreeSet::from([5]),
        None,
    )
}

/// Two units in one world where the next observation simply copies the
/// chosen action's index.  The environment is uncoupled; any correlation
/// between the units comes purely from the joint policy driving them.  This
/// is the entropy workbench.
pub fn make_coupled_pair() -> GroundingSpec {
    let mut dynamics = Vec::new();
    for obs in 0..2u32 {
        for act in 0..2u32 {
            dynamics.push((
                (HistoryKey::bare(o(obs)), a(act)),
                DiscreteDistribution::point(o(act)),
            ));
        }
    }
    let env = EnvironmentModel::new(
        vec![(o(0), Epoch::ALWAYS), (o(1), Epoch::ALWAYS)],
        vec![(a(0), Epoch::ALWAYS), (a(1), Epoch::ALWAYS)],
        KeyDepth::Last(0),
        dynamics,
        vec![],
        vec![],
    )
    .expect("coupled-pair environment is well-formed");
    GroundingSpec::new("coupled-pair", env, 2, o(0), BTreeSet::new(), None)
        .expect("coupled-pair grounding is well-formed")
}

/// Ids of the proportional world.
pub mod proportional_ids {
    use super::*;
    pub const FLOOR: ObservationId = ObservationId(0);
    pub const MINT: ActionId = ActionId(0);
    pub const IDLE: ActionId = ActionId(1);
}

/// One observation; minting pays one quantum and spawns one unit, idling
/// does nothing.  Under a policy that mints exactly on each unit's first
/// step, population and accumulated quanta advance in lockstep:
/// `m_t = G_t = t + 1`.
pub fn make_proportional() -> GroundingSpec {
    use proportional_ids::*;
    let env = EnvironmentModel::new(
        vec![(FLOOR, Epoch::ALWAYS)],
        vec![(MINT, Epoch::ALWAYS), (IDLE, Epoch::ALWAYS)],
        KeyDepth::Last(0),
        vec![
            ((HistoryKey::bare(FLOOR), MINT), DiscreteDistribution::point(FLOOR)),
            ((HistoryKey::bare(FLOOR), IDLE), DiscreteDistribution::point(FLOOR)),
        ],
        vec![((FLOOR, MINT), 1)],
        vec![((FLOOR, MINT), 1)],
    )
    .expect("proportional environment is well-formed");
    GroundingSpec::new(
        "proportional",
        env,
        1,
        FLOOR,
        BTreeSet::from([2, 3, 6]),
        Some(1),
    )
    .expect("proportional grounding is well-formed")
}

/// Resolve a built-in grounding by name.  `market-grid` defaults to 3x3 with
/// spawn yield 1.
pub fn builtin(name: &str) -> Option<GroundingSpec> {
    match name {
        "trapdoor" => Some(make_trapdoor()),
        "epoch" => Some(make_epoch()),
        "full-support" => Some(make_full_support()),
        "market-grid" => Some(make_market_grid(3, 3, 1).expect("3x3 grid is valid")),
        "coupled-pair" => Some(make_coupled_pair()),
        "proportional" => Some(make_proportional()),
        _ => None,
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 6] = [
    "trapdoor",
    "epoch",
    "full-support",
    "market-grid",
    "coupled-pair",
    "proportional",
];
