//! Agent construction from command-line specifications.

use num_rational::BigRational;

use capital_core::agents::{
    CorrelatedAgent, FirstStepAgent, GreedyOneStepAgent, PartitionAgent, RandomAgent,
    RuleTableAgent, TabularQAgent,
};
use capital_core::fixtures::proportional_ids;
use capital_core::model::{ActionId, EnvironmentModel, KeyDepth};
use capital_core::units::CentQuantum;

use crate::CliError;

/// Knobs shared by every agent kind; only some kinds read each one.
pub struct AgentParams {
    pub gamma: BigRational,
    /// Q-learning step size.
    pub alpha: f64,
    /// Q-learning exploration probability.
    pub epsilon: BigRational,
    pub cent: CentQuantum,
}

fn parse_action(s: &str, spec: &str) -> Result<ActionId, CliError> {
    s.trim()
        .strip_prefix('a')
        .and_then(|body| body.parse().ok())
        .map(ActionId)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "agent {spec:?}: expected an action id like `a1`, got {s:?}"
            ))
        })
}

/// Build one agent from its spec string:
///
/// * `random` — independent uniform draw over each member's actions
/// * `correlated` — one shared uniformly drawn action for all members
/// * `greedy` — maximize the summed immediate payout, lexicographic ties
/// * `qtab` — epsilon-greedy tabular Q-learner (`--alpha`, `--epsilon`)
/// * `first-then:<a>:<b>` — `<a>` on a unit's first step, `<b>` afterwards
/// * `mint-once` — `first-then` wired to the proportional grounding's ids
/// * `rules:<file>` — fixed `o<id> -> a<id>` table read from a file
pub fn build_agent(
    spec: &str,
    params: &AgentParams,
    env: &EnvironmentModel,
) -> Result<Box<dyn PartitionAgent>, CliError> {
    match spec {
        "random" => Ok(Box::new(RandomAgent::new(params.gamma.clone()))),
        "correlated" => Ok(Box::new(CorrelatedAgent::new(params.gamma.clone()))),
        "greedy" => Ok(Box::new(GreedyOneStepAgent::new(
            params.gamma.clone(),
            env.clone(),
        ))),
        "qtab" => Ok(Box::new(TabularQAgent::new(
            params.gamma.clone(),
            params.alpha,
            params.epsilon.clone(),
            KeyDepth::Last(1),
            &params.cent,
        ))),
        "mint-once" => Ok(Box::new(FirstStepAgent::new(
            params.gamma.clone(),
            proportional_ids::MINT,
            proportional_ids::IDLE,
        ))),
        other => {
            if let Some(rest) = other.strip_prefix("first-then:") {
                let (first, after) = rest.split_once(':').ok_or_else(|| {
                    CliError::Usage(format!(
                        "agent {other:?}: expected `first-then:<a>:<b>`"
                    ))
                })?;
                Ok(Box::new(FirstStepAgent::new(
                    params.gamma.clone(),
                    parse_action(first, other)?,
                    parse_action(after, other)?,
                )))
            } else if let Some(path) = other.strip_prefix("rules:") {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    CliError::Usage(format!("agent rules file {path:?}: {e}"))
                })?;
                let agent = RuleTableAgent::parse(params.gamma.clone(), &text)
                    .map_err(|e| CliError::Usage(format!("agent rules file {path:?}: {e}")))?;
                Ok(Box::new(agent))
            } else {
                Err(CliError::Usage(format!(
                    "unknown agent {other:?}; expected random, correlated, greedy, qtab, \
                     mint-once, first-then:<a>:<b>, or rules:<file>"
                )))
            }
        }
    }
}

/// One independent agent instance per partition.
pub fn build_agents(
    spec: &str,
    count: u32,
    params: &AgentParams,
    env: &EnvironmentModel,
) -> Result<Vec<Box<dyn PartitionAgent>>, CliError> {
    (0..count).map(|_| build_agent(spec, params, env)).collect()
}
