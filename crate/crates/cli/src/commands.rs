//! Implementations of the four subcommands.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;

use capital_core::agents::EnlargedHistory;
use capital_core::entropy::{analyze_partition, EntropyMethod, DEFAULT_ENUMERATION_CAP};
use capital_core::fixtures;
use capital_core::grounding::{self, GroundingSpec};
use capital_core::agents::PartitionAgent;
use capital_core::model::{enumerate_realizable_histories, History, TimeIndex, UniformPolicy};
use capital_core::propcheck::{check_all, CheckConfig, CheckStatus};
use capital_core::sim::{
    metrics_to_csv, run_episodes, AgentMap, EpisodeResult, Layout, MetricsRow,
};
use capital_core::units::{CentQuantum, Partition, PartitionId, UnitId, UnitRegistry};

use crate::agent::{build_agents, AgentParams};
use crate::config::{merge, merge_flag, rational_or, require, ConfigMap};
use crate::{CheckArgs, CliError, EntropyArgs, EnumerateArgs, RunArgs};

fn run_err(e: impl std::fmt::Display) -> CliError {
    CliError::Run(e.to_string())
}

/// Write one line to stdout.  A consumer that stopped reading
/// (`capsim enumerate --list | head`) ends the program quietly with success
/// instead of panicking on the broken pipe.
fn emit(line: std::fmt::Arguments<'_>) {
    use std::io::Write;
    let mut out = std::io::stdout();
    if let Err(e) = out.write_fmt(line).and_then(|()| out.write_all(b"\n")) {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        panic!("stdout write failed: {e}");
    }
}

macro_rules! emitln {
    ($($t:tt)*) => {
        emit(format_args!($($t)*))
    };
}

/// Resolve `--grounding`: a built-in name first, then a file path.
fn load_grounding(spec: &str) -> Result<GroundingSpec, CliError> {
    if let Some(g) = fixtures::builtin(spec) {
        return Ok(g);
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "grounding {spec:?} is neither a built-in name ({}) nor a readable file",
            fixtures::BUILTIN_NAMES.join(", ")
        )));
    }
    grounding::load_file(path).map_err(|e| CliError::Usage(format!("grounding {spec:?}: {e}")))
}

fn parse_layout(s: Option<String>) -> Result<Layout, CliError> {
    match s.as_deref() {
        None | Some("single") => Ok(Layout::Single),
        Some("per-unit") => Ok(Layout::PerUnit),
        Some(other) => Err(CliError::Usage(format!(
            "layout {other:?}: expected `single` or `per-unit`"
        ))),
    }
}

fn partition_count(layout: Layout, grounding: &GroundingSpec) -> u32 {
    match layout {
        Layout::Single => 1,
        Layout::PerUnit => grounding.initial_units,
    }
}

fn ensure_out_dir(out: &Option<PathBuf>, cfg: &ConfigMap) -> Result<PathBuf, CliError> {
    let dir = merge(out.clone(), cfg, "out")?.unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(run_err)?;
    Ok(dir)
}

fn agent_params(
    gamma: Option<String>,
    alpha: Option<f64>,
    epsilon: Option<String>,
    cent: Option<String>,
    cfg: &ConfigMap,
) -> Result<AgentParams, CliError> {
    let cent_value = rational_or(merge(cent, cfg, "cent")?, (1, 100), "cent")?;
    let gamma = rational_or(merge(gamma, cfg, "gamma")?, (1, 2), "gamma")?;
    let unit_range = |what: &str, v: &BigRational| {
        if v < &BigRational::from_integer(0.into()) || v > &BigRational::from_integer(1.into()) {
            return Err(CliError::Usage(format!("{what} must lie in [0, 1], got {v}")));
        }
        Ok(())
    };
    unit_range("gamma", &gamma)?;
    let alpha = merge(alpha, cfg, "alpha")?.unwrap_or(0.5);
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let epsilon = rational_or(merge(epsilon, cfg, "epsilon")?, (1, 10), "epsilon")?;
    unit_range("epsilon", &epsilon)?;
    Ok(AgentParams {
        gamma,
        alpha,
        epsilon,
        cent: CentQuantum::new(cent_value).map_err(|e| CliError::Usage(format!("cent: {e}")))?,
    })
}

fn cents_of(k: u64, cent: &CentQuantum) -> f64 {
    capital_core::dist::rational_to_f64(
        &(BigRational::from_integer(BigInt::from(k)) * cent.value()),
    )
}

/// Bind partition `i` to agent `i` and drive the episodes.  Confining the
/// agent map to this frame lets callers reuse the boxed agents afterwards.
fn drive(
    grounding: &GroundingSpec,
    boxed: &mut [Box<dyn PartitionAgent>],
    layout: Layout,
    steps: u64,
    seed: u64,
    episodes: u32,
    learn: bool,
) -> Result<Vec<EpisodeResult>, CliError> {
    let mut agents: AgentMap<'_> = boxed
        .iter_mut()
        .enumerate()
        .map(|(i, a)| (PartitionId(i as u32), a.as_mut()))
        .collect();
    run_episodes(grounding, &mut agents, layout, steps, seed, episodes, learn).map_err(run_err)
}

pub fn cmd_run(args: RunArgs, cfg: &ConfigMap) -> Result<(), CliError> {
    let grounding = load_grounding(&require(merge(args.grounding, cfg, "grounding")?, "grounding")?)?;
    let seed = require(merge(args.seed, cfg, "seed")?, "seed")?;
    let steps = merge(args.steps, cfg, "steps")?.unwrap_or(10);
    let episodes = merge(args.episodes, cfg, "episodes")?.unwrap_or(1);
    let layout = parse_layout(merge(args.layout, cfg, "layout")?)?;
    let train = merge_flag(args.train, cfg, "train")?;
    let params = agent_params(args.gamma, args.alpha, args.epsilon, args.cent, cfg)?;
    let spec = merge(args.agent, cfg, "agent")?.unwrap_or_else(|| "random".into());
    let out = ensure_out_dir(&args.out, cfg)?;

    let mut boxed = build_agents(&spec, partition_count(layout, &grounding), &params, &grounding.env)?;
    let results = drive(&grounding, &mut boxed, layout, steps, seed, episodes, train)?;

    let mut rows: Vec<MetricsRow> = Vec::new();
    for r in &results {
        let name = if r.episode == 0 {
            "ledger.jsonl".to_string()
        } else {
            format!("ledger.ep{}.jsonl", r.episode)
        };
        let file = fs::File::create(out.join(&name)).map_err(run_err)?;
        r.ledger.write_jsonl(BufWriter::new(file)).map_err(run_err)?;
        rows.extend(r.metrics.iter().cloned());

        let last = r.metrics.last().expect("at least one step");
        emitln!(
            "episode {}: {} steps, {} units, G = {:.2} ({} quanta) -> {}",
            r.episode,
            steps,
            r.registry.len(),
            cents_of(last.g_total_k, &params.cent),
            last.g_total_k,
            out.join(&name).display(),
        );
    }
    let metrics_path = out.join("metrics.csv");
    fs::write(&metrics_path, metrics_to_csv(&rows, &params.cent)).map_err(run_err)?;
    emitln!("wrote {}", metrics_path.display());
    Ok(())
}

fn render_status(status: &CheckStatus) -> String {
    match status {
        CheckStatus::Witnessed => "WITNESSED".to_string(),
        CheckStatus::Refuted { within_depth: Some(d) } => {
            format!("REFUTED (no witness within depth {d})")
        }
        CheckStatus::Refuted { within_depth: None } => "REFUTED".to_string(),
        CheckStatus::Inconclusive { reason } => format!("INCONCLUSIVE ({reason})"),
    }
}

pub fn cmd_check(args: CheckArgs, cfg: &ConfigMap) -> Result<(), CliError> {
    let grounding = load_grounding(&require(merge(args.grounding, cfg, "grounding")?, "grounding")?)?;
    let seed = require(merge(args.seed, cfg, "seed")?, "seed")?;
    let config = CheckConfig {
        steps: merge(args.steps, cfg, "steps")?.unwrap_or(10),
        t_max: merge(args.tmax, cfg, "tmax")?.unwrap_or(10),
        seed,
        node_cap: merge(args.cap, cfg, "cap")?.unwrap_or(1_000_000),
    };
    let params = agent_params(args.gamma, None, None, args.cent, cfg)?;
    let spec = merge(args.agent, cfg, "agent")?.unwrap_or_else(|| "random".into());
    let out = ensure_out_dir(&args.out, cfg)?;

    let mut agent = build_agents(&spec, 1, &params, &grounding.env)?.remove(0);
    let suite = check_all(&grounding, agent.as_mut(), &config).map_err(run_err)?;

    for report in &suite.reports {
        emitln!("P{} {}: {}", report.id, report.name, render_status(&report.status));
    }
    let path = out.join("props.json");
    let mut json = serde_json::to_string_pretty(&suite).map_err(run_err)?;
    json.push('\n');
    fs::write(&path, json).map_err(run_err)?;
    emitln!("wrote {}", path.display());
    Ok(())
}

/// A partition's members at acting time `t`, histories truncated to the
/// events recorded strictly before that step.  Units born later, or whose
/// recorded log ends before `t`, are not part of that step.
fn partition_members_at(
    registry: &UnitRegistry,
    partition: &Partition,
    t: TimeIndex,
) -> Vec<(UnitId, History)> {
    partition
        .members
        .iter()
        .filter_map(|id| {
            let unit = registry.unit(*id)?;
            let h = &unit.history;
            let take = t.checked_sub(h.birth_time)? as usize;
            if take > h.events.len() {
                return None;
            }
            Some((
                *id,
                History {
                    origin: h.origin,
                    birth_time: h.birth_time,
                    events: h.events[..take].to_vec(),
                },
            ))
        })
        .collect()
}

pub fn cmd_entropy(args: EntropyArgs, cfg: &ConfigMap) -> Result<(), CliError> {
    let grounding = load_grounding(&require(merge(args.grounding, cfg, "grounding")?, "grounding")?)?;
    let seed = require(merge(args.seed, cfg, "seed")?, "seed")?;
    let steps = merge(args.steps, cfg, "steps")?.unwrap_or(10);
    let cap = merge(args.cap, cfg, "cap")?.unwrap_or(DEFAULT_ENUMERATION_CAP);
    let mc_n = merge(args.mc_n, cfg, "mc-n")?.unwrap_or(100_000);
    let layout = parse_layout(merge(args.layout, cfg, "layout")?)?;
    let params = agent_params(args.gamma, args.alpha, args.epsilon, args.cent, cfg)?;
    let spec = merge(args.agent, cfg, "agent")?.unwrap_or_else(|| "random".into());
    let out = ensure_out_dir(&args.out, cfg)?;

    let mut boxed = build_agents(&spec, partition_count(layout, &grounding), &params, &grounding.env)?;
    let result = drive(&grounding, &mut boxed, layout, steps, seed, 1, false)?.remove(0);

    let mut csv = String::from(
        "t,partition,unit,H_unit_bits,H_joint_bits,marginal_sum_bits,method,n,ci_low,ci_high\n",
    );
    let mut rows = 0u64;
    for t in 0..steps {
        for partition in &result.partitioning.partitions {
            let members = partition_members_at(&result.registry, partition, t);
            if members.is_empty() {
                continue;
            }
            let enlarged = EnlargedHistory::new(members).map_err(run_err)?;
            let agent = boxed[partition.id.0 as usize].as_ref();
            let step = analyze_partition(
                &grounding.env,
                agent,
                &enlarged,
                cap,
                mc_n,
                seed,
                &[t, partition.id.0 as u64],
            )
            .map_err(run_err)?;
            let (method, n, ci_low, ci_high) = match (&step.method, step.ci) {
                (EntropyMethod::Exact, _) => ("exact", String::new(), String::new(), String::new()),
                (EntropyMethod::MonteCarlo { n }, ci) => {
                    let (lo, hi) = ci.expect("estimated joints carry an interval");
                    ("mc", n.to_string(), format!("{lo:.12}"), format!("{hi:.12}"))
                }
            };
            for (slot, (uid, _)) in enlarged.members().iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{},{:.12},{:.12},{:.12},{},{},{},{}\n",
                    t,
                    partition.id.0,
                    uid.0,
                    step.per_unit_bits[slot],
                    step.joint_bits,
                    step.marginal_sum_bits,
                    method,
                    n,
                    ci_low,
                    ci_high,
                ));
                rows += 1;
            }
        }
    }
    let path = out.join("entropy.csv");
    fs::write(&path, csv).map_err(run_err)?;
    emitln!("analyzed {} steps, {} rows -> {}", steps, rows, path.display());
    Ok(())
}

pub fn cmd_enumerate(args: EnumerateArgs, cfg: &ConfigMap) -> Result<(), CliError> {
    let grounding = load_grounding(&require(merge(args.grounding, cfg, "grounding")?, "grounding")?)?;
    let depth = merge(args.depth, cfg, "depth")?.unwrap_or(4);
    let cap = merge(args.cap, cfg, "cap")?.unwrap_or(1_000_000);
    let list = merge_flag(args.list, cfg, "list")?;

    let root = History::empty(grounding.origin, 0);
    let all = enumerate_realizable_histories(&UniformPolicy, &grounding.env, &root, depth, cap)
        .map_err(run_err)?;

    let mut by_depth: BTreeMap<usize, u64> = (0..=depth).map(|d| (d, 0)).collect();
    for h in &all {
        *by_depth.entry(h.len()).or_insert(0) += 1;
    }
    for (d, count) in &by_depth {
        emitln!("depth {d}: {count}");
    }
    emitln!("total: {}", all.len());
    if list {
        for h in &all {
            emitln!("{h}");
        }
    }
    Ok(())
}
