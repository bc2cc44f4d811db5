//! Shannon entropy of next-observation distributions.
//!
//! All distribution arithmetic is exact rational; floats appear only in the
//! final `-sum p*log2(p)` and in the Monte Carlo estimator.  The joint
//! distribution over a partition's next observations mixes the agent's
//! joint-action law with the per-member transition rows; it is enumerated
//! exactly when the term count fits under a cap and estimated by seeded
//! sampling otherwise.
//!
//! The Monte Carlo estimate is the plug-in entropy with the Miller-Madow
//! small-sample correction `(K - 1) / (2 n ln 2)` (K = observed support
//! size), bracketed by a 99% percentile bootstrap over multinomial
//! resamples of the empirical counts.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use crate::agents::{available_for, AgentError, EnlargedHistory, PartitionAgent, PartitionView};
use crate::dist::{rational_to_f64, CdfSampler, DiscreteDistribution, DistError};
use crate::model::{ActionId, EnvironmentModel, ModelError, ObservationId};
use crate::rng::{domain, StreamRng};

/// Terms an exact joint enumeration may expand before giving up.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

/// Bootstrap replicates behind a Monte Carlo confidence interval.
pub const BOOTSTRAP_REPLICATES: usize = 1000;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("exact joint enumeration needs more than {cap} terms")]
    EnumerationCapExceeded { cap: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Dist(#[from] DistError),
}

/// `-sum p*log2(p)` over the support (zero-probability entries contribute
/// nothing).  The only lossy step in the exact pipeline.
pub fn shannon_entropy_bits<T: Ord + Clone>(dist: &DiscreteDistribution<T>) -> f64 {
    let mut h = 0.0;
    for (_, p) in dist.entries() {
        if p.is_zero() {
            continue;
        }
        let pf = rational_to_f64(p);
        h -= pf * pf.log2();
    }
    h
}

/// Exact distribution of one member's next observation: the agent's joint
/// law marginalized to the member's slot, mixed with that member's
/// transition rows.
pub fn unit_next_obs_distribution(
    env: &EnvironmentModel,
    agent: &dyn PartitionAgent,
    enlarged: &EnlargedHistory,
    slot: usize,
) -> Result<DiscreteDistribution<ObservationId>, EntropyError> {
    let avail = available_for(env, enlarged)?;
    let view = PartitionView::new(enlarged, &avail);
    let joint = agent.joint_distribution(&view)?;
    let slot_marginal = joint.map(|ja| ja.0[slot]);
    let (_, history) = &enlarged.members()[slot];
    let mut acc: BTreeMap<ObservationId, BigRational> = BTreeMap::new();
    for (action, p_a) in slot_marginal.entries() {
        if p_a.is_zero() {
            continue;
        }
        let row = env.transition_distribution(history, *action)?;
        for (obs, p_o) in row.entries() {
            if p_o.is_zero() {
                continue;
            }
            *acc.entry(*obs).or_insert_with(BigRational::zero) += p_a * p_o;
        }
    }
    Ok(DiscreteDistribution::new(acc.into_iter().collect())?)
}

/// Entropy of one member's next observation, in bits.
pub fn unit_entropy_bits(
    env: &EnvironmentModel,
    agent: &dyn PartitionAgent,
    enlarged: &EnlargedHistory,
    slot: usize,
) -> Result<f64, EntropyError> {
    Ok(shannon_entropy_bits(&unit_next_obs_distribution(
        env, agent, enlarged, slot,
    )?))
}

/// Exact joint distribution of the partition's next observation tuple.
/// Mixture over joint actions of the product of per-member rows; fails with
/// [`EntropyError::EnumerationCapExceeded`] once more than `cap` terms
/// would be expanded.
pub fn joint_next_obs_distribution(
    env: &EnvironmentModel,
    agent: &dyn PartitionAgent,
    enlarged: &EnlargedHistory,
    cap: u64,
) -> Result<DiscreteDistribution<Vec<ObservationId>>, EntropyError> {
    let avail = available_for(env, enlarged)?;
    let view = PartitionView::new(enlarged, &avail);
    let joint = agent.joint_distribution(&view)?;
    let mut acc: BTreeMap<Vec<ObservationId>, BigRational> = BTreeMap::new();
    let mut terms: u64 = 0;
    for (ja, p_a) in joint.entries() {
        if p_a.is_zero() {
            continue;
        }
        let rows: Vec<&DiscreteDistribution<ObservationId>> = enlarged
            .members()
            .iter()
            .zip(&ja.0)
            .map(|((_, h), a)| env.transition_distribution(h, *a))
            .collect::<Result<_, _>>()?;
        let supports: Vec<Vec<(&ObservationId, &BigRational)>> = rows
            .iter()
            .map(|r| {
                r.entries()
                    .iter()
                    .filter(|(_, p)| !p.is_zero())
                    .map(|(o, p)| (o, p))
                    .collect()
            })
            .collect();
        let mut block: u64 = 1;
        for s in &supports {
            block = block.saturating_mul(s.len() as u64);
        }
        terms = terms.saturating_add(block);
        if terms > cap {
            return Err(EntropyError::EnumerationCapExceeded { cap });
        }
        // Walk the product of the per-member supports.
        let mut idx = vec![0usize; supports.len()];
        loop {
            let mut tuple = Vec::with_capacity(supports.len());
            let mut p = p_a.clone();
            for (slot, &i) in idx.iter().enumerate() {
                let (o, po) = supports[slot][i];
                tuple.push(*o);
                p *= po;
            }
            *acc.entry(tuple).or_insert_with(BigRational::zero) += p;
            let mut pos = supports.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < supports[pos].len() {
                    break;
                }
                idx[pos] = 0;
            }
            if idx.iter().all(|&i| i == 0) {
                break;
            }
        }
    }
    Ok(DiscreteDistribution::new(acc.into_iter().collect())?)
}

/// Exact joint entropy of the next observation tuple, in bits.
pub fn joint_entropy_exact_bits(
    env: &EnvironmentModel,
    agent: &dyn PartitionAgent,
    enlarged: &EnlargedHistory,
    cap: u64,
) -> Result<f64, EntropyError> {
    Ok(shannon_entropy_bits(&joint_next_obs_distribution(
        env, agent, enlarged, cap,
    )?))
}

/// Sum of the members' marginal entropies, in bits.  Never less than the
/// joint entropy (up to float error); equal exactly when the members'
/// next observations are independent.
pub fn marginal_entropy_sum_bits(
    env: &EnvironmentModel,
    agent: &dyn PartitionAgent,
    enlarged: &EnlargedHistory,
) -> Result<f64, EntropyError> {
    let mut sum = 0.0;
    for slot in 0..enlarged.len() {
        sum += unit_entropy_bits(env, agent, enlarged, slot)?;
    }
    Ok(sum)
}

/// True when the joint next-observation law equals the product of its
/// members' marginals, checked on exact rationals (no tolerance).
pub fn next_obs_independent(
    env: &EnvironmentModel,
    agent: &dyn PartitionAgent,
    enlarged: &EnlargedHistory,
    cap: u64,
) -> Result<bool, EntropyError> {
    let joint = joint_next_obs_distribution(env, agent, enlarged, cap)?;
    let marginals: Vec<DiscreteDistribution<ObservationId>> = (0..enlarged.len())
        .map(|slot| unit_next_obs_distribution(env, agent, enlarged, slot))
        .collect::<Result<_, _>>()?;
    for (tuple, p) in joint.entries() {
        let mut prod = BigRational::from_integer(1.into());
        for (slot, o) in tuple.iter().enumerate() {
            prod *= marginals[slot].probability(o);
        }
        if *p != prod {
            return Ok(false);
        }
    }
    // The joint support covers every positive product combination (its
    // probabilities sum to 1 on both sides), so checking joint entries
    // suffices: a product-positive tuple missing from the joint would
    // leave the joint probabilities summing short of the product mass.
    Ok(true)
}

/// A Monte Carlo entropy estimate with its confidence bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct McEntropy {
    /// Miller-Madow corrected plug-in estimate, in bits.
    pub bits: f64,
    /// 99% percentile-bootstrap interval (low, high).
    pub ci_low: f64,
    pub ci_high: f64,
    /// Draws taken.
    pub n: u64,
    /// Distinct observation tuples seen.
    pub support_seen: u64,
}

fn plug_in_with_correction(counts: &[u64], n: u64) -> f64 {
    let nf = n as f64;
    let mut h = 0.0;
    let mut support = 0u64;
    for &c in counts {
        if c == 0 {
            continue;
        }
        support += 1;
        let p = c as f64 / nf;
        h -= p * p.log2();
    }
    h + (support.saturating_sub(1)) as f64 / (2.0 * nf * std::f64::consts::LN_2)
}

/// Binomial draw with probability `num/den`, used by the multinomial
/// chain.  Normal approximation when the variance is comfortably large,
/// exact inversion walk otherwise.
fn binomial(rng: &mut StreamRng, n: u64, num: u64, den: u64) -> u64 {
    if num == 0 || n == 0 {
        return 0;
    }
    if num >= den {
        return n;
    }
    let p = num as f64 / den as f64;
    if p > 0.5 {
        // Keep the inversion walk's tail probability well conditioned.
        return n - binomial(rng, n, den - num, den);
    }
    let mean = n as f64 * p;
    let var = mean * (1.0 - p);
    if var > 25.0 {
        let z = rng.next_normal();
        let k = (mean + var.sqrt() * z).round();
        return k.clamp(0.0, n as f64) as u64;
    }
    // Inversion: walk the pmf from k = 0.
    let u = rng.next_f64();
    let ratio = p / (1.0 - p);
    let mut pmf = (1.0 - p).powi(n as i32);
    let mut cdf = pmf;
    let mut k: u64 = 0;
    while cdf < u && k < n {
        pmf *= (n - k) as f64 / (k + 1) as f64 * ratio;
        cdf += pmf;
        k += 1;
    }
    k
}

/// One multinomial resample of the empirical counts, via the conditional
/// binomial chain.
fn multinomial_resample(rng: &mut StreamRng, counts: &[u64], n: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(counts.len());
    let mut left = n;
    let mut mass_left: u64 = counts.iter().sum();
    for &c in counts {
        if left == 0 {
            out.push(0);
            continue;
        }
        let draw = binomial(rng, left, c, mass_left);
        out.push(draw);
        left -= draw;
        mass_left -= c;
    }
    out
}

/// Estimate the joint next-observation entropy from `n` seeded draws.
///
/// Streams: draws come from `(ENTROPY, tag...)`, bootstrap resamples from
/// `(BOOTSTRAP, tag...)`.  A point-mass empirical distribution returns
/// exactly zero with a zero-width interval.
pub fn joint_entropy_mc(
    env: &EnvironmentModel,
    agent: &dyn PartitionAgent,
    enlarged: &EnlargedHistory,
    n: u64,
    master_seed: u64,
    tag: &[u64],
) -> Result<McEntropy, EntropyError> {
    assert!(n > 0, "estimator needs at least one draw");
    let avail = available_for(env, enlarged)?;
    let view = PartitionView::new(enlarged, &avail);

    let mut draw_parts = vec![domain::ENTROPY];
    draw_parts.extend_from_slice(tag);
    let mut rng = StreamRng::derived(master_seed, &draw_parts);

    // Member histories are fixed for the whole loop, so each (slot, action)
    // pair keeps hitting the same dynamics row; precomputing its cumulative
    // table once makes the draws cheap without changing them.
    let mut samplers: BTreeMap<(usize, ActionId), (CdfSampler, Vec<ObservationId>)> =
        BTreeMap::new();
    let mut counts: BTreeMap<Vec<ObservationId>, u64> = BTreeMap::new();
    for _ in 0..n {
        let ja = agent.sample(&view, &mut rng)?;
        let mut tuple = Vec::with_capacity(enlarged.len());
        for (slot, ((_, h), a)) in enlarged.members().iter().zip(&ja.0).enumerate() {
            let (sampler, outcomes) = match samplers.entry((slot, *a)) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(v) => {
                    let row = env.transition_distribution(h, *a)?;
                    let outcomes = row.entries().iter().map(|(o, _)| *o).collect();
                    v.insert((CdfSampler::new(row), outcomes))
                }
            };
            tuple.push(outcomes[sampler.sample_index(&mut rng)]);
        }
        *counts.entry(tuple).or_insert(0) += 1;
    }

    let support_seen = counts.len() as u64;
    if support_seen == 1 {
        return Ok(McEntropy {
            bits: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
            n,
            support_seen,
        });
    }

    let flat: Vec<u64> = counts.values().copied().collect();
    let bits = plug_in_with_correction(&flat, n);

    let mut boot_parts = vec![domain::BOOTSTRAP];
    boot_parts.extend_from_slice(tag);
    let mut boot_rng = StreamRng::derived(master_seed, &boot_parts);
    let mut replicates = Vec::with_capacity(BOOTSTRAP_REPLICATES);
    for _ in 0..BOOTSTRAP_REPLICATES {
        let resample = multinomial_resample(&mut boot_rng, &flat, n);
        replicates.push(plug_in_with_correction(&resample, n));
    }
    replicates.sort_by(|a, b| a.partial_cmp(b).expect("entropies are finite"));
    // Nearest-rank percentiles: 0.5% and 99.5% of B replicates.
    let b = replicates.len();
    let low_idx = ((0.005 * b as f64).ceil() as usize).max(1) - 1;
    let high_idx = ((0.995 * b as f64).ceil() as usize).max(1) - 1;
    Ok(McEntropy {
        bits,
        ci_low: replicates[low_idx].min(bits),
        ci_high: replicates[high_idx].max(bits),
        n,
        support_seen,
    })
}

/// How a joint entropy figure was produced.
#[derive(Debug, Clone, PartialEq)]
pub enum EntropyMethod {
    Exact,
    MonteCarlo { n: u64 },
}

/// Entropy analysis of one partition at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEntropy {
    /// Per-member marginal entropies, in slot order, bits.
    pub per_unit_bits: Vec<f64>,
    /// Joint entropy of the next observation tuple, bits.
    pub joint_bits: f64,
    /// Sum of the marginals, bits.
    pub marginal_sum_bits: f64,
    pub method: EntropyMethod,
    /// Confidence interval when estimated.
    pub ci: Option<(f64, f64)>,
}

/// Full entropy picture for a partition: exact joint when it fits under
/// `cap`, Monte Carlo with `mc_n` draws otherwise.  Marginals are always
/// exact (they never enumerate a product space).
pub fn analyze_partition(
    env: &EnvironmentModel,
    agent: &dyn PartitionAgent,
    enlarged: &EnlargedHistory,
    cap: u64,
    mc_n: u64,
    master_seed: u64,
    tag: &[u64],
) -> Result<StepEntropy, EntropyError> {
    let per_unit_bits: Vec<f64> = (0..enlarged.len())
        .map(|slot| unit_entropy_bits(env, agent, enlarged, slot))
        .collect::<Result<_, _>>()?;
    let marginal_sum_bits = per_unit_bits.iter().sum();
    match joint_entropy_exact_bits(env, agent, enlarged, cap) {
        Ok(joint_bits) => Ok(StepEntropy {
            per_unit_bits,
            joint_bits,
            marginal_sum_bits,
            method: EntropyMethod::Exact,
            ci: None,
        }),
        Err(EntropyError::EnumerationCapExceeded { .. }) => {
            let mc = joint_entropy_mc(env, agent, enlarged, mc_n, master_seed, tag)?;
            Ok(StepEntropy {
                per_unit_bits,
                joint_bits: mc.bits,
                marginal_sum_bits,
                method: EntropyMethod::MonteCarlo { n: mc.n },
                ci: Some((mc.ci_low, mc.ci_high)),
            })
        }
        Err(e) => Err(e),
    }
}
