//! Exact finite probability distributions.
//!
//! Probabilities are arbitrary-precision rationals and the constructor
//! enforces that they are non-negative, attached to distinct outcomes, and
//! sum to exactly 1.  Keeping the arithmetic exact matters downstream: the
//! realizability analyses test strict positivity of probability products, a
//! question float rounding would corrupt.
//!
//! Sampling draws a uniform integer below the common denominator and walks
//! the cumulative table, so a draw is exact as well.  For hot loops,
//! [`CdfSampler`] precomputes the table once (with a u64 fast path when the
//! denominator fits).

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

use crate::rng::StreamRng;

/// Validation failures for [`DiscreteDistribution::new`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistError {
    #[error("distribution has no outcomes")]
    Empty,
    #[error("negative probability for an outcome")]
    NegativeProbability,
    #[error("duplicate outcome in support")]
    DuplicateOutcome,
    #[error("probabilities sum to {got}, expected 1")]
    BadSum { got: String },
}

/// A finite distribution over outcomes of type `T`, with exact rational
/// probabilities.  Entries are kept sorted by outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteDistribution<T> {
    entries: Vec<(T, BigRational)>,
}

impl<T: Ord + Clone> DiscreteDistribution<T> {
    /// Build and validate a distribution.  Zero-probability entries are
    /// permitted (they are simply never sampled and carry no realizability).
    pub fn new(mut entries: Vec<(T, BigRational)>) -> Result<Self, DistError> {
        if entries.is_empty() {
            return Err(DistError::Empty);
        }
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DistError::DuplicateOutcome);
            }
        }
        let mut sum = BigRational::zero();
        for (_, p) in &entries {
            if p.is_negative() {
                return Err(DistError::NegativeProbability);
            }
            sum += p;
        }
        if !sum.is_one() {
            return Err(DistError::BadSum {
                got: format_rational(&sum),
            });
        }
        Ok(DiscreteDistribution { entries })
    }

    /// Distribution that yields `outcome` with probability 1.
    pub fn point(outcome: T) -> Self {
        DiscreteDistribution {
            entries: vec![(outcome, BigRational::one())],
        }
    }

    /// Uniform distribution over the given outcomes (must be non-empty and
    /// distinct).
    pub fn uniform(outcomes: &[T]) -> Result<Self, DistError> {
        let n = outcomes.len();
        let p = BigRational::new(BigInt::one(), BigInt::from(n.max(1)));
        Self::new(outcomes.iter().map(|o| (o.clone(), p.clone())).collect())
    }

    /// All entries, including any zero-probability ones, sorted by outcome.
    pub fn entries(&self) -> &[(T, BigRational)] {
        &self.entries
    }

    /// Outcomes with strictly positive probability, sorted.
    pub fn support(&self) -> impl Iterator<Item = &T> {
        self.entries
            .iter()
            .filter(|(_, p)| p.is_positive())
            .map(|(o, _)| o)
    }

    pub fn support_len(&self) -> usize {
        self.support().count()
    }

    /// Probability of `outcome` (zero when absent from the support).
    pub fn probability(&self, outcome: &T) -> BigRational {
        match self.entries.binary_search_by(|(o, _)| o.cmp(outcome)) {
            Ok(i) => self.entries[i].1.clone(),
            Err(_) => BigRational::zero(),
        }
    }

    /// Draw one outcome.  Convenience wrapper that builds a fresh
    /// [`CdfSampler`]; precompute one yourself in hot loops.
    pub fn sample(&self, rng: &mut StreamRng) -> &T {
        let idx = CdfSampler::new(self).sample_index(rng);
        &self.entries[idx].0
    }

    /// Map outcomes through `f`, merging probabilities of collapsed outcomes.
    pub fn map<U: Ord + Clone>(&self, f: impl Fn(&T) -> U) -> DiscreteDistribution<U> {
        let mut acc: std::collections::BTreeMap<U, BigRational> = Default::default();
        for (o, p) in &self.entries {
            *acc.entry(f(o)).or_insert_with(BigRational::zero) += p;
        }
        DiscreteDistribution {
            entries: acc.into_iter().collect(),
        }
    }
}

/// Precomputed cumulative table for repeated exact sampling from one
/// distribution.
pub struct CdfSampler {
    /// Common denominator and cumulative numerators (positive entries only),
    /// in u64 when they fit; `cum[i]` is the exclusive upper bound of slot i.
    small: Option<(u64, Vec<u64>)>,
    big: Option<(BigUint, Vec<BigUint>)>,
    /// Indices into the source distribution's entry list, one per CDF slot.
    slots: Vec<usize>,
}

impl CdfSampler {
    pub fn new<T: Ord + Clone>(dist: &DiscreteDistribution<T>) -> Self {
        let mut denom = BigInt::one();
        for (_, p) in dist.entries() {
            denom = denom.lcm(p.denom());
        }
        let mut cum = BigUint::zero();
        let mut cums = Vec::new();
        let mut slots = Vec::new();
        for (i, (_, p)) in dist.entries().iter().enumerate() {
            if !p.is_positive() {
                continue;
            }
            let scaled = (p * BigRational::from(denom.clone()))
                .to_integer()
                .to_biguint()
                .expect("positive scaled probability");
            cum += scaled;
            cums.push(cum.clone());
            slots.push(i);
        }
        let denom = denom.to_biguint().expect("positive denominator");
        match denom.to_u64() {
            Some(d) => {
                let c64 = cums.iter().map(|c| c.to_u64().expect("cum <= denom")).collect();
                CdfSampler { small: Some((d, c64)), big: None, slots }
            }
            None => CdfSampler { small: None, big: Some((denom, cums)), slots },
        }
    }

    /// Draw an index into the source distribution's entry list.
    pub fn sample_index(&self, rng: &mut StreamRng) -> usize {
        if let Some((denom, cums)) = &self.small {
            let u = rng.next_below(*denom);
            let k = cums.partition_point(|c| *c <= u);
            return self.slots[k];
        }
        let (denom, cums) = self.big.as_ref().expect("one table present");
        let u = uniform_biguint_below(rng, denom);
        let k = cums.partition_point(|c| c <= &u);
        self.slots[k]
    }
}

/// Uniform `BigUint` in `[0, bound)` by rejection on the bit width.
pub fn uniform_biguint_below(rng: &mut StreamRng, bound: &BigUint) -> BigUint {
    assert!(!bound.is_zero(), "bound must be positive");
    let bits = bound.bits();
    let words = bits.div_ceil(64) as usize;
    let top_mask: u64 = if bits % 64 == 0 { u64::MAX } else { (1u64 << (bits % 64)) - 1 };
    loop {
        let mut limbs = vec![0u64; words];
        for (i, limb) in limbs.iter_mut().enumerate() {
            *limb = rng.next_u64();
            if i + 1 == words {
                *limb &= top_mask;
            }
        }
        let candidate = BigUint::from_slice(
            &limbs
                .iter()
                .flat_map(|l| [(*l & 0xFFFF_FFFF) as u32, (*l >> 32) as u32])
                .collect::<Vec<_>>(),
        );
        if &candidate < bound {
            return candidate;
        }
    }
}

/// Parse an exact rational from `p/q`, an integer, or a finite decimal such
/// as `0.25` (scaled by a power of ten, so the value is exact).
pub fn parse_rational(s: &str) -> Result<BigRational, RationalParseError> {
    let s = s.trim();
    if s.is_empty() {
        return Err(RationalParseError(s.to_string()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: BigInt = num.trim().parse().map_err(|_| RationalParseError(s.into()))?;
        let d: BigInt = den.trim().parse().map_err(|_| RationalParseError(s.into()))?;
        if d.is_zero() {
            return Err(RationalParseError(s.into()));
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let int = if int.is_empty() { "0" } else { int };
        let neg = int.starts_with('-');
        let i: BigInt = int.parse().map_err(|_| RationalParseError(s.into()))?;
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(RationalParseError(s.into()));
        }
        let f: BigInt = frac.parse().map_err(|_| RationalParseError(s.into()))?;
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let whole = i * &scale;
        let total = if neg { whole - f } else { whole + f };
        return Ok(BigRational::new(total, scale));
    }
    let n: BigInt = s.parse().map_err(|_| RationalParseError(s.into()))?;
    Ok(BigRational::from(n))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not a rational number: {0:?}")]
pub struct RationalParseError(pub String);

/// Canonical text form: `p/q` in lowest terms, or a bare integer when q = 1.
pub fn format_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Lossy conversion for reporting; exact arithmetic should happen before this.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("rational representable as f64")
}
