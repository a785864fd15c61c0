//! Set-function oracles for the supported valuation classes, plus
//! brute-force monotonicity/submodularity validators.
//!
//! Every valuation is monotone and normalized (`value(∅) = 0`). Additive,
//! unit-demand and budget-additive valuations are submodular; explicit-XOS
//! and partition-max valuations are XOS and in general not submodular.

use crate::items::{ItemSet, MAX_ITEMS};
use thiserror::Error;

/// Absolute tolerance for value comparisons throughout the crate.
pub const VALUE_TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ValuationError {
    #[error("item index {0} out of range for m={1}")]
    ItemOutOfRange(usize, usize),
    #[error("{0}")]
    Invalid(String),
    #[error("operation requires m <= {cap}, got m={m}")]
    TooLarge { m: usize, cap: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ValuationKind {
    Additive { weights: Vec<f64> },
    UnitDemand { weights: Vec<f64> },
    BudgetAdditive { weights: Vec<f64>, cap: f64 },
    XosExplicit { clauses: Vec<Vec<f64>> },
    PartitionMax { partition: Vec<ItemSet>, scale: f64 },
}

/// A monotone set function over items `0..m` with a closed-form kind.
#[derive(Clone, Debug, PartialEq)]
pub struct Valuation {
    m: usize,
    kind: ValuationKind,
}

/// Anything that maps item subsets to nonnegative reals. The property
/// checkers and prefix marginals are defined against this trait so they
/// also apply to restricted oracles.
pub trait SetFunction {
    fn m(&self) -> usize;
    fn value(&self, set: ItemSet) -> f64;

    /// Contribution of item `i` under the canonical order:
    /// `value(S ∩ [i+1]) - value(S ∩ [i])` with prefixes of `0..=i`.
    /// Zero whenever `i ∉ S`.
    fn prefix_marginal(&self, set: ItemSet, i: usize) -> f64 {
        if !set.contains(i) {
            return 0.0;
        }
        let hi = set.intersect(ItemSet::prefix(i + 1));
        let lo = set.intersect(ItemSet::prefix(i));
        self.value(hi) - self.value(lo)
    }
}

impl Valuation {
    pub fn new(m: usize, kind: ValuationKind) -> Result<Self, ValuationError> {
        if m > MAX_ITEMS {
            return Err(ValuationError::TooLarge { m, cap: MAX_ITEMS });
        }
        let check_weights = |w: &[f64]| -> Result<(), ValuationError> {
            if w.len() != m {
                return Err(ValuationError::Invalid(format!(
                    "expected {m} weights, got {}",
                    w.len()
                )));
            }
            if w.iter().any(|&x| !x.is_finite() || x < 0.0) {
                return Err(ValuationError::Invalid("weights must be finite and >= 0".into()));
            }
            Ok(())
        };
        match &kind {
            ValuationKind::Additive { weights } | ValuationKind::UnitDemand { weights } => {
                check_weights(weights)?
            }
            ValuationKind::BudgetAdditive { weights, cap } => {
                check_weights(weights)?;
                if !cap.is_finite() || *cap < 0.0 {
                    return Err(ValuationError::Invalid("cap must be finite and >= 0".into()));
                }
            }
            ValuationKind::XosExplicit { clauses } => {
                if clauses.is_empty() {
                    return Err(ValuationError::Invalid("XOS needs at least one clause".into()));
                }
                for c in clauses {
                    check_weights(c)?;
                }
            }
            ValuationKind::PartitionMax { partition, scale } => {
                if !scale.is_finite() || *scale <= 0.0 {
                    return Err(ValuationError::Invalid("scale must be positive".into()));
                }
                let mut seen = ItemSet::EMPTY;
                for block in partition {
                    if !block.is_disjoint(seen) {
                        return Err(ValuationError::Invalid("partition blocks overlap".into()));
                    }
                    seen = seen.union(*block);
                }
                if seen != ItemSet::full(m) {
                    return Err(ValuationError::Invalid("partition must cover all items".into()));
                }
            }
        }
        Ok(Valuation { m, kind })
    }

    /// The all-zero valuation; encodes "agent does not arrive".
    pub fn zero(m: usize) -> Self {
        Valuation::new(m, ValuationKind::Additive { weights: vec![0.0; m] }).unwrap()
    }

    pub fn kind(&self) -> &ValuationKind {
        &self.kind
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.kind, ValuationKind::Additive { weights } if weights.iter().all(|&w| w == 0.0))
    }

    /// The marginal oracle `B ↦ value(B ∪ anchor) - value(anchor)`.
    pub fn restricted(&self, anchor: ItemSet) -> Restricted<'_> {
        Restricted { base: self, anchor, base_value: self.value(anchor) }
    }

    /// Utility-maximizing set under the given prices. Ties are broken by
    /// smaller cardinality, then lexicographically on the item list.
    /// Additive and unit-demand kinds are solved in closed form; the rest
    /// fall back to exhaustive search for `m <= 20`.
    pub fn demand_set(&self, prices: &[f64]) -> Result<ItemSet, ValuationError> {
        if prices.len() != self.m {
            return Err(ValuationError::Invalid(format!(
                "expected {} prices, got {}",
                self.m,
                prices.len()
            )));
        }
        match &self.kind {
            ValuationKind::Additive { weights } => {
                let mut set = ItemSet::EMPTY;
                for i in 0..self.m {
                    if weights[i] - prices[i] > VALUE_TOL {
                        set.insert(i);
                    }
                }
                Ok(set)
            }
            ValuationKind::UnitDemand { weights } => {
                let mut best: Option<(usize, f64)> = None;
                for i in 0..self.m {
                    let u = weights[i] - prices[i];
                    if best.is_none_or(|(_, bu)| u > bu) {
                        best = Some((i, u));
                    }
                }
                match best {
                    Some((i, u)) if u > VALUE_TOL => Ok(ItemSet::singleton(i)),
                    _ => Ok(ItemSet::EMPTY),
                }
            }
            _ => {
                const EXHAUSTIVE_CAP: usize = 20;
                if self.m > EXHAUSTIVE_CAP {
                    return Err(ValuationError::TooLarge { m: self.m, cap: EXHAUSTIVE_CAP });
                }
                let mut best = ItemSet::EMPTY;
                let mut best_u = 0.0; // empty set has utility 0
                for set in ItemSet::full(self.m).subsets() {
                    let u = self.value(set) - set.iter().map(|i| prices[i]).sum::<f64>();
                    if u > best_u + VALUE_TOL {
                        best = set;
                        best_u = u;
                    } else if (u - best_u).abs() <= VALUE_TOL {
                        let smaller = set.len() < best.len()
                            || (set.len() == best.len()
                                && set.cmp_lex(best) == std::cmp::Ordering::Less);
                        if smaller {
                            best = set;
                        }
                    }
                }
                Ok(best)
            }
        }
    }

    /// Exhaustively verifies monotonicity and submodularity (`m <= 16`).
    pub fn check_monotone_submodular(&self) -> Result<PropertyReport, ValuationError> {
        check_monotone_submodular(self)
    }
}

impl SetFunction for Valuation {
    fn m(&self) -> usize {
        self.m
    }

    fn value(&self, set: ItemSet) -> f64 {
        debug_assert!(set.is_subset_of(ItemSet::full(self.m)), "set not within [m]");
        match &self.kind {
            ValuationKind::Additive { weights } => set.iter().map(|i| weights[i]).sum(),
            ValuationKind::UnitDemand { weights } => {
                set.iter().map(|i| weights[i]).fold(0.0, f64::max)
            }
            ValuationKind::BudgetAdditive { weights, cap } => {
                let sum: f64 = set.iter().map(|i| weights[i]).sum();
                sum.min(*cap)
            }
            ValuationKind::XosExplicit { clauses } => {
                clauses.iter().map(|c| set.iter().map(|i| c[i]).sum::<f64>()).fold(0.0, f64::max)
            }
            ValuationKind::PartitionMax { partition, scale } => {
                let best = partition.iter().map(|b| b.intersect(set).len()).max().unwrap_or(0);
                *scale * best as f64
            }
        }
    }
}

/// The oracle returned by [`Valuation::restricted`].
#[derive(Clone, Debug)]
pub struct Restricted<'a> {
    base: &'a Valuation,
    anchor: ItemSet,
    base_value: f64,
}

impl SetFunction for Restricted<'_> {
    fn m(&self) -> usize {
        self.base.m
    }

    fn value(&self, set: ItemSet) -> f64 {
        self.base.value(set.union(self.anchor)) - self.base_value
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PropertyViolation {
    /// `value(a ∪ {i}) < value(a)`.
    Monotone { a: ItemSet, i: usize },
    /// Marginal of `i` grows from `a` to `b` with `a ⊆ b`.
    Submodular { a: ItemSet, b: ItemSet, i: usize },
}

#[derive(Clone, Debug)]
pub struct PropertyReport {
    pub monotone: bool,
    pub submodular: bool,
    pub witness: Option<PropertyViolation>,
}

/// Exhaustive check over all subsets. Submodularity is checked through the
/// equivalent local condition
/// `value(S+i) + value(S+j) >= value(S+i+j) + value(S)`,
/// which yields the witness `(A=S, B=S+j, i)`.
pub fn check_monotone_submodular<F: SetFunction>(f: &F) -> Result<PropertyReport, ValuationError> {
    const CAP: usize = 16;
    let m = f.m();
    if m > CAP {
        return Err(ValuationError::TooLarge { m, cap: CAP });
    }
    let full = ItemSet::full(m);
    let values: Vec<f64> = (0..(1u64 << m)).map(|mask| f.value(ItemSet::from_mask(mask))).collect();

    let mut report = PropertyReport { monotone: true, submodular: true, witness: None };
    'mono: for mask in 0..(1u64 << m) {
        let s = ItemSet::from_mask(mask);
        for i in full.minus(s).iter() {
            if values[s.with(i).mask() as usize] < values[mask as usize] - VALUE_TOL {
                report.monotone = false;
                report.witness = Some(PropertyViolation::Monotone { a: s, i });
                break 'mono;
            }
        }
    }
    'sub: for mask in 0..(1u64 << m) {
        let s = ItemSet::from_mask(mask);
        let rest = full.minus(s);
        for i in rest.iter() {
            for j in rest.iter() {
                if j <= i {
                    continue;
                }
                let lhs = values[s.with(i).mask() as usize] + values[s.with(j).mask() as usize];
                let rhs = values[s.with(i).with(j).mask() as usize] + values[mask as usize];
                if lhs < rhs - VALUE_TOL {
                    report.submodular = false;
                    if report.witness.is_none() {
                        report.witness =
                            Some(PropertyViolation::Submodular { a: s, b: s.with(j), i });
                    }
                    break 'sub;
                }
            }
        }
    }
    Ok(report)
}
