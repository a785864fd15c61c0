//! Instance data model, JSON serialization, validation, and generators for
//! the hard instances and random test instances.
//!
//! An agent "arriving with probability p" is encoded as an explicit
//! zero-valuation type of probability 1-p with family `{∅}`, so type
//! probabilities always sum to one. Each type carries a declared family of
//! candidate subsets; these are the LP columns, fixed at generation time.

use crate::items::ItemSet;
use crate::valuations::{SetFunction, Valuation, ValuationKind, VALUE_TOL};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("invalid delta {0}: 1/delta must be a positive integer")]
    BadDelta(f64),
    #[error("{0}")]
    Invalid(String),
    #[error("enumerate mode needs m <= {m_cap} and partition count <= {n_cap} (got m={m}, N={n})")]
    EnumerateTooLarge { m: usize, n: u128, m_cap: usize, n_cap: u128 },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One support point of an agent's valuation distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentType {
    pub p: f64,
    pub valuation: Valuation,
    /// Candidate LP columns for this type. Always contains the empty set.
    pub family: Vec<ItemSet>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub m: usize,
    /// `agents[t]` is the list of types of agent `t`, in arrival order.
    pub agents: Vec<Vec<AgentType>>,
}

impl Instance {
    pub fn t(&self) -> usize {
        self.agents.len()
    }

    /// Checks every structural invariant; returns all violations.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.m > crate::items::MAX_ITEMS {
            errs.push(format!("m={} exceeds the {} item cap", self.m, crate::items::MAX_ITEMS));
        }
        let full = ItemSet::full(self.m.min(crate::items::MAX_ITEMS));
        for (t, types) in self.agents.iter().enumerate() {
            let total: f64 = types.iter().map(|ty| ty.p).sum();
            if (total - 1.0).abs() > VALUE_TOL {
                errs.push(format!("agent {}: probabilities must sum to 1 (got {total})", t + 1));
            }
            for (k, ty) in types.iter().enumerate() {
                if ty.p < 0.0 || !ty.p.is_finite() {
                    errs.push(format!(
                        "agent {} type {}: probability {} invalid",
                        t + 1,
                        k + 1,
                        ty.p
                    ));
                }
                if ty.valuation.m() != self.m {
                    errs.push(format!(
                        "agent {} type {}: valuation has m={}, instance has m={}",
                        t + 1,
                        k + 1,
                        ty.valuation.m(),
                        self.m
                    ));
                }
                if !ty.family.contains(&ItemSet::EMPTY) {
                    errs.push(format!(
                        "agent {} type {}: family must contain the empty set",
                        t + 1,
                        k + 1
                    ));
                }
                for set in &ty.family {
                    if !set.is_subset_of(full) {
                        errs.push(format!(
                            "agent {} type {}: family member {:?} has an item out of range",
                            t + 1,
                            k + 1,
                            set
                        ));
                    }
                }
            }
        }
        errs
    }

    /// Replaces every family by all `2^m` subsets. Only sensible for tiny
    /// instances where the LP over the complete column universe is wanted.
    pub fn with_all_subsets_families(&self) -> Result<Instance, InstanceError> {
        if self.m > 12 {
            return Err(InstanceError::Invalid(format!(
                "all-subsets families capped at m <= 12, got {}",
                self.m
            )));
        }
        let all: Vec<ItemSet> = (0..(1u64 << self.m)).map(ItemSet::from_mask).collect();
        let mut out = self.clone();
        for types in &mut out.agents {
            for ty in types {
                ty.family = all.clone();
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String, InstanceError> {
        let file: InstanceFile = self.into();
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Instance, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Instance, InstanceError> {
        Instance::from_json(&std::fs::read_to_string(path)?)
    }
}

fn delta_inverse(delta: f64) -> Result<usize, InstanceError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(InstanceError::BadDelta(delta));
    }
    let inv = 1.0 / delta;
    if (inv - inv.round()).abs() > 1e-9 {
        return Err(InstanceError::BadDelta(delta));
    }
    Ok(inv.round() as usize)
}

/// A single-type deterministic agent is a `p=1` entry; a Bernoulli agent is
/// the arriving type plus a zero-valuation complement type.
fn bernoulli_agent(p: f64, valuation: Valuation, family: Vec<ItemSet>) -> Vec<AgentType> {
    let m = valuation.m();
    let mut types = vec![AgentType { p, valuation, family }];
    if p < 1.0 {
        types.push(AgentType {
            p: 1.0 - p,
            valuation: Valuation::zero(m),
            family: vec![ItemSet::EMPTY],
        });
    }
    types
}

/// The unit-demand hard instance: `m = 1/δ` single-minded agents arriving
/// with probability `1-δ`, then one deterministic agent valuing any
/// nonempty set at `1/δ`.
pub fn gen_unit_demand_hard(delta: f64) -> Result<Instance, InstanceError> {
    let m = delta_inverse(delta)?;
    let mut agents = Vec::with_capacity(m + 1);
    for t in 0..m {
        let mut weights = vec![0.0; m];
        weights[t] = 1.0;
        let v = Valuation::new(m, ValuationKind::UnitDemand { weights }).unwrap();
        agents.push(bernoulli_agent(1.0 - delta, v, vec![ItemSet::EMPTY, ItemSet::singleton(t)]));
    }
    let big =
        Valuation::new(m, ValuationKind::UnitDemand { weights: vec![1.0 / delta; m] }).unwrap();
    let mut family = vec![ItemSet::EMPTY];
    family.extend((0..m).map(ItemSet::singleton));
    agents.push(vec![AgentType { p: 1.0, valuation: big, family }]);
    Ok(Instance { m, agents })
}

#[derive(Clone, Debug)]
pub enum XosMode {
    /// One type per equi-partition of `[m]` into `1/δ` blocks.
    Enumerate,
    /// `n_types` uniformly drawn partitions. An artifact extension for block
    /// structures too numerous to enumerate; approximates the enumerated
    /// distribution without its exact symmetry.
    Sample { n_types: usize, seed: u64 },
}

const ENUMERATE_M_CAP: usize = 30;
const ENUMERATE_N_CAP: u128 = 100_000;

/// The XOS hard instance: `m = 1/δ^3` single-minded agents as above, then a
/// deterministic agent whose valuation is `1/δ` times the largest
/// intersection with a random equi-partition block.
pub fn gen_xos_hard(delta: f64, mode: XosMode) -> Result<Instance, InstanceError> {
    let inv = delta_inverse(delta)?;
    let blocks = inv;
    let block_size = inv * inv;
    let m = inv * inv * inv;
    if m > crate::items::MAX_ITEMS {
        return Err(InstanceError::Invalid(format!("m = 1/delta^3 = {m} exceeds the item cap")));
    }

    let mut agents: Vec<Vec<AgentType>> = Vec::with_capacity(m + 1);
    for t in 0..m {
        let mut weights = vec![0.0; m];
        weights[t] = 1.0;
        let v = Valuation::new(m, ValuationKind::UnitDemand { weights }).unwrap();
        agents.push(bernoulli_agent(1.0 - delta, v, vec![ItemSet::EMPTY, ItemSet::singleton(t)]));
    }

    let partitions: Vec<Vec<ItemSet>> = match mode {
        XosMode::Enumerate => {
            let n = count_equal_partitions(m, blocks, block_size);
            if m > ENUMERATE_M_CAP || n > ENUMERATE_N_CAP {
                return Err(InstanceError::EnumerateTooLarge {
                    m,
                    n,
                    m_cap: ENUMERATE_M_CAP,
                    n_cap: ENUMERATE_N_CAP,
                });
            }
            enumerate_equal_partitions(m, blocks, block_size)
        }
        XosMode::Sample { n_types, seed } => {
            if n_types == 0 {
                return Err(InstanceError::Invalid("sample mode needs n_types >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n_types).map(|_| random_equal_partition(m, blocks, block_size, &mut rng)).collect()
        }
    };

    let n = partitions.len();
    let scale = 1.0 / delta;
    let types = partitions
        .into_iter()
        .map(|partition| {
            let mut family = vec![ItemSet::EMPTY];
            family.extend(partition.iter().copied());
            let v = Valuation::new(m, ValuationKind::PartitionMax { partition, scale }).unwrap();
            AgentType { p: 1.0 / n as f64, valuation: v, family }
        })
        .collect();
    agents.push(types);
    Ok(Instance { m, agents })
}

/// Number of unordered partitions of `[m]` into `blocks` blocks of
/// `block_size` items: `m! / (block_size!^blocks * blocks!)`.
pub fn count_equal_partitions(m: usize, blocks: usize, block_size: usize) -> u128 {
    assert_eq!(m, blocks * block_size);
    // Place blocks one at a time, anchoring each on its smallest free item.
    let mut count: u128 = 1;
    let mut free = m;
    for _ in 0..blocks {
        count *= binomial(free - 1, block_size - 1);
        free -= block_size;
    }
    count
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num: u128 = 1;
    for i in 0..k {
        num = num * (n - i) as u128 / (i + 1) as u128;
    }
    num
}

/// All equi-partitions, each block anchored on its smallest member so every
/// unordered partition appears exactly once. Blocks come out sorted by their
/// smallest item.
fn enumerate_equal_partitions(m: usize, blocks: usize, block_size: usize) -> Vec<Vec<ItemSet>> {
    let mut out = Vec::new();
    let mut current: Vec<ItemSet> = Vec::with_capacity(blocks);
    let mut used = ItemSet::EMPTY;
    fn recurse(
        m: usize,
        blocks: usize,
        block_size: usize,
        used: &mut ItemSet,
        current: &mut Vec<ItemSet>,
        out: &mut Vec<Vec<ItemSet>>,
    ) {
        if current.len() == blocks {
            out.push(current.clone());
            return;
        }
        let anchor = ItemSet::full(m).minus(*used).min_item().expect("items remain");
        let rest: Vec<usize> =
            ItemSet::full(m).minus(*used).iter().filter(|&i| i > anchor).collect();
        let mut chooser = Vec::with_capacity(block_size - 1);
        choose_rec(&rest, block_size - 1, 0, &mut chooser, &mut |picked| {
            let mut block = ItemSet::singleton(anchor);
            for &i in picked {
                block.insert(i);
            }
            *used = used.union(block);
            current.push(block);
            recurse(m, blocks, block_size, used, current, out);
            current.pop();
            *used = used.minus(block);
        });
    }
    fn choose_rec(
        pool: &[usize],
        k: usize,
        start: usize,
        buf: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if buf.len() == k {
            f(buf);
            return;
        }
        let need = k - buf.len();
        for idx in start..=pool.len().saturating_sub(need) {
            buf.push(pool[idx]);
            choose_rec(pool, k, idx + 1, buf, f);
            buf.pop();
        }
    }
    recurse(m, blocks, block_size, &mut used, &mut current, &mut out);
    out
}

fn random_equal_partition(
    m: usize,
    blocks: usize,
    block_size: usize,
    rng: &mut impl Rng,
) -> Vec<ItemSet> {
    let mut items: Vec<usize> = (0..m).collect();
    items.shuffle(rng);
    let mut out: Vec<ItemSet> =
        items.chunks(block_size).map(|c| ItemSet::from_items(c.iter().copied())).collect();
    debug_assert_eq!(out.len(), blocks);
    out.sort_by_key(|b| b.min_item());
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomKind {
    Additive,
    UnitDemand,
    BudgetAdditive,
}

pub const ALL_SUBMODULAR_KINDS: [RandomKind; 3] =
    [RandomKind::Additive, RandomKind::UnitDemand, RandomKind::BudgetAdditive];

/// Seeded random instance with submodular valuations, for property tests.
/// Families are the empty set, all singletons, and a few random sets.
pub fn gen_random_submodular(
    m: usize,
    t: usize,
    k: usize,
    seed: u64,
    kinds: &[RandomKind],
) -> Result<Instance, InstanceError> {
    if m == 0 || m > 12 {
        return Err(InstanceError::Invalid(format!("random instances need 1 <= m <= 12, got {m}")));
    }
    if t == 0 || k == 0 || kinds.is_empty() {
        return Err(InstanceError::Invalid("need t >= 1, k >= 1 and a nonempty kind mix".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents = Vec::with_capacity(t);
    for _ in 0..t {
        let mut raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for p in &mut raw {
            *p /= total;
        }
        let mut types = Vec::with_capacity(k);
        for p in raw {
            let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..3.0)).collect();
            let kind = match kinds[rng.gen_range(0..kinds.len())] {
                RandomKind::Additive => ValuationKind::Additive { weights },
                RandomKind::UnitDemand => ValuationKind::UnitDemand { weights },
                RandomKind::BudgetAdditive => {
                    let cap = rng.gen_range(0.5..3.0);
                    ValuationKind::BudgetAdditive { weights, cap }
                }
            };
            let valuation = Valuation::new(m, kind).unwrap();
            let mut family = vec![ItemSet::EMPTY];
            family.extend((0..m).map(ItemSet::singleton));
            for _ in 0..3 {
                let set = ItemSet::from_mask(rng.gen_range(0..(1u64 << m)));
                if !family.contains(&set) {
                    family.push(set);
                }
            }
            types.push(AgentType { p, valuation, family });
        }
        agents.push(types);
    }
    Ok(Instance { m, agents })
}

// ---------------------------------------------------------------------------
// File schema. Items, agents, and types are 1-indexed on disk.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    m: usize,
    agents: Vec<Vec<AgentTypeFile>>,
}

#[derive(Serialize, Deserialize)]
struct AgentTypeFile {
    p: f64,
    valuation: ValuationFile,
    family: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum ValuationFile {
    Additive { m: usize, weights: Vec<f64> },
    UnitDemand { m: usize, weights: Vec<f64> },
    BudgetAdditive { m: usize, weights: Vec<f64>, cap: f64 },
    XosExplicit { m: usize, clauses: Vec<Vec<f64>> },
    PartitionMax { m: usize, partition: Vec<Vec<usize>>, scale: f64 },
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        InstanceFile {
            m: inst.m,
            agents: inst
                .agents
                .iter()
                .map(|types| {
                    types
                        .iter()
                        .map(|ty| AgentTypeFile {
                            p: ty.p,
                            valuation: valuation_to_file(&ty.valuation),
                            family: ty.family.iter().map(|s| s.to_one_based()).collect(),
                        })
                        .collect()
                })
                .collect(),
        }
    }
}

fn valuation_to_file(v: &Valuation) -> ValuationFile {
    let m = v.m();
    match v.kind() {
        ValuationKind::Additive { weights } => {
            ValuationFile::Additive { m, weights: weights.clone() }
        }
        ValuationKind::UnitDemand { weights } => {
            ValuationFile::UnitDemand { m, weights: weights.clone() }
        }
        ValuationKind::BudgetAdditive { weights, cap } => {
            ValuationFile::BudgetAdditive { m, weights: weights.clone(), cap: *cap }
        }
        ValuationKind::XosExplicit { clauses } => {
            ValuationFile::XosExplicit { m, clauses: clauses.clone() }
        }
        ValuationKind::PartitionMax { partition, scale } => ValuationFile::PartitionMax {
            m,
            partition: partition.iter().map(|b| b.to_one_based()).collect(),
            scale: *scale,
        },
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = InstanceError;

    fn try_from(file: InstanceFile) -> Result<Instance, InstanceError> {
        let m = file.m;
        let bad = |e: crate::valuations::ValuationError| InstanceError::Invalid(e.to_string());
        let mut agents = Vec::with_capacity(file.agents.len());
        for types in file.agents {
            let mut out = Vec::with_capacity(types.len());
            for ty in types {
                let valuation = match ty.valuation {
                    ValuationFile::Additive { m, weights } => {
                        Valuation::new(m, ValuationKind::Additive { weights }).map_err(bad)?
                    }
                    ValuationFile::UnitDemand { m, weights } => {
                        Valuation::new(m, ValuationKind::UnitDemand { weights }).map_err(bad)?
                    }
                    ValuationFile::BudgetAdditive { m, weights, cap } => {
                        Valuation::new(m, ValuationKind::BudgetAdditive { weights, cap })
                            .map_err(bad)?
                    }
                    ValuationFile::XosExplicit { m, clauses } => {
                        Valuation::new(m, ValuationKind::XosExplicit { clauses }).map_err(bad)?
                    }
                    ValuationFile::PartitionMax { m, partition, scale } => {
                        let mut blocks = Vec::with_capacity(partition.len());
                        for b in partition {
                            blocks.push(
                                ItemSet::from_one_based(&b, m).map_err(InstanceError::Invalid)?,
                            );
                        }
                        Valuation::new(m, ValuationKind::PartitionMax { partition: blocks, scale })
                            .map_err(bad)?
                    }
                };
                let mut family = Vec::with_capacity(ty.family.len());
                for set in ty.family {
                    family.push(ItemSet::from_one_based(&set, m).map_err(InstanceError::Invalid)?);
                }
                out.push(AgentType { p: ty.p, valuation, family });
            }
            agents.push(out);
        }
        Ok(Instance { m, agents })
    }
}
