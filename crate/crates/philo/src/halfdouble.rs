//! Half-double sampling: allocate a random half of the items through the
//! union of the late free parts of two independent LP samples, and run the
//! baseline reduction on the other half with valuations conditioned on the
//! freely allocated set.
//!
//! The per-item stopping instances are conditional on the sampled half `Q`,
//! so their thresholds are recomputed per run by enumerating the
//! `(type, A, B)` column triples of every step. Past a triple budget the
//! builder falls back to seeded Monte Carlo estimation of the step
//! distributions.

use crate::baseline::{sample_column, sample_type};
use crate::config_lp::LpSolution;
use crate::decomposition::Decomposition;
use crate::instance::Instance;
use crate::items::ItemSet;
use crate::valuations::SetFunction;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

const TRIPLE_CAP: usize = 1_000_000;
const FALLBACK_SAMPLES: usize = 100_000;
const MIN_AUDIT_RUNS: usize = 1_000;

#[derive(Debug, Error, PartialEq)]
pub enum HalfDoubleError {
    #[error("a tight LP solution is required")]
    NotTight,
    #[error("decomposition and solution shapes disagree: {0}")]
    Mismatch(String),
    #[error("availability audit needs at least {MIN_AUDIT_RUNS} runs, got {0}")]
    InsufficientRuns(usize),
}

fn serialize_one_based<S: serde::Serializer>(k: &usize, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(*k as u64 + 1)
}

/// Per-agent trace of one run. Serialized with 1-based type indices and
/// item lists, matching the file formats.
#[derive(Clone, Debug, Serialize)]
pub struct StepTrace {
    /// Realized type.
    #[serde(serialize_with = "serialize_one_based")]
    pub k: usize,
    /// The two independent column samples.
    pub a: ItemSet,
    pub b: ItemSet,
    /// Late free parts of the two samples.
    pub a_free: ItemSet,
    pub b_free: ItemSet,
    /// `Q ∩ (a_free ∪ b_free)`: the freely allocated candidates.
    pub s_free: ItemSet,
    /// `a \ Q`: the request forwarded to the stopping instances.
    pub s_req: ItemSet,
    /// Items accepted by their stopping instances.
    pub s_get: ItemSet,
    /// Final allocation `(s_free ∩ remaining) ∪ s_get`.
    pub allocated: ItemSet,
    /// Items still unallocated when the agent arrived.
    pub remaining_before: ItemSet,
}

#[derive(Clone, Debug, Serialize)]
pub struct HalfDoubleRun {
    pub q: ItemSet,
    pub reward: f64,
    pub steps: Vec<StepTrace>,
    /// `(t, i)` step distributions that exceeded the triple budget and were
    /// estimated by sampling instead of exact enumeration.
    pub sampled_steps: usize,
}

/// One step distribution of a conditional stopping instance.
enum StepDist {
    /// `(value, probability)` support points; the remaining mass is zero.
    Exact(Vec<(f64, f64)>),
    /// Positive values among `total` uniform samples.
    Sampled { values: Vec<f64>, total: usize },
}

impl StepDist {
    fn expected_max(&self, floor: f64) -> f64 {
        match self {
            StepDist::Exact(points) => {
                let mut mass = 0.0;
                let mut out = 0.0;
                for &(v, p) in points {
                    out += p * v.max(floor);
                    mass += p;
                }
                out + (1.0 - mass).max(0.0) * floor
            }
            StepDist::Sampled { values, total } => {
                let positive: f64 = values.iter().map(|&v| v.max(floor)).sum();
                (positive + (*total - values.len()) as f64 * floor) / *total as f64
            }
        }
    }
}

fn conditional_marginal(v: &impl SetFunction, request: ItemSet, anchor: ItemSet, i: usize) -> f64 {
    let hi = request.intersect(ItemSet::prefix(i + 1)).union(anchor);
    let lo = request.intersect(ItemSet::prefix(i)).union(anchor);
    v.value(hi) - v.value(lo)
}

/// Runs one pass of the half-double sampling algorithm.
pub fn run_halfdouble(
    inst: &Instance,
    sol: &LpSolution,
    dec: &Decomposition,
    rng: &mut impl Rng,
) -> Result<HalfDoubleRun, HalfDoubleError> {
    run_with_cap(inst, sol, dec, rng, TRIPLE_CAP)
}

fn run_with_cap(
    inst: &Instance,
    sol: &LpSolution,
    dec: &Decomposition,
    rng: &mut impl Rng,
    triple_cap: usize,
) -> Result<HalfDoubleRun, HalfDoubleError> {
    if !sol.tight {
        return Err(HalfDoubleError::NotTight);
    }
    if sol.entries.len() != inst.t() {
        return Err(HalfDoubleError::Mismatch(format!(
            "solution covers {} agents, instance has {}",
            sol.entries.len(),
            inst.t()
        )));
    }
    let t_count = inst.t();

    let mut q = ItemSet::EMPTY;
    for i in 0..inst.m {
        if rng.gen_bool(0.5) {
            q.insert(i);
        }
    }

    // Conditional stopping instances for items outside Q. The distribution
    // of step t marginalizes the two independent column draws of the
    // realized type: the triple (k, A, B) has probability x_A * x_B / p_k.
    let mut thresholds: Vec<Vec<f64>> = vec![Vec::new(); inst.m];
    let mut sampled_steps = 0usize;
    for i in 0..inst.m {
        if q.contains(i) {
            continue;
        }
        let mut steps: Vec<StepDist> = Vec::with_capacity(t_count);
        for t in 0..t_count {
            let mut triples = 0usize;
            for cols in sol.entries[t].iter() {
                let own = cols.iter().filter(|(set, _)| set.contains(i)).count();
                triples += own * cols.len();
            }
            if triples <= triple_cap {
                let mut points = Vec::new();
                for (k, cols) in sol.entries[t].iter().enumerate() {
                    let p = inst.agents[t][k].p;
                    if p <= 0.0 {
                        continue;
                    }
                    let v = &inst.agents[t][k].valuation;
                    for (ca, (a, xa)) in cols.iter().enumerate() {
                        if !a.contains(i) {
                            continue;
                        }
                        let a_free = dec.free_late_items(t, k, ca);
                        let request = a.minus(q);
                        for (cb, (_, xb)) in cols.iter().enumerate() {
                            let b_free = dec.free_late_items(t, k, cb);
                            let anchor = q.intersect(a_free.union(b_free));
                            let w = conditional_marginal(v, request, anchor, i);
                            if w > 0.0 {
                                points.push((w, xa * xb / p));
                            }
                        }
                    }
                }
                steps.push(StepDist::Exact(points));
            } else {
                sampled_steps += 1;
                let mut values = Vec::new();
                for _ in 0..FALLBACK_SAMPLES {
                    let k = sample_type(&inst.agents[t], rng);
                    let cols = &sol.entries[t][k];
                    if cols.is_empty() {
                        continue;
                    }
                    let ca = sample_column(cols, rng);
                    let cb = sample_column(cols, rng);
                    let a = cols[ca].0;
                    if !a.contains(i) {
                        continue;
                    }
                    let anchor = q.intersect(
                        dec.free_late_items(t, k, ca).union(dec.free_late_items(t, k, cb)),
                    );
                    let w =
                        conditional_marginal(&inst.agents[t][k].valuation, a.minus(q), anchor, i);
                    if w > 0.0 {
                        values.push(w);
                    }
                }
                steps.push(StepDist::Sampled { values, total: FALLBACK_SAMPLES });
            }
        }
        // backward recursion over the conditional steps
        let mut tau = vec![0.0; t_count];
        let mut cont = 0.0;
        for t in (0..t_count).rev() {
            tau[t] = cont;
            cont = steps[t].expected_max(cont);
        }
        thresholds[i] = tau;
    }

    // Stream the agents.
    let mut remaining = ItemSet::full(inst.m);
    let mut pi_open = vec![true; inst.m];
    let mut steps = Vec::with_capacity(t_count);
    let mut reward = 0.0;
    for t in 0..t_count {
        let k = sample_type(&inst.agents[t], rng);
        let v = &inst.agents[t][k].valuation;
        let cols = &sol.entries[t][k];
        let (a, ca, b, cb) = if cols.is_empty() {
            (ItemSet::EMPTY, None, ItemSet::EMPTY, None)
        } else {
            let ca = sample_column(cols, rng);
            let cb = sample_column(cols, rng);
            (cols[ca].0, Some(ca), cols[cb].0, Some(cb))
        };
        let a_free = ca.map_or(ItemSet::EMPTY, |c| dec.free_late_items(t, k, c));
        let b_free = cb.map_or(ItemSet::EMPTY, |c| dec.free_late_items(t, k, c));
        let s_free = q.intersect(a_free.union(b_free));
        let s_req = a.minus(q);

        let mut s_get = ItemSet::EMPTY;
        for i in s_req.iter() {
            if !pi_open[i] {
                continue;
            }
            let w = conditional_marginal(v, s_req, s_free, i);
            if w > 0.0 && w >= thresholds[i][t] {
                pi_open[i] = false;
                s_get.insert(i);
            }
        }
        debug_assert!(s_get.is_disjoint(q));
        debug_assert!(s_get.is_subset_of(s_req));

        let allocated = s_free.intersect(remaining).union(s_get);
        reward += v.value(allocated);
        steps.push(StepTrace {
            k,
            a,
            b,
            a_free,
            b_free,
            s_free,
            s_req,
            s_get,
            allocated,
            remaining_before: remaining,
        });
        remaining = remaining.minus(allocated);
    }

    Ok(HalfDoubleRun { q, reward, steps, sampled_steps })
}

/// Exact per-`(t, k, i)` probability that item `i` lands in the late free
/// part of a single column sample; bounded by `eps_e` through the online
/// constraint.
#[derive(Debug, Serialize)]
pub struct FreeSampleAudit {
    /// Nonzero probabilities as `(t, k, i, prob)`, 0-indexed like the rest
    /// of the in-memory model.
    pub entries: Vec<(usize, usize, usize, f64)>,
    pub max_prob: f64,
    pub bound: f64,
    pub pass: bool,
}

pub fn audit_free_sample_prob(
    inst: &Instance,
    sol: &LpSolution,
    dec: &Decomposition,
) -> FreeSampleAudit {
    let mut entries = Vec::new();
    let mut max_prob = 0.0f64;
    for (t, types) in sol.entries.iter().enumerate() {
        for (k, cols) in types.iter().enumerate() {
            let p = inst.agents[t][k].p;
            if p <= 0.0 {
                continue;
            }
            for i in 0..inst.m {
                let prob: f64 = cols
                    .iter()
                    .enumerate()
                    .filter(|(c, (set, _))| set.contains(i) && dec.in_free_late(t, k, *c, i))
                    .map(|(_, (_, x))| x / p)
                    .sum();
                if prob > 0.0 {
                    entries.push((t, k, i, prob));
                    max_prob = max_prob.max(prob);
                }
            }
        }
    }
    let bound = dec.eps_e;
    FreeSampleAudit { entries, max_prob, bound, pass: max_prob <= bound + 1e-12 }
}

/// Empirical availability of items in `Q` per step, against the union-bound
/// budget `1 - 4 * (per-item free mass)` with a three-sigma allowance.
#[derive(Debug, Serialize)]
pub struct AvailabilityAudit {
    /// `(item, step, conditioning runs, empirical availability, bound)`.
    pub rows: Vec<(usize, usize, usize, f64, f64)>,
    pub pass: bool,
}

pub fn audit_availability(
    runs: &[HalfDoubleRun],
    dec: &Decomposition,
    m: usize,
) -> Result<AvailabilityAudit, HalfDoubleError> {
    if runs.len() < MIN_AUDIT_RUNS {
        return Err(HalfDoubleError::InsufficientRuns(runs.len()));
    }
    let t_count = runs[0].steps.len();
    let mut in_q = vec![0usize; m];
    let mut avail = vec![vec![0usize; t_count]; m];
    for run in runs {
        for i in run.q.iter() {
            in_q[i] += 1;
            for (t, step) in run.steps.iter().enumerate() {
                if step.remaining_before.contains(i) {
                    avail[i][t] += 1;
                }
            }
        }
    }
    let mut rows = Vec::new();
    let mut pass = true;
    for i in 0..m {
        if in_q[i] == 0 {
            continue;
        }
        let n = in_q[i] as f64;
        let bound = 1.0 - 4.0 * dec.fr_mass[i];
        for t in 0..t_count {
            let frac = avail[i][t] as f64 / n;
            let sigma = (frac * (1.0 - frac) / n).sqrt();
            if frac < bound - 3.0 * sigma - 1e-12 {
                pass = false;
            }
            rows.push((i, t, in_q[i], frac, bound));
        }
    }
    Ok(AvailabilityAudit { rows, pass })
}
