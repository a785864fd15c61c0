//! The baseline rounding algorithm: reduce the allocation instance to one
//! single-item stopping instance per item, run the optimal thresholds
//! online, and expose the easy-instance check.
//!
//! For a tight LP solution, each realized type requests a column drawn from
//! `{x/p}`; item `i`'s stopping instance sees the prefix marginal of the
//! requested column with the column's LP mass as probability. Submodularity
//! makes the realized reward at least the sum of the accepted marginals.

use crate::config_lp::LpSolution;
use crate::decomposition::Decomposition;
use crate::instance::{AgentType, Instance};
use crate::items::ItemSet;
use crate::prophet::{optimal_thresholds, PiInstance, PiPoint};
use crate::valuations::SetFunction;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("a tight LP solution is required")]
    NotTight,
    #[error("instance and solution shapes disagree: {0}")]
    Mismatch(String),
    #[error("stopping instance: {0}")]
    Pi(#[from] crate::prophet::PiError),
}

/// Per-item stopping instances derived from a tight LP solution, with the
/// optimal-threshold policies and their exact values.
#[derive(Clone, Debug)]
pub struct BaselineBundle {
    pub pis: Vec<PiInstance>,
    /// `origins[i][t][j]` identifies point `j` of step `t` of item `i`'s
    /// instance as `(k, column index)` within the solution entries. Points
    /// with equal values from different columns stay distinct.
    pub origins: Vec<Vec<Vec<(usize, usize)>>>,
    pub thresholds: Vec<Vec<f64>>,
    pub opt_values: Vec<f64>,
    pub opt_sum: f64,
}

pub fn build_bundle(inst: &Instance, sol: &LpSolution) -> Result<BaselineBundle, BaselineError> {
    if !sol.tight {
        return Err(BaselineError::NotTight);
    }
    if sol.entries.len() != inst.t() {
        return Err(BaselineError::Mismatch(format!(
            "solution covers {} agents, instance has {}",
            sol.entries.len(),
            inst.t()
        )));
    }
    let t_count = inst.t();
    let mut pis = Vec::with_capacity(inst.m);
    let mut origins = Vec::with_capacity(inst.m);
    for i in 0..inst.m {
        let mut steps = Vec::with_capacity(t_count);
        let mut step_origins = Vec::with_capacity(t_count);
        for t in 0..t_count {
            let mut points = Vec::new();
            let mut tags = Vec::new();
            for (k, cols) in sol.entries[t].iter().enumerate() {
                let v = &inst.agents[t][k].valuation;
                for (c, (set, x)) in cols.iter().enumerate() {
                    if !set.contains(i) {
                        continue;
                    }
                    let w = v.prefix_marginal(*set, i);
                    if w > 0.0 {
                        points.push(PiPoint { value: w, prob: *x });
                        tags.push((k, c));
                    }
                }
            }
            steps.push(points);
            step_origins.push(tags);
        }
        pis.push(PiInstance::new(steps)?);
        origins.push(step_origins);
    }
    let mut thresholds = Vec::with_capacity(inst.m);
    let mut opt_values = Vec::with_capacity(inst.m);
    for pi in &pis {
        let (policy, opt) = optimal_thresholds(pi);
        let crate::prophet::PiPolicy::OptimalThresholds { thresholds: tau } = policy else {
            unreachable!()
        };
        thresholds.push(tau);
        opt_values.push(opt);
    }
    let opt_sum = opt_values.iter().sum();
    Ok(BaselineBundle { pis, origins, thresholds, opt_values, opt_sum })
}

/// The easy-instance check: do the per-item optima already clear
/// `(0.5 + eps)` times the LP objective?
pub fn easy_check(bundle: &BaselineBundle, sol: &LpSolution, eps: f64) -> bool {
    bundle.opt_sum >= (0.5 + eps) * sol.objective
}

/// Trace of one simulated run.
#[derive(Clone, Debug)]
pub struct BaselineRun {
    /// Sets allocated per agent; pairwise disjoint.
    pub allocations: Vec<ItemSet>,
    /// Requested column per agent (allocation is always a subset).
    pub requests: Vec<ItemSet>,
    pub reward: f64,
    /// Sum of accepted stopping-instance values; a lower bound on the reward.
    pub accepted_sum: f64,
}

/// Realizes a type index from the agent's distribution.
pub(crate) fn sample_type(types: &[AgentType], rng: &mut impl Rng) -> usize {
    let mut u: f64 = rng.gen();
    let mut last_positive = 0;
    for (k, ty) in types.iter().enumerate() {
        if ty.p > 0.0 {
            last_positive = k;
            if u < ty.p {
                return k;
            }
            u -= ty.p;
        }
    }
    last_positive
}

/// Draws a column of the realized type from `{x / p}`. Normalizes by the
/// actual entry mass, which equals `p` up to float drift on tight solutions.
pub(crate) fn sample_column(cols: &[(ItemSet, f64)], rng: &mut impl Rng) -> usize {
    debug_assert!(!cols.is_empty(), "tight solutions have a column for every positive type");
    let total: f64 = cols.iter().map(|(_, x)| x).sum();
    let mut u: f64 = rng.gen::<f64>() * total;
    for (c, (_, x)) in cols.iter().enumerate() {
        if u < *x {
            return c;
        }
        u -= x;
    }
    cols.len() - 1
}

pub fn run_baseline(
    inst: &Instance,
    sol: &LpSolution,
    bundle: &BaselineBundle,
    rng: &mut impl Rng,
) -> BaselineRun {
    debug_assert!(sol.tight, "runs sample {{x/p}} and need a tight solution");
    let t_count = inst.t();
    let mut available = vec![true; inst.m];
    let mut allocations = Vec::with_capacity(t_count);
    let mut requests = Vec::with_capacity(t_count);
    let mut reward = 0.0;
    let mut accepted_sum = 0.0;

    for t in 0..t_count {
        let k = sample_type(&inst.agents[t], rng);
        let cols = &sol.entries[t][k];
        let request =
            if cols.is_empty() { ItemSet::EMPTY } else { cols[sample_column(cols, rng)].0 };
        let v = &inst.agents[t][k].valuation;
        let mut taken = ItemSet::EMPTY;
        for i in request.iter() {
            if !available[i] {
                continue;
            }
            let w = v.prefix_marginal(request, i);
            if w > 0.0 && w >= bundle.thresholds[i][t] {
                available[i] = false;
                taken.insert(i);
                accepted_sum += w;
            }
        }
        reward += v.value(taken);
        allocations.push(taken);
        requests.push(request);
    }
    BaselineRun { allocations, requests, reward, accepted_sum }
}

/// Per-item switch steps: the last step whose suffix item mass is still at
/// least `eps_e`. On tight solutions the suffix at step 0 is one, so the
/// index is well defined for `eps_e <= 1`.
pub fn switch_steps(sol: &LpSolution, m: usize, eps_e: f64) -> Vec<usize> {
    let t_count = sol.entries.len();
    let mut mass = vec![vec![0.0; t_count]; m];
    for (t, types) in sol.entries.iter().enumerate() {
        for cols in types {
            for (set, x) in cols {
                for i in set.iter() {
                    mass[i][t] += x;
                }
            }
        }
    }
    (0..m)
        .map(|i| {
            let mut suffix = 0.0;
            let mut switch = 0;
            for t in (0..t_count).rev() {
                suffix += mass[i][t];
                if suffix >= eps_e {
                    switch = t;
                    break;
                }
            }
            switch
        })
        .collect()
}

/// The explicit switch-step policy run on every item: before its switch the
/// item only accepts free-classified values, from the switch on it accepts
/// anything positive. Accounting matches `run_baseline`.
pub fn run_welarge_policy(
    inst: &Instance,
    sol: &LpSolution,
    dec: &Decomposition,
    rng: &mut impl Rng,
) -> BaselineRun {
    debug_assert!(sol.tight, "runs sample {{x/p}} and need a tight solution");
    let t_count = inst.t();
    let switches = switch_steps(sol, inst.m, dec.eps_e);
    let mut available = vec![true; inst.m];
    let mut allocations = Vec::with_capacity(t_count);
    let mut requests = Vec::with_capacity(t_count);
    let mut reward = 0.0;
    let mut accepted_sum = 0.0;

    for t in 0..t_count {
        let k = sample_type(&inst.agents[t], rng);
        let cols = &sol.entries[t][k];
        let (request, col) = if cols.is_empty() {
            (ItemSet::EMPTY, None)
        } else {
            let c = sample_column(cols, rng);
            (cols[c].0, Some(c))
        };
        let v = &inst.agents[t][k].valuation;
        let mut taken = ItemSet::EMPTY;
        for i in request.iter() {
            if !available[i] {
                continue;
            }
            let w = v.prefix_marginal(request, i);
            if w <= 0.0 {
                continue;
            }
            let accept =
                if t < switches[i] { col.is_some_and(|c| dec.in_free(t, k, c, i)) } else { true };
            if accept {
                available[i] = false;
                taken.insert(i);
                accepted_sum += w;
            }
        }
        reward += v.value(taken);
        allocations.push(taken);
        requests.push(request);
    }
    BaselineRun { allocations, requests, reward, accepted_sum }
}
