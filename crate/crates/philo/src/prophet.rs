//! Single-item optimal stopping: the sum-of-expectations benchmark, optimal
//! thresholds by backward dynamic programming, streaming execution, and the
//! fixed-threshold / fixed-subset / switch-step policy zoo.
//!
//! Instances carry finite per-step value distributions and must satisfy the
//! ex-ante constraint: the total arrival probability of positive values is
//! at most one. Policies accept only strictly positive values and accept on
//! threshold ties.

use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

const TOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum PiError {
    #[error("{0}")]
    Invalid(String),
    #[error("stream has {got} steps, instance has {want}")]
    StreamLength { got: usize, want: usize },
    #[error(
        "free-deterministic check needs mu < 0.5 and beta > 0.5 + mu (got mu={mu}, beta={beta})"
    )]
    BadParams { mu: f64, beta: f64 },
}

/// One support point of a step distribution. Zero-probability points are
/// dropped at construction; the remaining mass of each step is an implicit
/// zero value. Equal values from different origins stay distinct entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiPoint {
    pub value: f64,
    pub prob: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PiInstance {
    steps: Vec<Vec<PiPoint>>,
}

impl PiInstance {
    pub fn new(steps: Vec<Vec<PiPoint>>) -> Result<Self, PiError> {
        let steps: Vec<Vec<PiPoint>> = steps
            .into_iter()
            .map(|pts| pts.into_iter().filter(|p| p.prob > 0.0).collect())
            .collect();
        for (t, pts) in steps.iter().enumerate() {
            let mut mass = 0.0;
            for p in pts {
                if !(p.value.is_finite() && p.value >= 0.0) {
                    return Err(PiError::Invalid(format!("step {t}: value {} invalid", p.value)));
                }
                if !(p.prob.is_finite() && p.prob >= 0.0) {
                    return Err(PiError::Invalid(format!(
                        "step {t}: probability {} invalid",
                        p.prob
                    )));
                }
                mass += p.prob;
            }
            if mass > 1.0 + TOL {
                return Err(PiError::Invalid(format!("step {t}: probabilities sum to {mass} > 1")));
            }
        }
        let inst = PiInstance { steps };
        let ex = inst.exante_mass();
        if ex > 1.0 + TOL {
            return Err(PiError::Invalid(format!("ex-ante mass {ex} exceeds 1")));
        }
        Ok(inst)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Vec<PiPoint>] {
        &self.steps
    }

    /// Total arrival probability of positive values.
    pub fn exante_mass(&self) -> f64 {
        self.steps.iter().flat_map(|pts| pts.iter()).filter(|p| p.value > 0.0).map(|p| p.prob).sum()
    }

    /// Sum of step expectations, the ex-ante upper bound.
    pub fn benchmark(&self) -> f64 {
        self.steps.iter().flat_map(|pts| pts.iter()).map(|p| p.value * p.prob).sum()
    }

    /// Draws one realized stream: per step the index of the realized point,
    /// or `None` for the implicit zero.
    pub fn sample_stream(&self, rng: &mut impl rand::Rng) -> Vec<Option<usize>> {
        self.steps
            .iter()
            .map(|pts| {
                let mut u: f64 = rng.gen();
                for (idx, p) in pts.iter().enumerate() {
                    if u < p.prob {
                        return Some(idx);
                    }
                    u -= p.prob;
                }
                None
            })
            .collect()
    }
}

/// Thresholds plus the exact optimal value. The last threshold is zero and
/// each earlier one is the expected maximum of the next step's value and
/// the next threshold.
pub fn optimal_thresholds(pi: &PiInstance) -> (PiPolicy, f64) {
    let t_count = pi.len();
    let mut thresholds = vec![0.0; t_count];
    let mut cont = 0.0; // value-to-go after the last step
    for t in (0..t_count).rev() {
        thresholds[t] = cont;
        cont = expected_max(&pi.steps[t], cont);
    }
    // `cont` is now the value before step 1, i.e. the optimal value.
    (PiPolicy::OptimalThresholds { thresholds }, cont)
}

fn expected_max(points: &[PiPoint], floor: f64) -> f64 {
    let mut total = 0.0;
    let mut mass = 0.0;
    for p in points {
        total += p.prob * p.value.max(floor);
        mass += p.prob;
    }
    total + (1.0 - mass).max(0.0) * floor
}

#[derive(Clone, Debug, PartialEq)]
pub enum PiPolicy {
    /// Accept the first positive value at least the step threshold.
    OptimalThresholds { thresholds: Vec<f64> },
    /// Accept the first positive value at least a fixed threshold.
    FixedThreshold { threshold: f64 },
    /// Accept the first arriving `(step, point)` pair in the set.
    FixedSubset { accept: BTreeSet<(usize, usize)> },
    /// Before `switch_step` accept only pairs in `free`; from it on accept
    /// any positive value.
    SwitchStep { switch_step: usize, free: BTreeSet<(usize, usize)> },
}

impl PiPolicy {
    fn accepts(&self, step: usize, point: usize, value: f64) -> bool {
        if value <= 0.0 {
            return false;
        }
        match self {
            PiPolicy::OptimalThresholds { thresholds } => value >= thresholds[step],
            PiPolicy::FixedThreshold { threshold } => value >= *threshold,
            PiPolicy::FixedSubset { accept } => accept.contains(&(step, point)),
            PiPolicy::SwitchStep { switch_step, free } => {
                step >= *switch_step || free.contains(&(step, point))
            }
        }
    }

    /// Exact expected value of the policy on `pi`: per step, the product of
    /// earlier non-acceptance probabilities times the accepted mass.
    pub fn value(&self, pi: &PiInstance) -> f64 {
        let mut alive = 1.0;
        let mut total = 0.0;
        for (t, pts) in pi.steps().iter().enumerate() {
            let mut take_mass = 0.0;
            let mut take_value = 0.0;
            for (idx, p) in pts.iter().enumerate() {
                if self.accepts(t, idx, p.value) {
                    take_mass += p.prob;
                    take_value += p.prob * p.value;
                }
            }
            total += alive * take_value;
            alive *= 1.0 - take_mass;
        }
        total
    }

    /// One pass over a realized stream; returns the accepted `(step, value)`.
    pub fn run_stream(
        &self,
        pi: &PiInstance,
        stream: &[Option<usize>],
    ) -> Result<Option<(usize, f64)>, PiError> {
        if stream.len() != pi.len() {
            return Err(PiError::StreamLength { got: stream.len(), want: pi.len() });
        }
        for (t, realized) in stream.iter().enumerate() {
            if let Some(idx) = realized {
                let value = pi.steps()[t][*idx].value;
                if self.accepts(t, *idx, value) {
                    return Ok(Some((t, value)));
                }
            }
        }
        Ok(None)
    }
}

/// Output of the free-value tail check below.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FreeDetCheck {
    pub holds_premise: bool,
    pub delta: f64,
    pub tail_prob: f64,
    pub tail_prob_bound: f64,
    pub tail_mass: f64,
    pub tail_mass_bound: f64,
    pub pass: bool,
}

/// Checks the free-deterministic tail predicate: if no online policy beats
/// `(0.5 + mu) * benchmark`, then values above `beta * benchmark` carry
/// probability at most `delta = sqrt(4 mu / (beta - 0.5 - mu))` and expected
/// mass at most `(0.5 + mu) / (1 - delta) * benchmark`. Vacuous whenever the
/// premise fails; the mass bound is vacuous for `delta >= 1`.
pub fn free_det_check(pi: &PiInstance, mu: f64, beta: f64) -> Result<FreeDetCheck, PiError> {
    if !(mu < 0.5 && beta > 0.5 + mu && mu > 0.0) {
        return Err(PiError::BadParams { mu, beta });
    }
    let benchmark = pi.benchmark();
    let (_, opt) = optimal_thresholds(pi);
    let holds_premise = opt <= (0.5 + mu) * benchmark + TOL;
    let delta = (4.0 * mu / (beta - 0.5 - mu)).sqrt();
    let cut = beta * benchmark;
    let mut tail_prob = 0.0;
    let mut tail_mass = 0.0;
    for pts in pi.steps() {
        for p in pts {
            if p.value > cut {
                tail_prob += p.prob;
                tail_mass += p.prob * p.value;
            }
        }
    }
    let tail_mass_bound =
        if delta < 1.0 { (0.5 + mu) / (1.0 - delta) * benchmark } else { f64::INFINITY };
    let pass = !holds_premise || (tail_prob <= delta + TOL && tail_mass <= tail_mass_bound + TOL);
    Ok(FreeDetCheck {
        holds_premise,
        delta,
        tail_prob,
        tail_prob_bound: delta,
        tail_mass,
        tail_mass_bound,
        pass,
    })
}

/// Seeded random ex-ante-feasible instance, for property tests and the
/// acceptance suite.
pub fn random_instance(
    rng: &mut impl rand::Rng,
    max_steps: usize,
    max_support: usize,
) -> PiInstance {
    let t_count = rng.gen_range(1..=max_steps.max(1));
    // split a random total mass <= 1 across all positive-value points
    let budget: f64 = rng.gen_range(0.2..1.0);
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(t_count);
    let mut total = 0.0;
    for _ in 0..t_count {
        let support = rng.gen_range(0..=max_support);
        let w: Vec<f64> = (0..support).map(|_| rng.gen_range(0.01..1.0)).collect();
        total += w.iter().sum::<f64>();
        weights.push(w);
    }
    let scale = if total > 0.0 { budget / total } else { 0.0 };
    let steps = weights
        .into_iter()
        .map(|w| {
            w.into_iter()
                .map(|raw| PiPoint { value: rng.gen_range(0.0..10.0), prob: raw * scale })
                .collect()
        })
        .collect();
    PiInstance::new(steps).expect("generated instance within ex-ante budget")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pi(steps: Vec<Vec<(f64, f64)>>) -> PiInstance {
        PiInstance::new(
            steps
                .into_iter()
                .map(|pts| pts.into_iter().map(|(value, prob)| PiPoint { value, prob }).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn benchmark_values() {
        assert_eq!(pi(vec![vec![(5.0, 1.0)]]).benchmark(), 5.0);
        assert!((pi(vec![vec![(1.0, 0.9)], vec![(10.0, 0.1)]]).benchmark() - 1.9).abs() < TOL);
        assert_eq!(pi(vec![]).benchmark(), 0.0);
    }

    #[test]
    fn exante_constraint_enforced() {
        let err = PiInstance::new(vec![
            vec![PiPoint { value: 1.0, prob: 0.7 }],
            vec![PiPoint { value: 2.0, prob: 0.7 }],
        ])
        .unwrap_err();
        assert!(matches!(err, PiError::Invalid(_)));

        // zero values do not count against the budget
        let ok = PiInstance::new(vec![
            vec![PiPoint { value: 0.0, prob: 0.9 }],
            vec![PiPoint { value: 2.0, prob: 0.9 }],
        ]);
        assert!(ok.is_ok());
    }

    #[test]
    fn dp_on_the_classic_hard_instance() {
        let inst = pi(vec![vec![(1.0, 0.9)], vec![(10.0, 0.1)]]);
        let (policy, opt) = optimal_thresholds(&inst);
        let PiPolicy::OptimalThresholds { thresholds } = &policy else { unreachable!() };
        assert!((thresholds[0] - 1.0).abs() < TOL);
        assert_eq!(thresholds[1], 0.0);
        assert!((opt - 1.0).abs() < TOL);
        assert!((policy.value(&inst) - opt).abs() < TOL);
    }

    #[test]
    fn dp_simple_cases() {
        let (_, opt) = optimal_thresholds(&pi(vec![vec![(5.0, 1.0)]]));
        assert!((opt - 5.0).abs() < TOL);

        // two identical steps: tau_1 = 0.5, accept the first 1
        let inst = pi(vec![vec![(1.0, 0.5)], vec![(1.0, 0.5)]]);
        let (_, opt) = optimal_thresholds(&inst);
        assert!((opt - 0.75).abs() < TOL);
    }

    #[test]
    fn stream_semantics() {
        let inst = pi(vec![vec![(1.0, 0.9)], vec![(10.0, 0.1)]]);
        let (policy, _) = optimal_thresholds(&inst);
        // tie at the first step is accepted
        let got = policy.run_stream(&inst, &[Some(0), None]).unwrap();
        assert_eq!(got, Some((0, 1.0)));

        let empty = PiPolicy::FixedSubset { accept: BTreeSet::new() };
        assert_eq!(empty.run_stream(&inst, &[Some(0), Some(0)]).unwrap(), None);

        let err = policy.run_stream(&inst, &[None]).unwrap_err();
        assert!(matches!(err, PiError::StreamLength { .. }));
    }

    #[test]
    fn monte_carlo_matches_dp() {
        let inst = pi(vec![
            vec![(1.0, 0.3), (4.0, 0.1)],
            vec![(2.0, 0.25)],
            vec![(8.0, 0.05), (0.5, 0.2)],
        ]);
        let (policy, opt) = optimal_thresholds(&inst);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let stream = inst.sample_stream(&mut rng);
            let got = policy.run_stream(&inst, &stream).unwrap().map_or(0.0, |(_, v)| v);
            sum += got;
            sumsq += got * got;
        }
        let mean = sum / n as f64;
        let var = (sumsq - sum * sum / n as f64) / (n as f64 - 1.0);
        let stderr = (var / n as f64).sqrt();
        assert!((mean - opt).abs() <= 4.0 * stderr, "mean {mean} vs dp {opt} (se {stderr})");
    }

    #[test]
    fn prophet_floor_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..300 {
            let inst = random_instance(&mut rng, 8, 4);
            let (_, opt) = optimal_thresholds(&inst);
            assert!(opt >= 0.5 * inst.benchmark() - TOL, "floor violated on {inst:?}");
        }
    }

    #[test]
    fn dp_dominates_the_policy_zoo() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let inst = random_instance(&mut rng, 3, 3);
            let (_, opt) = optimal_thresholds(&inst);
            let mut cuts: Vec<f64> = vec![0.0];
            let mut pairs = Vec::new();
            for (t, pts) in inst.steps().iter().enumerate() {
                for (idx, p) in pts.iter().enumerate() {
                    cuts.push(p.value);
                    pairs.push((t, idx));
                }
            }
            for cut in cuts {
                let val = PiPolicy::FixedThreshold { threshold: cut }.value(&inst);
                assert!(val <= opt + TOL, "fixed threshold {cut} beat the DP");
            }
            for mask in 0u32..(1 << pairs.len().min(12)) {
                let accept: BTreeSet<_> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask & (1 << b) != 0)
                    .map(|(_, &p)| p)
                    .collect();
                let val = PiPolicy::FixedSubset { accept }.value(&inst);
                assert!(val <= opt + TOL, "fixed subset beat the DP");
            }
        }
    }

    #[test]
    fn switch_step_policy_semantics() {
        // before the switch only listed points are taken; from it on, any
        // positive value is
        let inst = pi(vec![vec![(2.0, 0.5)], vec![(3.0, 0.25)], vec![(1.0, 0.25)]]);
        let free: BTreeSet<(usize, usize)> = [(1usize, 0usize)].into_iter().collect();
        let policy = PiPolicy::SwitchStep { switch_step: 2, free };
        // exact: skip step 0, take 3 at step 1 (listed), else take 1 at step 2
        let expect = 0.25 * 3.0 + 0.75 * 0.25 * 1.0;
        assert!((policy.value(&inst) - expect).abs() < TOL);

        assert_eq!(policy.run_stream(&inst, &[Some(0), None, Some(0)]).unwrap(), Some((2, 1.0)));
        assert_eq!(policy.run_stream(&inst, &[None, Some(0), Some(0)]).unwrap(), Some((1, 3.0)));
        assert_eq!(policy.run_stream(&inst, &[Some(0), None, None]).unwrap(), None);
    }

    #[test]
    fn free_det_check_cases() {
        // the classic hard pair: value 1 w.p. 1-d0, then 1/d0 w.p. d0
        let d0 = 0.01;
        let inst = pi(vec![vec![(1.0, 1.0 - d0)], vec![(1.0 / d0, d0)]]);
        let check = free_det_check(&inst, 0.02, 0.6).unwrap();
        assert!(check.holds_premise);
        assert!((check.tail_prob - d0).abs() < TOL);
        assert!(check.tail_prob <= check.tail_prob_bound + TOL);
        assert!(check.pass);

        // premise fails -> vacuous pass
        let easy = pi(vec![vec![(5.0, 0.5)]]);
        let check = free_det_check(&easy, 0.01, 0.9).unwrap();
        assert!(!check.holds_premise);
        assert!(check.pass);

        // cut above every value -> zero tails
        let inst = pi(vec![vec![(1.0, 0.5)], vec![(1.0, 0.5)]]);
        let check = free_det_check(&inst, 0.3, 2.0).unwrap();
        assert_eq!(check.tail_prob, 0.0);
        assert_eq!(check.tail_mass, 0.0);
        assert!(check.pass);

        assert!(free_det_check(&inst, 0.6, 2.0).is_err());
        assert!(free_det_check(&inst, 0.1, 0.55).is_err());
    }

    #[test]
    fn free_det_check_holds_on_random_instances() {
        // The predicate is a theorem; any failure is a bug.
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..500 {
            let inst = random_instance(&mut rng, 6, 3);
            if inst.benchmark() <= 0.0 {
                continue;
            }
            for (mu, beta) in [(0.01, 0.6), (0.05, 0.7), (0.2, 0.95)] {
                let check = free_det_check(&inst, mu, beta).unwrap();
                assert!(check.pass, "tail predicate failed: {check:?} on {inst:?}");
            }
        }
    }
}
