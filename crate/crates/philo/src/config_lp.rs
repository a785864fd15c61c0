//! The online configuration LP: build, solve, tighten, and audit.
//!
//! The LP has one variable per declared column `(t, k, S)` and three
//! constraint families: per-item total mass at most one, per-type mass at
//! most `p`, and the online constraint tying allocation mass of an item at
//! `(t, k)` to its residual availability before `t`. The online constraint
//! is kept linear in the rearranged form
//! `p_{t,k} * (prior mass of i) + (own mass of i at (t,k)) <= p_{t,k}`.
//!
//! Solving is explicit over the declared families — there is no column
//! generation; a dense tableau simplex with Bland's rule does the work.

use crate::instance::{AgentType, Instance};
use crate::items::ItemSet;
use crate::simplex;
use crate::valuations::{SetFunction, Valuation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Feasibility tolerance for all LP audits.
pub const FEAS_TOL: f64 = 1e-7;
/// Entries below this are dropped from the sparse solution.
const SPARSE_TOL: f64 = 1e-12;
const MAX_PIVOTS: usize = 1_000_000;
const MAX_COLUMNS: usize = 100_000;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("column count {0} exceeds cap {MAX_COLUMNS}")]
    TooManyColumns(usize),
    #[error("simplex: {0}")]
    Simplex(#[from] simplex::SimplexError),
    #[error("solution and instance disagree: {0}")]
    Mismatch(String),
    #[error("operation requires a tight solution; call tighten first")]
    NotTight,
    #[error("instance is not in the expected shape: {0}")]
    BadShape(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Sparse LP solution: per agent and type, the columns holding mass.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    /// `entries[t][k]` lists `(S, x)` with `x > 0`, in column order.
    pub entries: Vec<Vec<Vec<(ItemSet, f64)>>>,
    pub objective: f64,
    /// Per-item contribution via prefix marginals; sums to the objective.
    pub per_item: Vec<f64>,
    /// Set once constraints (1-per-item) and (mass-per-type) hold with equality.
    pub tight: bool,
}

impl LpSolution {
    /// Mass of columns of `(t, k)` that contain item `i`.
    fn own_mass(&self, t: usize, k: usize, i: usize) -> f64 {
        self.entries[t][k].iter().filter(|(s, _)| s.contains(i)).map(|(_, x)| x).sum()
    }

    /// Mass on item `i` from agents strictly before `t`.
    pub fn prior_mass(&self, t: usize, i: usize) -> f64 {
        (0..t)
            .map(|s| {
                self.entries[s]
                    .iter()
                    .flat_map(|cols| cols.iter())
                    .filter(|(set, _)| set.contains(i))
                    .map(|(_, x)| x)
                    .sum::<f64>()
            })
            .sum()
    }

    /// Total mass on item `i` over all agents.
    pub fn item_mass(&self, i: usize) -> f64 {
        self.prior_mass(self.entries.len(), i)
    }

    pub fn recompute_objective(&self, inst: &Instance) -> f64 {
        let mut total = 0.0;
        for (t, types) in self.entries.iter().enumerate() {
            for (k, cols) in types.iter().enumerate() {
                let v = &inst.agents[t][k].valuation;
                for (set, x) in cols {
                    total += v.value(*set) * x;
                }
            }
        }
        total
    }

    pub fn to_json(&self) -> Result<String, LpError> {
        let file: SolutionFile = self.into();
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str, inst: &Instance) -> Result<LpSolution, LpError> {
        let file: SolutionFile = serde_json::from_str(text)?;
        file.into_solution(inst)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), LpError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path, inst: &Instance) -> Result<LpSolution, LpError> {
        LpSolution::from_json(&std::fs::read_to_string(path)?, inst)
    }
}

/// Per-item LP contribution `Σ x * w_{t,k,S}(i)`.
pub fn lp_item_value(sol: &LpSolution, inst: &Instance, i: usize) -> f64 {
    let mut total = 0.0;
    for (t, types) in sol.entries.iter().enumerate() {
        for (k, cols) in types.iter().enumerate() {
            let v = &inst.agents[t][k].valuation;
            for (set, x) in cols {
                if set.contains(i) {
                    total += x * v.prefix_marginal(*set, i);
                }
            }
        }
    }
    total
}

fn per_item_vector(entries: &[Vec<Vec<(ItemSet, f64)>>], inst: &Instance) -> Vec<f64> {
    let mut per_item = vec![0.0; inst.m];
    for (t, types) in entries.iter().enumerate() {
        for (k, cols) in types.iter().enumerate() {
            let v = &inst.agents[t][k].valuation;
            for (set, x) in cols {
                for i in set.iter() {
                    per_item[i] += x * v.prefix_marginal(*set, i);
                }
            }
        }
    }
    per_item
}

/// Builds the explicit LP over the declared families and solves it.
/// Zero-probability types are dropped (their columns are forced to zero by
/// the per-type constraint anyway) and duplicate columns are merged.
pub fn build_and_solve(inst: &Instance) -> Result<LpSolution, LpError> {
    struct Col {
        t: usize,
        k: usize,
        set: ItemSet,
        value: f64,
    }

    let t_count = inst.t();
    let mut cols: Vec<Col> = Vec::new();
    // columns of (t, k): index range into `cols`
    let mut ranges: Vec<Vec<(usize, usize)>> = Vec::with_capacity(t_count);
    for (t, types) in inst.agents.iter().enumerate() {
        let mut type_ranges = Vec::with_capacity(types.len());
        for (k, ty) in types.iter().enumerate() {
            let start = cols.len();
            if ty.p > 0.0 {
                let mut seen = std::collections::HashSet::new();
                for set in &ty.family {
                    if seen.insert(set.mask()) {
                        cols.push(Col { t, k, set: *set, value: ty.valuation.value(*set) });
                    }
                }
            }
            type_ranges.push((start, cols.len()));
        }
        ranges.push(type_ranges);
    }
    let n = cols.len();
    if n > MAX_COLUMNS {
        return Err(LpError::TooManyColumns(n));
    }

    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    // (a) per-item total mass <= 1
    for i in 0..inst.m {
        let mut row = vec![0.0; n];
        let mut any = false;
        for (j, c) in cols.iter().enumerate() {
            if c.set.contains(i) {
                row[j] = 1.0;
                any = true;
            }
        }
        if any {
            rows.push((row, 1.0));
        }
    }
    // (b) per-type mass <= p
    for (t, types) in inst.agents.iter().enumerate() {
        for (k, ty) in types.iter().enumerate() {
            let (start, end) = ranges[t][k];
            if start == end {
                continue;
            }
            let mut row = vec![0.0; n];
            row[start..end].fill(1.0);
            rows.push((row, ty.p));
        }
    }
    // (c) online constraint, rearranged: p * prior_mass(i) + own_mass(i) <= p.
    // Rows whose own term is empty are implied by (a) and are omitted.
    for (t, types) in inst.agents.iter().enumerate() {
        for (k, ty) in types.iter().enumerate() {
            if ty.p <= 0.0 {
                continue;
            }
            let (start, end) = ranges[t][k];
            for i in 0..inst.m {
                let own: Vec<usize> = (start..end).filter(|&j| cols[j].set.contains(i)).collect();
                if own.is_empty() {
                    continue;
                }
                let mut row = vec![0.0; n];
                for (j, c) in cols.iter().enumerate() {
                    if c.t < t && c.set.contains(i) {
                        row[j] = ty.p;
                    }
                }
                for j in own {
                    row[j] += 1.0;
                }
                rows.push((row, ty.p));
            }
        }
    }

    let objective: Vec<f64> = cols.iter().map(|c| c.value).collect();
    let sol = simplex::maximize(&objective, &rows, MAX_PIVOTS)?;

    let mut entries: Vec<Vec<Vec<(ItemSet, f64)>>> =
        inst.agents.iter().map(|types| vec![Vec::new(); types.len()]).collect();
    for (j, c) in cols.iter().enumerate() {
        if sol.x[j] > SPARSE_TOL {
            entries[c.t][c.k].push((c.set, sol.x[j]));
        }
    }
    let per_item = per_item_vector(&entries, inst);
    let objective = per_item.iter().sum();
    Ok(LpSolution { entries, objective, per_item, tight: false })
}

/// Maximum violation per constraint family.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FeasibilityReport {
    pub item_mass: f64,
    pub type_mass: f64,
    pub online: f64,
}

impl FeasibilityReport {
    pub fn passes(&self) -> bool {
        self.item_mass <= FEAS_TOL && self.type_mass <= FEAS_TOL && self.online <= FEAS_TOL
    }
}

pub fn verify_feasibility(sol: &LpSolution, inst: &Instance) -> FeasibilityReport {
    let mut report = FeasibilityReport { item_mass: 0.0, type_mass: 0.0, online: 0.0 };
    for i in 0..inst.m {
        report.item_mass = report.item_mass.max(sol.item_mass(i) - 1.0);
    }
    for (t, types) in inst.agents.iter().enumerate() {
        for (k, ty) in types.iter().enumerate() {
            let mass: f64 = sol.entries[t][k].iter().map(|(_, x)| x).sum();
            report.type_mass = report.type_mass.max(mass - ty.p);
            for i in 0..inst.m {
                let own = sol.own_mass(t, k, i);
                let lhs = ty.p * sol.prior_mass(t, i) + own;
                report.online = report.online.max(lhs - ty.p);
            }
        }
    }
    report.item_mass = report.item_mass.max(0.0);
    report.type_mass = report.type_mass.max(0.0);
    report.online = report.online.max(0.0);
    report
}

/// Makes the per-item and per-type constraints tight without changing the
/// objective: appends deterministic zero-valuation agents that absorb any
/// residual item mass, then pads the empty-set columns.
pub fn tighten(sol: &LpSolution, inst: &Instance) -> (LpSolution, Instance) {
    let mut out_inst = inst.clone();
    let mut entries = sol.entries.clone();

    for i in 0..inst.m {
        let residual = 1.0 - sol.item_mass(i);
        if residual > SPARSE_TOL {
            out_inst.agents.push(vec![AgentType {
                p: 1.0,
                valuation: Valuation::zero(inst.m),
                family: vec![ItemSet::EMPTY, ItemSet::singleton(i)],
            }]);
            entries.push(vec![vec![(ItemSet::singleton(i), residual)]]);
        }
    }

    for (t, types) in out_inst.agents.iter().enumerate() {
        for (k, ty) in types.iter().enumerate() {
            let mass: f64 = entries[t][k].iter().map(|(_, x)| x).sum();
            let pad = ty.p - mass;
            if pad > SPARSE_TOL {
                if let Some(slot) = entries[t][k].iter_mut().find(|(set, _)| set.is_empty()) {
                    slot.1 += pad;
                } else {
                    entries[t][k].push((ItemSet::EMPTY, pad));
                }
            }
        }
    }

    let per_item = per_item_vector(&entries, &out_inst);
    let objective = per_item.iter().sum();
    (LpSolution { entries, objective, per_item, tight: true }, out_inst)
}

/// The paper's hand-built feasible solution for the XOS hard instance in
/// enumerate mode: mass `1-δ` on each early singleton and `δ/N` on every
/// partition block of the last agent. Comes out tight already.
pub fn feasible_solution_xos(inst: &Instance) -> Result<LpSolution, LpError> {
    let m = inst.m;
    let t_count = inst.t();
    if t_count != m + 1 {
        return Err(LpError::BadShape(format!("expected {} agents, got {}", m + 1, t_count)));
    }
    let n_types = inst.agents[m].len();
    if n_types == 0 {
        return Err(LpError::BadShape("last agent has no types".into()));
    }
    let delta = 1.0 - inst.agents[0][0].p;
    if delta <= 0.0 {
        return Err(LpError::BadShape("early agents must arrive with probability < 1".into()));
    }

    let mut entries: Vec<Vec<Vec<(ItemSet, f64)>>> =
        inst.agents.iter().map(|types| vec![Vec::new(); types.len()]).collect();
    for t in 0..m {
        // arriving type first, zero type second (generator layout)
        if inst.agents[t].len() != 2 || inst.agents[t][0].family.len() != 2 {
            return Err(LpError::BadShape(format!("agent {} is not a hard-instance agent", t + 1)));
        }
        entries[t][0].push((ItemSet::singleton(t), 1.0 - delta));
        entries[t][1].push((ItemSet::EMPTY, delta));
    }
    for (k, ty) in inst.agents[m].iter().enumerate() {
        let blocks = &ty.family[1..];
        if blocks.is_empty() {
            return Err(LpError::BadShape(format!("last agent type {} has no blocks", k + 1)));
        }
        for block in blocks {
            entries[m][k].push((*block, delta / n_types as f64));
        }
    }

    let per_item = per_item_vector(&entries, inst);
    let objective = per_item.iter().sum();
    let sol = LpSolution { entries, objective, per_item, tight: true };
    Ok(sol)
}

// ---------------------------------------------------------------------------
// File schema: agents, types, and items are 1-indexed on disk.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SolutionFile {
    objective: f64,
    tight: bool,
    entries: Vec<SolutionEntry>,
    per_item: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SolutionEntry {
    t: usize,
    k: usize,
    #[serde(rename = "S")]
    set: Vec<usize>,
    x: f64,
}

impl From<&LpSolution> for SolutionFile {
    fn from(sol: &LpSolution) -> Self {
        let mut out = Vec::new();
        for (t, types) in sol.entries.iter().enumerate() {
            for (k, cols) in types.iter().enumerate() {
                for (set, x) in cols {
                    out.push(SolutionEntry { t: t + 1, k: k + 1, set: set.to_one_based(), x: *x });
                }
            }
        }
        SolutionFile {
            objective: sol.objective,
            tight: sol.tight,
            entries: out,
            per_item: sol.per_item.clone(),
        }
    }
}

impl SolutionFile {
    fn into_solution(self, inst: &Instance) -> Result<LpSolution, LpError> {
        let mut entries: Vec<Vec<Vec<(ItemSet, f64)>>> =
            inst.agents.iter().map(|types| vec![Vec::new(); types.len()]).collect();
        for e in self.entries {
            if e.t == 0 || e.t > inst.t() {
                return Err(LpError::Mismatch(format!(
                    "entry references agent {} but the instance has {} agents \
                     (for tightened solutions pass the tightened instance)",
                    e.t,
                    inst.t()
                )));
            }
            if e.k == 0 || e.k > inst.agents[e.t - 1].len() {
                return Err(LpError::Mismatch(format!(
                    "entry references missing type {} of agent {}",
                    e.k, e.t
                )));
            }
            let set = ItemSet::from_one_based(&e.set, inst.m).map_err(LpError::Mismatch)?;
            entries[e.t - 1][e.k - 1].push((set, e.x));
        }
        if self.per_item.len() != inst.m {
            return Err(LpError::Mismatch("per_item length disagrees with m".into()));
        }
        let sol = LpSolution {
            entries,
            objective: self.objective,
            per_item: self.per_item,
            tight: self.tight,
        };
        let recomputed = sol.recompute_objective(inst);
        if (recomputed - sol.objective).abs() > 1e-6 {
            return Err(LpError::Mismatch(format!(
                "stored objective {} disagrees with the entries ({recomputed})",
                sol.objective
            )));
        }
        Ok(sol)
    }
}
