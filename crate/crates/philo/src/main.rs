use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use philo::baseline;
use philo::config_lp::{self, LpSolution};
use philo::decomposition;
use philo::driver::{self, Algorithm, McOptions, DEFAULT_EPS, DEFAULT_EPS_E};
use philo::halfdouble;
use philo::instance::{
    gen_random_submodular, gen_unit_demand_hard, gen_xos_hard, Instance, XosMode,
    ALL_SUBMODULAR_KINDS,
};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "philo", about = "Online combinatorial allocation simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum InstanceKind {
    UdHard,
    XosHard,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenMode {
    Enumerate,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum RunAlg {
    Baseline,
    Welarge,
    Halfdouble,
    Combined,
    OptimalDp,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file.
    GenInstance {
        #[arg(long, value_enum)]
        kind: InstanceKind,
        /// Inverse grain of the hard instances; 1/delta must be integral.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Partition universe of the XOS instance.
        #[arg(long, value_enum, default_value = "enumerate")]
        mode: GenMode,
        #[arg(long, default_value_t = 200)]
        n_types: usize,
        /// Item count for random instances.
        #[arg(long, default_value_t = 5)]
        m: usize,
        /// Agent count for random instances.
        #[arg(long, default_value_t = 4)]
        agents: usize,
        /// Types per agent for random instances.
        #[arg(long, default_value_t = 2)]
        types: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the online configuration LP over the declared families.
    SolveLp {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Tighten the solution; writes the tightened instance next to it.
        #[arg(long)]
        tighten: bool,
        /// Where to write the tightened instance when agents were appended.
        #[arg(long)]
        out_instance: Option<PathBuf>,
    },
    /// Compute the free-deterministic decomposition and its audits.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        /// Optional solution file; solved from scratch when omitted.
        #[arg(long)]
        lp: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_EPS_E)]
        eps_e: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an algorithm (or the exact online optimum) on an instance.
    Run {
        #[arg(long, value_enum)]
        alg: RunAlg,
        #[arg(long = "in")]
        input: PathBuf,
        /// Optional solution file; solved from scratch when omitted.
        #[arg(long)]
        lp: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
        #[arg(long, default_value_t = DEFAULT_EPS_E)]
        eps_e: f64,
        /// Dump per-item thresholds of the baseline reduction.
        #[arg(long)]
        explain: bool,
        /// Write the first half-double trace to a file.
        #[arg(long)]
        dump_trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrality-gap scan over the XOS hard family.
    GapReport {
        /// Comma-separated inverse deltas, e.g. 2,3,4.
        #[arg(long, value_delimiter = ',')]
        deltas: Vec<usize>,
        /// Emit CSV instead of JSON.
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {path:?}"))?,
        None => println!("{text}"),
    }
    Ok(())
}

/// Loads (or solves) and tightens; returns artifacts over the tightened
/// instance.
fn load_tightened(input: &PathBuf, lp: Option<&PathBuf>) -> Result<(Instance, LpSolution)> {
    let inst = Instance::load(input).with_context(|| format!("loading {input:?}"))?;
    let issues = inst.validate();
    if !issues.is_empty() {
        bail!("invalid instance: {}", issues.join("; "));
    }
    let sol = match lp {
        Some(path) => LpSolution::load(path, &inst).with_context(|| format!("loading {path:?}"))?,
        None => config_lp::build_and_solve(&inst)?,
    };
    let (sol, inst) = config_lp::tighten(&sol, &inst);
    Ok((inst, sol))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenInstance { kind, delta, seed, mode, n_types, m, agents, types, out } => {
            let inst = match kind {
                InstanceKind::UdHard => {
                    let delta = delta.context("--delta is required for ud-hard")?;
                    gen_unit_demand_hard(delta)?
                }
                InstanceKind::XosHard => {
                    let delta = delta.context("--delta is required for xos-hard")?;
                    let mode = match mode {
                        GenMode::Enumerate => XosMode::Enumerate,
                        GenMode::Sample => XosMode::Sample { n_types, seed },
                    };
                    gen_xos_hard(delta, mode)?
                }
                InstanceKind::Random => {
                    gen_random_submodular(m, agents, types, seed, &ALL_SUBMODULAR_KINDS)?
                }
            };
            inst.save(&out)?;
            eprintln!("wrote instance with m={} agents={} to {out:?}", inst.m, inst.t());
        }
        Command::SolveLp { input, out, tighten, out_instance } => {
            let inst = Instance::load(&input)?;
            let issues = inst.validate();
            if !issues.is_empty() {
                bail!("invalid instance: {}", issues.join("; "));
            }
            let sol = config_lp::build_and_solve(&inst)?;
            if tighten {
                let (tight, tight_inst) = config_lp::tighten(&sol, &inst);
                if tight_inst.t() != inst.t() {
                    let path = out_instance.context(
                        "tightening appended agents; pass --out-instance to keep files consistent",
                    )?;
                    tight_inst.save(&path)?;
                    eprintln!("wrote tightened instance to {path:?}");
                }
                tight.save(&out)?;
                eprintln!("objective {:.9} (tight)", tight.objective);
            } else {
                sol.save(&out)?;
                eprintln!("objective {:.9}", sol.objective);
            }
        }
        Command::Decompose { input, lp, eps, eps_e, out } => {
            let (inst, sol) = load_tightened(&input, lp.as_ref())?;
            let bundle = baseline::build_bundle(&inst, &sol)?;
            let dec = decomposition::compute(&inst, &sol, &bundle, eps, eps_e)?;
            let structure = decomposition::verify_structure(&dec, &sol, &bundle);
            let sample_audit = halfdouble::audit_free_sample_prob(&inst, &sol, &dec);
            let dump = serde_json::json!({
                "summary": dec.summary(),
                "structure": structure,
                "free_sample_audit": {
                    "max_prob": sample_audit.max_prob,
                    "bound": sample_audit.bound,
                    "pass": sample_audit.pass,
                },
                "easy_check": baseline::easy_check(&bundle, &sol, eps),
                "opt_sum": bundle.opt_sum,
                "lp_objective": sol.objective,
            });
            emit(out.as_ref(), &serde_json::to_string_pretty(&dump)?)?;
        }
        Command::Run { alg, input, lp, trials, seed, eps, eps_e, explain, dump_trace, out } => {
            if let RunAlg::OptimalDp = alg {
                let inst = Instance::load(&input)?;
                let value = driver::opt_online_dp(&inst)?;
                let dump = serde_json::json!({ "opt_online": value });
                emit(out.as_ref(), &serde_json::to_string_pretty(&dump)?)?;
                return Ok(());
            }
            let algorithm = match alg {
                RunAlg::Baseline => Algorithm::Baseline,
                RunAlg::Welarge => Algorithm::Welarge,
                RunAlg::Halfdouble => Algorithm::Halfdouble,
                RunAlg::Combined => Algorithm::Combined,
                RunAlg::OptimalDp => unreachable!(),
            };
            let inst = Instance::load(&input)?;
            if explain {
                let (tinst, sol) = load_tightened(&input, lp.as_ref())?;
                let bundle = baseline::build_bundle(&tinst, &sol)?;
                let thresholds: Vec<_> = bundle
                    .thresholds
                    .iter()
                    .enumerate()
                    .map(|(i, tau)| serde_json::json!({ "item": i + 1, "thresholds": tau }))
                    .collect();
                eprintln!("{}", serde_json::to_string_pretty(&thresholds)?);
            }
            if let Some(path) = dump_trace {
                let (tinst, sol) = load_tightened(&input, lp.as_ref())?;
                let bundle = baseline::build_bundle(&tinst, &sol)?;
                let dec = decomposition::compute(&tinst, &sol, &bundle, eps, eps_e)?;
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(driver::trial_seed(seed, 0));
                let run = halfdouble::run_halfdouble(&tinst, &sol, &dec, &mut rng)?;
                std::fs::write(&path, serde_json::to_string_pretty(&run)?)?;
                eprintln!("wrote first half-double trace to {path:?}");
            }
            let report = driver::monte_carlo(
                &inst,
                algorithm,
                McOptions { trials, master_seed: seed, eps, eps_e },
            )?;
            emit(out.as_ref(), &serde_json::to_string_pretty(&report)?)?;
        }
        Command::GapReport { deltas, csv, out } => {
            if deltas.is_empty() {
                bail!("--deltas needs at least one inverse delta");
            }
            let rows = driver::gap_report(&deltas)?;
            if csv {
                let mut text = String::from("inv_delta,delta,m,lp_value,opt_online,ratio\n");
                for r in &rows {
                    text.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        r.inv_delta, r.delta, r.m, r.lp_value, r.opt_online, r.ratio
                    ));
                }
                emit(out.as_ref(), &text)?;
            } else {
                emit(out.as_ref(), &serde_json::to_string_pretty(&rows)?)?;
            }
        }
    }
    Ok(())
}
