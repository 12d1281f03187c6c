use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use quilt_core::chain::{spectral, ChainModel, StateSequence};
use quilt_core::composition::{
    compose_auto, compose_parallel_general, compose_parallel_mqm_approx, compose_sequential_general,
    compose_sequential_legacy, compose_sequential_mqm, CompositionReport,
};
use quilt_core::influence::InfluenceMethod;
use quilt_core::io::{
    encode, fit_labeled, read_model, read_sequences, write_model, write_sequence, FitConfig, Ledger, QuerySpec,
};
use quilt_core::mechanism::{release, Framework, MechanismConfig, NodeScope, ReleaseRecord, SubchainWindow};
use quilt_core::oracle::{check_joint_remote_bound, verify_counterexample, VerificationCheck, VerificationReport};
use quilt_core::verify::{
    lemma1_dominance, mechanism_soundness, monotonicity_instance, random_ergodic_chain, sequential_soundness,
};

#[derive(Parser)]
#[command(name = "quilt", version, about = "Markov Quilt Mechanism releases and privacy accounting")]
struct Cli {
    /// Print machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a chain model to state sequences.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1)]
        min_sequences: usize,
        /// Comma-separated alphabet; defaults to the sorted labels seen.
        #[arg(long, value_delimiter = ',')]
        states: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stationary distribution, π_min and eigen-gap of a model.
    Gap {
        #[arg(long)]
        model: PathBuf,
    },
    /// Release a noisy query answer.
    Release(ReleaseArgs),
    /// Compose ledger entries into one guarantee.
    Compose {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ids: Vec<u64>,
        #[arg(long, value_enum, default_value_t = RuleArg::Auto)]
        rule: RuleArg,
        /// Max-divergence bound for thm5.
        #[arg(long = "E")]
        e: Option<f64>,
        /// Influence computation for thm2.
        #[arg(long, value_enum, default_value_t = VariantArg::Exact)]
        influence: VariantArg,
    },
    /// Exact verification runs.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Sample a sequence from a model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ReleaseArgs {
    /// One or more model files; together they form the belief set.
    #[arg(long, value_delimiter = ',', required = true)]
    model: Vec<PathBuf>,
    /// CSV with a `state` column covering the whole chain.
    #[arg(long)]
    data: PathBuf,
    /// `count:STATE` or `histogram`.
    #[arg(long)]
    query: QuerySpec,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, value_enum, default_value_t = VariantArg::Exact)]
    variant: VariantArg,
    /// Noise seed; drawn from the OS when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ledger: Option<PathBuf>,
    /// Release window `START:END`, 1-based inclusive.
    #[arg(long, value_parser = parse_window)]
    window: Option<SubchainWindow>,
    #[arg(long, value_enum, default_value_t = ScopeArg::Window)]
    scope: ScopeArg,
    /// Score only two-sided and empty quilts with the spectral bound.
    #[arg(long)]
    two_sided_only: bool,
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Reproduce the two-release counterexample.
    Counterexample,
    /// Check exact releases against the oracle.
    Soundness {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "T", default_value_t = 4)]
        horizon: usize,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        /// Number of additional random chains.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Spectral dominance, monotonicity and per-node bounds on random chains.
    Lemmas {
        #[arg(long, default_value_t = 100)]
        count: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Exact,
    Approx,
}

impl From<VariantArg> for InfluenceMethod {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Exact => InfluenceMethod::Exact,
            VariantArg::Approx => InfluenceMethod::Approx,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Window,
    WholeChain,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum RuleArg {
    Auto,
    Thm1,
    Thm2,
    Thm3,
    Thm5,
    Thm6,
}

fn parse_window(s: &str) -> Result<SubchainWindow, String> {
    let (a, b) = s.split_once(':').ok_or("expected START:END")?;
    let start = a.trim().parse::<usize>().map_err(|e| e.to_string())?;
    let end = b.trim().parse::<usize>().map_err(|e| e.to_string())?;
    if start < 1 || end < start {
        return Err("need 1 <= START <= END".into());
    }
    Ok(SubchainWindow::new(start, end))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn fit(data: PathBuf, alpha: f64, min_sequences: usize, states: Option<Vec<String>>, out: PathBuf, as_json: bool) -> Result<()> {
    let seqs = read_sequences(&data)?;
    let model = fit_labeled(&seqs, states, &FitConfig { alpha, min_sequences })?;
    write_model(&out, &model)?;
    if as_json {
        print_json(&model)?;
    } else {
        println!("fitted {} states from {} sequences -> {}", model.num_states(), seqs.len(), out.display());
    }
    Ok(())
}

fn gap(model: PathBuf, as_json: bool) -> Result<()> {
    let model = read_model(&model)?;
    let info = spectral(&model)?;
    if as_json {
        return print_json(&info);
    }
    for (label, p) in model.states().iter().zip(&info.stationary) {
        println!("pi[{label}] = {p}");
    }
    println!("pi_min = {}", info.pi_min);
    println!("gap = {}", info.gap);
    Ok(())
}

fn release_cmd(args: ReleaseArgs, as_json: bool) -> Result<()> {
    let models = args
        .model
        .iter()
        .map(|p| read_model(p).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<ChainModel>>>()?;
    let reference = models[0].clone();
    if models.iter().any(|m| m.states() != reference.states()) {
        bail!("models must share the same state labels in the same order");
    }
    let seqs = read_sequences(&args.data)?;
    let [labels] = seqs.as_slice() else {
        bail!("release data must hold exactly one sequence, found {}", seqs.len());
    };
    let full = encode(labels, &reference)?;
    let horizon = full.len();
    let window = args.window.unwrap_or(SubchainWindow::new(1, horizon));
    let fw = Framework::new(horizon, window, models)?;
    let data = StateSequence::new(full.values()[window.start - 1..window.end].to_vec(), fw.num_states())?;
    let mut config = MechanismConfig::new(args.variant.into());
    config.approx_one_sided = !args.two_sided_only;
    config.scope = match args.scope {
        ScopeArg::Window => NodeScope::Window,
        ScopeArg::WholeChain => NodeScope::WholeChain,
    };
    let seed = args.seed.unwrap_or_else(rand::random);
    let queries = args.query.resolve(&reference)?;
    let ledger = args.ledger.map(Ledger::new);

    let mut rows = Vec::new();
    let mut records: Vec<ReleaseRecord> = Vec::new();
    for (j, query) in queries.iter().enumerate() {
        let rec = release(&data, query, args.epsilon, &fw, &config, seed.wrapping_add(j as u64))?;
        let id = ledger.as_ref().map(|l| l.append(rec.clone())).transpose()?.map(|e| e.id);
        rows.push(json!({
            "id": id,
            "query": rec.query,
            "output": rec.unscaled_output(),
            "sigma_max": rec.sigma_max,
            "epsilon": rec.epsilon,
        }));
        records.push(rec);
    }
    let total = compose_sequential_mqm(&records)?;
    if as_json {
        return print_json(&json!({ "releases": rows, "composed_epsilon": total.epsilon, "rule": total.rule }));
    }
    for (row, rec) in rows.iter().zip(&records) {
        print!("{}: w = {} sigma_max = {}", rec.query, rec.unscaled_output(), rec.sigma_max);
        match row["id"].as_u64() {
            Some(id) => println!(" (ledger id {id})"),
            None => println!(),
        }
    }
    if records.len() > 1 {
        println!("total epsilon = {} ({})", total.epsilon, total.rule);
    }
    Ok(())
}

fn compose_cmd(ledger: PathBuf, ids: Vec<u64>, rule: RuleArg, e: Option<f64>, influence: VariantArg, as_json: bool) -> Result<()> {
    let entries = Ledger::new(ledger).get(&ids)?;
    let records: Vec<ReleaseRecord> = entries.into_iter().map(|e| e.record).collect();
    let pair = || -> Result<(&ReleaseRecord, &ReleaseRecord)> {
        match records.as_slice() {
            [a, b] => Ok((a, b)),
            _ => bail!("this rule composes exactly two records, got {}", records.len()),
        }
    };
    let report: CompositionReport = match rule {
        RuleArg::Auto => compose_auto(&records)?,
        RuleArg::Thm6 => compose_sequential_mqm(&records)?,
        RuleArg::Thm1 => compose_sequential_legacy(&records)?,
        RuleArg::Thm5 => {
            let (a, b) = pair()?;
            let Some(e) = e else { bail!("thm5 needs --E, a bound on the max-divergence between the releases") };
            compose_sequential_general(a.epsilon, b.epsilon, e)?
        }
        RuleArg::Thm2 => {
            let (a, b) = pair()?;
            compose_parallel_general(a, b, influence.into())?
        }
        RuleArg::Thm3 => {
            let (a, b) = pair()?;
            compose_parallel_mqm_approx(a, b)?
        }
    };
    let report = report.with_inputs(&ids);
    if as_json {
        print_json(&report)
    } else {
        print!("{report}");
        Ok(())
    }
}

fn print_report(report: &VerificationReport, as_json: bool) -> Result<()> {
    if as_json {
        return print_json(report);
    }
    for c in &report.checks {
        println!("[{}] {}: achieved {} bound {}", if c.pass { "pass" } else { "FAIL" }, c.name, c.achieved, c.bound);
    }
    let failed = report.checks.iter().filter(|c| !c.pass).count();
    println!("{} checks, {} failed", report.checks.len(), failed);
    Ok(())
}

fn verify(cmd: VerifyCommand, as_json: bool) -> Result<bool> {
    match cmd {
        VerifyCommand::Counterexample => {
            let r = verify_counterexample();
            if as_json {
                print_json(&json!({ "report": r, "checks": r.to_verification().checks, "verdict": r.verdict() }))?;
            } else {
                println!("{r}");
            }
            Ok(r.to_verification().all_pass())
        }
        VerifyCommand::Soundness { model, horizon, epsilon, seeds } => {
            let mut chains = Vec::new();
            let k = match model {
                Some(path) => {
                    let m = read_model(&path)?;
                    let k = m.num_states();
                    chains.push(m);
                    k
                }
                None => 2,
            };
            chains.extend((0..seeds).map(|s| random_ergodic_chain(k, s)));
            let mut report = VerificationReport::default();
            for m in &chains {
                report.checks.push(mechanism_soundness(m, horizon, epsilon)?);
                report.checks.push(sequential_soundness(m, horizon, epsilon, epsilon)?.check);
            }
            print_report(&report, as_json)?;
            Ok(report.all_pass())
        }
        VerifyCommand::Lemmas { count } => {
            let mut report = VerificationReport::default();
            for s in 0..count {
                let k = 2 + (s % 3) as usize;
                report.checks.push(lemma1_dominance(&random_ergodic_chain(k, s), ((s % 2) as usize, (s % 3) as usize))?);
            }
            for s in 0..2 * count {
                report.checks.push(monotonicity_instance(s)?);
            }
            let query = quilt_core::mechanism::count_state(0, 2)?;
            for s in 0..count.min(50) {
                let r = check_joint_remote_bound(&random_ergodic_chain(2, s), 3, &query, 1.0, 1.0)?;
                report.checks.push(VerificationCheck {
                    name: format!("per-node quilt bound, chain {s}"),
                    bound: r.epsilon,
                    achieved: r.worst,
                    witness: r.node.map(|n| format!("node {n}")),
                    pass: r.pass,
                });
            }
            print_report(&report, as_json)?;
            Ok(report.all_pass())
        }
    }
}

fn simulate(model: PathBuf, horizon: usize, seed: u64, out: PathBuf, as_json: bool) -> Result<()> {
    let model = read_model(&model)?;
    let seq = model.sample(horizon, seed)?;
    let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    write_sequence(BufWriter::new(file), &seq, &model)?;
    if as_json {
        print_json(&json!({ "out": out, "length": horizon, "seed": seed }))
    } else {
        println!("wrote {horizon} states to {}", out.display());
        Ok(())
    }
}

fn run(cli: Cli) -> Result<bool> {
    let as_json = cli.json;
    match cli.command {
        Command::Fit { data, alpha, min_sequences, states, out } => fit(data, alpha, min_sequences, states, out, as_json)?,
        Command::Gap { model } => gap(model, as_json)?,
        Command::Release(args) => release_cmd(args, as_json)?,
        Command::Compose { ledger, ids, rule, e, influence } => compose_cmd(ledger, ids, rule, e, influence, as_json)?,
        Command::Verify(cmd) => return verify(cmd, as_json),
        Command::Simulate { model, horizon, seed, out } => simulate(model, horizon, seed, out, as_json)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
