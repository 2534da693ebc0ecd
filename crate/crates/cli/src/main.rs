//! `chainrace` command-line interface.

mod config;

use std::fmt::Write as _;
use std::io::Write as _;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use chainrace::analytic::{e_pmf, lead_joint_pmf, transition_matrix, Height1Engine, TargetEngine, WindowTable};
use chainrace::format::fmt_sig;
use chainrace::mdp::{
    extract_optimal_actions, policy_value_zero_delay, prescribed_action, value_iteration_zero_delay, ActionStatus,
    Caps, Decision,
};
use chainrace::model::Arrival;
use chainrace::montecarlo::{
    simulate_target_detail, simulate_violation, tree_vs_compact_check, EstimateWithCI, RunConfig,
};
use chainrace::policy::{DecisionTable, PolicyId};
use chainrace::tradeoff::{tradeoff, TargetMode};
use chainrace::ProtocolParams;
use clap::{Parser, Subcommand};
use serde_json::json;

use config::{CommonArgs, Format, Settings};

/// Significant digits of every number written to CSV.
const CSV_DIGITS: usize = 17;

#[derive(Debug, Parser)]
#[command(
    name = "chainrace",
    version,
    about = "Safety-violation probabilities of longest-chain consensus under the bait-and-switch attack"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Violation probability for k = 1..=k-max.
    Tradeoff,
    /// Monte Carlo estimate of the violation probability (JSON).
    Simulate {
        /// Policy name or a decision-table CSV path.
        #[arg(long)]
        policy: Option<String>,
        /// Deficit at which a run counts as safe (default k + 60).
        #[arg(long)]
        cutoff: Option<String>,
        /// Warm-up jumper cycles for a general target.
        #[arg(long)]
        warmup: Option<String>,
    },
    /// Zero-delay value iteration and optimality check of the placement rules.
    VerifyMdp {
        /// Also list the argmax set of every state.
        #[arg(long)]
        all_states: bool,
    },
    /// Dump a pmf as CSV: race (e), window (P(W|L=l)) or lead (f3, f4).
    Pmf {
        #[arg(long)]
        kind: Option<String>,
        #[arg(long = "max-i")]
        max_i: Option<String>,
        /// Lead for the window pmf.
        #[arg(long)]
        l: Option<String>,
    },
    /// Dump the epoch transition matrices P^(1..=k) with row sums.
    Matrices,
    /// Run the oracle-agreement suite for one parameter set.
    Check,
}

/// Failure carrying a specific exit status.
#[derive(Debug)]
struct Exit {
    code: u8,
    message: String,
}

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<Exit>() {
        return e.code;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<chainrace::Error>() {
            return match e {
                chainrace::Error::OutOfTolerance { .. } => 3,
                chainrace::Error::Numerical(_) | chainrace::Error::Inadmissible { .. } => 4,
                chainrace::Error::Verification(_) => 5,
                chainrace::Error::InvalidParameter(_) | chainrace::Error::Parse(_) => 2,
            };
        }
    }
    2
}

fn emit(settings: &Settings, text: &str) -> Result<()> {
    match &settings.output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn csv_row(cells: impl IntoIterator<Item = String>) -> String {
    let mut row = cells.into_iter().collect::<Vec<_>>().join(",");
    row.push('\n');
    row
}

fn short(x: f64) -> String {
    fmt_sig(x, 6)
}

fn num(x: f64) -> String {
    fmt_sig(x, CSV_DIGITS)
}

fn cmd_tradeoff(settings: &Settings) -> Result<String> {
    let k_max = settings.depth_max(12)?;
    let params = settings.params(k_max)?;
    let mode = settings.target()?;
    let rows = tradeoff(&params, k_max, mode)?;
    if settings.format(Format::Csv)? == Format::Json {
        return Ok(serde_json::to_string_pretty(&rows)? + "\n");
    }
    let general = mode == TargetMode::General;
    let mut out = if general {
        "k,probability,e_tail_bound,lead_truncation\n".to_string()
    } else {
        "k,probability,e_tail_bound\n".to_string()
    };
    for row in rows {
        let mut cells = vec![row.k.to_string(), num(row.probability), num(row.e_tail_bound)];
        if let Some(l) = row.lead_truncation {
            cells.push(l.to_string());
        }
        out.push_str(&csv_row(cells));
    }
    Ok(out)
}

fn resolve_policy(name: &str) -> Result<PolicyId> {
    if name.ends_with(".csv") {
        let table = DecisionTable::load(std::path::Path::new(name))?;
        return Ok(PolicyId::Custom(Arc::new(table)));
    }
    PolicyId::from_name(name).map_err(|_| {
        chainrace::Error::InvalidParameter(format!(
            "unknown policy {name:?}; expected a .csv table or one of {}",
            PolicyId::names().join(", ")
        ))
        .into()
    })
}

fn seed_or_clock(settings: &Settings) -> Result<u64> {
    match settings.number::<u64>("seed")? {
        Some(s) => Ok(s),
        None => Ok(SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0)),
    }
}

fn estimate_json(est: &EstimateWithCI) -> serde_json::Value {
    json!({
        "estimate": est.estimate,
        "stderr": est.stderr,
        "runs": est.runs,
        "seed": est.seed,
        "bias_bound": est.bias_bound,
    })
}

fn cmd_simulate(settings: &Settings) -> Result<String> {
    let k = settings.depth(3)?;
    let params = settings.params(k)?;
    let mode = settings.target()?;
    let default_policy = match mode {
        TargetMode::Height1 => "bait-and-switch",
        TargetMode::General => "target-bait-and-switch",
    };
    let policy = resolve_policy(settings.get("policy").unwrap_or(default_policy))?;
    let runs = settings.number::<u64>("runs")?.unwrap_or(100_000);
    let seed = seed_or_clock(settings)?;
    let mut cfg = RunConfig::new(params, policy.clone(), runs, seed);
    if let Some(c) = settings.number::<u32>("cutoff")? {
        cfg.cutoff = c;
    }
    if let Some(w) = settings.number::<u32>("warmup")? {
        cfg.warmup = w;
    }
    let mut value = match mode {
        TargetMode::Height1 => estimate_json(&simulate_violation(&cfg)?),
        TargetMode::General => {
            let detail = simulate_target_detail(&cfg)?;
            let mut v = estimate_json(&detail.violation);
            v["jumper_fraction"] = json!(detail.jumper.estimate);
            v["warmup"] = json!(cfg.warmup);
            v
        }
    };
    value["policy"] = json!(policy.to_string());
    value["params"] = serde_json::to_value(params)?;
    value["target"] = json!(match mode {
        TargetMode::Height1 => "height1",
        TargetMode::General => "general",
    });
    value["cutoff"] = json!(cfg.cutoff);
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

fn zero_delay_params(settings: &Settings, k: u32) -> Result<ProtocolParams> {
    if settings.get("delta").is_none() && settings.get("preset").is_none() {
        let mut with_delta = settings.clone();
        with_delta.set_default("delta", "0");
        return with_delta.params(k);
    }
    let params = settings.params(k)?;
    if params.delta != 0.0 {
        return Err(Exit {
            code: 2,
            message: format!("verify-mdp needs --delta 0, got {}", params.delta),
        }
        .into());
    }
    Ok(params)
}

fn state_class(d: &Decision) -> &'static str {
    let s = d.state;
    if s.d < s.m {
        "d<m"
    } else if s.d > s.m {
        "d>m"
    } else if s.m < s.n {
        "d=m<n"
    } else {
        "d=m=n"
    }
}

fn prescription_label(class: &str, arrival: Arrival) -> &'static str {
    match (arrival, class) {
        (Arrival::H, "d=m<n") => "lower@m+1",
        (Arrival::H, _) => "higher@d+1",
        (Arrival::A, "d>m") => "lower@m+1",
        (Arrival::A, _) => "higher@n+1",
    }
}

fn cmd_verify_mdp(settings: &Settings, all_states: bool) -> Result<(String, bool)> {
    let k = settings.depth(3)?;
    let params = zero_delay_params(settings, k)?;
    let tol = settings.tol(1e-10)?;
    let caps = Caps::for_params(&params, tol);
    let table = value_iteration_zero_delay(&params, caps, tol)?;
    let policy = policy_value_zero_delay(&params, &PolicyId::BaitAndSwitch, caps, tol)?;
    let decisions = extract_optimal_actions(&table, tol * 10.0);
    let genesis = table.genesis();
    let mut out = String::new();
    writeln!(
        out,
        "k = {k}, beta = {}, caps n_max = {}, d_max = {}",
        params.beta(),
        caps.n_max,
        caps.d_max
    )?;
    writeln!(out, "genesis value bracket: {genesis} (width {:.1e})", genesis.width())?;
    writeln!(out, "bait-and-switch value bracket: {policy}")?;
    writeln!(
        out,
        "{:<8} {:<8} {:>7} {:<12} {:>9} {:>12} {:>7}",
        "class", "arrival", "states", "prescribed", "optimal", "undecidable", "failed"
    )?;
    let mut all_ok = policy.overlaps(&genesis, 0.0);
    for class in ["d<m", "d=m<n", "d=m=n", "d>m"] {
        for arrival in [Arrival::A, Arrival::H] {
            let group: Vec<&Decision> = decisions
                .iter()
                .filter(|d| d.arrival == arrival && state_class(d) == class)
                .collect();
            if group.is_empty() {
                continue;
            }
            let mut optimal = 0;
            let mut undecidable = 0;
            let mut failed = 0;
            for d in &group {
                match d.status(prescribed_action(d.state, d.arrival)) {
                    Some(ActionStatus::Optimal) => optimal += 1,
                    Some(ActionStatus::Undecidable) => undecidable += 1,
                    _ => failed += 1,
                }
            }
            all_ok &= undecidable == 0 && failed == 0;
            writeln!(
                out,
                "{:<8} {:<8} {:>7} {:<12} {:>9} {:>12} {:>7}",
                class,
                arrival.to_string(),
                group.len(),
                prescription_label(class, arrival),
                optimal,
                undecidable,
                failed
            )?;
        }
    }
    if all_states {
        for d in &decisions {
            let argmax: Vec<String> = d.argmax().iter().map(|a| a.to_string()).collect();
            writeln!(out, "{} {}: {{{}}}", d.node, d.arrival, argmax.join(", "))?;
        }
    }
    writeln!(out, "{}", if all_ok { "verified" } else { "NOT verified" })?;
    Ok((out, all_ok))
}

fn cmd_pmf(settings: &Settings) -> Result<String> {
    let params = settings.params(1)?;
    let max_i = settings.number::<usize>("max-i")?.unwrap_or(50);
    let mut out = String::new();
    match settings.get("kind").unwrap_or("race") {
        "race" => {
            let e = e_pmf(&params, max_i)?;
            out.push_str("i,e\n");
            for (i, x) in e.coeffs().iter().enumerate() {
                out.push_str(&csv_row([i.to_string(), num(*x)]));
            }
        }
        "window" => {
            let l = settings.number::<i64>("l")?.unwrap_or(0);
            let table = WindowTable::new(&params, max_i, l.max(0) as usize);
            out.push_str("w,p\n");
            for w in 0..=max_i {
                out.push_str(&csv_row([w.to_string(), num(table.p(w, l))]));
            }
        }
        "lead" => {
            let joint = lead_joint_pmf(&params, max_i)?;
            out.push_str("n,f3,f4\n");
            for n in 0..=max_i {
                out.push_str(&csv_row([n.to_string(), num(joint.f3(n)), num(joint.f4(n))]));
            }
        }
        other => bail!("unknown pmf kind {other:?}; expected race, window or lead"),
    }
    Ok(out)
}

fn cmd_matrices(settings: &Settings) -> Result<String> {
    let k = settings.depth(3)?;
    let params = settings.params(k)?;
    let mut out = String::from("j,y");
    for y in 0..=k {
        write!(out, ",p{y}")?;
    }
    out.push_str(",row_sum\n");
    for j in 1..=k {
        let m = transition_matrix(&params, j)?;
        for (y, sum) in m.row_sums().iter().enumerate() {
            let mut cells = vec![j.to_string(), y.to_string()];
            cells.extend(m.row(y).iter().map(|x| num(*x)));
            cells.push(num(*sum));
            out.push_str(&csv_row(cells));
        }
    }
    Ok(out)
}

fn cmd_check(settings: &Settings) -> Result<(String, bool)> {
    let k = settings.depth(3)?;
    let params = settings.params(k)?;
    params.require_tolerance()?;
    let runs = settings.number::<u64>("runs")?.unwrap_or(200_000);
    let seed = settings.number::<u64>("seed")?.unwrap_or(1);
    let mut out = String::new();
    let mut all = true;
    let mut line = |name: &str, ok: bool, detail: String| {
        all &= ok;
        let _ = writeln!(out, "{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    };

    let sum = e_pmf(&params, 400)?.sum();
    line(
        "race pmf sums to 1",
        (1.0 - 1e-9..=1.0 + 1e-15).contains(&sum),
        format!("sum = {}", short(sum)),
    );

    let table = WindowTable::new(&params, 200, 10);
    let worst = (-5..=10)
        .map(|l| ((0..=200).map(|w| table.p(w, l)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    line(
        "window pmf sums to 1",
        worst <= 1e-9,
        format!("max |sum - 1| = {worst:.1e}"),
    );

    let exact = Height1Engine::new(&params, k)?.probability(k)?;
    let bs = simulate_violation(&RunConfig::new(params, PolicyId::BaitAndSwitch, runs, seed))?;
    line(
        "height-1 analytic vs simulation",
        bs.agrees_with(exact, 3.0),
        format!("{} vs {} +- {}", short(exact), short(bs.estimate), short(bs.stderr)),
    );

    let pm = simulate_violation(&RunConfig::new(params, PolicyId::PrivateMining, runs, seed))?;
    let se = (bs.stderr.powi(2) + pm.stderr.powi(2)).sqrt();
    line(
        "bait-and-switch dominates private mining",
        bs.estimate >= pm.estimate - 3.0 * se,
        format!("{} vs {}", short(bs.estimate), short(pm.estimate)),
    );

    let target = TargetEngine::new(&params, k)?.probability(k)?;
    let est = simulate_target_detail(&RunConfig::new(params, PolicyId::TargetBaitAndSwitch, runs, seed))?.violation;
    line(
        "general target analytic vs simulation",
        est.agrees_with(target, 3.0),
        format!("{} vs {} +- {}", short(target), short(est.estimate), short(est.stderr)),
    );

    let tree = tree_vs_compact_check(&params, &PolicyId::BaitAndSwitch, 1_000, 200, seed)?;
    line(
        "block tree vs compact state",
        tree.passed(),
        format!("{} divergences in 1000 streams", tree.divergences),
    );

    let dp_k = k.min(5);
    let dp_params = ProtocolParams::new(params.a, params.h, 0.0, dp_k)?;
    let tol = 1e-10;
    let caps = Caps::for_params(&dp_params, tol);
    let dp = value_iteration_zero_delay(&dp_params, caps, tol)?;
    let g = dp.genesis();
    let analytic0 = Height1Engine::new(&dp_params, dp_k)?.probability(dp_k)?;
    let report = chainrace::mdp::verify_prescriptions(&extract_optimal_actions(&dp, 1e-9));
    line(
        "zero-delay DP certificate",
        report.passed() && g.contains(analytic0, 1e-7),
        format!(
            "k = {dp_k}: bracket {g}, analytic {}, {} prescriptions",
            short(analytic0),
            report.checked
        ),
    );
    Ok((out, all))
}

fn run(cli: Cli) -> Result<()> {
    let extra: Vec<(&'static str, Option<String>)> = match &cli.command {
        Command::Simulate { policy, cutoff, warmup } => vec![
            ("policy", policy.clone()),
            ("cutoff", cutoff.clone()),
            ("warmup", warmup.clone()),
        ],
        Command::Pmf { kind, max_i, l } => vec![("kind", kind.clone()), ("max-i", max_i.clone()), ("l", l.clone())],
        _ => Vec::new(),
    };
    let settings = Settings::new(&cli.common, &extra)?;
    match cli.command {
        Command::Tradeoff => emit(&settings, &cmd_tradeoff(&settings)?),
        Command::Simulate { .. } => emit(&settings, &cmd_simulate(&settings)?),
        Command::VerifyMdp { all_states } => {
            let (report, ok) = cmd_verify_mdp(&settings, all_states)?;
            emit(&settings, &report)?;
            if !ok {
                return Err(Exit {
                    code: 5,
                    message: "a placement prescription is not in the computed argmax set".into(),
                }
                .into());
            }
            Ok(())
        }
        Command::Pmf { .. } => emit(&settings, &cmd_pmf(&settings)?),
        Command::Matrices => emit(&settings, &cmd_matrices(&settings)?),
        Command::Check => {
            let (report, ok) = cmd_check(&settings)?;
            emit(&settings, &report)?;
            if !ok {
                return Err(Exit {
                    code: 5,
                    message: "oracle agreement check failed".into(),
                }
                .into());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
