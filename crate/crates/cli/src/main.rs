//! `karma`: run allocation policies over demand traces, compare them,
//! generate traces and check the allocator's guarantees by brute force.
//!
//! Exit status: 0 success, 1 internal error or failed property, 2 bad
//! usage or input, 3 search budget exceeded.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use karma_core::baselines::Policy;
use karma_core::oracle::{run_suites, OracleError, Suite, VerifyOptions};
use karma_core::sim::{self, Strategy};
use karma_core::traces::{self, DemandTrace, DemandUnits, FileConfig};
use karma_core::{parse_rational, ExactConfig, Rational};

#[derive(Parser)]
#[command(
    name = "karma",
    version,
    about = "Credit-based slice allocation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trace through one policy and print a JSON report.
    Run(RunArgs),
    /// Metrics of several policies (and alpha values) as CSV.
    Compare(CompareArgs),
    /// Write a synthetic bursty trace.
    GenTrace(GenTraceArgs),
    /// Write one of the built-in instances as a trace.
    Example(ExampleArgs),
    /// Run the brute-force property suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Source {
    /// Trace CSV with header `quantum,user,demand`.
    #[arg(long, conflicts_with = "example", required_unless_present = "example")]
    trace: Option<PathBuf>,
    /// Built-in instance, e.g. fig4 or table1.
    #[arg(long)]
    example: Option<String>,
    /// Size of parametric instances.
    #[arg(long)]
    n: Option<usize>,
    /// Config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Demand column is in bytes; quantize with the configured slice size.
    #[arg(long)]
    bytes: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "karma")]
    policy: String,
    /// Override the configured alpha.
    #[arg(long)]
    alpha: Option<String>,
    /// Users reporting max(demand, fair share), comma separated.
    #[arg(long, value_delimiter = ',')]
    nonconformant: Vec<String>,
    /// Fixed reports for one user, `USER=r0,r1,...`. Repeatable.
    #[arg(long)]
    script: Vec<String>,
    /// Report destination; standard output if omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write `quantum,user,reported,true,alloc,useful,credits` rows here.
    #[arg(long)]
    per_quantum: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    source: Source,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "karma,maxmin,maxmin-static,strict"
    )]
    policies: Vec<String>,
    /// One row group per alpha value.
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<String>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenTraceArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 900)]
    t: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 10.0)]
    mean: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0.5)]
    cv_min: f64,
    #[arg(long, default_value_t = 12.0)]
    cv_max: f64,
    #[arg(long, default_value_t = 2.5)]
    tail_shape: f64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExampleArgs {
    /// One of fig3, fig4, fig6-gain, fig6-loss, maxmin-worstcase, table1, table2.
    name: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    differential: bool,
    #[arg(long)]
    pareto: bool,
    #[arg(long)]
    theorem5: bool,
    #[arg(long)]
    lemma1: bool,
    #[arg(long)]
    lemma2: bool,
    #[arg(long)]
    collusion: bool,
    #[arg(long)]
    worstcase: bool,
    /// Largest exhaustive search allowed.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Use a tenth of the default instance counts.
    #[arg(long)]
    quick: bool,
    /// Write the JSON verdict report here.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

/// An error together with the exit status it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CliResult<T> = Result<T, Failure>;

trait Classify<T> {
    fn input(self) -> CliResult<T>;
    fn internal(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn input(self) -> CliResult<T> {
        self.map_err(|e| Failure {
            code: 2,
            error: e.into(),
        })
    }

    fn internal(self) -> CliResult<T> {
        self.map_err(|e| Failure {
            code: 1,
            error: e.into(),
        })
    }
}

fn input_error(msg: String) -> Failure {
    Failure {
        code: 2,
        error: anyhow!(msg),
    }
}

fn open_input(path: &Path) -> CliResult<File> {
    if !path.exists() {
        return Err(input_error(format!("{}: no such file", path.display())));
    }
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .input()
}

fn output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            let file = File::create(p)
                .with_context(|| format!("creating {}", p.display()))
                .input()?;
            Box::new(BufWriter::new(file))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn load(source: &Source) -> CliResult<(DemandTrace, ExactConfig)> {
    let file_config = match &source.config {
        Some(path) => {
            let text = io::read_to_string(open_input(path)?).input()?;
            Some(
                traces::parse_config(&text)
                    .with_context(|| path.display().to_string())
                    .input()?,
            )
        }
        None => None,
    };
    let slice_mb = file_config.as_ref().map_or(128, |c| c.slice_mb);
    let (trace, example_config) = match (&source.trace, &source.example) {
        (Some(path), _) => {
            let units = if source.bytes {
                DemandUnits::Bytes { slice_mb }
            } else {
                DemandUnits::Slices
            };
            let reader = io::BufReader::new(open_input(path)?);
            let trace = traces::load_trace_with(reader, units)
                .with_context(|| path.display().to_string())
                .input()?;
            (trace, None)
        }
        (None, Some(name)) => {
            let ex = traces::gen_example(name, source.n).input()?;
            (ex.trace, Some(ex.config))
        }
        (None, None) => return Err(input_error("give --trace or --example".into())),
    };
    let config = match (file_config, example_config) {
        (Some(fc), _) => fc.to_config(trace.users()).input()?,
        (None, Some(c)) => c,
        (None, None) => FileConfig::default().to_config(trace.users()).input()?,
    };
    Ok((trace, config))
}

fn alpha_arg(text: &str) -> CliResult<Rational> {
    parse_rational(text).input()
}

fn strategies(args: &RunArgs, trace: &DemandTrace) -> CliResult<Vec<Strategy>> {
    let mut out = sim::all_truthful(trace.n_users());
    let index = |name: &str| {
        trace
            .user_index(name)
            .ok_or_else(|| input_error(format!("unknown user {name:?}")))
    };
    for name in args.nonconformant.iter().filter(|s| !s.is_empty()) {
        out[index(name)?] = Strategy::Nonconformant;
    }
    for spec in &args.script {
        let (name, list) = spec
            .split_once('=')
            .ok_or_else(|| input_error(format!("--script expects USER=r0,r1,..., got {spec:?}")))?;
        let reports = list
            .split(',')
            .map(|r| r.trim().parse::<u64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("--script {spec}"))
            .input()?;
        out[index(name)?] = Strategy::Scripted(reports);
    }
    Ok(out)
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let (trace, mut config) = load(&args.source)?;
    if let Some(a) = &args.alpha {
        config = config.with_alpha(alpha_arg(a)?);
    }
    let policy: Policy = args.policy.parse().input()?;
    let strategies = strategies(&args, &trace)?;
    let report = sim::run(&trace, policy, &config, &strategies).input()?;
    let mut out = output(args.out.as_deref())?;
    serde_json::to_writer_pretty(&mut out, &report.to_json()).internal()?;
    writeln!(out).internal()?;
    out.flush().internal()?;
    if let Some(path) = &args.per_quantum {
        let file = File::create(path)
            .with_context(|| format!("creating {}", path.display()))
            .input()?;
        report.write_quanta_csv(BufWriter::new(file)).internal()?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let (trace, config) = load(&args.source)?;
    let policies: Vec<Policy> = args
        .policies
        .iter()
        .map(|p| p.parse())
        .collect::<Result<_, _>>()
        .input()?;
    let alphas: Vec<Rational> = if args.alpha.is_empty() {
        vec![*config.alpha()]
    } else {
        args.alpha
            .iter()
            .map(|a| alpha_arg(a))
            .collect::<CliResult<_>>()?
    };
    let mut out = output(args.out.as_deref())?;
    writeln!(
        out,
        "policy,alpha,utilization,fairness,allocation_disparity,min_welfare,max_welfare"
    )
    .internal()?;
    for alpha in alphas {
        let config = config.clone().with_alpha(alpha);
        config.validate().input()?;
        for (policy, m) in sim::compare(&trace, &policies, &config).input()? {
            let disparity = m
                .allocation_disparity
                .map_or(String::new(), |d| d.to_string());
            writeln!(
                out,
                "{policy},{alpha},{},{},{disparity},{},{}",
                m.utilization, m.fairness, m.min_welfare, m.max_welfare
            )
            .internal()?;
        }
    }
    out.flush().internal()
}

fn cmd_gen_trace(args: GenTraceArgs) -> CliResult<()> {
    let params = traces::BurstParams {
        mean_demand: args.mean,
        amplitude: args.amplitude,
        cv_min: args.cv_min,
        cv_max: args.cv_max,
        tail_shape: args.tail_shape,
    };
    let trace = traces::gen_synthetic(args.n, args.t, &params, args.seed).input()?;
    trace.save(output(args.out.as_deref())?).internal()
}

fn cmd_example(args: ExampleArgs) -> CliResult<()> {
    let ex = traces::gen_example(&args.name, args.n).input()?;
    ex.trace.save(output(args.out.as_deref())?).internal()
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let picked: Vec<Suite> = [
        (args.differential, Suite::Differential),
        (args.pareto, Suite::Pareto),
        (args.theorem5, Suite::Theorem5),
        (args.lemma1, Suite::Lemma1),
        (args.lemma2, Suite::Lemma2),
        (args.collusion, Suite::Collusion),
        (args.worstcase, Suite::MaxminWorstcase),
    ]
    .into_iter()
    .filter_map(|(on, s)| on.then_some(s))
    .collect();
    let mut opts = VerifyOptions {
        seed: args.seed,
        budget: args.budget,
        suites: if picked.is_empty() {
            Suite::ALL.to_vec()
        } else {
            picked
        },
        ..VerifyOptions::default()
    };
    if args.quick {
        opts.differential_instances /= 10;
        opts.pareto_runs /= 10;
        opts.theorem5_quanta /= 10;
        opts.lemma_instances /= 10;
        opts.weighted_lemma_instances /= 10;
        opts.collusion_instances /= 10;
    }
    let report = match run_suites(&opts) {
        Ok(r) => r,
        Err(e @ OracleError::BudgetExceeded { .. }) => {
            return Err(Failure {
                code: 3,
                error: e.into(),
            })
        }
        Err(e) => {
            return Err(Failure {
                code: 1,
                error: e.into(),
            })
        }
    };
    let mut stdout = io::stdout().lock();
    for v in &report.verdicts {
        let mark = if v.passed { "PASS" } else { "FAIL" };
        writeln!(stdout, "{mark} {}: {} ({})", v.suite, v.property, v.detail).internal()?;
        if let Some(cx) = &v.counterexample {
            writeln!(stdout, "  counterexample: {cx}").internal()?;
        }
    }
    if let Some(path) = &args.out {
        let mut out = output(Some(path))?;
        serde_json::to_writer_pretty(&mut out, &report).internal()?;
        writeln!(out).internal()?;
        out.flush().internal()?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: 1,
            error: anyhow!("property check failed"),
        })
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
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::GenTrace(a) => cmd_gen_trace(a),
        Command::Example(a) => cmd_example(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("karma: {error:#}");
            ExitCode::from(code)
        }
    }
}
