use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gridsched::broker::sort_and_group;
use gridsched::harness::{
    fmt_real, parse_range, run_single, sweep, write_results_csv, write_sweep_trace_csv, write_trace_csv, SummaryRow,
    SweepCell, SweepOptions,
};
use gridsched::model::{load_testbed, wwg_testbed, BrokerResourceView, Constraint, Experiment, Resource, Strategy};
use gridsched::workload::{total_mi, WorkloadFile, WorkloadSpec};

/// Deadline and budget constrained grid scheduling simulator.
#[derive(Parser, Debug)]
#[command(name = "gridsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment and print its summary.
    Run(RunArgs),
    /// Run a deadline x budget x strategy grid.
    Sweep(SweepArgs),
    /// Check input files and print the resource cost groups.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct Inputs {
    /// Testbed JSON; defaults to the built-in eleven-resource testbed.
    #[arg(long)]
    testbed: Option<PathBuf>,
    /// Workload JSON: a generator spec or an explicit gridlet list.
    #[arg(long, conflicts_with_all = ["count", "base_mi", "variation"])]
    workload: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    base_mi: Option<f64>,
    /// Maximum relative length variation, e.g. 0.1 for +0..10%.
    #[arg(long)]
    variation: Option<f64>,
    /// Workload seed; overrides any seed in the workload file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value = "cost-time")]
    strategy: Strategy,
    #[arg(long, conflicts_with = "d_factor", required_unless_present = "d_factor")]
    deadline: Option<f64>,
    /// Deadline as a fraction between fastest (0) and slowest (1) completion.
    #[arg(long)]
    d_factor: Option<f64>,
    #[arg(long, conflicts_with = "b_factor", required_unless_present = "b_factor")]
    budget: Option<f64>,
    /// Budget as a fraction between cheapest (0) and dearest (1) processing.
    #[arg(long)]
    b_factor: Option<f64>,
    #[arg(long)]
    scheduling_period: Option<f64>,
    /// Write a one-row results CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the per-scheduling-event trace CSV here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    inputs: Inputs,
    /// Deadline range `start:stop:step` (inclusive) or a single value.
    #[arg(long, default_value = "100:3600:500")]
    deadlines: String,
    #[arg(long, default_value = "5000:22000:1000")]
    budgets: String,
    #[arg(long, value_delimiter = ',', default_value = "cost,cost-time")]
    strategies: Vec<Strategy>,
    #[arg(long)]
    scheduling_period: Option<f64>,
    /// Results CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "GRIDSCHED_WORKERS", default_value_t = 0)]
    workers: usize,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    inputs: Inputs,
}

impl Inputs {
    fn testbed(&self) -> Result<Vec<Resource>> {
        match &self.testbed {
            Some(path) => load_testbed(path).with_context(|| format!("testbed {}", path.display())),
            None => Ok(wwg_testbed()),
        }
    }

    fn workload(&self) -> Result<WorkloadFile> {
        if let Some(path) = &self.workload {
            return WorkloadFile::load(path).with_context(|| format!("workload {}", path.display()));
        }
        let mut spec = WorkloadSpec::default();
        if let Some(n) = self.count {
            spec.count = n;
        }
        if let Some(mi) = self.base_mi {
            spec.base_mi = mi;
        }
        if let Some(v) = self.variation {
            spec.variation_max = v;
        }
        Ok(WorkloadFile::Spec(spec))
    }
}

fn constraint(absolute: Option<f64>, factor: Option<f64>) -> Constraint {
    match (absolute, factor) {
        (Some(v), _) => Constraint::Absolute(v),
        (None, Some(f)) => Constraint::Factor(f),
        // clap's required_unless_present rules this out
        (None, None) => unreachable!(),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn resource_ids(testbed: &[Resource]) -> Vec<String> {
    testbed.iter().map(|r| r.id.clone()).collect()
}

fn run(args: RunArgs) -> Result<()> {
    let testbed = args.inputs.testbed()?;
    let workload = args.inputs.workload()?.gridlets(args.inputs.seed)?;
    let mut exp = Experiment::new(workload.clone(), 0.0, 0.0, args.strategy);
    exp.deadline = constraint(args.deadline, args.d_factor);
    exp.budget = constraint(args.budget, args.b_factor);
    exp.seed = args.inputs.seed.unwrap_or(0);
    exp.scheduling_period = args.scheduling_period;

    let (row, trace) = run_single(&testbed, &workload, &exp)?;
    if let Some(path) = &args.out {
        let mut out = create(path)?;
        write_results_csv(&mut out, &resource_ids(&testbed), std::slice::from_ref(&row))?;
        out.flush()?;
    }
    if let Some(path) = &args.trace {
        let mut out = create(path)?;
        write_trace_csv(&mut out, &trace)?;
        out.flush()?;
    }
    println!(
        "completed={} makespan={} spent={}",
        row.completed,
        fmt_real(row.makespan),
        fmt_real(row.spent)
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let testbed = args.inputs.testbed()?;
    let spec = match args.inputs.workload()? {
        WorkloadFile::Spec(spec) => spec,
        WorkloadFile::Explicit { .. } => bail!("sweep needs a generated workload spec, not an explicit gridlet list"),
    };
    let seed = args.inputs.seed.unwrap_or(spec.seed);
    let deadlines = parse_range(&args.deadlines)?;
    let budgets = parse_range(&args.budgets)?;
    if args.strategies.is_empty() {
        bail!("--strategies is empty");
    }
    let opts = SweepOptions {
        workers: args.workers,
        collect_traces: args.trace.is_some(),
        scheduling_period: args.scheduling_period,
    };
    let cells = sweep(&testbed, &spec, &deadlines, &budgets, &args.strategies, seed, opts)?;
    let rows: Vec<SummaryRow> = cells.iter().map(|c: &SweepCell| c.row.clone()).collect();

    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            write_results_csv(&mut out, &resource_ids(&testbed), &rows)?;
            out.flush()?;
        }
        None => {
            let mut out = io::stdout().lock();
            write_results_csv(&mut out, &resource_ids(&testbed), &rows)?;
            out.flush()?;
        }
    }
    if let Some(path) = &args.trace {
        let mut out = create(path)?;
        write_sweep_trace_csv(&mut out, &cells)?;
        out.flush()?;
    }
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<()> {
    let testbed = args.inputs.testbed()?;
    let workload = args.inputs.workload()?.gridlets(args.inputs.seed)?;
    let views: Vec<BrokerResourceView> = testbed.into_iter().map(BrokerResourceView::new).collect();
    println!("testbed: {} resources", views.len());
    println!(
        "workload: {} gridlets, {} MI",
        workload.len(),
        fmt_real(total_mi(&workload))
    );
    for (i, group) in sort_and_group(&views, 0.0, true).iter().enumerate() {
        let ids: Vec<&str> = group.members.iter().map(|&m| views[m].id()).collect();
        println!(
            "group {}: {} cost_per_mi={}",
            i + 1,
            ids.join(","),
            fmt_real(group.cost_per_mi)
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Validate(args) => validate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
