//! Single experiments, deadline x budget sweeps, and their CSV outputs.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::broker::{self, ExperimentSummary};
pub use crate::broker::TraceRecord;
use crate::error::{Error, Result};
use crate::model::{Experiment, Gridlet, Resource, Strategy};
use crate::workload::{generate, WorkloadSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub strategy: Strategy,
    pub deadline: f64,
    pub budget: f64,
    pub completed: usize,
    pub failed: usize,
    pub makespan: f64,
    pub spent: f64,
    /// Completed count per resource, in testbed order.
    pub per_resource: Vec<(String, usize)>,
}

impl SummaryRow {
    pub fn completed_on(&self, resource: &str) -> usize {
        self.per_resource
            .iter()
            .find(|(id, _)| id == resource)
            .map_or(0, |&(_, n)| n)
    }
}

impl From<&ExperimentSummary> for SummaryRow {
    fn from(s: &ExperimentSummary) -> Self {
        SummaryRow {
            strategy: s.strategy,
            deadline: s.deadline,
            budget: s.budget,
            completed: s.completed,
            failed: s.failed,
            makespan: s.makespan,
            spent: s.spent,
            per_resource: s.per_resource.clone(),
        }
    }
}

pub fn run_single(testbed: &[Resource], workload: &[Gridlet], exp: &Experiment) -> Result<(SummaryRow, Vec<TraceRecord>)> {
    let exp = Experiment {
        workload: workload.to_vec(),
        ..exp.clone()
    };
    let summary = broker::run(&exp, testbed)?;
    Ok((SummaryRow::from(&summary), summary.trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepOptions {
    /// Worker threads; 0 picks the number of available cores.
    pub workers: usize,
    pub collect_traces: bool,
    pub scheduling_period: Option<f64>,
}


#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub row: SummaryRow,
    pub trace: Vec<TraceRecord>,
}

/// Run every `(strategy, deadline, budget)` cell against one workload
/// generated from `seed`. Rows come back in nested axis order regardless of
/// how many workers computed them.
pub fn sweep(
    testbed: &[Resource],
    workload_spec: &WorkloadSpec,
    deadlines: &[f64],
    budgets: &[f64],
    strategies: &[Strategy],
    seed: u64,
    opts: SweepOptions,
) -> Result<Vec<SweepCell>> {
    if deadlines.is_empty() || budgets.is_empty() || strategies.is_empty() {
        return Err(Error::InvalidExperiment("sweep axes must be non-empty".into()));
    }
    let workload = generate(&WorkloadSpec {
        seed,
        ..workload_spec.clone()
    })?;

    let mut cells = Vec::with_capacity(strategies.len() * deadlines.len() * budgets.len());
    for &s in strategies {
        for &d in deadlines {
            for &b in budgets {
                cells.push((s, d, b));
            }
        }
    }

    let run_cell = |&(strategy, deadline, budget): &(Strategy, f64, f64)| -> Result<SweepCell> {
        let mut exp = Experiment::new(workload.clone(), deadline, budget, strategy);
        exp.seed = seed;
        exp.scheduling_period = opts.scheduling_period;
        let summary = broker::run(&exp, testbed)?;
        Ok(SweepCell {
            row: SummaryRow::from(&summary),
            trace: if opts.collect_traces { summary.trace } else { Vec::new() },
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidExperiment(format!("cannot start worker pool: {e}")))?;
    pool.install(|| cells.par_iter().map(run_cell).collect())
}

/// Format a real with 6 significant digits the way C's `%g` does.
pub fn fmt_real(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    const PRECISION: i32 = 6;
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const RESULTS_HEADER: &str = "strategy,deadline,budget,completed,failed,makespan,spent";
pub const TRACE_HEADER: &str = "time,resource,assigned,completed,measured_rate";

/// `results.csv`: one line per row, per-resource completed counts appended in
/// testbed order.
pub fn write_results_csv<W: Write>(mut out: W, resource_ids: &[String], rows: &[SummaryRow]) -> io::Result<()> {
    write!(out, "{RESULTS_HEADER}")?;
    for id in resource_ids {
        write!(out, ",{id}")?;
    }
    writeln!(out)?;
    for row in rows {
        write!(
            out,
            "{},{},{},{},{},{},{}",
            row.strategy,
            fmt_real(row.deadline),
            fmt_real(row.budget),
            row.completed,
            row.failed,
            fmt_real(row.makespan),
            fmt_real(row.spent)
        )?;
        for id in resource_ids {
            write!(out, ",{}", row.completed_on(id))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn write_trace_line<W: Write>(out: &mut W, r: &TraceRecord) -> io::Result<()> {
    writeln!(
        out,
        "{},{},{},{},{}",
        fmt_real(r.time),
        r.resource,
        r.assigned,
        r.completed,
        fmt_real(r.measured_rate)
    )
}

pub fn write_trace_csv<W: Write>(mut out: W, trace: &[TraceRecord]) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in trace {
        write_trace_line(&mut out, r)?;
    }
    Ok(())
}

/// Sweep traces carry the cell's coordinates in front of the usual columns.
pub fn write_sweep_trace_csv<W: Write>(mut out: W, cells: &[SweepCell]) -> io::Result<()> {
    writeln!(out, "strategy,deadline,budget,{TRACE_HEADER}")?;
    for cell in cells {
        for r in &cell.trace {
            write!(
                out,
                "{},{},{},",
                cell.row.strategy,
                fmt_real(cell.row.deadline),
                fmt_real(cell.row.budget)
            )?;
            write_trace_line(&mut out, r)?;
        }
    }
    Ok(())
}

/// Inclusive `start:stop:step` range; `stop` is included when reachable.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidExperiment(format!("bad range {spec:?}, expected start:stop:step"));
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [single] => Ok(vec![single.trim().parse().map_err(|_| bad())?]),
        [start, stop, step] => {
            let start: f64 = start.trim().parse().map_err(|_| bad())?;
            let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
            let step: f64 = step.trim().parse().map_err(|_| bad())?;
            if !(step > 0.0 && step.is_finite() && start.is_finite() && stop.is_finite()) || stop < start {
                return Err(bad());
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| start + k as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}
