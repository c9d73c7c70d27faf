use crate::error::{Error, Result};
use crate::model::{peak_rate, validate_testbed, BrokerResourceView, Constraint, Experiment, Gridlet, Resource};
use crate::workload::total_mi;

/// Discovery and trading: one zeroed ledger per testbed resource, priced in G$/MI.
pub fn discover_and_trade(testbed: &[Resource]) -> Result<Vec<BrokerResourceView>> {
    validate_testbed(testbed)?;
    Ok(testbed.iter().cloned().map(BrokerResourceView::new).collect())
}

/// Turn the experiment's deadline and budget into absolute values.
///
/// Factors interpolate linearly between the fastest possible finish (every
/// resource busy) and the slowest single resource, and between running the
/// whole workload on the cheapest and on the dearest resource.
pub fn resolve_constraints(exp: &Experiment, views: &[BrokerResourceView], workload: &[Gridlet]) -> Result<(f64, f64)> {
    if views.is_empty() {
        return Err(Error::EmptyTestbed);
    }
    if workload.is_empty() {
        return Err(Error::InvalidExperiment("workload is empty".into()));
    }
    let total = total_mi(workload);

    let deadline = match exp.deadline {
        Constraint::Absolute(d) => d,
        Constraint::Factor(f) => {
            check_factor("deadline", f)?;
            let rates = views.iter().map(|v| peak_rate(&v.resource, 0.0));
            let aggregate: f64 = rates.clone().sum();
            let slowest = rates.fold(f64::INFINITY, f64::min);
            let t_min = total / aggregate;
            let t_max = total / slowest;
            t_min + f * (t_max - t_min)
        }
    };

    let budget = match exp.budget {
        Constraint::Absolute(b) => b,
        Constraint::Factor(f) => {
            check_factor("budget", f)?;
            let cheapest = views.iter().map(|v| v.cost_per_mi).fold(f64::INFINITY, f64::min);
            let dearest = views.iter().map(|v| v.cost_per_mi).fold(0.0, f64::max);
            let c_min = total * cheapest;
            let c_max = total * dearest;
            c_min + f * (c_max - c_min)
        }
    };

    Ok((deadline, budget))
}

fn check_factor(what: &str, f: f64) -> Result<()> {
    if (0.0..=1.0).contains(&f) {
        Ok(())
    } else {
        Err(Error::InvalidExperiment(format!("{what} factor {f} outside [0, 1]")))
    }
}
