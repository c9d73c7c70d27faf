//! Domain types shared by the engine, broker and harness, plus the pure
//! price/capacity arithmetic the broker trades on.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type GridletId = usize;

/// Relative tolerance under which two cost-per-MI figures count as equal.
pub const COST_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Manager {
    TimeShared,
    SpaceShared,
}

fn default_availability() -> Vec<(f64, f64)> {
    vec![(0.0, 1.0)]
}

/// A testbed machine as the broker sees it during trading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    pub id: String,
    pub pe_count: u32,
    /// MI per time-unit per PE; equal to the PE's SPEC rating.
    pub pe_mips: f64,
    /// G$ per PE-time-unit.
    pub price: f64,
    pub manager: Manager,
    /// Piecewise-constant `(from_time, factor)` share of capacity open to this user.
    #[serde(default = "default_availability")]
    pub availability: Vec<(f64, f64)>,
}

impl Resource {
    pub fn new(id: impl Into<String>, pe_count: u32, pe_mips: f64, price: f64, manager: Manager) -> Self {
        Resource {
            id: id.into(),
            pe_count,
            pe_mips,
            price,
            manager,
            availability: default_availability(),
        }
    }

    pub fn with_availability(mut self, availability: Vec<(f64, f64)>) -> Self {
        self.availability = availability;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidResource {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.id.is_empty() {
            return Err(bad("empty id"));
        }
        if self.pe_count == 0 {
            return Err(bad("pe_count must be at least 1"));
        }
        if !(self.pe_mips.is_finite() && self.pe_mips > 0.0) {
            return Err(bad("pe_mips must be positive"));
        }
        if !(self.price.is_finite() && self.price > 0.0) {
            return Err(bad("price must be positive"));
        }
        match self.availability.first() {
            Some(&(t, _)) if t == 0.0 => {}
            _ => return Err(bad("availability must start at time 0")),
        }
        for w in self.availability.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(bad("availability times must be strictly increasing"));
            }
        }
        if self
            .availability
            .iter()
            .any(|&(t, f)| !t.is_finite() || !(f > 0.0 && f <= 1.0))
        {
            return Err(bad("availability factors must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn availability_factor_at(&self, t: f64) -> f64 {
        self.availability
            .iter()
            .take_while(|&&(from, _)| from <= t)
            .last()
            .map_or(1.0, |&(_, f)| f)
    }

    /// Availability breakpoints after time zero.
    pub fn breakpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.availability.iter().skip(1).map(|&(t, _)| t)
    }

    pub fn total_mips(&self) -> f64 {
        f64::from(self.pe_count) * self.pe_mips
    }
}

pub fn cost_per_mi(r: &Resource) -> f64 {
    r.price / r.pe_mips
}

/// Charge for running `g` to completion on `r`: CPU work times unit price.
pub fn gridlet_cost(g: &Gridlet, r: &Resource) -> f64 {
    mi_cost(g.length_mi, r)
}

pub fn mi_cost(length_mi: f64, r: &Resource) -> f64 {
    length_mi * cost_per_mi(r)
}

pub fn peak_rate(r: &Resource, t: f64) -> f64 {
    r.total_mips() * r.availability_factor_at(t)
}

pub fn same_cost(a: f64, b: f64) -> bool {
    (a - b).abs() <= COST_TOLERANCE * a.abs().max(b.abs())
}

pub fn validate_testbed(testbed: &[Resource]) -> Result<()> {
    if testbed.is_empty() {
        return Err(Error::EmptyTestbed);
    }
    let mut seen = HashSet::new();
    for r in testbed {
        r.validate()?;
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateResource(r.id.clone()));
        }
    }
    Ok(())
}

pub fn parse_testbed(json: &str) -> Result<Vec<Resource>> {
    let testbed: Vec<Resource> = serde_json::from_str(json)?;
    validate_testbed(&testbed)?;
    Ok(testbed)
}

pub fn load_testbed(path: impl AsRef<Path>) -> Result<Vec<Resource>> {
    parse_testbed(&std::fs::read_to_string(path)?)
}

/// The eleven-machine World-Wide Grid testbed shipped as `testbed_wwg.json`.
pub fn wwg_testbed() -> Vec<Resource> {
    parse_testbed(include_str!("../../../testbed_wwg.json")).expect("shipped testbed is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GridletStatus {
    Created,
    Assigned,
    Dispatched,
    Running,
    Completed,
    Failed,
}

impl GridletStatus {
    fn can_move_to(self, to: GridletStatus) -> bool {
        use GridletStatus::*;
        matches!(
            (self, to),
            (Created, Assigned)
                | (Assigned, Created)
                | (Assigned, Dispatched)
                | (Dispatched, Running)
                | (Running, Completed)
                // unassigned leftovers and cancelled work
                | (Created | Assigned | Dispatched | Running, Failed)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gridlet {
    pub id: GridletId,
    pub length_mi: f64,
    pub input_bytes: u64,
    pub output_bytes: u64,
    pub status: GridletStatus,
    pub assigned_resource: Option<String>,
    pub dispatch_time: Option<f64>,
    pub finish_time: Option<f64>,
    pub charge: f64,
}

impl Gridlet {
    pub fn new(id: GridletId, length_mi: f64) -> Self {
        Gridlet {
            id,
            length_mi,
            input_bytes: 0,
            output_bytes: 0,
            status: GridletStatus::Created,
            assigned_resource: None,
            dispatch_time: None,
            finish_time: None,
            charge: 0.0,
        }
    }

    pub fn transition(&mut self, to: GridletStatus) -> Result<()> {
        if !self.status.can_move_to(to) {
            return Err(Error::IllegalTransition {
                id: self.id,
                from: self.status,
                to,
            });
        }
        self.status = to;
        Ok(())
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.status, GridletStatus::Completed | GridletStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Cost,
    Time,
    CostTime,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Cost => "cost",
            Strategy::Time => "time",
            Strategy::CostTime => "cost-time",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cost" => Ok(Strategy::Cost),
            "time" => Ok(Strategy::Time),
            "cost-time" | "cost_time" | "costtime" => Ok(Strategy::CostTime),
            other => Err(Error::InvalidExperiment(format!("unknown strategy {other:?}"))),
        }
    }
}

/// A constraint given either as an absolute value or as a factor in `[0, 1]`
/// relative to what the testbed can achieve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Constraint {
    Absolute(f64),
    Factor(f64),
}

/// A user request handed to the broker.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub workload: Vec<Gridlet>,
    pub deadline: Constraint,
    pub budget: Constraint,
    pub strategy: Strategy,
    pub seed: u64,
    /// `None` selects deadline/50 clamped to `[1, 50]`.
    pub scheduling_period: Option<f64>,
}

impl Experiment {
    pub fn new(workload: Vec<Gridlet>, deadline: f64, budget: f64, strategy: Strategy) -> Self {
        Experiment {
            workload,
            deadline: Constraint::Absolute(deadline),
            budget: Constraint::Absolute(budget),
            strategy,
            seed: 0,
            scheduling_period: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workload.is_empty() {
            return Err(Error::InvalidExperiment("workload is empty".into()));
        }
        for (i, g) in self.workload.iter().enumerate() {
            if g.id != i {
                return Err(Error::InvalidExperiment(format!(
                    "gridlet ids must be 0..n in order, found {} at position {i}",
                    g.id
                )));
            }
            if !(g.length_mi.is_finite() && g.length_mi > 0.0) {
                return Err(Error::InvalidExperiment(format!(
                    "gridlet {} has non-positive length",
                    g.id
                )));
            }
        }
        check_constraint("deadline", self.deadline)?;
        check_constraint("budget", self.budget)?;
        if let Some(p) = self.scheduling_period {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::InvalidExperiment("scheduling period must be positive".into()));
            }
        }
        Ok(())
    }
}

fn check_constraint(what: &str, c: Constraint) -> Result<()> {
    match c {
        Constraint::Absolute(v) if v.is_finite() && v > 0.0 => Ok(()),
        Constraint::Absolute(v) => Err(Error::InvalidExperiment(format!("{what} must be positive, got {v}"))),
        Constraint::Factor(f) if (0.0..=1.0).contains(&f) => Ok(()),
        Constraint::Factor(f) => Err(Error::InvalidExperiment(format!("{what} factor {f} outside [0, 1]"))),
    }
}

/// Broker-side ledger for one resource.
#[derive(Debug, Clone, PartialEq)]
pub struct BrokerResourceView {
    pub resource: Resource,
    pub cost_per_mi: f64,
    /// Assigned in the current schedule but not yet handed to the resource.
    pub assigned: Vec<GridletId>,
    /// In flight, keyed by gridlet with its dispatch time.
    pub dispatched: BTreeMap<GridletId, f64>,
    pub completed_mi: f64,
    pub completed_count: usize,
    /// PE-normalised processing time of completed jobs: each completion adds
    /// its dispatch-to-finish span divided by the PE count.
    pub busy_elapsed: f64,
    pub measured_rate: f64,
}

impl BrokerResourceView {
    pub fn new(resource: Resource) -> Self {
        let cost_per_mi = cost_per_mi(&resource);
        let measured_rate = peak_rate(&resource, 0.0);
        BrokerResourceView {
            resource,
            cost_per_mi,
            assigned: Vec::new(),
            dispatched: BTreeMap::new(),
            completed_mi: 0.0,
            completed_count: 0,
            busy_elapsed: 0.0,
            measured_rate,
        }
    }

    pub fn id(&self) -> &str {
        &self.resource.id
    }

    pub fn has_free_pe(&self) -> bool {
        self.dispatched.len() < self.resource.pe_count as usize
    }
}

/// Resources sharing one cost-per-MI, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGroup {
    pub cost_per_mi: f64,
    /// Indices into the broker's view list.
    pub members: Vec<usize>,
}
