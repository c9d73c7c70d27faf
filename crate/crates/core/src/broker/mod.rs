//! The user-side economic broker.
//!
//! A run alternates between the schedule advisor (`strategy`), which maps
//! unassigned jobs onto resources under the deadline and budget, and the
//! dispatcher, which hands assigned jobs to resources without ever keeping
//! more of them in flight than the resource has PEs. Completed jobs come back
//! through [`BrokerState::on_return`], which feeds the rate predictor.

mod predict;
mod strategy;
mod trading;

use crate::engine::{Admission, Engine, EventKind};
use crate::error::{Error, Result};
use crate::model::{
    gridlet_cost, mi_cost, validate_testbed, BrokerResourceView, Experiment, Gridlet, GridletId, GridletStatus,
    Resource, Strategy,
};

pub use predict::{backlog_mi, measure_rate, predict_completion};
pub use strategy::{sort_and_group, AssignmentDelta};
pub use trading::{discover_and_trade, resolve_constraints};

/// Scheduling period used when the experiment does not set one.
pub fn default_scheduling_period(deadline: f64) -> f64 {
    (deadline / 50.0).clamp(1.0, 50.0)
}

/// Per-resource snapshot taken after every scheduling pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub resource: String,
    /// Jobs committed to the resource: assigned plus in flight.
    pub assigned: usize,
    pub completed: usize,
    pub measured_rate: f64,
    /// Jobs in flight; bounded by the PE count.
    pub in_flight: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub strategy: Strategy,
    pub deadline: f64,
    pub budget: f64,
    pub completed: usize,
    pub failed: usize,
    pub spent: f64,
    /// Latest finish time among completed jobs, 0 when none completed.
    pub makespan: f64,
    /// Completed count per resource, in testbed order.
    pub per_resource: Vec<(String, usize)>,
    pub gridlets: Vec<Gridlet>,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone)]
pub struct BrokerState {
    pub views: Vec<BrokerResourceView>,
    pub gridlets: Vec<Gridlet>,
    /// The unassigned-jobs list, kept in id order.
    pub unassigned: Vec<GridletId>,
    pub deadline: f64,
    pub budget: f64,
    pub spent: f64,
    /// Spent plus the cost of everything in flight or assigned.
    pub committed: f64,
    pub clock: f64,
    pub strategy: Strategy,
}

impl BrokerState {
    pub fn new(
        views: Vec<BrokerResourceView>,
        gridlets: Vec<Gridlet>,
        deadline: f64,
        budget: f64,
        strategy: Strategy,
    ) -> Self {
        let unassigned = (0..gridlets.len()).collect();
        BrokerState {
            views,
            gridlets,
            unassigned,
            deadline,
            budget,
            spent: 0.0,
            committed: 0.0,
            clock: 0.0,
            strategy,
        }
    }

    pub fn in_flight(&self) -> usize {
        self.views.iter().map(|v| v.dispatched.len()).sum()
    }

    pub fn pending_assignments(&self) -> usize {
        self.views.iter().map(|v| v.assigned.len()).sum()
    }

    pub fn all_completed(&self) -> bool {
        self.gridlets.iter().all(|g| g.status == GridletStatus::Completed)
    }

    /// Hand assigned jobs to the resource, in order, while it has a free PE.
    pub fn dispatch(&mut self, view: usize, engine: &mut Engine) -> Result<usize> {
        let now = engine.now();
        let mut sent = 0;
        while self.views[view].has_free_pe() && !self.views[view].assigned.is_empty() {
            let gid = self.views[view].assigned.remove(0);
            let g = &mut self.gridlets[gid];
            let admission = engine.submit(view, gid, g.length_mi)?;
            g.transition(GridletStatus::Dispatched)?;
            if matches!(admission, Admission::Started { .. }) {
                g.transition(GridletStatus::Running)?;
            }
            g.dispatch_time = Some(now);
            self.views[view].dispatched.insert(gid, now);
            sent += 1;
        }
        Ok(sent)
    }

    pub fn dispatch_all(&mut self, engine: &mut Engine) -> Result<usize> {
        let mut sent = 0;
        for v in 0..self.views.len() {
            sent += self.dispatch(v, engine)?;
        }
        Ok(sent)
    }

    /// Gridlet receptor: book a finished job and refresh the resource's
    /// measured rate, then refill its free PE.
    pub fn on_return(&mut self, view: usize, gid: GridletId, engine: &mut Engine) -> Result<()> {
        self.receive(view, gid, engine.now())?;
        self.dispatch(view, engine)?;
        Ok(())
    }

    /// The booking half of [`on_return`](Self::on_return), leaving the freed
    /// PE idle until the next dispatch.
    pub fn receive(&mut self, view: usize, gid: GridletId, now: f64) -> Result<()> {
        let v = self.views.get_mut(view).ok_or(Error::UnknownResource(view))?;
        let since = v
            .dispatched
            .remove(&gid)
            .ok_or_else(|| Error::UnknownGridlet(gid, v.resource.id.clone()))?;
        let g = &mut self.gridlets[gid];
        if g.status == GridletStatus::Dispatched {
            g.transition(GridletStatus::Running)?;
        }
        g.transition(GridletStatus::Completed)?;
        g.finish_time = Some(now);
        g.charge = gridlet_cost(g, &v.resource);
        self.spent += g.charge;

        v.completed_mi += g.length_mi;
        v.completed_count += 1;
        v.busy_elapsed += (now - since) / f64::from(v.resource.pe_count);
        v.measured_rate = measure_rate(v, now);

        self.clock = now;
        Ok(())
    }

    /// Cancel everything still in flight and fail every job not completed.
    fn wind_up(&mut self, engine: &mut Engine) -> Result<()> {
        for v in 0..self.views.len() {
            let in_flight: Vec<GridletId> = self.views[v].dispatched.keys().copied().collect();
            for gid in in_flight {
                engine.cancel(v, gid)?;
                self.views[v].dispatched.remove(&gid);
                self.committed -= mi_cost(self.gridlets[gid].length_mi, &self.views[v].resource);
                self.gridlets[gid].transition(GridletStatus::Failed)?;
            }
            for gid in std::mem::take(&mut self.views[v].assigned) {
                self.committed -= mi_cost(self.gridlets[gid].length_mi, &self.views[v].resource);
                self.gridlets[gid].transition(GridletStatus::Failed)?;
            }
        }
        for gid in std::mem::take(&mut self.unassigned) {
            self.gridlets[gid].transition(GridletStatus::Failed)?;
        }
        // everything left is settled
        self.committed = self.spent;
        Ok(())
    }

    fn snapshot(&self, time: f64, trace: &mut Vec<TraceRecord>) {
        trace.extend(self.views.iter().map(|v| TraceRecord {
            time,
            resource: v.resource.id.clone(),
            assigned: v.assigned.len() + v.dispatched.len(),
            completed: v.completed_count,
            measured_rate: v.measured_rate,
            in_flight: v.dispatched.len(),
        }));
    }

    fn check_invariants(&self) {
        debug_assert!(self.spent <= self.committed * (1.0 + 1e-12) + 1e-9);
        debug_assert!(self.committed <= self.budget * (1.0 + 1e-12) + 1e-9);
        debug_assert!(self
            .views
            .iter()
            .all(|v| v.dispatched.len() <= v.resource.pe_count as usize));
    }
}

/// Run one experiment to completion, deadline, or exhaustion of feasible work.
pub fn run(exp: &Experiment, testbed: &[Resource]) -> Result<ExperimentSummary> {
    exp.validate()?;
    validate_testbed(testbed)?;
    let views = discover_and_trade(testbed)?;
    let (deadline, budget) = resolve_constraints(exp, &views, &exp.workload)?;
    let period = exp
        .scheduling_period
        .unwrap_or_else(|| default_scheduling_period(deadline));

    let mut workload = exp.workload.clone();
    for g in &mut workload {
        *g = Gridlet {
            input_bytes: g.input_bytes,
            output_bytes: g.output_bytes,
            ..Gridlet::new(g.id, g.length_mi)
        };
    }
    let mut state = BrokerState::new(views, workload, deadline, budget, exp.strategy);
    let mut engine = Engine::new(testbed.to_vec());
    let mut trace = Vec::new();
    let mut ticks: u64 = 0;
    engine.schedule_tick(0.0);

    let mut end_time = 0.0;
    while let Some(t) = engine.peek_time() {
        if t > deadline {
            end_time = deadline;
            break;
        }
        let event = engine.advance().expect("peeked event exists");
        state.clock = event.time;
        end_time = event.time;
        let reschedule = match event.kind {
            EventKind::GridletCompletion { resource, gridlet } => {
                // reschedule before the freed PE is refilled
                state.receive(resource, gridlet, event.time)?;
                true
            }
            EventKind::SchedulingTick => {
                ticks += 1;
                let next = ticks as f64 * period;
                if next <= deadline {
                    engine.schedule_tick(next);
                }
                true
            }
            EventKind::AvailabilityChange { .. } => false,
        };
        if !reschedule {
            continue;
        }
        if state.all_completed() {
            state.snapshot(event.time, &mut trace);
            break;
        }
        state.schedule();
        state.dispatch_all(&mut engine)?;
        state.check_invariants();
        state.snapshot(event.time, &mut trace);
        if state.in_flight() == 0 {
            // nothing running and nothing more can be placed
            break;
        }
    }

    state.wind_up(&mut engine)?;
    state.snapshot(end_time, &mut trace);

    let completed: Vec<&Gridlet> = state
        .gridlets
        .iter()
        .filter(|g| g.status == GridletStatus::Completed)
        .collect();
    let makespan = completed
        .iter()
        .filter_map(|g| g.finish_time)
        .fold(0.0, f64::max);
    let per_resource = state
        .views
        .iter()
        .map(|v| (v.resource.id.clone(), v.completed_count))
        .collect();

    Ok(ExperimentSummary {
        strategy: exp.strategy,
        deadline,
        budget,
        completed: completed.len(),
        failed: state.gridlets.len() - completed.len(),
        spent: state.spent,
        makespan,
        per_resource,
        gridlets: state.gridlets,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{wwg_testbed, Manager};
    use crate::workload::{generate, WorkloadSpec};

    fn testbed(names: &[&str]) -> Vec<Resource> {
        wwg_testbed().into_iter().filter(|r| names.contains(&r.id.as_str())).collect()
    }

    fn state_on(names: &[&str], n: usize) -> (BrokerState, Engine) {
        let tb = testbed(names);
        let jobs = (0..n).map(|i| Gridlet::new(i, 10_000.0)).collect();
        let st = BrokerState::new(discover_and_trade(&tb).unwrap(), jobs, 1e5, 1e6, Strategy::Cost);
        (st, Engine::new(tb))
    }

    #[test]
    fn dispatch_respects_pe_count() {
        let (mut st, mut eng) = state_on(&["R4"], 5);
        st.schedule();
        assert_eq!(st.views[0].assigned.len(), 5);
        assert_eq!(st.dispatch(0, &mut eng).unwrap(), 2);
        assert_eq!(st.views[0].assigned.len(), 3);
        assert_eq!(st.views[0].dispatched.len(), 2);
        assert_eq!(st.gridlets[0].status, GridletStatus::Running);
        assert_eq!(st.dispatch(0, &mut eng).unwrap(), 0);

        let (mut st, mut eng) = state_on(&["R7"], 5);
        st.schedule();
        assert_eq!(st.dispatch(0, &mut eng).unwrap(), 5);

        let (mut st, mut eng) = state_on(&["R7"], 5);
        assert_eq!(st.dispatch(0, &mut eng).unwrap(), 0);
    }

    #[test]
    fn return_books_charge_and_switches_predictor() {
        let (mut st, mut eng) = state_on(&["R4"], 3);
        st.schedule();
        st.dispatch(0, &mut eng).unwrap();
        let committed = st.committed;
        let ev = eng.advance().unwrap();
        let EventKind::GridletCompletion { resource, gridlet } = ev.kind else {
            panic!("expected completion");
        };
        assert_eq!(st.views[0].measured_rate, 760.0);
        st.on_return(resource, gridlet, &mut eng).unwrap();
        assert!((st.spent - 26.3158).abs() < 1e-4);
        assert_eq!(st.committed, committed);
        assert_eq!(st.gridlets[gridlet].status, GridletStatus::Completed);
        assert_eq!(st.gridlets[gridlet].finish_time, Some(ev.time));
        let v = &st.views[0];
        assert_eq!(v.completed_count, 1);
        assert!((v.measured_rate - 760.0).abs() < 1e-9);
        // the freed PE was refilled from the assigned list
        assert_eq!(v.dispatched.len(), 2);
        assert!(v.assigned.is_empty());

        assert!(matches!(st.on_return(0, 99, &mut eng), Err(Error::UnknownGridlet(99, _))));
        assert!(st.on_return(0, gridlet, &mut eng).is_err());
    }

    #[test]
    fn tiny_budget_completes_nothing() {
        let jobs = generate(&WorkloadSpec::with_seed(42)).unwrap();
        let exp = Experiment::new(jobs, 3600.0, 0.01, Strategy::CostTime);
        let s = run(&exp, &wwg_testbed()).unwrap();
        assert_eq!(s.completed, 0);
        assert_eq!(s.failed, 200);
        assert_eq!(s.spent, 0.0);
        assert_eq!(s.makespan, 0.0);
    }

    #[test]
    fn relaxed_cost_time_completes_everything() {
        let jobs = generate(&WorkloadSpec::with_seed(42)).unwrap();
        let exp = Experiment::new(jobs, 3600.0, 22_000.0, Strategy::CostTime);
        let s = run(&exp, &wwg_testbed()).unwrap();
        assert_eq!(s.completed, 200);
        assert!(s.spent <= 22_000.0);
        assert!(s.makespan <= 3600.0);
    }

    #[test]
    fn tight_deadline_uses_many_resources() {
        let jobs = generate(&WorkloadSpec::with_seed(42)).unwrap();
        let exp = Experiment::new(jobs, 100.0, 22_000.0, Strategy::CostTime);
        let s = run(&exp, &wwg_testbed()).unwrap();
        assert!(s.completed > 0);
        assert!(s.per_resource.iter().filter(|(_, n)| *n > 0).count() >= 6);
        assert!(s.gridlets.iter().all(|g| g.finish_time.is_none_or(|t| t <= 100.0)));
    }

    #[test]
    fn unit_job_on_unit_resource() {
        let tb = vec![Resource::new("A", 1, 100.0, 1.0, Manager::TimeShared)];
        let exp = Experiment::new(vec![Gridlet::new(0, 100.0)], 10.0, 10.0, Strategy::Time);
        let s = run(&exp, &tb).unwrap();
        assert_eq!(s.completed, 1);
        assert_eq!(s.makespan, 1.0);
        assert_eq!(s.spent, 1.0);
        assert_eq!(s.gridlets[0].charge, 1.0);
    }

    #[test]
    fn deadline_cancels_in_flight_without_charge() {
        // predicted to finish at 10 but the availability drop stretches it to 15
        let tb = vec![Resource::new("A", 1, 100.0, 1.0, Manager::TimeShared)
            .with_availability(vec![(0.0, 1.0), (5.0, 0.5)])];
        let exp = Experiment::new(vec![Gridlet::new(0, 1000.0)], 12.0, 100.0, Strategy::Cost);
        let s = run(&exp, &tb).unwrap();
        assert_eq!(s.completed, 0);
        assert_eq!(s.failed, 1);
        assert_eq!(s.spent, 0.0);
        assert_eq!(s.gridlets[0].status, GridletStatus::Failed);
        assert_eq!(s.gridlets[0].charge, 0.0);
    }

    #[test]
    fn default_period_clamps() {
        assert_eq!(default_scheduling_period(100.0), 2.0);
        assert_eq!(default_scheduling_period(3100.0), 50.0);
        assert_eq!(default_scheduling_period(10.0), 1.0);
        assert_eq!(default_scheduling_period(1100.0), 22.0);
    }
}
