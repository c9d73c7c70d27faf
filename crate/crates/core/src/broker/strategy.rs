//! The schedule advisor: resource ordering and the three DBC strategies.

use std::cmp::Ordering;

use crate::model::{mi_cost, peak_rate, same_cost, BrokerResourceView, GridletId, GridletStatus, ResourceGroup};

use super::predict::{backlog_mi, measure_rate, pe_release_times, place_on_pe};
use super::BrokerState;

/// Changes made by one scheduling pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssignmentDelta {
    /// Assigned-but-undispatched jobs pulled back before rescheduling.
    pub reclaimed: Vec<GridletId>,
    /// `(gridlet, view index)` in assignment order.
    pub assigned: Vec<(GridletId, usize)>,
}

// Power is compared at milli-MIPS resolution so that measured rates carrying
// float noise still tie with an equal theoretical rate.
fn power_key(power: f64) -> i64 {
    (power * 1e3).round() as i64
}

fn power(view: &BrokerResourceView, now: f64, first_event: bool) -> f64 {
    if first_event {
        peak_rate(&view.resource, now)
    } else {
        view.measured_rate
    }
}

/// Sort by ascending cost per MI, strongest first within equal cost, then
/// split equal-cost runs into groups.
pub fn sort_and_group(views: &[BrokerResourceView], now: f64, first_event: bool) -> Vec<ResourceGroup> {
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.sort_by(|&a, &b| views[a].cost_per_mi.total_cmp(&views[b].cost_per_mi));

    let mut groups: Vec<ResourceGroup> = Vec::new();
    for idx in order {
        let cpm = views[idx].cost_per_mi;
        match groups.last_mut() {
            Some(g) if same_cost(g.cost_per_mi, cpm) => g.members.push(idx),
            _ => groups.push(ResourceGroup {
                cost_per_mi: cpm,
                members: vec![idx],
            }),
        }
    }
    for g in &mut groups {
        g.members.sort_by(|&a, &b| {
            let pa = power_key(power(&views[a], now, first_event));
            let pb = power_key(power(&views[b], now, first_event));
            pb.cmp(&pa).then_with(|| views[a].id().cmp(views[b].id()))
        });
    }
    groups
}

/// Per-resource load as the schedule is being built.
struct Plan {
    backlog: Vec<f64>,
    pe_free: Vec<Vec<f64>>,
}

impl Plan {
    fn pe_finish(&self, v: usize, view: &BrokerResourceView, length_mi: f64) -> f64 {
        let per_pe = view.measured_rate / f64::from(view.resource.pe_count);
        self.pe_free[v][0] + length_mi / per_pe
    }

    fn commit(&mut self, v: usize, view: &BrokerResourceView, length_mi: f64) {
        let per_pe = view.measured_rate / f64::from(view.resource.pe_count);
        self.backlog[v] += length_mi;
        place_on_pe(&mut self.pe_free[v], length_mi / per_pe);
    }
}

impl BrokerState {
    fn first_event(&self) -> bool {
        self.views.iter().all(|v| v.completed_count == 0)
    }

    /// Refresh measured rates and pull every undispatched assignment back
    /// into the unassigned list.
    fn reclaim(&mut self) -> Vec<GridletId> {
        let now = self.clock;
        let mut reclaimed = Vec::new();
        for view in &mut self.views {
            view.measured_rate = measure_rate(view, now);
            for gid in view.assigned.drain(..) {
                let g = &mut self.gridlets[gid];
                g.transition(GridletStatus::Created).expect("assigned job can be reclaimed");
                g.assigned_resource = None;
                reclaimed.push(gid);
            }
        }
        self.unassigned.extend(reclaimed.iter().copied());
        self.unassigned.sort_unstable();
        self.committed = self.spent + self.in_flight_cost();
        reclaimed
    }

    fn in_flight_cost(&self) -> f64 {
        self.views
            .iter()
            .flat_map(|v| v.dispatched.keys().map(move |&g| mi_cost(self.gridlets[g].length_mi, &v.resource)))
            .sum()
    }

    /// Offer every unassigned job, in order, to `candidates`; each goes to the
    /// earliest predicted finisher that meets the deadline within budget.
    ///
    /// Candidates are ranked on the aggregate-rate prediction. A job is only
    /// accepted if it also meets the deadline once the resource's backlog is
    /// laid out PE by PE, since a gridlet never runs on more than one PE.
    fn place(&mut self, candidates: &[usize], plan: &mut Plan, delta: &mut AssignmentDelta) {
        let now = self.clock;
        let mut still_unassigned = Vec::with_capacity(self.unassigned.len());
        let mut ranked: Vec<(f64, usize)> = Vec::with_capacity(candidates.len());
        for gid in std::mem::take(&mut self.unassigned) {
            let len = self.gridlets[gid].length_mi;
            ranked.clear();
            ranked.extend(
                candidates
                    .iter()
                    .map(|&v| (now + (plan.backlog[v] + len) / self.views[v].measured_rate, v)),
            );
            // stable: equal predictions keep candidate order
            ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
            let chosen = ranked.iter().find(|&&(finish, v)| {
                let view = &self.views[v];
                finish <= self.deadline
                    && plan.pe_finish(v, view, len) <= self.deadline
                    && self.committed + mi_cost(len, &view.resource) <= self.budget
            });
            match chosen {
                Some(&(_, v)) => {
                    let cost = mi_cost(len, &self.views[v].resource);
                    self.committed += cost;
                    plan.commit(v, &self.views[v], len);
                    self.views[v].assigned.push(gid);
                    let g = &mut self.gridlets[gid];
                    g.transition(GridletStatus::Assigned).expect("unassigned job can be assigned");
                    g.assigned_resource = Some(self.views[v].resource.id.clone());
                    delta.assigned.push((gid, v));
                }
                None => still_unassigned.push(gid),
            }
        }
        self.unassigned = still_unassigned;
    }

    fn plan(&self) -> Plan {
        Plan {
            backlog: self
                .views
                .iter()
                .map(|v| backlog_mi(v, &self.gridlets, self.clock))
                .collect(),
            pe_free: self
                .views
                .iter()
                .map(|v| pe_release_times(v, &self.gridlets, self.clock))
                .collect(),
        }
    }

    /// Cost-time optimisation: cheapest group first, time optimisation within
    /// each group of equally priced resources.
    pub fn schedule_cost_time(&mut self) -> AssignmentDelta {
        let mut delta = AssignmentDelta {
            reclaimed: self.reclaim(),
            ..Default::default()
        };
        let groups = sort_and_group(&self.views, self.clock, self.first_event());
        let mut plan = self.plan();
        for group in groups {
            if self.unassigned.is_empty() {
                break;
            }
            self.place(&group.members, &mut plan, &mut delta);
        }
        delta
    }

    /// Cost optimisation: fill each resource in cost order before moving on.
    pub fn schedule_cost(&mut self) -> AssignmentDelta {
        let mut delta = AssignmentDelta {
            reclaimed: self.reclaim(),
            ..Default::default()
        };
        let groups = sort_and_group(&self.views, self.clock, self.first_event());
        let mut plan = self.plan();
        for v in groups.iter().flat_map(|g| g.members.iter().copied()) {
            if self.unassigned.is_empty() {
                break;
            }
            self.place(&[v], &mut plan, &mut delta);
        }
        delta
    }

    /// Time optimisation: every resource competes for every job.
    pub fn schedule_time(&mut self) -> AssignmentDelta {
        let mut delta = AssignmentDelta {
            reclaimed: self.reclaim(),
            ..Default::default()
        };
        let order: Vec<usize> = sort_and_group(&self.views, self.clock, self.first_event())
            .into_iter()
            .flat_map(|g| g.members)
            .collect();
        let mut plan = self.plan();
        self.place(&order, &mut plan, &mut delta);
        delta
    }

    pub fn schedule(&mut self) -> AssignmentDelta {
        match self.strategy {
            crate::model::Strategy::Cost => self.schedule_cost(),
            crate::model::Strategy::Time => self.schedule_time(),
            crate::model::Strategy::CostTime => self.schedule_cost_time(),
        }
    }
}
